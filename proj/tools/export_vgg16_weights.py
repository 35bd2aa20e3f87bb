#!/usr/bin/env python3
"""Export torchvision's ImageNet VGG-16 convolution weights to an RNSTWTS1 container.

Usage:
    python3 tools/export_vgg16_weights.py vgg16.rnstw
    rnst fetch-weights --from vgg16.rnstw

Needs torch and torchvision, plus network access the first time torchvision
downloads its checkpoint. The printed SHA-256 is what run configs pin in
backbone.sha256.
"""

import argparse
import hashlib
import struct
import sys

NAMES = [
    "conv1_1", "conv1_2",
    "conv2_1", "conv2_2",
    "conv3_1", "conv3_2", "conv3_3",
    "conv4_1", "conv4_2", "conv4_3",
    "conv5_1", "conv5_2", "conv5_3",
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("output", help="destination .rnstw file")
    args = parser.parse_args()

    import torch
    from torchvision.models import VGG16_Weights, vgg16

    model = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).eval()
    convs = [m for m in model.features if isinstance(m, torch.nn.Conv2d)]
    if len(convs) != len(NAMES):
        sys.exit(f"expected {len(NAMES)} convolutions, found {len(convs)}")

    with open(args.output, "wb") as f:
        f.write(b"RNSTWTS1")
        f.write(struct.pack("<I", len(NAMES)))
        for name, conv in zip(NAMES, convs):
            w = conv.weight.detach().to(torch.float32).contiguous()
            b = conv.bias.detach().to(torch.float32).contiguous()
            out_c, in_c, kh, kw = w.shape
            encoded = name.encode("ascii")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<4I", out_c, in_c, kh, kw))
            f.write(w.numpy().astype("<f4").tobytes())
            f.write(b.numpy().astype("<f4").tobytes())

    with open(args.output, "rb") as f:
        print(hashlib.sha256(f.read()).hexdigest(), args.output)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

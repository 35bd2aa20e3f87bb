#pragma once

#include "rnst/image.hpp"

namespace rnst {

/// Desk-scale stand-in for a low-field / high-field acquisition pair.
struct PhantomSpec {
  int size = 128;
  /// Intensity remap exponent applied to the clean phantom to produce the
  /// low-field contrast (1.0 = no contrast shift).
  double contrast_gamma = 1.4;
  NoiseSpec noise{20.0 / 255.0, 1};
  /// Slice variant; shifts the inner ellipses slightly so a stack of
  /// variants looks like neighbouring slices of one volume.
  int variant = 0;

  void validate() const;
};

struct PhantomPair {
  Image clean_high;
  Image noisy_low;
  Image guidance;
};

/// Modified Shepp-Logan phantom (Toft intensities) rasterised on a size x size
/// grid, sampled at pixel centres over [-1, 1]^2 and clipped to [0, 1].
Image shepp_logan(int size, int variant = 0);

/// Phantom with the same ellipse intensities as shepp_logan but a different
/// geometry (mirrored, rotated, resized inner structures).
Image guidance_phantom(int size, int variant = 0);

/// clean_high = shepp_logan(size, variant);
/// noisy_low  = add_awgn(clip01(clean_high ^ contrast_gamma), noise);
/// guidance   = guidance_phantom(size, variant).
PhantomPair make_phantom_pair(const PhantomSpec& spec);

}  // namespace rnst

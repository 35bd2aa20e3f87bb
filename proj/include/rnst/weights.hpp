#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rnst::features {

/// One 3x3 convolution of the VGG-16 trunk. Weights use the
/// [out][in][kh][kw] layout, flattened.
struct ConvParams {
  std::string name;
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 3;
  std::vector<float> weights;
  std::vector<float> bias;
};

/// Expected (name, in, out) for each convolution of the VGG-16 trunk, in
/// order. Max-pooling follows conv1_2, conv2_2, conv3_3, conv4_3, conv5_3.
struct ManifestEntry {
  const char* name;
  int in_channels;
  int out_channels;
  bool pool_after;
};
const std::vector<ManifestEntry>& vgg16_manifest();

/// Weights container ("RNSTWTS1"):
///   8 bytes magic "RNSTWTS1"
///   u32 layer_count
///   per layer: u32 name_len, name bytes, u32 out, u32 in, u32 kh, u32 kw,
///              out*in*kh*kw f32 weights, out f32 bias
/// All integers and floats little-endian.
inline constexpr char kWeightsMagic[8] = {'R', 'N', 'S', 'T', 'W', 'T', 'S', '1'};

/// Reads and validates a container against vgg16_manifest(). Throws
/// ManifestError naming the first absent or mis-shaped layer.
std::vector<ConvParams> read_weights(const std::filesystem::path& path);

void write_weights(const std::filesystem::path& path, const std::vector<ConvParams>& layers);

/// Deterministic He-normal initialised VGG-16 trunk (zero biases), drawn from
/// PortableNormal(seed). Stand-in when pretrained weights are unavailable.
std::vector<ConvParams> synthetic_vgg16(std::uint64_t seed);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace rnst::features

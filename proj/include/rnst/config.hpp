#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rnst/dataio.hpp"
#include "rnst/image.hpp"
#include "rnst/rnst.hpp"

namespace rnst::config {

inline constexpr int kSchemaVersion = 1;

/// A directory of "<label>_NNNN.{png,pfi}" slices, or a single slice file.
struct SliceSource {
  std::filesystem::path path;
  std::string label;  // empty: the directory's only label (or the file stem)

  friend bool operator==(const SliceSource&, const SliceSource&) = default;
};

/// Self-generating phantom stack. Slice i (first_index <= i < first_index +
/// slices) uses shepp_logan variant i - first_index and AWGN seeded with
/// phantom_noise_seed(run seed, i). Guidance and reference come with it.
struct PhantomSource {
  int size = 128;
  double contrast_gamma = 1.4;
  double noise_sigma = 20.0 / 255.0;
  int slices = 1;
  int first_index = 1;

  friend bool operator==(const PhantomSource&, const PhantomSource&) = default;
};

struct BackboneRef {
  /// Empty: "<cache dir>/vgg16.rnstw".
  std::filesystem::path path;
  /// Lower-case hex SHA-256; empty disables the check.
  std::string sha256;
  features::BackboneOptions options;

  friend bool operator==(const BackboneRef&, const BackboneRef&) = default;
};

struct RunConfig {
  std::optional<PhantomSource> phantom;
  std::optional<SliceSource> content;
  std::optional<SliceSource> guidance;
  std::optional<SliceSource> reference;
  dataio::GuidancePolicy policy;
  RNSTConfig rnst;
  /// Extra AWGN applied to every content slice before reconstruction. The
  /// seed is combined with the slice index like the phantom noise.
  std::optional<NoiseSpec> noise;
  BackboneRef backbone;
  std::filesystem::path output_dir = "rnst-out";
  std::uint64_t seed = 1;
  int workers = 1;
  bool error_maps = true;

  /// Exactly one content source; guidance required unless phantom.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

std::uint64_t phantom_noise_seed(std::uint64_t run_seed, int index);

const std::vector<std::string>& preset_names();
/// Throws ConfigError for an unknown name.
RunConfig preset(const std::string& name);

/// Pretty-printed JSON with every field present.
std::string to_json(const RunConfig& cfg);

/// Parses JSON. Unknown keys, a missing or unsupported schema_version and
/// ill-typed values raise ConfigError naming the offending key path. Keys
/// that are absent keep their defaults, taken from the preset named by an
/// optional top-level "preset" key, else from `default_preset`, else from
/// RunConfig{}.
RunConfig from_json(const std::string& text, const std::string& default_preset = "");

RunConfig load(const std::filesystem::path& path, const std::string& default_preset = "");
void save(const RunConfig& cfg, const std::filesystem::path& path);

/// Cache directory for backbone weights: $RNST_WEIGHTS_DIR, else
/// $XDG_CACHE_HOME/rnst, else $HOME/.cache/rnst.
std::filesystem::path weights_cache_dir();
inline constexpr const char* kWeightsFileName = "vgg16.rnstw";
std::filesystem::path resolve_weights_path(const BackboneRef& ref);

}  // namespace rnst::config

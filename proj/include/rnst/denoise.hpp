#pragma once

#include <string>
#include <vector>

#include "rnst/image.hpp"

namespace rnst::denoise {

enum class DenoiserKind { identity, gaussian, nlm, external };

const char* to_string(DenoiserKind kind);
DenoiserKind denoiser_kind_from_string(const std::string& s);

struct GaussianParams {
  double sigma_blur = 0.5;  // pixels

  friend bool operator==(const GaussianParams&, const GaussianParams&) = default;
};

/// Non-local means with weights exp(-max(d^2 - 2 sigma^2, 0) / h^2), where d^2
/// is the mean squared difference between patches.
struct NlmParams {
  int patch_size = 7;
  int search_window = 21;
  double filtering_h = 0.8 * (20.0 / 255.0);
  /// Noise standard deviation, from configuration (not estimated).
  double noise_sigma = 20.0 / 255.0;

  /// Conventional defaults with h = 0.8 * sigma.
  static NlmParams for_sigma(double sigma);

  friend bool operator==(const NlmParams&, const NlmParams&) = default;
};

/// Subprocess contract: `program args... <input.pfi> <output.pfi>`, exit 0 on
/// success, output an image of the same shape in the portable float format.
struct ExternalCommand {
  std::string program;
  std::vector<std::string> args;
  /// When false, invocations of the same program are serialised.
  bool reentrant = false;

  friend bool operator==(const ExternalCommand&, const ExternalCommand&) = default;
};

struct DenoiserSpec {
  DenoiserKind kind = DenoiserKind::nlm;
  GaussianParams gaussian;
  NlmParams nlm;
  ExternalCommand external;

  void validate() const;

  friend bool operator==(const DenoiserSpec&, const DenoiserSpec&) = default;
};

/// Output has the input's shape and is clipped to [0, 1]. Identity returns
/// the input unchanged. Constant images are reproduced exactly by every
/// built-in kind.
Image denoise(const Image& img, const DenoiserSpec& spec);

Image gaussian_blur(const Image& img, const GaussianParams& params);
Image nlm(const Image& img, const NlmParams& params);

/// Throws ExternalProcessError with the command transcript on failure.
Image run_external(const Image& img, const ExternalCommand& cmd);

}  // namespace rnst::denoise

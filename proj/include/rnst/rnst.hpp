#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rnst/denoise.hpp"
#include "rnst/features.hpp"
#include "rnst/image.hpp"
#include "rnst/metrics.hpp"
#include "rnst/nst.hpp"

namespace rnst {

/// Step-size rule for the line search. Only the fixed multiples i * mu are
/// implemented; the field exists so configs can name a rule explicitly.
enum class StepRule { fixed_multiples };

struct RNSTConfig {
  double lambda = 0.2;  // denoiser-term weight
  double mu = 0.13;     // base step; candidates use i * mu, i = 1..n_line
  int n_iter = 10;
  int n_style = 3;
  int n_line = 5;
  int n0 = 100;
  int n_step = 100;
  StepRule step_rule = StepRule::fixed_multiples;
  nst::NSTConfig nst;
  denoise::DenoiserSpec denoiser;

  /// Throws InvalidArgument on hard violations. Returns a warning message
  /// (empty when none) for soft ones such as n_line * mu > 1.
  std::string validate() const;

  /// Transfer lengths n0 + j * n_step for j = 1..n_style.
  std::vector<int> style_levels() const;

  friend bool operator==(const RNSTConfig&, const RNSTConfig&) = default;
};

struct IterationRecord {
  int outer_index = 0;  // 1-based
  /// One-step loss of the iterate entering this iteration (the bar a
  /// candidate must beat).
  double baseline_eval_loss = 0.0;
  /// Best loss after the scan; equals baseline when nothing was accepted.
  double best_eval_loss = 0.0;
  bool accepted = false;
  double chosen_mu_tilde = 0.0;  // 0 when not accepted
  int chosen_line_index = 0;     // i, 1-based; 0 when not accepted
  int chosen_style_level = 0;    // j, 1-based; 0 when not accepted
  int candidates_scored = 0;
  int candidates_skipped = 0;
  std::optional<metrics::MetricReport> metrics_vs_reference;
  /// Skipped-candidate diagnostics.
  std::vector<std::string> notes;
};

struct ReconstructionTrace {
  RNSTConfig config;
  Image initial;
  std::vector<IterationRecord> records;
  /// Iterate after each outer iteration (clipped), parallel to `records`.
  std::vector<Image> iterates;
  Image final_image;
};

/// x - mu_tilde * ((x - x_t) + lambda * (x - x_d)), unclipped.
Image candidate_update(const Image& x, const Image& x_t, const Image& x_d, double mu_tilde,
                       double lambda);

/// One-step evaluation loss: x' = transfer(x_cand, x_guid, content = x_in, 1),
/// returns alpha * L_content(x', x_in) + beta * L_style(x', x_guid).
double eval_loss(const Image& x_cand, const Image& x_in, const Image& x_guid,
                 const features::Backbone& backbone, const RNSTConfig& cfg);
double eval_loss(const Image& x_cand, const nst::TransferObjective& objective);

using IterationObserver = std::function<void(const IterationRecord&)>;

struct ReconstructionResult {
  Image image;
  ReconstructionTrace trace;
};

/// Line-search reconstruction loop. Per outer iteration: denoise the
/// iterate, build the style-transferred list from the denoised image (content
/// anchored to x_in), scan i * mu for every list entry, and adopt the
/// candidate whose one-step loss is strictly lowest and below the current
/// iterate's own. Candidates are scored unclipped; the adopted iterate is
/// clipped. Ties keep the earlier candidate (i ascending, then j).
ReconstructionResult reconstruct(const Image& x_in, const Image& x_guid,
                                 const features::Backbone& backbone, const RNSTConfig& cfg,
                                 const std::optional<Image>& reference = std::nullopt,
                                 const IterationObserver& observer = {});

}  // namespace rnst

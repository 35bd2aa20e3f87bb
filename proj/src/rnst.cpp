#include "rnst/rnst.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "rnst/errors.hpp"

namespace rnst {

std::string RNSTConfig::validate() const {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  if (!(mu > 0.0)) throw InvalidArgument("mu must be > 0");
  if (n_iter < 1) throw InvalidArgument("n_iter must be >= 1");
  if (n_style < 1) throw InvalidArgument("n_style must be >= 1");
  if (n_line < 1) throw InvalidArgument("n_line must be >= 1");
  if (n0 < 1) throw InvalidArgument("n0 must be >= 1");
  if (n_step < 1) throw InvalidArgument("n_step must be >= 1");
  nst.validate();
  denoiser.validate();
  if (n_line * mu > 1.0) {
    std::ostringstream w;
    w << "n_line * mu = " << n_line * mu << " > 1: the largest step overshoots the candidates";
    return w.str();
  }
  return {};
}

std::vector<int> RNSTConfig::style_levels() const {
  std::vector<int> levels;
  levels.reserve(n_style);
  for (int j = 1; j <= n_style; ++j) levels.push_back(n0 + j * n_step);
  return levels;
}

Image candidate_update(const Image& x, const Image& x_t, const Image& x_d, double mu_tilde,
                       double lambda) {
  require_same_shape(x, x_t, "candidate_update(x, x_t)");
  require_same_shape(x, x_d, "candidate_update(x, x_d)");
  if (!(mu_tilde > 0.0)) throw InvalidArgument("mu_tilde must be > 0");
  Image out = x;
  out.pixels() = x.pixels() -
                 mu_tilde * ((x.pixels() - x_t.pixels()) + lambda * (x.pixels() - x_d.pixels()));
  return out;
}

double eval_loss(const Image& x_cand, const nst::TransferObjective& objective) {
  return objective.transfer(x_cand, 1).final_total_loss;
}

double eval_loss(const Image& x_cand, const Image& x_in, const Image& x_guid,
                 const features::Backbone& backbone, const RNSTConfig& cfg) {
  require_same_shape(x_cand, x_in, "eval_loss(x_cand, x_in)");
  const nst::TransferObjective objective(backbone, x_in, x_guid, cfg.nst);
  return eval_loss(x_cand, objective);
}

ReconstructionResult reconstruct(const Image& x_in, const Image& x_guid,
                                 const features::Backbone& backbone, const RNSTConfig& cfg,
                                 const std::optional<Image>& reference,
                                 const IterationObserver& observer) {
  cfg.validate();
  require_same_shape(x_in, x_guid, "reconstruct(x_in, x_guid)");
  if (reference) require_same_shape(x_in, *reference, "reconstruct(x_in, reference)");

  const nst::TransferObjective objective(backbone, x_in, x_guid, cfg.nst);
  const std::vector<int> levels = cfg.style_levels();

  ReconstructionTrace trace{cfg, x_in, {}, {}, x_in};
  Image x = x_in;

  // An iteration is a pure function of x for the built-in denoisers, so a
  // rejected iteration would repeat verbatim; replay its record instead.
  const bool replayable = cfg.denoiser.kind != denoise::DenoiserKind::external;

  for (int k = 1; k <= cfg.n_iter; ++k) {
    if (replayable && !trace.records.empty() && !trace.records.back().accepted) {
      IterationRecord rec = trace.records.back();
      rec.outer_index = k;
      trace.records.push_back(std::move(rec));
      trace.iterates.push_back(x);
      if (observer) observer(trace.records.back());
      continue;
    }

    IterationRecord rec;
    rec.outer_index = k;

    const Image x_d = denoise::denoise(x, cfg.denoiser);
    std::vector<nst::TransferResult> styled;
    try {
      styled = objective.run(x_d, levels);
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss(std::string(e.what()) + " while building style candidates in outer iteration " +
                              std::to_string(k),
                          e.step(), k);
    }

    double baseline = std::numeric_limits<double>::infinity();
    try {
      baseline = eval_loss(x, objective);
    } catch (const NonFiniteLoss&) {
      rec.notes.push_back("current iterate has a non-finite one-step loss");
    }
    rec.baseline_eval_loss = baseline;

    double best = baseline;
    const Image* adopted = nullptr;
    Image best_candidate = x;
    for (int i = 1; i <= cfg.n_line; ++i) {
      const double mu_tilde = i * cfg.mu;
      for (int j = 1; j <= cfg.n_style; ++j) {
        Image cand = candidate_update(x, styled[j - 1].output, x_d, mu_tilde, cfg.lambda);
        double loss = 0.0;
        try {
          loss = eval_loss(cand, objective);
        } catch (const NonFiniteLoss& e) {
          ++rec.candidates_skipped;
          rec.notes.push_back("skipped candidate (i=" + std::to_string(i) + ", j=" +
                              std::to_string(j) + "): " + e.what());
          continue;
        }
        ++rec.candidates_scored;
        if (loss < best) {
          best = loss;
          best_candidate = std::move(cand);
          adopted = &best_candidate;
          rec.chosen_mu_tilde = mu_tilde;
          rec.chosen_line_index = i;
          rec.chosen_style_level = j;
        }
      }
    }
    if (rec.candidates_scored == 0) {
      throw NonFiniteLoss("every candidate in outer iteration " + std::to_string(k) +
                              " produced a non-finite loss",
                          std::nullopt, k);
    }

    rec.accepted = adopted != nullptr;
    rec.best_eval_loss = best;
    if (rec.accepted) x = clip01(*adopted);
    if (reference) rec.metrics_vs_reference = metrics::evaluate(x, *reference);

    trace.records.push_back(rec);
    trace.iterates.push_back(x);
    if (observer) observer(trace.records.back());
  }

  trace.final_image = x;
  return {std::move(x), std::move(trace)};
}

}  // namespace rnst

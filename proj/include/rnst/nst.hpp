#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "rnst/features.hpp"
#include "rnst/image.hpp"

namespace rnst::nst {

using features::Backbone;
using features::FeatureStack;
using features::LayerFeatures;
using features::LayerSelection;

enum class NormMode { L1, L2 };

const char* to_string(NormMode mode);
NormMode norm_mode_from_string(const std::string& s);

/// Feature correlations of one layer, G = F F^T.
struct GramMatrix {
  std::string layer;
  Eigen::MatrixXd g;
  /// M_l of the originating feature matrix; needed for the style normalisation.
  Eigen::Index positions = 0;
};

/// Adam moments for the inner optimiser of transfer(). No weight decay.
struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamSettings&, const AdamSettings&) = default;
};

struct NSTConfig {
  /// Content weight. Expressed relative to beta, which stays 1 by default.
  double alpha = 1e-6;
  double beta = 1.0;
  LayerSelection selection = LayerSelection::defaults();
  NormMode norm_mode = NormMode::L1;
  double inner_step_size = 0.01;
  AdamSettings adam;

  void validate() const;

  friend bool operator==(const NSTConfig&, const NSTConfig&) = default;
};

/// Exactly symmetric by construction (lower triangle mirrored).
GramMatrix gram(const LayerFeatures& features);
Eigen::MatrixXd gram(const Eigen::MatrixXd& maps);

/// Sum over content layers of 1/2 sum_ij (F - Fc)^2 (L2) or 1/2 sum_ij |F - Fc| (L1).
double content_loss(const FeatureStack& x_feats, const FeatureStack& c_feats,
                    const NSTConfig& cfg);

/// sum_l w_l / (4 N_l^2 M_l^2) sum_ij d(G_ij, Gs_ij), d = squared (L2) or
/// absolute (L1) difference.
double style_loss(const FeatureStack& x_feats, const FeatureStack& s_feats,
                  const NSTConfig& cfg);

/// Style loss against precomputed target Gram matrices (one per style layer,
/// in selection order).
double style_loss(const FeatureStack& x_feats, const std::vector<GramMatrix>& targets,
                  const NSTConfig& cfg);

struct Losses {
  double total = 0.0;
  double content = 0.0;
  double style = 0.0;
};

/// total = alpha * content + beta * style.
Losses total_loss(const Image& x, const Image& x_c, const Image& x_s, const Backbone& backbone,
                  const NSTConfig& cfg);

struct TransferResult {
  Image output;
  double final_total_loss = 0.0;
  double final_content_loss = 0.0;
  double final_style_loss = 0.0;
  int iterations_run = 0;
};

/// Content features and style Gram matrices precomputed once for a fixed
/// (content, guidance) pair, so repeated evaluations only forward the
/// iterate.
class TransferObjective {
 public:
  TransferObjective(const Backbone& backbone, const Image& content, const Image& guidance,
                    NSTConfig cfg);

  const NSTConfig& config() const noexcept { return cfg_; }
  const Backbone& backbone() const noexcept { return backbone_; }

  Losses evaluate(const Image& x) const;

  /// Losses at x plus d(total)/dx.
  Losses evaluate(const Image& x, Image& gradient) const;

  /// Runs Adam from x_init and returns a result after each requested
  /// iteration count. Checkpoints must be non-decreasing. A run of n steps
  /// is a prefix of any longer run, so transfer(n) == run(x, {n})[0].
  /// Iterates are not clipped between steps; each returned output is
  /// clip01 of the iterate (except n = 0, which returns x_init verbatim),
  /// and its losses are evaluated at that returned output.
  std::vector<TransferResult> run(const Image& x_init, const std::vector<int>& checkpoints) const;

  TransferResult transfer(const Image& x_init, int n_iters) const;

 private:
  Backbone backbone_;
  NSTConfig cfg_;
  Image content_;
  FeatureStack content_feats_;
  std::vector<GramMatrix> style_targets_;
};

/// n_iters first-order (Adam) steps on a copy of x_init minimising
/// total_loss(x, x_content, x_guid). Throws NonFiniteLoss carrying the step.
TransferResult transfer(const Image& x_init, const Image& x_guid, const Image& x_content,
                        int n_iters, const Backbone& backbone, const NSTConfig& cfg);

}  // namespace rnst::nst

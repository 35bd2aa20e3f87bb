#include "rnst/nst.hpp"

#include <cmath>
#include <string>

#include "rnst/errors.hpp"

namespace rnst::nst {
namespace {

void require_same_maps(const LayerFeatures& a, const LayerFeatures& b) {
  if (a.maps.rows() != b.maps.rows() || a.maps.cols() != b.maps.cols()) {
    throw ShapeMismatch("feature shape mismatch at layer " + a.layer + ": " +
                        std::to_string(a.maps.rows()) + "x" + std::to_string(a.maps.cols()) +
                        " vs " + std::to_string(b.maps.rows()) + "x" +
                        std::to_string(b.maps.cols()));
  }
}

// Content term and (optionally) its gradient for one layer.
double content_term(const LayerFeatures& x, const LayerFeatures& c, NormMode mode,
                    Eigen::MatrixXd* grad, double scale) {
  require_same_maps(x, c);
  const Eigen::ArrayXXd diff = x.maps.array() - c.maps.array();
  if (mode == NormMode::L2) {
    if (grad) grad->array() += scale * diff;
    return 0.5 * diff.square().sum();
  }
  if (grad) grad->array() += (0.5 * scale) * diff.sign();
  return 0.5 * diff.abs().sum();
}

double style_term(const LayerFeatures& x, const GramMatrix& target, NormMode mode,
                  Eigen::MatrixXd* grad, double scale) {
  const Eigen::Index n = x.maps.rows();
  const Eigen::Index m = x.maps.cols();
  if (target.g.rows() != n || target.positions != m) {
    throw ShapeMismatch("style target shape mismatch at layer " + x.layer);
  }
  const Eigen::MatrixXd g = gram(x.maps);
  const Eigen::ArrayXXd diff = g.array() - target.g.array();
  const double norm = 1.0 / (4.0 * double(n) * double(n) * double(m) * double(m));
  double value = 0.0;
  Eigen::MatrixXd d_gram;
  if (mode == NormMode::L2) {
    value = norm * diff.square().sum();
    if (grad) d_gram = (2.0 * norm) * diff.matrix();
  } else {
    value = norm * diff.abs().sum();
    if (grad) d_gram = norm * diff.sign().matrix();
  }
  if (grad) {
    // d/dF of sum_ij D_ij (F F^T)_ij = (D + D^T) F, and D is symmetric.
    grad->noalias() += (2.0 * scale) * (d_gram * x.maps);
  }
  return value;
}

double content_sum(const FeatureStack& x, const FeatureStack& c, const NSTConfig& cfg,
                   FeatureStack* grad, double scale) {
  double total = 0.0;
  for (const std::string& layer : cfg.selection.content_layers) {
    total += content_term(x.at(layer), c.at(layer), cfg.norm_mode,
                          grad ? &grad->at(layer).maps : nullptr, scale);
  }
  return total;
}

double style_sum(const FeatureStack& x, const std::vector<GramMatrix>& targets,
                 const NSTConfig& cfg, FeatureStack* grad, double scale) {
  const auto& sel = cfg.selection;
  if (targets.size() != sel.style_layers.size()) {
    throw ShapeMismatch("expected one style target per style layer");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < sel.style_layers.size(); ++l) {
    const double w = sel.layer_weights[l];
    if (w == 0.0) continue;
    const std::string& layer = sel.style_layers[l];
    total += w * style_term(x.at(layer), targets[l], cfg.norm_mode,
                            grad ? &grad->at(layer).maps : nullptr, scale * w);
  }
  return total;
}

std::vector<GramMatrix> style_grams(const FeatureStack& s, const NSTConfig& cfg) {
  std::vector<GramMatrix> out;
  for (const std::string& layer : cfg.selection.style_layers) out.push_back(gram(s.at(layer)));
  return out;
}

}  // namespace

const char* to_string(NormMode mode) { return mode == NormMode::L1 ? "L1" : "L2"; }

NormMode norm_mode_from_string(const std::string& s) {
  if (s == "L1") return NormMode::L1;
  if (s == "L2") return NormMode::L2;
  throw InvalidArgument("norm mode must be L1 or L2, got '" + s + "'");
}

void NSTConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw InvalidArgument("alpha and beta must be >= 0");
  if (!(alpha + beta > 0.0)) throw InvalidArgument("alpha + beta must be > 0");
  if (!(inner_step_size > 0.0)) throw InvalidArgument("inner_step_size must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw InvalidArgument("Adam moment decays must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw InvalidArgument("Adam epsilon must be > 0");
  selection.validate();
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& maps) {
  const Eigen::Index n = maps.rows();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  g.selfadjointView<Eigen::Lower>().rankUpdate(maps);
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

GramMatrix gram(const LayerFeatures& features) {
  return {features.layer, gram(features.maps), features.maps.cols()};
}

double content_loss(const FeatureStack& x_feats, const FeatureStack& c_feats,
                    const NSTConfig& cfg) {
  return content_sum(x_feats, c_feats, cfg, nullptr, 1.0);
}

double style_loss(const FeatureStack& x_feats, const FeatureStack& s_feats, const NSTConfig& cfg) {
  for (const std::string& layer : cfg.selection.style_layers) {
    require_same_maps(x_feats.at(layer), s_feats.at(layer));
  }
  return style_sum(x_feats, style_grams(s_feats, cfg), cfg, nullptr, 1.0);
}

double style_loss(const FeatureStack& x_feats, const std::vector<GramMatrix>& targets,
                  const NSTConfig& cfg) {
  return style_sum(x_feats, targets, cfg, nullptr, 1.0);
}

Losses total_loss(const Image& x, const Image& x_c, const Image& x_s, const Backbone& backbone,
                  const NSTConfig& cfg) {
  cfg.validate();
  require_same_shape(x, x_c, "total_loss(x, x_c)");
  require_same_shape(x, x_s, "total_loss(x, x_s)");
  const FeatureStack fx = backbone.extract(x, cfg.selection);
  const FeatureStack fc = backbone.extract(x_c, cfg.selection);
  const FeatureStack fs = backbone.extract(x_s, cfg.selection);
  Losses l;
  l.content = content_loss(fx, fc, cfg);
  l.style = style_loss(fx, fs, cfg);
  l.total = cfg.alpha * l.content + cfg.beta * l.style;
  return l;
}

TransferObjective::TransferObjective(const Backbone& backbone, const Image& content,
                                     const Image& guidance, NSTConfig cfg)
    : backbone_(backbone), cfg_(std::move(cfg)), content_(content) {
  cfg_.validate();
  require_same_shape(content, guidance, "transfer(content, guidance)");
  content_feats_ = backbone_.extract(content, cfg_.selection);
  style_targets_ = style_grams(backbone_.extract(guidance, cfg_.selection), cfg_);
}

Losses TransferObjective::evaluate(const Image& x) const {
  require_same_shape(x, content_, "transfer objective");
  const FeatureStack fx = backbone_.extract(x, cfg_.selection);
  Losses l;
  l.content = content_sum(fx, content_feats_, cfg_, nullptr, 1.0);
  l.style = style_sum(fx, style_targets_, cfg_, nullptr, 1.0);
  l.total = cfg_.alpha * l.content + cfg_.beta * l.style;
  if (!std::isfinite(l.total)) throw NonFiniteLoss("NST loss evaluated to a non-finite value");
  return l;
}

Losses TransferObjective::evaluate(const Image& x, Image& gradient) const {
  require_same_shape(x, content_, "transfer objective");
  Losses l;
  const features::FeatureLoss loss = [&](const FeatureStack& fx, FeatureStack* grad) {
    l.content = content_sum(fx, content_feats_, cfg_, grad, cfg_.alpha);
    l.style = style_sum(fx, style_targets_, cfg_, grad, cfg_.beta);
    l.total = cfg_.alpha * l.content + cfg_.beta * l.style;
    return l.total;
  };
  gradient = backbone_.loss_gradient(x, cfg_.selection, loss).gradient;
  return l;
}

std::vector<TransferResult> TransferObjective::run(const Image& x_init,
                                                   const std::vector<int>& checkpoints) const {
  require_same_shape(x_init, content_, "transfer(x_init, content)");
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    if (checkpoints[k] < 0) throw InvalidArgument("transfer iteration count must be >= 0");
    if (k > 0 && checkpoints[k] < checkpoints[k - 1]) {
      throw InvalidArgument("transfer checkpoints must be non-decreasing");
    }
  }

  std::vector<TransferResult> results;
  results.reserve(checkpoints.size());
  auto record = [&](const Image& out, int step) {
    Losses l;
    try {
      l = evaluate(out);
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss(std::string(e.what()) + " at transfer step " + std::to_string(step), step);
    }
    results.push_back({out, l.total, l.content, l.style, step});
  };

  std::size_t next = 0;
  while (next < checkpoints.size() && checkpoints[next] == 0) {
    record(x_init, 0);
    ++next;
  }
  if (next == checkpoints.size()) return results;

  const AdamSettings& adam = cfg_.adam;
  Image x = x_init;
  Image grad = x_init;
  Image::Pixels m = Image::Pixels::Zero(x.height(), x.width());
  Image::Pixels v = Image::Pixels::Zero(x.height(), x.width());
  double beta1_t = 1.0;
  double beta2_t = 1.0;
  const int last = checkpoints.back();
  for (int step = 1; step <= last; ++step) {
    try {
      evaluate(x, grad);
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss(std::string(e.what()) + " at transfer step " + std::to_string(step), step);
    }
    const auto& g = grad.pixels();
    m = adam.beta1 * m + (1.0 - adam.beta1) * g;
    v = adam.beta2 * v + (1.0 - adam.beta2) * g.square();
    beta1_t *= adam.beta1;
    beta2_t *= adam.beta2;
    const double step_size = cfg_.inner_step_size / (1.0 - beta1_t);
    const double v_scale = 1.0 / (1.0 - beta2_t);
    x.pixels() -= step_size * m / ((v * v_scale).sqrt() + adam.epsilon);

    while (next < checkpoints.size() && checkpoints[next] == step) {
      record(clip01(x), step);
      ++next;
    }
  }
  return results;
}

TransferResult TransferObjective::transfer(const Image& x_init, int n_iters) const {
  return run(x_init, {n_iters}).front();
}

TransferResult transfer(const Image& x_init, const Image& x_guid, const Image& x_content,
                        int n_iters, const Backbone& backbone, const NSTConfig& cfg) {
  require_same_shape(x_init, x_guid, "transfer(x_init, x_guid)");
  const TransferObjective objective(backbone, x_content, x_guid, cfg);
  return objective.transfer(x_init, n_iters);
}

}  // namespace rnst::nst

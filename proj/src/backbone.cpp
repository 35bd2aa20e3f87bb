#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rnst/errors.hpp"
#include "rnst/features.hpp"
#include "rnst/weights.hpp"

namespace rnst::features {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct LayerParams {
  RowMat<T> weights;  // out x (in * 9)
  Vec<T> bias;
  // in x (out * 9), kernels rotated 180 degrees: the adjoint convolution.
  RowMat<T> adjoint;
};

template <typename T>
RowMat<T> adjoint_weights(const RowMat<T>& w) {
  const Eigen::Index out = w.rows();
  const Eigen::Index in = w.cols() / 9;
  RowMat<T> a(in, out * 9);
  for (Eigen::Index o = 0; o < out; ++o) {
    for (Eigen::Index i = 0; i < in; ++i) {
      for (int k = 0; k < 9; ++k) a(i, o * 9 + (8 - k)) = w(o, i * 9 + k);
    }
  }
  return a;
}

}  // namespace

struct Backbone::Impl {
  std::string checksum;
  Precision precision = Precision::float32;
  BackboneOptions options;
  std::vector<ConvLayerInfo> info;
  std::vector<bool> pool_after;
  std::vector<LayerParams<float>> params_f;
  std::vector<LayerParams<double>> params_d;

  template <typename T>
  const std::vector<LayerParams<T>>& params() const {
    if constexpr (std::is_same_v<T, float>) {
      return params_f;
    } else {
      return params_d;
    }
  }

  int index_of(const std::string& name) const {
    for (std::size_t k = 0; k < info.size(); ++k) {
      if (info[k].name == name) return static_cast<int>(k);
    }
    throw InvalidArgument("unknown backbone layer '" + name + "'");
  }
};

namespace {

// 3x3, stride 1, zero padding 1. `in` is channels x (h * w).
template <typename T>
void im2col(const RowMat<T>& in, int h, int w, RowMat<T>& col) {
  const Eigen::Index channels = in.rows();
  col.resize(channels * 9, Eigen::Index(h) * w);
  for (Eigen::Index c = 0; c < channels; ++c) {
    const T* src = in.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col.row(c * 9 + ky * 3 + kx).data();
        const int dy = ky - 1;
        const int dx = kx - 1;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          T* out_row = dst + std::ptrdiff_t(y) * w;
          const int sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::fill(out_row, out_row + w, T(0));
            continue;
          }
          const T* in_row = src + std::ptrdiff_t(sy) * w;
          std::fill(out_row, out_row + x_lo, T(0));
          std::copy(in_row + x_lo + dx, in_row + x_hi + dx, out_row + x_lo);
          std::fill(out_row + x_hi, out_row + w, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col.
template <typename T>
void col2im(const RowMat<T>& col, Eigen::Index channels, int h, int w, RowMat<T>& out) {
  out.setZero(channels, Eigen::Index(h) * w);
  for (Eigen::Index c = 0; c < channels; ++c) {
    T* dst = out.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col.row(c * 9 + ky * 3 + kx).data();
        const int dy = ky - 1;
        const int dx = kx - 1;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const T* col_row = src + std::ptrdiff_t(y) * w;
          T* img_row = dst + std::ptrdiff_t(sy) * w;
          for (int x = x_lo; x < x_hi; ++x) img_row[x + dx] += col_row[x];
        }
      }
    }
  }
}

template <typename T>
void max_pool(const RowMat<T>& in, int h, int w, RowMat<T>& out, std::vector<std::int32_t>& argmax) {
  const int oh = h / 2;
  const int ow = w / 2;
  out.resize(in.rows(), Eigen::Index(oh) * ow);
  argmax.resize(std::size_t(in.rows()) * oh * ow);
  for (Eigen::Index c = 0; c < in.rows(); ++c) {
    const T* src = in.row(c).data();
    T* dst = out.row(c).data();
    std::int32_t* arg = argmax.data() + std::size_t(c) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        std::int32_t best = (2 * y) * w + 2 * x;
        for (std::int32_t cand : {best + 1, best + w, best + w + 1}) {
          if (src[cand] > src[best]) best = cand;
        }
        dst[y * ow + x] = src[best];
        arg[y * ow + x] = best;
      }
    }
  }
}

template <typename T>
struct Pass {
  std::vector<RowMat<T>> acts;  // post-ReLU output of each conv, channels x (h * w)
  std::vector<RowMat<T>> pre;   // pre-ReLU output, kept only for tapped layers
  std::vector<int> heights;
  std::vector<int> widths;
  std::vector<std::vector<std::int32_t>> pool_argmax;  // indexed by the conv preceding the pool
};

// Per-channel affine map p -> (p - offset_c) * scale_c applied to the input.
struct InputAffine {
  double offset[3];
  double scale[3];
};

InputAffine input_affine(InputNormalization n) {
  switch (n) {
    case InputNormalization::imagenet:
      return {{kImageNetMean[0], kImageNetMean[1], kImageNetMean[2]},
              {1.0 / kImageNetStd[0], 1.0 / kImageNetStd[1], 1.0 / kImageNetStd[2]}};
    case InputNormalization::caffe:
      return {{kImageNetMean[0], kImageNetMean[1], kImageNetMean[2]}, {255.0, 255.0, 255.0}};
    case InputNormalization::none:
      break;
  }
  return {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
}

template <typename T>
RowMat<T> preprocess(const Image& img, const InputAffine& affine) {
  const Eigen::Index n = static_cast<Eigen::Index>(img.size());
  RowMat<T> x(3, n);
  const double* p = img.pixels().data();
  for (int c = 0; c < 3; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      x(c, i) = static_cast<T>((p[i] - affine.offset[c]) * affine.scale[c]);
    }
  }
  return x;
}

template <typename T>
Pass<T> forward(const Backbone::Impl& impl, const Image& img, int deepest,
                const std::vector<bool>& tapped) {
  const auto& params = impl.params<T>();
  const bool keep_pre = impl.options.tap == FeatureTap::pre_relu;
  Pass<T> pass;
  pass.acts.resize(deepest + 1);
  pass.pre.resize(deepest + 1);
  pass.heights.resize(deepest + 1);
  pass.widths.resize(deepest + 1);
  pass.pool_argmax.resize(deepest + 1);

  RowMat<T> input = preprocess<T>(img, input_affine(impl.options.normalization));
  RowMat<T> col;
  int h = img.height();
  int w = img.width();
  for (int k = 0; k <= deepest; ++k) {
    const RowMat<T>* src = &input;
    if (k > 0 && impl.pool_after[k - 1]) {
      max_pool(pass.acts[k - 1], h, w, input, pass.pool_argmax[k - 1]);
      h /= 2;
      w /= 2;
    } else if (k > 0) {
      src = &pass.acts[k - 1];
    }
    im2col(*src, h, w, col);
    RowMat<T>& z = pass.acts[k];
    z.noalias() = params[k].weights * col;
    z.colwise() += params[k].bias;
    if (keep_pre && tapped[k]) pass.pre[k] = z;
    z = z.cwiseMax(T(0));
    pass.heights[k] = h;
    pass.widths[k] = w;
  }
  return pass;
}

LayerFeatures to_features(const std::string& name, const auto& act, int h, int w) {
  LayerFeatures f;
  f.layer = name;
  f.maps = act.template cast<double>();
  f.height = h;
  f.width = w;
  return f;
}

template <typename T>
FeatureStack collect(const Backbone::Impl& impl, const Pass<T>& pass,
                     const std::vector<std::string>& names) {
  std::vector<LayerFeatures> layers;
  layers.reserve(names.size());
  for (const std::string& name : names) {
    const int k = impl.index_of(name);
    const RowMat<T>& src = impl.options.tap == FeatureTap::pre_relu ? pass.pre[k] : pass.acts[k];
    layers.push_back(to_features(name, src, pass.heights[k], pass.widths[k]));
  }
  return FeatureStack(std::move(layers));
}

template <typename T>
Image backward(const Backbone::Impl& impl, const Pass<T>& pass, const FeatureStack& grads,
               int img_h, int img_w) {
  const auto& params = impl.params<T>();
  const int deepest = static_cast<int>(pass.acts.size()) - 1;
  const bool pre_tap = impl.options.tap == FeatureTap::pre_relu;
  // upstream[k]: gradient w.r.t. the post-ReLU activation of conv k.
  // direct[k]: gradient w.r.t. its pre-ReLU output (pre-ReLU taps only).
  std::vector<RowMat<T>> upstream(deepest + 1);
  std::vector<RowMat<T>> direct(deepest + 1);
  for (const LayerFeatures& g : grads.layers()) {
    const int k = impl.index_of(g.layer);
    (pre_tap ? direct[k] : upstream[k]) = g.maps.cast<T>();
  }

  RowMat<T> dz, dcol, dx;
  for (int k = deepest; k >= 0; --k) {
    const RowMat<T>& act = pass.acts[k];
    if (upstream[k].size() == 0) upstream[k].setZero(act.rows(), act.cols());
    dz = (act.array() > T(0)).select(upstream[k], T(0));
    if (direct[k].size() != 0) dz += direct[k];
    if (params[k].adjoint.rows() < 16) {
      // Few input channels: scatter through col2im rather than gather.
      dcol.noalias() = params[k].weights.transpose() * dz;
      col2im(dcol, params[k].adjoint.rows(), pass.heights[k], pass.widths[k], dx);
    } else {
      im2col(dz, pass.heights[k], pass.widths[k], dcol);
      dx.noalias() = params[k].adjoint * dcol;
    }
    if (k == 0) break;

    RowMat<T>& below = upstream[k - 1];
    if (below.size() == 0) below.setZero(pass.acts[k - 1].rows(), pass.acts[k - 1].cols());
    if (impl.pool_after[k - 1]) {
      const auto& argmax = pass.pool_argmax[k - 1];
      const Eigen::Index pooled = dx.cols();
      for (Eigen::Index c = 0; c < dx.rows(); ++c) {
        T* dst = below.row(c).data();
        const T* src = dx.row(c).data();
        const std::int32_t* arg = argmax.data() + std::size_t(c) * pooled;
        for (Eigen::Index i = 0; i < pooled; ++i) dst[arg[i]] += src[i];
      }
    } else {
      below += dx;
    }
  }

  Image grad(img_h, img_w, 0.0);
  double* g = grad.pixels().data();
  const Eigen::Index n = static_cast<Eigen::Index>(grad.size());
  const InputAffine affine = input_affine(impl.options.normalization);
  for (int c = 0; c < 3; ++c) {
    const double scale = affine.scale[c];
    const T* src = dx.row(c).data();
    for (Eigen::Index i = 0; i < n; ++i) g[i] += static_cast<double>(src[i]) * scale;
  }
  return grad;
}

int deepest_index(const Backbone::Impl& impl, const std::vector<std::string>& names) {
  if (names.empty()) throw InvalidArgument("no layers selected");
  int deepest = 0;
  for (const std::string& n : names) deepest = std::max(deepest, impl.index_of(n));
  return deepest;
}

std::vector<bool> tapped_mask(const Backbone::Impl& impl, const std::vector<std::string>& names) {
  std::vector<bool> mask(impl.info.size(), false);
  for (const std::string& n : names) mask[impl.index_of(n)] = true;
  return mask;
}

void require_fits(const Backbone::Impl& impl, const Image& img, int deepest) {
  const int side = 1 << impl.info[deepest].pools_before;
  if (img.height() < side || img.width() < side) {
    throw InvalidArgument("image " + std::to_string(img.height()) + "x" +
                          std::to_string(img.width()) + " too small for layer " +
                          impl.info[deepest].name + " (needs >= " + std::to_string(side) +
                          " per side)");
  }
}

}  // namespace

Backbone Backbone::load(const std::filesystem::path& weights_path, Precision precision) {
  BackboneOptions options;
  options.precision = precision;
  return load(weights_path, options);
}

Backbone Backbone::load(const std::filesystem::path& weights_path, BackboneOptions options) {
  const Precision precision = options.precision;
  std::vector<ConvParams> raw = read_weights(weights_path);
  auto impl = std::make_shared<Impl>();
  impl->checksum = sha256_file(weights_path);
  impl->precision = precision;
  impl->options = options;
  int pools = 0;
  const auto& manifest = vgg16_manifest();
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const ConvParams& p = raw[k];
    impl->info.push_back({p.name, p.in_channels, p.out_channels, p.kernel, pools});
    impl->pool_after.push_back(manifest[k].pool_after);
    if (manifest[k].pool_after) ++pools;

    LayerParams<float> lp;
    lp.weights = Eigen::Map<const RowMat<float>>(p.weights.data(), p.out_channels,
                                                 Eigen::Index(p.in_channels) * 9);
    lp.bias = Eigen::Map<const Vec<float>>(p.bias.data(), p.out_channels);
    if (precision == Precision::float64) {
      RowMat<double> wd = lp.weights.cast<double>();
      RowMat<double> ad = adjoint_weights(wd);
      impl->params_d.push_back({std::move(wd), lp.bias.cast<double>(), std::move(ad)});
    } else {
      lp.adjoint = adjoint_weights(lp.weights);
      impl->params_f.push_back(std::move(lp));
    }
  }
  return Backbone(std::move(impl));
}

const std::string& Backbone::checksum() const { return impl_->checksum; }
Precision Backbone::precision() const { return impl_->precision; }
const BackboneOptions& Backbone::options() const { return impl_->options; }
const std::vector<ConvLayerInfo>& Backbone::layers() const { return impl_->info; }
const ConvLayerInfo& Backbone::layer(const std::string& name) const {
  return impl_->info[impl_->index_of(name)];
}

int Backbone::min_side_for(const std::vector<std::string>& layers) const {
  const int deepest = deepest_index(*impl_, layers);
  return std::max(Image::kMinSide, 1 << impl_->info[deepest].pools_before);
}

FeatureStack Backbone::extract(const Image& img, const LayerSelection& sel) const {
  const std::vector<std::string> names = sel.all_layers();
  const int deepest = deepest_index(*impl_, names);
  require_fits(*impl_, img, deepest);
  const std::vector<bool> tapped = tapped_mask(*impl_, names);
  if (impl_->precision == Precision::float64) {
    return collect(*impl_, forward<double>(*impl_, img, deepest, tapped), names);
  }
  return collect(*impl_, forward<float>(*impl_, img, deepest, tapped), names);
}

LossGradient Backbone::loss_gradient(const Image& img, const LayerSelection& sel,
                                     const FeatureLoss& loss) const {
  const std::vector<std::string> names = sel.all_layers();
  const int deepest = deepest_index(*impl_, names);
  require_fits(*impl_, img, deepest);
  const std::vector<bool> tapped = tapped_mask(*impl_, names);

  auto run = [&](auto tag) {
    using T = decltype(tag);
    Pass<T> pass = forward<T>(*impl_, img, deepest, tapped);
    FeatureStack feats = collect(*impl_, pass, names);
    FeatureStack grad = feats.zeros_like();
    const double value = loss(feats, &grad);
    if (!std::isfinite(value)) throw NonFiniteLoss("loss evaluated to a non-finite value");
    return LossGradient{value, backward<T>(*impl_, pass, grad, img.height(), img.width())};
  };
  if (impl_->precision == Precision::float64) return run(double{});
  return run(float{});
}

}  // namespace rnst::features

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rnst/image.hpp"

namespace rnst::features {

/// Which layers feed the style and content losses, and the per-style-layer
/// weights w_l. Layer identifiers are VGG-16 conv names ("conv1_1" ...).
struct LayerSelection {
  std::vector<std::string> style_layers;
  std::vector<std::string> content_layers;
  std::vector<double> layer_weights;

  /// conv1_1 .. conv4_1 for style with equal weights 1/8, conv2_2 for content.
  static LayerSelection defaults();

  /// Union of style and content layers, in network order.
  std::vector<std::string> all_layers() const;

  void validate() const;

  friend bool operator==(const LayerSelection&, const LayerSelection&) = default;
};

/// Post-ReLU activations of one layer: rows are feature maps (N_l), columns
/// are flattened spatial positions (M_l = h * w, row-major).
struct LayerFeatures {
  std::string layer;
  Eigen::MatrixXd maps;
  int height = 0;
  int width = 0;
};

class FeatureStack {
 public:
  FeatureStack() = default;
  explicit FeatureStack(std::vector<LayerFeatures> layers) : layers_(std::move(layers)) {}

  const std::vector<LayerFeatures>& layers() const noexcept { return layers_; }
  std::vector<LayerFeatures>& layers() noexcept { return layers_; }

  /// Throws InvalidArgument if the layer is absent.
  const LayerFeatures& at(const std::string& layer) const;
  LayerFeatures& at(const std::string& layer);
  bool contains(const std::string& layer) const;

  /// Same layers in the same order, each zero-filled.
  FeatureStack zeros_like() const;

 private:
  std::vector<LayerFeatures> layers_;
};

/// A scalar loss over a FeatureStack. When `grad` is non-null it has been
/// pre-shaped with zeros_like(feats) and the callee adds dLoss/dF into it.
using FeatureLoss = std::function<double(const FeatureStack& feats, FeatureStack* grad)>;

struct LossGradient {
  double loss = 0.0;
  Image gradient;
};

enum class Precision { float32, float64 };

/// Where features are read: after the ReLU (default) or straight out of the
/// convolution.
enum class FeatureTap { post_relu, pre_relu };

/// Input scaling after gray-to-RGB replication:
///   imagenet: (p - mean_c) / std_c with the torchvision constants below;
///   caffe:    255 * (p - mean_c), the 0..255 mean-subtracted convention;
///   none:     p unchanged.
enum class InputNormalization { imagenet, caffe, none };

const char* to_string(Precision p);
const char* to_string(FeatureTap t);
const char* to_string(InputNormalization n);
Precision precision_from_string(const std::string& s);
FeatureTap feature_tap_from_string(const std::string& s);
InputNormalization input_normalization_from_string(const std::string& s);

struct BackboneOptions {
  Precision precision = Precision::float32;
  FeatureTap tap = FeatureTap::post_relu;
  InputNormalization normalization = InputNormalization::imagenet;

  friend bool operator==(const BackboneOptions&, const BackboneOptions&) = default;
};

struct ConvLayerInfo {
  std::string name;
  int in_channels;
  int out_channels;
  int kernel;
  /// Number of 2x2 poolings applied before this layer's input.
  int pools_before;
};

/// Frozen VGG-16 convolutional trunk. Immutable after load; copies share the
/// underlying parameters and are safe for concurrent use.
class Backbone {
 public:
  /// Loads and validates a weights container (see weights.hpp). Throws
  /// ManifestError for missing files or manifest mismatches.
  static Backbone load(const std::filesystem::path& weights_path, BackboneOptions options = {});
  static Backbone load(const std::filesystem::path& weights_path, Precision precision);

  const std::string& checksum() const;
  Precision precision() const;
  const BackboneOptions& options() const;
  const std::vector<ConvLayerInfo>& layers() const;
  const ConvLayerInfo& layer(const std::string& name) const;

  /// Grayscale input is replicated to three channels, then normalised per
  /// options().normalization.
  FeatureStack extract(const Image& img, const LayerSelection& sel) const;

  /// Evaluates `loss` on extract(img, sel) and back-propagates to the pixels.
  /// Throws NonFiniteLoss if the loss is NaN or infinite.
  LossGradient loss_gradient(const Image& img, const LayerSelection& sel,
                             const FeatureLoss& loss) const;

  /// Smallest side an input may have for the deepest of `layers`.
  int min_side_for(const std::vector<std::string>& layers) const;

  struct Impl;

 private:
  explicit Backbone(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

inline constexpr double kImageNetMean[3] = {0.485, 0.456, 0.406};
inline constexpr double kImageNetStd[3] = {0.229, 0.224, 0.225};

}  // namespace rnst::features

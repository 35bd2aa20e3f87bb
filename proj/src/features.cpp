#include "rnst/features.hpp"

#include <algorithm>

#include "rnst/errors.hpp"
#include "rnst/weights.hpp"

namespace rnst::features {
namespace {

int network_position(const std::string& layer) {
  const auto& manifest = vgg16_manifest();
  for (std::size_t k = 0; k < manifest.size(); ++k) {
    if (layer == manifest[k].name) return static_cast<int>(k);
  }
  throw InvalidArgument("unknown VGG-16 layer '" + layer + "'");
}

}  // namespace

LayerSelection LayerSelection::defaults() {
  LayerSelection sel;
  sel.style_layers = {"conv1_1", "conv1_2", "conv2_1", "conv2_2",
                      "conv3_1", "conv3_2", "conv3_3", "conv4_1"};
  sel.content_layers = {"conv2_2"};
  sel.layer_weights.assign(sel.style_layers.size(), 1.0 / 8.0);
  return sel;
}

std::vector<std::string> LayerSelection::all_layers() const {
  std::vector<std::string> all = style_layers;
  for (const std::string& c : content_layers) {
    if (std::find(all.begin(), all.end(), c) == all.end()) all.push_back(c);
  }
  std::stable_sort(all.begin(), all.end(), [](const std::string& a, const std::string& b) {
    return network_position(a) < network_position(b);
  });
  return all;
}

void LayerSelection::validate() const {
  if (style_layers.empty()) throw InvalidArgument("style_layers must not be empty");
  if (content_layers.empty()) throw InvalidArgument("content_layers must not be empty");
  if (layer_weights.size() != style_layers.size()) {
    throw InvalidArgument("layer_weights must have one entry per style layer");
  }
  bool any_positive = false;
  for (double w : layer_weights) {
    if (!(w >= 0.0)) throw InvalidArgument("layer weights must be >= 0");
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) throw InvalidArgument("layer weights must not all be zero");
  for (const auto& l : style_layers) network_position(l);
  for (const auto& l : content_layers) network_position(l);
}

const LayerFeatures& FeatureStack::at(const std::string& layer) const {
  for (const auto& f : layers_) {
    if (f.layer == layer) return f;
  }
  throw InvalidArgument("feature stack has no layer '" + layer + "'");
}

LayerFeatures& FeatureStack::at(const std::string& layer) {
  return const_cast<LayerFeatures&>(std::as_const(*this).at(layer));
}

bool FeatureStack::contains(const std::string& layer) const {
  return std::any_of(layers_.begin(), layers_.end(),
                     [&](const LayerFeatures& f) { return f.layer == layer; });
}

FeatureStack FeatureStack::zeros_like() const {
  std::vector<LayerFeatures> out;
  out.reserve(layers_.size());
  for (const auto& f : layers_) {
    out.push_back({f.layer, Eigen::MatrixXd::Zero(f.maps.rows(), f.maps.cols()), f.height, f.width});
  }
  return FeatureStack(std::move(out));
}

const char* to_string(Precision p) { return p == Precision::float32 ? "float32" : "float64"; }

const char* to_string(FeatureTap t) { return t == FeatureTap::post_relu ? "post_relu" : "pre_relu"; }

const char* to_string(InputNormalization n) {
  switch (n) {
    case InputNormalization::imagenet:
      return "imagenet";
    case InputNormalization::caffe:
      return "caffe";
    case InputNormalization::none:
      break;
  }
  return "none";
}

Precision precision_from_string(const std::string& s) {
  if (s == "float32") return Precision::float32;
  if (s == "float64") return Precision::float64;
  throw InvalidArgument("precision must be float32 or float64, got '" + s + "'");
}

FeatureTap feature_tap_from_string(const std::string& s) {
  if (s == "post_relu") return FeatureTap::post_relu;
  if (s == "pre_relu") return FeatureTap::pre_relu;
  throw InvalidArgument("feature tap must be post_relu or pre_relu, got '" + s + "'");
}

InputNormalization input_normalization_from_string(const std::string& s) {
  if (s == "imagenet") return InputNormalization::imagenet;
  if (s == "caffe") return InputNormalization::caffe;
  if (s == "none") return InputNormalization::none;
  throw InvalidArgument("input normalization must be imagenet, caffe or none, got '" + s + "'");
}

}  // namespace rnst::features

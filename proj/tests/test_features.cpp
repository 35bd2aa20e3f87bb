#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "rnst/errors.hpp"
#include "rnst/features.hpp"
#include "rnst/nst.hpp"
#include "rnst/weights.hpp"
#include "support.hpp"

using namespace rnst;
using namespace rnst::features;

namespace {

LayerSelection only(const std::string& layer) {
  return {{layer}, {layer}, {1.0}};
}

void write_prefix(const std::filesystem::path& path, std::size_t layers) {
  auto all = synthetic_vgg16(2024);
  all.resize(layers);
  write_weights(path, all);
}

}  // namespace

TEST_CASE("manifest matches the VGG-16 trunk") {
  const Backbone& bb = test::backbone();
  REQUIRE(bb.layers().size() == 13);
  const ConvLayerInfo& first = bb.layer("conv1_1");
  CHECK(first.in_channels == 3);
  CHECK(first.out_channels == 64);
  CHECK(first.kernel == 3);
  CHECK(bb.layer("conv2_1").pools_before == 1);
  CHECK(bb.layer("conv5_3").out_channels == 512);
  CHECK(bb.checksum() == sha256_file(test::weights_path()));
  CHECK_THROWS_AS(bb.layer("fc6"), InvalidArgument);
}

TEST_CASE("feature shapes follow the pooling arithmetic") {
  const Image img = test::random_image(64, 64, 3);
  const FeatureStack a = test::backbone().extract(img, only("conv1_1"));
  CHECK(a.at("conv1_1").maps.rows() == 64);
  CHECK(a.at("conv1_1").maps.cols() == 64 * 64);
  const FeatureStack b = test::backbone().extract(img, only("conv3_1"));
  CHECK(b.at("conv3_1").height == 16);
  CHECK(b.at("conv3_1").width == 16);
  CHECK(b.at("conv3_1").maps.cols() == 256);
  CHECK(b.at("conv3_1").maps.rows() == 256);
  const FeatureStack c = test::backbone().extract(test::random_image(64, 48, 3), only("conv2_1"));
  CHECK(c.at("conv2_1").height == 32);
  CHECK(c.at("conv2_1").width == 24);
}

TEST_CASE("extraction is deterministic across loads") {
  const Image img = test::random_image(32, 32, 11);
  const LayerSelection sel = LayerSelection::defaults();
  const Backbone again = Backbone::load(test::weights_path());
  const FeatureStack x = test::backbone().extract(img, sel);
  const FeatureStack y = again.extract(img, sel);
  REQUIRE(x.layers().size() == y.layers().size());
  for (std::size_t k = 0; k < x.layers().size(); ++k) {
    CHECK(x.layers()[k].layer == y.layers()[k].layer);
    CHECK(x.layers()[k].maps == y.layers()[k].maps);
  }
}

TEST_CASE("post-ReLU taps are non-negative, pre-ReLU taps are not") {
  const Image img = test::random_image(32, 32, 4);
  const LayerSelection sel = only("conv2_2");
  const Backbone pre = Backbone::load(test::weights_path(),
                                      BackboneOptions{Precision::float64, FeatureTap::pre_relu,
                                                      InputNormalization::imagenet});
  const Eigen::MatrixXd post_maps = test::backbone64().extract(img, sel).at("conv2_2").maps;
  const Eigen::MatrixXd pre_maps = pre.extract(img, sel).at("conv2_2").maps;
  CHECK(post_maps.minCoeff() >= 0.0);
  CHECK(pre_maps.minCoeff() < 0.0);
  CHECK((pre_maps.cwiseMax(0.0) - post_maps).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("input normalisation options change the features") {
  const Image img = test::random_image(16, 16, 4);
  const LayerSelection sel = only("conv1_1");
  const auto maps = [&](InputNormalization n) {
    return Backbone::load(test::weights_path(), BackboneOptions{Precision::float64, FeatureTap::pre_relu, n})
        .extract(img, sel)
        .at("conv1_1")
        .maps;
  };
  const Eigen::MatrixXd none = maps(InputNormalization::none);
  const Eigen::MatrixXd caffe = maps(InputNormalization::caffe);
  CHECK((none - caffe).norm() > 1.0);
  CHECK((none - maps(InputNormalization::imagenet)).norm() > 1.0);
}

TEST_CASE("option names round-trip") {
  for (auto p : {Precision::float32, Precision::float64}) CHECK(precision_from_string(to_string(p)) == p);
  for (auto t : {FeatureTap::post_relu, FeatureTap::pre_relu}) CHECK(feature_tap_from_string(to_string(t)) == t);
  for (auto n : {InputNormalization::imagenet, InputNormalization::caffe, InputNormalization::none})
    CHECK(input_normalization_from_string(to_string(n)) == n);
  CHECK_THROWS_AS(feature_tap_from_string("relu"), InvalidArgument);
}

TEST_CASE("truncated containers name the first absent layer") {
  const auto path = test::scratch() / "prefix.rnstw";
  write_prefix(path, 4);
  try {
    (void)Backbone::load(path);
    FAIL("expected ManifestError");
  } catch (const ManifestError& e) {
    CHECK(e.layer() == "conv3_1");
    CHECK(std::string(e.what()).find("conv3_1") != std::string::npos);
  }

  // Cut mid-way through a layer's weights.
  const auto full = test::scratch() / "cut.rnstw";
  write_weights(full, synthetic_vgg16(2024));
  const auto bytes = std::filesystem::file_size(full);
  std::filesystem::resize_file(full, bytes / 2);
  CHECK_THROWS_AS((void)Backbone::load(full), ManifestError);

  CHECK_THROWS_AS((void)Backbone::load(test::scratch() / "absent.rnstw"), ManifestError);
}

TEST_CASE("mis-shaped layers are rejected") {
  auto layers = synthetic_vgg16(2024);
  layers[2].out_channels = 64;
  layers[2].weights.resize(std::size_t(64) * 64 * 9);
  layers[2].bias.resize(64);
  const auto path = test::scratch() / "misshaped.rnstw";
  write_weights(path, layers);
  try {
    (void)read_weights(path);
    FAIL("expected ManifestError");
  } catch (const ManifestError& e) {
    CHECK(e.layer() == "conv2_1");
  }
}

TEST_CASE("images too small for the deepest layer are rejected") {
  CHECK(test::backbone().min_side_for({"conv4_1"}) == 8);
  CHECK(test::backbone().min_side_for({"conv5_1"}) == 16);
  CHECK_THROWS_AS(test::backbone().extract(Image(8, 8), only("conv5_1")), InvalidArgument);
}

TEST_CASE("zero loss has a zero gradient") {
  const Image img = test::random_image(16, 16, 2);
  const LossGradient lg = test::backbone64().loss_gradient(
      img, LayerSelection::defaults(), [](const FeatureStack&, FeatureStack*) { return 0.0; });
  CHECK(lg.loss == 0.0);
  CHECK(lg.gradient.pixels().abs().maxCoeff() == 0.0);
}

TEST_CASE("content loss against itself has a zero gradient") {
  const Image img = test::random_image(16, 16, 8);
  nst::NSTConfig cfg;
  cfg.beta = 0.0;
  cfg.alpha = 1.0;
  for (auto mode : {nst::NormMode::L1, nst::NormMode::L2}) {
    cfg.norm_mode = mode;
    const nst::TransferObjective obj(test::backbone64(), img, test::random_image(16, 16, 9), cfg);
    Image grad(16, 16);
    const nst::Losses l = obj.evaluate(img, grad);
    CHECK(l.content == 0.0);
    CHECK(grad.pixels().abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("non-finite losses are reported") {
  const Image img = test::random_image(16, 16, 2);
  CHECK_THROWS_AS(test::backbone().loss_gradient(img, LayerSelection::defaults(),
                                                 [](const FeatureStack&, FeatureStack*) {
                                                   return std::nan("");
                                                 }),
                  NonFiniteLoss);
}

// The step stays below the spacing of ReLU and max-pool switching points on
// random inputs, where the loss is smooth.
TEST_CASE("analytic gradient matches central differences") {
  constexpr double kStep = 1e-5;
  for (auto mode : {nst::NormMode::L2, nst::NormMode::L1}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      CAPTURE(seed);
      CAPTURE(std::string(nst::to_string(mode)));
      nst::NSTConfig cfg;
      cfg.norm_mode = mode;
      const Image x = test::random_image(16, 16, 100 + seed);
      const Image c = test::random_image(16, 16, 200 + seed);
      const Image s = test::random_image(16, 16, 300 + seed);
      const nst::TransferObjective obj(test::backbone64(), c, s, cfg);
      Image grad(16, 16);
      obj.evaluate(x, grad);
      std::mt19937_64 pick(seed);
      for (int k = 0; k < 10; ++k) {
        const int r = int(pick() % 16);
        const int col = int(pick() % 16);
        Image up = x, down = x;
        up(r, col) += kStep;
        down(r, col) -= kStep;
        const double fd = (obj.evaluate(up).total - obj.evaluate(down).total) / (2 * kStep);
        CAPTURE(r);
        CAPTURE(col);
        CHECK(test::rel_diff(grad(r, col), fd) < 1e-3);
      }
    }
  }
}

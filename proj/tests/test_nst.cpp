#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "rnst/denoise.hpp"
#include "rnst/errors.hpp"
#include "rnst/nst.hpp"
#include "rnst/phantom.hpp"
#include "support.hpp"

using namespace rnst;
using namespace rnst::nst;

namespace {

LayerFeatures layer(const std::string& name, Eigen::MatrixXd maps) {
  LayerFeatures f;
  f.layer = name;
  f.height = 1;
  f.width = int(maps.cols());
  f.maps = std::move(maps);
  return f;
}

NSTConfig single_layer(NormMode mode) {
  NSTConfig cfg;
  cfg.selection = {{"conv1_1"}, {"conv1_1"}, {1.0}};
  cfg.norm_mode = mode;
  return cfg;
}

}  // namespace

TEST_CASE("gram matrix hand examples") {
  CHECK(gram(Eigen::MatrixXd::Ones(1, 5))(0, 0) == 5.0);

  Eigen::MatrixXd f(2, 3);
  f << 1, 0, 1, 0, 1, 0;
  Eigen::MatrixXd want(2, 2);
  want << 2, 0, 0, 1;
  CHECK(gram(f) == want);

  const GramMatrix g = gram(layer("conv1_1", f));
  CHECK(g.positions == 3);
  CHECK(g.layer == "conv1_1");
}

TEST_CASE("gram matrices are symmetric positive semi-definite") {
  const Image img = test::random_image(24, 24, 17);
  const auto maps = test::backbone64().extract(img, {{"conv2_1"}, {"conv2_1"}, {1.0}}).at("conv2_1").maps;
  const Eigen::MatrixXd g = gram(maps);
  CHECK(g == g.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
  CHECK(eig.eigenvalues().minCoeff() > -1e-9 * eig.eigenvalues().maxCoeff());
}

TEST_CASE("content loss hand examples") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 3);
  Eigen::MatrixXd b = a;
  b(1, 2) = 2.0;
  const FeatureStack x({layer("conv1_1", a)});
  const FeatureStack c({layer("conv1_1", b)});
  CHECK(content_loss(x, x, single_layer(NormMode::L2)) == 0.0);
  CHECK(content_loss(x, x, single_layer(NormMode::L1)) == 0.0);
  CHECK(test::rel_diff(content_loss(x, c, single_layer(NormMode::L2)), 2.0) < 1e-9);
  CHECK(test::rel_diff(content_loss(x, c, single_layer(NormMode::L1)), 1.0) < 1e-9);
}

TEST_CASE("style loss hand examples") {
  const FeatureStack x({layer("conv1_1", Eigen::MatrixXd::Constant(1, 1, 2.0))});
  const FeatureStack s({layer("conv1_1", Eigen::MatrixXd::Constant(1, 1, 1.0))});
  CHECK(style_loss(x, x, single_layer(NormMode::L2)) == 0.0);
  CHECK(test::rel_diff(style_loss(x, s, single_layer(NormMode::L2)), 2.25) < 1e-9);
  // |4 - 1| / 4
  CHECK(test::rel_diff(style_loss(x, s, single_layer(NormMode::L1)), 0.75) < 1e-9);
}

TEST_CASE("a zero-weight style layer drops out") {
  const Eigen::MatrixXd f1 = test::random_image(8, 8, 1).pixels().matrix().leftCols(8);
  const Eigen::MatrixXd f2 = test::random_image(8, 8, 2).pixels().matrix();
  const FeatureStack x({layer("conv1_1", f1), layer("conv1_2", f2)});
  const FeatureStack s({layer("conv1_1", f2), layer("conv1_2", f1)});
  NSTConfig both;
  both.selection = {{"conv1_1", "conv1_2"}, {"conv1_1"}, {1.0, 0.0}};
  NSTConfig first = single_layer(NormMode::L1);
  both.norm_mode = NormMode::L1;
  CHECK(style_loss(x, s, both) == style_loss(x, s, first));
}

TEST_CASE("style loss ignores the order of spatial positions") {
  const Eigen::MatrixXd f = test::random_image(8, 12, 3).pixels().matrix();
  const Eigen::MatrixXd t = test::random_image(8, 12, 4).pixels().matrix();
  Eigen::MatrixXd permuted(8, 12);
  for (int j = 0; j < 12; ++j) permuted.col(j) = f.col((j * 5) % 12);
  for (auto mode : {NormMode::L1, NormMode::L2}) {
    const NSTConfig cfg = single_layer(mode);
    const FeatureStack s({layer("conv1_1", t)});
    CHECK(test::rel_diff(style_loss(FeatureStack({layer("conv1_1", f)}), s, cfg),
                         style_loss(FeatureStack({layer("conv1_1", permuted)}), s, cfg)) < 1e-12);
  }
}

TEST_CASE("L2 style loss is homogeneous of degree four") {
  const Eigen::MatrixXd f = test::random_image(8, 8, 5).pixels().matrix();
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(8, 8);
  const NSTConfig cfg = single_layer(NormMode::L2);
  const FeatureStack s({layer("conv1_1", zero)});
  const double base = style_loss(FeatureStack({layer("conv1_1", f)}), s, cfg);
  const double scaled = style_loss(FeatureStack({layer("conv1_1", 2.0 * f)}), s, cfg);
  CHECK(test::rel_diff(scaled, 16.0 * base) < 1e-12);
}

TEST_CASE("norm mode names") {
  CHECK(norm_mode_from_string(to_string(NormMode::L1)) == NormMode::L1);
  CHECK(norm_mode_from_string("L2") == NormMode::L2);
  CHECK_THROWS_AS(norm_mode_from_string("l3"), InvalidArgument);
}

TEST_CASE("total loss composition") {
  const Image x = test::random_image(32, 32, 1);
  const Image c = test::random_image(32, 32, 2);
  const Image s = test::random_image(32, 32, 3);
  const Backbone& bb = test::backbone64();

  const Losses zero = total_loss(x, x, x, bb, NSTConfig{});
  CHECK(zero.total == 0.0);
  CHECK(zero.content == 0.0);
  CHECK(zero.style == 0.0);

  for (auto mode : {NormMode::L1, NormMode::L2}) {
    NSTConfig cfg;
    cfg.norm_mode = mode;
    cfg.alpha = 0.3;
    cfg.beta = 2.0;
    const Losses l = total_loss(x, c, s, bb, cfg);
    const auto fx = bb.extract(x, cfg.selection);
    const double manual = cfg.alpha * content_loss(fx, bb.extract(c, cfg.selection), cfg) +
                          cfg.beta * style_loss(fx, bb.extract(s, cfg.selection), cfg);
    CHECK(test::rel_diff(l.total, manual) < 1e-10);

    cfg.alpha = 0.0;
    const Losses style_only = total_loss(x, c, s, bb, cfg);
    CHECK(style_only.total == cfg.beta * style_only.style);
  }
}

TEST_CASE("zero transfer iterations return the initial image") {
  Image x = test::random_image(32, 32, 4);
  x(0, 0) = 1.25;  // outside [0, 1]: must survive unclipped
  const TransferResult r = transfer(x, test::random_image(32, 32, 5), test::random_image(32, 32, 6), 0,
                                    test::backbone(), NSTConfig{});
  CHECK(r.output == x);
  CHECK(r.iterations_run == 0);
}

TEST_CASE("the global minimum is stationary") {
  const Image x = test::random_image(32, 32, 7);
  for (int n : {1, 5}) {
    const TransferResult r = transfer(x, x, x, n, test::backbone(), NSTConfig{});
    CHECK(r.output == x);
    CHECK(r.final_total_loss == 0.0);
  }
}

TEST_CASE("checkpointed runs are prefixes of longer runs") {
  const Image x = test::random_image(32, 32, 8);
  const TransferObjective obj(test::backbone(), test::random_image(32, 32, 9), test::random_image(32, 32, 10),
                              NSTConfig{});
  const auto runs = obj.run(x, {0, 2, 5});
  REQUIRE(runs.size() == 3);
  CHECK(runs[0].output == x);
  CHECK(runs[1].output == obj.transfer(x, 2).output);
  CHECK(runs[2].output == obj.transfer(x, 5).output);
  CHECK(runs[2].iterations_run == 5);
  CHECK_THROWS_AS(obj.run(x, {3, 2}), InvalidArgument);
}

TEST_CASE("transfer descends on a phantom pair") {
  PhantomSpec spec;
  spec.size = 64;
  const PhantomPair p = make_phantom_pair(spec);
  const Image start = denoise::denoise(p.noisy_low, denoise::DenoiserSpec{});
  const NSTConfig cfg;
  const Losses before = total_loss(start, p.noisy_low, p.guidance, test::backbone(), cfg);
  const TransferResult r = transfer(start, p.guidance, p.noisy_low, 100, test::backbone(), cfg);
  CHECK(r.iterations_run == 100);
  CHECK(r.final_total_loss < before.total);
  CHECK(r.output.pixels().minCoeff() >= 0.0);
  CHECK(r.output.pixels().maxCoeff() <= 1.0);
  // Regression values for the synthetic trunk.
  CHECK(before.total == doctest::Approx(0.00860002).epsilon(1e-5));
  CHECK(r.final_total_loss == doctest::Approx(0.000320981).epsilon(1e-5));
}

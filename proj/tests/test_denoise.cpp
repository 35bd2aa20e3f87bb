#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "rnst/denoise.hpp"
#include "rnst/errors.hpp"
#include "rnst/metrics.hpp"
#include "rnst/phantom.hpp"
#include "support.hpp"

using namespace rnst;
using namespace rnst::denoise;
using rnst::denoise::denoise;

namespace {

DenoiserSpec spec_of(DenoiserKind kind) {
  DenoiserSpec s;
  s.kind = kind;
  return s;
}

}  // namespace

TEST_CASE("identity returns the input") {
  const Image img = test::random_image(32, 32, 1);
  CHECK(rnst::denoise::denoise(img, spec_of(DenoiserKind::identity)) == img);
}

TEST_CASE("built-in denoisers preserve constant images") {
  for (double v : {0.0, 0.3, 1.0}) {
    const Image flat(40, 33, v);
    for (auto kind : {DenoiserKind::identity, DenoiserKind::gaussian, DenoiserKind::nlm}) {
      CAPTURE(to_string(kind));
      CHECK(rnst::denoise::denoise(flat, spec_of(kind)) == flat);
    }
  }
}

TEST_CASE("denoisers reduce error on the pinned phantom") {
  const PhantomPair p = make_phantom_pair(PhantomSpec{});
  const double noisy_mse = metrics::mse(p.noisy_low, p.clean_high);
  const double noisy_psnr = metrics::psnr(p.noisy_low, p.clean_high);
  const Image g = rnst::denoise::denoise(p.noisy_low, spec_of(DenoiserKind::gaussian));
  const Image n = rnst::denoise::denoise(p.noisy_low, spec_of(DenoiserKind::nlm));
  CHECK(metrics::mse(g, p.clean_high) < noisy_mse);
  CHECK(metrics::mse(n, p.clean_high) < noisy_mse);
  const double nlm_psnr = metrics::psnr(n, p.clean_high);
  CHECK(nlm_psnr > noisy_psnr);
  // Regression baseline, NLM with default parameters.
  CHECK(nlm_psnr == doctest::Approx(22.912069334).epsilon(1e-9));
}

TEST_CASE("outputs keep the shape and stay in range") {
  const Image img = test::random_image(19, 27, 2);
  for (auto kind : {DenoiserKind::gaussian, DenoiserKind::nlm}) {
    const Image out = rnst::denoise::denoise(img, spec_of(kind));
    CHECK(out.same_shape(img));
    CHECK(out.pixels().minCoeff() >= 0.0);
    CHECK(out.pixels().maxCoeff() <= 1.0);
  }
}

TEST_CASE("parameter validation") {
  DenoiserSpec s = spec_of(DenoiserKind::nlm);
  s.nlm.patch_size = 4;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = spec_of(DenoiserKind::gaussian);
  s.gaussian.sigma_blur = -1.0;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = spec_of(DenoiserKind::external);
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  CHECK_THROWS_AS(denoiser_kind_from_string("bm3d"), InvalidArgument);
  CHECK(NlmParams::for_sigma(0.1).filtering_h == doctest::Approx(0.08));
}

TEST_CASE("external denoiser round-trips through the float format") {
  const auto script = test::scratch() / "copy.sh";
  {
    std::ofstream f(script);
    f << "#!/bin/sh\ncp \"$1\" \"$2\"\n";
  }
  std::filesystem::permissions(script, std::filesystem::perms::owner_all);
  ExternalCommand cmd{script.string(), {}, false};
  Image img = test::random_image(16, 16, 3);
  for (double& p : img.data()) p = double(float(p));
  CHECK(run_external(img, cmd) == img);

  ExternalCommand failing{"/bin/false", {}, false};
  try {
    (void)run_external(img, failing);
    FAIL("expected ExternalProcessError");
  } catch (const ExternalProcessError& e) {
    CHECK(e.transcript().find("/bin/false") != std::string::npos);
  }
}

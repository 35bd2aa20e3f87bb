#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "rnst/config.hpp"
#include "rnst/dataio.hpp"
#include "rnst/errors.hpp"
#include "rnst/plot.hpp"
#include "rnst/report.hpp"
#include "rnst/runner.hpp"
#include "rnst/weights.hpp"
#include "support.hpp"

using namespace rnst;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = test::scratch() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

config::RunConfig tiny_phantom_run(const fs::path& out, int n_iter) {
  config::RunConfig cfg = config::preset("phantom-default");
  cfg.phantom->size = 64;
  cfg.phantom->slices = 2;
  cfg.rnst.n_iter = n_iter;
  cfg.rnst.n0 = 2;
  cfg.rnst.n_step = 2;
  cfg.backbone.path = test::weights_path();
  cfg.output_dir = out;
  return cfg;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(RNST_CLI_BINARY) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("presets carry the published hyperparameters") {
  const auto& names = config::preset_names();
  CHECK(names == std::vector<std::string>{"paper-test1", "paper-test2-awgn", "phantom-default"});
  for (const auto& name : names) {
    const RNSTConfig r = config::preset(name).rnst;
    CHECK(r.n_style == 3);
    CHECK(r.n_line == 5);
    CHECK(r.nst.alpha / r.nst.beta == 1e-6);
  }
  const config::RunConfig t1 = config::preset("paper-test1");
  CHECK(t1.rnst.mu == 0.13);
  CHECK(t1.rnst.lambda == 0.2);
  CHECK(t1.rnst.n_iter == 10);
  CHECK(t1.rnst.n0 == 100);
  CHECK(t1.rnst.n_step == 100);
  CHECK_FALSE(t1.noise.has_value());

  const config::RunConfig t2 = config::preset("paper-test2-awgn");
  CHECK(t2.rnst.mu == 0.15);
  CHECK(t2.rnst.lambda == 0.3);
  CHECK(t2.rnst.n_iter == 50);
  CHECK(t2.rnst.n0 == 100);
  REQUIRE(t2.noise.has_value());
  CHECK(t2.noise->sigma == 20.0 / 255.0);

  const config::RunConfig pd = config::preset("phantom-default");
  CHECK(pd.rnst.n0 == 50);
  CHECK(pd.rnst.n_step == 50);
  CHECK(pd.phantom->size == 128);
  CHECK(pd.phantom->contrast_gamma == 1.4);

  CHECK_THROWS_AS(config::preset("paper-test3"), ConfigError);
}

TEST_CASE("config serialisation round-trips") {
  for (const auto& name : config::preset_names()) {
    const config::RunConfig c = config::preset(name);
    CHECK(config::from_json(config::to_json(c)) == c);
  }

  config::RunConfig c;
  c.content = config::SliceSource{"data/low", "t2"};
  c.guidance = config::SliceSource{"data/high", ""};
  c.reference = config::SliceSource{"data/ref.pfi", ""};
  c.policy = {dataio::GuidanceMode::frozen, 55};
  c.noise = NoiseSpec{0.05, 9};
  c.rnst.mu = 0.1 + 0.2;  // not exactly representable in short decimal form
  c.rnst.nst.norm_mode = nst::NormMode::L2;
  c.rnst.nst.selection = {{"conv1_1", "conv3_1"}, {"conv4_2"}, {0.25, 0.75}};
  c.rnst.denoiser.kind = denoise::DenoiserKind::external;
  c.rnst.denoiser.external = {"bm3d", {"--sigma", "20"}, true};
  c.backbone = {"w.rnstw", std::string(64, 'a'),
                {features::Precision::float64, features::FeatureTap::pre_relu, features::InputNormalization::caffe}};
  c.seed = 0xFFFFFFFFFFFFFFFFull;
  c.workers = 3;
  c.error_maps = false;
  const config::RunConfig back = config::from_json(config::to_json(c));
  CHECK(back == c);

  const fs::path p = test::scratch() / "cfg.json";
  config::save(c, p);
  CHECK(config::load(p) == c);
}

TEST_CASE("unknown keys and bad values are rejected with their path") {
  const auto message = [](const std::string& text) {
    try {
      (void)config::from_json(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(contains(message(R"({"schema_version":1,"preset":"paper-test1","rnst":{"lamda":0.3}})"), "rnst.lamda"));
  CHECK(contains(message(R"({"preset":"paper-test1"})"), "schema_version"));
  CHECK(contains(message(R"({"schema_version":2,"preset":"paper-test1"})"), "schema_version"));
  CHECK(contains(message(R"({"schema_version":1,"preset":"paper-test1","seed":"one"})"), "seed"));
  CHECK(contains(message(R"({"schema_version":1,"preset":"paper-test1","backbone":{"tap":"x"}})"), "backbone.tap"));
  CHECK(contains(message(R"({"schema_version":1})"), "content"));
  CHECK(contains(message("{not json"), "JSON"));
}

TEST_CASE("absent keys keep the preset values") {
  const config::RunConfig c =
      config::from_json(R"({"schema_version":1,"preset":"paper-test2-awgn","rnst":{"mu":0.1}})");
  config::RunConfig want = config::preset("paper-test2-awgn");
  want.rnst.mu = 0.1;
  CHECK(c == want);
  CHECK(config::from_json(R"({"schema_version":1})", "paper-test1") == config::preset("paper-test1"));
}

TEST_CASE("weights cache directory resolution") {
  ::setenv("RNST_WEIGHTS_DIR", "/tmp/rnst-cache-test", 1);
  CHECK(config::weights_cache_dir() == fs::path("/tmp/rnst-cache-test"));
  CHECK(config::resolve_weights_path({}) == fs::path("/tmp/rnst-cache-test/vgg16.rnstw"));
  ::unsetenv("RNST_WEIGHTS_DIR");
  ::setenv("XDG_CACHE_HOME", "/tmp/xdg", 1);
  CHECK(config::weights_cache_dir() == fs::path("/tmp/xdg/rnst"));
  ::unsetenv("XDG_CACHE_HOME");
  CHECK(config::resolve_weights_path({"explicit.rnstw", "", {}}) == fs::path("explicit.rnstw"));
}

TEST_CASE("report means equal the per-slice arithmetic means") {
  report::RunReport r;
  double sums[4] = {0, 0, 0, 0};
  for (int k = 0; k < 7; ++k) {
    report::SliceRow row;
    row.label = "s";
    row.index = k;
    metrics::MetricReport in, out;
    in.psnr_db = 20.0 + 0.37 * k;
    in.ssim = 0.1 + 0.013 * k;
    out.psnr_db = 25.0 + 1.0 / (k + 1);
    out.ssim = 0.7 - 0.011 * k;
    row.input = in;
    row.recon = out;
    sums[0] += in.psnr_db;
    sums[1] += in.ssim;
    sums[2] += out.psnr_db;
    sums[3] += out.ssim;
    r.rows.push_back(row);
  }
  const report::Means m = r.means();
  CHECK(std::abs(m.psnr_in - sums[0] / 7) < 1e-9);
  CHECK(std::abs(m.ssim_in - sums[1] / 7) < 1e-9);
  CHECK(std::abs(m.psnr_recon - sums[2] / 7) < 1e-9);
  CHECK(std::abs(m.ssim_recon - sums[3] / 7) < 1e-9);

  r.rows[2].recon.psnr_db = INFINITY;
  CHECK(std::isinf(r.means().psnr_recon));
  r.rows[3].input.reset();
  CHECK(std::isnan(r.means().psnr_in));
  CHECK(std::isnan(report::RunReport{}.means().ssim_recon));
}

TEST_CASE("report csv format") {
  CHECK(report::format_value(INFINITY) == "inf");
  CHECK(report::format_value(-INFINITY) == "-inf");
  CHECK(report::format_value(NAN) == "nan");
  CHECK(report::format_value(1.5) == "1.500000");
  CHECK(std::isinf(report::parse_value("inf")));

  report::RunReport r;
  report::SliceRow row;
  row.label = "phantom";
  row.index = 3;
  row.recon.psnr_db = INFINITY;
  row.recon.ssim = 1.0;
  r.rows.push_back(row);
  const std::string csv = report::to_csv(r);
  CHECK(csv == "label,index,psnr_in,ssim_in,psnr_recon,ssim_recon\nphantom,3,nan,nan,inf,1.000000\n");
  const auto rows = report::rows_from_csv(csv);
  REQUIRE(rows.size() == 1);
  CHECK(std::isinf(rows[0].recon.psnr_db));
  CHECK_FALSE(rows[0].input.has_value());
  CHECK_THROWS_AS(report::rows_from_csv("label,index\n"), FormatError);
}

TEST_CASE("line charts and error maps") {
  const Image chart = plot::line_chart({1, 2, 3}, {0.5, NAN, 0.25});
  CHECK(chart.height() == 320);
  CHECK(chart.width() == 480);
  CHECK(chart.pixels().minCoeff() == 0.0);
  CHECK(chart.pixels().maxCoeff() == 1.0);

  const Image a = test::random_image(16, 16, 1);
  const Image b = test::random_image(16, 16, 2);
  const Image e = plot::error_map(a, b);
  CHECK(e(3, 4) == std::abs(a(3, 4) - b(3, 4)));
}

TEST_CASE("phantom reconstruction run end to end") {
  const fs::path root = fresh_dir("run");
  const config::RunConfig cfg = tiny_phantom_run(root / "a", 10);
  const features::Backbone bb = runner::load_backbone(cfg.backbone);
  std::ostringstream log;
  REQUIRE(runner::cmd_reconstruct(cfg, bb, log) == 0);

  const fs::path a = cfg.output_dir;
  for (const char* f : {"config.json", "weights.sha256", "report.csv", "report.txt", "report.json", "timing.csv",
                        "recon/phantom_0001.pfi", "recon_png/phantom_0002.png", "error_maps/phantom_0001.png",
                        "traces/phantom_0002/trace.json", "traces/phantom_0002/iter_0010.pfi"}) {
    CHECK_MESSAGE(fs::exists(a / f), f);
  }
  CHECK_FALSE(fs::exists(a / "errors.jsonl"));
  CHECK(config::load(a / "config.json") == cfg);
  CHECK(report::read_text(a / "weights.sha256") == bb.checksum() + "\n");

  // Structured log: one JSON object per line with per-iteration fields.
  std::istringstream lines(log.str());
  std::string line;
  int iterations = 0;
  while (std::getline(lines, line)) {
    if (contains(line, "\"event\":\"iteration\"")) {
      ++iterations;
      CHECK(contains(line, "\"loss_star\""));
      CHECK(contains(line, "\"accepted\""));
      CHECK(contains(line, "\"i\""));
      CHECK(contains(line, "\"j\""));
    }
  }
  CHECK(iterations == 20);

  // Deterministic rerun.
  config::RunConfig again = cfg;
  again.output_dir = root / "b";
  std::ostringstream log2;
  REQUIRE(runner::cmd_reconstruct(again, bb, log2) == 0);
  for (const char* f : {"report.csv", "report.txt", "recon/phantom_0001.pfi", "recon/phantom_0002.pfi",
                        "traces/phantom_0001/iter_0010.pfi", "error_maps/phantom_0002.pfi"}) {
    CHECK_MESSAGE(report::read_text(a / f) == report::read_text(again.output_dir / f), f);
  }

  // Trace plots: one point per outer iteration, accepted losses strictly falling.
  const fs::path trace = a / "traces/phantom_0001/trace.json";
  runner::cmd_trace_plot(trace, root / "plots1");
  runner::cmd_trace_plot(trace, root / "plots2");
  const std::string curves = report::read_text(root / "plots1/curves.csv");
  CHECK(std::count(curves.begin(), curves.end(), '\n') == 11);
  CHECK(curves == report::read_text(root / "plots2/curves.csv"));
  CHECK(fs::exists(root / "plots1/error_iter_0010.png"));
  CHECK(fs::exists(root / "plots1/ssim.png"));
  const auto td = runner::read_trace(trace);
  REQUIRE(td.records.size() == 10);
  double last = INFINITY;
  for (const auto& r : td.records) {
    CHECK(r.candidates_scored == 15);
    if (r.accepted) {
      CHECK(r.best_eval_loss < last);
      last = r.best_eval_loss;
    }
  }

  // Evaluate the stored reconstruction against itself and against the clean slices.
  const report::RunReport self = runner::cmd_evaluate(a / "recon", a / "recon", std::nullopt, std::nullopt);
  REQUIRE(self.rows.size() == 2);
  for (const auto& row : self.rows) {
    CHECK(std::isinf(row.recon.psnr_db));
    CHECK(row.recon.ssim == doctest::Approx(1.0).epsilon(1e-12));
  }
  runner::cmd_phantom(*cfg.phantom, cfg.seed, root / "data");
  const report::RunReport scored =
      runner::cmd_evaluate(a / "recon", root / "data/clean", root / "data/noisy", root / "evaluated");
  const auto run_rows = report::rows_from_csv(report::read_text(a / "report.csv"));
  REQUIRE(run_rows.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(scored.rows[k].recon.ssim == doctest::Approx(run_rows[k].recon.ssim).epsilon(1e-5));
    CHECK(scored.rows[k].input->psnr_db == doctest::Approx(run_rows[k].input->psnr_db).epsilon(1e-5));
  }
  CHECK(fs::exists(root / "evaluated/report.csv"));
}

TEST_CASE("evaluate rejects empty and mismatched directories") {
  const fs::path root = fresh_dir("evaluate");
  fs::create_directories(root / "empty");
  config::PhantomSource p;
  p.size = 64;
  p.slices = 3;
  runner::cmd_phantom(p, 1, root / "three");
  p.slices = 2;
  runner::cmd_phantom(p, 1, root / "two");
  CHECK_THROWS_AS(runner::cmd_evaluate(root / "empty", root / "three/clean", std::nullopt, root / "out"),
                  FormatError);
  CHECK_FALSE(fs::exists(root / "out/report.csv"));
  try {
    (void)runner::cmd_evaluate(root / "two/noisy", root / "three/clean", std::nullopt, std::nullopt);
    FAIL("expected an index mismatch");
  } catch (const Error& e) {
    CHECK(contains(e.what(), "3"));
  }
}

TEST_CASE("malformed traces are rejected") {
  const fs::path d = fresh_dir("badtrace");
  report::write_text_atomic(d / "trace.json", R"({"format":"rnst-trace","version":1,"label":"x"})");
  CHECK_THROWS_AS(runner::read_trace(d / "trace.json"), FormatError);
  report::write_text_atomic(d / "t2.json", "[1,2");
  CHECK_THROWS_AS(runner::cmd_trace_plot(d / "t2.json", d / "plots"), FormatError);
}

TEST_CASE("backbone checksum pinning") {
  config::BackboneRef ref{test::weights_path(), std::string(64, '0'), {}};
  CHECK_THROWS_AS(runner::load_backbone(ref), ManifestError);
  ref.sha256 = features::sha256_file(test::weights_path());
  CHECK(runner::load_backbone(ref).checksum() == ref.sha256);
  CHECK_THROWS_AS(runner::load_backbone({test::scratch() / "none.rnstw", "", {}}), ManifestError);
}

TEST_CASE("command-line front end") {
  const fs::path root = fresh_dir("cli");
  const fs::path log = root / "log.txt";

  CHECK(run_cli("phantom --out " + (root / "ph").string() + " --size 64 --slices 2", log) == 0);
  CHECK(fs::exists(root / "ph/noisy/phantom_0002.pfi"));

  CHECK(run_cli("reconstruct --preset paper-test1 --print-config", log) == 0);
  CHECK(config::from_json(report::read_text(log)) == config::preset("paper-test1"));

  report::write_text_atomic(root / "typo.json", R"({"schema_version":1,"preset":"paper-test1","rnst":{"lamda":0.3}})");
  CHECK(run_cli("reconstruct --config " + (root / "typo.json").string(), log) == 2);
  CHECK(contains(report::read_text(log), "\"type\":\"ConfigError\""));
  CHECK(contains(report::read_text(log), "rnst.lamda"));

  CHECK(run_cli("reconstruct --preset paper-test9", log) != 0);

  ::setenv("RNST_WEIGHTS_DIR", (root / "cache").string().c_str(), 1);
  CHECK(run_cli("reconstruct --preset phantom-default --out " + (root / "r").string(), log) == 2);
  CHECK(contains(report::read_text(log), "ManifestError"));
  CHECK(contains(report::read_text(log), "fetch-weights"));

  CHECK(run_cli("fetch-weights --from " + test::weights_path().string(), log) == 0);
  CHECK(contains(report::read_text(log), features::sha256_file(test::weights_path())));
  CHECK(fs::exists(root / "cache/vgg16.rnstw"));
  CHECK(run_cli("fetch-weights --synthetic --seed 2024", log) == 2);
  CHECK(run_cli("fetch-weights --synthetic --seed 2024 --force --dest " + (root / "syn.rnstw").string(), log) == 0);
  CHECK(features::sha256_file(root / "syn.rnstw") == features::sha256_file(test::weights_path()));
  CHECK(run_cli("fetch-weights --url http://127.0.0.1:9/w.rnstw", log) == 2);
  ::unsetenv("RNST_WEIGHTS_DIR");

  CHECK(run_cli("evaluate --recon " + (root / "ph/clean").string() + " --reference " + (root / "ph/clean").string(),
                log) == 0);
  CHECK(contains(report::read_text(log), "inf"));
}

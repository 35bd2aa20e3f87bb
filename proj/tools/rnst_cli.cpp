// rnst: command-line front end for phantom generation, reconstruction runs,
// evaluation tables, trace plots and backbone weight management.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fetch.hpp"
#include "rnst/config.hpp"
#include "rnst/errors.hpp"
#include "rnst/report.hpp"
#include "rnst/runner.hpp"

namespace fs = std::filesystem;
using namespace rnst;

namespace {

int fail(const std::string& type, const std::string& message) {
  nlohmann::json j{{"event", "error"}, {"type", type}, {"message", message}};
  std::cerr << j.dump() << std::endl;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regularization by neural style transfer: reconstruction and evaluation tools"};
  app.require_subcommand(1);

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "Run a reconstruction from a config or preset");
  std::string rec_config, rec_preset;
  std::optional<std::string> rec_out, rec_weights;
  std::optional<int> rec_workers;
  std::optional<std::uint64_t> rec_seed;
  bool rec_print = false;
  rec->add_option("--config", rec_config, "JSON run config")->check(CLI::ExistingFile);
  rec->add_option("--preset", rec_preset, "Base preset")
      ->check(CLI::IsMember(config::preset_names()));
  rec->add_option("--out", rec_out, "Output directory (overrides the config)");
  rec->add_option("--workers", rec_workers, "Slices reconstructed in parallel")->check(CLI::PositiveNumber);
  rec->add_option("--seed", rec_seed, "Run seed (phantom and corruption noise)");
  rec->add_option("--weights", rec_weights, "Weights file (overrides the config and cache)");
  rec->add_flag("--print-config", rec_print, "Print the effective config and exit");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a reconstruction directory against references");
  std::string ev_recon, ev_ref;
  std::optional<std::string> ev_input, ev_out;
  ev->add_option("--recon", ev_recon, "Reconstructed slices")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--reference", ev_ref, "Reference slices")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--input", ev_input, "Input slices, for the *_in columns")->check(CLI::ExistingDirectory);
  ev->add_option("--out", ev_out, "Directory for report.{csv,txt,json}");

  // phantom
  auto* ph = app.add_subcommand("phantom", "Write a phantom dataset (clean/, noisy/, guidance/)");
  std::string ph_out, ph_preset = "phantom-default", ph_format = "pfi";
  std::optional<int> ph_size, ph_slices, ph_first;
  std::optional<double> ph_gamma, ph_sigma;
  std::uint64_t ph_seed = 1;
  ph->add_option("--out", ph_out, "Output directory")->required();
  ph->add_option("--preset", ph_preset, "Preset supplying the phantom defaults")
      ->check(CLI::IsMember(config::preset_names()));
  ph->add_option("--size", ph_size, "Side length in pixels (>= 64)");
  ph->add_option("--slices", ph_slices, "Number of slices");
  ph->add_option("--first-index", ph_first, "Index of the first slice");
  ph->add_option("--gamma", ph_gamma, "Low-field contrast exponent");
  ph->add_option("--sigma", ph_sigma, "AWGN standard deviation (intensity units)");
  ph->add_option("--seed", ph_seed, "Run seed");
  ph->add_option("--format", ph_format, "pfi or png")->check(CLI::IsMember({"pfi", "png"}));

  // trace-plot
  auto* tp = app.add_subcommand("trace-plot", "Curves and error maps from a reconstruction trace");
  std::string tp_trace;
  std::optional<std::string> tp_out;
  tp->add_option("trace", tp_trace, "traces/<label>_NNNN/trace.json")->required()->check(CLI::ExistingFile);
  tp->add_option("--out", tp_out, "Output directory (default: <trace dir>/plots)");

  // fetch-weights
  auto* fw = app.add_subcommand("fetch-weights", "Install and verify backbone weights");
  FetchOptions fopts;
  std::string fw_dest, fw_from;
  fw->add_option("--url", fopts.url, "Download URL of an RNSTWTS1 container");
  fw->add_option("--from", fw_from, "Local RNSTWTS1 container to install")->check(CLI::ExistingFile);
  fw->add_flag("--synthetic", fopts.synthetic, "Generate the deterministic synthetic trunk");
  fw->add_option("--seed", fopts.seed, "Seed for --synthetic");
  fw->add_option("--sha256", fopts.sha256, "Expected SHA-256 (required with --url)");
  fw->add_option("--dest", fw_dest, "Destination (default: <cache dir>/vgg16.rnstw)");
  fw->add_flag("--force", fopts.force, "Replace an existing file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rec) {
      if (rec_config.empty() && rec_preset.empty()) {
        return fail("UsageError", "reconstruct needs --config and/or --preset");
      }
      config::RunConfig cfg =
          rec_config.empty() ? config::preset(rec_preset) : config::load(rec_config, rec_preset);
      if (rec_out) cfg.output_dir = *rec_out;
      if (rec_workers) cfg.workers = *rec_workers;
      if (rec_seed) cfg.seed = *rec_seed;
      if (rec_weights) cfg.backbone.path = *rec_weights;
      cfg.validate();
      if (rec_print) {
        std::cout << config::to_json(cfg);
        return 0;
      }
      const features::Backbone bb = runner::load_backbone(cfg.backbone);
      return runner::cmd_reconstruct(cfg, bb, std::cerr);
    }
    if (*ev) {
      const auto opt_path = [](const std::optional<std::string>& s) -> std::optional<fs::path> {
        if (s) return fs::path(*s);
        return std::nullopt;
      };
      const report::RunReport r = runner::cmd_evaluate(ev_recon, ev_ref, opt_path(ev_input), opt_path(ev_out));
      std::cout << report::to_text(r);
      return 0;
    }
    if (*ph) {
      config::PhantomSource p = config::preset(ph_preset).phantom.value();
      if (ph_size) p.size = *ph_size;
      if (ph_slices) p.slices = *ph_slices;
      if (ph_first) p.first_index = *ph_first;
      if (ph_gamma) p.contrast_gamma = *ph_gamma;
      if (ph_sigma) p.noise_sigma = *ph_sigma;
      config::RunConfig check;
      check.phantom = p;
      check.validate();
      runner::cmd_phantom(p, ph_seed, ph_out, ph_format);
      std::cout << "wrote " << p.slices << " phantom slice(s) to " << ph_out << "\n";
      return 0;
    }
    if (*tp) {
      const fs::path out = tp_out ? fs::path(*tp_out) : fs::path(tp_trace).parent_path() / "plots";
      runner::cmd_trace_plot(tp_trace, out);
      std::cout << "wrote trace plots to " << out.string() << "\n";
      return 0;
    }
    if (*fw) {
      fopts.from_file = fw_from;
      fopts.dest = fw_dest.empty() ? config::weights_cache_dir() / config::kWeightsFileName : fs::path(fw_dest);
      const std::string sum = fetch_weights(fopts);
      std::cout << sum << "  " << fopts.dest.string() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    return fail("ConfigError", e.what());
  } catch (const ManifestError& e) {
    return fail("ManifestError", e.what());
  } catch (const FormatError& e) {
    return fail("FormatError", e.what());
  } catch (const Error& e) {
    return fail("Error", e.what());
  } catch (const std::exception& e) {
    return fail("InternalError", e.what());
  }
  return 0;
}

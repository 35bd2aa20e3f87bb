#include "rnst/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <regex>
#include <thread>

#include <json.hpp>

#include "rnst/dataio.hpp"
#include "rnst/errors.hpp"
#include "rnst/phantom.hpp"
#include "rnst/plot.hpp"
#include "rnst/weights.hpp"

namespace rnst::runner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kCorruptionStream = 0xC0FFEE0DDBA11ULL;
const std::string kPhantomLabel = "phantom";

json number_or_token(double v) {
  if (std::isfinite(v)) return v;
  return report::format_value(v);
}

double number_from(const json& v, const std::string& what) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return report::parse_value(v.get<std::string>());
  throw FormatError("trace field '" + what + "' is not a number");
}

std::string stem_of(const std::string& label, int index) {
  char digits[16];
  std::snprintf(digits, sizeof digits, "%04d", index);
  return label + "_" + digits;
}

dataio::SliceSet load_source(const config::SliceSource& src) {
  if (fs::is_directory(src.path)) return dataio::load_slice_set(src.path, src.label);
  if (!fs::exists(src.path)) throw FormatError("slice source does not exist: " + src.path.string());
  dataio::SliceSet set;
  static const std::regex pattern(R"((.+)_(\d{4}))");
  std::smatch m;
  const std::string stem = src.path.stem().string();
  if (std::regex_match(stem, m, pattern)) {
    set.label = m[1].str();
    set.indices.push_back(std::stoi(m[2].str()));
  } else {
    set.label = stem;
    set.indices.push_back(0);
  }
  if (!src.label.empty()) set.label = src.label;
  set.slices.push_back(dataio::load_slice(src.path));
  return set;
}

PhantomPair phantom_slice(const config::PhantomSource& p, std::uint64_t seed, int index) {
  PhantomSpec spec;
  spec.size = p.size;
  spec.contrast_gamma = p.contrast_gamma;
  spec.noise = NoiseSpec{p.noise_sigma, config::phantom_noise_seed(seed, index)};
  spec.variant = index - p.first_index;
  return make_phantom_pair(spec);
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const NonFiniteLoss*>(&e)) return "NonFiniteLoss";
  if (dynamic_cast<const ExternalProcessError*>(&e)) return "ExternalProcessError";
  if (dynamic_cast<const ManifestError*>(&e)) return "ManifestError";
  if (dynamic_cast<const ShapeMismatch*>(&e)) return "ShapeMismatch";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const InvalidArgument*>(&e)) return "InvalidArgument";
  return "Error";
}

json error_json(const SliceJob& job, const std::exception& e) {
  json j{{"event", "slice_failed"},
         {"label", job.label},
         {"index", job.index},
         {"type", error_type(e)},
         {"message", e.what()}};
  if (const auto* nf = dynamic_cast<const NonFiniteLoss*>(&e)) {
    j["outer_iteration"] = nf->outer_iteration() ? json(*nf->outer_iteration()) : json(nullptr);
    j["step"] = nf->step() ? json(*nf->step()) : json(nullptr);
  }
  if (const auto* ext = dynamic_cast<const ExternalProcessError*>(&e)) j["transcript"] = ext->transcript();
  if (const auto* man = dynamic_cast<const ManifestError*>(&e)) j["layer"] = man->layer();
  return j;
}

json record_json(const IterationRecord& rec) {
  json j{{"outer_index", rec.outer_index},
         {"baseline_eval_loss", number_or_token(rec.baseline_eval_loss)},
         {"best_eval_loss", number_or_token(rec.best_eval_loss)},
         {"accepted", rec.accepted},
         {"chosen_mu_tilde", rec.chosen_mu_tilde},
         {"chosen_line_index", rec.chosen_line_index},
         {"chosen_style_level", rec.chosen_style_level},
         {"candidates_scored", rec.candidates_scored},
         {"candidates_skipped", rec.candidates_skipped},
         {"notes", rec.notes}};
  if (rec.metrics_vs_reference) {
    j["psnr"] = number_or_token(rec.metrics_vs_reference->psnr_db);
    j["ssim"] = number_or_token(rec.metrics_vs_reference->ssim);
  } else {
    j["psnr"] = nullptr;
    j["ssim"] = nullptr;
  }
  return j;
}

class LogSink {
 public:
  explicit LogSink(std::ostream& out) : out_(out) {}
  void line(const json& j) {
    std::lock_guard lock(mu_);
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ostream& out_;
  std::mutex mu_;
};

struct SliceOutcome {
  bool ok = false;
  report::SliceRow row;
  json error;
};

SliceOutcome run_slice(const SliceJob& job, const config::RunConfig& cfg,
                       const features::Backbone& backbone, const std::string& config_json,
                       const fs::path& out, LogSink& log) {
  SliceOutcome outcome;
  const auto t0 = std::chrono::steady_clock::now();
  const std::string stem = stem_of(job.label, job.index);
  try {
    log.line({{"event", "slice_start"}, {"label", job.label}, {"index", job.index},
              {"guidance_index", job.guidance_index}});
    auto observer = [&](const IterationRecord& rec) {
      json j{{"event", "iteration"},
             {"label", job.label},
             {"index", job.index},
             {"k", rec.outer_index},
             {"loss_star", number_or_token(rec.best_eval_loss)},
             {"baseline", number_or_token(rec.baseline_eval_loss)},
             {"accepted", rec.accepted},
             {"i", rec.chosen_line_index},
             {"j", rec.chosen_style_level},
             {"mu_tilde", rec.chosen_mu_tilde},
             {"scored", rec.candidates_scored},
             {"skipped", rec.candidates_skipped}};
      if (rec.metrics_vs_reference) {
        j["psnr"] = number_or_token(rec.metrics_vs_reference->psnr_db);
        j["ssim"] = number_or_token(rec.metrics_vs_reference->ssim);
      }
      log.line(j);
    };
    const ReconstructionResult result =
        reconstruct(job.content, job.guidance, backbone, cfg.rnst, job.reference, observer);

    dataio::save_slice_atomic(result.image, out / "recon" / (stem + ".pfi"));
    dataio::save_slice_atomic(result.image, out / "recon_png" / (stem + ".png"));

    const fs::path tdir = out / "traces" / stem;
    fs::create_directories(tdir);
    dataio::save_slice_atomic(job.content, tdir / "initial.pfi");
    if (job.reference) dataio::save_slice_atomic(*job.reference, tdir / "reference.pfi");
    json records = json::array();
    json iterates = json::array();
    for (std::size_t k = 0; k < result.trace.records.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "iter_%04d.pfi", result.trace.records[k].outer_index);
      dataio::save_slice_atomic(result.trace.iterates[k], tdir / name);
      records.push_back(record_json(result.trace.records[k]));
      iterates.push_back(name);
    }
    json trace{{"format", "rnst-trace"},
               {"version", 1},
               {"label", job.label},
               {"index", job.index},
               {"guidance_index", job.guidance_index},
               {"weights_sha256", backbone.checksum()},
               {"config", json::parse(config_json)},
               {"initial", "initial.pfi"},
               {"reference", job.reference ? json("reference.pfi") : json(nullptr)},
               {"iterates", iterates},
               {"records", records}};
    report::write_text_atomic(tdir / "trace.json", trace.dump(2) + "\n");

    outcome.row.label = job.label;
    outcome.row.index = job.index;
    if (job.reference) {
      outcome.row.input = metrics::evaluate(job.content, *job.reference);
      outcome.row.recon = metrics::evaluate(result.image, *job.reference);
      if (cfg.error_maps) {
        fs::create_directories(out / "error_maps");
        plot::save_error_map(plot::error_map(result.image, *job.reference),
                             out / "error_maps" / stem);
      }
    } else {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      outcome.row.recon = metrics::MetricReport{nan, nan, nan, 7};
    }
    outcome.ok = true;
  } catch (const std::exception& e) {
    outcome.error = error_json(job, e);
    log.line(outcome.error);
  }
  outcome.row.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (outcome.ok) {
    log.line({{"event", "slice_done"}, {"label", job.label}, {"index", job.index},
              {"seconds", outcome.row.wall_clock_s}});
  }
  return outcome;
}

}  // namespace

std::vector<SliceJob> build_jobs(const config::RunConfig& cfg) {
  cfg.validate();
  std::vector<SliceJob> jobs;
  if (cfg.phantom) {
    const auto& p = *cfg.phantom;
    std::optional<Image> frozen;
    if (cfg.policy.mode == dataio::GuidanceMode::frozen) {
      const int fi = *cfg.policy.frozen_index;
      if (fi < p.first_index || fi >= p.first_index + p.slices) {
        throw ConfigError("frozen guidance index " + std::to_string(fi) +
                          " is outside the phantom stack");
      }
      frozen = guidance_phantom(p.size, fi - p.first_index);
    }
    for (int idx = p.first_index; idx < p.first_index + p.slices; ++idx) {
      PhantomPair pair = phantom_slice(p, cfg.seed, idx);
      SliceJob job{kPhantomLabel, idx, idx, std::move(pair.noisy_low), std::move(pair.guidance),
                   std::move(pair.clean_high)};
      if (frozen) {
        job.guidance = *frozen;
        job.guidance_index = *cfg.policy.frozen_index;
      }
      jobs.push_back(std::move(job));
    }
  } else {
    const dataio::SliceSet content = load_source(*cfg.content);
    const dataio::SliceSet guidance = load_source(*cfg.guidance);
    std::optional<dataio::SliceSet> reference;
    if (cfg.reference) reference = load_source(*cfg.reference);
    for (auto& g : dataio::pair_guidance(content, guidance, cfg.policy)) {
      SliceJob job{content.label, g.index, g.guidance_index, std::move(g.content), std::move(g.guidance),
                   std::nullopt};
      if (reference) {
        const auto pos = reference->find(g.index);
        if (!pos) throw FormatError("reference has no slice " + std::to_string(g.index));
        job.reference = reference->slices[*pos];
      }
      jobs.push_back(std::move(job));
    }
  }
  if (cfg.noise) {
    for (SliceJob& job : jobs) {
      const NoiseSpec ns{cfg.noise->sigma,
                         config::phantom_noise_seed(cfg.seed ^ cfg.noise->seed ^ kCorruptionStream, job.index)};
      job.content = add_awgn(job.content, ns);
    }
  }
  return jobs;
}

features::Backbone load_backbone(const config::BackboneRef& ref) {
  const fs::path path = config::resolve_weights_path(ref);
  if (!fs::exists(path)) {
    throw ManifestError("backbone weights not found at " + path.string() +
                            " (run `rnst fetch-weights` or set RNST_WEIGHTS_DIR)",
                        "");
  }
  features::Backbone bb = features::Backbone::load(path, ref.options);
  if (!ref.sha256.empty() && bb.checksum() != ref.sha256) {
    throw ManifestError("weights checksum mismatch for " + path.string() + ": expected " + ref.sha256 +
                            ", found " + bb.checksum(),
                        "");
  }
  return bb;
}

int cmd_reconstruct(const config::RunConfig& cfg, const features::Backbone& backbone,
                    std::ostream& log_stream) {
  cfg.validate();
  LogSink log(log_stream);
  const std::string warning = cfg.rnst.validate();
  if (!warning.empty()) log.line({{"event", "warning"}, {"message", warning}});

  const fs::path out = cfg.output_dir;
  fs::create_directories(out / "recon");
  fs::create_directories(out / "recon_png");
  fs::create_directories(out / "traces");
  const std::string config_json = config::to_json(cfg);
  report::write_text_atomic(out / "config.json", config_json);
  report::write_text_atomic(out / "weights.sha256", backbone.checksum() + "\n");
  fs::remove(out / "errors.jsonl");

  const std::vector<SliceJob> jobs = build_jobs(cfg);
  std::vector<SliceOutcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      outcomes[k] = run_slice(jobs[k], cfg, backbone, config_json, out, log);
    }
  };
  const int n_workers = std::min<int>(cfg.workers, static_cast<int>(jobs.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  report::RunReport rep;
  rep.config_json = config_json;
  rep.weights_sha256 = backbone.checksum();
  std::string errors;
  for (const SliceOutcome& o : outcomes) {
    if (o.ok) {
      rep.rows.push_back(o.row);
    } else {
      rep.partial = true;
      rep.failures.push_back(o.error.value("label", "") + "_" + std::to_string(o.error.value("index", 0)) +
                             ": " + o.error.value("message", ""));
      errors += o.error.dump() + "\n";
    }
  }
  report::write(rep, out);
  if (!errors.empty()) report::write_text_atomic(out / "errors.jsonl", errors);
  log.line({{"event", "run_done"}, {"slices", jobs.size()}, {"failed", rep.failures.size()},
            {"output_dir", out.string()}});
  return rep.partial ? 1 : 0;
}

report::RunReport cmd_evaluate(const fs::path& recon_dir, const fs::path& reference_dir,
                               const std::optional<fs::path>& input_dir,
                               const std::optional<fs::path>& out_dir) {
  const dataio::SliceSet recon = dataio::load_slice_set(recon_dir);
  const dataio::SliceSet ref = dataio::load_slice_set(reference_dir);
  std::optional<dataio::SliceSet> input;
  if (input_dir) input = dataio::load_slice_set(*input_dir);

  auto require_same_indices = [&](const dataio::SliceSet& other, const std::string& what) {
    for (int idx : recon.indices) {
      if (!other.find(idx)) throw FormatError(what + " has no slice " + std::to_string(idx));
    }
    for (int idx : other.indices) {
      if (!recon.find(idx)) throw FormatError("reconstruction has no slice " + std::to_string(idx));
    }
  };
  require_same_indices(ref, "reference");
  if (input) require_same_indices(*input, "input");

  report::RunReport rep;
  for (std::size_t k = 0; k < recon.slices.size(); ++k) {
    const int idx = recon.indices[k];
    const Image& r = ref.slices[*ref.find(idx)];
    report::SliceRow row;
    row.label = recon.label;
    row.index = idx;
    row.recon = metrics::evaluate(recon.slices[k], r);
    if (input) row.input = metrics::evaluate(input->slices[*input->find(idx)], r);
    rep.rows.push_back(row);
  }
  if (out_dir) report::write(rep, *out_dir);
  return rep;
}

TraceData read_trace(const fs::path& trace_file) {
  json j;
  try {
    j = json::parse(report::read_text(trace_file));
  } catch (const json::exception& e) {
    throw FormatError("malformed trace " + trace_file.string() + ": " + e.what());
  }
  try {
    if (j.value("format", "") != "rnst-trace" || j.value("version", 0) != 1) {
      throw FormatError("not an rnst trace (format/version)");
    }
    TraceData t;
    t.label = j.at("label").get<std::string>();
    t.index = j.at("index").get<int>();
    t.guidance_index = j.at("guidance_index").get<int>();
    t.weights_sha256 = j.at("weights_sha256").get<std::string>();
    const fs::path base = trace_file.parent_path();
    for (const json& f : j.at("iterates")) t.iterate_files.push_back(base / f.get<std::string>());
    if (!j.at("reference").is_null()) t.reference_file = base / j.at("reference").get<std::string>();
    for (const json& r : j.at("records")) {
      IterationRecord rec;
      rec.outer_index = r.at("outer_index").get<int>();
      rec.baseline_eval_loss = number_from(r.at("baseline_eval_loss"), "baseline_eval_loss");
      rec.best_eval_loss = number_from(r.at("best_eval_loss"), "best_eval_loss");
      rec.accepted = r.at("accepted").get<bool>();
      rec.chosen_mu_tilde = r.at("chosen_mu_tilde").get<double>();
      rec.chosen_line_index = r.at("chosen_line_index").get<int>();
      rec.chosen_style_level = r.at("chosen_style_level").get<int>();
      rec.candidates_scored = r.at("candidates_scored").get<int>();
      rec.candidates_skipped = r.at("candidates_skipped").get<int>();
      rec.notes = r.at("notes").get<std::vector<std::string>>();
      if (!r.at("psnr").is_null()) {
        metrics::MetricReport m;
        m.psnr_db = number_from(r.at("psnr"), "psnr");
        m.ssim = number_from(r.at("ssim"), "ssim");
        rec.metrics_vs_reference = m;
      }
      t.records.push_back(std::move(rec));
    }
    if (t.records.size() != t.iterate_files.size()) {
      throw FormatError("trace has " + std::to_string(t.records.size()) + " records but " +
                        std::to_string(t.iterate_files.size()) + " iterates");
    }
    for (std::size_t k = 0; k < t.records.size(); ++k) {
      if (t.records[k].outer_index != static_cast<int>(k) + 1) throw FormatError("trace records out of order");
    }
    return t;
  } catch (const json::exception& e) {
    throw FormatError("malformed trace " + trace_file.string() + ": " + e.what());
  }
}

void cmd_trace_plot(const fs::path& trace_file, const fs::path& out_dir) {
  const TraceData t = read_trace(trace_file);
  fs::create_directories(out_dir);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::string curves = "iteration,accepted,baseline_eval_loss,best_eval_loss,psnr,ssim\n";
  std::string accepted = "iteration,best_eval_loss\n";
  std::vector<double> it, loss, psnr, ssim, acc_it, acc_loss;
  char buf[64];
  auto full = [&](double v) -> std::string {
    if (!std::isfinite(v)) return report::format_value(v);
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (const IterationRecord& r : t.records) {
    const double p = r.metrics_vs_reference ? r.metrics_vs_reference->psnr_db : nan;
    const double s = r.metrics_vs_reference ? r.metrics_vs_reference->ssim : nan;
    curves += std::to_string(r.outer_index) + "," + (r.accepted ? "1" : "0") + "," +
              full(r.baseline_eval_loss) + "," + full(r.best_eval_loss) + "," + full(p) + "," +
              full(s) + "\n";
    it.push_back(r.outer_index);
    loss.push_back(r.best_eval_loss);
    psnr.push_back(p);
    ssim.push_back(s);
    if (r.accepted) {
      accepted += std::to_string(r.outer_index) + "," + full(r.best_eval_loss) + "\n";
      acc_it.push_back(r.outer_index);
      acc_loss.push_back(r.best_eval_loss);
    }
  }
  report::write_text_atomic(out_dir / "curves.csv", curves);
  report::write_text_atomic(out_dir / "accepted_loss.csv", accepted);
  dataio::save_png(plot::line_chart(it, loss), out_dir / "loss.png", 8);
  dataio::save_png(plot::line_chart(it, psnr), out_dir / "psnr.png", 8);
  dataio::save_png(plot::line_chart(it, ssim), out_dir / "ssim.png", 8);

  if (t.reference_file) {
    const Image ref = dataio::load_slice(*t.reference_file);
    for (std::size_t k = 0; k < t.iterate_files.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "error_iter_%04d", t.records[k].outer_index);
      plot::save_error_map(plot::error_map(dataio::load_slice(t.iterate_files[k]), ref), out_dir / name);
    }
  }
}

void cmd_phantom(const config::PhantomSource& p, std::uint64_t seed, const fs::path& out_dir,
                 const std::string& ext) {
  if (ext != "pfi" && ext != "png") throw InvalidArgument("phantom output format must be pfi or png");
  dataio::SliceSet clean{kPhantomLabel, {}, {}}, noisy{kPhantomLabel, {}, {}}, guid{kPhantomLabel, {}, {}};
  for (int idx = p.first_index; idx < p.first_index + p.slices; ++idx) {
    PhantomPair pair = phantom_slice(p, seed, idx);
    clean.slices.push_back(std::move(pair.clean_high));
    noisy.slices.push_back(std::move(pair.noisy_low));
    guid.slices.push_back(std::move(pair.guidance));
    clean.indices.push_back(idx);
    noisy.indices.push_back(idx);
    guid.indices.push_back(idx);
  }
  dataio::save_slice_set(clean, out_dir / "clean", ext);
  dataio::save_slice_set(noisy, out_dir / "noisy", ext);
  dataio::save_slice_set(guid, out_dir / "guidance", ext);
}

}  // namespace rnst::runner

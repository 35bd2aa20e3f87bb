#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rnst/config.hpp"
#include "rnst/features.hpp"
#include "rnst/report.hpp"
#include "rnst/rnst.hpp"

namespace rnst::runner {

/// One reconstruction unit: a content slice, its guidance and (optionally)
/// the reference it is scored against.
struct SliceJob {
  std::string label;
  int index = 0;
  int guidance_index = 0;
  Image content;
  Image guidance;
  std::optional<Image> reference;
};

/// Materialises the slices a config describes: generates phantoms, or loads
/// directories, pairs guidance per the policy, matches references by index
/// and applies the optional pre-corruption. Ordered by slice index.
std::vector<SliceJob> build_jobs(const config::RunConfig& cfg);

/// Loads the weights the config points at with its options, verifying the
/// pinned checksum when one is configured.
features::Backbone load_backbone(const config::BackboneRef& ref);

/// Run directory layout:
///   config.json, weights.sha256, report.{csv,txt,json}, timing.csv,
///   errors.jsonl (only on failure),
///   recon/<label>_NNNN.pfi, recon_png/<label>_NNNN.png,
///   error_maps/<label>_NNNN.{pfi,png} (with a reference),
///   traces/<label>_NNNN/{trace.json, initial.pfi, reference.pfi, iter_KKKK.pfi}.
/// Per-iteration progress goes to `log` as one JSON object per line.
/// Returns 0 on success, 1 when any slice failed (the report is then
/// flagged partial).
int cmd_reconstruct(const config::RunConfig& cfg, const features::Backbone& backbone,
                    std::ostream& log);

/// Scores every slice of `recon_dir` against the slice with the same index
/// in `reference_dir` (and `input_dir` for the input columns, when given).
/// Index sets must match. Writes the report files to `out_dir` when set.
report::RunReport cmd_evaluate(const std::filesystem::path& recon_dir,
                               const std::filesystem::path& reference_dir,
                               const std::optional<std::filesystem::path>& input_dir,
                               const std::optional<std::filesystem::path>& out_dir);

/// Reads traces/<...>/trace.json and writes into `out_dir`: curves.csv
/// (iteration, accepted, baseline_eval_loss, best_eval_loss, psnr, ssim),
/// accepted_loss.csv, loss.png, psnr.png, ssim.png and, when the trace has
/// a reference, error_iter_KKKK.{pfi,png} for every iterate.
void cmd_trace_plot(const std::filesystem::path& trace_file, const std::filesystem::path& out_dir);

/// Writes clean/, noisy/ and guidance/ slice directories for a phantom stack
/// (the same slices a phantom-mode run reconstructs).
void cmd_phantom(const config::PhantomSource& phantom, std::uint64_t seed,
                 const std::filesystem::path& out_dir, const std::string& ext = "pfi");

/// Parsed trace.json.
struct TraceData {
  std::string label;
  int index = 0;
  int guidance_index = 0;
  std::string weights_sha256;
  std::vector<IterationRecord> records;
  std::vector<std::filesystem::path> iterate_files;  // absolute
  std::optional<std::filesystem::path> reference_file;
};

/// Throws FormatError on a malformed trace.
TraceData read_trace(const std::filesystem::path& trace_file);

}  // namespace rnst::runner

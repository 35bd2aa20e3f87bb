#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rnst/metrics.hpp"

namespace rnst::report {

struct SliceRow {
  std::string label;
  int index = 0;
  /// Input vs reference; absent when the run had no input images to score.
  std::optional<metrics::MetricReport> input;
  metrics::MetricReport recon;
  double wall_clock_s = 0.0;
};

struct Means {
  double psnr_in = 0.0;
  double ssim_in = 0.0;
  double psnr_recon = 0.0;
  double ssim_recon = 0.0;
};

struct RunReport {
  std::vector<SliceRow> rows;  // slice-index order
  std::string config_json;     // exact snapshot
  std::string weights_sha256;  // empty for metric-only reports
  bool partial = false;        // some slices failed
  std::vector<std::string> failures;

  /// Arithmetic means of the per-slice columns. Infinite PSNRs make the
  /// PSNR mean infinite; missing input metrics make the input means NaN.
  Means means() const;
};

/// "inf", "-inf" or "nan" for non-finite values, else fixed-point with six
/// decimals.
std::string format_value(double v);
double parse_value(const std::string& s);

/// Header "label,index,psnr_in,ssim_in,psnr_recon,ssim_recon", one row per
/// slice, then nothing else. Missing input metrics are written as "nan".
std::string to_csv(const RunReport& r);
std::vector<SliceRow> rows_from_csv(const std::string& text);

/// Aligned table with the means underneath.
std::string to_text(const RunReport& r);

/// Rows, means, config snapshot and weights checksum. Deterministic: no
/// timing information.
std::string to_json(const RunReport& r);

/// Per-slice wall clock as CSV (label,index,seconds).
std::string timing_csv(const RunReport& r);

/// Writes report.csv, report.txt, report.json and timing.csv into `dir`,
/// each atomically.
void write(const RunReport& r, const std::filesystem::path& dir);

/// Writes `text` to a sibling temporary file and renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace rnst::report

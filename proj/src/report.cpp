#include "rnst/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "rnst/errors.hpp"

namespace rnst::report {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_token(double v) {
  if (std::isfinite(v)) return v;
  return format_value(v);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

Means RunReport::means() const {
  Means m;
  if (rows.empty()) return {kNaN, kNaN, kNaN, kNaN};
  for (const SliceRow& row : rows) {
    m.psnr_in += row.input ? row.input->psnr_db : kNaN;
    m.ssim_in += row.input ? row.input->ssim : kNaN;
    m.psnr_recon += row.recon.psnr_db;
    m.ssim_recon += row.recon.ssim;
  }
  const double n = static_cast<double>(rows.size());
  return {m.psnr_in / n, m.ssim_in / n, m.psnr_recon / n, m.ssim_recon / n};
}

std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double parse_value(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return kNaN;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw FormatError("not a number: '" + s + "'");
  return v;
}

std::string to_csv(const RunReport& r) {
  std::ostringstream out;
  out << "label,index,psnr_in,ssim_in,psnr_recon,ssim_recon\n";
  for (const SliceRow& row : r.rows) {
    out << row.label << ',' << row.index << ','
        << format_value(row.input ? row.input->psnr_db : kNaN) << ','
        << format_value(row.input ? row.input->ssim : kNaN) << ','
        << format_value(row.recon.psnr_db) << ',' << format_value(row.recon.ssim) << '\n';
  }
  return out.str();
}

std::vector<SliceRow> rows_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "label,index,psnr_in,ssim_in,psnr_recon,ssim_recon")
    throw FormatError("report CSV header is missing or wrong");
  std::vector<SliceRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw FormatError("report CSV row has " + std::to_string(f.size()) + " fields");
    SliceRow row;
    row.label = f[0];
    row.index = static_cast<int>(parse_value(f[1]));
    const double pin = parse_value(f[2]);
    const double sin = parse_value(f[3]);
    if (!(std::isnan(pin) && std::isnan(sin))) row.input = metrics::MetricReport{pin, sin, 1.0, 7};
    row.recon.psnr_db = parse_value(f[4]);
    row.recon.ssim = parse_value(f[5]);
    rows.push_back(row);
  }
  return rows;
}

std::string to_text(const RunReport& r) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %6s %12s %10s %12s %10s\n", "label", "index", "PSNR in",
                "SSIM in", "PSNR recon", "SSIM recon");
  out << buf;
  for (const SliceRow& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-12s %6d %12s %10s %12s %10s\n", row.label.c_str(), row.index,
                  format_value(row.input ? row.input->psnr_db : kNaN).c_str(),
                  format_value(row.input ? row.input->ssim : kNaN).c_str(),
                  format_value(row.recon.psnr_db).c_str(), format_value(row.recon.ssim).c_str());
    out << buf;
  }
  const Means m = r.means();
  std::snprintf(buf, sizeof buf, "%-12s %6s %12s %10s %12s %10s\n", "mean", "",
                format_value(m.psnr_in).c_str(), format_value(m.ssim_in).c_str(),
                format_value(m.psnr_recon).c_str(), format_value(m.ssim_recon).c_str());
  out << buf;
  if (!r.weights_sha256.empty()) out << "\nweights sha256: " << r.weights_sha256 << "\n";
  if (r.partial) {
    out << "\nPARTIAL RESULT: " << r.failures.size() << " slice(s) failed\n";
    for (const auto& f : r.failures) out << "  " << f << "\n";
  }
  return out.str();
}

std::string to_json(const RunReport& r) {
  json rows = json::array();
  for (const SliceRow& row : r.rows) {
    json j{{"label", row.label},
           {"index", row.index},
           {"psnr_recon", number_or_token(row.recon.psnr_db)},
           {"ssim_recon", number_or_token(row.recon.ssim)},
           {"dynamic_range_L", row.recon.dynamic_range_L},
           {"window", row.recon.window}};
    j["psnr_in"] = row.input ? number_or_token(row.input->psnr_db) : json(nullptr);
    j["ssim_in"] = row.input ? number_or_token(row.input->ssim) : json(nullptr);
    rows.push_back(std::move(j));
  }
  const Means m = r.means();
  json out{{"rows", rows},
           {"means",
            {{"psnr_in", number_or_token(m.psnr_in)},
             {"ssim_in", number_or_token(m.ssim_in)},
             {"psnr_recon", number_or_token(m.psnr_recon)},
             {"ssim_recon", number_or_token(m.ssim_recon)}}},
           {"weights_sha256", r.weights_sha256},
           {"partial", r.partial},
           {"failures", r.failures}};
  if (!r.config_json.empty()) {
    out["config"] = json::parse(r.config_json);
  } else {
    out["config"] = nullptr;
  }
  return out.dump(2) + "\n";
}

std::string timing_csv(const RunReport& r) {
  std::ostringstream out;
  out << "label,index,seconds\n";
  char buf[64];
  for (const SliceRow& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.3f", row.wall_clock_s);
    out << row.label << ',' << row.index << ',' << buf << '\n';
  }
  return out.str();
}

void write(const RunReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_atomic(dir / "report.csv", to_csv(r));
  write_text_atomic(dir / "report.txt", to_text(r));
  write_text_atomic(dir / "report.json", to_json(r));
  write_text_atomic(dir / "timing.csv", timing_csv(r));
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.parent_path() / ("." + path.filename().string() + ".part");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw FormatError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rnst::report

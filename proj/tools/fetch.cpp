#include "fetch.hpp"

#include <fstream>
#include <iostream>
#include <regex>

#include <httplib.h>

#include "rnst/errors.hpp"
#include "rnst/weights.hpp"

namespace fs = std::filesystem;

namespace {

void download(const std::string& url, const fs::path& to) {
  static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) throw rnst::InvalidArgument("unsupported URL: " + url);
  httplib::Client client(m[1].str());
  client.set_follow_location(true);
  client.set_connection_timeout(30);
  client.set_read_timeout(300);
  std::ofstream out(to, std::ios::binary | std::ios::trunc);
  if (!out) throw rnst::FormatError("cannot write " + to.string());
  const std::string path = m[2].matched ? m[2].str() : "/";
  auto res = client.Get(path, [&](const char* data, std::size_t n) {
    out.write(data, static_cast<std::streamsize>(n));
    return static_cast<bool>(out);
  });
  if (!res) throw rnst::Error("download failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw rnst::Error("download failed: HTTP " + std::to_string(res->status));
  out.close();
  if (!out) throw rnst::FormatError("failed writing " + to.string());
}

}  // namespace

std::string fetch_weights(const FetchOptions& opts) {
  const int sources = (!opts.url.empty()) + (!opts.from_file.empty()) + opts.synthetic;
  if (sources != 1) throw rnst::InvalidArgument("choose exactly one of --url, --from, --synthetic");
  if (!opts.url.empty() && opts.sha256.empty())
    throw rnst::InvalidArgument("--url requires --sha256 so the download can be verified");
  if (fs::exists(opts.dest) && !opts.force) {
    throw rnst::InvalidArgument(opts.dest.string() + " already exists (use --force to replace it)");
  }
  if (opts.dest.has_parent_path()) fs::create_directories(opts.dest.parent_path());
  const fs::path tmp = opts.dest.parent_path() / ("." + opts.dest.filename().string() + ".part");

  try {
    if (!opts.url.empty()) {
      download(opts.url, tmp);
    } else if (!opts.from_file.empty()) {
      fs::copy_file(opts.from_file, tmp, fs::copy_options::overwrite_existing);
    } else {
      rnst::features::write_weights(tmp, rnst::features::synthetic_vgg16(opts.seed));
    }
    const std::string sum = rnst::features::sha256_file(tmp);
    if (!opts.sha256.empty() && sum != opts.sha256) {
      throw rnst::ManifestError("checksum mismatch: expected " + opts.sha256 + ", got " + sum, "");
    }
    (void)rnst::features::read_weights(tmp);
    fs::rename(tmp, opts.dest);
    return sum;
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

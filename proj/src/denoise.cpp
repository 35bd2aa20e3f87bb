#include "rnst/denoise.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <vector>

#include "rnst/dataio.hpp"
#include "rnst/errors.hpp"

namespace rnst::denoise {
namespace {

int reflect(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

// Reflect-padded copy, `pad` pixels on each side.
Image::Pixels pad_reflect(const Image::Pixels& p, int pad) {
  const int h = static_cast<int>(p.rows());
  const int w = static_cast<int>(p.cols());
  Image::Pixels out(h + 2 * pad, w + 2 * pad);
  for (int r = 0; r < h + 2 * pad; ++r) {
    const int sr = reflect(r - pad, h);
    for (int c = 0; c < w + 2 * pad; ++c) out(r, c) = p(sr, reflect(c - pad, w));
  }
  return out;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') {
      out += "'\\''";
    } else {
      out += ch;
    }
  }
  return out + "'";
}

std::mutex& program_mutex(const std::string& program) {
  static std::mutex registry_guard;
  static std::map<std::string, std::mutex> registry;
  std::lock_guard lock(registry_guard);
  return registry[program];
}

}  // namespace

const char* to_string(DenoiserKind kind) {
  switch (kind) {
    case DenoiserKind::identity: return "identity";
    case DenoiserKind::gaussian: return "gaussian";
    case DenoiserKind::nlm: return "nlm";
    case DenoiserKind::external: return "external";
  }
  return "?";
}

DenoiserKind denoiser_kind_from_string(const std::string& s) {
  if (s == "identity") return DenoiserKind::identity;
  if (s == "gaussian") return DenoiserKind::gaussian;
  if (s == "nlm") return DenoiserKind::nlm;
  if (s == "external") return DenoiserKind::external;
  throw InvalidArgument("unknown denoiser kind '" + s + "'");
}

NlmParams NlmParams::for_sigma(double sigma) {
  NlmParams p;
  p.noise_sigma = sigma;
  p.filtering_h = 0.8 * sigma;
  return p;
}

void DenoiserSpec::validate() const {
  switch (kind) {
    case DenoiserKind::identity: break;
    case DenoiserKind::gaussian:
      if (!(gaussian.sigma_blur > 0.0)) throw InvalidArgument("gaussian sigma_blur must be > 0");
      break;
    case DenoiserKind::nlm:
      if (nlm.patch_size <= 0 || nlm.patch_size % 2 == 0 || nlm.search_window <= 0 ||
          nlm.search_window % 2 == 0) {
        throw InvalidArgument("nlm patch_size and search_window must be positive odd integers");
      }
      if (nlm.patch_size >= nlm.search_window) {
        throw InvalidArgument("nlm patch_size must be smaller than search_window");
      }
      if (!(nlm.filtering_h > 0.0)) throw InvalidArgument("nlm filtering_h must be > 0");
      if (!(nlm.noise_sigma > 0.0)) throw InvalidArgument("nlm noise_sigma must be > 0");
      break;
    case DenoiserKind::external:
      if (external.program.empty()) throw InvalidArgument("external denoiser needs a program");
      break;
  }
}

Image gaussian_blur(const Image& img, const GaussianParams& params) {
  if (!(params.sigma_blur > 0.0)) throw InvalidArgument("gaussian sigma_blur must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * params.sigma_blur));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (params.sigma_blur * params.sigma_blur));
    sum += kernel[k + radius];
  }
  for (double& k : kernel) k /= sum;

  // Accumulate neighbour-minus-centre differences so flat regions stay exact.
  const int h = img.height();
  const int w = img.width();
  const Image::Pixels& src = img.pixels();
  Image::Pixels rows(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * (src(r, reflect(c + k, w)) - src(r, c));
      }
      rows(r, c) = src(r, c) + acc;
    }
  }
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * (rows(reflect(r + k, h), c) - rows(r, c));
      }
      out(r, c) = rows(r, c) + acc;
    }
  }
  return clip01(out);
}

Image nlm(const Image& img, const NlmParams& params) {
  DenoiserSpec check;
  check.kind = DenoiserKind::nlm;
  check.nlm = params;
  check.validate();

  const int h = img.height();
  const int w = img.width();
  const int half_patch = params.patch_size / 2;
  const int half_search = params.search_window / 2;
  const int pad = half_patch + half_search;
  const Image::Pixels padded = pad_reflect(img.pixels(), pad);
  const double patch_area = double(params.patch_size) * params.patch_size;
  const double offset_sigma = 2.0 * params.noise_sigma * params.noise_sigma;
  const double inv_h2 = 1.0 / (params.filtering_h * params.filtering_h);

  // Region of centre pixels plus their patch halo, in padded coordinates.
  const int rh = h + 2 * half_patch;
  const int rw = w + 2 * half_patch;
  const int r0 = half_search;
  Eigen::ArrayXXd numerator = Eigen::ArrayXXd::Zero(h, w);
  Eigen::ArrayXXd denominator = Eigen::ArrayXXd::Zero(h, w);
  Eigen::ArrayXXd integral(rh + 1, rw + 1);

  for (int dy = -half_search; dy <= half_search; ++dy) {
    for (int dx = -half_search; dx <= half_search; ++dx) {
      integral.row(0).setZero();
      integral.col(0).setZero();
      for (int y = 0; y < rh; ++y) {
        double row_sum = 0.0;
        for (int x = 0; x < rw; ++x) {
          const double d = padded(r0 + y, r0 + x) - padded(r0 + y + dy, r0 + x + dx);
          row_sum += d * d;
          integral(y + 1, x + 1) = integral(y, x + 1) + row_sum;
        }
      }
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int y1 = y + params.patch_size;
          const int x1 = x + params.patch_size;
          const double ssd = integral(y1, x1) - integral(y, x1) - integral(y1, x) + integral(y, x);
          const double dist = std::max(ssd / patch_area - offset_sigma, 0.0);
          const double weight = std::exp(-dist * inv_h2);
          const double centre = padded(pad + y, pad + x);
          const double other = padded(pad + y + dy, pad + x + dx);
          numerator(y, x) += weight * (other - centre);
          denominator(y, x) += weight;
        }
      }
    }
  }

  Image out = img;
  out.pixels() += (numerator / denominator).matrix().array();
  return clip01(out);
}

Image run_external(const Image& img, const ExternalCommand& cmd) {
  if (cmd.program.empty()) throw InvalidArgument("external denoiser needs a program");

  std::string tmpl = (std::filesystem::temp_directory_path() / "rnst-denoise-XXXXXX").string();
  if (mkdtemp(tmpl.data()) == nullptr) throw Error("cannot create temporary directory");
  const std::filesystem::path dir = tmpl;
  const auto input = dir / "input.pfi";
  const auto output = dir / "output.pfi";
  const auto log = dir / "transcript.log";

  std::ostringstream line;
  line << shell_quote(cmd.program);
  for (const auto& a : cmd.args) line << ' ' << shell_quote(a);
  line << ' ' << shell_quote(input.string()) << ' ' << shell_quote(output.string());
  const std::string command = line.str();

  auto cleanup = [&] {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
  };
  auto transcript = [&] {
    std::ifstream in(log);
    std::ostringstream t;
    t << "$ " << command << '\n' << in.rdbuf();
    return t.str();
  };

  int status = 0;
  try {
    dataio::save_pfi(img, input);
    std::unique_lock<std::mutex> lock;
    if (!cmd.reentrant) lock = std::unique_lock(program_mutex(cmd.program));
    status = std::system((command + " >" + shell_quote(log.string()) + " 2>&1").c_str());
  } catch (...) {
    cleanup();
    throw;
  }

  const int code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
  if (code != 0) {
    const std::string t = transcript();
    cleanup();
    throw ExternalProcessError("external denoiser exited with status " + std::to_string(code), t);
  }
  try {
    Image out = dataio::load_pfi(output);
    if (!out.same_shape(img)) throw FormatError("external denoiser changed the image shape");
    cleanup();
    return clip01(out);
  } catch (const Error& e) {
    const std::string t = transcript();
    cleanup();
    throw ExternalProcessError(std::string("external denoiser produced unusable output: ") + e.what(),
                               t);
  }
}

Image denoise(const Image& img, const DenoiserSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case DenoiserKind::identity: return img;
    case DenoiserKind::gaussian: return gaussian_blur(img, spec.gaussian);
    case DenoiserKind::nlm: return nlm(img, spec.nlm);
    case DenoiserKind::external: return run_external(img, spec.external);
  }
  throw InvalidArgument("unknown denoiser kind");
}

}  // namespace rnst::denoise

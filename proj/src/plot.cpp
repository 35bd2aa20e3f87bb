#include "rnst/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "rnst/dataio.hpp"
#include "rnst/errors.hpp"

namespace rnst::plot {

Image error_map(const Image& x_hat, const Image& x_ref) {
  require_same_shape(x_hat, x_ref, "error_map");
  return Image((x_hat.pixels() - x_ref.pixels()).abs().eval());
}

void save_error_map(const Image& err, const std::filesystem::path& stem) {
  dataio::save_slice_atomic(err, stem.string() + ".pfi");
  Image shown(err.pixels() * kErrorGain);
  dataio::save_png(clip01(shown), stem.string() + ".png", 8);
}

namespace {

constexpr double kFrame = 0.6;
constexpr double kInk = 0.0;

void plot_point(Image& img, int r, int c, double v) {
  if (r >= 0 && r < img.height() && c >= 0 && c < img.width()) img(r, c) = v;
}

void draw_line(Image& img, int r0, int c0, int r1, int c1, double v) {
  const int dc = std::abs(c1 - c0), sc = c0 < c1 ? 1 : -1;
  const int dr = -std::abs(r1 - r0), sr = r0 < r1 ? 1 : -1;
  int err = dc + dr;
  while (true) {
    plot_point(img, r0, c0, v);
    if (r0 == r1 && c0 == c1) break;
    const int e2 = 2 * err;
    if (e2 >= dr) {
      err += dr;
      c0 += sc;
    }
    if (e2 <= dc) {
      err += dc;
      r0 += sr;
    }
  }
}

}  // namespace

Image line_chart(const std::vector<double>& xs, const std::vector<double>& ys, int width,
                 int height) {
  if (xs.size() != ys.size()) throw InvalidArgument("line_chart: xs and ys differ in length");
  if (width < 64 || height < 64) throw InvalidArgument("line_chart: canvas must be at least 64x64");
  Image img(height, width, 1.0);

  const int left = 24, right = width - 12, top = 12, bottom = height - 24;
  draw_line(img, top, left, top, right, kFrame);
  draw_line(img, bottom, left, bottom, right, kFrame);
  draw_line(img, top, left, bottom, left, kFrame);
  draw_line(img, top, right, bottom, right, kFrame);

  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::isfinite(xs[i]) && std::isfinite(ys[i])) pts.emplace_back(xs[i], ys[i]);
  }
  if (pts.empty()) return img;

  double x_lo = pts.front().first, x_hi = x_lo, y_lo = pts.front().second, y_hi = y_lo;
  for (const auto& [x, y] : pts) {
    x_lo = std::min(x_lo, x);
    x_hi = std::max(x_hi, x);
    y_lo = std::min(y_lo, y);
    y_hi = std::max(y_hi, y);
  }
  if (x_hi == x_lo) {
    x_lo -= 1.0;
    x_hi += 1.0;
  }
  const double pad = y_hi > y_lo ? 0.05 * (y_hi - y_lo) : std::max(1e-12, std::abs(y_hi) * 0.05 + 1e-12);
  y_lo -= pad;
  y_hi += pad;

  auto col = [&](double x) {
    return left + static_cast<int>(std::lround((x - x_lo) / (x_hi - x_lo) * (right - left)));
  };
  auto row = [&](double y) {
    return bottom - static_cast<int>(std::lround((y - y_lo) / (y_hi - y_lo) * (bottom - top)));
  };

  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    draw_line(img, row(pts[i].second), col(pts[i].first), row(pts[i + 1].second),
              col(pts[i + 1].first), kInk);
  }
  for (const auto& [x, y] : pts) {
    const int r = row(y), c = col(x);
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) plot_point(img, r + dr, c + dc, kInk);
  }
  return img;
}

}  // namespace rnst::plot

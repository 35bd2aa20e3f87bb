#include "rnst/phantom.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "rnst/errors.hpp"

namespace rnst {
namespace {

struct Ellipse {
  double intensity;
  double semi_x;
  double semi_y;
  double cx;
  double cy;
  double angle_deg;
};

// Modified Shepp-Logan (Toft) parameters.
constexpr std::array<Ellipse, 10> kSheppLogan{{
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
}};

Image rasterise(int size, const std::array<Ellipse, 10>& ellipses) {
  Image img(size, size, 0.0);
  for (int r = 0; r < size; ++r) {
    const double y = 1.0 - (2.0 * r + 1.0) / size;
    for (int c = 0; c < size; ++c) {
      const double x = (2.0 * c + 1.0) / size - 1.0;
      double value = 0.0;
      for (const Ellipse& e : ellipses) {
        const double t = e.angle_deg * std::numbers::pi / 180.0;
        const double dx = x - e.cx;
        const double dy = y - e.cy;
        const double u = dx * std::cos(t) + dy * std::sin(t);
        const double v = -dx * std::sin(t) + dy * std::cos(t);
        if ((u * u) / (e.semi_x * e.semi_x) + (v * v) / (e.semi_y * e.semi_y) <= 1.0) {
          value += e.intensity;
        }
      }
      img(r, c) = value;
    }
  }
  return clip01(img);
}

// Neighbouring-slice drift: inner structures grow/shrink and shift a little.
std::array<Ellipse, 10> slice_variant(std::array<Ellipse, 10> ellipses, int variant) {
  if (variant == 0) return ellipses;
  const double phase = 0.7 * variant;
  for (std::size_t k = 2; k < ellipses.size(); ++k) {
    Ellipse& e = ellipses[k];
    const double scale = 1.0 + 0.06 * std::sin(phase + 0.9 * static_cast<double>(k));
    e.semi_x *= scale;
    e.semi_y *= scale;
    e.cy += 0.015 * std::cos(phase + 0.5 * static_cast<double>(k));
  }
  return ellipses;
}

}  // namespace

void PhantomSpec::validate() const {
  if (size < 64) throw InvalidArgument("phantom size must be >= 64, got " + std::to_string(size));
  if (!(contrast_gamma > 0.0)) throw InvalidArgument("contrast_gamma must be > 0");
  noise.validate();
}

Image shepp_logan(int size, int variant) { return rasterise(size, slice_variant(kSheppLogan, variant)); }

Image guidance_phantom(int size, int variant) {
  std::array<Ellipse, 10> ellipses = kSheppLogan;
  // Rounder head, mirrored and rotated interior, resized features. Intensity
  // amplitudes are untouched so the grey-level palette matches the target.
  ellipses[0].semi_x = 0.74;
  ellipses[0].semi_y = 0.88;
  ellipses[1].semi_x = 0.7104;
  ellipses[1].semi_y = 0.8340;
  for (std::size_t k = 2; k < ellipses.size(); ++k) {
    Ellipse& e = ellipses[k];
    e.cx = -e.cx;
    e.angle_deg = -e.angle_deg + 12.0;
    const double t = 12.0 * std::numbers::pi / 180.0;
    const double cx = e.cx * std::cos(t) - e.cy * std::sin(t);
    const double cy = e.cx * std::sin(t) + e.cy * std::cos(t);
    e.cx = cx;
    e.cy = 0.92 * cy;
  }
  ellipses[2].semi_x *= 1.25;
  ellipses[3].semi_y *= 0.8;
  ellipses[4].semi_x *= 0.85;
  ellipses[4].semi_y *= 1.15;
  ellipses[5].semi_x *= 1.4;
  ellipses[6].semi_y *= 1.3;
  return rasterise(size, slice_variant(ellipses, variant));
}

PhantomPair make_phantom_pair(const PhantomSpec& spec) {
  spec.validate();
  Image clean = shepp_logan(spec.size, spec.variant);
  Image low = clean;
  if (spec.contrast_gamma != 1.0) {
    low.pixels() = clean.pixels().pow(spec.contrast_gamma);
    low = clip01(low);
  }
  Image noisy = add_awgn(low, spec.noise);
  return {std::move(clean), std::move(noisy), guidance_phantom(spec.size, spec.variant)};
}

}  // namespace rnst

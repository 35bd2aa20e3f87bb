#include "rnst/image.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "rnst/errors.hpp"

namespace rnst {

Image::Image(int height, int width, double fill) {
  if (height < kMinSide || width < kMinSide) {
    throw InvalidArgument("image must be at least " + std::to_string(kMinSide) + "x" +
                          std::to_string(kMinSide) + ", got " + std::to_string(height) + "x" +
                          std::to_string(width));
  }
  pixels_ = Pixels::Constant(height, width, fill);
}

Image::Image(Pixels pixels) : pixels_(std::move(pixels)) {
  if (pixels_.rows() < kMinSide || pixels_.cols() < kMinSide) {
    throw InvalidArgument("image must be at least " + std::to_string(kMinSide) + "x" +
                          std::to_string(kMinSide) + ", got " + std::to_string(pixels_.rows()) +
                          "x" + std::to_string(pixels_.cols()));
  }
}

Image clip01(const Image& img) {
  Image out = img;
  out.pixels() = img.pixels().max(0.0).min(1.0);
  return out;
}

bool all_finite(const Image& img) { return img.pixels().isFinite().all(); }

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(what) + ": shape " + std::to_string(a.height()) + "x" +
                        std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                        std::to_string(b.width()));
  }
}

void NoiseSpec::validate() const {
  if (!(sigma >= 0.0) || !(sigma < 1.0)) {
    throw InvalidArgument("noise sigma must lie in [0, 1), got " + std::to_string(sigma));
  }
}

double PortableNormal::uniform_open() {
  // 53 random bits, shifted half a step so 0 is never produced.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double PortableNormal::operator()() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform_open();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Image add_awgn_unclipped(const Image& img, const NoiseSpec& spec) {
  spec.validate();
  Image out = img;
  if (spec.sigma == 0.0) return out;
  PortableNormal normal(spec.seed);
  for (double& p : out.data()) p += spec.sigma * normal();
  return out;
}

Image add_awgn(const Image& img, const NoiseSpec& spec) {
  spec.validate();
  if (spec.sigma == 0.0) return img;
  return clip01(add_awgn_unclipped(img, spec));
}

}  // namespace rnst

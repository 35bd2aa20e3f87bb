#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unistd.h>

#include "rnst/weights.hpp"

namespace rnst::test {

namespace fs = std::filesystem;

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::path(RNST_TEST_SCRATCH) / std::to_string(::getpid());
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

const fs::path& weights_path() {
  static const fs::path path = [] {
    fs::path p = scratch() / "synthetic.rnstw";
    features::write_weights(p, features::synthetic_vgg16(2024));
    return p;
  }();
  return path;
}

const features::Backbone& backbone() {
  static const features::Backbone bb = features::Backbone::load(weights_path());
  return bb;
}

const features::Backbone& backbone64() {
  static const features::Backbone bb =
      features::Backbone::load(weights_path(), features::Precision::float64);
  return bb;
}

Image random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  Image img(h, w);
  for (double& p : img.data()) p = double(eng() >> 11) * 0x1.0p-53;
  return img;
}

double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

}  // namespace rnst::test

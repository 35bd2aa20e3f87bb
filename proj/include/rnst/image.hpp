#pragma once

#include <cstdint>
#include <random>
#include <span>

#include <Eigen/Core>

namespace rnst {

/// Single-channel 2-D intensity grid, row-major. Pipeline images live in
/// [0, 1]; intermediate values (e.g. unclipped update candidates) may leave
/// that range until passed through clip01.
class Image {
 public:
  using Pixels = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  static constexpr int kMinSide = 8;

  /// Throws InvalidArgument if either side is below kMinSide.
  Image(int height, int width, double fill = 0.0);
  explicit Image(Pixels pixels);

  int height() const noexcept { return static_cast<int>(pixels_.rows()); }
  int width() const noexcept { return static_cast<int>(pixels_.cols()); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(pixels_.size()); }

  double operator()(int row, int col) const { return pixels_(row, col); }
  double& operator()(int row, int col) { return pixels_(row, col); }

  const Pixels& pixels() const noexcept { return pixels_; }
  Pixels& pixels() noexcept { return pixels_; }

  std::span<const double> data() const noexcept { return {pixels_.data(), size()}; }
  std::span<double> data() noexcept { return {pixels_.data(), size()}; }

  bool same_shape(const Image& other) const noexcept {
    return height() == other.height() && width() == other.width();
  }

  /// Exact (bitwise-value) pixel equality.
  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && (a.pixels_ == b.pixels_).all();
  }

 private:
  Pixels pixels_;
};

/// Maps every pixel to min(max(p, 0), 1).
Image clip01(const Image& img);

bool all_finite(const Image& img);

/// Throws ShapeMismatch naming `what` when the two images differ in shape.
void require_same_shape(const Image& a, const Image& b, const char* what);

/// Additive white Gaussian noise parameters. `sigma` is in normalized
/// intensity units (20/255 for the conventional 8-bit sigma of 20).
struct NoiseSpec {
  double sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

/// Returns clip01(img + N(0, sigma^2)) with i.i.d. samples drawn from the
/// portable generator below. sigma == 0 returns an exact copy (no clipping).
Image add_awgn(const Image& img, const NoiseSpec& spec);

/// Same draw as add_awgn without the final clip; exposed for statistics.
Image add_awgn_unclipped(const Image& img, const NoiseSpec& spec);

/// Portable standard-normal generator: std::mt19937_64 (whose output sequence
/// is fixed by the standard) feeding a Box-Muller transform over 53-bit
/// uniforms in (0, 1). Unlike std::normal_distribution the sample sequence is
/// identical across standard libraries.
class PortableNormal {
 public:
  explicit PortableNormal(std::uint64_t seed) : engine_(seed) {}
  double operator()();

 private:
  double uniform_open();

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rnst

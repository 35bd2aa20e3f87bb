#pragma once

#include <optional>

#include "rnst/image.hpp"

namespace rnst::metrics {

struct SsimParams {
  int window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
};

struct MetricReport {
  double psnr_db = 0.0;  // +inf for identical images
  double ssim = 0.0;
  double dynamic_range_L = 1.0;
  int window = 7;
};

double mse(const Image& a, const Image& b);

/// 10 log10(max(x)^2 / MSE(x_hat, x)); +inf when MSE is zero. Throws
/// InvalidArgument when max(x) is zero and ShapeMismatch on differing shapes.
double psnr(const Image& x_hat, const Image& x);

/// Mean SSIM over every valid (fully inside) window x window position with a
/// uniform window. Means are window averages; variances and covariance use
/// the unbiased (n - 1) divisor. c1 = (k1 L)^2, c2 = (k2 L)^2.
double ssim(const Image& x_hat, const Image& x, int window, double k1, double k2, double L);

/// PSNR plus SSIM with window 7, k1 0.01, k2 0.03 and L = max(x_ref) unless
/// `dynamic_range` pins it.
MetricReport evaluate(const Image& x_hat, const Image& x_ref,
                      std::optional<double> dynamic_range = std::nullopt);

}  // namespace rnst::metrics

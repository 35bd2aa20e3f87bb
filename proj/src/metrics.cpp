#include "rnst/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "rnst/errors.hpp"

namespace rnst::metrics {
namespace {

// Summed-area table with a zero first row/column.
Eigen::ArrayXXd integral(const Eigen::ArrayXXd& a) {
  Eigen::ArrayXXd s = Eigen::ArrayXXd::Zero(a.rows() + 1, a.cols() + 1);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double row = 0.0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      row += a(r, c);
      s(r + 1, c + 1) = s(r, c + 1) + row;
    }
  }
  return s;
}

double box(const Eigen::ArrayXXd& s, Eigen::Index r, Eigen::Index c, int n) {
  return s(r + n, c + n) - s(r, c + n) - s(r + n, c) + s(r, c);
}

}  // namespace

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  return (a.pixels() - b.pixels()).square().mean();
}

double psnr(const Image& x_hat, const Image& x) {
  require_same_shape(x_hat, x, "psnr");
  const double peak = x.pixels().maxCoeff();
  if (peak == 0.0) throw InvalidArgument("psnr reference has max(x) = 0");
  const double err = mse(x_hat, x);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / err);
}

double ssim(const Image& x_hat, const Image& x, int window, double k1, double k2, double L) {
  require_same_shape(x_hat, x, "ssim");
  if (window < 2 || window % 2 == 0) throw InvalidArgument("ssim window must be odd and >= 3");
  if (x.height() < window || x.width() < window) {
    throw InvalidArgument("image smaller than the " + std::to_string(window) + "x" +
                          std::to_string(window) + " ssim window");
  }
  const double c1 = (k1 * L) * (k1 * L);
  const double c2 = (k2 * L) * (k2 * L);

  const Eigen::ArrayXXd a = x_hat.pixels();
  const Eigen::ArrayXXd b = x.pixels();
  // Centre on the global means to limit cancellation in the second moments.
  const double shift_a = a.mean();
  const double shift_b = b.mean();
  const Eigen::ArrayXXd ac = a - shift_a;
  const Eigen::ArrayXXd bc = b - shift_b;
  const Eigen::ArrayXXd sa = integral(ac);
  const Eigen::ArrayXXd sb = integral(bc);
  const Eigen::ArrayXXd saa = integral(ac * ac);
  const Eigen::ArrayXXd sbb = integral(bc * bc);
  const Eigen::ArrayXXd sab = integral(ac * bc);

  const double n = double(window) * window;
  const Eigen::Index rows = a.rows() - window + 1;
  const Eigen::Index cols = a.cols() - window + 1;
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double sum_a = box(sa, r, c, window);
      const double sum_b = box(sb, r, c, window);
      const double mean_a = sum_a / n + shift_a;
      const double mean_b = sum_b / n + shift_b;
      const double var_a = (box(saa, r, c, window) - sum_a * sum_a / n) / (n - 1.0);
      const double var_b = (box(sbb, r, c, window) - sum_b * sum_b / n) / (n - 1.0);
      const double cov = (box(sab, r, c, window) - sum_a * sum_b / n) / (n - 1.0);
      total += ((2.0 * mean_a * mean_b + c1) * (2.0 * cov + c2)) /
               ((mean_a * mean_a + mean_b * mean_b + c1) * (var_a + var_b + c2));
    }
  }
  return total / double(rows * cols);
}

MetricReport evaluate(const Image& x_hat, const Image& x_ref, std::optional<double> dynamic_range) {
  require_same_shape(x_hat, x_ref, "evaluate");
  const SsimParams params;
  MetricReport report;
  report.dynamic_range_L = dynamic_range.value_or(x_ref.pixels().maxCoeff());
  report.window = params.window;
  report.psnr_db = psnr(x_hat, x_ref);
  report.ssim = ssim(x_hat, x_ref, params.window, params.k1, params.k2, report.dynamic_range_L);
  return report;
}

}  // namespace rnst::metrics

#pragma once

#include <filesystem>
#include <vector>

#include "rnst/image.hpp"

namespace rnst::plot {

/// |x_hat - x_ref| per pixel (not clipped; values lie in [0, 1] for images
/// in [0, 1]).
Image error_map(const Image& x_hat, const Image& x_ref);

/// Error maps are displayed with a fixed gain so maps from different
/// iterations share one scale: an absolute error of 1/kErrorGain is white.
inline constexpr double kErrorGain = 4.0;

/// Writes `<stem>.pfi` (exact values) and `<stem>.png` (8-bit, gain applied).
void save_error_map(const Image& err, const std::filesystem::path& stem);

/// Line chart of ys against xs on a width x height canvas: white background,
/// grey frame, black polyline, 3x3 markers. The y range is padded by 5%;
/// non-finite points are dropped. Axis labels live in the companion CSV.
Image line_chart(const std::vector<double>& xs, const std::vector<double>& ys, int width = 480,
                 int height = 320);

}  // namespace rnst::plot

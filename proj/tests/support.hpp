#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "rnst/features.hpp"
#include "rnst/image.hpp"

namespace rnst::test {

/// Per-binary scratch directory under the build tree, emptied on first use.
const std::filesystem::path& scratch();

/// Synthetic VGG-16 container (seed 2024), written once per process.
const std::filesystem::path& weights_path();

/// float32 backbone over weights_path(), shared by every test in the binary.
const features::Backbone& backbone();
const features::Backbone& backbone64();

/// Uniform [0, 1) pixels from PortableNormal-independent mt19937_64 draws.
Image random_image(int h, int w, std::uint64_t seed);

/// Relative difference |a - b| / max(|a|, |b|, tiny).
double rel_diff(double a, double b);

}  // namespace rnst::test

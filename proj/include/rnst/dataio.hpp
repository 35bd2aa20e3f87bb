#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rnst/image.hpp"

namespace rnst::dataio {

/// Portable float image (.pfi):
///   4 bytes magic "PFI1", u32 height, u32 width, then height * width
///   IEEE-754 binary32 pixels, row-major. Everything little-endian.
inline constexpr char kPfiMagic[4] = {'P', 'F', 'I', '1'};

/// Dispatches on extension: .pfi (portable float) or .png (8/16-bit
/// grayscale, rescaled by the maximum code value 255 or 65535).
Image load_slice(const std::filesystem::path& path);

/// .pfi stores binary32 (pixels are rounded to float); .png stores 16-bit
/// grayscale of clip01(img).
void save_slice(const Image& img, const std::filesystem::path& path);

Image load_pfi(const std::filesystem::path& path);
void save_pfi(const Image& img, const std::filesystem::path& path);
Image load_png(const std::filesystem::path& path);
/// bit_depth 8 or 16.
void save_png(const Image& img, const std::filesystem::path& path, int bit_depth = 16);

/// Writes to a temporary sibling, then renames into place.
void save_slice_atomic(const Image& img, const std::filesystem::path& path);

struct SliceSet {
  std::string label;
  std::vector<Image> slices;
  std::vector<int> indices;  // strictly increasing, parallel to `slices`

  void validate() const;
  /// Position of `index` in `indices`, if present.
  std::optional<std::size_t> find(int index) const;
};

/// "<label>_<index:04>.<ext>"
std::string slice_filename(const std::string& label, int index, const std::string& ext);

/// Loads every "<label>_NNNN.{png,pfi}" file in `dir`. When `label` is empty
/// the directory must hold exactly one label. Throws on an empty directory.
SliceSet load_slice_set(const std::filesystem::path& dir, const std::string& label = "");
void save_slice_set(const SliceSet& set, const std::filesystem::path& dir,
                    const std::string& ext = "pfi");

enum class GuidanceMode { matched, frozen };

const char* to_string(GuidanceMode mode);
GuidanceMode guidance_mode_from_string(const std::string& s);

struct GuidancePolicy {
  GuidanceMode mode = GuidanceMode::matched;
  std::optional<int> frozen_index;

  friend bool operator==(const GuidancePolicy&, const GuidancePolicy&) = default;
};

struct GuidedSlice {
  Image content;
  Image guidance;
  int index = 0;
  int guidance_index = 0;
};

/// matched: pairs equal indices (index sets must be identical);
/// frozen: every content slice with guidance slice `frozen_index`.
std::vector<GuidedSlice> pair_guidance(const SliceSet& content, const SliceSet& guidance,
                                       const GuidancePolicy& policy);

}  // namespace rnst::dataio

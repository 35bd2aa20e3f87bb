#include "rnst/dataio.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <regex>
#include <set>

#include "rnst/errors.hpp"

namespace rnst::dataio {
namespace {

static_assert(std::endian::native == std::endian::little,
              "pfi I/O assumes a little-endian host");

std::string lower_ext(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image load_pfi(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[4];
  std::uint32_t dims[2];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || std::memcmp(magic, kPfiMagic, 4) != 0) {
    throw FormatError("corrupt pfi header: " + path.string());
  }
  if (dims[0] < Image::kMinSide || dims[1] < Image::kMinSide || dims[0] > 65536 ||
      dims[1] > 65536) {
    throw FormatError("pfi dimensions out of range: " + path.string());
  }
  std::vector<float> buf(std::size_t(dims[0]) * dims[1]);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (static_cast<std::size_t>(in.gcount()) != buf.size() * 4) {
    throw FormatError("truncated pfi data: " + path.string());
  }
  Image img(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
  std::copy(buf.begin(), buf.end(), img.data().begin());
  return img;
}

void save_pfi(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(img.height()),
                                 static_cast<std::uint32_t>(img.width())};
  std::vector<float> buf(img.data().begin(), img.data().end());
  out.write(kPfiMagic, 4);
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!out) throw Error("failed writing " + path.string());
}

Image load_png(const std::filesystem::path& path) {
  File fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialisation failed");
  }
  std::vector<png_byte> data;
  png_uint_32 w = 0, h = 0;
  int depth = 0, color = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_get_IHDR(png, info, &w, &h, &depth, &color, nullptr, nullptr, nullptr);
  if (color != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("only 8/16-bit grayscale PNG is supported: " + path.string());
  }
  if (depth == 16) png_set_swap(png);  // native little-endian u16
  png_read_update_info(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  data.resize(row_bytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 r = 0; r < h; ++r) rows[r] = data.data() + r * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(h), static_cast<int>(w));
  const double max_code = depth == 16 ? 65535.0 : 255.0;
  for (png_uint_32 r = 0; r < h; ++r) {
    for (png_uint_32 c = 0; c < w; ++c) {
      double code = 0.0;
      if (depth == 16) {
        std::uint16_t v;
        std::memcpy(&v, rows[r] + 2 * c, 2);
        code = v;
      } else {
        code = rows[r][c];
      }
      img(static_cast<int>(r), static_cast<int>(c)) = code / max_code;
    }
  }
  return img;
}

void save_png(const Image& img, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("PNG bit depth must be 8 or 16");
  File fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  const int h = img.height();
  const int w = img.width();
  const double max_code = bit_depth == 16 ? 65535.0 : 255.0;
  const int bytes = bit_depth / 8;
  std::vector<png_byte> data(std::size_t(h) * w * bytes);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double v = std::clamp(img(r, c), 0.0, 1.0);
      const auto code = static_cast<std::uint32_t>(std::lround(v * max_code));
      png_byte* dst = data.data() + (std::size_t(r) * w + c) * bytes;
      if (bit_depth == 16) {
        dst[0] = static_cast<png_byte>(code >> 8);  // PNG is big-endian
        dst[1] = static_cast<png_byte>(code & 0xff);
      } else {
        dst[0] = static_cast<png_byte>(code);
      }
    }
  }
  std::vector<png_bytep> rows(h);
  for (int r = 0; r < h; ++r) rows[r] = data.data() + std::size_t(r) * w * bytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed writing PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_slice(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".pfi") return load_pfi(path);
  if (ext == ".png") return load_png(path);
  throw FormatError("unsupported image format '" + ext + "': " + path.string());
}

void save_slice(const Image& img, const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".pfi") return save_pfi(img, path);
  if (ext == ".png") return save_png(img, path, 16);
  throw FormatError("unsupported image format '" + ext + "': " + path.string());
}

void save_slice_atomic(const Image& img, const std::filesystem::path& path) {
  // Keep the real extension last so save_slice can dispatch on it.
  const std::filesystem::path staging =
      path.parent_path() / ("." + path.stem().string() + ".part" + path.extension().string());
  save_slice(img, staging);
  std::filesystem::rename(staging, path);
}

void SliceSet::validate() const {
  if (slices.size() != indices.size()) {
    throw InvalidArgument("slice set '" + label + "': slices and indices differ in length");
  }
  for (std::size_t k = 0; k < slices.size(); ++k) {
    if (k > 0 && indices[k] <= indices[k - 1]) {
      throw InvalidArgument("slice set '" + label + "': indices must be strictly increasing");
    }
    if (!slices[k].same_shape(slices.front())) {
      throw ShapeMismatch("slice set '" + label + "': slice " + std::to_string(indices[k]) +
                          " differs in shape");
    }
  }
}

std::optional<std::size_t> SliceSet::find(int index) const {
  const auto it = std::lower_bound(indices.begin(), indices.end(), index);
  if (it == indices.end() || *it != index) return std::nullopt;
  return static_cast<std::size_t>(it - indices.begin());
}

std::string slice_filename(const std::string& label, int index, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d", index);
  return label + "_" + buf + "." + ext;
}

SliceSet load_slice_set(const std::filesystem::path& dir, const std::string& label) {
  if (!std::filesystem::is_directory(dir)) {
    throw FormatError("slice directory does not exist: " + dir.string());
  }
  static const std::regex pattern(R"((.+)_(\d{4})\.(png|pfi))");
  std::map<std::string, std::map<int, std::filesystem::path>> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    auto& by_index = found[m[1].str()];
    const int index = std::stoi(m[2].str());
    if (by_index.contains(index)) {
      throw FormatError("duplicate slice " + std::to_string(index) + " for label " + m[1].str() +
                        " in " + dir.string());
    }
    by_index[index] = entry.path();
  }
  if (found.empty()) throw FormatError("no slices found in " + dir.string());

  std::string chosen = label;
  if (chosen.empty()) {
    if (found.size() != 1) {
      throw FormatError("directory " + dir.string() + " holds several labels; pick one");
    }
    chosen = found.begin()->first;
  }
  const auto it = found.find(chosen);
  if (it == found.end()) throw FormatError("no slices labelled '" + chosen + "' in " + dir.string());

  SliceSet set;
  set.label = chosen;
  for (const auto& [index, path] : it->second) {
    set.indices.push_back(index);
    set.slices.push_back(load_slice(path));
  }
  set.validate();
  return set;
}

void save_slice_set(const SliceSet& set, const std::filesystem::path& dir, const std::string& ext) {
  set.validate();
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < set.slices.size(); ++k) {
    save_slice_atomic(set.slices[k], dir / slice_filename(set.label, set.indices[k], ext));
  }
}

const char* to_string(GuidanceMode mode) {
  return mode == GuidanceMode::matched ? "matched" : "frozen";
}

GuidanceMode guidance_mode_from_string(const std::string& s) {
  if (s == "matched") return GuidanceMode::matched;
  if (s == "frozen") return GuidanceMode::frozen;
  throw InvalidArgument("guidance mode must be 'matched' or 'frozen', got '" + s + "'");
}

std::vector<GuidedSlice> pair_guidance(const SliceSet& content, const SliceSet& guidance,
                                       const GuidancePolicy& policy) {
  content.validate();
  guidance.validate();
  std::vector<GuidedSlice> pairs;
  pairs.reserve(content.slices.size());
  if (policy.mode == GuidanceMode::matched) {
    if (policy.frozen_index) throw InvalidArgument("matched guidance takes no frozen_index");
    for (int idx : content.indices) {
      if (!guidance.find(idx)) {
        throw InvalidArgument("matched guidance: guidance set has no slice " + std::to_string(idx));
      }
    }
    for (int idx : guidance.indices) {
      if (!content.find(idx)) {
        throw InvalidArgument("matched guidance: content set has no slice " + std::to_string(idx));
      }
    }
    for (std::size_t k = 0; k < content.slices.size(); ++k) {
      const int idx = content.indices[k];
      pairs.push_back({content.slices[k], guidance.slices[*guidance.find(idx)], idx, idx});
    }
    return pairs;
  }

  if (!policy.frozen_index) throw InvalidArgument("frozen guidance requires frozen_index");
  const auto pos = guidance.find(*policy.frozen_index);
  if (!pos) {
    throw InvalidArgument("frozen guidance: guidance set has no slice " +
                          std::to_string(*policy.frozen_index));
  }
  for (std::size_t k = 0; k < content.slices.size(); ++k) {
    pairs.push_back({content.slices[k], guidance.slices[*pos], content.indices[k],
                     *policy.frozen_index});
  }
  return pairs;
}

}  // namespace rnst::dataio

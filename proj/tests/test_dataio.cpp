#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>


#include "rnst/dataio.hpp"
#include "rnst/errors.hpp"
#include "support.hpp"

using namespace rnst;
using namespace rnst::dataio;
namespace fs = std::filesystem;

namespace {

Image float_exact(int h, int w, std::uint64_t seed) {
  Image img = test::random_image(h, w, seed);
  for (double& p : img.data()) p = double(float(p));
  return img;
}

SliceSet make_set(const std::string& label, int first, int last) {
  SliceSet s;
  s.label = label;
  for (int i = first; i <= last; ++i) {
    s.slices.emplace_back(8, 8, double(i) / 100.0);
    s.indices.push_back(i);
  }
  return s;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = test::scratch() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("portable float round-trip is lossless") {
  const Image img = float_exact(23, 31, 1);
  const fs::path p = test::scratch() / "a.pfi";
  save_slice(img, p);
  CHECK(load_slice(p) == img);
  CHECK(fs::file_size(p) == 12 + 23 * 31 * 4);

  std::ifstream in(p, std::ios::binary);
  unsigned char head[12];
  in.read(reinterpret_cast<char*>(head), 12);
  CHECK(std::memcmp(head, "PFI1", 4) == 0);
  CHECK(head[4] == 23);
  CHECK(head[8] == 31);
}

TEST_CASE("corrupt portable float files are rejected") {
  const Image img = float_exact(16, 16, 2);
  const fs::path p = test::scratch() / "trunc.pfi";
  save_pfi(img, p);
  fs::resize_file(p, fs::file_size(p) - 4);
  CHECK_THROWS_AS(load_pfi(p), FormatError);
  CHECK_THROWS_AS(load_slice(test::scratch() / "x.tiff"), FormatError);
}

TEST_CASE("png rescales by the maximum code value") {
  const fs::path p8 = test::scratch() / "v8.png";
  Image img(8, 8, 128.0 / 255.0);
  save_png(img, p8, 8);
  CHECK(load_png(p8)(3, 3) == doctest::Approx(0.50196).epsilon(1e-5));
  CHECK(load_png(p8)(3, 3) == 128.0 / 255.0);

  const fs::path p16 = test::scratch() / "v16.png";
  save_png(Image(9, 12, 1.0), p16, 16);
  const Image full = load_png(p16);
  CHECK(full == Image(9, 12, 1.0));

  // 16-bit saves quantise to 1/65535.
  const Image r = test::random_image(16, 16, 3);
  save_slice(r, test::scratch() / "r.png");
  CHECK((load_slice(test::scratch() / "r.png").pixels() - r.pixels()).abs().maxCoeff() <= 0.5 / 65535.0 + 1e-12);
}

TEST_CASE("atomic saves leave no temporaries") {
  const fs::path d = fresh_dir("atomic");
  save_slice_atomic(float_exact(8, 8, 4), d / "s_0001.pfi");
  int count = 0;
  for (const auto& e : fs::directory_iterator(d)) {
    (void)e;
    ++count;
  }
  CHECK(count == 1);
}

TEST_CASE("slice sets follow the directory convention") {
  CHECK(slice_filename("t1", 7, "pfi") == "t1_0007.pfi");
  const fs::path d = fresh_dir("sets");
  SliceSet s = make_set("brain", 40, 43);
  save_slice_set(s, d);
  CHECK(fs::exists(d / "brain_0041.pfi"));
  const SliceSet back = load_slice_set(d);
  CHECK(back.label == "brain");
  CHECK(back.indices == s.indices);
  CHECK(back.find(42).value() == 2);
  CHECK_FALSE(back.find(39).has_value());

  save_slice_set(make_set("other", 1, 1), d);
  CHECK_THROWS_AS(load_slice_set(d), FormatError);
  CHECK(load_slice_set(d, "other").indices == std::vector<int>{1});
  CHECK_THROWS_AS(load_slice_set(fresh_dir("empty")), FormatError);
}

TEST_CASE("matched guidance pairs equal indices") {
  const auto pairs = pair_guidance(make_set("c", 1, 3), make_set("g", 1, 3), {});
  REQUIRE(pairs.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(pairs[k].index == k + 1);
    CHECK(pairs[k].guidance_index == k + 1);
  }
}

TEST_CASE("frozen guidance uses one slice for every content slice") {
  const SliceSet content = make_set("c", 40, 60);
  const SliceSet guidance = make_set("g", 40, 60);
  const auto pairs = pair_guidance(content, guidance, {GuidanceMode::frozen, 55});
  REQUIRE(pairs.size() == 21);
  for (const auto& p : pairs) {
    CHECK(p.guidance_index == 55);
    CHECK(p.guidance == guidance.slices[15]);
  }
  CHECK_THROWS_AS(pair_guidance(content, guidance, {GuidanceMode::frozen, 61}), InvalidArgument);
  CHECK_THROWS_AS(pair_guidance(content, guidance, {GuidanceMode::frozen, std::nullopt}), InvalidArgument);
}

TEST_CASE("matched guidance with differing index sets names the missing index") {
  try {
    (void)pair_guidance(make_set("c", 1, 4), make_set("g", 1, 3), {});
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("no slice 4") != std::string::npos);
  }
}

TEST_CASE("slice set validation") {
  SliceSet s = make_set("c", 1, 3);
  s.indices[2] = 2;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = make_set("c", 1, 3);
  s.slices[1] = Image(8, 9);
  CHECK_THROWS_AS(s.validate(), ShapeMismatch);
  CHECK(to_string(GuidanceMode::frozen) == std::string("frozen"));
  CHECK(guidance_mode_from_string("matched") == GuidanceMode::matched);
}

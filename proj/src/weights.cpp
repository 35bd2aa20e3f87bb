#include "rnst/weights.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "rnst/errors.hpp"
#include "rnst/image.hpp"

namespace rnst::features {
namespace {

static_assert(std::endian::native == std::endian::little,
              "weights I/O assumes a little-endian host");

class Reader {
 public:
  explicit Reader(std::ifstream& in) : in_(in) {}

  bool u32(std::uint32_t& v) { return bytes(&v, sizeof v); }
  bool floats(std::vector<float>& out, std::size_t n) {
    out.resize(n);
    return bytes(out.data(), n * sizeof(float));
  }
  bool bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in_.gcount()) == n;
  }

 private:
  std::ifstream& in_;
};

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

const std::vector<ManifestEntry>& vgg16_manifest() {
  static const std::vector<ManifestEntry> manifest{
      {"conv1_1", 3, 64, false},    {"conv1_2", 64, 64, true},
      {"conv2_1", 64, 128, false},  {"conv2_2", 128, 128, true},
      {"conv3_1", 128, 256, false}, {"conv3_2", 256, 256, false},
      {"conv3_3", 256, 256, true},  {"conv4_1", 256, 512, false},
      {"conv4_2", 512, 512, false}, {"conv4_3", 512, 512, true},
      {"conv5_1", 512, 512, false}, {"conv5_2", 512, 512, false},
      {"conv5_3", 512, 512, true},
  };
  return manifest;
}

std::vector<ConvParams> read_weights(const std::filesystem::path& path) {
  const auto& manifest = vgg16_manifest();
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ManifestError("weights file not found: " + path.string(), manifest.front().name);
  }
  Reader reader(in);
  std::array<char, 8> magic{};
  if (!reader.bytes(magic.data(), magic.size()) ||
      std::memcmp(magic.data(), kWeightsMagic, magic.size()) != 0) {
    throw ManifestError("not an RNSTWTS1 weights container: " + path.string(),
                        manifest.front().name);
  }
  std::uint32_t count = 0;
  if (!reader.u32(count)) {
    throw ManifestError("truncated weights header", manifest.front().name);
  }

  std::vector<ConvParams> layers;
  layers.reserve(manifest.size());
  for (std::size_t k = 0; k < manifest.size(); ++k) {
    const ManifestEntry& want = manifest[k];
    auto absent = [&](const std::string& why) {
      return ManifestError("weights manifest mismatch at layer " + std::string(want.name) + ": " +
                               why,
                           want.name);
    };
    if (k >= count) throw absent("layer absent (file lists " + std::to_string(count) + " layers)");

    std::uint32_t name_len = 0;
    if (!reader.u32(name_len) || name_len > 256) throw absent("layer absent or truncated");
    std::string name(name_len, '\0');
    if (!reader.bytes(name.data(), name_len)) throw absent("layer absent or truncated");
    if (name != want.name) throw absent("found layer '" + name + "' instead");

    std::uint32_t out_c = 0, in_c = 0, kh = 0, kw = 0;
    if (!reader.u32(out_c) || !reader.u32(in_c) || !reader.u32(kh) || !reader.u32(kw)) {
      throw absent("truncated shape record");
    }
    if (static_cast<int>(out_c) != want.out_channels || static_cast<int>(in_c) != want.in_channels ||
        kh != 3 || kw != 3) {
      std::ostringstream got;
      got << "expected shape " << want.out_channels << "x" << want.in_channels << "x3x3, got "
          << out_c << "x" << in_c << "x" << kh << "x" << kw;
      throw absent(got.str());
    }
    ConvParams p;
    p.name = name;
    p.out_channels = want.out_channels;
    p.in_channels = want.in_channels;
    p.kernel = 3;
    if (!reader.floats(p.weights, std::size_t(out_c) * in_c * kh * kw)) {
      throw absent("truncated weight data");
    }
    if (!reader.floats(p.bias, out_c)) throw absent("truncated bias data");
    for (float w : p.weights) {
      if (!std::isfinite(w)) throw absent("non-finite weight");
    }
    layers.push_back(std::move(p));
  }
  return layers;
}

void write_weights(const std::filesystem::path& path, const std::vector<ConvParams>& layers) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(kWeightsMagic, sizeof kWeightsMagic);
  put_u32(out, static_cast<std::uint32_t>(layers.size()));
  for (const ConvParams& p : layers) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.out_channels));
    put_u32(out, static_cast<std::uint32_t>(p.in_channels));
    put_u32(out, static_cast<std::uint32_t>(p.kernel));
    put_u32(out, static_cast<std::uint32_t>(p.kernel));
    out.write(reinterpret_cast<const char*>(p.weights.data()),
              static_cast<std::streamsize>(p.weights.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(p.bias.data()),
              static_cast<std::streamsize>(p.bias.size() * sizeof(float)));
  }
  if (!out) throw Error("failed writing weights: " + path.string());
}

std::vector<ConvParams> synthetic_vgg16(std::uint64_t seed) {
  PortableNormal normal(seed);
  std::vector<ConvParams> layers;
  for (const ManifestEntry& m : vgg16_manifest()) {
    ConvParams p;
    p.name = m.name;
    p.out_channels = m.out_channels;
    p.in_channels = m.in_channels;
    p.kernel = 3;
    const double std_dev = std::sqrt(2.0 / (9.0 * m.in_channels));
    p.weights.resize(std::size_t(m.out_channels) * m.in_channels * 9);
    for (float& w : p.weights) w = static_cast<float>(std_dev * normal());
    p.bias.assign(m.out_channels, 0.0f);
    layers.push_back(std::move(p));
  }
  return layers;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for hashing: " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

}  // namespace rnst::features

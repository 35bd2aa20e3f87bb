#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

struct FetchOptions {
  std::string url;
  std::filesystem::path from_file;
  bool synthetic = false;
  std::uint64_t seed = 2024;
  std::string sha256;  // expected; empty skips the check (not allowed for --url)
  std::filesystem::path dest;
  bool force = false;
};

/// Installs backbone weights at opts.dest from a URL, a local file or the
/// synthetic generator, verifies the manifest and (when given) the SHA-256,
/// and returns the installed file's checksum.
std::string fetch_weights(const FetchOptions& opts);

#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace rnst {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration value was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Two operands that must share dimensions (or layer layouts) do not.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// Weights file missing, malformed, or not matching the expected manifest.
class ManifestError : public Error {
 public:
  ManifestError(const std::string& what, std::string layer)
      : Error(what), layer_(std::move(layer)) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

/// A loss evaluated to NaN or infinity. Carries the optimizer step (and the
/// outer iteration, when raised inside a reconstruction) where it happened.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& what, std::optional<int> step = std::nullopt,
                std::optional<int> outer_iteration = std::nullopt)
      : Error(what), step_(step), outer_(outer_iteration) {}
  std::optional<int> step() const noexcept { return step_; }
  std::optional<int> outer_iteration() const noexcept { return outer_; }

 private:
  std::optional<int> step_;
  std::optional<int> outer_;
};

/// Unsupported or corrupt image / report / trace file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// External denoiser subprocess failed; `transcript()` holds the command line
/// and whatever it wrote to stdout/stderr.
class ExternalProcessError : public Error {
 public:
  ExternalProcessError(const std::string& what, std::string transcript)
      : Error(what), transcript_(std::move(transcript)) {}
  const std::string& transcript() const noexcept { return transcript_; }

 private:
  std::string transcript_;
};

/// Configuration file could not be parsed or failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rnst

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace garment {

/// Error with a stable machine-readable code alongside the human message.
/// Codes in use: invalid-template, region-conflict, divergence, out-of-range,
/// graph-construction, dimension-mismatch, empty-input, io, bad-config,
/// nan-loss, missing-model.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

}  // namespace garment

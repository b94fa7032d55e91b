#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ravl {

// All library failures are reported as Error with a stable machine-readable
// code (e.g. "InvalidManifest", "EmptyBank") plus a human-readable detail.
// The CLI maps the code into its JSON error envelope, so codes are part of
// the public contract and must not be renamed casually.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), code_(std::move(code)), detail_(detail) {}

  const std::string& code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string code_;
  std::string detail_;
};

}  // namespace ravl

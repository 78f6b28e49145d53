#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace fairkit {

/// Domain error carrying a stable kind name (e.g. "MissingColumn").
/// The CLI prints kind() on stderr and exits with status 1.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& detail)
      : std::runtime_error(kind + ": " + detail), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

[[noreturn]] inline void fail(std::string kind, const std::string& detail) {
  throw Error(std::move(kind), detail);
}

inline void require(bool ok, std::string kind, const std::string& detail) {
  if (!ok) fail(std::move(kind), detail);
}

}  // namespace fairkit

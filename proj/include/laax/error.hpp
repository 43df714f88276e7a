#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace laax {

enum class Errc {
  invalid_dimension,
  shape_mismatch,
  domain,
  degenerate_hull,
  insufficient_pool,
  tiling,
  zero_extent,
  undefined_metric,
  configuration,
  io,
  numerical,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_dimension: return "invalid-dimension";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::domain: return "domain";
    case Errc::degenerate_hull: return "degenerate-hull";
    case Errc::insufficient_pool: return "insufficient-pool";
    case Errc::tiling: return "tiling";
    case Errc::zero_extent: return "zero-extent";
    case Errc::undefined_metric: return "undefined-metric";
    case Errc::configuration: return "configuration";
    case Errc::io: return "io";
    case Errc::numerical: return "numerical";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it to an exit status and tests can match on the category.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace laax

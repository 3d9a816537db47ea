#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "stark/error.hpp"

namespace stark {

enum class Family { SingleParticle, ManyBodyHalfFilling };

inline std::string_view to_string(Family family) {
  switch (family) {
  case Family::SingleParticle:
    return "single";
  case Family::ManyBodyHalfFilling:
    return "manybody";
  }
  return "?";
}

inline Family parse_family(std::string_view text) {
  if (text == "single" || text == "single-particle")
    return Family::SingleParticle;
  if (text == "manybody" || text == "many-body")
    return Family::ManyBodyHalfFilling;
  throw InvalidArgument("unknown probe family '" + std::string(text) +
                        "' (expected single|manybody)");
}

/// One probe instance: Hamiltonian family, chain length, hopping J and
/// gradient field h (both in units of J; J is 1 unless stated otherwise).
struct ProbeSpec {
  Family family = Family::SingleParticle;
  int L = 2;
  double J = 1.0;
  double h = 0.0;

  void validate() const {
    detail::require(L >= 2, "probe needs L >= 2, got " + std::to_string(L));
    detail::require(family != Family::ManyBodyHalfFilling || L % 2 == 0,
                    "half-filling probe needs even L, got " +
                        std::to_string(L));
    detail::require(family != Family::ManyBodyHalfFilling || L <= 62,
                    "L too large for bitstring basis");
    detail::require(std::isfinite(J) && J > 0.0, "coupling J must be > 0");
    detail::require(std::isfinite(h) && h >= 0.0, "field h must be >= 0");
  }

  /// Same probe at another field. Displaced evaluation points of finite
  /// differences may be slightly negative, so no sign check happens here.
  [[nodiscard]] ProbeSpec at_field(double field) const {
    ProbeSpec copy = *this;
    copy.h = field;
    return copy;
  }

  friend bool operator==(const ProbeSpec &, const ProbeSpec &) = default;
};

} // namespace stark

#pragma once

#include <string>
#include <string_view>

#include "stark/error.hpp"

namespace stark {

/// Diagnostic flags attached to results and sweep records.
enum class Flag : unsigned {
  None = 0,
  Boundary = 1u << 0,     ///< optimum at the edge of the search window
  Degenerate = 1u << 1,   ///< near-degenerate pairs were excluded or limited
  NonConverged = 1u << 2, ///< iteration cap reached, best-so-far returned
  Failed = 1u << 3,       ///< evaluation threw; value is NaN
};

class Flags {
public:
  constexpr Flags() = default;
  constexpr Flags(Flag f) : bits_(static_cast<unsigned>(f)) {}

  [[nodiscard]] constexpr bool has(Flag f) const {
    return (bits_ & static_cast<unsigned>(f)) != 0;
  }
  constexpr Flags &set(Flag f) {
    bits_ |= static_cast<unsigned>(f);
    return *this;
  }
  constexpr Flags &merge(Flags other) {
    bits_ |= other.bits_;
    return *this;
  }
  [[nodiscard]] constexpr bool empty() const { return bits_ == 0; }
  [[nodiscard]] constexpr unsigned bits() const { return bits_; }

  friend constexpr bool operator==(Flags, Flags) = default;

  /// Pipe-separated names in a fixed order, e.g. "boundary|degenerate".
  [[nodiscard]] std::string to_string() const {
    std::string out;
    auto add = [&](Flag f, std::string_view name) {
      if (!has(f))
        return;
      if (!out.empty())
        out += '|';
      out += name;
    };
    add(Flag::Boundary, "boundary");
    add(Flag::Degenerate, "degenerate");
    add(Flag::NonConverged, "nonconverged");
    add(Flag::Failed, "failed");
    return out;
  }

  static Flags parse(std::string_view text) {
    Flags f;
    while (!text.empty()) {
      const auto bar = text.find('|');
      const auto name = text.substr(0, bar);
      if (name == "boundary")
        f.set(Flag::Boundary);
      else if (name == "degenerate")
        f.set(Flag::Degenerate);
      else if (name == "nonconverged")
        f.set(Flag::NonConverged);
      else if (name == "failed")
        f.set(Flag::Failed);
      else
        throw FormatError("unknown flag '" + std::string(name) + "'");
      if (bar == std::string_view::npos)
        break;
      text.remove_prefix(bar + 1);
    }
    return f;
  }

private:
  unsigned bits_ = 0;
};

} // namespace stark

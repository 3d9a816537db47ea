#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stark/error.hpp"
#include "stark/linalg.hpp"
#include "stark/probe.hpp"

namespace stark {

/// Fixed-particle-number basis of an L-site chain. Bit (i-1) of a state is
/// site i; a set bit is spin up (sigma^z = +1).
struct SectorBasis {
  int L = 0;
  int N = 0;
  std::vector<std::uint64_t> states; // strictly increasing

  [[nodiscard]] std::size_t size() const { return states.size(); }

  [[nodiscard]] std::size_t index_of(std::uint64_t state) const {
    auto it = std::lower_bound(states.begin(), states.end(), state);
    if (it == states.end() || *it != state)
      throw InvalidArgument("state not in sector");
    return static_cast<std::size_t>(it - states.begin());
  }

  /// sigma^z of site i (1-based) in `state`.
  static int spin(std::uint64_t state, int site) {
    return ((state >> (site - 1)) & 1u) ? 1 : -1;
  }
};

/// All L-bit strings with exactly N set bits, in increasing integer order.
inline std::vector<std::uint64_t> sector_basis(int L, int N) {
  detail::require(L >= 0 && L <= 62, "sector_basis: L out of range");
  detail::require(N >= 0 && N <= L, "sector_basis: need 0 <= N <= L");
  std::vector<std::uint64_t> out;
  if (N == 0) {
    out.push_back(0);
    return out;
  }
  std::uint64_t s = (std::uint64_t{1} << N) - 1;
  const std::uint64_t limit = std::uint64_t{1} << L;
  // Gosper's hack: next larger integer with the same popcount.
  while (s < limit) {
    out.push_back(s);
    const std::uint64_t c = s & (~s + 1);
    const std::uint64_t r = s + c;
    s = (((r ^ s) >> 2) / c) | r;
  }
  return out;
}

/// Off-diagonal entry H(row, col) = H(col, row) = amplitude, row < col.
struct HoppingTerm {
  std::size_t row = 0;
  std::size_t col = 0;
  double amplitude = 0.0;
};

enum class BasisKind { Sites, MagnetizationSector };

/// Real symmetric probe Hamiltonian stored as diagonal plus a list of
/// off-diagonal pairs. Single-particle matrices are tridiagonal (pair k
/// couples sites k and k+1); many-body matrices live in the N = L/2 sector.
class HamiltonianMatrix {
public:
  ProbeSpec probe;
  BasisKind basis_kind = BasisKind::Sites;
  std::shared_ptr<const SectorBasis> basis; // null for the site basis
  std::vector<double> diagonal;
  std::vector<HoppingTerm> hopping;

  [[nodiscard]] std::size_t dimension() const { return diagonal.size(); }
  [[nodiscard]] bool is_tridiagonal() const {
    return basis_kind == BasisKind::Sites;
  }

  /// First off-diagonal of a tridiagonal matrix.
  [[nodiscard]] std::vector<double> off_diagonal() const {
    detail::require(is_tridiagonal(), "off_diagonal needs a tridiagonal matrix");
    std::vector<double> e(dimension() > 0 ? dimension() - 1 : 0, 0.0);
    for (const auto &t : hopping)
      e[t.row] = t.amplitude;
    return e;
  }

  [[nodiscard]] DenseMatrix to_dense() const {
    const std::size_t n = dimension();
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      m(i, i) = diagonal[i];
    for (const auto &t : hopping) {
      m(t.row, t.col) = t.amplitude;
      m(t.col, t.row) = t.amplitude;
    }
    return m;
  }

  /// y = H x.
  void apply(std::span<const double> x, std::span<double> y) const {
    const std::size_t n = dimension();
    for (std::size_t i = 0; i < n; ++i)
      y[i] = diagonal[i] * x[i];
    for (const auto &t : hopping) {
      y[t.row] += t.amplitude * x[t.col];
      y[t.col] += t.amplitude * x[t.row];
    }
  }

  [[nodiscard]] double max_abs_entry() const {
    double m = 0.0;
    for (double d : diagonal)
      m = std::max(m, std::abs(d));
    for (const auto &t : hopping)
      m = std::max(m, std::abs(t.amplitude));
    return m;
  }

  [[nodiscard]] std::string describe() const {
    return std::string(to_string(probe.family)) + " L=" + std::to_string(probe.L) +
           " h=" + std::to_string(probe.h) + " D=" + std::to_string(dimension());
  }
};

/// V = dH/dh, diagonal in both bases.
struct FieldGenerator {
  std::vector<double> diagonal;
};

struct BuildOptions {
  std::size_t dense_cap = 20000;
  /// Permit sectors above the dense cap (only the iterative ground-state
  /// path can use them).
  bool iterative = false;
};

inline HamiltonianMatrix build_single_particle(const ProbeSpec &spec) {
  detail::require(spec.family == Family::SingleParticle,
                  "build_single_particle: wrong family");
  detail::require(spec.L >= 2, "single-particle probe needs L >= 2");
  HamiltonianMatrix H;
  H.probe = spec;
  H.basis_kind = BasisKind::Sites;
  const auto n = static_cast<std::size_t>(spec.L);
  H.diagonal.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    H.diagonal[i] = spec.h * static_cast<double>(i + 1);
  H.hopping.reserve(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i)
    H.hopping.push_back({i, i + 1, spec.J});
  return H;
}

namespace detail {

inline long long zz_bond_sum(std::uint64_t state, int L) {
  long long s = 0;
  for (int i = 1; i < L; ++i)
    s += SectorBasis::spin(state, i) * SectorBasis::spin(state, i + 1);
  return s;
}

inline long long field_weight(std::uint64_t state, int L) {
  long long s = 0;
  for (int i = 1; i <= L; ++i)
    s += static_cast<long long>(i) * SectorBasis::spin(state, i);
  return s;
}

inline std::shared_ptr<const SectorBasis> half_filling_basis(int L) {
  auto basis = std::make_shared<SectorBasis>();
  basis->L = L;
  basis->N = L / 2;
  basis->states = sector_basis(L, L / 2);
  return basis;
}

} // namespace detail

inline HamiltonianMatrix build_many_body(const ProbeSpec &spec,
                                         const BuildOptions &options = {}) {
  detail::require(spec.family == Family::ManyBodyHalfFilling,
                  "build_many_body: wrong family");
  detail::require(spec.L >= 2 && spec.L % 2 == 0,
                  "half-filling probe needs even L >= 2, got L=" +
                      std::to_string(spec.L));
  auto basis = detail::half_filling_basis(spec.L);
  if (basis->size() > options.dense_cap && !options.iterative)
    throw InvalidArgument("sector dimension " + std::to_string(basis->size()) +
                          " exceeds dense cap " +
                          std::to_string(options.dense_cap) +
                          "; request the iterative ground-state path");

  HamiltonianMatrix H;
  H.probe = spec;
  H.basis_kind = BasisKind::MagnetizationSector;
  H.basis = basis;
  const int L = spec.L;
  H.diagonal.resize(basis->size());
  for (std::size_t a = 0; a < basis->size(); ++a) {
    const std::uint64_t s = basis->states[a];
    H.diagonal[a] = spec.J * static_cast<double>(detail::zz_bond_sum(s, L)) +
                    spec.h * static_cast<double>(detail::field_weight(s, L));
  }
  // sigma^x sigma^x + sigma^y sigma^y = 2 (sigma^+ sigma^- + h.c.): flips an
  // antiparallel neighbour pair with amplitude 2J.
  for (std::size_t a = 0; a < basis->size(); ++a) {
    const std::uint64_t s = basis->states[a];
    for (int i = 1; i < L; ++i) {
      const std::uint64_t pair = std::uint64_t{3} << (i - 1);
      const std::uint64_t bits = s & pair;
      if (bits == 0 || bits == pair)
        continue;
      const std::uint64_t t = s ^ pair;
      if (t < s)
        continue; // each pair once, from its smaller member
      H.hopping.push_back({a, basis->index_of(t), 2.0 * spec.J});
    }
  }
  return H;
}

inline HamiltonianMatrix build_hamiltonian(const ProbeSpec &spec,
                                           const BuildOptions &options = {}) {
  switch (spec.family) {
  case Family::SingleParticle:
    return build_single_particle(spec);
  case Family::ManyBodyHalfFilling:
    return build_many_body(spec, options);
  }
  throw InvalidArgument("unknown family");
}

inline FieldGenerator build_field_generator(const ProbeSpec &spec) {
  FieldGenerator V;
  if (spec.family == Family::SingleParticle) {
    detail::require(spec.L >= 2, "single-particle probe needs L >= 2");
    V.diagonal.resize(static_cast<std::size_t>(spec.L));
    for (int i = 0; i < spec.L; ++i)
      V.diagonal[static_cast<std::size_t>(i)] = static_cast<double>(i + 1);
    return V;
  }
  detail::require(spec.L >= 2 && spec.L % 2 == 0,
                  "half-filling probe needs even L >= 2");
  const auto states = sector_basis(spec.L, spec.L / 2);
  V.diagonal.reserve(states.size());
  for (auto s : states)
    V.diagonal.push_back(static_cast<double>(detail::field_weight(s, spec.L)));
  return V;
}

} // namespace stark

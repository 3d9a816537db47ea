#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stark/error.hpp"
#include "stark/hamiltonians.hpp"
#include "stark/linalg.hpp"

namespace stark {

/// Ascending eigenvalues and matching orthonormal eigenvectors (columns) of
/// one probe instance.
struct Spectrum {
  ProbeSpec probe;
  std::vector<double> energies;
  DenseMatrix vectors;
  /// max(1, max |H_ij|); sets the near-degeneracy tolerance.
  double matrix_scale = 1.0;

  [[nodiscard]] std::size_t dimension() const { return energies.size(); }
  [[nodiscard]] std::span<const double> state(std::size_t k) const {
    return vectors.column(k);
  }
  [[nodiscard]] double degeneracy_tolerance() const { return 1e-12 * matrix_scale; }
  [[nodiscard]] bool near_degenerate(std::size_t m, std::size_t n) const {
    return std::abs(energies[m] - energies[n]) < degeneracy_tolerance();
  }
};

/// Flip v so its largest-magnitude component is positive (first index wins
/// ties).
inline void fix_sign(std::span<double> v) {
  std::size_t best = 0;
  double best_abs = -1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > best_abs) {
      best_abs = std::abs(v[i]);
      best = i;
    }
  }
  if (!v.empty() && v[best] < 0.0)
    for (double &x : v)
      x = -x;
}

inline Spectrum full_eigendecomposition(const HamiltonianMatrix &H,
                                        std::size_t dense_cap = 20000) {
  if (H.dimension() > dense_cap)
    throw InvalidArgument("dimension " + std::to_string(H.dimension()) +
                          " above dense cap for " + H.describe());
  EigenPairs pairs;
  try {
    if (H.is_tridiagonal()) {
      const auto e = H.off_diagonal();
      pairs = tridiagonal_eigh(H.diagonal, e);
    } else {
      pairs = symmetric_eigh(H.to_dense());
    }
  } catch (const ConvergenceError &err) {
    throw ConvergenceError(std::string(err.what()) + " [" + H.describe() + "]");
  }
  Spectrum s;
  s.probe = H.probe;
  s.energies = std::move(pairs.values);
  s.vectors = std::move(pairs.vectors);
  s.matrix_scale = std::max(1.0, H.max_abs_entry());
  for (std::size_t k = 0; k < s.dimension(); ++k)
    fix_sign(s.vectors.column(k));
  return s;
}

inline Spectrum solve_probe(const ProbeSpec &spec, const BuildOptions &options = {}) {
  return full_eigendecomposition(build_hamiltonian(spec, options), options.dense_cap);
}

struct GroundState {
  double energy = 0.0;
  std::vector<double> vector;
  double residual = 0.0;
  int iterations = 0;
};

struct LanczosOptions {
  double tolerance = 1e-8; ///< on ||H v - E v||
  int krylov_size = 80;    ///< basis length before a restart
  int max_iterations = 20000;
  std::uint64_t seed = 0x5eedULL;
};

/// Lowest eigenpair by restarted Lanczos with full reorthogonalization.
/// The starting vector is a fixed pseudo-random vector so that runs are
/// reproducible and the start overlaps every symmetry sector. Krylov vectors
/// are kept orthogonal to `deflate` (orthonormal), which yields the lowest
/// eigenpair of the complement.
inline GroundState ground_state_iterative(const HamiltonianMatrix &H,
                                          const LanczosOptions &options = {},
                                          std::span<const std::vector<double>> deflate = {}) {
  const std::size_t n = H.dimension();
  detail::require(n >= 1, "empty operator");
  detail::require(deflate.size() < n, "deflation space fills the operator");
  GroundState out;
  if (n == 1) {
    out.energy = H.diagonal[0];
    out.vector = {1.0};
    return out;
  }
  auto project_out = [&](std::vector<double> &v) {
    for (const auto &d : deflate) {
      const double c = dot(v, d);
      for (std::size_t i = 0; i < n; ++i)
        v[i] -= c * d[i];
    }
  };

  std::vector<double> start(n);
  {
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto &x : start)
      x = 1.0 + dist(rng);
  }
  project_out(start);
  const auto m_max = static_cast<std::size_t>(
      std::max(2, std::min<int>(options.krylov_size, static_cast<int>(n))));

  std::vector<double> w(n);
  int total = 0;
  while (total < options.max_iterations) {
    const double start_norm = norm(start);
    for (auto &x : start)
      x /= start_norm;
    std::vector<std::vector<double>> basis;
    basis.push_back(start);
    std::vector<double> alpha, beta;

    for (std::size_t j = 0; j < m_max; ++j) {
      H.apply(basis[j], w);
      ++total;
      const double a = dot(w, basis[j]);
      alpha.push_back(a);
      // Two passes of classical Gram-Schmidt against the whole basis.
      for (int pass = 0; pass < 2; ++pass) {
        project_out(w);
        for (const auto &q : basis) {
          const double c = dot(w, q);
          for (std::size_t i = 0; i < n; ++i)
            w[i] -= c * q[i];
        }
      }
      const double b = norm(w);
      if (b < 1e-14 * std::max(1.0, std::abs(a)) || j + 1 == m_max ||
          basis.size() == n)
        break;
      beta.push_back(b);
      std::vector<double> next(n);
      for (std::size_t i = 0; i < n; ++i)
        next[i] = w[i] / b;
      basis.push_back(std::move(next));
    }

    const auto ritz = tridiagonal_eigh(alpha, beta);
    std::vector<double> x(n, 0.0);
    for (std::size_t k = 0; k < basis.size(); ++k) {
      const double c = ritz.vectors(k, 0);
      for (std::size_t i = 0; i < n; ++i)
        x[i] += c * basis[k][i];
    }
    project_out(x);
    const double xn = norm(x);
    for (auto &v : x)
      v /= xn;
    H.apply(x, w);
    project_out(w);
    const double theta = dot(w, x);
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      res += (w[i] - theta * x[i]) * (w[i] - theta * x[i]);
    res = std::sqrt(res);
    if (res <= options.tolerance) {
      fix_sign(x);
      out.energy = theta;
      out.vector = std::move(x);
      out.residual = res;
      out.iterations = total;
      return out;
    }
    start = std::move(x);
  }
  throw ConvergenceError("Lanczos did not converge within " +
                         std::to_string(options.max_iterations) +
                         " matrix-vector products [" + H.describe() + "]");
}

/// (E_k - E_min) / (E_max - E_min).
inline double normalized_energy(const Spectrum &spectrum, std::size_t k) {
  detail::require(spectrum.dimension() >= 2, "normalized_energy needs D >= 2");
  detail::require(k < spectrum.dimension(), "eigenstate index out of range");
  const double lo = spectrum.energies.front();
  const double hi = spectrum.energies.back();
  if (!(hi > lo))
    throw InvalidArgument("degenerate spectrum: E_max == E_min");
  if (k == 0)
    return 0.0;
  if (k + 1 == spectrum.dimension())
    return 1.0;
  return (spectrum.energies[k] - lo) / (hi - lo);
}

/// Index of the eigenstate whose normalized energy is closest to `epsilon`;
/// ties go to the lower index.
inline std::size_t select_eigenstate(const Spectrum &spectrum, double epsilon) {
  detail::require(epsilon >= 0.0 && epsilon <= 1.0,
                  "target energy must lie in [0, 1]");
  std::size_t best = 0;
  double best_distance = std::abs(normalized_energy(spectrum, 0) - epsilon);
  for (std::size_t k = 1; k < spectrum.dimension(); ++k) {
    const double d = std::abs(normalized_energy(spectrum, k) - epsilon);
    if (d < best_distance) {
      best_distance = d;
      best = k;
    }
  }
  return best;
}

struct GapRecord {
  double gap = 0.0;
  int L = 0;
  double h = 0.0;
};

inline GapRecord energy_gap(const Spectrum &spectrum) {
  detail::require(spectrum.dimension() >= 2, "energy gap needs D >= 2");
  return {std::max(0.0, spectrum.energies[1] - spectrum.energies[0]),
          spectrum.probe.L, spectrum.probe.h};
}

/// E_2 - E_1 from two Lanczos runs, the second deflated by the first state.
inline GapRecord energy_gap_iterative(const HamiltonianMatrix &H,
                                      const LanczosOptions &options = {}) {
  detail::require(H.dimension() >= 2, "energy gap needs D >= 2");
  const auto first = ground_state_iterative(H, options);
  const std::vector<std::vector<double>> deflate{first.vector};
  const auto second = ground_state_iterative(H, options, deflate);
  return {std::max(0.0, second.energy - first.energy), H.probe.L, H.probe.h};
}

} // namespace stark

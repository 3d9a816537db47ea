#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stark/error.hpp"
#include "stark/flags.hpp"
#include "stark/hamiltonians.hpp"
#include "stark/linalg.hpp"
#include "stark/spectra.hpp"

namespace stark {

enum class FisherMethod {
  PureSpectralSum,
  PureFiniteDifference,
  ClassicalPosition,
  ThermalSpectral,
  ThermalFidelity,
  /// Ground-state spectral sum evaluated by solving (H - E_1) x = Q V psi_1
  /// iteratively; used when the sector is too large for a full spectrum.
  PureLinearResponse,
};

inline std::string_view to_string(FisherMethod m) {
  switch (m) {
  case FisherMethod::PureSpectralSum:
    return "qfi_spectral";
  case FisherMethod::PureFiniteDifference:
    return "qfi_fidelity";
  case FisherMethod::ClassicalPosition:
    return "cfi_position";
  case FisherMethod::ThermalSpectral:
    return "qfi_thermal";
  case FisherMethod::ThermalFidelity:
    return "qfi_thermal_fidelity";
  case FisherMethod::PureLinearResponse:
    return "qfi_linear_response";
  }
  return "unknown";
}

inline FisherMethod parse_method(std::string_view name) {
  for (auto m : {FisherMethod::PureSpectralSum, FisherMethod::PureFiniteDifference,
                 FisherMethod::ClassicalPosition, FisherMethod::ThermalSpectral,
                 FisherMethod::ThermalFidelity, FisherMethod::PureLinearResponse})
    if (to_string(m) == name)
      return m;
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

inline bool is_thermal(FisherMethod m) {
  return m == FisherMethod::ThermalSpectral || m == FisherMethod::ThermalFidelity;
}

struct FisherEstimate {
  double value = 0.0;
  FisherMethod method = FisherMethod::PureSpectralSum;
  double delta_h = 0.0; ///< 0 for spectral methods
  int L = 0;
  double h = 0.0;
  std::optional<double> epsilon;
  std::optional<double> temperature;
  std::size_t state_index = 0;
  std::size_t excluded_pairs = 0;
  Flags flags;
};

/// Boltzmann weights over a spectrum, K = 1.
struct ThermalState {
  double temperature = 0.0;
  std::vector<double> weights;
};

/// Step-size control for the finite-difference estimators. The step is
/// rescaled until the infidelity 1 - F lies in [min_infidelity, max_infidelity].
struct StepControl {
  std::optional<double> initial_step;
  /// Fisher information expected near this point (previous grid value).
  std::optional<double> scale_hint;
  double min_infidelity = 1e-10;
  double max_infidelity = 1e-4;
  double target_infidelity = 1e-8;
  int max_rescalings = 8;
  double fallback_step = 1e-6;
  /// Infidelities at or below this are rounding noise. A state that stays
  /// below it up to a step of `zero_check_step` does not move with h: F = 0.
  double roundoff_infidelity = 1e-15;
  double zero_check_step = 1.0;

  [[nodiscard]] double first_step() const {
    if (initial_step) {
      detail::require(*initial_step > 0.0 && std::isfinite(*initial_step),
                      "finite-difference step must be positive");
      return *initial_step;
    }
    if (scale_hint && std::isfinite(*scale_hint))
      return 1e-4 / std::sqrt(std::max(*scale_hint, 1.0));
    return fallback_step;
  }
};

namespace detail {

/// V |psi>, elementwise since V is diagonal.
inline std::vector<double> apply_field(const FieldGenerator &V,
                                       std::span<const double> psi) {
  std::vector<double> out(psi.size());
  for (std::size_t i = 0; i < psi.size(); ++i)
    out[i] = V.diagonal[i] * psi[i];
  return out;
}

inline void check_field(const Spectrum &s, const FieldGenerator &V) {
  require(V.diagonal.size() == s.dimension(),
          "field generator length does not match spectrum dimension");
}

/// 1 - |<a|b>| computed as ||a - s b||^2 / 2 (s = sign of the overlap),
/// corrected for the norms of a and b. Avoids cancellation near 1.
inline double infidelity(std::span<const double> a, std::span<const double> b) {
  const double s = dot(a, b) < 0.0 ? -1.0 : 1.0;
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - s * b[i];
    diff += d * d;
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return 0.5 * (diff - (na - 1.0) - (nb - 1.0));
}

struct StepOutcome {
  double step = 0.0;
  double infidelity = 0.0;
};

/// Rescale the step until `infidelity_at(step)` falls inside the window.
template <class Eval>
StepOutcome control_step(Eval &&infidelity_at, const StepControl &control,
                         std::string_view what) {
  double step = control.first_step();
  double last = 0.0;
  double largest = 0.0;
  double tried = step;
  for (int attempt = 0; attempt <= control.max_rescalings; ++attempt) {
    tried = step;
    const double inf = infidelity_at(step);
    last = inf;
    largest = std::max(largest, std::abs(inf));
    if (inf >= control.min_infidelity && inf <= control.max_infidelity)
      return {step, inf};
    if (!(inf > 0.0))
      step *= 100.0;
    else
      step *= std::clamp(std::sqrt(control.target_infidelity / inf), 1e-3, 1e3);
  }
  if (largest <= control.roundoff_infidelity && tried >= control.zero_check_step)
    return {tried, 0.0};
  throw ConvergenceError(std::string(what) + ": step control failed after " +
                         std::to_string(control.max_rescalings) +
                         " rescalings (last 1-F=" + std::to_string(last) + ")");
}

/// Index of the eigenvector with maximal |overlap| with `reference`.
inline std::size_t match_by_overlap(const Spectrum &s, std::span<const double> reference) {
  std::size_t best = 0;
  double best_overlap = -1.0;
  for (std::size_t m = 0; m < s.dimension(); ++m) {
    const double o = std::abs(dot(s.state(m), reference));
    if (o > best_overlap) {
      best_overlap = o;
      best = m;
    }
  }
  return best;
}

} // namespace detail

/// <v_m| V |v_k> for all m.
inline std::vector<double> field_column(const Spectrum &s, const FieldGenerator &V,
                                        std::size_t k) {
  detail::check_field(s, V);
  const auto w = detail::apply_field(V, s.state(k));
  std::vector<double> out(s.dimension());
  for (std::size_t m = 0; m < s.dimension(); ++m)
    out[m] = dot(s.state(m), w);
  return out;
}

/// Full U^T diag(V) U in the eigenbasis.
inline DenseMatrix field_matrix(const Spectrum &s, const FieldGenerator &V) {
  detail::check_field(s, V);
  const std::size_t n = s.dimension();
  DenseMatrix w(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    auto src = s.state(c);
    auto dst = w.column(c);
    for (std::size_t i = 0; i < n; ++i)
      dst[i] = V.diagonal[i] * src[i];
  }
  return transpose_times(s.vectors, w);
}

inline FisherEstimate qfi_pure_spectral(const Spectrum &s, const FieldGenerator &V,
                                        std::size_t k) {
  detail::require(k < s.dimension(), "eigenstate index out of range");
  const auto column = field_column(s, V, k);
  FisherEstimate est;
  est.method = FisherMethod::PureSpectralSum;
  est.L = s.probe.L;
  est.h = s.probe.h;
  est.state_index = k;
  double sum = 0.0;
  for (std::size_t m = 0; m < s.dimension(); ++m) {
    if (m == k)
      continue;
    if (s.near_degenerate(m, k)) {
      ++est.excluded_pairs;
      continue;
    }
    const double gap = s.energies[m] - s.energies[k];
    sum += column[m] * column[m] / (gap * gap);
  }
  if (est.excluded_pairs > 0)
    est.flags.set(Flag::Degenerate);
  est.value = 4.0 * sum;
  return est;
}

/// Spectral QFI of the eigenstate closest to `epsilon`.
inline FisherEstimate qfi_pure_spectral_at(const Spectrum &s, const FieldGenerator &V,
                                           double epsilon) {
  auto est = qfi_pure_spectral(s, V, select_eigenstate(s, epsilon));
  est.epsilon = epsilon;
  return est;
}

/// Centered fidelity estimate: the state selected by `epsilon` at spec.h is
/// tracked to h -/+ step/2 by maximal overlap and
/// F_Q = 8 (1 - |<psi(h - step/2)|psi(h + step/2)>|) / step^2.
inline FisherEstimate qfi_pure_finite_difference(const Spectrum &centre, double epsilon,
                                                 const StepControl &control = {},
                                                 const BuildOptions &options = {}) {
  const ProbeSpec &spec = centre.probe;
  const std::size_t k = select_eigenstate(centre, epsilon);
  const auto reference = centre.state(k);

  auto tracked = [&](double field) {
    Spectrum s = solve_probe(spec.at_field(field), options);
    const std::size_t m = detail::match_by_overlap(s, reference);
    const auto v = s.state(m);
    return std::vector<double>(v.begin(), v.end());
  };
  const auto outcome = detail::control_step(
      [&](double step) {
        const auto minus = tracked(spec.h - 0.5 * step);
        const auto plus = tracked(spec.h + 0.5 * step);
        return detail::infidelity(minus, plus);
      },
      control, "qfi_pure_finite_difference");

  FisherEstimate est;
  est.method = FisherMethod::PureFiniteDifference;
  est.value = 8.0 * outcome.infidelity / (outcome.step * outcome.step);
  est.delta_h = outcome.step;
  est.L = spec.L;
  est.h = spec.h;
  est.epsilon = epsilon;
  est.state_index = k;
  return est;
}

inline FisherEstimate qfi_pure_finite_difference(const ProbeSpec &spec, double epsilon,
                                                 const StepControl &control = {},
                                                 const BuildOptions &options = {}) {
  return qfi_pure_finite_difference(solve_probe(spec, options), epsilon, control, options);
}

/// Classical Fisher information of a site-occupation measurement.
/// Probabilities below 1e-14 at h are skipped.
inline FisherEstimate cfi_position(const Spectrum &centre, double epsilon,
                                   const StepControl &control = {},
                                   const BuildOptions &options = {}) {
  const ProbeSpec &spec = centre.probe;
  detail::require(spec.family == Family::SingleParticle,
                  "position CFI is defined for the single-particle probe only");
  constexpr double p_floor = 1e-14;
  const std::size_t k = select_eigenstate(centre, epsilon);
  const auto reference = centre.state(k);

  auto tracked = [&](double field) {
    Spectrum s = solve_probe(spec.at_field(field), options);
    const auto v = s.state(detail::match_by_overlap(s, reference));
    return std::vector<double>(v.begin(), v.end());
  };
  std::vector<double> minus, plus;
  const auto outcome = detail::control_step(
      [&](double step) {
        minus = tracked(spec.h - step);
        plus = tracked(spec.h + step);
        return detail::infidelity(reference, plus);
      },
      control, "cfi_position");

  double sum = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double p = reference[i] * reference[i];
    if (p <= p_floor)
      continue;
    const double dp =
        (plus[i] * plus[i] - minus[i] * minus[i]) / (2.0 * outcome.step);
    sum += dp * dp / p;
  }
  FisherEstimate est;
  est.method = FisherMethod::ClassicalPosition;
  est.value = sum;
  est.delta_h = outcome.step;
  est.L = spec.L;
  est.h = spec.h;
  est.epsilon = epsilon;
  est.state_index = k;
  return est;
}

inline FisherEstimate cfi_position(const ProbeSpec &spec, double epsilon,
                                   const StepControl &control = {},
                                   const BuildOptions &options = {}) {
  detail::require(spec.family == Family::SingleParticle,
                  "position CFI is defined for the single-particle probe only");
  return cfi_position(solve_probe(spec, options), epsilon, control, options);
}

inline ThermalState thermal_state(const Spectrum &s, double temperature) {
  detail::require(temperature > 0.0 && std::isfinite(temperature),
                  "temperature must be positive and finite");
  detail::require(s.dimension() >= 1, "empty spectrum");
  ThermalState t;
  t.temperature = temperature;
  t.weights.resize(s.dimension());
  const double e0 = s.energies.front();
  double z = 0.0;
  for (std::size_t n = 0; n < s.dimension(); ++n) {
    t.weights[n] = std::exp(-(s.energies[n] - e0) / temperature);
    z += t.weights[n];
  }
  for (auto &p : t.weights)
    p /= z;
  return t;
}

/// Thermal QFI from the spectrum and the field in the eigenbasis
/// (`field_matrix`), so one matrix serves every temperature.
inline FisherEstimate qfi_thermal_spectral(const Spectrum &s, const DenseMatrix &Vm,
                                           double temperature) {
  detail::require(Vm.rows() == s.dimension() && Vm.cols() == s.dimension(),
                  "field matrix does not match spectrum");
  const auto thermal = thermal_state(s, temperature);
  const auto &p = thermal.weights;
  const std::size_t n = s.dimension();
  const double T = temperature;

  FisherEstimate est;
  est.method = FisherMethod::ThermalSpectral;
  est.L = s.probe.L;
  est.h = s.probe.h;
  est.temperature = temperature;

  // Populations: d p_n / dh = -p_n (V_nn - <V>) / T.
  double mean_v = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    mean_v += p[a] * Vm(a, a);
  double classical = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const double d = Vm(a, a) - mean_v;
    classical += p[a] * d * d;
  }
  classical /= T * T;

  // Coherences. For a < b (E_a <= E_b, p_a >= p_b):
  // p_b - p_a = p_a expm1(-(E_b - E_a)/T), finite as E_b -> E_a.
  constexpr double drop = 1e-15;
  double coherent = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    if (p[a] < 0.5 * drop)
      break; // weights are non-increasing, so every later pair is dropped
    for (std::size_t b = a + 1; b < n; ++b) {
      const double psum = p[a] + p[b];
      if (psum < drop)
        break;
      const double gap = s.energies[b] - s.energies[a];
      double ratio; // (p_b - p_a) / (E_b - E_a) / p_a
      if (s.near_degenerate(a, b)) {
        ++est.excluded_pairs;
        ratio = gap > 0.0 ? std::expm1(-gap / T) / gap : -1.0 / T;
      } else {
        ratio = std::expm1(-gap / T) / gap;
      }
      const double num = p[a] * ratio;
      const double vab = Vm(a, b);
      coherent += num * num / psum * vab * vab;
    }
  }
  // 2 * sum over ordered pairs m != n = 4 * sum over a < b.
  est.value = classical + 4.0 * coherent;
  if (est.excluded_pairs > 0)
    est.flags.set(Flag::Degenerate);
  return est;
}

inline FisherEstimate qfi_thermal_spectral(const Spectrum &s, const FieldGenerator &V,
                                           double temperature) {
  return qfi_thermal_spectral(s, field_matrix(s, V), temperature);
}

namespace detail {

/// Uhlmann fidelity of rho_a = U_a P_a U_a^T and rho_b = U_b P_b U_b^T:
/// the nuclear norm of sqrt(P_a) U_a^T U_b sqrt(P_b).
inline double uhlmann_from_eigen(const DenseMatrix &Ua, std::span<const double> pa,
                                 const DenseMatrix &Ub, std::span<const double> pb) {
  constexpr double keep = 1e-32;
  std::vector<std::size_t> ia, ib;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i] > keep)
      ia.push_back(i);
  for (std::size_t i = 0; i < pb.size(); ++i)
    if (pb[i] > keep)
      ib.push_back(i);
  if (ia.empty() || ib.empty())
    return 0.0;
  DenseMatrix B(ia.size(), ib.size());
  for (std::size_t c = 0; c < ib.size(); ++c)
    for (std::size_t r = 0; r < ia.size(); ++r)
      B(r, c) = std::sqrt(pa[ia[r]]) * dot(Ua.column(ia[r]), Ub.column(ib[c])) *
                std::sqrt(pb[ib[c]]);
  double total = 0.0;
  for (double sv : singular_values(B))
    total += sv;
  return total;
}

inline std::vector<double> checked_density_eigenvalues(std::vector<double> w,
                                                       std::string_view which) {
  double trace = 0.0;
  for (auto &x : w) {
    if (x < -1e-12)
      throw InvalidArgument(std::string(which) +
                            " has a negative eigenvalue " + std::to_string(x));
    if (x < 0.0)
      x = 0.0;
    trace += x;
  }
  if (std::abs(trace - 1.0) > 1e-10)
    throw InvalidArgument(std::string(which) + " trace differs from 1 by " +
                          std::to_string(trace - 1.0));
  return w;
}

} // namespace detail

/// Uhlmann fidelity Tr sqrt(sqrt(rho) sigma sqrt(rho)) of two density matrices.
inline double uhlmann_fidelity(const DenseMatrix &rho, const DenseMatrix &sigma) {
  detail::require(rho.rows() == rho.cols() && sigma.rows() == sigma.cols() &&
                      rho.rows() == sigma.rows(),
                  "density matrices must be square and of equal size");
  auto ea = symmetric_eigh(rho);
  auto eb = symmetric_eigh(sigma);
  const auto pa = detail::checked_density_eigenvalues(std::move(ea.values), "rho");
  const auto pb = detail::checked_density_eigenvalues(std::move(eb.values), "sigma");
  return detail::uhlmann_from_eigen(ea.vectors, pa, eb.vectors, pb);
}

inline double uhlmann_fidelity(const Spectrum &a, const ThermalState &ta,
                               const Spectrum &b, const ThermalState &tb) {
  return detail::uhlmann_from_eigen(a.vectors, ta.weights, b.vectors, tb.weights);
}

inline DenseMatrix density_matrix(const Spectrum &s, const ThermalState &t) {
  const std::size_t n = s.dimension();
  DenseMatrix rho(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double p = t.weights[k];
    if (p == 0.0)
      continue;
    const auto v = s.state(k);
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t r = 0; r < n; ++r)
        rho(r, c) += p * v[r] * v[c];
  }
  return rho;
}

/// F_Q = 8 (1 - F) / step^2 from two density matrices a step apart.
inline FisherEstimate qfi_thermal_fidelity(const DenseMatrix &rho,
                                           const DenseMatrix &rho_shifted, double step) {
  detail::require(step > 0.0 && std::isfinite(step), "step must be positive");
  const double f = uhlmann_fidelity(rho, rho_shifted);
  FisherEstimate est;
  est.method = FisherMethod::ThermalFidelity;
  est.value = std::max(0.0, 8.0 * (1.0 - f) / (step * step));
  est.delta_h = step;
  est.L = static_cast<int>(rho.rows());
  return est;
}

/// Centered Uhlmann estimate at spec.h with automatic step control.
inline FisherEstimate qfi_thermal_fidelity(const ProbeSpec &spec, double temperature,
                                           const StepControl &control = {},
                                           const BuildOptions &options = {}) {
  const auto outcome = detail::control_step(
      [&](double step) {
        const auto a = solve_probe(spec.at_field(spec.h - 0.5 * step), options);
        const auto b = solve_probe(spec.at_field(spec.h + 0.5 * step), options);
        return 1.0 - uhlmann_fidelity(a, thermal_state(a, temperature), b,
                                      thermal_state(b, temperature));
      },
      control, "qfi_thermal_fidelity");
  FisherEstimate est;
  est.method = FisherMethod::ThermalFidelity;
  est.value = 8.0 * outcome.infidelity / (outcome.step * outcome.step);
  est.delta_h = outcome.step;
  est.L = spec.L;
  est.h = spec.h;
  est.temperature = temperature;
  return est;
}

struct LinearResponseOptions {
  LanczosOptions lanczos{.tolerance = 1e-10};
  double tolerance = 1e-10; ///< relative residual of the linear solve
  int max_iterations = 10000;
};

/// Ground-state QFI without a full spectrum: solve Q (H - E_1) Q x = Q V psi_1
/// by conjugate gradients in the complement of psi_1; F_Q = 4 |x|^2.
inline FisherEstimate qfi_ground_linear_response(const HamiltonianMatrix &H,
                                                 const FieldGenerator &V,
                                                 const LinearResponseOptions &options = {}) {
  detail::require(V.diagonal.size() == H.dimension(),
                  "field generator length does not match operator");
  const auto gs = ground_state_iterative(H, options.lanczos);
  const std::size_t n = H.dimension();
  const auto &psi = gs.vector;
  auto project = [&](std::vector<double> &v) {
    const double c = dot(v, psi);
    for (std::size_t i = 0; i < n; ++i)
      v[i] -= c * psi[i];
  };
  std::vector<double> tmp(n);
  auto apply = [&](const std::vector<double> &x, std::vector<double> &y) {
    H.apply(x, tmp);
    for (std::size_t i = 0; i < n; ++i)
      y[i] = tmp[i] - gs.energy * x[i];
    project(y);
  };

  auto b = detail::apply_field(V, psi);
  project(b);
  const double bnorm = norm(b);
  FisherEstimate est;
  est.method = FisherMethod::PureLinearResponse;
  est.L = H.probe.L;
  est.h = H.probe.h;
  est.epsilon = 0.0;
  if (bnorm == 0.0)
    return est;

  std::vector<double> x(n, 0.0), r = b, p = b, Ap(n);
  double rr = dot(r, r);
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (std::sqrt(rr) <= options.tolerance * bnorm)
      break;
    apply(p, Ap);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0))
      throw ConvergenceError("linear response: operator not positive [" +
                             H.describe() + "]");
    const double step = rr / pAp;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += step * p[i];
      r[i] -= step * Ap[i];
    }
    project(r);
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i)
      p[i] = r[i] + beta * p[i];
  }
  if (it == options.max_iterations)
    throw ConvergenceError("linear response did not converge [" + H.describe() + "]");
  project(x);
  est.value = 4.0 * dot(x, x);
  return est;
}

} // namespace stark

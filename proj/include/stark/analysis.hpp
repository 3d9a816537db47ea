#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "stark/metrology.hpp"
#include "stark/scaling.hpp"
#include "stark/spectra.hpp"
#include "stark/sweep.hpp"

namespace stark {

// ------------------------------------------------------------- QFI curves

/// h -> pure-state QFI at fixed (family, L, eps) for a spectral method.
inline std::function<double(double)> pure_qfi_curve(Family family, int L, double epsilon,
                                                    FisherMethod method = FisherMethod::PureSpectralSum,
                                                    double J = 1.0) {
  const ProbeSpec probe{family, L, J, 0.0};
  probe.validate();
  auto V = std::make_shared<FieldGenerator>(build_field_generator(probe));
  if (method == FisherMethod::PureLinearResponse) {
    detail::require(epsilon == 0.0, "linear response is a ground-state method");
    return [probe, V](double h) {
      BuildOptions opt;
      opt.iterative = true;
      return qfi_ground_linear_response(build_hamiltonian(probe.at_field(h), opt), *V).value;
    };
  }
  detail::require(method == FisherMethod::PureSpectralSum,
                  "peak refinement needs qfi_spectral or qfi_linear_response");
  return [probe, V, epsilon](double h) {
    return qfi_pure_spectral_at(solve_probe(probe.at_field(h)), *V, epsilon).value;
  };
}

// ----------------------------------------------------------------- peaks

struct SizePeak {
  int L = 0;
  PeakResult peak;
};

/// Peak of each size's sampled curve. With `refine`, the grid maximum is
/// polished by golden section on freshly computed values.
inline std::vector<SizePeak> peaks_from_series(Family family, const std::vector<SizeSeries> &series,
                                               double epsilon, FisherMethod method, bool refine,
                                               const PeakOptions &options = {}) {
  std::vector<SizePeak> out;
  for (const auto &s : series) {
    std::vector<ScanPoint> scan;
    for (std::size_t i = 0; i < s.h.size(); ++i)
      if (s.h[i] > 0.0)
        scan.push_back({s.h[i], s.F[i]});
    std::sort(scan.begin(), scan.end(),
              [](const ScanPoint &a, const ScanPoint &b) { return a.h < b.h; });
    if (refine) {
      out.push_back({s.L, refine_peak(std::move(scan),
                                      pure_qfi_curve(family, s.L, epsilon, method), options)});
    } else {
      auto no_eval = [](double) -> double { return -std::numeric_limits<double>::infinity(); };
      PeakOptions coarse = options;
      coarse.max_refinements = 0;
      auto p = refine_peak(std::move(scan), no_eval, coarse);
      p.refinement.clear();
      p.unimodal = true;
      out.push_back({s.L, std::move(p)});
    }
  }
  return out;
}

struct PeakScaling {
  std::vector<SizePeak> peaks;
  PowerLawFit beta;  ///< F_peak = c L^beta
  PowerLawFit h_max; ///< h_max = a L^-b, exponent is -b
  bool any_boundary = false;
};

inline PeakScaling peak_scaling(std::vector<SizePeak> peaks) {
  PeakScaling out;
  std::vector<double> Ls, F, hm;
  for (const auto &p : peaks) {
    Ls.push_back(p.L);
    F.push_back(p.peak.F_peak);
    hm.push_back(p.peak.h_max);
    out.any_boundary = out.any_boundary || p.peak.boundary;
  }
  out.beta = fit_power_law(Ls, F);
  if (std::all_of(hm.begin(), hm.end(), [](double h) { return h > 0.0; }))
    out.h_max = fit_power_law(Ls, hm);
  out.peaks = std::move(peaks);
  return out;
}

// --------------------------------------------------------------- thermal

struct ThermalCurve {
  int L = 0;
  double h = 0.0;
  std::vector<double> T;
  std::vector<double> F;
};

struct ThermalExponents {
  std::vector<PowerLawFit> decay; ///< per L, F = c(L) T^-mu
  std::vector<int> sizes;
  double mu_mean = 0.0;
  double mu_min = 0.0;
  double mu_max = 0.0;
  PowerLawFit gamma; ///< c(L) = c0 L^gamma
};

/// High-temperature fits over [T_lo, T_hi] for each size, then the size
/// scaling of the decay prefactor.
inline ThermalExponents thermal_exponents(const std::vector<ThermalCurve> &curves, double T_lo,
                                          double T_hi) {
  detail::require(curves.size() >= 4, "thermal exponents need at least four sizes");
  ThermalExponents out;
  std::vector<double> Ls, cs;
  out.mu_min = std::numeric_limits<double>::infinity();
  out.mu_max = -out.mu_min;
  for (const auto &c : curves) {
    auto fit = fit_power_law_window(c.T, c.F, T_lo, T_hi);
    const double mu = -fit.exponent;
    out.mu_mean += mu / static_cast<double>(curves.size());
    out.mu_min = std::min(out.mu_min, mu);
    out.mu_max = std::max(out.mu_max, mu);
    out.sizes.push_back(c.L);
    Ls.push_back(c.L);
    cs.push_back(fit.prefactor);
    out.decay.push_back(fit);
  }
  out.gamma = fit_power_law(Ls, cs);
  return out;
}

/// Largest |F(T)/F_pure - 1| over T <= T_max.
inline double plateau_deviation(const ThermalCurve &c, double F_pure, double T_max) {
  double worst = 0.0;
  for (std::size_t i = 0; i < c.T.size(); ++i)
    if (c.T[i] <= T_max)
      worst = std::max(worst, std::abs(c.F[i] / F_pure - 1.0));
  return worst;
}

/// Thermal QFI on a T grid from one spectrum.
inline ThermalCurve thermal_curve(const ProbeSpec &probe, const std::vector<double> &Ts) {
  const auto s = solve_probe(probe);
  const auto Vm = field_matrix(s, build_field_generator(probe));
  ThermalCurve out{probe.L, probe.h, Ts, {}};
  for (double T : Ts)
    out.F.push_back(qfi_thermal_spectral(s, Vm, T).value);
  return out;
}

// ------------------------------------------------------------------- gap

/// Gap between the two lowest levels. Many-body sectors larger than
/// `dense_limit` use two deflated Lanczos runs instead of a full spectrum.
inline double ground_gap(const ProbeSpec &probe, std::size_t dense_limit = 1000) {
  if (probe.family == Family::ManyBodyHalfFilling) {
    BuildOptions opt;
    opt.iterative = true;
    const auto H = build_hamiltonian(probe, opt);
    if (H.dimension() > dense_limit)
      return energy_gap_iterative(H, LanczosOptions{.tolerance = 1e-10}).gap;
    return energy_gap(full_eigendecomposition(H)).gap;
  }
  return energy_gap(solve_probe(probe)).gap;
}

struct GapSizeScaling {
  std::vector<int> sizes;
  std::vector<double> gaps;
  PowerLawFit fit; ///< gap = a L^-z
  double z = 0.0;
};

inline GapSizeScaling gap_size_scaling(Family family, const std::vector<int> &sizes, double h,
                                       double J = 1.0) {
  GapSizeScaling out;
  out.sizes = sizes;
  std::vector<double> Ls;
  for (int L : sizes) {
    out.gaps.push_back(ground_gap({family, L, J, h}));
    Ls.push_back(L);
  }
  out.fit = fit_power_law(Ls, out.gaps);
  out.z = -out.fit.exponent;
  return out;
}

struct GapFieldScaling {
  int L = 0;
  double h_max = 0.0;
  std::vector<double> h;
  std::vector<double> gaps;
  PowerLawFit fit; ///< gap = a (h - h_max)^eta
  double eta = 0.0;
};

inline GapFieldScaling gap_field_scaling(Family family, int L, double h_max,
                                         const std::vector<double> &hs, double J = 1.0) {
  GapFieldScaling out;
  out.L = L;
  out.h_max = h_max;
  std::vector<double> dx;
  for (double h : hs) {
    if (h <= h_max)
      continue;
    out.h.push_back(h);
    out.gaps.push_back(ground_gap({family, L, J, h}));
    dx.push_back(h - h_max);
  }
  out.fit = fit_power_law(dx, out.gaps);
  out.eta = out.fit.exponent;
  return out;
}

// ------------------------------------------------------------- collapse

/// Restrict each series to h in [lo, hi].
inline std::vector<SizeSeries> window_series(const std::vector<SizeSeries> &series, double lo,
                                             double hi) {
  std::vector<SizeSeries> out;
  for (const auto &s : series) {
    SizeSeries w{s.L, {}, {}};
    for (std::size_t i = 0; i < s.h.size(); ++i)
      if (s.h[i] >= lo && s.h[i] <= hi) {
        w.h.push_back(s.h[i]);
        w.F.push_back(s.F[i]);
      }
    out.push_back(std::move(w));
  }
  return out;
}

/// Sampled spectral QFI curves per size on a shared grid.
inline std::vector<SizeSeries> sample_qfi(Family family, const std::vector<int> &sizes,
                                          double epsilon, const std::vector<double> &hs,
                                          FisherMethod method = FisherMethod::PureSpectralSum) {
  std::vector<SizeSeries> out;
  for (int L : sizes) {
    const auto f = pure_qfi_curve(family, L, epsilon, method);
    SizeSeries s{L, hs, {}};
    for (double h : hs)
      s.F.push_back(f(h));
    out.push_back(std::move(s));
  }
  return out;
}

/// Best of several collapse starts (lowest S, ties to the earlier start).
inline CollapseResult best_collapse(const std::vector<SizeSeries> &data,
                                    const std::vector<std::array<double, 3>> &starts,
                                    const NelderMeadOptions &nm = {},
                                    const CollapseOptions &options = {}) {
  detail::require(!starts.empty(), "collapse needs at least one start");
  std::optional<CollapseResult> best;
  for (const auto &s : starts) {
    auto r = optimize_collapse(data, s[0], s[1], s[2], nm, options);
    if (!best || r.S < best->S)
      best = std::move(r);
  }
  return *best;
}

} // namespace stark

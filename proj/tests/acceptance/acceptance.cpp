// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "stark/stark.hpp"

using namespace stark;

namespace {

constexpr Family SP = Family::SingleParticle;
constexpr Family MB = Family::ManyBodyHalfFilling;

const std::vector<int> kSizes{200, 400, 600, 800, 1000};

struct Check {
  bool pass = true;
  std::string detail;

  void expect(bool ok, const std::string &what) {
    pass = pass && ok;
    if (!detail.empty())
      detail += "; ";
    detail += (ok ? "" : "!") + what;
  }
};

std::string fmt(const char *format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// -------------------------------------------------- shared single-particle

/// Coarse peak scans for every eps on one set of spectra, refined per eps.
struct SingleParticleData {
  std::vector<double> eps;
  std::vector<PeakScaling> peaks; // per eps

  SingleParticleData() {
    for (int i = 0; i <= 10; ++i)
      eps.push_back(i / 10.0);
    const auto grid = peak_scan_grid(1e-10, 1.0);
    std::vector<std::vector<SizeSeries>> series(eps.size());
    for (int L : kSizes) {
      const auto V = build_field_generator({SP, L, 1.0, 0.0});
      for (auto &s : series)
        s.push_back({L, grid, {}});
      for (double h : grid) {
        const auto spectrum = solve_probe({SP, L, 1.0, h});
        for (std::size_t e = 0; e < eps.size(); ++e)
          series[e].back().F.push_back(qfi_pure_spectral_at(spectrum, V, eps[e]).value);
      }
    }
    for (std::size_t e = 0; e < eps.size(); ++e)
      peaks.push_back(peak_scaling(
          peaks_from_series(SP, series[e], eps[e], FisherMethod::PureSpectralSum, true)));
  }

  const PeakScaling &at(double e) const {
    return peaks[static_cast<std::size_t>(std::lround(e * 10))];
  }
  double h_max(double e, int L) const {
    for (const auto &p : at(e).peaks)
      if (p.L == L)
        return p.peak.h_max;
    throw InvalidArgument("no peak for L");
  }
};

const SingleParticleData &sp_data() {
  static const SingleParticleData data;
  return data;
}

/// Collapse windows: the band-edge crossover sits near L^-3, the interior
/// peak near 4/L.
std::pair<double, double> collapse_window(double eps) {
  if (eps == 0.0 || eps == 1.0)
    return {1e-10, 1e-2};
  return {1e-4, 1e-1};
}

std::vector<std::array<double, 3>> collapse_starts() {
  std::vector<std::array<double, 3>> starts;
  for (double a : {1.0, 2.0, 3.0, 4.0, 5.0})
    for (double nu : {0.25, 0.5, 0.75, 1.0, 1.25})
      starts.push_back({0.0, a, nu});
  return starts;
}

struct CollapseRow {
  double eps = 0.0;
  CollapseResult fit;
  double beta = 0.0;
};

const std::vector<CollapseRow> &collapse_table() {
  static const std::vector<CollapseRow> rows = [] {
    std::vector<CollapseRow> out;
    const auto &sp = sp_data();
    for (double eps : sp.eps) {
      const auto [lo, hi] = collapse_window(eps);
      const auto data = sample_qfi(SP, kSizes, eps, log_grid(lo, hi, 40));
      out.push_back({eps, best_collapse(data, collapse_starts()), sp.at(eps).beta.exponent});
    }
    return out;
  }();
  return rows;
}

// ----------------------------------------------------------------- criteria

Check c1() {
  Check c;
  const auto &fit = sp_data().at(0.0).beta;
  c.expect(within(fit.exponent, 5.98, 0.10), fmt("beta=%.4f (5.98+-0.10)", fit.exponent));
  c.expect(fit.r_squared >= 0.999, fmt("R2=%.6f", fit.r_squared));
  return c;
}

Check c2() {
  Check c;
  const auto &fit = sp_data().at(0.5).beta;
  c.expect(within(fit.exponent, 4.11, 0.15), fmt("beta=%.4f (4.11+-0.15)", fit.exponent));
  c.expect(fit.r_squared >= 0.999, fmt("R2=%.6f", fit.r_squared));
  return c;
}

Check c3() {
  Check c;
  const auto grid = log_grid(1e-7, 5.0, static_cast<std::size_t>(
                                            std::ceil(10 * std::log10(5.0 / 1e-7))) + 1);
  const std::vector<int> Ls{800, 1000};
  for (auto [eps, target, tol, hi] :
       {std::tuple{0.0, 2.0, 0.05, 1e-2}, std::tuple{0.5, 4.0, 0.10, 5.0}}) {
    const double hm = sp_data().h_max(eps, 1000);
    const auto series = sample_qfi(SP, Ls, eps, grid);
    const auto tail = fit_localized_tail(series, hm, 50.0 * hm, hi);
    c.expect(within(tail.alpha, target, tol),
             fmt("eps=%.1f alpha=%.4f (%.2f+-%.2f, %zu pts in [%.3g, %.3g])", eps, tail.alpha,
                 target, tol, tail.h_used.size(), tail.h_used.front(), tail.h_used.back()));
  }
  return c;
}

Check c4() {
  Check c;
  const auto &rows = collapse_table();
  const auto &e0 = rows.front().fit;
  const auto &e5 = rows[5].fit;
  c.expect(within(e0.alpha, 2.00, 0.1) && within(e0.nu, 0.33, 0.05) && e0.h_c <= 1e-4,
           fmt("eps=0 alpha=%.4f nu=%.4f h_c=%.3g S=%.3g", e0.alpha, e0.nu, e0.h_c, e0.S));
  c.expect(within(e5.alpha, 4.00, 0.15) && within(e5.nu, 1.00, 0.08) && e5.h_c <= 1e-4,
           fmt("eps=0.5 alpha=%.4f nu=%.4f h_c=%.3g S=%.3g", e5.alpha, e5.nu, e5.h_c, e5.S));
  c.expect(e0.flags.empty() && e5.flags.empty(), "optimizer converged");
  return c;
}

Check c5() {
  // Reference table of (alpha, nu, beta) per eps = 0, 0.1, ..., 1.
  static const double ref_alpha[] = {2.00, 3.75, 3.90, 3.97, 4.00, 4.00,
                                     4.00, 3.97, 3.90, 3.75, 2.00};
  static const double ref_nu[] = {0.33, 0.94, 0.98, 1.00, 1.00, 1.00,
                                  1.00, 1.00, 0.98, 0.94, 0.33};
  static const double ref_beta[] = {5.98, 4.13, 4.09, 4.07, 4.06, 4.11,
                                    4.06, 4.07, 4.09, 4.13, 5.98};
  constexpr double symmetry_tol = 0.02;
  Check c;
  const auto &rows = collapse_table();
  double worst_rel = 0.0, worst_entry = 0.0, worst_sym = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto &r = rows[i];
    const double rel = exponent_relation_check(r.fit.alpha, r.fit.nu, r.beta);
    const double entry = std::max({std::abs(r.fit.alpha - ref_alpha[i]),
                                   std::abs(r.fit.nu - ref_nu[i]),
                                   std::abs(r.beta - ref_beta[i])});
    std::printf("  eps=%.1f alpha=%.4f nu=%.4f alpha/nu=%.4f beta=%.4f rel=%.4f h_c=%.3g S=%.3g\n",
                r.eps, r.fit.alpha, r.fit.nu, r.fit.alpha / r.fit.nu, r.beta, rel, r.fit.h_c,
                r.fit.S);
    worst_rel = std::max(worst_rel, rel);
    worst_entry = std::max(worst_entry, entry);
    const auto &m = rows[rows.size() - 1 - i];
    worst_sym = std::max({worst_sym, std::abs(r.fit.alpha - m.fit.alpha),
                          std::abs(r.fit.nu - m.fit.nu), std::abs(r.beta - m.beta)});
  }
  c.expect(worst_rel <= 0.03, fmt("max |beta-alpha/nu|/beta=%.4f (<=0.03)", worst_rel));
  c.expect(worst_entry <= 0.15, fmt("max table deviation=%.4f (<=0.15)", worst_entry));
  c.expect(worst_sym <= symmetry_tol,
           fmt("max eps<->1-eps asymmetry=%.2g (<=%.2f)", worst_sym, symmetry_tol));
  return c;
}

Check c6() {
  Check c;
  for (auto [eps, target, tol] : {std::tuple{0.0, 5.98, 0.10}, std::tuple{0.5, 4.08, 0.15}}) {
    std::vector<double> Ls, F;
    for (const auto &p : sp_data().at(eps).peaks) {
      StepControl control;
      control.scale_hint = p.peak.F_peak;
      const auto cfi = cfi_position(ProbeSpec{SP, p.L, 1.0, p.peak.h_max}, eps, control);
      const double ratio = cfi.value / p.peak.F_peak;
      if (p.L == 200 || p.L == 1000)
        c.expect(ratio >= 0.99 && ratio <= 1.0 + 1e-3,
                 fmt("eps=%.1f L=%d F_C/F_Q=%.6f", eps, p.L, ratio));
      Ls.push_back(p.L);
      F.push_back(cfi.value);
    }
    const auto fit = fit_power_law(Ls, F);
    c.expect(within(fit.exponent, target, tol),
             fmt("eps=%.1f CFI exponent=%.4f (%.2f+-%.2f)", eps, fit.exponent, target, tol));
  }
  return c;
}

Check c7() {
  Check c;
  const auto &fit = sp_data().at(0.5).h_max;
  const double b = -fit.exponent;
  c.expect(within(b, 1.0, 0.05), fmt("b=%.4f (1.0+-0.05)", b));
  c.expect(within(fit.prefactor, 4.0, 0.5), fmt("a=%.4f (4+-0.5)", fit.prefactor));
  return c;
}

Check c8() {
  Check c;
  for (double h : {1e-8, 0.05}) {
    // Window anchored on the largest spectrum's bandwidth.
    const auto big = solve_probe({SP, kSizes.back(), 1.0, h});
    const double W = big.energies.back() - big.energies.front();
    const double T_lo = 10.0 * W, T_hi = 100.0 * W;
    std::vector<ThermalCurve> curves;
    double worst_plateau = 0.0;
    for (int L : kSizes) {
      const ProbeSpec probe{SP, L, 1.0, h};
      const auto s = solve_probe(probe);
      const double gap = s.energies[1] - s.energies[0];
      const auto V = build_field_generator(probe);
      const auto Vm = field_matrix(s, V);
      std::vector<double> Ts = log_grid(T_lo, T_hi, 11);
      const auto plateau_T = log_grid(gap / 1000.0, gap / 10.0, 9);
      ThermalCurve curve{L, h, {}, {}};
      for (double T : Ts) {
        curve.T.push_back(T);
        curve.F.push_back(qfi_thermal_spectral(s, Vm, T).value);
      }
      curves.push_back(curve);
      ThermalCurve low{L, h, {}, {}};
      for (double T : plateau_T) {
        low.T.push_back(T);
        low.F.push_back(qfi_thermal_spectral(s, Vm, T).value);
      }
      const double pure = qfi_pure_spectral(s, V, 0).value;
      worst_plateau = std::max(worst_plateau, plateau_deviation(low, pure, gap / 10.0));
    }
    const auto ex = thermal_exponents(curves, T_lo, T_hi);
    c.expect(within(ex.mu_min, 1.99, 0.05) && within(ex.mu_max, 1.99, 0.05),
             fmt("h=%g mu in [%.4f, %.4f] (1.99+-0.05)", h, ex.mu_min, ex.mu_max));
    c.expect(within(ex.gamma.exponent, 2.00, 0.05),
             fmt("h=%g gamma=%.4f (2.00+-0.05)", h, ex.gamma.exponent));
    c.expect(worst_plateau <= 0.01, fmt("h=%g plateau deviation=%.2g (<=1%%)", h, worst_plateau));
  }
  return c;
}

/// Many-body transition peaks and extended-phase values, shared by 9 and 10.
struct ManyBodyData {
  std::vector<int> sizes{8, 10, 12, 14, 16};
  std::vector<SizePeak> peaks;
  std::vector<double> extended;

  ManyBodyData() {
    for (int L : sizes) {
      const auto f = pure_qfi_curve(MB, L, 0.0, FisherMethod::PureLinearResponse);
      peaks.push_back({L, locate_peak(f, 0.3, 3.0)});
      extended.push_back(f(1e-6));
    }
  }
};

const ManyBodyData &mb_data() {
  static const ManyBodyData data;
  return data;
}

Check c9() {
  Check c;
  const auto z = gap_size_scaling(SP, kSizes, 1e-10);
  double worst = 0.0;
  for (std::size_t i = 0; i < kSizes.size(); ++i) {
    const double n = kSizes[i] + 1.0;
    const double exact =
        2.0 * (std::cos(std::numbers::pi / n) - std::cos(2.0 * std::numbers::pi / n));
    worst = std::max(worst, std::abs(z.gaps[i] / exact - 1.0));
  }
  c.expect(within(z.z, 2.0, 0.05), fmt("z=%.4f (2.0+-0.05)", z.z));
  c.expect(worst <= 1e-6, fmt("gap vs cosine spectrum rel=%.2g", worst));

  const double hm_sp = sp_data().h_max(0.0, 1000);
  const auto eta_sp = gap_field_scaling(SP, 1000, hm_sp, log_grid(1e-5, 1e-3, 11));
  c.expect(within(eta_sp.eta, 0.66, 0.05),
           fmt("single-particle eta=%.4f (0.66+-0.05, h in [1e-5,1e-3])", eta_sp.eta));

  const auto &mb = mb_data();
  const int L = mb.sizes.back();
  const auto eta_mb = gap_field_scaling(MB, L, mb.peaks.back().peak.h_max, log_grid(4, 10, 11));
  c.expect(within(eta_mb.eta, 1.18, 0.15),
           fmt("many-body eta=%.4f (1.18+-0.15, L=%d, h in [4,10])", eta_mb.eta, L));
  return c;
}

Check c10() {
  Check c;
  const auto &mb = mb_data();
  bool monotone = true;
  std::string peaks;
  for (std::size_t i = 0; i < mb.peaks.size(); ++i) {
    if (i > 0)
      monotone = monotone && mb.peaks[i].peak.F_peak > mb.peaks[i - 1].peak.F_peak;
    peaks += fmt("%s%d:%.4g@%.3f", i ? " " : "", mb.peaks[i].L, mb.peaks[i].peak.F_peak,
                 mb.peaks[i].peak.h_max);
  }
  const auto scaling = peak_scaling(mb.peaks);
  std::vector<double> Ls(mb.sizes.begin(), mb.sizes.end());
  const auto ext = fit_power_law(Ls, mb.extended);
  c.expect(monotone, "monotone peaks " + peaks);
  c.expect(scaling.beta.exponent > 2.0, "super-Heisenberg");
  c.expect(scaling.beta.exponent >= 3.0 && scaling.beta.exponent <= 5.0,
           fmt("beta=%.4f in [3,5]", scaling.beta.exponent));
  c.expect(within(ext.exponent, 3.67, 1.0), fmt("extended beta=%.4f (3.67+-1.0)", ext.exponent));

  const auto grid = log_grid(1.0, 10.0, 21);
  const std::vector<int> tail_sizes{mb.sizes[mb.sizes.size() - 2], mb.sizes.back()};
  const auto series = sample_qfi(MB, tail_sizes, 0.0, grid, FisherMethod::PureLinearResponse);
  const auto tail = fit_localized_tail(series, mb.peaks.back().peak.h_max, 2.0, 8.0);
  c.expect(within(tail.alpha, 4.0, 0.3),
           fmt("tail alpha=%.4f (4.0+-0.3, %zu pts)", tail.alpha, tail.h_used.size()));
  return c;
}

Check c11() {
  Check c;
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) {
    return lo * std::pow(hi / lo, unit(rng));
  };
  double worst_pure = 0.0, worst_thermal = 0.0;
  int pure_points = 0, thermal_points = 0, zero_points = 0;
  std::string worst_where;
  for (int i = 0; i < 200; ++i) {
    const bool many = i % 4 == 3;
    const int L = many ? 4 + 2 * static_cast<int>(unit(rng) * 4)
                       : 2 + static_cast<int>(unit(rng) * 49);
    const double h = log_uniform(1e-6, 10.0);
    const double eps = unit(rng);
    const ProbeSpec probe{many ? MB : SP, L, 1.0, h};
    const auto s = solve_probe(probe);
    const auto spectral = qfi_pure_spectral_at(s, build_field_generator(probe), eps);
    StepControl control;
    control.scale_hint = spectral.value;
    const auto fd = qfi_pure_finite_difference(s, eps, control);
    // Some small many-body sectors hold field-independent states (F = 0).
    const double rel = spectral.value == 0.0 ? (fd.value == 0.0 ? 0.0 : INFINITY)
                                             : std::abs(fd.value / spectral.value - 1.0);
    zero_points += spectral.value == 0.0 ? 1 : 0;
    if (rel > worst_pure) {
      worst_pure = rel;
      worst_where = fmt("%s L=%d h=%.3g eps=%.3f", many ? "mb" : "sp", L, h, eps);
    }
    ++pure_points;
  }
  for (int i = 0; i < 40; ++i) {
    const bool many = i % 4 == 3;
    const int L = many ? 4 + 2 * static_cast<int>(unit(rng) * 3)
                       : 2 + static_cast<int>(unit(rng) * 19);
    const double h = log_uniform(1e-6, 10.0);
    const double T = log_uniform(1e-2, 1e2);
    const ProbeSpec probe{many ? MB : SP, L, 1.0, h};
    const auto spectral =
        qfi_thermal_spectral(solve_probe(probe), build_field_generator(probe), T);
    StepControl control;
    control.scale_hint = spectral.value;
    const auto uhlmann = qfi_thermal_fidelity(probe, T, control);
    worst_thermal = std::max(worst_thermal, std::abs(uhlmann.value / spectral.value - 1.0));
    ++thermal_points;
  }
  c.expect(worst_pure <= 1e-3, fmt("pure %d pts (%d with F=0) max rel=%.2g (%s)", pure_points,
                                   zero_points, worst_pure, worst_where.c_str()));
  c.expect(worst_thermal <= 1e-3,
           fmt("thermal %d pts max rel=%.2g", thermal_points, worst_thermal));
  return c;
}

Check c12() {
  Check c;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("stark_acceptance_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  SweepPlan plan;
  plan.family = SP;
  plan.sizes = {20, 40, 60};
  plan.epsilons = {0.0, 0.5, 1.0};
  plan.h_grid = GridSpec::parse("log:1e-6:10:25");
  plan.T_grid = GridSpec::parse("log:0.01:100:5");
  plan.methods = {FisherMethod::PureSpectralSum, FisherMethod::PureFiniteDifference,
                  FisherMethod::ClassicalPosition, FisherMethod::ThermalSpectral,
                  FisherMethod::ThermalFidelity};

  plan.record_wall_time = false;
  plan.jobs = 1;
  const auto serial = to_csv(run_sweep(plan));
  plan.jobs = 4;
  const auto parallel = to_csv(run_sweep(plan));
  c.expect(serial == parallel, "jobs=1 vs jobs=4 byte-identical");

  plan.record_wall_time = true;
  plan.cache_dir = dir;
  SweepStats first, second;
  const auto a = run_sweep(plan, &first);
  plan.jobs = 1;
  const auto b = run_sweep(plan, &second);
  c.expect(to_csv(a) == to_csv(b) && second.cache_hits == second.tasks,
           fmt("cached rerun byte-identical (%zu/%zu batches reused)", second.cache_hits,
               second.tasks));
  const auto untimed = parse_csv(serial);
  bool same_values = a.size() == untimed.size();
  for (std::size_t i = 0; same_values && i < a.size(); ++i)
    same_values = identical(a[i], untimed[i], false);
  c.expect(same_values, "timed and untimed runs agree outside wall_time_s");
  std::filesystem::remove_all(dir);
  return c;
}

} // namespace

int main() {
  const std::vector<std::pair<const char *, std::function<Check()>>> criteria{
      {"C1  beta ground state", c1},
      {"C2  beta midspectrum", c2},
      {"C3  localized tail alpha", c3},
      {"C4  data collapse", c4},
      {"C5  exponent relation and table", c5},
      {"C6  position measurement CFI", c6},
      {"C7  h_max scaling", c7},
      {"C8  thermal universality", c8},
      {"C9  gap exponents", c9},
      {"C10 many-body properties", c10},
      {"C11 oracle equivalence", c11},
      {"C12 determinism", c12},
  };
  int failures = 0;
  const auto start = std::chrono::steady_clock::now();
  for (const auto &[name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = run();
    } catch (const std::exception &e) {
      c.pass = false;
      c.detail = std::string("exception: ") + e.what();
    }
    failures += c.pass ? 0 : 1;
    std::printf("%s %s: %s [%.1fs]\n", c.pass ? "PASS" : "FAIL", name, c.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed in %.1fs\n", static_cast<int>(criteria.size()) - failures,
              criteria.size(), seconds_since(start));
  return failures == 0 ? 0 : 1;
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stark/error.hpp"
#include "stark/flags.hpp"
#include "stark/metrology.hpp"
#include "stark/spectra.hpp"

namespace stark {

// ---------------------------------------------------------------- peaks

struct ScanPoint {
  double h = 0.0;
  double value = 0.0;
};

struct PeakResult {
  double h_max = 0.0;
  double F_peak = 0.0;
  double h_lo = 0.0;
  double h_hi = 0.0;
  bool boundary = false;
  /// False when refinement found nothing above the coarse maximum's
  /// neighbours, i.e. the bracket was not unimodal.
  bool unimodal = true;
  std::vector<ScanPoint> scan;
  std::vector<ScanPoint> refinement;
};

struct PeakOptions {
  int points_per_decade = 20;
  double relative_tolerance = 1e-3;
  /// Coarse points within this relative distance of the maximum count as
  /// tied; the lowest such h wins, so a flat plateau pins to the lower edge.
  double flat_tolerance = 1e-9;
  int max_refinements = 200;
};

/// `n` log-spaced points from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  detail::require(lo > 0.0 && hi > lo, "log grid needs 0 < lo < hi");
  detail::require(n >= 2, "log grid needs at least 2 points");
  std::vector<double> g(n);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

inline std::vector<double> peak_scan_grid(double lo, double hi,
                                          const PeakOptions &options = {}) {
  detail::require(lo > 0.0 && hi > lo, "peak search needs 0 < h_lo < h_hi");
  const double decades = std::log10(hi / lo);
  const auto n = static_cast<std::size_t>(
      std::max(2.0, std::ceil(decades * options.points_per_decade - 1e-9) + 1.0));
  return log_grid(lo, hi, n);
}

/// Refine a coarse scan by golden-section search in log h around its best
/// point. The scan must be sorted by h.
template <class Eval>
PeakResult refine_peak(std::vector<ScanPoint> scan, Eval &&f,
                       const PeakOptions &options = {}) {
  detail::require(scan.size() >= 2, "peak scan needs at least 2 points");
  PeakResult out;
  out.h_lo = scan.front().h;
  out.h_hi = scan.back().h;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto &p : scan)
    top = std::max(top, p.value);
  std::size_t best = 0;
  while (scan[best].value < top - options.flat_tolerance * std::abs(top))
    ++best;
  out.h_max = scan[best].h;
  out.F_peak = scan[best].value;
  out.scan = std::move(scan);
  const auto &s = out.scan;
  if (best == 0 || best + 1 == s.size()) {
    out.boundary = true;
    return out;
  }

  constexpr double inv_phi = 0.6180339887498949;
  double a = std::log(s[best - 1].h), b = std::log(s[best + 1].h);
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  auto eval = [&](double x) {
    const double h = std::exp(x);
    const double v = f(h);
    out.refinement.push_back({h, v});
    return v;
  };
  double fc = eval(c), fd = eval(d);
  for (int it = 0; it < options.max_refinements; ++it) {
    if (std::expm1(b - a) < options.relative_tolerance)
      break;
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = eval(d);
    }
  }
  double best_refined = -std::numeric_limits<double>::infinity();
  double best_h = out.h_max;
  for (const auto &p : out.refinement)
    if (p.value > best_refined) {
      best_refined = p.value;
      best_h = p.h;
    }
  if (best_refined >= out.F_peak) {
    out.F_peak = best_refined;
    out.h_max = best_h;
  } else {
    out.unimodal = false;
  }
  return out;
}

/// Maximum of f over [lo, hi]: log-spaced coarse scan then golden section.
template <class Eval>
PeakResult locate_peak(Eval &&f, double lo, double hi, const PeakOptions &options = {}) {
  std::vector<ScanPoint> scan;
  for (double h : peak_scan_grid(lo, hi, options))
    scan.push_back({h, f(h)});
  return refine_peak(std::move(scan), f, options);
}

/// Peak of the spectral QFI of the eigenstate closest to `epsilon`.
inline PeakResult locate_qfi_peak(const ProbeSpec &probe, double epsilon, double lo,
                                  double hi, const PeakOptions &options = {}) {
  const auto V = build_field_generator(probe);
  return locate_peak(
      [&](double h) {
        return qfi_pure_spectral_at(solve_probe(probe.at_field(h)), V, epsilon).value;
      },
      lo, hi, options);
}

// ------------------------------------------------------------ power laws

struct PowerLawFit {
  double exponent = 0.0;
  double prefactor = 0.0;
  double r_squared = 0.0;
  double x_lo = 0.0;
  double x_hi = 0.0;
  std::size_t points = 0;
};

/// Least squares of log y on log x.
inline PowerLawFit fit_power_law(const std::vector<double> &xs,
                                 const std::vector<double> &ys) {
  detail::require(xs.size() == ys.size(), "fit_power_law: length mismatch");
  detail::require(xs.size() >= 4, "fit_power_law needs at least 4 points, got " +
                                      std::to_string(xs.size()));
  const std::size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0) || !std::isfinite(xs[i]) || !std::isfinite(ys[i]))
      throw InvalidArgument("fit_power_law needs positive finite data");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  detail::require(sxx > 0.0, "fit_power_law needs at least two distinct x");
  PowerLawFit fit;
  fit.exponent = sxy / sxx;
  fit.prefactor = std::exp(my - fit.exponent * mx);
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ly[i] - (my + fit.exponent * (lx[i] - mx));
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  fit.x_lo = *std::min_element(xs.begin(), xs.end());
  fit.x_hi = *std::max_element(xs.begin(), xs.end());
  fit.points = n;
  return fit;
}

/// fit_power_law restricted to lo <= x <= hi.
inline PowerLawFit fit_power_law_window(const std::vector<double> &xs,
                                        const std::vector<double> &ys, double lo,
                                        double hi) {
  std::vector<double> wx, wy;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i] >= lo && xs[i] <= hi) {
      wx.push_back(xs[i]);
      wy.push_back(ys[i]);
    }
  return fit_power_law(wx, wy);
}

struct TailFit {
  double alpha = 0.0; ///< F ~ (h - h_max)^-alpha
  PowerLawFit fit;    ///< in the variable h - h_max
  std::vector<double> h_used;
};

/// One size's sampled curve.
struct SizeSeries {
  int L = 0;
  std::vector<double> h;
  std::vector<double> F;
};

/// Tail exponent from points on the largest size that are converged in L
/// (relative difference to the second largest size below `convergence`).
/// All series must share one h grid.
inline TailFit fit_localized_tail(const std::vector<SizeSeries> &series, double h_max,
                                  double h_lo, double h_hi,
                                  double convergence = 0.01) {
  detail::require(series.size() >= 2, "tail fit needs the two largest sizes");
  std::vector<const SizeSeries *> order;
  for (const auto &s : series)
    order.push_back(&s);
  std::sort(order.begin(), order.end(),
            [](const SizeSeries *a, const SizeSeries *b) { return a->L < b->L; });
  const auto &big = *order.back();
  const auto &second = *order[order.size() - 2];
  detail::require(big.h == second.h, "tail fit needs a shared h grid");
  TailFit out;
  std::vector<double> dx, ys;
  for (std::size_t i = 0; i < big.h.size(); ++i) {
    const double h = big.h[i];
    if (h <= h_max || h < h_lo || h > h_hi)
      continue;
    if (std::abs(big.F[i] - second.F[i]) > convergence * std::abs(big.F[i]))
      continue;
    dx.push_back(h - h_max);
    ys.push_back(big.F[i]);
    out.h_used.push_back(h);
  }
  if (dx.size() < 4)
    throw InvalidArgument("tail fit: only " + std::to_string(dx.size()) +
                          " size-converged points in window");
  out.fit = fit_power_law(dx, ys);
  out.alpha = -out.fit.exponent;
  return out;
}

/// |beta - alpha/nu| / beta.
inline double exponent_relation_check(double alpha, double nu, double beta) {
  detail::require(nu != 0.0, "nu must be non-zero");
  detail::require(beta != 0.0, "beta must be non-zero");
  return std::abs(beta - alpha / nu) / std::abs(beta);
}

/// Amplitude A of F = 1 / (1/(c L^beta) + A |h - h_max|^alpha), by least
/// squares in log space over points where the tail term is positive.
inline double fit_ansatz_amplitude(const std::vector<SizeSeries> &series,
                                   const std::vector<double> &h_max, double c,
                                   double beta, double alpha) {
  detail::require(series.size() == h_max.size(), "one h_max per series");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double plateau = 1.0 / (c * std::pow(series[s].L, beta));
    for (std::size_t i = 0; i < series[s].h.size(); ++i) {
      const double tail = 1.0 / series[s].F[i] - plateau;
      const double dh = std::abs(series[s].h[i] - h_max[s]);
      if (tail <= 0.0 || dh == 0.0)
        continue;
      acc += std::log(tail) - alpha * std::log(dh);
      ++n;
    }
  }
  detail::require(n > 0, "no tail points for the ansatz amplitude");
  return std::exp(acc / static_cast<double>(n));
}

inline double ansatz_value(int L, double h, double h_max, double c, double beta,
                           double alpha, double A) {
  return 1.0 / (1.0 / (c * std::pow(L, beta)) + A * std::pow(std::abs(h - h_max), alpha));
}

// -------------------------------------------------------------- collapse

struct CollapseOptions {
  std::size_t neighbours = 6;
  /// Fraction of points that must find a master-curve estimate.
  double min_coverage = 0.3;
  double penalty = 1e3;
};

struct CollapseScore {
  double S = 0.0;
  std::size_t evaluated = 0;
  std::size_t total = 0;
};

/// Master-curve residual of the rescaled data x = L^{1/nu} (h - h_c),
/// y = ln F - (alpha/nu) ln L. Each point is compared with a local linear
/// fit through its nearest points (in x) from the other sizes; points
/// outside the other sizes' x range are skipped.
inline CollapseScore collapse_quality(const std::vector<SizeSeries> &data, double h_c,
                                      double alpha, double nu,
                                      const CollapseOptions &options = {}) {
  detail::require(data.size() >= 3, "collapse needs at least 3 sizes");
  detail::require(nu > 0.0, "collapse needs nu > 0");
  struct Pt {
    std::size_t series;
    double x, y;
  };
  std::vector<Pt> pts;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto &d = data[s];
    detail::require(d.h.size() == d.F.size(), "series length mismatch");
    detail::require(d.h.size() >= 8, "collapse needs at least 8 points per size");
    const double lnL = std::log(static_cast<double>(d.L));
    const double xs = std::exp(lnL / nu);
    for (std::size_t i = 0; i < d.h.size(); ++i) {
      detail::require(d.F[i] > 0.0, "collapse needs positive F");
      pts.push_back({s, xs * (d.h[i] - h_c), std::log(d.F[i]) - alpha / nu * lnL});
    }
  }

  CollapseScore score;
  score.total = pts.size();
  double sum = 0.0;
  std::vector<std::pair<double, std::size_t>> near;
  for (const auto &p : pts) {
    double fmin = std::numeric_limits<double>::infinity();
    double fmax = -fmin;
    near.clear();
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (pts[j].series == p.series)
        continue;
      fmin = std::min(fmin, pts[j].x);
      fmax = std::max(fmax, pts[j].x);
      near.emplace_back(std::abs(pts[j].x - p.x), j);
    }
    if (near.size() < 2 || p.x < fmin || p.x > fmax)
      continue;
    const std::size_t k = std::min(options.neighbours, near.size());
    std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(k),
                      near.end());
    // Least-squares line in (x - p.x); its intercept is the estimate at p.x.
    double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
    for (std::size_t q = 0; q < k; ++q) {
      const auto &o = pts[near[q].second];
      const double u = o.x - p.x;
      s0 += 1;
      s1 += u;
      s2 += u * u;
      t0 += o.y;
      t1 += u * o.y;
    }
    const double det = s0 * s2 - s1 * s1;
    const double estimate = det > 0.0 ? (s2 * t0 - s1 * t1) / det : t0 / s0;
    sum += (p.y - estimate) * (p.y - estimate);
    ++score.evaluated;
  }
  if (score.evaluated == 0)
    throw InvalidArgument("collapse: no point has a master-curve estimate");
  if (static_cast<double>(score.evaluated) <
      options.min_coverage * static_cast<double>(score.total))
    score.S = options.penalty;
  else
    score.S = sum / static_cast<double>(score.evaluated);
  return score;
}

struct NelderMeadOptions {
  double relative_step = 0.05;
  double zero_step = 2.5e-4;
  double x_tolerance = 1e-6; ///< relative to max(1, |x|)
  double f_tolerance = 1e-8;
  int max_iterations = 2000;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Downhill simplex with the standard coefficients (1, 2, 1/2, 1/2). The
/// initial simplex moves each coordinate by +relative_step (zero_step if the
/// coordinate is zero).
template <class Objective>
NelderMeadResult nelder_mead(Objective &&f, std::vector<double> x0,
                             const NelderMeadOptions &options = {}) {
  const std::size_t n = x0.size();
  detail::require(n >= 1, "nelder_mead needs at least one parameter");
  std::vector<std::vector<double>> simplex{x0};
  for (std::size_t i = 0; i < n; ++i) {
    auto v = x0;
    v[i] = v[i] != 0.0 ? v[i] * (1.0 + options.relative_step) : options.zero_step;
    simplex.push_back(std::move(v));
  }
  std::vector<double> fv;
  for (const auto &v : simplex)
    fv.push_back(f(v));

  std::vector<std::size_t> order(n + 1);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<std::vector<double>> s2;
    std::vector<double> f2;
    for (auto i : order) {
      s2.push_back(simplex[i]);
      f2.push_back(fv[i]);
    }
    simplex = std::move(s2);
    fv = std::move(f2);
  };
  auto combine = [&](const std::vector<double> &a, const std::vector<double> &b,
                     double t) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = a[i] + t * (b[i] - a[i]);
    return out;
  };

  NelderMeadResult result;
  sort_simplex();
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    double spread_x = 0.0;
    for (std::size_t v = 1; v <= n; ++v)
      for (std::size_t i = 0; i < n; ++i)
        spread_x = std::max(spread_x, std::abs(simplex[v][i] - simplex[0][i]) /
                                          std::max(1.0, std::abs(simplex[0][i])));
    double spread_f = 0.0;
    for (std::size_t v = 1; v <= n; ++v)
      spread_f = std::max(spread_f, std::abs(fv[v] - fv[0]));
    if (spread_x <= options.x_tolerance && spread_f <= options.f_tolerance) {
      result.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t i = 0; i < n; ++i)
        centroid[i] += simplex[v][i] / static_cast<double>(n);
    const auto &worst = simplex[n];
    const auto xr = combine(centroid, worst, -1.0);
    const double fr = f(xr);
    if (fr < fv[0]) {
      const auto xe = combine(centroid, worst, -2.0);
      const double fe = f(xe);
      if (fe < fr) {
        simplex[n] = xe;
        fv[n] = fe;
      } else {
        simplex[n] = xr;
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      simplex[n] = xr;
      fv[n] = fr;
    } else {
      bool shrink = false;
      if (fr < fv[n]) {
        const auto xc = combine(centroid, worst, -0.5);
        const double fc = f(xc);
        if (fc <= fr) {
          simplex[n] = xc;
          fv[n] = fc;
        } else {
          shrink = true;
        }
      } else {
        const auto xcc = combine(centroid, worst, 0.5);
        const double fcc = f(xcc);
        if (fcc < fv[n]) {
          simplex[n] = xcc;
          fv[n] = fcc;
        } else {
          shrink = true;
        }
      }
      if (shrink)
        for (std::size_t v = 1; v <= n; ++v) {
          simplex[v] = combine(simplex[0], simplex[v], 0.5);
          fv[v] = f(simplex[v]);
        }
    }
    sort_simplex();
  }
  result.x = simplex[0];
  result.value = fv[0];
  result.iterations = it;
  return result;
}

struct CollapseResult {
  double h_c = 0.0;
  double alpha = 0.0;
  double nu = 0.0;
  double S = 0.0;
  int iterations = 0;
  Flags flags;
  std::vector<int> sizes;
  double h_lo = 0.0;
  double h_hi = 0.0;
};

inline CollapseResult optimize_collapse(const std::vector<SizeSeries> &data, double h_c0,
                                        double alpha0, double nu0,
                                        const NelderMeadOptions &nm = {},
                                        const CollapseOptions &options = {}) {
  detail::require(nu0 > 0.0, "initial nu must be positive");
  collapse_quality(data, h_c0, alpha0, nu0, options); // validates the datasets
  auto objective = [&](const std::vector<double> &p) {
    if (!(p[2] > 0.0))
      return options.penalty;
    try {
      return collapse_quality(data, p[0], p[1], p[2], options).S;
    } catch (const InvalidArgument &) {
      return options.penalty;
    }
  };
  const auto r = nelder_mead(objective, {h_c0, alpha0, nu0}, nm);
  CollapseResult out;
  out.h_c = r.x[0];
  out.alpha = r.x[1];
  out.nu = r.x[2];
  out.S = r.value;
  out.iterations = r.iterations;
  if (!r.converged)
    out.flags.set(Flag::NonConverged);
  out.h_lo = std::numeric_limits<double>::infinity();
  out.h_hi = -out.h_lo;
  for (const auto &d : data) {
    out.sizes.push_back(d.L);
    for (double h : d.h) {
      out.h_lo = std::min(out.h_lo, h);
      out.h_hi = std::max(out.h_hi, h);
    }
  }
  return out;
}

} // namespace stark

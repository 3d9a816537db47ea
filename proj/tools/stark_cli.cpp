// stark: sweep, analyze and plot Fisher-information data for the gradient
// field probes.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "stark/stark.hpp"

using namespace stark;
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitFlagged = 2;

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  if (EVP_Digest(data.data(), data.size(), md, &n, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  std::string out;
  for (unsigned i = 0; i < n; ++i) {
    char buf[3];
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json fit_json(const PowerLawFit &f) {
  return {{"exponent", number(f.exponent)}, {"prefactor", number(f.prefactor)},
          {"r_squared", number(f.r_squared)}, {"x_lo", number(f.x_lo)},
          {"x_hi", number(f.x_hi)}, {"points", f.points}};
}

void write_text(const fs::path &path, std::string_view text) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  atomic_write(path, text);
}

std::vector<FisherMethod> parse_methods(const std::string &text) {
  std::vector<FisherMethod> out;
  for (auto name : split(text, ','))
    out.push_back(parse_method(name));
  return out;
}

// ------------------------------------------------------------------ sweep

struct SweepArgs {
  std::string family, sizes, eps = "0", h_grid, T_grid, methods = "qfi_spectral", out, cache_dir;
  double J = 1.0;
  int jobs = 1;
  bool no_timing = false;
  double fd_target = 1e-8;
  std::size_t dense_cap = 20000;
};

SweepPlan make_plan(const SweepArgs &a) {
  SweepPlan plan;
  plan.family = parse_family(a.family);
  plan.sizes = parse_size_list(a.sizes);
  plan.epsilons = GridSpec::parse(a.eps).points();
  plan.h_grid = GridSpec::parse(a.h_grid);
  if (!a.T_grid.empty())
    plan.T_grid = GridSpec::parse(a.T_grid);
  plan.methods = parse_methods(a.methods);
  plan.J = a.J;
  plan.jobs = a.jobs;
  plan.record_wall_time = !a.no_timing;
  plan.settings.step.target_infidelity = a.fd_target;
  plan.settings.dense_cap = a.dense_cap;
  std::string cache = a.cache_dir;
  if (cache.empty())
    if (const char *env = std::getenv("STARK_CACHE_DIR"))
      cache = env;
  if (!cache.empty())
    plan.cache_dir = fs::path(cache);
  plan.validate();
  return plan;
}

/// key=value overlay that reproduces this run with `--config`.
std::string effective_ini(const SweepArgs &a) {
  std::string s;
  auto kv = [&](const char *k, const std::string &v) { s += std::string(k) + "=" + v + "\n"; };
  kv("family", a.family);
  kv("L", a.sizes);
  kv("eps", a.eps);
  kv("h-grid", a.h_grid);
  if (!a.T_grid.empty())
    kv("T-grid", a.T_grid);
  kv("methods", a.methods);
  kv("J", format_double(a.J));
  kv("jobs", std::to_string(a.jobs));
  kv("no-timing", a.no_timing ? "true" : "false");
  kv("fd-target", format_double(a.fd_target));
  kv("dense-cap", std::to_string(a.dense_cap));
  return s;
}

int cmd_sweep(const SweepArgs &a) {
  const auto plan = make_plan(a); // all validation before compute or output
  const auto records = run_sweep(plan);

  json cfg;
  cfg["command"] = "sweep";
  cfg["family"] = a.family;
  cfg["L"] = plan.sizes;
  cfg["eps"] = plan.epsilons;
  cfg["h_grid"] = a.h_grid;
  cfg["T_grid"] = a.T_grid.empty() ? json(nullptr) : json(a.T_grid);
  json methods = json::array();
  for (auto m : plan.methods)
    methods.push_back(std::string(to_string(m)));
  cfg["methods"] = methods;
  cfg["J"] = plan.J;
  cfg["jobs"] = plan.jobs;
  cfg["record_wall_time"] = plan.record_wall_time;
  cfg["numerical_settings"] = plan.settings.canonical();
  cfg["settings_fingerprint"] = hex64(fnv1a(plan.settings.canonical()));
  cfg["records"] = records.size();

  std::size_t failed = 0;
  for (const auto &r : records)
    failed += r.flags.has(Flag::Failed) ? 1 : 0;
  cfg["failed_records"] = failed;

  const fs::path out(a.out);
  fs::create_directories(out);
  atomic_write(out / "records.csv", to_csv(records));
  atomic_write(out / "config.json", cfg.dump(2) + "\n");
  atomic_write(out / "config.ini", effective_ini(a));
  std::cerr << "wrote " << records.size() << " records to " << (out / "records.csv").string()
            << "\n";
  if (failed) {
    std::cerr << failed << " records failed (flag 'failed')\n";
    return kExitFlagged;
  }
  return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string kind, in, out, svg, method = "qfi_spectral", starts, edge_window, window;
  std::optional<double> eps, h, h_lo, h_hi, T_lo, T_hi, h_max;
  bool no_refine = false;
};

struct Dataset {
  std::vector<SweepRecord> records;
  std::string digest;
  Family family = Family::SingleParticle;
};

Dataset load_dataset(const std::string &path) {
  Dataset d;
  const auto text = read_file(path);
  d.records = parse_csv(text);
  d.digest = sha256_hex(text);
  if (d.records.empty())
    throw FormatError("input '" + path + "' holds no records");
  d.family = d.records.front().family;
  for (const auto &r : d.records)
    if (r.family != d.family)
      throw FormatError("input mixes probe families; analyze one family at a time");
  return d;
}

std::set<double> eps_values(const Dataset &d, FisherMethod m) {
  std::set<double> out;
  for (const auto &r : d.records)
    if (r.method == m && r.epsilon)
      out.insert(*r.epsilon);
  return out;
}

double pick_eps(const Dataset &d, FisherMethod m, const std::optional<double> &requested) {
  const auto available = eps_values(d, m);
  if (available.empty())
    throw FormatError("input has no '" + std::string(to_string(m)) + "' records");
  if (requested) {
    if (!available.count(*requested))
      throw FormatError("input has no '" + std::string(to_string(m)) +
                        "' records at eps=" + format_double(*requested));
    return *requested;
  }
  if (available.size() != 1)
    throw InvalidArgument("input holds several eps values; choose one with --eps");
  return *available.begin();
}

std::vector<SizeSeries> pure_series(const Dataset &d, FisherMethod m, double eps) {
  auto series = series_by_size(d.records, m, eps);
  if (series.empty())
    throw FormatError("no usable records for the requested method and eps");
  for (auto &s : series) {
    std::vector<std::size_t> idx(s.h.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.h[a] < s.h[b]; });
    SizeSeries sorted{s.L, {}, {}};
    for (auto i : idx) {
      sorted.h.push_back(s.h[i]);
      sorted.F.push_back(s.F[i]);
    }
    s = std::move(sorted);
  }
  return series;
}

bool refinable(FisherMethod m) {
  return m == FisherMethod::PureSpectralSum || m == FisherMethod::PureLinearResponse;
}

std::vector<SizePeak> series_peaks(const Dataset &d, const std::vector<SizeSeries> &series,
                                   FisherMethod m, double eps, bool no_refine) {
  return peaks_from_series(d.family, series, eps, m, refinable(m) && !no_refine);
}

json peaks_json(const std::vector<SizePeak> &peaks) {
  json arr = json::array();
  for (const auto &p : peaks)
    arr.push_back({{"L", p.L},
                   {"h_max", number(p.peak.h_max)},
                   {"F_peak", number(p.peak.F_peak)},
                   {"boundary", p.peak.boundary},
                   {"unimodal", p.peak.unimodal},
                   {"refinement_evaluations", p.peak.refinement.size()}});
  return arr;
}

svg::Plot curve_plot(const std::vector<SizeSeries> &series, const std::string &title,
                     const std::string &y_label) {
  svg::Plot p;
  p.title = title;
  p.x_label = "h/J";
  p.y_label = y_label;
  p.log_x = p.log_y = true;
  for (const auto &s : series)
    p.series.push_back({"L=" + std::to_string(s.L), s.h, s.F});
  return p;
}

std::pair<double, double> parse_window(const std::string &text) {
  const auto parts = split(text, ':');
  if (parts.size() != 2)
    throw InvalidArgument("window '" + text + "' must be lo:hi");
  return {parse_double(parts[0]), parse_double(parts[1])};
}

std::vector<std::array<double, 3>> collapse_starts(const std::string &text) {
  std::vector<std::array<double, 3>> out;
  if (text.empty()) {
    for (double a : {1.0, 2.0, 3.0, 4.0, 5.0})
      for (double nu : {0.25, 0.5, 0.75, 1.0, 1.25})
        out.push_back({0.0, a, nu});
    return out;
  }
  for (auto item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3)
      throw InvalidArgument("collapse start '" + std::string(item) + "' must be h_c:alpha:nu");
    out.push_back({parse_double(parts[0]), parse_double(parts[1]), parse_double(parts[2])});
  }
  return out;
}

json collapse_json(const CollapseResult &r) {
  return {{"h_c", number(r.h_c)},        {"alpha", number(r.alpha)},
          {"nu", number(r.nu)},          {"alpha_over_nu", number(r.alpha / r.nu)},
          {"S", number(r.S)},            {"iterations", r.iterations},
          {"flags", r.flags.to_string()}, {"sizes", r.sizes},
          {"h_lo", number(r.h_lo)},      {"h_hi", number(r.h_hi)}};
}

int cmd_analyze(const AnalyzeArgs &a) {
  const auto d = load_dataset(a.in);
  const FisherMethod m = parse_method(a.method);
  json report;
  report["kind"] = a.kind;
  report["input"] = {{"path", a.in}, {"sha256", d.digest}, {"records", d.records.size()}};
  report["family"] = std::string(to_string(d.family));
  report["method"] = std::string(to_string(m));
  std::optional<svg::Plot> plot;
  bool flagged = false;

  if (a.kind == "peak" || a.kind == "beta") {
    const double eps = pick_eps(d, m, a.eps);
    const auto series = pure_series(d, m, eps);
    const auto peaks = series_peaks(d, series, m, eps, a.no_refine);
    report["eps"] = eps;
    report["refined"] = refinable(m) && !a.no_refine;
    report["peaks"] = peaks_json(peaks);
    for (const auto &p : peaks)
      flagged = flagged || p.peak.boundary || !p.peak.unimodal;
    if (peaks.size() >= 2) {
      const auto sc = peak_scaling(peaks);
      report["beta"] = fit_json(sc.beta);
      if (sc.h_max.points)
        report["h_max_fit"] = {{"a", number(sc.h_max.prefactor)},
                               {"b", number(-sc.h_max.exponent)},
                               {"r_squared", number(sc.h_max.r_squared)}};
      if (a.kind == "beta") {
        svg::Plot p;
        p.title = "peak Fisher information vs size";
        p.x_label = "L";
        p.y_label = "F_Q(h_max)";
        p.log_x = p.log_y = true;
        svg::Series pts{"data", {}, {}, true}, line{"fit", {}, {}};
        for (const auto &pk : peaks) {
          pts.x.push_back(pk.L);
          pts.y.push_back(pk.peak.F_peak);
          line.x.push_back(pk.L);
          line.y.push_back(sc.beta.prefactor * std::pow(pk.L, sc.beta.exponent));
        }
        p.series = {pts, line};
        plot = p;
      }
    } else if (a.kind == "beta") {
      throw InvalidArgument("beta needs at least two sizes");
    }
    if (!plot)
      plot = curve_plot(series, "Fisher information", "F");
  } else if (a.kind == "tail") {
    const double eps = pick_eps(d, m, a.eps);
    const auto series = pure_series(d, m, eps);
    if (series.size() < 2)
      throw InvalidArgument("tail needs at least two sizes");
    double hm = 0.0;
    if (a.h_max) {
      hm = *a.h_max;
    } else {
      const auto peaks = series_peaks(d, {series.back()}, m, eps, a.no_refine);
      hm = peaks.front().peak.h_max;
    }
    const double lo = a.h_lo.value_or(50.0 * hm);
    const double hi = a.h_hi.value_or(series.back().h.back());
    const auto tail = fit_localized_tail(series, hm, lo, hi);
    report["eps"] = eps;
    report["h_max"] = hm;
    report["window"] = {lo, hi};
    report["alpha"] = tail.alpha;
    report["fit"] = fit_json(tail.fit);
    report["h_used"] = tail.h_used;
    plot = curve_plot(series, "localized tail", "F");
  } else if (a.kind == "collapse" || a.kind == "exponent-table") {
    const auto interior = a.window.empty()
                              ? std::pair{a.h_lo.value_or(0.0), a.h_hi.value_or(INFINITY)}
                              : parse_window(a.window);
    const auto edge = a.edge_window.empty() ? interior : parse_window(a.edge_window);
    const auto starts = collapse_starts(a.starts);
    std::vector<double> eps_list;
    if (a.kind == "collapse")
      eps_list = {pick_eps(d, m, a.eps)};
    else
      for (double e : eps_values(d, m))
        eps_list.push_back(e);
    if (eps_list.empty())
      throw FormatError("input has no records for the requested method");
    json rows = json::array();
    for (double eps : eps_list) {
      const auto series = pure_series(d, m, eps);
      const auto [lo, hi] = (eps == 0.0 || eps == 1.0) ? edge : interior;
      const auto windowed = window_series(series, lo, hi);
      const auto fit = best_collapse(windowed, starts);
      flagged = flagged || !fit.flags.empty();
      json row = {{"eps", eps}, {"window", {number(lo), number(hi)}}};
      row["collapse"] = collapse_json(fit);
      if (a.kind == "exponent-table") {
        const auto sc = peak_scaling(series_peaks(d, series, m, eps, a.no_refine));
        row["beta"] = number(sc.beta.exponent);
        row["beta_r_squared"] = number(sc.beta.r_squared);
        row["relation"] = number(exponent_relation_check(fit.alpha, fit.nu, sc.beta.exponent));
        std::printf("eps=%-5s alpha=%.2f nu=%.2f alpha/nu=%.2f beta=%.2f\n",
                    format_double(eps).c_str(), fit.alpha, fit.nu, fit.alpha / fit.nu,
                    sc.beta.exponent);
      } else {
        svg::Plot p;
        p.title = "scaling collapse";
        p.x_label = "L^(1/nu) (h - h_c)/J";
        p.y_label = "ln F - (alpha/nu) ln L";
        for (const auto &s : windowed) {
          svg::Series cs{"L=" + std::to_string(s.L), {}, {}, true};
          for (std::size_t i = 0; i < s.h.size(); ++i) {
            cs.x.push_back(std::pow(s.L, 1.0 / fit.nu) * (s.h[i] - fit.h_c));
            cs.y.push_back(std::log(s.F[i]) - fit.alpha / fit.nu * std::log(s.L));
          }
          p.series.push_back(cs);
        }
        plot = p;
      }
      rows.push_back(row);
    }
    report["starts"] = starts;
    if (a.kind == "collapse")
      report["result"] = rows.front();
    else
      report["rows"] = rows;
  } else if (a.kind == "thermal") {
    std::set<double> hs;
    for (const auto &r : d.records)
      if (r.method == m && r.temperature)
        hs.insert(r.h);
    if (hs.empty())
      throw FormatError("input has no '" + std::string(to_string(m)) + "' thermal records");
    if (a.h)
      hs = {*a.h};
    json rows = json::array();
    for (double h : hs) {
      std::map<int, ThermalCurve> by_L;
      for (const auto &r : d.records)
        if (r.method == m && r.temperature && r.h == h && !r.flags.has(Flag::Failed)) {
          auto &c = by_L[r.L];
          c.L = r.L;
          c.h = h;
          c.T.push_back(*r.temperature);
          c.F.push_back(r.value);
        }
      if (by_L.empty())
        throw FormatError("no thermal records at h=" + format_double(h));
      std::vector<ThermalCurve> curves;
      for (auto &[L, c] : by_L)
        curves.push_back(c);
      double lo = 0, hi = 0;
      if (a.T_lo && a.T_hi) {
        lo = *a.T_lo;
        hi = *a.T_hi;
      } else {
        const auto s = solve_probe({d.family, curves.back().L, 1.0, h});
        const double W = s.energies.back() - s.energies.front();
        lo = a.T_lo.value_or(10.0 * W);
        hi = a.T_hi.value_or(100.0 * W);
      }
      const auto ex = thermal_exponents(curves, lo, hi);
      json mus = json::array();
      for (std::size_t i = 0; i < ex.sizes.size(); ++i)
        mus.push_back({{"L", ex.sizes[i]}, {"mu", number(-ex.decay[i].exponent)},
                       {"prefactor", number(ex.decay[i].prefactor)},
                       {"r_squared", number(ex.decay[i].r_squared)}});
      rows.push_back({{"h", h}, {"T_window", {lo, hi}}, {"decay", mus},
                      {"mu_mean", number(ex.mu_mean)}, {"gamma", fit_json(ex.gamma)}});
      if (!plot) {
        svg::Plot p;
        p.title = "thermal Fisher information, h=" + format_double(h);
        p.x_label = "T/J";
        p.y_label = "F_Q";
        p.log_x = p.log_y = true;
        for (const auto &c : curves)
          p.series.push_back({"L=" + std::to_string(c.L), c.T, c.F});
        plot = p;
      }
    }
    report["rows"] = rows;
  } else if (a.kind == "gap") {
    std::set<int> sizes;
    std::set<double> hs;
    for (const auto &r : d.records) {
      sizes.insert(r.L);
      hs.insert(r.h);
    }
    const std::vector<int> Ls(sizes.begin(), sizes.end());
    const double h0 = *hs.begin();
    if (Ls.size() >= 2) {
      const auto z = gap_size_scaling(d.family, Ls, h0);
      report["size_scaling"] = {{"h", h0}, {"z", number(z.z)}, {"gaps", z.gaps},
                                {"fit", fit_json(z.fit)}};
    }
    double hm = a.h_max.value_or(0.0);
    if (!a.h_max && !eps_values(d, m).empty()) {
      const auto series = pure_series(d, m, pick_eps(d, m, a.eps));
      hm = series_peaks(d, {series.back()}, m, pick_eps(d, m, a.eps), a.no_refine)
               .front()
               .peak.h_max;
    }
    const double lo = a.h_lo.value_or(10.0 * hm);
    const double hi = a.h_hi.value_or(*hs.rbegin());
    std::vector<double> window;
    for (double h : hs)
      if (h >= lo && h <= hi && h > hm)
        window.push_back(h);
    if (window.size() < 4)
      throw InvalidArgument("gap field fit: " + std::to_string(window.size()) +
                            " grid points in (" + format_double(lo) + ", " + format_double(hi) +
                            "], need 4; set --h-lo/--h-hi");
    const auto eta = gap_field_scaling(d.family, Ls.back(), hm, window);
    report["field_scaling"] = {{"L", Ls.back()}, {"h_max", hm}, {"window", {lo, hi}},
                               {"eta", number(eta.eta)}, {"fit", fit_json(eta.fit)}};
    svg::Plot p;
    p.title = "gap vs field, L=" + std::to_string(Ls.back());
    p.x_label = "(h - h_max)/J";
    p.y_label = "gap/J";
    p.log_x = p.log_y = true;
    std::vector<double> dx;
    for (double h : eta.h)
      dx.push_back(h - hm);
    p.series = {{"gap", dx, eta.gaps, true}};
    plot = p;
  } else {
    throw InvalidArgument("unknown analysis kind '" + a.kind + "'");
  }

  const std::string text = report.dump(2) + "\n";
  if (a.out.empty())
    std::cout << text;
  else
    write_text(a.out, text);
  if (!a.svg.empty() && plot)
    write_text(a.svg, svg::render(*plot));
  return flagged ? kExitFlagged : 0;
}

// ------------------------------------------------------------------- plot

struct PlotArgs {
  std::string in, out, method = "qfi_spectral", title, sizes;
  std::optional<double> eps, h;
  bool linear_x = false, linear_y = false;
};

int cmd_plot(const PlotArgs &a) {
  const auto d = load_dataset(a.in);
  const FisherMethod m = parse_method(a.method);
  std::set<int> keep;
  if (!a.sizes.empty())
    for (int L : parse_size_list(a.sizes))
      keep.insert(L);
  svg::Plot p;
  p.log_x = !a.linear_x;
  p.log_y = !a.linear_y;
  p.y_label = m == FisherMethod::ClassicalPosition ? "F_C" : "F_Q";
  std::map<int, svg::Series> by_L;
  if (is_thermal(m)) {
    std::set<double> hs;
    for (const auto &r : d.records)
      if (r.method == m)
        hs.insert(r.h);
    if (!a.h && hs.size() > 1)
      throw InvalidArgument("input holds several h values; choose one with --field");
    const double h = a.h ? *a.h : (hs.empty() ? 0.0 : *hs.begin());
    p.x_label = "T/J";
    p.title = a.title.empty() ? "thermal " + std::string(to_string(m)) + ", h=" + format_double(h)
                              : a.title;
    for (const auto &r : d.records)
      if (r.method == m && r.h == h && r.temperature && !r.flags.has(Flag::Failed) &&
          (keep.empty() || keep.count(r.L))) {
        auto &s = by_L[r.L];
        s.x.push_back(*r.temperature);
        s.y.push_back(r.value);
      }
  } else {
    const auto eps_set = eps_values(d, m);
    if (!a.eps && eps_set.size() > 1)
      throw InvalidArgument("input holds several eps values; choose one with --eps");
    const double eps = a.eps ? *a.eps : (eps_set.empty() ? 0.0 : *eps_set.begin());
    p.x_label = "h/J";
    p.title = a.title.empty() ? std::string(to_string(m)) + ", eps=" + format_double(eps)
                              : a.title;
    for (const auto &s : series_by_size(d.records, m, eps))
      if (keep.empty() || keep.count(s.L))
        by_L[s.L] = {"", s.h, s.F};
  }
  for (auto &[L, s] : by_L) {
    // Keep each polyline ordered along x.
    std::vector<std::size_t> idx(s.x.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return s.x[i] < s.x[j]; });
    svg::Series sorted{"L=" + std::to_string(L), {}, {}};
    for (auto i : idx) {
      sorted.x.push_back(s.x[i]);
      sorted.y.push_back(s.y[i]);
    }
    p.series.push_back(std::move(sorted));
  }
  if (p.series.empty())
    throw InvalidArgument("selection is empty: no records match method/eps/h/L");
  write_text(a.out, svg::render(p));
  return 0;
}

/// Fill options not given on the command line from a key=value file
/// (blank lines and '#' comments ignored; keys are long option names).
void apply_overlay(CLI::App &cmd, const std::string &path) {
  const auto text = read_file(path);
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.remove_suffix(1);
    if (line.empty() || line.front() == '#')
      continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw CLI::ConversionError(path + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key(line.substr(0, eq));
    const std::string value(line.substr(eq + 1));
    if (key == "config" || key == "out")
      throw CLI::ConversionError(path + ":" + std::to_string(line_no) + ": '" + key +
                                 "' cannot come from a config file");
    CLI::Option *opt = nullptr;
    try {
      opt = cmd.get_option("--" + key);
    } catch (const CLI::OptionNotFound &) {
      throw CLI::ConversionError(path + ":" + std::to_string(line_no) + ": unknown key '" +
                                 key + "'");
    }
    if (opt->count() > 0)
      continue; // the command line wins
    if (opt->get_type_size() == 0) { // flag
      if (value == "true")
        opt->add_result("true");
      else if (value != "false")
        throw CLI::ConversionError(path + ":" + std::to_string(line_no) + ": flag '" + key +
                                   "' takes true or false");
    } else {
      opt->add_result(value);
    }
    opt->run_callback();
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Fisher-information sweeps and scaling analysis for gradient-field probes"};
  app.require_subcommand(1);

  SweepArgs sw;
  auto *sweep = app.add_subcommand("sweep", "evaluate a (family, L, eps, h, T) grid");
  std::string config_file;
  sweep->add_option("--config", config_file,
                    "key=value file; command-line flags take precedence")
      ->check(CLI::ExistingFile);
  sweep->add_option("--family", sw.family, "single | manybody");
  sweep->add_option("--L", sw.sizes, "sizes: list or a:b:step");
  sweep->add_option("--eps", sw.eps, "normalized energies: list or a:b:step");
  sweep->add_option("--h-grid", sw.h_grid, "lin:lo:hi:n | log:lo:hi:n | list");
  sweep->add_option("--T-grid", sw.T_grid, "temperature grid, same syntax");
  sweep->add_option("--methods", sw.methods, "comma list of methods");
  sweep->add_option("--J", sw.J, "hopping / exchange scale");
  sweep->add_option("--jobs", sw.jobs, "parallel grid points")->check(CLI::PositiveNumber);
  sweep->add_option("--out", sw.out, "output directory");
  sweep->add_option("--cache-dir", sw.cache_dir, "result cache (default $STARK_CACHE_DIR)");
  sweep->add_flag("--no-timing", sw.no_timing, "write wall_time_s as 0");
  sweep->add_option("--fd-target", sw.fd_target, "finite-difference target infidelity");
  sweep->add_option("--dense-cap", sw.dense_cap, "largest dense diagonalization");

  AnalyzeArgs an;
  auto *analyze = app.add_subcommand("analyze", "fit exponents from sweep records");
  analyze->add_option("--kind", an.kind, "peak|beta|tail|collapse|thermal|gap|exponent-table")
      ->required()
      ->check(CLI::IsMember(
          {"peak", "beta", "tail", "collapse", "thermal", "gap", "exponent-table"}));
  analyze->add_option("--in", an.in, "records.csv")->required()->check(CLI::ExistingFile);
  analyze->add_option("--out", an.out, "report path (default stdout)");
  analyze->add_option("--svg", an.svg, "optional plot");
  auto *analyze_method =
      analyze->add_option("--method", an.method, "record method (thermal kind: qfi_thermal)");
  analyze->add_option("--eps", an.eps, "eps to analyze");
  analyze->add_option("--field", an.h, "field h for thermal analysis");
  analyze->add_option("--h-lo", an.h_lo, "lower fit window edge in h");
  analyze->add_option("--h-hi", an.h_hi, "upper fit window edge in h");
  analyze->add_option("--h-max", an.h_max, "peak position (default from data)");
  analyze->add_option("--T-lo", an.T_lo, "lower thermal fit edge");
  analyze->add_option("--T-hi", an.T_hi, "upper thermal fit edge");
  analyze->add_option("--window", an.window, "collapse window lo:hi");
  analyze->add_option("--edge-window", an.edge_window, "collapse window for eps 0 and 1");
  analyze->add_option("--starts", an.starts, "collapse starts h_c:alpha:nu,...");
  analyze->add_flag("--no-refine", an.no_refine, "use grid maxima without refinement");

  PlotArgs pl;
  auto *plot = app.add_subcommand("plot", "render records as an SVG panel");
  plot->add_option("--in", pl.in, "records.csv")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", pl.out, "SVG path")->required();
  plot->add_option("--method", pl.method, "record method");
  plot->add_option("--eps", pl.eps, "eps for pure methods");
  plot->add_option("--field", pl.h, "field h for thermal methods");
  plot->add_option("--L", pl.sizes, "sizes to include");
  plot->add_option("--title", pl.title, "panel title");
  plot->add_flag("--linear-x", pl.linear_x, "linear x axis");
  plot->add_flag("--linear-y", pl.linear_y, "linear y axis");

  CLI11_PARSE(app, argc, argv);
  try {
    if (analyze->parsed() && an.kind == "thermal" && analyze_method->count() == 0)
      an.method = "qfi_thermal";
    if (sweep->parsed()) {
      if (!config_file.empty())
        apply_overlay(*sweep, config_file);
      for (const char *name : {"--family", "--L", "--h-grid", "--out"})
        if (sweep->get_option(name)->count() == 0)
          throw CLI::RequiredError(name);
      return cmd_sweep(sw);
    }
    if (analyze->parsed())
      return cmd_analyze(an);
    return cmd_plot(pl);
  } catch (const CLI::Error &e) {
    return app.exit(e);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

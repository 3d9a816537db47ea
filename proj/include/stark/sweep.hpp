#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "stark/error.hpp"
#include "stark/flags.hpp"
#include "stark/metrology.hpp"
#include "stark/scaling.hpp"
#include "stark/spectra.hpp"

namespace stark {

// ------------------------------------------------------- number parsing

/// Locale-independent double parse of the whole string.
inline double parse_double(std::string_view text) {
  double v = 0.0;
  const auto *end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    throw InvalidArgument("not a number: '" + std::string(text) + "'");
  return v;
}

inline long long parse_integer(std::string_view text) {
  long long v = 0;
  const auto *end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    throw InvalidArgument("not an integer: '" + std::string(text) + "'");
  return v;
}

/// Shortest text that parses back to the same double ("%.17g" equivalent).
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (ec != std::errc())
    throw Error("format_double failed");
  return std::string(buf, ptr);
}

inline std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

// ---------------------------------------------------------------- grids

/// Grid text forms: "lin:lo:hi:n", "log:lo:hi:n", "a:b:step", or a comma
/// list "x1,x2,...".
struct GridSpec {
  enum class Kind { Linear, Log, Stepped, List };
  Kind kind = Kind::List;
  double lo = 0.0;
  double hi = 0.0;
  double step = 0.0;
  std::size_t count = 0;
  std::vector<double> values; // List only
  std::string text;

  static GridSpec parse(std::string_view text) {
    GridSpec g;
    g.text = std::string(text);
    if (text.empty())
      throw InvalidArgument("empty grid");
    auto parts = split(text, ':');
    if (parts.size() == 4 && (parts[0] == "lin" || parts[0] == "log")) {
      g.kind = parts[0] == "lin" ? Kind::Linear : Kind::Log;
      g.lo = parse_double(parts[1]);
      g.hi = parse_double(parts[2]);
      const auto n = parse_integer(parts[3]);
      if (n < 1)
        throw InvalidArgument("grid '" + g.text + "' needs a positive count");
      g.count = static_cast<std::size_t>(n);
      if (!std::isfinite(g.lo) || !std::isfinite(g.hi) || g.hi < g.lo)
        throw InvalidArgument("grid '" + g.text + "' needs lo <= hi");
      if (g.kind == Kind::Log && !(g.lo > 0.0))
        throw InvalidArgument("log grid '" + g.text + "' needs positive bounds");
      if (g.count == 1 && g.hi != g.lo)
        throw InvalidArgument("grid '" + g.text + "' with one point needs lo == hi");
      return g;
    }
    if (parts.size() == 3) {
      g.kind = Kind::Stepped;
      g.lo = parse_double(parts[0]);
      g.hi = parse_double(parts[1]);
      g.step = parse_double(parts[2]);
      if (!(g.step > 0.0) || !(g.hi >= g.lo))
        throw InvalidArgument("grid '" + g.text + "' needs lo <= hi and step > 0");
      g.count = static_cast<std::size_t>(std::floor((g.hi - g.lo) / g.step + 1e-9)) + 1;
      return g;
    }
    if (parts.size() != 1)
      throw InvalidArgument("unrecognized grid '" + g.text +
                            "' (expected lin:lo:hi:n, log:lo:hi:n, a:b:step or a list)");
    for (auto item : split(text, ','))
      g.values.push_back(parse_double(item));
    g.count = g.values.size();
    return g;
  }

  [[nodiscard]] std::vector<double> points() const {
    switch (kind) {
    case Kind::List:
      return values;
    case Kind::Stepped: {
      std::vector<double> out(count);
      for (std::size_t i = 0; i < count; ++i)
        out[i] = lo + static_cast<double>(i) * step;
      return out;
    }
    case Kind::Linear: {
      std::vector<double> out(count);
      for (std::size_t i = 0; i < count; ++i)
        out[i] = count == 1 ? lo
                            : lo + (hi - lo) * static_cast<double>(i) /
                                       static_cast<double>(count - 1);
      if (count > 1)
        out.back() = hi;
      return out;
    }
    case Kind::Log:
      if (count == 1)
        return {lo};
      return log_grid(lo, hi, count);
    }
    return {};
  }
};

inline std::vector<int> parse_size_list(std::string_view text) {
  std::vector<int> out;
  for (double v : GridSpec::parse(text).points()) {
    if (v != std::floor(v) || v < 2 || v > 1e6)
      throw InvalidArgument("size list '" + std::string(text) +
                            "' must hold integers >= 2");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

// --------------------------------------------------------------- records

struct SweepRecord {
  Family family = Family::SingleParticle;
  int L = 0;
  std::optional<double> epsilon;
  double h = 0.0;
  std::optional<double> temperature;
  FisherMethod method = FisherMethod::PureSpectralSum;
  double value = 0.0;
  double delta_h = 0.0;
  double wall_time_s = 0.0;
  Flags flags;

  [[nodiscard]] auto key() const {
    // Absent epsilon/T sort before present ones.
    return std::make_tuple(std::string_view(to_string(family)), L, epsilon.has_value(),
                           epsilon.value_or(0.0), h, temperature.has_value(),
                           temperature.value_or(0.0), to_string(method));
  }
};

/// Bitwise equality (NaN equals NaN), the round-trip contract of the CSV.
inline bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

inline bool identical(const SweepRecord &a, const SweepRecord &b, bool compare_time = true) {
  auto opt_same = [](const std::optional<double> &x, const std::optional<double> &y) {
    return x.has_value() == y.has_value() && (!x || same_bits(*x, *y));
  };
  return a.family == b.family && a.L == b.L && opt_same(a.epsilon, b.epsilon) &&
         same_bits(a.h, b.h) && opt_same(a.temperature, b.temperature) &&
         a.method == b.method && same_bits(a.value, b.value) &&
         same_bits(a.delta_h, b.delta_h) &&
         (!compare_time || same_bits(a.wall_time_s, b.wall_time_s)) && a.flags == b.flags;
}

inline void sort_records(std::vector<SweepRecord> &records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const SweepRecord &a, const SweepRecord &b) { return a.key() < b.key(); });
}

inline constexpr std::string_view record_header =
    "family,L,epsilon,h,T,method,value,delta_h,wall_time_s,flags";

inline std::string to_csv_row(const SweepRecord &r) {
  std::string row;
  row += to_string(r.family);
  row += ',' + std::to_string(r.L);
  row += ',' + (r.epsilon ? format_double(*r.epsilon) : std::string());
  row += ',' + format_double(r.h);
  row += ',' + (r.temperature ? format_double(*r.temperature) : std::string());
  row += ',';
  row += to_string(r.method);
  row += ',' + format_double(r.value);
  row += ',' + format_double(r.delta_h);
  row += ',' + format_double(r.wall_time_s);
  row += ',' + r.flags.to_string();
  return row;
}

inline std::string to_csv(const std::vector<SweepRecord> &records) {
  std::string out(record_header);
  out += '\n';
  for (const auto &r : records) {
    out += to_csv_row(r);
    out += '\n';
  }
  return out;
}

inline std::vector<SweepRecord> parse_csv(std::string_view text) {
  std::vector<SweepRecord> out;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    if (!header_seen) {
      if (line != record_header)
        throw FormatError("record schema mismatch: header is '" + std::string(line) +
                          "', expected '" + std::string(record_header) + "'");
      header_seen = true;
      continue;
    }
    if (line.empty())
      continue;
    const auto f = split(line, ',');
    const auto where = "row " + std::to_string(line_no) + ": ";
    if (f.size() != 10)
      throw FormatError(where + "expected 10 fields, found " + std::to_string(f.size()));
    try {
      SweepRecord r;
      r.family = parse_family(f[0]);
      r.L = static_cast<int>(parse_integer(f[1]));
      if (!f[2].empty())
        r.epsilon = parse_double(f[2]);
      r.h = parse_double(f[3]);
      if (!f[4].empty())
        r.temperature = parse_double(f[4]);
      r.method = parse_method(f[5]);
      r.value = parse_double(f[6]);
      r.delta_h = parse_double(f[7]);
      r.wall_time_s = parse_double(f[8]);
      r.flags = Flags::parse(f[9]);
      out.push_back(r);
    } catch (const Error &e) {
      throw FormatError(where + e.what());
    }
  }
  if (!header_seen)
    throw FormatError("record file is empty (no header)");
  return out;
}

/// Write to a temporary sibling, then rename over `path`.
inline void atomic_write(const std::filesystem::path &path, std::string_view content) {
  static std::atomic<unsigned long> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "." +
         std::to_string(counter++);
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os)
      throw Error("cannot write " + tmp.string());
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.flush();
    if (!os)
      throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot rename into " + path.string());
  }
}

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void save_records(const std::filesystem::path &path,
                         const std::vector<SweepRecord> &records) {
  atomic_write(path, to_csv(records));
}

inline std::vector<SweepRecord> load_records(const std::filesystem::path &path) {
  return parse_csv(read_file(path));
}

// ------------------------------------------------------------------ plan

/// Numerical settings that change computed values; part of the cache key.
struct NumericalSettings {
  StepControl step;
  std::size_t dense_cap = 20000;
  LinearResponseOptions linear_response;

  [[nodiscard]] std::string canonical() const {
    std::string s = "v1";
    auto add = [&](std::string_view k, double v) {
      s += ';';
      s += k;
      s += '=';
      s += format_double(v);
    };
    add("fd_min", step.min_infidelity);
    add("fd_max", step.max_infidelity);
    add("fd_target", step.target_infidelity);
    add("fd_rescalings", step.max_rescalings);
    add("fd_fallback", step.fallback_step);
    add("dense_cap", static_cast<double>(dense_cap));
    add("lanczos_tol", linear_response.lanczos.tolerance);
    add("lanczos_krylov", linear_response.lanczos.krylov_size);
    add("lanczos_seed", static_cast<double>(linear_response.lanczos.seed));
    add("cg_tol", linear_response.tolerance);
    add("degeneracy", 1e-12);
    add("p_floor", 1e-14);
    add("p_drop", 1e-15);
    return s;
  }
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  for (int i = 15; i >= 0; --i) {
    buf[i] = "0123456789abcdef"[v & 0xf];
    v >>= 4;
  }
  return std::string(buf, 16);
}

struct SweepPlan {
  Family family = Family::SingleParticle;
  std::vector<int> sizes;
  std::vector<double> epsilons{0.0};
  GridSpec h_grid;
  std::optional<GridSpec> T_grid;
  std::vector<FisherMethod> methods{FisherMethod::PureSpectralSum};
  double J = 1.0;
  int jobs = 1;
  /// When false wall_time_s is written as 0, making the CSV independent of
  /// scheduling as well as of the parallelism degree.
  bool record_wall_time = true;
  NumericalSettings settings;
  std::optional<std::filesystem::path> cache_dir;

  void validate() const {
    detail::require(!sizes.empty(), "plan needs at least one size");
    detail::require(!methods.empty(), "plan needs at least one method");
    detail::require(jobs >= 1, "jobs must be >= 1");
    const auto hs = h_grid.points();
    detail::require(!hs.empty(), "h grid is empty");
    for (double h : hs)
      detail::require(std::isfinite(h) && h >= 0.0, "h grid values must be >= 0");
    for (int L : sizes)
      ProbeSpec{family, L, J, 0.0}.validate();
    bool pure = false, thermal = false;
    for (auto m : methods) {
      (is_thermal(m) ? thermal : pure) = true;
      if (m == FisherMethod::ClassicalPosition)
        detail::require(family == Family::SingleParticle,
                        "cfi_position needs the single-particle family");
      if (m == FisherMethod::PureLinearResponse) {
        detail::require(family == Family::ManyBodyHalfFilling,
                        "qfi_linear_response needs the many-body family");
        for (double e : epsilons)
          detail::require(e == 0.0, "qfi_linear_response is a ground-state method (eps 0)");
      }
    }
    if (pure) {
      detail::require(!epsilons.empty(), "plan needs at least one eps");
      for (double e : epsilons)
        detail::require(e >= 0.0 && e <= 1.0, "eps values must lie in [0, 1]");
    }
    if (thermal) {
      detail::require(T_grid.has_value(), "thermal methods need a T grid");
      const auto ts = T_grid->points();
      detail::require(!ts.empty(), "T grid is empty");
      for (double T : ts)
        detail::require(std::isfinite(T) && T > 0.0, "temperatures must be > 0");
    }
  }
};

namespace detail {

struct SweepTask {
  int L = 0;
  double h = 0.0;
};

/// Cache file name for one (family, L, h) batch under the given plan.
inline std::string batch_name(const SweepPlan &plan, const SweepTask &t) {
  std::string sig = plan.settings.canonical();
  sig += "|" + std::string(to_string(plan.family)) + "|" + std::to_string(t.L) + "|" +
         format_double(plan.J) + "|" + format_double(t.h) + "|eps";
  for (double e : plan.epsilons)
    sig += "," + format_double(e);
  sig += "|T";
  if (plan.T_grid)
    for (double T : plan.T_grid->points())
      sig += "," + format_double(T);
  sig += plan.record_wall_time ? "|timed" : "|untimed";
  sig += "|m";
  for (auto m : plan.methods)
    sig += "," + std::string(to_string(m));
  return std::string(to_string(plan.family)) + "_L" + std::to_string(t.L) + "_" +
         hex64(fnv1a(sig)) + ".csv";
}

inline std::vector<SweepRecord> evaluate_task(const SweepPlan &plan, const SweepTask &t) {
  using clock = std::chrono::steady_clock;
  const ProbeSpec spec{plan.family, t.L, plan.J, t.h};
  BuildOptions build;
  build.dense_cap = plan.settings.dense_cap;

  bool needs_spectrum = false;
  for (auto m : plan.methods)
    needs_spectrum = needs_spectrum || m != FisherMethod::PureLinearResponse;

  std::optional<Spectrum> spectrum;
  std::string spectrum_error;
  if (needs_spectrum) {
    try {
      spectrum = solve_probe(spec, build);
    } catch (const Error &e) {
      spectrum_error = e.what();
    }
  }
  std::optional<FieldGenerator> V;
  std::optional<DenseMatrix> Vm;

  std::vector<SweepRecord> out;
  auto run = [&](FisherMethod m, std::optional<double> eps, std::optional<double> T,
                 auto &&body) {
    SweepRecord r;
    r.family = plan.family;
    r.L = t.L;
    r.h = t.h;
    r.epsilon = eps;
    r.temperature = T;
    r.method = m;
    const auto start = clock::now();
    try {
      if (m != FisherMethod::PureLinearResponse && !spectrum)
        throw ConvergenceError(spectrum_error);
      const FisherEstimate est = body();
      r.value = est.value;
      r.delta_h = est.delta_h;
      r.flags = est.flags;
    } catch (const Error &) {
      r.value = std::numeric_limits<double>::quiet_NaN();
      r.flags.set(Flag::Failed);
    }
    if (plan.record_wall_time)
      r.wall_time_s = std::chrono::duration<double>(clock::now() - start).count();
    out.push_back(r);
  };
  auto field = [&]() -> const FieldGenerator & {
    if (!V)
      V = build_field_generator(spec);
    return *V;
  };

  for (auto m : plan.methods) {
    if (is_thermal(m)) {
      for (double T : plan.T_grid->points()) {
        run(m, std::nullopt, T, [&] {
          if (!Vm)
            Vm = field_matrix(*spectrum, field());
          auto est = qfi_thermal_spectral(*spectrum, *Vm, T);
          if (m == FisherMethod::ThermalSpectral)
            return est;
          StepControl control = plan.settings.step;
          control.scale_hint = est.value;
          return qfi_thermal_fidelity(spec, T, control, build);
        });
      }
      continue;
    }
    for (double eps : plan.epsilons) {
      run(m, eps, std::nullopt, [&] {
        switch (m) {
        case FisherMethod::PureSpectralSum:
          return qfi_pure_spectral_at(*spectrum, field(), eps);
        case FisherMethod::PureFiniteDifference:
        case FisherMethod::ClassicalPosition: {
          StepControl control = plan.settings.step;
          control.scale_hint = qfi_pure_spectral_at(*spectrum, field(), eps).value;
          return m == FisherMethod::PureFiniteDifference
                     ? qfi_pure_finite_difference(*spectrum, eps, control, build)
                     : cfi_position(*spectrum, eps, control, build);
        }
        case FisherMethod::PureLinearResponse: {
          BuildOptions iterative = build;
          iterative.iterative = true;
          return qfi_ground_linear_response(build_hamiltonian(spec, iterative), field(),
                                            plan.settings.linear_response);
        }
        default:
          throw InvalidArgument("unexpected method");
        }
      });
    }
  }
  return out;
}

inline bool batch_matches(const SweepPlan &plan, const SweepTask &t,
                          const std::vector<SweepRecord> &records) {
  std::size_t expected = 0;
  for (auto m : plan.methods)
    expected += is_thermal(m) ? plan.T_grid->points().size() : plan.epsilons.size();
  if (records.size() != expected)
    return false;
  for (const auto &r : records)
    if (r.family != plan.family || r.L != t.L || !same_bits(r.h, t.h))
      return false;
  return true;
}

} // namespace detail

struct SweepStats {
  std::size_t tasks = 0;
  std::size_t cache_hits = 0;
};

/// Evaluate every (L, h) point of the plan, `jobs` points at a time. Output
/// order is the record key order regardless of scheduling.
inline std::vector<SweepRecord> run_sweep(const SweepPlan &plan, SweepStats *stats = nullptr) {
  plan.validate();
  std::vector<detail::SweepTask> tasks;
  const auto hs = plan.h_grid.points();
  for (int L : plan.sizes)
    for (double h : hs)
      tasks.push_back({L, h});
  if (plan.cache_dir)
    std::filesystem::create_directories(*plan.cache_dir);

  std::vector<std::vector<SweepRecord>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> hits{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size())
        return;
      std::optional<std::filesystem::path> file;
      if (plan.cache_dir) {
        file = *plan.cache_dir / detail::batch_name(plan, tasks[i]);
        std::error_code ec;
        if (std::filesystem::exists(*file, ec)) {
          try {
            auto cached = load_records(*file);
            if (detail::batch_matches(plan, tasks[i], cached)) {
              results[i] = std::move(cached);
              ++hits;
              continue;
            }
          } catch (const Error &) {
            // Unreadable batch: recompute and overwrite.
          }
        }
      }
      results[i] = detail::evaluate_task(plan, tasks[i]);
      sort_records(results[i]);
      if (file)
        save_records(*file, results[i]);
    }
  };
  const int n_threads = std::min<int>(plan.jobs, static_cast<int>(tasks.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < n_threads; ++k)
      pool.emplace_back(worker);
  }

  std::vector<SweepRecord> all;
  for (auto &r : results)
    all.insert(all.end(), r.begin(), r.end());
  sort_records(all);
  if (stats) {
    stats->tasks = tasks.size();
    stats->cache_hits = hits.load();
  }
  return all;
}

/// Sampled curves F(h) per size for one method and eps, sorted by h.
inline std::vector<SizeSeries> series_by_size(const std::vector<SweepRecord> &records,
                                              FisherMethod method, double epsilon) {
  std::vector<SizeSeries> out;
  for (const auto &r : records) {
    if (r.method != method || !r.epsilon || *r.epsilon != epsilon ||
        r.flags.has(Flag::Failed))
      continue;
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const SizeSeries &s) { return s.L == r.L; });
    if (it == out.end()) {
      out.push_back({r.L, {}, {}});
      it = out.end() - 1;
    }
    it->h.push_back(r.h);
    it->F.push_back(r.value);
  }
  std::sort(out.begin(), out.end(),
            [](const SizeSeries &a, const SizeSeries &b) { return a.L < b.L; });
  return out;
}

} // namespace stark

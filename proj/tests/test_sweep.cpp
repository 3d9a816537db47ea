#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "stark/sweep.hpp"

using namespace stark;

namespace {

std::filesystem::path scratch(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("stark_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

SweepPlan small_plan() {
  SweepPlan p;
  p.family = Family::SingleParticle;
  p.sizes = {10, 16};
  p.epsilons = {0.0, 0.5};
  p.h_grid = GridSpec::parse("log:1e-3:1:5");
  p.T_grid = GridSpec::parse("0.1,1");
  p.methods = {FisherMethod::PureSpectralSum, FisherMethod::PureFiniteDifference,
               FisherMethod::ClassicalPosition, FisherMethod::ThermalSpectral};
  return p;
}

} // namespace

TEST(Grid, LinearAndLog) {
  const auto lin = GridSpec::parse("lin:0:1:5").points();
  EXPECT_EQ(lin, (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  const auto lg = GridSpec::parse("log:1e-4:1:5").points();
  ASSERT_EQ(lg.size(), 5u);
  EXPECT_DOUBLE_EQ(lg[0], 1e-4);
  EXPECT_DOUBLE_EQ(lg[2], 1e-2);
  EXPECT_DOUBLE_EQ(lg[4], 1.0);
}

TEST(Grid, SteppedAndList) {
  EXPECT_EQ(GridSpec::parse("200:1000:200").points(),
            (std::vector<double>{200, 400, 600, 800, 1000}));
  const auto eps = GridSpec::parse("0:1:0.1").points();
  ASSERT_EQ(eps.size(), 11u);
  EXPECT_DOUBLE_EQ(eps[3], 0.30000000000000004); // index-based, no accumulation
  EXPECT_EQ(GridSpec::parse("0.5,2,1e-3").points(), (std::vector<double>{0.5, 2, 1e-3}));
  EXPECT_EQ(parse_size_list("8,10,12"), (std::vector<int>{8, 10, 12}));
}

TEST(Grid, RejectsMalformed) {
  for (const char *bad : {"", "log:0:1:5", "lin:1:0:3", "lin:0:1:0", "1,x", "a:b:c",
                          "1:2:3:4:5", "0:1:-0.1", "lin:0:1:2.5"})
    EXPECT_THROW(GridSpec::parse(bad), InvalidArgument) << bad;
  EXPECT_THROW(parse_size_list("10.5"), InvalidArgument);
}

TEST(Csv, FormatRoundTripsEveryDouble) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double v = std::bit_cast<double>(rng());
    if (!std::isfinite(v))
      continue;
    EXPECT_TRUE(same_bits(parse_double(format_double(v)), v));
  }
}

TEST(Csv, RoundTripLarge) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SweepRecord> records;
  for (int i = 0; i < 100000; ++i) {
    SweepRecord r;
    r.family = i % 3 ? Family::SingleParticle : Family::ManyBodyHalfFilling;
    r.L = 2 + 2 * (i % 50);
    r.h = std::pow(10.0, -8.0 + 9.0 * u(rng));
    if (i % 4 == 0) {
      r.method = FisherMethod::ThermalSpectral;
      r.temperature = std::exp(u(rng));
    } else {
      r.method = i % 4 == 1 ? FisherMethod::PureSpectralSum : FisherMethod::PureFiniteDifference;
      r.epsilon = u(rng);
    }
    r.value = std::pow(10.0, 12.0 * u(rng));
    r.delta_h = i % 4 == 2 ? 1e-6 * u(rng) : 0.0;
    r.wall_time_s = 1e-3 * u(rng);
    if (i % 97 == 0) {
      r.value = std::numeric_limits<double>::quiet_NaN();
      r.flags.set(Flag::Failed);
    }
    if (i % 31 == 0)
      r.flags.set(Flag::Degenerate).set(Flag::Boundary);
    records.push_back(r);
  }
  const auto dir = scratch("csv");
  save_records(dir / "r.csv", records);
  const auto back = load_records(dir / "r.csv");
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    ASSERT_TRUE(identical(records[i], back[i])) << i;
  std::filesystem::remove_all(dir);
}

TEST(Csv, SchemaAndRowErrors) {
  EXPECT_THROW(parse_csv("family,L,h\n"), FormatError);
  EXPECT_THROW(parse_csv(""), FormatError);
  const std::string head = std::string(record_header) + "\n";
  try {
    parse_csv(head + "single,10,0.5,0.1,,qfi_spectral,1,0,0,\n" +
              "single,10,0.5,0.1,,qfi_bogus,1,0,0,\n");
    FAIL();
  } catch (const FormatError &e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_csv(head + "single,10,0.5\n"), FormatError);
  EXPECT_THROW(parse_csv(head + "single,10,0.5,0.1,,qfi_spectral,1,0,0,odd\n"),
               FormatError);
}

TEST(Sweep, RecordCountAndOrder) {
  const auto plan = small_plan();
  const auto records = run_sweep(plan);
  // pure: 2 L * 5 h * 2 eps * 3 methods, thermal: 2 L * 5 h * 2 T
  EXPECT_EQ(records.size(), 60u + 20u);
  for (std::size_t i = 1; i < records.size(); ++i)
    EXPECT_LE(records[i - 1].key(), records[i].key());
  for (const auto &r : records) {
    EXPECT_TRUE(r.flags.empty()) << to_csv_row(r);
    EXPECT_EQ(r.epsilon.has_value(), !is_thermal(r.method));
    EXPECT_EQ(r.temperature.has_value(), is_thermal(r.method));
    EXPECT_GT(r.value, 0.0);
  }
}

TEST(Sweep, MatchesDirectEvaluation) {
  const auto plan = small_plan();
  for (const auto &r : run_sweep(plan)) {
    if (r.method != FisherMethod::PureSpectralSum)
      continue;
    const ProbeSpec spec{plan.family, r.L, 1.0, r.h};
    const auto ref = qfi_pure_spectral_at(solve_probe(spec), build_field_generator(spec),
                                          *r.epsilon);
    EXPECT_EQ(r.value, ref.value);
  }
}

TEST(Sweep, IndependentOfJobCount) {
  auto plan = small_plan();
  const auto serial = run_sweep(plan);
  plan.jobs = 4;
  const auto parallel = run_sweep(plan);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i)
    EXPECT_TRUE(identical(serial[i], parallel[i], false)) << to_csv_row(serial[i]);
}

TEST(Sweep, CacheReuseIsExact) {
  auto plan = small_plan();
  plan.cache_dir = scratch("cache");
  SweepStats first, second;
  const auto a = run_sweep(plan, &first);
  const auto b = run_sweep(plan, &second);
  EXPECT_EQ(first.cache_hits, 0u);
  EXPECT_EQ(second.cache_hits, second.tasks);
  EXPECT_EQ(to_csv(a), to_csv(b));

  // Different settings must not hit the same batches.
  plan.settings.step.target_infidelity = 1e-9;
  SweepStats third;
  run_sweep(plan, &third);
  EXPECT_EQ(third.cache_hits, 0u);
  std::filesystem::remove_all(*plan.cache_dir);
}

TEST(Sweep, CorruptCacheIsRecomputed) {
  auto plan = small_plan();
  plan.sizes = {10};
  plan.cache_dir = scratch("corrupt");
  const auto a = run_sweep(plan);
  for (const auto &entry : std::filesystem::directory_iterator(*plan.cache_dir))
    std::ofstream(entry.path(), std::ios::trunc) << "garbage\n";
  SweepStats stats;
  const auto b = run_sweep(plan, &stats);
  EXPECT_EQ(stats.cache_hits, 0u);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_TRUE(identical(a[i], b[i], false));
  std::filesystem::remove_all(*plan.cache_dir);
}

TEST(Sweep, ValidationBeforeCompute) {
  auto plan = small_plan();
  plan.family = Family::ManyBodyHalfFilling;
  EXPECT_THROW(run_sweep(plan), InvalidArgument); // cfi on many-body

  plan = small_plan();
  plan.T_grid.reset();
  EXPECT_THROW(run_sweep(plan), InvalidArgument);

  plan = small_plan();
  plan.family = Family::ManyBodyHalfFilling;
  plan.sizes = {8};
  plan.methods = {FisherMethod::PureLinearResponse};
  EXPECT_THROW(run_sweep(plan), InvalidArgument); // eps 0.5
  plan.epsilons = {0.0};
  EXPECT_NO_THROW(run_sweep(plan));

  plan = small_plan();
  plan.sizes = {9};
  plan.family = Family::ManyBodyHalfFilling;
  plan.methods = {FisherMethod::PureSpectralSum};
  EXPECT_THROW(run_sweep(plan), InvalidArgument);
}

TEST(Sweep, FailedEvaluationIsRecorded) {
  SweepPlan plan;
  plan.family = Family::ManyBodyHalfFilling;
  plan.sizes = {8};
  plan.h_grid = GridSpec::parse("0.5");
  plan.settings.dense_cap = 10; // sector dimension 70
  plan.methods = {FisherMethod::PureSpectralSum};
  const auto records = run_sweep(plan);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_TRUE(records[0].flags.has(Flag::Failed));
  EXPECT_TRUE(std::isnan(records[0].value));
}

TEST(Sweep, LinearResponseMatchesSpectral) {
  SweepPlan plan;
  plan.family = Family::ManyBodyHalfFilling;
  plan.sizes = {10};
  plan.h_grid = GridSpec::parse("0.2,1");
  plan.methods = {FisherMethod::PureSpectralSum, FisherMethod::PureLinearResponse};
  const auto r = run_sweep(plan);
  ASSERT_EQ(r.size(), 4u);
  for (std::size_t i = 0; i < r.size(); i += 2)
    EXPECT_NEAR(r[i + 1].value / r[i].value, 1.0, 1e-6);
}

TEST(Sweep, SeriesBySize) {
  const auto records = run_sweep(small_plan());
  const auto series = series_by_size(records, FisherMethod::PureSpectralSum, 0.5);
  ASSERT_EQ(series.size(), 2u);
  EXPECT_EQ(series[0].L, 10);
  EXPECT_EQ(series[1].h.size(), 5u);
  EXPECT_TRUE(std::is_sorted(series[1].h.begin(), series[1].h.end()));
}

TEST(Sweep, UntimedOutputIsByteIdenticalAcrossJobs) {
  auto plan = small_plan();
  plan.record_wall_time = false;
  const auto serial = to_csv(run_sweep(plan));
  plan.jobs = 3;
  EXPECT_EQ(serial, to_csv(run_sweep(plan)));
}

TEST(Csv, EmptySetIsHeaderOnly) {
  EXPECT_EQ(to_csv({}), std::string(record_header) + "\n");
  EXPECT_TRUE(parse_csv(to_csv({})).empty());
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mpa/pipeline.hpp"
#include "mpa/synth.hpp"

using namespace mpa;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("tmp_") += name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

// Small but fully populated synthetic bundle + matching config.
PipelineConfig small_setup(const TempDir& dir, std::uint64_t seed = 3) {
  SynthConfig sc;
  sc.n_units = 8;
  sc.n_companies = 3;
  sc.sample_hours = 24 * 120;
  sc.regime_change_hours = {24 * 60};
  sc.gas_levels = {25, 45};
  sc.coal_levels = {12, 22};
  sc.seed = seed;
  write_synth_market(generate_market(sc), dir.path.string());
  PipelineConfig cfg;
  cfg.market_csv = dir / "market.csv";
  cfg.units_csv = dir / "units.csv";
  cfg.generation_csv = dir / "generation.csv";
  cfg.outages_csv = dir / "outages.csv";
  cfg.out_dir = dir / "out";
  cfg.mc.iterations = 12;
  cfg.mc.seed = 7;
  cfg.jobs = 2;
  cfg.groupings = {Grouping::FuelType};
  return cfg;
}

}  // namespace

TEST_CASE("config parser round trip, comments, lists, unknown keys") {
  TempDir dir("cfg");
  const std::string path = dir / "p.conf";
  {
    std::ofstream out(path);
    out << "# comment line\n"
        << "market_csv = m.csv\n"
        << "units_csv=u.csv  # trailing comment\n"
        << "generation_csv = g.csv\n"
        << "hedge_rates = 1.0, 0.7, 0\n"
        << "groupings = year, company\n"
        << "iterations = 5\n"
        << "jobs = 3\n";
  }
  const PipelineConfig cfg = parse_pipeline_config(path);
  CHECK(cfg.market_csv == "m.csv");
  CHECK(cfg.units_csv == "u.csv");
  CHECK(cfg.hedge_rates == std::vector<double>{1.0, 0.7, 0.0});
  CHECK(cfg.groupings.size() == 2);
  CHECK(cfg.mc.iterations == 5);
  CHECK(cfg.jobs == 3);

  {
    std::ofstream out(path);
    out << "market_csv = m.csv\nbogus_key = 1\n";
  }
  CHECK_THROWS_AS(parse_pipeline_config(path), ConfigError);
  {
    std::ofstream out(path);
    out << "iterations = ten\n";
  }
  CHECK_THROWS_AS(parse_pipeline_config(path), ConfigError);
}

TEST_CASE("summary_quantiles") {
  SECTION("degenerate distribution") {
    const auto q = summary_quantiles(std::vector<double>(100, 5.0));
    CHECK(q.min == 5.0);
    CHECK(q.q50 == 5.0);
    CHECK(q.q99 == 5.0);
    CHECK(q.max == 5.0);
  }
  SECTION("five-point panel") {
    const auto q = summary_quantiles({197, -875, 4, 32, -13});
    CHECK(q.min == -875);
    CHECK(q.q50 == 4);
    CHECK(q.max == 197);
    CHECK(q.n == 5);
  }
  SECTION("monotone order statistics") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d(0, 100);
    std::vector<double> v(5000);
    for (auto& x : v) x = d(rng);
    const auto q = summary_quantiles(v);
    CHECK(q.min <= q.q50);
    CHECK(q.q50 <= q.q90);
    CHECK(q.q90 <= q.q99);
    CHECK(q.q99 <= q.max);
  }
  SECTION("empty panel") {
    CHECK_THROWS_AS(summary_quantiles({}), InfeasibleError);
  }
}

TEST_CASE("bin_curve") {
  LogitFit fit;
  fit.beta0 = -1.0;
  fit.beta1 = 0.01;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nx(0, 150);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> x(60000);
  std::vector<int> y(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    x[i] = nx(rng);
    y[i] = u(rng) < logistic(fit.beta0 + fit.beta1 * x[i]);
  }
  SECTION("single bin equals the overall rate") {
    const auto bins = bin_curve(x, y, fit, 1);
    REQUIRE(bins.size() == 1);
    double rate = 0;
    for (int v : y) rate += v;
    rate /= y.size();
    CHECK(bins[0].empirical == Catch::Approx(rate));
    CHECK(bins[0].n == y.size());
  }
  SECTION("calibration on simulated logistic data") {
    const auto bins = bin_curve(x, y, fit, 60);
    for (const auto& b : bins) {
      REQUIRE(b.n >= 500);
      CHECK(std::fabs(b.empirical - b.predicted) < 0.05);
    }
    for (size_t i = 1; i < bins.size(); ++i)
      CHECK(bins[i].mean_pi >= bins[i - 1].mean_pi);
  }
  SECTION("more bins than observations") {
    std::vector<double> sx(5, 1.0);
    std::vector<int> sy(5, 1);
    CHECK_THROWS_AS(bin_curve(sx, sy, fit, 6), InfeasibleError);
  }
}

TEST_CASE("expected_impact with a constant-probability fit") {
  // two units, two hours; z=1 everywhere; beta1 = 0 so P = logistic(beta0)
  PipelineConfig cfg;
  cfg.market_csv = cfg.units_csv = cfg.generation_csv = "x";
  MarketSeries ms;
  for (int h = 0; h < 2; ++h) {
    ms.timestamps.push_back(464592 + h);
    ms.spot_price.push_back(100);
    ms.demand.push_back(50000);
    ms.vre_generation.push_back(0);
    ms.gas_price.push_back(30);
    ms.coal_price.push_back(15);
    ms.carbon_price.push_back(80);
  }
  const double p0 = 0.2;
  RegimeSplitFit fits;
  LogitFit w;
  w.beta0 = std::log(p0 / (1 - p0));
  w.beta1 = 0;
  w.converged = true;
  fits.withhold.fit = w;
  std::vector<PanelObs> obs;
  for (int h = 0; h < 2; ++h)
    for (int k = 0; k < 2; ++k) {
      PanelObs o;
      o.z = 1;
      o.y = 0;
      o.pi_w = 10;
      o.delta = 0.01;
      o.capacity_mw = 400;
      o.hour = h;
      o.year = 2023;
      obs.push_back(o);
    }
  const auto rows = expected_impact(obs, fits, ms, cfg);
  for (const auto& r : rows) {
    CHECK(r.expected_withheld_mwh == Catch::Approx(p0 * 400 * 4));
    CHECK(r.expected_pushed_mwh == 0);
    CHECK(r.price_up_mean == Catch::Approx(0.01 * p0 * 800));
    CHECK(r.price_up_max >= 0);
    CHECK(r.price_down_min <= 0);
    CHECK(r.withheld_share_of_total_load ==
          Catch::Approx(p0 * 1600 / r.load_total_mwh));
  }
}

TEST_CASE("full pipeline smoke run on a small synthetic market") {
  TempDir dir("smoke");
  const PipelineConfig cfg = small_setup(dir);
  const PipelineResult r = run_pipeline(cfg);

  for (const char* f :
       {"dispatch_panel.csv", "regimes.csv", "supply_fits.csv", "supply_model.json",
        "incentive_panel.csv", "fits.json", "summary.json", "impact.csv"})
    CHECK(fs::exists(fs::path(cfg.out_dir) / f));

  CHECK(!r.fits.obs.empty());
  // both regimes fitted or carry a documented diagnostic
  CHECK((r.fits.main.withhold.fit.has_value() || !r.fits.main.withhold.diagnostic.empty()));
  CHECK((r.fits.main.pushin.fit.has_value() || !r.fits.main.pushin.diagnostic.empty()));
  // emitted panels pass their own loaders
  const auto dp = read_dispatch_panel(cfg.out_dir + "/dispatch_panel.csv",
                                      r.inputs.market, r.inputs.units);
  CHECK(dp.units.size() == r.dispatch.units.size());
  const auto ip = read_incentive_panel(cfg.out_dir + "/incentive_panel.csv",
                                       r.inputs.market);
  CHECK(ip.units.size() == r.incentives.units.size());
  const auto model = read_supply_model(cfg.out_dir + "/supply_model.json");
  CHECK(model.fits.size() == r.supply.fits.size());
  for (size_t i = 0; i < model.fits.size(); ++i) {
    CHECK(model.fits[i].slopes == r.supply.fits[i].slopes);
    CHECK(model.fits[i].knots == r.supply.fits[i].knots);
  }
}

TEST_CASE("identical config and seed give byte-identical bundles") {
  TempDir dir("det");
  PipelineConfig cfg = small_setup(dir);
  cfg.out_dir = dir / "out_a";
  run_pipeline(cfg);
  cfg.out_dir = dir / "out_b";
  cfg.jobs = 1;  // scheduling must not matter
  run_pipeline(cfg);
  for (const char* f :
       {"dispatch_panel.csv", "regimes.csv", "supply_fits.csv", "supply_model.json",
        "incentive_panel.csv", "fits.json", "summary.json", "impact.csv"})
    CHECK(slurp((fs::path(dir / "out_a") / f).string()) ==
          slurp((fs::path(dir / "out_b") / f).string()));
}

TEST_CASE("rerunning the fit stage from cached panels reproduces fits.json") {
  TempDir dir("cache");
  const PipelineConfig cfg = small_setup(dir);
  run_pipeline(cfg);
  const std::string first = slurp(cfg.out_dir + "/fits.json");
  const PipelineInputs in = load_inputs(cfg);
  const auto dp =
      read_dispatch_panel(cfg.out_dir + "/dispatch_panel.csv", in.market, in.units);
  const auto ip = read_incentive_panel(cfg.out_dir + "/incentive_panel.csv", in.market);
  const auto model = read_supply_model(cfg.out_dir + "/supply_model.json");
  stage_fit(cfg, in, dp, ip, model);
  CHECK(slurp(cfg.out_dir + "/fits.json") == first);
}

TEST_CASE("missing input file fails with a stage-named validation error") {
  TempDir dir("missing");
  PipelineConfig cfg = small_setup(dir);
  fs::remove(cfg.generation_csv);
  try {
    run_pipeline(cfg);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("stage ingest") != std::string::npos);
  }
}

TEST_CASE("null-strategy market yields separation diagnostics, not fabricated signal") {
  TempDir dir("null");
  SynthConfig sc;
  sc.n_units = 6;
  sc.n_companies = 2;
  sc.sample_hours = 24 * 60;
  sc.regime_change_hours = {};
  sc.gas_levels = {30};
  sc.coal_levels = {14};
  sc.beta0_w = kNoDeviation;
  sc.beta0_p = kNoDeviation;
  sc.seed = 5;
  write_synth_market(generate_market(sc), dir.path.string());
  PipelineConfig cfg;
  cfg.market_csv = dir / "market.csv";
  cfg.units_csv = dir / "units.csv";
  cfg.generation_csv = dir / "generation.csv";
  cfg.out_dir = dir / "out";
  cfg.mc.iterations = 10;
  cfg.mc.seed = 2;
  const PipelineResult r = run_pipeline(cfg);
  // no deviations exist, so neither regime can be estimated
  CHECK(!r.fits.main.withhold.fit.has_value());
  CHECK(!r.fits.main.pushin.fit.has_value());
  CHECK(!r.fits.main.withhold.diagnostic.empty());
  for (const auto& o : r.fits.obs) CHECK(o.y == 0);
}

TEST_CASE("hedge sensitivity table has one row per rate and matches the main fit") {
  TempDir dir("rates");
  PipelineConfig cfg = small_setup(dir);
  cfg.hedge_rates = {1.0, 0.7, 0.0};
  const PipelineResult r = run_pipeline(cfg);
  REQUIRE(r.fits.hedge_table.size() == 3);
  CHECK(r.fits.hedge_table[0].first == 1.0);
  if (r.fits.main.withhold.fit) {
    REQUIRE(r.fits.hedge_table[0].second.withhold.fit.has_value());
    CHECK(r.fits.hedge_table[0].second.withhold.fit->beta1 ==
          r.fits.main.withhold.fit->beta1);
  }
}

TEST_CASE("subgroup fits partition the panel") {
  TempDir dir("groups");
  PipelineConfig cfg = small_setup(dir);
  cfg.groupings = {Grouping::FuelType, Grouping::Company};
  const PipelineResult r = run_pipeline(cfg);
  REQUIRE(r.fits.groups.count("fuel_type"));
  REQUIRE(r.fits.groups.count("company"));
  size_t total = 0;
  for (const auto& [key, fits] : r.fits.groups.at("company"))
    total += fits.withhold.n + fits.pushin.n;
  size_t z1 = 0, z0 = 0;
  for (const auto& o : r.fits.obs) (o.z == 1 ? z1 : z0) += 1;
  CHECK(total == z1 + z0);
}

#include "fermat/experiments.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace fermat;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("fermat_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string error_of(const ExperimentConfig &c) {
  try {
    c.validate();
  } catch (const Error &e) {
    return e.what();
  }
  return "";
}

ExperimentConfig small_convergence() {
  ExperimentConfig c = ExperimentConfig::defaults("convergence");
  c.datasets = {"standard_normal"};
  c.methods = {"power", "density_gt", "gt_variant:max", "relax_exact_score"};
  c.sample_sizes = {200, 400};
  c.pairs = 6;
  c.pair_pool = 50;
  c.gt_points = 128;
  c.n_points = 32;
  return c;
}

int run_cli(const std::string &args, const fs::path &log) {
  const std::string cmd = std::string(FERMAT_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path &p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

} // namespace

TEST(Config, DefaultsValidate) {
  for (const char *e : {"convergence", "dims", "scaled-fig", "kde"})
    EXPECT_NO_THROW(ExperimentConfig::defaults(e).validate()) << e;
  EXPECT_THROW(ExperimentConfig::defaults("fig9"), Error);
  const auto dims = ExperimentConfig::defaults("dims");
  EXPECT_EQ(dims.beta_tracks(4).size(), 2u);
  EXPECT_DOUBLE_EQ(dims.beta_tracks(4)[1].beta, 0.25);
}

TEST(Config, RejectsBadValuesWithMessages) {
  ExperimentConfig c;
  c.beta = 0.0;
  EXPECT_EQ(error_of(c), "config: beta must be > 0");
  c = {};
  c.sample_sizes = {500, 200};
  EXPECT_NE(error_of(c).find("increasing"), std::string::npos);
  c = {};
  c.methods = {"power", "power"};
  EXPECT_NE(error_of(c).find("twice"), std::string::npos);
  c = {};
  c.methods = {"dijkstra"};
  EXPECT_NE(error_of(c).find("unknown method"), std::string::npos);
  c = {};
  c.quad_nodes = 2000;
  EXPECT_NE(error_of(c).find("odd"), std::string::npos);
}

TEST(Config, KRules) {
  ExperimentConfig c;
  EXPECT_EQ(c.k_for(16000), sqrt_k(16000));
  c.k_rule = "log";
  EXPECT_EQ(c.k_for(16000), default_k(16000));
  c.k = 7;
  EXPECT_EQ(c.k_for(16000), 7u);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  ExperimentConfig c = small_convergence();
  c.beta = 0.75;
  c.gt_straight_candidate = true;
  const ExperimentConfig r = config_from_json(to_json(c), ExperimentConfig{});
  EXPECT_EQ(to_json(r), to_json(c));
  EXPECT_THROW(config_from_json(nlohmann::json{{"betta", 1.0}}, ExperimentConfig{}), Error);
  // partial documents keep the base values
  const ExperimentConfig p = config_from_json(nlohmann::json{{"pairs", 3}}, c);
  EXPECT_EQ(p.pairs, 3u);
  EXPECT_EQ(p.methods, c.methods);
}

TEST(Methods, ParseAndName) {
  for (const char *n : {"power", "density_gt", "density_fitted", "nn_variant:min", "gt_variant:mean_of_inverse",
                        "relax_exact_score", "relax_kde_score"})
    EXPECT_EQ(parse_method(n).name(), n);
  EXPECT_TRUE(parse_method("relax_kde_score").relaxes());
  EXPECT_FALSE(parse_method("gt_variant:max").relaxes());
  EXPECT_THROW(parse_method("nn_variant:median"), Error);
  EXPECT_THROW(parse_method("foo:max"), Error);
}

TEST(ParallelFor, RunsEveryIndexAndRethrowsLowestError) {
  std::vector<int> hit(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hit[i] += 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 100);
  try {
    parallel_for(50, 3, [](std::size_t i) {
      if (i == 7 || i == 30)
        throw Error("bad " + std::to_string(i));
    });
    FAIL();
  } catch (const Error &e) {
    EXPECT_STREQ(e.what(), "bad 7");
  }
}

TEST(DiskCache, StoresAndLoads) {
  const fs::path dir = scratch_dir("cache");
  DiskCache cache(dir.string());
  EXPECT_FALSE(cache.load("a").has_value());
  cache.store("a", nlohmann::json{{"x", 1.5}});
  ASSERT_TRUE(cache.load("a").has_value());
  EXPECT_EQ((*cache.load("a"))["x"], 1.5);
  EXPECT_FALSE(cache.load("b").has_value());
  DiskCache off("");
  EXPECT_FALSE(off.enabled());
  fs::remove_all(dir);
}

TEST(Convergence, SmallRunIsDeterministicAcrossThreadsAndCache) {
  ExperimentConfig c = small_convergence();
  const ResultTable a = run_convergence(c);
  ASSERT_EQ(a.rows.size(), 8u);
  for (const auto &r : a.rows) {
    EXPECT_EQ(r.pairs + r.skipped, 6u) << r.method;
    EXPECT_GE(r.mean_lpr, -1e-6) << r.method;
  }
  const ResultRow *relax = a.find("standard_normal", "relax_exact_score", "fixed", 400);
  const ResultRow *power = a.find("standard_normal", "power", "fixed", 400);
  const ResultRow *dens = a.find("standard_normal", "density_gt", "fixed", 400);
  ASSERT_TRUE(relax && power && dens);
  EXPECT_LT(relax->mean_lpr, dens->mean_lpr);
  EXPECT_LT(dens->mean_lpr, power->mean_lpr);

  const fs::path dir = scratch_dir("conv");
  c.threads = 3;
  c.cache_dir = dir.string();
  const ResultTable b = run_convergence(c);
  const ResultTable cached = run_convergence(c);
  std::stringstream sa, sb, sc;
  write_result_table(sa, a);
  write_result_table(sb, b);
  write_result_table(sc, cached);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str(), sc.str());
  EXPECT_FALSE(fs::is_empty(dir));
  fs::remove_all(dir);
}

TEST(Convergence, TooSparseGraphIsAnError) {
  ExperimentConfig c = small_convergence();
  c.datasets = {"two_spirals"};
  c.methods = {"power"};
  c.sample_sizes = {40};
  c.k = 1;
  c.fit_samples = 2000;
  c.fitted_components = 8;
  c.max_skip_fraction = 0.0;
  c.pairs = 20;
  try {
    run_convergence(c);
    FAIL() << "expected an error";
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("graph too sparse"), std::string::npos) << e.what();
  }
}

TEST(Kde, SweepShape) {
  const KdeSweep s = run_kde_tradeoff(ExperimentConfig::defaults("kde"));
  ASSERT_EQ(s.rows.size(), 30u);
  EXPECT_DOUBLE_EQ(s.rows.front().bandwidth, 0.05);
  EXPECT_NEAR(s.rows.back().bandwidth, 2.0, 1e-12);
  EXPECT_LT(s.argmin_log(), s.argmin_score());
  // E|x|^2 for the zero score
  EXPECT_NEAR(s.zero_score_mise, 1.0, 1e-3);
}

TEST(Simpson, IntegratesCubicsExactly) {
  std::vector<double> f;
  for (int i = 0; i <= 10; ++i) {
    const double x = 0.2 * i;
    f.push_back(x * x * x - x);
  }
  EXPECT_NEAR(simpson(f, 0.2), 4.0 - 2.0, 1e-12);
}

TEST(ScaledFigure, TracksAndPlanarity) {
  ExperimentConfig c = ExperimentConfig::defaults("scaled-fig");
  c.dimensions = {2, 3};
  c.gt_points = 64;
  const FigureData fig = run_scaled_geodesic_figure(c);
  ASSERT_EQ(fig.paths.size(), 4u);
  for (const auto &p : fig.paths) {
    EXPECT_EQ(p.projected.rows(), 2);
    EXPECT_LT(p.out_of_plane, 1e-8 * p.length);
  }
  EXPECT_LT(fig.max_pairwise_deviation("scaled"), 0.02);
}

TEST(RunExperiment, WritesTableAndSidecar) {
  ExperimentConfig c = ExperimentConfig::defaults("kde");
  c.kde_samples = 100;
  c.bandwidth_count = 5;
  c.quad_nodes = 201;
  const fs::path dir = scratch_dir("run");
  c.out = dir.string();
  const nlohmann::json meta = run_experiment(c);
  EXPECT_TRUE(fs::exists(dir / "kde.tsv"));
  const auto side = nlohmann::json::parse(slurp(dir / "kde.meta.json"));
  EXPECT_EQ(side["config"]["kde_samples"], 100);
  EXPECT_TRUE(side.contains("versions"));
  EXPECT_EQ(meta["config"], side["config"]);
  fs::remove_all(dir);
}

TEST(Cli, DistanceAndErrors) {
  const fs::path dir = scratch_dir("cli");
  const fs::path log = dir / "log.txt";
  EXPECT_EQ(run_cli("distance --from 2,0 --to 0,2 --n-points 64 --out " + (dir / "geo.tsv").string(), log), 0)
      << slurp(log);
  EXPECT_NE(slurp(log).find("log_distance"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "geo.tsv"));
  EXPECT_TRUE(fs::exists(dir / "geo.tsv.meta.json"));

  EXPECT_EQ(run_cli("distance --from 2,0 --to 0,2 --beta 0", log), 1);
  EXPECT_NE(slurp(log).find("beta must be > 0"), std::string::npos);
  EXPECT_NE(run_cli("teleport", log), 0);
  EXPECT_NE(run_cli("distance --from 2,0", log), 0);
  EXPECT_EQ(run_cli("distance --from 2,0,1 --to 0,2", log), 1);
  fs::remove_all(dir);
}

#pragma once

// Experiment runners: graph/relaxation convergence against ground truth,
// dimension scaling, the rescaled-geodesic figure and the KDE bandwidth
// sweep. Everything is seeded; tables come out in a fixed order regardless
// of the thread count.

#include "fermat/datasets.hpp"
#include "fermat/density.hpp"
#include "fermat/em.hpp"
#include "fermat/geometry.hpp"
#include "fermat/graph.hpp"
#include "fermat/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace fermat {

inline constexpr const char *kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Methods

enum class MethodKind { Power, DensityGt, DensityFitted, NnVariant, GtVariant, RelaxExactScore, RelaxKdeScore };

struct Method {
  MethodKind kind = MethodKind::Power;
  NnCombine combine = NnCombine::InverseOfMean;

  std::string name() const {
    switch (kind) {
    case MethodKind::Power:
      return "power";
    case MethodKind::DensityGt:
      return "density_gt";
    case MethodKind::DensityFitted:
      return "density_fitted";
    case MethodKind::NnVariant:
      return std::string("nn_variant:") + to_string(combine);
    case MethodKind::GtVariant:
      return std::string("gt_variant:") + to_string(combine);
    case MethodKind::RelaxExactScore:
      return "relax_exact_score";
    case MethodKind::RelaxKdeScore:
      return "relax_kde_score";
    }
    return "?";
  }

  bool relaxes() const { return kind == MethodKind::RelaxExactScore || kind == MethodKind::RelaxKdeScore; }
};

inline Method parse_method(const std::string &name) {
  const auto colon = name.find(':');
  if (colon != std::string::npos) {
    const std::string head = name.substr(0, colon);
    Method m;
    if (head == "nn_variant")
      m.kind = MethodKind::NnVariant;
    else if (head == "gt_variant")
      m.kind = MethodKind::GtVariant;
    else
      throw Error("unknown method '" + name + "'");
    m.combine = parse_nn_combine(name.substr(colon + 1));
    return m;
  }
  static const std::map<std::string, MethodKind> simple = {{"power", MethodKind::Power},
                                                            {"density_gt", MethodKind::DensityGt},
                                                            {"density_fitted", MethodKind::DensityFitted},
                                                            {"relax_exact_score", MethodKind::RelaxExactScore},
                                                            {"relax_kde_score", MethodKind::RelaxKdeScore}};
  const auto it = simple.find(name);
  if (it == simple.end())
    throw Error("unknown method '" + name + "'");
  return Method{it->second, NnCombine::InverseOfMean};
}

struct BetaTrack {
  std::string policy; // "fixed" or "scaled"
  double beta = 1.0;
};

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string experiment = "convergence"; // convergence | dims | scaled-fig | kde

  // data
  std::vector<std::string> datasets{"standard_normal", "gmm3", "circle", "spiral", "two_spirals"};
  Eigen::Index dim = 2; // standard_normal dimension in the convergence study
  double noise = 0.0;   // <= 0: per-dataset default
  std::size_t fitted_components = 50;
  std::size_t fit_samples = 100000;
  std::uint64_t fit_seed = 0;

  // study
  std::vector<std::string> methods{"power", "density_gt"};
  std::vector<std::size_t> sample_sizes{500, 2000, 8000, 16000};
  std::vector<Eigen::Index> dimensions{2, 3, 5, 10, 15, 25};
  std::size_t n = 20000; // fixed sample size of the dimension study
  std::size_t pairs = 100;
  std::size_t pair_pool = 500; // endpoints are drawn among the first pair_pool points
  std::string beta_policy = "fixed"; // fixed | scaled | both
  double beta = 1.0;
  std::size_t k = 0;              // 0: k_rule
  std::string k_rule = "sqrt";    // sqrt | log
  int segments = 8;               // quadrature segments per graph edge
  int intrinsic_dim = 0;          // 0: ambient dimension
  std::size_t fitted_model_components = 10;
  Eigen::Index n_points = 256;    // relaxation methods
  double relax_tol = 0.0;
  int relax_max_sweeps = 0;
  Eigen::Index gt_points = 1024;
  int gt_segments = 8;
  double gt_tol = 0.0;
  int gt_max_sweeps = 0;
  bool gt_straight_candidate = false; // also relax the chord and keep the shorter result
  double max_skip_fraction = 0.1;

  // kde
  std::size_t kde_samples = 1000;
  double bandwidth_min = 0.05;
  double bandwidth_max = 2.0;
  std::size_t bandwidth_count = 30;
  double quad_lo = -5.0;
  double quad_hi = 5.0;
  std::size_t quad_nodes = 2001;

  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out = "results";
  std::string cache_dir;

  static ExperimentConfig defaults(const std::string &experiment) {
    ExperimentConfig c;
    c.experiment = experiment;
    if (experiment == "dims") {
      c.datasets = {"standard_normal"};
      c.methods = {"power", "density_gt", "relax_exact_score"};
      c.beta_policy = "both";
    } else if (experiment == "scaled-fig") {
      c.datasets = {"standard_normal"};
      c.dimensions = {2, 4, 16};
      c.beta_policy = "both";
    } else if (experiment == "kde") {
      c.datasets = {"standard_normal"};
    } else if (experiment != "convergence") {
      throw Error("unknown experiment '" + experiment + "'");
    }
    return c;
  }

  std::size_t k_for(std::size_t n_samples) const {
    if (k > 0)
      return k;
    return k_rule == "log" ? default_k(n_samples) : sqrt_k(n_samples);
  }

  std::vector<BetaTrack> beta_tracks(Eigen::Index D) const {
    std::vector<BetaTrack> out;
    if (beta_policy == "fixed" || beta_policy == "both")
      out.push_back({"fixed", beta});
    if (beta_policy == "scaled" || beta_policy == "both")
      out.push_back({"scaled", 1.0 / static_cast<double>(D)});
    return out;
  }

  std::vector<Method> parsed_methods() const {
    std::vector<Method> out;
    for (const auto &m : methods)
      out.push_back(parse_method(m));
    return out;
  }

  void validate() const {
    auto fail = [](const std::string &what) { throw Error("config: " + what); };
    if (experiment != "convergence" && experiment != "dims" && experiment != "scaled-fig" && experiment != "kde")
      fail("unknown experiment '" + experiment + "'");
    if (datasets.empty())
      fail("datasets must not be empty");
    for (const auto &d : datasets)
      parse_dataset_kind(d);
    if (dim < 1)
      fail("dim must be >= 1");
    if (methods.empty())
      fail("methods must not be empty");
    std::set<std::string> seen;
    for (const auto &m : methods) {
      parse_method(m);
      if (!seen.insert(m).second)
        fail("method '" + m + "' listed twice");
    }
    if (sample_sizes.empty())
      fail("sample_sizes must not be empty");
    for (std::size_t i = 0; i < sample_sizes.size(); ++i) {
      if (sample_sizes[i] < 3)
        fail("sample_sizes must be >= 3");
      if (i > 0 && sample_sizes[i] <= sample_sizes[i - 1])
        fail("sample_sizes must be strictly increasing");
    }
    if (dimensions.empty())
      fail("dimensions must not be empty");
    for (auto D : dimensions)
      if (D < 1)
        fail("dimensions must be >= 1");
    if (n < 3)
      fail("n must be >= 3");
    if (pairs < 1)
      fail("pairs must be >= 1");
    if (pair_pool < 2)
      fail("pair_pool must be >= 2");
    if (beta_policy != "fixed" && beta_policy != "scaled" && beta_policy != "both")
      fail("beta_policy must be fixed, scaled or both");
    if (!(beta > 0.0) || !std::isfinite(beta))
      fail("beta must be > 0");
    if (k_rule != "sqrt" && k_rule != "log")
      fail("k_rule must be sqrt or log");
    if (segments < 1 || gt_segments < 1)
      fail("segments must be >= 1");
    if (intrinsic_dim < 0)
      fail("intrinsic_dim must be >= 0");
    if (fitted_components < 1 || fitted_model_components < 1)
      fail("fitted components must be >= 1");
    if (n_points < 2 || gt_points < 2)
      fail("n_points and gt_points must be >= 2");
    if (relax_tol < 0.0 || gt_tol < 0.0)
      fail("tolerances must be >= 0");
    if (relax_max_sweeps < 0 || gt_max_sweeps < 0)
      fail("max_sweeps must be >= 0");
    if (!(max_skip_fraction >= 0.0 && max_skip_fraction <= 1.0))
      fail("max_skip_fraction must lie in [0, 1]");
    if (kde_samples < 2)
      fail("kde_samples must be >= 2");
    if (!(bandwidth_min > 0.0) || !(bandwidth_max > bandwidth_min))
      fail("bandwidths must satisfy 0 < bandwidth_min < bandwidth_max");
    if (bandwidth_count < 3)
      fail("bandwidth_count must be >= 3");
    if (!(quad_hi > quad_lo))
      fail("quad_hi must exceed quad_lo");
    if (quad_nodes < 3 || quad_nodes % 2 == 0)
      fail("quad_nodes must be odd and >= 3");
    if (threads < 1)
      fail("threads must be >= 1");
  }
};

inline nlohmann::json to_json(const ExperimentConfig &c) {
  nlohmann::json j;
  j["experiment"] = c.experiment;
  j["datasets"] = c.datasets;
  j["dim"] = c.dim;
  j["noise"] = c.noise;
  j["fitted_components"] = c.fitted_components;
  j["fit_samples"] = c.fit_samples;
  j["fit_seed"] = c.fit_seed;
  j["methods"] = c.methods;
  j["sample_sizes"] = c.sample_sizes;
  j["dimensions"] = c.dimensions;
  j["n"] = c.n;
  j["pairs"] = c.pairs;
  j["pair_pool"] = c.pair_pool;
  j["beta_policy"] = c.beta_policy;
  j["beta"] = c.beta;
  j["k"] = c.k;
  j["k_rule"] = c.k_rule;
  j["segments"] = c.segments;
  j["intrinsic_dim"] = c.intrinsic_dim;
  j["fitted_model_components"] = c.fitted_model_components;
  j["n_points"] = c.n_points;
  j["relax_tol"] = c.relax_tol;
  j["relax_max_sweeps"] = c.relax_max_sweeps;
  j["gt_points"] = c.gt_points;
  j["gt_segments"] = c.gt_segments;
  j["gt_tol"] = c.gt_tol;
  j["gt_max_sweeps"] = c.gt_max_sweeps;
  j["gt_straight_candidate"] = c.gt_straight_candidate;
  j["max_skip_fraction"] = c.max_skip_fraction;
  j["kde_samples"] = c.kde_samples;
  j["bandwidth_min"] = c.bandwidth_min;
  j["bandwidth_max"] = c.bandwidth_max;
  j["bandwidth_count"] = c.bandwidth_count;
  j["quad_lo"] = c.quad_lo;
  j["quad_hi"] = c.quad_hi;
  j["quad_nodes"] = c.quad_nodes;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out"] = c.out;
  j["cache_dir"] = c.cache_dir;
  return j;
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are errors so
/// that typos do not silently fall back to defaults.
inline ExperimentConfig config_from_json(const nlohmann::json &j, ExperimentConfig base) {
  if (!j.is_object())
    throw Error("config: top level must be an object");
  const nlohmann::json known = to_json(base);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()))
      throw Error("config: unknown key '" + it.key() + "'");
  auto get = [&j](const char *key, auto &field) {
    if (!j.contains(key))
      return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception &) {
      throw Error(std::string("config: bad value for '") + key + "'");
    }
  };
  get("experiment", base.experiment);
  get("datasets", base.datasets);
  get("dim", base.dim);
  get("noise", base.noise);
  get("fitted_components", base.fitted_components);
  get("fit_samples", base.fit_samples);
  get("fit_seed", base.fit_seed);
  get("methods", base.methods);
  get("sample_sizes", base.sample_sizes);
  get("dimensions", base.dimensions);
  get("n", base.n);
  get("pairs", base.pairs);
  get("pair_pool", base.pair_pool);
  get("beta_policy", base.beta_policy);
  get("beta", base.beta);
  get("k", base.k);
  get("k_rule", base.k_rule);
  get("segments", base.segments);
  get("intrinsic_dim", base.intrinsic_dim);
  get("fitted_model_components", base.fitted_model_components);
  get("n_points", base.n_points);
  get("relax_tol", base.relax_tol);
  get("relax_max_sweeps", base.relax_max_sweeps);
  get("gt_points", base.gt_points);
  get("gt_segments", base.gt_segments);
  get("gt_tol", base.gt_tol);
  get("gt_max_sweeps", base.gt_max_sweeps);
  get("gt_straight_candidate", base.gt_straight_candidate);
  get("max_skip_fraction", base.max_skip_fraction);
  get("kde_samples", base.kde_samples);
  get("bandwidth_min", base.bandwidth_min);
  get("bandwidth_max", base.bandwidth_max);
  get("bandwidth_count", base.bandwidth_count);
  get("quad_lo", base.quad_lo);
  get("quad_hi", base.quad_hi);
  get("quad_nodes", base.quad_nodes);
  get("seed", base.seed);
  get("threads", base.threads);
  get("out", base.out);
  get("cache_dir", base.cache_dir);
  return base;
}

// ---------------------------------------------------------------------------
// Parallel loop and on-disk cache

/// Runs fn(0..count-1) on up to `threads` workers. The first failing index
/// (lowest, not first in time) is rethrown so errors are deterministic.
template <typename Fn> void parallel_for(std::size_t count, unsigned threads, Fn &&fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  for (unsigned t = 0; t < workers; ++t)
    pool.emplace_back(work);
  for (auto &t : pool)
    t.join();
  for (auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

/// FERMAT_CACHE_DIR wins over the configured directory; empty disables.
inline std::string resolve_cache_dir(const std::string &configured) {
  if (const char *env = std::getenv("FERMAT_CACHE_DIR"))
    return env;
  return configured;
}

/// JSON documents keyed by a descriptive string. The file name is a hash of
/// the key; the key itself is stored inside and checked on load.
class DiskCache {
public:
  explicit DiskCache(std::string dir = {}) : dir_(std::move(dir)) {
    if (!dir_.empty())
      std::filesystem::create_directories(dir_);
  }

  bool enabled() const { return !dir_.empty(); }
  const std::string &dir() const { return dir_; }

  std::optional<nlohmann::json> load(const std::string &key) const {
    if (!enabled())
      return std::nullopt;
    std::ifstream is(file_for(key));
    if (!is)
      return std::nullopt;
    try {
      nlohmann::json doc = nlohmann::json::parse(is);
      if (doc.value("key", std::string()) != key)
        return std::nullopt;
      return doc.at("value");
    } catch (const nlohmann::json::exception &) {
      return std::nullopt;
    }
  }

  void store(const std::string &key, const nlohmann::json &value) const {
    if (!enabled())
      return;
    const std::string path = file_for(key);
    const std::string tmp = path + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
      std::ofstream os(tmp);
      if (!os)
        throw Error("cache: cannot write '" + tmp + "'");
      os << nlohmann::json{{"key", key}, {"value", value}}.dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
  }

private:
  std::string file_for(const std::string &key) const {
    std::uint64_t h = 0x6a09e667f3bcc908ULL;
    for (unsigned char c : key)
      h = mix64(h ^ c);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx.json", static_cast<unsigned long long>(h));
    return (std::filesystem::path(dir_) / buf).string();
  }

  std::string dir_;
};

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
  std::string dataset;
  std::string method;
  std::string beta_policy;
  double beta = 1.0;
  std::size_t n = 0;
  Eigen::Index dim = 2;
  std::size_t pairs = 0; // pairs that contributed
  std::size_t skipped = 0;
  std::size_t disconnected = 0; // part of skipped
  std::size_t failed = 0;       // relaxation failures, part of skipped
  double mean_lpr = 0.0;
  double std_error = 0.0;
  double min_lpr = 0.0;
  double wall_seconds = 0.0;
};

struct ResultTable {
  std::string grid = "n"; // "n" or "dim"
  std::vector<ResultRow> rows;

  const ResultRow *find(const std::string &dataset, const std::string &method, const std::string &policy,
                        std::size_t grid_value) const {
    for (const auto &r : rows)
      if (r.dataset == dataset && r.method == method && r.beta_policy == policy &&
          (grid == "dim" ? static_cast<std::size_t>(r.dim) : r.n) == grid_value)
        return &r;
    return nullptr;
  }
};

/// Tab-separated table. Wall time goes to the sidecar instead so that
/// repeated runs produce identical tables.
inline void write_result_table(std::ostream &os, const ResultTable &t) {
  os << "dataset\tmethod\tbeta_policy\tbeta\tn\tdim\tpairs\tskipped\tmean_lpr\tstd_error\tmin_lpr\n";
  for (const auto &r : t.rows)
    os << r.dataset << '\t' << r.method << '\t' << r.beta_policy << '\t' << io::format_double(r.beta) << '\t' << r.n
       << '\t' << r.dim << '\t' << r.pairs << '\t' << r.skipped << '\t' << io::format_double(r.mean_lpr) << '\t'
       << io::format_double(r.std_error) << '\t' << io::format_double(r.min_lpr) << '\n';
}

inline nlohmann::json row_timings(const ResultTable &t) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto &r : t.rows)
    out.push_back({{"dataset", r.dataset},
                   {"method", r.method},
                   {"beta_policy", r.beta_policy},
                   {"n", r.n},
                   {"dim", r.dim},
                   {"disconnected", r.disconnected},
                   {"failed", r.failed},
                   {"wall_seconds", r.wall_seconds}});
  return out;
}

using ProgressFn = std::function<void(const std::string &)>;

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Stream identity of a dataset's sample: the same (seed, kind, D) gives the
// same points in every runner, and a prefix of a larger draw equals a
// smaller draw.
inline std::uint64_t dataset_tag(DatasetKind kind, Eigen::Index D) {
  return mix64(0xDA7A5E7ULL + 1000ULL * static_cast<std::uint64_t>(kind) + static_cast<std::uint64_t>(D));
}

inline DatasetSpec dataset_spec(const ExperimentConfig &c, DatasetKind kind, Eigen::Index D) {
  DatasetSpec spec;
  spec.kind = kind;
  spec.dim = D;
  spec.seed = c.seed;
  spec.noise = c.noise;
  spec.fitted_components = c.fitted_components;
  spec.fit_samples = c.fit_samples;
  spec.validate();
  return spec;
}

inline Matrix draw_sample(const ExperimentConfig &c, const DatasetSpec &spec, std::size_t n) {
  Rng rng = Rng(c.seed).child(dataset_tag(spec.kind, spec.dim));
  return sample_with_rng(spec, n, rng);
}

inline std::vector<std::pair<std::size_t, std::size_t>> draw_pairs(const ExperimentConfig &c, const DatasetSpec &spec,
                                                                   const Matrix &X, std::size_t pool) {
  pool = std::min<std::size_t>(pool, static_cast<std::size_t>(X.cols()));
  Rng rng = Rng(c.seed).child(dataset_tag(spec.kind, spec.dim) ^ 0x9A1125ULL);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t attempts = 0;
  while (out.size() < c.pairs) {
    if (++attempts > 100 * c.pairs + 1000)
      throw Error("cannot draw distinct endpoint pairs from the first " + std::to_string(pool) + " points");
    const std::size_t a = rng.below(pool), b = rng.below(pool);
    if (a == b || X.col(static_cast<Eigen::Index>(a)) == X.col(static_cast<Eigen::Index>(b)))
      continue;
    out.emplace_back(a, b);
  }
  return out;
}

inline std::string model_key(const DatasetSpec &spec, std::uint64_t fit_seed) {
  return std::string("model/") + to_string(spec.kind) + "/K" + std::to_string(spec.fitted_components) + "/N" +
         std::to_string(spec.fit_samples) + "/noise" + io::format_double(spec.effective_noise()) + "/fit" +
         std::to_string(fit_seed);
}

struct Stats {
  double mean = 0.0, std_error = 0.0, min = 0.0;
  std::size_t count = 0;
};

inline Stats summarize(const std::vector<double> &v) {
  Stats s;
  s.count = v.size();
  if (v.empty()) {
    s.mean = s.std_error = s.min = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0.0;
  for (double x : v)
    sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v)
    ss += (x - s.mean) * (x - s.mean);
  s.std_error = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
  s.min = *std::min_element(v.begin(), v.end());
  return s;
}

} // namespace detail

/// Reference density for a dataset, loaded from or stored to the cache when
/// it has to be fitted.
inline std::shared_ptr<const GaussianMixture> cached_reference_model(const DatasetSpec &spec, std::uint64_t fit_seed,
                                                                     const DiskCache &cache) {
  if (spec.kind == DatasetKind::StandardNormal || spec.kind == DatasetKind::Gmm3)
    return reference_model(spec, fit_seed);
  const std::string key = detail::model_key(spec, fit_seed);
  if (auto doc = cache.load(key))
    return std::make_shared<GaussianMixture>(io::gmm_from_json(*doc));
  auto model = reference_model(spec, fit_seed);
  cache.store(key, io::to_json(*model));
  return model;
}

// ---------------------------------------------------------------------------
// Graph and relaxation study

namespace detail {

struct StudyInput {
  const ExperimentConfig *config = nullptr;
  DatasetSpec spec;
  std::shared_ptr<const GaussianMixture> model;
  Matrix samples; // largest grid size, prefixes give the smaller ones
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> sizes; // ascending
  BetaTrack track;
  const DiskCache *cache = nullptr;
  ProgressFn progress;
};

class Study {
public:
  explicit Study(StudyInput in) : in_(std::move(in)), c_(*in_.config), params_{in_.track.beta} {
    D_ = in_.spec.dim;
    d_ = c_.intrinsic_dim > 0 ? c_.intrinsic_dim : static_cast<int>(D_);
    methods_ = c_.parsed_methods();
    for (const Method &m : methods_)
      if (m.kind == MethodKind::RelaxKdeScore && D_ != 2)
        throw Error("relax_kde_score is only available for two-dimensional datasets");
  }

  std::vector<ResultRow> run() {
    const std::size_t n_max = in_.sizes.back();
    auto t0 = std::chrono::steady_clock::now();
    Grid top = make_grid(n_max);
    ground_truth(top);
    note("ground truth " + std::to_string(in_.pairs.size()) + " pairs in " + fmt_secs(seconds_since(t0)));

    std::vector<ResultRow> rows;
    for (auto it = in_.sizes.rbegin(); it != in_.sizes.rend(); ++it) {
      Grid g = *it == n_max ? std::move(top) : make_grid(*it);
      for (const Method &m : methods_)
        rows.push_back(evaluate(g, m));
    }
    std::stable_sort(rows.begin(), rows.end(), [this](const ResultRow &a, const ResultRow &b) {
      if (a.n != b.n)
        return a.n < b.n;
      return method_index(a.method) < method_index(b.method);
    });
    return rows;
  }

private:
  struct Grid {
    std::size_t n = 0;
    std::size_t k = 0;
    std::optional<KnnGraph> topology;
    std::map<std::string, KnnGraph> weighted;
  };

  void note(const std::string &msg) const {
    if (in_.progress)
      in_.progress(std::string(to_string(in_.spec.kind)) + " D=" + std::to_string(D_) + " " + in_.track.policy +
                   ": " + msg);
  }

  static std::string fmt_secs(double s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1fs", s);
    return buf;
  }

  std::size_t method_index(const std::string &name) const {
    for (std::size_t i = 0; i < methods_.size(); ++i)
      if (methods_[i].name() == name)
        return i;
    return methods_.size();
  }

  Grid make_grid(std::size_t n) const {
    Grid g;
    g.n = n;
    g.k = std::min(c_.k_for(n), n - 1);
    g.topology = build_knn(in_.samples.leftCols(static_cast<Eigen::Index>(n)), g.k);
    return g;
  }

  const KnnGraph &density_graph(Grid &g) const { return weighted(g, Method{MethodKind::DensityGt, {}}); }

  const KnnGraph &weighted(Grid &g, const Method &m) const {
    // Relaxation methods start from the ground-truth density graph.
    const std::string key = m.relaxes() ? std::string("density_gt") : m.name();
    if (auto it = g.weighted.find(key); it != g.weighted.end())
      return it->second;
    const double beta = params_.beta;
    EdgeWeighting w;
    switch (m.kind) {
    case MethodKind::Power:
      w = PowerWeighted{beta, d_};
      break;
    case MethodKind::DensityGt:
    case MethodKind::RelaxExactScore:
    case MethodKind::RelaxKdeScore:
      w = DensityQuadrature{in_.model, beta, c_.segments};
      break;
    case MethodKind::DensityFitted:
      w = DensityQuadrature{fitted_model(g), beta, c_.segments};
      break;
    case MethodKind::NnVariant:
      w = NnVariant{m.combine, beta, d_, nullptr};
      break;
    case MethodKind::GtVariant:
      w = NnVariant{m.combine, beta, d_, in_.model};
      break;
    }
    return g.weighted.emplace(key, weight_edges(*g.topology, w)).first->second;
  }

  // Stand-in for a learned density: a small mixture fitted to the grid sample.
  DensityPtr fitted_model(const Grid &g) const {
    const std::size_t K = std::clamp<std::size_t>(g.n / 50, 1, c_.fitted_model_components);
    EmConfig ec;
    ec.seed = Rng(c_.seed).child(dataset_tag(in_.spec.kind, D_) ^ 0xF177EDULL).child(g.n)();
    return std::make_shared<GaussianMixture>(
        gmm_fit_em(in_.samples.leftCols(static_cast<Eigen::Index>(g.n)), K, ec));
  }

  Vector point(std::size_t i) const { return in_.samples.col(static_cast<Eigen::Index>(i)); }

  std::string gt_key(std::size_t pair, std::size_t n_max) const {
    const auto &[a, b] = in_.pairs[pair];
    return std::string("gt/") + to_string(in_.spec.kind) + "/D" + std::to_string(D_) + "/seed" +
           std::to_string(c_.seed) + "/" +
           (in_.spec.kind == DatasetKind::StandardNormal || in_.spec.kind == DatasetKind::Gmm3
                ? std::string("exact")
                : model_key(in_.spec, c_.fit_seed)) +
           "/pair" + std::to_string(pair) + ":" + std::to_string(a) + "-" + std::to_string(b) + "/beta" +
           io::format_double(params_.beta) + "/init" + std::to_string(n_max) + "k" + std::to_string(c_.k_for(n_max)) +
           "s" + std::to_string(c_.segments) + (c_.gt_straight_candidate ? "+chord" : "") + "/q" +
           std::to_string(c_.gt_points) + "-" + std::to_string(c_.gt_segments) + "-" + io::format_double(c_.gt_tol) +
           "-" + std::to_string(c_.gt_max_sweeps);
  }

  // Relaxes from the density-weighted graph path of the largest sample (the
  // chord when the graph leaves the pair disconnected, or as an extra
  // candidate on request) and keeps the shortest converged result.
  std::optional<double> compute_ground_truth(std::size_t pair, Grid &top) const {
    const auto &[a, b] = in_.pairs[pair];
    const Vector from = point(a), to = point(b);
    GroundTruthQuality q;
    q.n_points = c_.gt_points;
    q.segments_per_edge = c_.gt_segments;
    q.tol = c_.gt_tol;
    q.max_sweeps = c_.gt_max_sweeps;
    q.seed = Rng(c_.seed).child(0x67ULL).child(pair)();
    std::optional<double> best;
    auto attempt = [&](const std::optional<Path> &init) {
      try {
        const double v = ground_truth_distance(from, to, *in_.model, params_, q, init).log_distance;
        if (!best || v < *best)
          best = v;
      } catch (const RelaxationError &) {
      } catch (const NonFiniteError &) {
      }
    };
    std::optional<Path> init;
    try {
      init = polyline(dijkstra(density_graph(top), a, b), *top.topology);
    } catch (const DisconnectedError &) {
    }
    if (init)
      attempt(init);
    if (!init || c_.gt_straight_candidate || !best)
      attempt(std::nullopt);
    return best;
  }

  void ground_truth(Grid &top) {
    const std::size_t P = in_.pairs.size();
    gt_.assign(P, std::nullopt);
    density_graph(top); // built once, before the workers share it
    std::vector<std::size_t> todo;
    for (std::size_t p = 0; p < P; ++p) {
      if (auto doc = in_.cache->load(gt_key(p, top.n))) {
        if (!doc->is_null())
          gt_[p] = doc->get<double>();
      } else {
        todo.push_back(p);
      }
    }
    parallel_for(todo.size(), c_.threads, [&](std::size_t t) {
      const std::size_t p = todo[t];
      gt_[p] = compute_ground_truth(p, top);
      in_.cache->store(gt_key(p, top.n), gt_[p] ? nlohmann::json(*gt_[p]) : nlohmann::json());
    });
  }

  double path_lpr(const Path &path, double truth) const {
    const double len = path.euclidean_length();
    const Path fine = len > 0.0 ? subdivide(path, len / static_cast<double>(c_.gt_points)) : path;
    return lpr(fine, *in_.model, params_, truth, c_.gt_segments);
  }

  ResultRow evaluate(Grid &g, const Method &m) {
    const auto t0 = std::chrono::steady_clock::now();
    const KnnGraph &graph = weighted(g, m);
    std::unique_ptr<KdeModel> kde;
    if (m.kind == MethodKind::RelaxKdeScore) {
      const Matrix X = in_.samples.leftCols(static_cast<Eigen::Index>(g.n));
      kde = std::make_unique<KdeModel>(X, scott_bandwidth(X));
    }

    enum class Outcome { Ok, NoTruth, Disconnected, Failed };
    const std::size_t P = in_.pairs.size();
    std::vector<Outcome> outcome(P, Outcome::Ok);
    std::vector<double> value(P, 0.0);
    parallel_for(P, c_.threads, [&](std::size_t p) {
      if (!gt_[p]) {
        outcome[p] = Outcome::NoTruth;
        return;
      }
      const auto &[a, b] = in_.pairs[p];
      GraphPath gp;
      try {
        gp = dijkstra(graph, a, b);
      } catch (const DisconnectedError &) {
        outcome[p] = Outcome::Disconnected;
        return;
      }
      if (!m.relaxes()) {
        value[p] = path_lpr(polyline(gp, graph), *gt_[p]);
        return;
      }
      RelaxationConfig rc;
      rc.tol = c_.relax_tol;
      rc.max_sweeps = c_.relax_max_sweeps;
      rc.seed = Rng(c_.seed).child(0x7E1A ^ g.n).child(p)();
      try {
        Path init = densify(gp, graph, c_.n_points);
        RelaxResult r = m.kind == MethodKind::RelaxExactScore
                            ? relax_multilevel(std::move(init), score_of(*in_.model), params_, rc)
                            : relax_multilevel(std::move(init), score_of(*kde), params_, rc);
        if (!r.report.converged) {
          outcome[p] = Outcome::Failed;
          return;
        }
        value[p] = path_lpr(r.path, *gt_[p]);
      } catch (const RelaxationError &) {
        outcome[p] = Outcome::Failed;
      } catch (const NonFiniteError &) {
        outcome[p] = Outcome::Failed;
      }
    });

    ResultRow row;
    row.dataset = to_string(in_.spec.kind);
    row.method = m.name();
    row.beta_policy = in_.track.policy;
    row.beta = params_.beta;
    row.n = g.n;
    row.dim = D_;
    std::vector<double> ok;
    for (std::size_t p = 0; p < P; ++p) {
      switch (outcome[p]) {
      case Outcome::Ok:
        ok.push_back(value[p]);
        break;
      case Outcome::Disconnected:
        ++row.disconnected;
        break;
      default:
        ++row.failed;
        break;
      }
    }
    row.skipped = P - ok.size();
    if (static_cast<double>(row.disconnected) > c_.max_skip_fraction * static_cast<double>(P))
      throw Error("graph too sparse: " + row.dataset + " n=" + std::to_string(g.n) + " k=" + std::to_string(g.k) +
                  " left " + std::to_string(row.disconnected) + " of " + std::to_string(P) +
                  " pairs disconnected; raise k");
    if (ok.empty())
      throw Error("no pair could be evaluated for " + row.dataset + " / " + row.method + " at n=" +
                  std::to_string(g.n));
    const Stats s = summarize(ok);
    row.pairs = s.count;
    row.mean_lpr = s.mean;
    row.std_error = s.std_error;
    row.min_lpr = s.min;
    row.wall_seconds = seconds_since(t0);
    note(row.method + " n=" + std::to_string(g.n) + " mean LPR " + io::format_double(row.mean_lpr) + " (" +
         fmt_secs(row.wall_seconds) + ")");
    return row;
  }

  StudyInput in_;
  const ExperimentConfig &c_;
  MetricParams params_;
  Eigen::Index D_ = 2;
  int d_ = 2;
  std::vector<Method> methods_;
  std::vector<std::optional<double>> gt_;
};

} // namespace detail

/// Mean LPR of every method over a nested sample-size grid, per dataset and
/// beta track. Endpoint pairs are fixed across the grid.
inline ResultTable run_convergence(const ExperimentConfig &config, const ProgressFn &progress = {}) {
  config.validate();
  const DiskCache cache(resolve_cache_dir(config.cache_dir));
  ResultTable table;
  table.grid = "n";
  for (const auto &name : config.datasets) {
    const DatasetKind kind = parse_dataset_kind(name);
    const Eigen::Index D = kind == DatasetKind::StandardNormal ? config.dim : 2;
    const DatasetSpec spec = detail::dataset_spec(config, kind, D);
    const auto model = cached_reference_model(spec, config.fit_seed, cache);
    const Matrix X = detail::draw_sample(config, spec, config.sample_sizes.back());
    const auto pairs = detail::draw_pairs(config, spec, X, std::min(config.pair_pool, config.sample_sizes.front()));
    for (const BetaTrack &track : config.beta_tracks(D)) {
      detail::StudyInput in{&config, spec, model, X, pairs, config.sample_sizes, track, &cache, progress};
      for (auto &row : detail::Study(std::move(in)).run())
        table.rows.push_back(std::move(row));
    }
  }
  return table;
}

/// Standard normals of growing dimension at a fixed sample size, with both
/// beta tracks unless configured otherwise.
inline ResultTable run_dimension_scaling(const ExperimentConfig &config, const ProgressFn &progress = {}) {
  config.validate();
  const DiskCache cache(resolve_cache_dir(config.cache_dir));
  ResultTable table;
  table.grid = "dim";
  for (const Eigen::Index D : config.dimensions) {
    const DatasetSpec spec = detail::dataset_spec(config, DatasetKind::StandardNormal, D);
    const auto model = cached_reference_model(spec, config.fit_seed, cache);
    const Matrix X = detail::draw_sample(config, spec, config.n);
    const auto pairs = detail::draw_pairs(config, spec, X, std::min(config.pair_pool, config.n));
    for (const BetaTrack &track : config.beta_tracks(D)) {
      detail::StudyInput in{&config, spec, model, X, pairs, {config.n}, track, &cache, progress};
      for (auto &row : detail::Study(std::move(in)).run())
        table.rows.push_back(std::move(row));
    }
  }
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const ResultRow &a, const ResultRow &b) {
    return a.beta_policy != b.beta_policy ? a.beta_policy < b.beta_policy : false;
  });
  return table;
}

// ---------------------------------------------------------------------------
// Rescaled geodesics

struct FigurePath {
  std::string track; // "scaled" (beta = 1/D) or "fixed" (beta = the configured value)
  Eigen::Index dim = 2;
  double beta = 1.0;
  double log_distance = 0.0;
  /// Geodesic divided by sqrt(D), projected on the plane of the endpoints;
  /// 2 x (n+1).
  Matrix projected;
  /// Euclidean length of the rescaled path.
  double length = 0.0;
  /// Largest out-of-plane component of the rescaled path.
  double out_of_plane = 0.0;
  /// Largest pointwise distance to the first dimension's path of the same
  /// track, divided by that path's length.
  double relative_deviation = 0.0;
};

struct FigureData {
  std::vector<FigurePath> paths;

  /// Largest pairwise relative deviation within a track.
  double max_pairwise_deviation(const std::string &track) const {
    double worst = 0.0;
    for (const auto &a : paths)
      for (const auto &b : paths)
        if (a.track == track && b.track == track && a.dim < b.dim)
          worst = std::max(worst, (a.projected - b.projected).colwise().norm().maxCoeff() /
                                      std::min(a.length, b.length));
    return worst;
  }
};

/// Ground-truth geodesics of the standard normal between sqrt(D) e1 and
/// sqrt(D) e2 for each configured dimension.
inline FigureData run_scaled_geodesic_figure(const ExperimentConfig &config, const ProgressFn &progress = {}) {
  config.validate();
  FigureData fig;
  std::vector<std::pair<Eigen::Index, BetaTrack>> jobs;
  for (const Eigen::Index D : config.dimensions) {
    if (D < 2)
      throw Error("scaled-fig: dimensions must be >= 2");
    for (const BetaTrack &t : config.beta_tracks(D))
      jobs.emplace_back(D, t);
  }
  fig.paths.resize(jobs.size());
  parallel_for(jobs.size(), config.threads, [&](std::size_t j) {
    const auto &[D, track] = jobs[j];
    const GaussianMixture model = GaussianMixture::standard_normal(D);
    Vector a = Vector::Zero(D), b = Vector::Zero(D);
    a[0] = b[1] = std::sqrt(static_cast<double>(D));
    GroundTruthQuality q;
    q.n_points = config.gt_points;
    q.segments_per_edge = config.gt_segments;
    q.tol = config.gt_tol;
    q.max_sweeps = config.gt_max_sweeps;
    q.seed = Rng(config.seed).child(static_cast<std::uint64_t>(D))();
    const GroundTruth gt = ground_truth_distance(a, b, model, MetricParams{track.beta}, q);
    FigurePath fp;
    fp.track = track.policy;
    fp.dim = D;
    fp.beta = track.beta;
    fp.log_distance = gt.log_distance;
    const Matrix scaled = gt.geodesic.points() / std::sqrt(static_cast<double>(D));
    fp.projected = scaled.topRows(2);
    fp.length = Path(scaled).euclidean_length();
    fp.out_of_plane = D > 2 ? scaled.bottomRows(D - 2).colwise().norm().maxCoeff() : 0.0;
    fig.paths[j] = std::move(fp);
  });
  for (auto &p : fig.paths) {
    for (const auto &ref : fig.paths)
      if (ref.track == p.track) {
        p.relative_deviation = (p.projected - ref.projected).colwise().norm().maxCoeff() / ref.length;
        break;
      }
    if (progress)
      progress("scaled-fig " + p.track + " D=" + std::to_string(p.dim) + " deviation " +
               io::format_double(p.relative_deviation));
  }
  return fig;
}

inline void write_figure_summary(std::ostream &os, const FigureData &fig) {
  os << "track\tdim\tbeta\tlog_distance\tlength\trelative_deviation\tout_of_plane\n";
  for (const auto &p : fig.paths)
    os << p.track << '\t' << p.dim << '\t' << io::format_double(p.beta) << '\t' << io::format_double(p.log_distance)
       << '\t' << io::format_double(p.length) << '\t' << io::format_double(p.relative_deviation) << '\t'
       << io::format_double(p.out_of_plane) << '\n';
}

inline void write_figure_paths(std::ostream &os, const FigureData &fig) {
  os << "track\tdim\ti\tx\ty\n";
  for (const auto &p : fig.paths)
    for (Eigen::Index i = 0; i < p.projected.cols(); ++i)
      os << p.track << '\t' << p.dim << '\t' << i << '\t' << io::format_double(p.projected(0, i)) << '\t'
         << io::format_double(p.projected(1, i)) << '\n';
}

// ---------------------------------------------------------------------------
// KDE bandwidth sweep

struct KdeSweepRow {
  double bandwidth = 0.0;
  double mise_log_density = 0.0;
  double mise_score = 0.0;
};

struct KdeSweep {
  std::vector<KdeSweepRow> rows;
  /// MISE of the zero score, the large-bandwidth limit of the score curve.
  double zero_score_mise = 0.0;

  std::size_t argmin_log() const { return argmin(&KdeSweepRow::mise_log_density); }
  std::size_t argmin_score() const { return argmin(&KdeSweepRow::mise_score); }
  /// Interior minimum on the grid.
  bool u_shaped_log() const { return interior(argmin_log()); }
  bool u_shaped_score() const { return interior(argmin_score()); }

private:
  std::size_t argmin(double KdeSweepRow::*field) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].*field < rows[best].*field)
        best = i;
    return best;
  }
  bool interior(std::size_t i) const { return i > 0 && i + 1 < rows.size(); }
};

/// Composite Simpson rule over equally spaced values (odd count).
inline double simpson(const std::vector<double> &f, double h) {
  if (f.size() < 3 || f.size() % 2 == 0)
    throw Error("simpson: need an odd number of at least three nodes");
  double s = f.front() + f.back();
  for (std::size_t i = 1; i + 1 < f.size(); ++i)
    s += (i % 2 ? 4.0 : 2.0) * f[i];
  return s * h / 3.0;
}

/// MISE of the KDE log density and score against the 1D standard normal,
/// weighted by the true density, over a log-spaced bandwidth grid.
inline KdeSweep run_kde_tradeoff(const ExperimentConfig &config, const ProgressFn &progress = {}) {
  config.validate();
  Rng rng = Rng(config.seed).child(0x4DEULL);
  Matrix samples(1, static_cast<Eigen::Index>(config.kde_samples));
  for (Eigen::Index i = 0; i < samples.cols(); ++i)
    samples(0, i) = rng.normal();

  const std::size_t Q = config.quad_nodes;
  const double h = (config.quad_hi - config.quad_lo) / static_cast<double>(Q - 1);
  std::vector<double> xs(Q), log_p(Q), weight(Q);
  for (std::size_t i = 0; i < Q; ++i) {
    xs[i] = config.quad_lo + h * static_cast<double>(i);
    log_p[i] = -0.5 * xs[i] * xs[i] - 0.5 * std::log(2.0 * std::numbers::pi);
    weight[i] = std::exp(log_p[i]);
  }

  KdeSweep sweep;
  {
    std::vector<double> f(Q);
    for (std::size_t i = 0; i < Q; ++i)
      f[i] = xs[i] * xs[i] * weight[i];
    sweep.zero_score_mise = simpson(f, h);
  }
  sweep.rows.resize(config.bandwidth_count);
  const double lo = std::log(config.bandwidth_min), hi = std::log(config.bandwidth_max);
  parallel_for(config.bandwidth_count, config.threads, [&](std::size_t b) {
    const double sigma = std::exp(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(config.bandwidth_count - 1));
    const KdeModel kde(samples, sigma);
    std::vector<double> fl(Q), fs(Q);
    Vector x(1);
    for (std::size_t i = 0; i < Q; ++i) {
      x[0] = xs[i];
      const double dl = kde.log_density(x) - log_p[i];
      const double ds = kde.score(x)[0] + xs[i];
      fl[i] = dl * dl * weight[i];
      fs[i] = ds * ds * weight[i];
    }
    sweep.rows[b] = {sigma, simpson(fl, h), simpson(fs, h)};
  });
  if (progress)
    progress("kde: argmin log-density bandwidth " + io::format_double(sweep.rows[sweep.argmin_log()].bandwidth) +
             ", argmin score bandwidth " + io::format_double(sweep.rows[sweep.argmin_score()].bandwidth));
  return sweep;
}

inline void write_kde_sweep(std::ostream &os, const KdeSweep &s) {
  os << "bandwidth\tmise_log_density\tmise_score\n";
  for (const auto &r : s.rows)
    os << io::format_double(r.bandwidth) << '\t' << io::format_double(r.mise_log_density) << '\t'
       << io::format_double(r.mise_score) << '\n';
}

// ---------------------------------------------------------------------------
// Output files

/// Metadata common to every sidecar.
inline nlohmann::json base_metadata(const std::string &command, std::uint64_t seed) {
  nlohmann::json meta;
  meta["command"] = command;
  meta["seed"] = seed;
  meta["versions"] = {{"fermat", kVersion},
                      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                    "." + std::to_string(EIGEN_MINOR_VERSION)},
                      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                      {"compiler", __VERSION__}};
  return meta;
}

inline void write_text_file(const std::filesystem::path &path, const std::function<void(std::ostream &)> &body) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os)
    throw Error("cannot open '" + path.string() + "' for writing");
  body(os);
  if (!os)
    throw Error("write to '" + path.string() + "' failed");
}

inline void write_json_file(const std::filesystem::path &path, const nlohmann::json &doc) {
  write_text_file(path, [&](std::ostream &os) { os << doc.dump(2) << '\n'; });
}

/// Runs the configured experiment and writes <out>/<experiment>.tsv plus a
/// <out>/<experiment>.meta.json sidecar (and figure paths for scaled-fig).
inline nlohmann::json run_experiment(const ExperimentConfig &config, const ProgressFn &progress = {}) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::filesystem::path out(config.out);
  const std::string stem = config.experiment;
  nlohmann::json meta = base_metadata("exp " + config.experiment, config.seed);
  meta["config"] = to_json(config);
  meta["cache_dir"] = resolve_cache_dir(config.cache_dir);
  nlohmann::json summary;
  if (config.experiment == "convergence" || config.experiment == "dims") {
    const ResultTable t =
        config.experiment == "convergence" ? run_convergence(config, progress) : run_dimension_scaling(config, progress);
    write_text_file(out / (stem + ".tsv"), [&](std::ostream &os) { write_result_table(os, t); });
    meta["rows"] = row_timings(t);
  } else if (config.experiment == "scaled-fig") {
    const FigureData fig = run_scaled_geodesic_figure(config, progress);
    write_text_file(out / (stem + ".tsv"), [&](std::ostream &os) { write_figure_summary(os, fig); });
    write_text_file(out / (stem + "_paths.tsv"), [&](std::ostream &os) { write_figure_paths(os, fig); });
    for (const auto &track : config.beta_tracks(2))
      summary["max_pairwise_deviation"][track.policy] = fig.max_pairwise_deviation(track.policy);
  } else {
    const KdeSweep s = run_kde_tradeoff(config, progress);
    write_text_file(out / (stem + ".tsv"), [&](std::ostream &os) { write_kde_sweep(os, s); });
    summary["argmin_bandwidth_log_density"] = s.rows[s.argmin_log()].bandwidth;
    summary["argmin_bandwidth_score"] = s.rows[s.argmin_score()].bandwidth;
    summary["u_shaped_log_density"] = s.u_shaped_log();
    summary["u_shaped_score"] = s.u_shaped_score();
    summary["zero_score_mise"] = s.zero_score_mise;
  }
  if (!summary.is_null())
    meta["summary"] = summary;
  meta["wall_seconds"] = detail::seconds_since(t0);
  write_json_file(out / (stem + ".meta.json"), meta);
  return meta;
}

} // namespace fermat

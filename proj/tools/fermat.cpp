// fermat: command-line front end for sampling, fitting, graph paths,
// relaxation, distances and the experiment runners.

#include "fermat/fermat.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace fermat;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 1;
  std::string config;
};

void add_common(CLI::App *cmd, Common &c) {
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--out", c.out, "output file (directory for exp)");
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--config", c.config, "JSON config file");
}

json read_json_file(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw Error("cannot open config '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error &e) {
    throw Error("config '" + path + "': " + e.what());
  }
}

// Flag defaults can come from --config; explicit flags win.
template <typename T> void from_config(const json &cfg, const char *key, CLI::App *cmd, const char *flag, T &field) {
  if (cfg.contains(key) && cmd->count(flag) == 0) {
    try {
      cfg.at(key).get_to(field);
    } catch (const json::exception &) {
      throw Error(std::string("config: bad value for '") + key + "'");
    }
  }
}

Vector parse_point(const std::string &text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    char *end = nullptr;
    const double x = std::strtod(cell.c_str(), &end);
    if (cell.empty() || *end != '\0' || !std::isfinite(x))
      throw Error("bad coordinate '" + cell + "' in point '" + text + "'");
    v.push_back(x);
  }
  if (v.empty())
    throw Error("empty point");
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// A model is either a dataset name (standard_normal takes an optional ":D")
// or a mixture JSON file.
std::shared_ptr<const GaussianMixture> load_model(const std::string &text, std::uint64_t fit_seed,
                                                  const std::string &cache_dir) {
  std::string name = text;
  Eigen::Index dim = 2;
  if (const auto colon = text.find(':'); colon != std::string::npos) {
    name = text.substr(0, colon);
    dim = std::stol(text.substr(colon + 1));
  }
  DatasetKind kind;
  try {
    kind = parse_dataset_kind(name);
  } catch (const Error &) {
    return std::make_shared<GaussianMixture>(io::read_gmm_file(text));
  }
  DatasetSpec spec;
  spec.kind = kind;
  spec.dim = kind == DatasetKind::StandardNormal ? dim : 2;
  return cached_reference_model(spec, fit_seed, DiskCache(resolve_cache_dir(cache_dir)));
}

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw Error("beta must be > 0 (got " + io::format_double(beta) + ")");
}

void write_sidecar(const std::string &out, json meta) {
  if (out.empty())
    return;
  write_json_file(out + ".meta.json", meta);
}

void print_log_value(const char *label, double v) { std::cout << label << '\t' << io::format_double(v) << '\n'; }

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Density-based (Fermat) distances, geodesics and graph approximations"};
  app.require_subcommand(1);

  // sample
  Common c_sample;
  std::string s_dataset = "standard_normal";
  Eigen::Index s_dim = 2;
  std::size_t s_n = 1000;
  double s_noise = 0.0;
  auto *sample_cmd = app.add_subcommand("sample", "draw points from a dataset");
  add_common(sample_cmd, c_sample);
  sample_cmd->add_option("--dataset", s_dataset, "standard_normal | gmm3 | circle | spiral | two_spirals");
  sample_cmd->add_option("--dim", s_dim, "dimension (standard_normal only)");
  sample_cmd->add_option("-n,--n", s_n, "number of points");
  sample_cmd->add_option("--noise", s_noise, "noise scale for the curve datasets (0: default)");

  // fit-gmm
  Common c_fit;
  std::string f_in;
  std::size_t f_k = 50;
  EmConfig f_em;
  auto *fit_cmd = app.add_subcommand("fit-gmm", "fit a Gaussian mixture by EM");
  add_common(fit_cmd, c_fit);
  fit_cmd->add_option("--in", f_in, "point table")->required();
  fit_cmd->add_option("-k,--components", f_k, "number of components");
  fit_cmd->add_option("--max-iters", f_em.max_iters, "EM iteration cap");
  fit_cmd->add_option("--tol", f_em.tol, "per-sample log-likelihood tolerance");
  fit_cmd->add_option("--reg", f_em.reg_covar, "covariance regularization");

  // build-graph
  Common c_graph;
  std::string g_in, g_weighting = "power", g_model;
  std::size_t g_k = 0;
  double g_beta = 1.0;
  int g_dim = 0, g_segments = 8;
  std::uint64_t g_fit_seed = 0;
  std::string g_cache;
  auto *graph_cmd = app.add_subcommand("build-graph", "build and weight a kNN graph");
  add_common(graph_cmd, c_graph);
  graph_cmd->add_option("--in", g_in, "point table")->required();
  graph_cmd->add_option("-k,--k", g_k, "neighbors per point (0: max(10, ceil(2e ln n)))");
  graph_cmd->add_option("--weighting", g_weighting,
                        "power | density | nn_variant:<rule> | gt_variant:<rule>, rule one of "
                        "inverse_of_mean, mean_of_inverse, max, min");
  graph_cmd->add_option("--model", g_model, "density model: dataset name or mixture JSON");
  graph_cmd->add_option("--beta", g_beta, "inverse temperature");
  graph_cmd->add_option("--intrinsic-dim", g_dim, "intrinsic dimension d (0: ambient)");
  graph_cmd->add_option("--segments", g_segments, "quadrature segments per edge");
  graph_cmd->add_option("--fit-seed", g_fit_seed, "seed of fitted reference models");
  graph_cmd->add_option("--cache-dir", g_cache, "cache for fitted reference models");

  // shortest-path
  Common c_sp;
  std::string sp_graph;
  std::size_t sp_from = 0, sp_to = 1;
  Eigen::Index sp_densify = 0;
  auto *sp_cmd = app.add_subcommand("shortest-path", "Dijkstra between two graph nodes");
  add_common(sp_cmd, c_sp);
  sp_cmd->add_option("--graph", sp_graph, "weighted graph file")->required();
  sp_cmd->add_option("--from", sp_from, "source node")->required();
  sp_cmd->add_option("--to", sp_to, "target node")->required();
  sp_cmd->add_option("--densify", sp_densify, "resample the path to this many equal steps (0: node polyline)");

  // relax
  Common c_relax;
  std::string r_model = "standard_normal", r_init, r_from, r_to, r_cache;
  double r_beta = 1.0, r_tol = 0.0;
  Eigen::Index r_points = 256;
  int r_sweeps = 0;
  std::uint64_t r_fit_seed = 0;
  bool r_plain = false;
  auto *relax_cmd = app.add_subcommand("relax", "relax a path towards the geodesic");
  add_common(relax_cmd, c_relax);
  relax_cmd->add_option("--model", r_model, "density model: dataset name or mixture JSON");
  relax_cmd->add_option("--init", r_init, "initial path table (default: straight line)");
  relax_cmd->add_option("--from", r_from, "start point x0,x1,...");
  relax_cmd->add_option("--to", r_to, "end point");
  relax_cmd->add_option("--beta", r_beta, "inverse temperature");
  relax_cmd->add_option("--n-points", r_points, "path intervals");
  relax_cmd->add_option("--tol", r_tol, "displacement tolerance (0: 1e-8 chord)");
  relax_cmd->add_option("--max-sweeps", r_sweeps, "sweep budget (0: 20 n)");
  relax_cmd->add_flag("--plain", r_plain, "sweeps only, no Newton acceleration");
  relax_cmd->add_option("--fit-seed", r_fit_seed, "seed of fitted reference models");
  relax_cmd->add_option("--cache-dir", r_cache, "cache for fitted reference models");

  // distance
  Common c_dist;
  std::string d_model = "standard_normal", d_from, d_to, d_cache;
  double d_beta = 1.0;
  GroundTruthQuality d_q;
  std::uint64_t d_fit_seed = 0;
  auto *dist_cmd = app.add_subcommand("distance", "ground-truth distance and geodesic between two points");
  add_common(dist_cmd, c_dist);
  dist_cmd->add_option("--model", d_model, "density model: dataset name or mixture JSON");
  dist_cmd->add_option("--from", d_from, "start point x0,x1,...")->required();
  dist_cmd->add_option("--to", d_to, "end point")->required();
  dist_cmd->add_option("--beta", d_beta, "inverse temperature");
  dist_cmd->add_option("--n-points", d_q.n_points, "path intervals");
  dist_cmd->add_option("--segments", d_q.segments_per_edge, "quadrature segments per interval");
  dist_cmd->add_option("--tol", d_q.tol, "displacement tolerance (0: 1e-8 chord)");
  dist_cmd->add_option("--fit-seed", d_fit_seed, "seed of fitted reference models");
  dist_cmd->add_option("--cache-dir", d_cache, "cache for fitted reference models");

  // lpr
  Common c_lpr;
  std::string l_model = "standard_normal", l_path, l_cache;
  double l_beta = 1.0;
  std::optional<double> l_truth;
  GroundTruthQuality l_q;
  std::uint64_t l_fit_seed = 0;
  auto *lpr_cmd = app.add_subcommand("lpr", "log path ratio of a path against the ground-truth distance");
  add_common(lpr_cmd, c_lpr);
  lpr_cmd->add_option("--model", l_model, "density model: dataset name or mixture JSON");
  lpr_cmd->add_option("--path", l_path, "path table")->required();
  lpr_cmd->add_option("--beta", l_beta, "inverse temperature");
  lpr_cmd->add_option("--truth", l_truth, "known log distance (default: computed)");
  lpr_cmd->add_option("--n-points", l_q.n_points, "ground-truth path intervals");
  lpr_cmd->add_option("--segments", l_q.segments_per_edge, "quadrature segments per interval");
  lpr_cmd->add_option("--fit-seed", l_fit_seed, "seed of fitted reference models");
  lpr_cmd->add_option("--cache-dir", l_cache, "cache for fitted reference models");

  // exp
  auto *exp_cmd = app.add_subcommand("exp", "experiment runners");
  exp_cmd->require_subcommand(1);
  struct ExpFlags {
    Common common;
    std::vector<std::string> datasets, methods;
    std::vector<std::size_t> sizes;
    std::vector<Eigen::Index> dims;
    std::size_t pairs = 0, k = 0, n = 0;
    double beta = 0.0;
    std::string policy, cache;
  };
  std::map<std::string, ExpFlags> exp_flags;
  for (const char *name : {"convergence", "dims", "scaled-fig", "kde"}) {
    auto &f = exp_flags[name];
    auto *cmd = exp_cmd->add_subcommand(name, std::string("run the ") + name + " experiment");
    add_common(cmd, f.common);
    cmd->add_option("--datasets", f.datasets, "dataset names");
    cmd->add_option("--methods", f.methods, "method names");
    cmd->add_option("--sample-sizes", f.sizes, "increasing sample-size grid");
    cmd->add_option("--dims", f.dims, "dimension grid");
    cmd->add_option("--pairs", f.pairs, "endpoint pairs");
    cmd->add_option("--n", f.n, "sample size of the dimension study");
    cmd->add_option("--k", f.k, "neighbors per point (0: rule)");
    cmd->add_option("--beta", f.beta, "fixed inverse temperature");
    cmd->add_option("--beta-policy", f.policy, "fixed | scaled | both");
    cmd->add_option("--cache-dir", f.cache, "cache directory (FERMAT_CACHE_DIR overrides)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }

  try {
    if (*sample_cmd) {
      if (!c_sample.config.empty()) {
        const json cfg = read_json_file(c_sample.config);
        from_config(cfg, "dataset", sample_cmd, "--dataset", s_dataset);
        from_config(cfg, "dim", sample_cmd, "--dim", s_dim);
        from_config(cfg, "n", sample_cmd, "--n", s_n);
        from_config(cfg, "noise", sample_cmd, "--noise", s_noise);
        from_config(cfg, "seed", sample_cmd, "--seed", c_sample.seed);
      }
      DatasetSpec spec;
      spec.kind = parse_dataset_kind(s_dataset);
      spec.dim = s_dim;
      spec.n = s_n;
      spec.seed = c_sample.seed;
      spec.noise = s_noise;
      const Matrix X = sample(spec);
      if (c_sample.out.empty())
        io::write_points(std::cout, X);
      else
        io::write_points_file(c_sample.out, X);
      json meta = base_metadata("sample", c_sample.seed);
      meta["config"] = {{"dataset", s_dataset}, {"dim", spec.dim}, {"n", s_n}, {"noise", spec.effective_noise()}};
      write_sidecar(c_sample.out, meta);
    } else if (*fit_cmd) {
      if (!c_fit.config.empty()) {
        const json cfg = read_json_file(c_fit.config);
        from_config(cfg, "components", fit_cmd, "--components", f_k);
        from_config(cfg, "max_iters", fit_cmd, "--max-iters", f_em.max_iters);
        from_config(cfg, "tol", fit_cmd, "--tol", f_em.tol);
        from_config(cfg, "reg", fit_cmd, "--reg", f_em.reg_covar);
        from_config(cfg, "seed", fit_cmd, "--seed", c_fit.seed);
      }
      f_em.seed = c_fit.seed;
      const EmFit fit = gmm_fit_em_detailed(io::read_points_file(f_in), f_k, f_em);
      if (c_fit.out.empty())
        std::cout << io::to_json(fit.model).dump(2) << '\n';
      else
        io::write_gmm_file(c_fit.out, fit.model);
      json meta = base_metadata("fit-gmm", c_fit.seed);
      meta["config"] = {{"in", f_in},         {"components", f_k},          {"max_iters", f_em.max_iters},
                        {"tol", f_em.tol},    {"reg", f_em.reg_covar}};
      meta["iterations"] = fit.iterations;
      meta["converged"] = fit.converged;
      meta["log_likelihood"] = fit.log_likelihood.empty() ? 0.0 : fit.log_likelihood.back();
      write_sidecar(c_fit.out, meta);
      std::cerr << "fit-gmm: " << fit.iterations << " iterations, mean log-likelihood "
                << io::format_double(meta["log_likelihood"].get<double>()) << (fit.converged ? "" : " (not converged)")
                << '\n';
    } else if (*graph_cmd) {
      if (!c_graph.config.empty()) {
        const json cfg = read_json_file(c_graph.config);
        from_config(cfg, "k", graph_cmd, "--k", g_k);
        from_config(cfg, "weighting", graph_cmd, "--weighting", g_weighting);
        from_config(cfg, "model", graph_cmd, "--model", g_model);
        from_config(cfg, "beta", graph_cmd, "--beta", g_beta);
        from_config(cfg, "intrinsic_dim", graph_cmd, "--intrinsic-dim", g_dim);
        from_config(cfg, "segments", graph_cmd, "--segments", g_segments);
      }
      check_beta(g_beta);
      const Matrix X = io::read_points_file(g_in);
      const std::size_t k = g_k > 0 ? g_k : default_k(static_cast<std::size_t>(X.cols()));
      const int d = g_dim > 0 ? g_dim : static_cast<int>(X.rows());
      const KnnGraph topo = build_knn(X, k);
      EdgeWeighting w;
      if (g_weighting == "power") {
        w = PowerWeighted{g_beta, d};
      } else if (g_weighting == "density") {
        if (g_model.empty())
          throw Error("--weighting density needs --model");
        w = DensityQuadrature{load_model(g_model, g_fit_seed, g_cache), g_beta, g_segments};
      } else {
        const Method m = parse_method(g_weighting);
        if (m.kind == MethodKind::NnVariant) {
          w = NnVariant{m.combine, g_beta, d, nullptr};
        } else if (m.kind == MethodKind::GtVariant) {
          if (g_model.empty())
            throw Error("--weighting gt_variant needs --model");
          w = NnVariant{m.combine, g_beta, d, load_model(g_model, g_fit_seed, g_cache)};
        } else {
          throw Error("unknown weighting '" + g_weighting + "'");
        }
      }
      const KnnGraph g = weight_edges(topo, w);
      if (c_graph.out.empty())
        io::write_graph(std::cout, g);
      else
        io::write_graph_file(c_graph.out, g);
      json meta = base_metadata("build-graph", c_graph.seed);
      meta["config"] = {{"in", g_in},       {"k", k},           {"weighting", g_weighting}, {"model", g_model},
                        {"beta", g_beta},   {"intrinsic_dim", d}, {"segments", g_segments}};
      meta["edges"] = g.edge_count();
      write_sidecar(c_graph.out, meta);
    } else if (*sp_cmd) {
      const KnnGraph g = io::read_graph_file(sp_graph);
      if (!g.weighted())
        throw Error("shortest-path: graph has no weights");
      const GraphPath gp = dijkstra(g, sp_from, sp_to);
      print_log_value("log_distance", gp.log_distance);
      const Path p = sp_densify > 0 ? densify(gp, g, sp_densify) : polyline(gp, g);
      if (!c_sp.out.empty()) {
        io::write_path_file(c_sp.out, p);
        json meta = base_metadata("shortest-path", c_sp.seed);
        meta["config"] = {{"graph", sp_graph}, {"from", sp_from}, {"to", sp_to}, {"densify", sp_densify}};
        meta["log_distance"] = gp.log_distance;
        meta["nodes"] = gp.nodes;
        write_sidecar(c_sp.out, meta);
      }
    } else if (*relax_cmd) {
      if (!c_relax.config.empty()) {
        const json cfg = read_json_file(c_relax.config);
        from_config(cfg, "model", relax_cmd, "--model", r_model);
        from_config(cfg, "beta", relax_cmd, "--beta", r_beta);
        from_config(cfg, "n_points", relax_cmd, "--n-points", r_points);
        from_config(cfg, "tol", relax_cmd, "--tol", r_tol);
        from_config(cfg, "max_sweeps", relax_cmd, "--max-sweeps", r_sweeps);
      }
      check_beta(r_beta);
      const auto model = load_model(r_model, r_fit_seed, r_cache);
      Path init = [&] {
        if (!r_init.empty())
          return io::read_path_file(r_init);
        if (r_from.empty() || r_to.empty())
          throw Error("relax needs --init or both --from and --to");
        return Path::straight_line(parse_point(r_from), parse_point(r_to), r_points);
      }();
      if (init.dim() != model->dim())
        throw Error("relax: path dimension does not match the model");
      RelaxationConfig rc;
      rc.tol = r_tol;
      rc.max_sweeps = r_sweeps;
      rc.seed = c_relax.seed;
      rc.newton = !r_plain;
      const MetricParams params{r_beta};
      const RelaxResult r = relax(std::move(init), score_of(*model), params, rc);
      const double len = path_length(r.path, *model, params);
      print_log_value("log_length", len);
      std::cout << "sweeps\t" << r.report.sweeps_used << "\nconverged\t" << (r.report.converged ? "yes" : "no") << '\n';
      if (!c_relax.out.empty()) {
        io::write_path_file(c_relax.out, r.path);
        json meta = base_metadata("relax", c_relax.seed);
        meta["config"] = {{"model", r_model}, {"beta", r_beta}, {"n_points", r_points}, {"tol", r_tol},
                          {"max_sweeps", r_sweeps}, {"newton", !r_plain}};
        meta["log_length"] = len;
        meta["sweeps"] = r.report.sweeps_used;
        meta["newton_steps"] = r.report.newton_steps;
        meta["converged"] = r.report.converged;
        write_sidecar(c_relax.out, meta);
      }
      if (!r.report.converged) {
        std::cerr << "error: relaxation did not converge within " << r.report.sweeps_used << " sweeps\n";
        return 2;
      }
    } else if (*dist_cmd) {
      if (!c_dist.config.empty()) {
        const json cfg = read_json_file(c_dist.config);
        from_config(cfg, "model", dist_cmd, "--model", d_model);
        from_config(cfg, "beta", dist_cmd, "--beta", d_beta);
        from_config(cfg, "n_points", dist_cmd, "--n-points", d_q.n_points);
        from_config(cfg, "segments", dist_cmd, "--segments", d_q.segments_per_edge);
        from_config(cfg, "tol", dist_cmd, "--tol", d_q.tol);
      }
      check_beta(d_beta);
      const auto model = load_model(d_model, d_fit_seed, d_cache);
      d_q.seed = c_dist.seed;
      const GroundTruth gt = ground_truth_distance(parse_point(d_from), parse_point(d_to), *model, MetricParams{d_beta}, d_q);
      print_log_value("log_distance", gt.log_distance);
      if (!c_dist.out.empty()) {
        io::write_path_file(c_dist.out, gt.geodesic);
        json meta = base_metadata("distance", c_dist.seed);
        meta["config"] = {{"model", d_model}, {"from", d_from}, {"to", d_to}, {"beta", d_beta},
                          {"n_points", d_q.n_points}, {"segments", d_q.segments_per_edge}, {"tol", d_q.tol}};
        meta["log_distance"] = gt.log_distance;
        meta["sweeps"] = gt.report.sweeps_used;
        write_sidecar(c_dist.out, meta);
      }
    } else if (*lpr_cmd) {
      check_beta(l_beta);
      const auto model = load_model(l_model, l_fit_seed, l_cache);
      const Path p = io::read_path_file(l_path);
      const MetricParams params{l_beta};
      double truth = 0.0;
      if (l_truth) {
        truth = *l_truth;
      } else {
        l_q.seed = c_lpr.seed;
        truth = ground_truth_distance(p.front(), p.back(), *model, params, l_q, p).log_distance;
      }
      const double len = p.euclidean_length();
      const Path fine = len > 0.0 ? subdivide(p, len / static_cast<double>(l_q.n_points)) : p;
      const double value = lpr(fine, *model, params, truth, l_q.segments_per_edge);
      print_log_value("log_distance", truth);
      print_log_value("lpr", value);
      if (!c_lpr.out.empty()) {
        json meta = base_metadata("lpr", c_lpr.seed);
        meta["config"] = {{"model", l_model}, {"path", l_path}, {"beta", l_beta}};
        meta["log_distance"] = truth;
        meta["lpr"] = value;
        write_json_file(c_lpr.out, meta);
      }
    } else {
      for (auto &[name, f] : exp_flags) {
        CLI::App *cmd = exp_cmd->get_subcommand(name);
        if (!*cmd)
          continue;
        ExperimentConfig config = ExperimentConfig::defaults(name);
        if (!f.common.config.empty()) {
          config = config_from_json(read_json_file(f.common.config), config);
          if (config.experiment != name)
            throw Error("config experiment '" + config.experiment + "' does not match 'exp " + name + "'");
        }
        if (cmd->count("--seed"))
          config.seed = f.common.seed;
        if (cmd->count("--out"))
          config.out = f.common.out;
        if (cmd->count("--threads"))
          config.threads = f.common.threads;
        if (cmd->count("--datasets"))
          config.datasets = f.datasets;
        if (cmd->count("--methods"))
          config.methods = f.methods;
        if (cmd->count("--sample-sizes"))
          config.sample_sizes = f.sizes;
        if (cmd->count("--dims"))
          config.dimensions = f.dims;
        if (cmd->count("--pairs"))
          config.pairs = f.pairs;
        if (cmd->count("--n"))
          config.n = f.n;
        if (cmd->count("--k"))
          config.k = f.k;
        if (cmd->count("--beta"))
          config.beta = f.beta;
        if (cmd->count("--beta-policy"))
          config.beta_policy = f.policy;
        if (cmd->count("--cache-dir"))
          config.cache_dir = f.cache;
        const json meta = run_experiment(config, [](const std::string &msg) { std::cerr << msg << '\n'; });
        std::cerr << "wrote " << (std::filesystem::path(config.out) / (name + std::string(".tsv"))).string() << '\n';
        if (meta.contains("summary"))
          std::cout << meta["summary"].dump(2) << '\n';
      }
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

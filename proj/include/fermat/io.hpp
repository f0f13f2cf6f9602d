#pragma once

// Text formats: tab-separated point tables, mixture documents (JSON) and
// graph edge lists.

#include "fermat/density.hpp"
#include "fermat/geometry.hpp"
#include "fermat/graph.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace fermat::io {

using json = nlohmann::json;

/// Shortest decimal form that round-trips.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Point tables: one point per row, tab separated, one header row.

inline void write_points(std::ostream &os, const Matrix &points, const std::string &index_name = "i") {
  os << index_name;
  for (Eigen::Index d = 0; d < points.rows(); ++d)
    os << "\tx" << d;
  os << '\n';
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    os << i;
    for (Eigen::Index d = 0; d < points.rows(); ++d)
      os << '\t' << format_double(points(d, i));
    os << '\n';
  }
}

/// Reads a table written by write_points (or any numeric table with an
/// optional header and an optional leading index column named "i").
inline Matrix read_points(std::istream &is) {
  std::string line;
  std::vector<std::vector<double>> rows;
  bool skip_first_column = false;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    std::istringstream ls(line);
    std::vector<std::string> cells;
    std::string cell;
    while (ls >> cell)
      cells.push_back(cell);
    if (cells.empty())
      continue;
    if (first) {
      first = false;
      char *end = nullptr;
      std::strtod(cells[0].c_str(), &end);
      if (*end != '\0') { // header
        skip_first_column = cells[0] == "i";
        continue;
      }
    }
    std::vector<double> row;
    for (std::size_t c = skip_first_column ? 1 : 0; c < cells.size(); ++c) {
      char *end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (*end != '\0')
        throw Error("read_points: bad number '" + cells[c] + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error("read_points: ragged table");
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw Error("read_points: empty table");
  Matrix out(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t d = 0; d < rows[i].size(); ++d)
      out(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) = rows[i][d];
  return out;
}

inline void write_points_file(const std::string &path, const Matrix &points) {
  std::ofstream os(path);
  if (!os)
    throw Error("cannot open '" + path + "' for writing");
  write_points(os, points);
}

inline Matrix read_points_file(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw Error("cannot open '" + path + "'");
  return read_points(is);
}

inline void write_path_file(const std::string &path, const Path &p) { write_points_file(path, p.points()); }
inline Path read_path_file(const std::string &path) { return Path(read_points_file(path)); }

// ---------------------------------------------------------------------------
// Mixtures

inline json to_json(const GaussianMixture &g) {
  json doc;
  doc["dim"] = g.dim();
  doc["weights"] = g.weights();
  json means = json::array(), covs = json::array();
  for (std::size_t k = 0; k < g.components(); ++k) {
    means.push_back(std::vector<double>(g.means()[k].data(), g.means()[k].data() + g.dim()));
    std::vector<double> flat;
    for (Eigen::Index r = 0; r < g.dim(); ++r)
      for (Eigen::Index c = 0; c < g.dim(); ++c)
        flat.push_back(g.covariances()[k](r, c));
    covs.push_back(flat);
  }
  doc["means"] = means;
  doc["covariances"] = covs;
  return doc;
}

inline GaussianMixture gmm_from_json(const json &doc) {
  const auto weights = doc.at("weights").get<std::vector<double>>();
  const auto means_raw = doc.at("means").get<std::vector<std::vector<double>>>();
  const auto covs_raw = doc.at("covariances").get<std::vector<std::vector<double>>>();
  if (means_raw.empty())
    throw Error("gmm_from_json: no components");
  const auto D = static_cast<Eigen::Index>(means_raw.front().size());
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (const auto &m : means_raw) {
    if (static_cast<Eigen::Index>(m.size()) != D)
      throw Error("gmm_from_json: ragged means");
    means.push_back(Eigen::Map<const Vector>(m.data(), D));
  }
  for (const auto &c : covs_raw) {
    if (static_cast<Eigen::Index>(c.size()) != D * D)
      throw Error("gmm_from_json: covariance must have D*D entries in row-major order");
    Matrix cov(D, D);
    for (Eigen::Index r = 0; r < D; ++r)
      for (Eigen::Index col = 0; col < D; ++col)
        cov(r, col) = c[static_cast<std::size_t>(r * D + col)];
    covs.push_back(cov);
  }
  return GaussianMixture(weights, std::move(means), std::move(covs));
}

inline void write_gmm_file(const std::string &path, const GaussianMixture &g) {
  std::ofstream os(path);
  if (!os)
    throw Error("cannot open '" + path + "' for writing");
  os << to_json(g).dump(2) << '\n';
}

inline GaussianMixture read_gmm_file(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw Error("cannot open '" + path + "'");
  return gmm_from_json(json::parse(is));
}

// ---------------------------------------------------------------------------
// Graphs
//
//   # fermat-graph 1
//   nodes <n> <D>
//   <x0> <x1> ...            (n rows)
//   edges <m>
//   <l> <m> <log_weight>     (m rows, l < m)

inline void write_graph(std::ostream &os, const KnnGraph &g) {
  os << "# fermat-graph 1\n";
  os << "nodes " << g.size() << ' ' << g.dim() << '\n';
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (Eigen::Index d = 0; d < g.dim(); ++d)
      os << (d ? "\t" : "") << format_double(g.nodes()(d, static_cast<Eigen::Index>(i)));
    os << '\n';
  }
  os << "edges " << g.edge_count() << '\n';
  for (std::size_t l = 0; l < g.size(); ++l) {
    const auto nb = g.neighbors(l);
    for (std::size_t j = 0; j < nb.size(); ++j) {
      if (nb[j] < l)
        continue;
      os << l << '\t' << nb[j] << '\t';
      os << (g.weighted() ? format_double(g.log_weights(l)[j]) : std::string("nan")) << '\n';
    }
  }
}

inline KnnGraph read_graph(std::istream &is) {
  std::string tag;
  std::string line;
  while (is.peek() == '#')
    std::getline(is, line);
  std::size_t n = 0, m = 0;
  Eigen::Index D = 0;
  if (!(is >> tag >> n >> D) || tag != "nodes")
    throw Error("read_graph: expected 'nodes <n> <D>'");
  Matrix nodes(D, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (Eigen::Index d = 0; d < D; ++d)
      if (!(is >> nodes(d, static_cast<Eigen::Index>(i))))
        throw Error("read_graph: truncated node table");
  if (!(is >> tag >> m) || tag != "edges")
    throw Error("read_graph: expected 'edges <m>'");
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  bool weighted = true;
  for (std::size_t e = 0; e < m; ++e) {
    std::size_t l = 0, r = 0;
    std::string wtext;
    if (!(is >> l >> r >> wtext))
      throw Error("read_graph: truncated edge list");
    if (l >= n || r >= n || l == r)
      throw Error("read_graph: bad edge " + std::to_string(l) + "-" + std::to_string(r));
    const double w = std::strtod(wtext.c_str(), nullptr);
    if (!std::isfinite(w))
      weighted = false;
    adj[l].push_back({r, w});
    adj[r].push_back({l, w});
  }
  std::vector<std::size_t> offsets(n + 1, 0), flat;
  std::vector<double> weights;
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(adj[i].begin(), adj[i].end());
    offsets[i + 1] = offsets[i] + adj[i].size();
    for (const auto &[j, w] : adj[i]) {
      flat.push_back(j);
      weights.push_back(w);
    }
  }
  if (!weighted)
    weights.clear();
  return KnnGraph(std::move(nodes), std::move(offsets), std::move(flat), std::move(weights));
}

inline void write_graph_file(const std::string &path, const KnnGraph &g) {
  std::ofstream os(path);
  if (!os)
    throw Error("cannot open '" + path + "' for writing");
  write_graph(os, g);
}

inline KnnGraph read_graph_file(const std::string &path) {
  std::ifstream is(path);
  if (!is)
    throw Error("cannot open '" + path + "'");
  return read_graph(is);
}

} // namespace fermat::io

#pragma once

// Fermat metric on R^D: lengths of discretized curves, the relaxation solver
// for geodesics and the log path ratio used to score approximate paths.
//
// The metric is <u, v> / p(x)^(2 beta), so a curve's length is the integral
// of |phi'| / p(phi)^beta. Lengths are always returned as natural logs.

#include "fermat/density.hpp"
#include "fermat/numerics.hpp"

#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fermat {

struct MetricParams {
  /// Inverse temperature. beta = 1/D is the dimension-scaled choice; beta = 0
  /// reduces to the Euclidean metric.
  double beta = 1.0;

  static MetricParams scaled(Eigen::Index dim) { return {1.0 / static_cast<double>(dim)}; }
};

/// Discretized curve phi_0..phi_n with fixed endpoints, stored one point per
/// column.
class Path {
public:
  explicit Path(Matrix points) : points_(std::move(points)) {
    if (points_.cols() < 2)
      throw Error("Path: need at least two points");
    if (points_.rows() < 1)
      throw Error("Path: zero dimension");
    if (!points_.allFinite())
      throw Error("Path: points must be finite");
  }

  static Path straight_line(const Vector &from, const Vector &to, Eigen::Index intervals) {
    if (intervals < 1)
      throw Error("Path::straight_line: need at least one interval");
    if (from.size() != to.size())
      throw Error("Path::straight_line: endpoint dimension mismatch");
    Matrix pts(from.size(), intervals + 1);
    for (Eigen::Index i = 0; i <= intervals; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(intervals);
      pts.col(i) = (1.0 - t) * from + t * to;
    }
    pts.col(0) = from;
    pts.col(intervals) = to;
    return Path(std::move(pts));
  }

  /// Number of segments n; there are n + 1 points.
  Eigen::Index intervals() const { return points_.cols() - 1; }
  Eigen::Index size() const { return points_.cols(); }
  Eigen::Index dim() const { return points_.rows(); }

  const Matrix &points() const { return points_; }
  Vector point(Eigen::Index i) const { return points_.col(i); }
  Vector front() const { return points_.col(0); }
  Vector back() const { return points_.col(intervals()); }

  /// Mutable access to an interior point. Endpoints are immutable.
  Matrix::ColXpr interior(Eigen::Index i) {
    if (i <= 0 || i >= intervals())
      throw Error("Path::interior: index " + std::to_string(i) + " is not interior");
    return points_.col(i);
  }

  double euclidean_length() const {
    double len = 0.0;
    for (Eigen::Index i = 0; i < intervals(); ++i)
      len += (points_.col(i + 1) - points_.col(i)).norm();
    return len;
  }

  double chord_length() const { return (back() - front()).norm(); }

private:
  Matrix points_;
};

// ---------------------------------------------------------------------------
// Length functional

/// log of sum over sub-segments of |dy| / p(midpoint)^beta, every path edge cut
/// into `segments_per_edge` equal pieces (midpoint quadrature).
inline double path_length(const Path &path, const DensityModel &model, const MetricParams &params,
                          int segments_per_edge = 8) {
  if (segments_per_edge < 1)
    throw Error("path_length: segments_per_edge must be >= 1");
  if (model.dim() != path.dim())
    throw Error("path_length: model and path dimensions differ");
  const Matrix &P = path.points();
  const double S = static_cast<double>(segments_per_edge);
  LogSumAccumulator acc;
  Vector mid(path.dim());
  for (Eigen::Index i = 0; i < path.intervals(); ++i) {
    const auto a = P.col(i);
    const auto b = P.col(i + 1);
    const double edge = (b - a).norm();
    if (edge == 0.0)
      continue;
    const double log_piece = std::log(edge / S);
    for (int j = 0; j < segments_per_edge; ++j) {
      const double t = (j + 0.5) / S;
      mid = a + t * (b - a);
      const double lp = model.log_density(mid);
      if (!std::isfinite(lp))
        throw NonFiniteError("path_length: non-finite log density", mid);
      acc.add(log_piece - params.beta * lp);
    }
  }
  return acc.value();
}

/// Per-segment metric speed log(|dphi| / p(midpoint)^beta).
inline std::vector<double> geodesic_metric_speed_profile(const Path &path, const DensityModel &model,
                                                         const MetricParams &params) {
  if (model.dim() != path.dim())
    throw Error("geodesic_metric_speed_profile: model and path dimensions differ");
  const Matrix &P = path.points();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(path.intervals()));
  for (Eigen::Index i = 0; i < path.intervals(); ++i) {
    const Vector mid = 0.5 * (P.col(i) + P.col(i + 1));
    const double lp = model.log_density(mid);
    if (!std::isfinite(lp))
      throw NonFiniteError("geodesic_metric_speed_profile: non-finite log density", mid);
    out.push_back(std::log((P.col(i + 1) - P.col(i)).norm()) - params.beta * lp);
  }
  return out;
}

/// Euclidean segment lengths |phi_{i+1} - phi_i|.
inline std::vector<double> segment_lengths(const Path &path) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < path.intervals(); ++i)
    out.push_back((path.points().col(i + 1) - path.points().col(i)).norm());
  return out;
}

// ---------------------------------------------------------------------------
// Resampling

/// m + 1 points at equal arc-length spacing along the polyline; endpoints are
/// copied exactly.
inline Path resample_uniform(const Path &path, Eigen::Index m) {
  if (m < 1)
    throw Error("resample_uniform: need at least one interval");
  const Matrix &P = path.points();
  const Eigen::Index n = path.intervals();
  std::vector<double> cum(static_cast<std::size_t>(n + 1), 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    cum[static_cast<std::size_t>(i + 1)] = cum[static_cast<std::size_t>(i)] + (P.col(i + 1) - P.col(i)).norm();
  const double total = cum.back();
  if (!(total > 0.0))
    throw Error("resample_uniform: zero-length path");

  Matrix out(path.dim(), m + 1);
  out.col(0) = P.col(0);
  out.col(m) = P.col(n);
  Eigen::Index seg = 0;
  for (Eigen::Index j = 1; j < m; ++j) {
    const double target = total * static_cast<double>(j) / static_cast<double>(m);
    while (seg < n - 1 && cum[static_cast<std::size_t>(seg + 1)] < target)
      ++seg;
    const double a = cum[static_cast<std::size_t>(seg)];
    const double b = cum[static_cast<std::size_t>(seg + 1)];
    const double t = b > a ? std::clamp((target - a) / (b - a), 0.0, 1.0) : 0.0;
    out.col(j) = (1.0 - t) * P.col(seg) + t * P.col(seg + 1);
  }
  return Path(std::move(out));
}

/// Same polyline with every edge cut into ceil(length / max_edge) equal
/// pieces. The curve is unchanged (corners are kept), only the quadrature
/// of path_length gets finer.
inline Path subdivide(const Path &path, double max_edge) {
  if (!(max_edge > 0.0))
    throw Error("subdivide: max_edge must be positive");
  const Matrix &P = path.points();
  std::vector<Eigen::Index> pieces(static_cast<std::size_t>(path.intervals()));
  Eigen::Index total = 0;
  for (Eigen::Index i = 0; i < path.intervals(); ++i) {
    const double len = (P.col(i + 1) - P.col(i)).norm();
    pieces[static_cast<std::size_t>(i)] = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(len / max_edge)));
    total += pieces[static_cast<std::size_t>(i)];
  }
  Matrix out(path.dim(), total + 1);
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < path.intervals(); ++i) {
    const Eigen::Index m = pieces[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m; ++j) {
      const double t = static_cast<double>(j) / static_cast<double>(m);
      out.col(c++) = (1.0 - t) * P.col(i) + t * P.col(i + 1);
    }
  }
  out.col(c) = P.col(path.intervals());
  return Path(std::move(out));
}

// ---------------------------------------------------------------------------
// Geodesic equation at constant Euclidean speed:
//   phi'' - beta (s . phi') phi' + beta s |phi'|^2 = 0
// discretized with central differences and multiplied through by h^2.

namespace detail {

// g(s, v) = s |v|^2 - (s . v) v
inline Vector bend(const Vector &s, const Vector &v) { return s * v.squaredNorm() - s.dot(v) * v; }

template <typename ScoreFn>
Vector checked_score(ScoreFn &score, const Vector &x, Eigen::Index index) {
  Vector s = score(x);
  if (!s.allFinite())
    throw NonFiniteError("non-finite score at path index " + std::to_string(index), x);
  return s;
}

} // namespace detail

/// Per interior point, |phi_{i+1} - 2 phi_i + phi_{i-1} + beta g(s(phi_i), v_i)|
/// with v_i = (phi_{i+1} - phi_{i-1}) / 2. Units are squared step; divide by
/// h^2 = 1/n^2 to compare with the continuous equation.
template <typename ScoreFn>
std::vector<double> geodesic_residual(const Path &path, ScoreFn &&score, const MetricParams &params) {
  const Eigen::Index n = path.intervals();
  if (n < 2)
    throw Error("geodesic_residual: need at least one interior point");
  const Matrix &P = path.points();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 1; i < n; ++i) {
    const Vector x = P.col(i);
    const Vector v = 0.5 * (P.col(i + 1) - P.col(i - 1));
    const Vector s = detail::checked_score(score, x, i);
    out.push_back((P.col(i + 1) - 2.0 * x + P.col(i - 1) + params.beta * detail::bend(s, v)).norm());
  }
  return out;
}

/// One Gauss-Seidel relaxation sweep over the interior points in a freshly
/// shuffled order:
///   v = (phi_{i+1} - phi_{i-1}) / 2
///   w = beta/2 [s(phi_i) |v|^2 - (s(phi_i) . v) v]
///   phi_i <- (phi_{i+1} + phi_{i-1}) / 2 + w
/// Updated neighbors are used immediately. Returns the largest Euclidean
/// displacement of any point.
template <typename ScoreFn>
double relax_step(Path &path, ScoreFn &&score, const MetricParams &params, Rng &rng) {
  const Eigen::Index n = path.intervals();
  if (n < 2)
    throw Error("relax_step: need at least one interior point");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n - 1));
  std::iota(order.begin(), order.end(), Eigen::Index{1});
  shuffle(std::span<Eigen::Index>(order), rng);

  const Matrix &P = path.points();
  double max_move = 0.0;
  Vector v(path.dim()), next(path.dim());
  for (const Eigen::Index i : order) {
    const Vector x = P.col(i);
    v = 0.5 * (P.col(i + 1) - P.col(i - 1));
    const Vector s = detail::checked_score(score, x, i);
    next = 0.5 * (P.col(i + 1) + P.col(i - 1)) + 0.5 * params.beta * detail::bend(s, v);
    if (!next.allFinite())
      throw NonFiniteError("relax_step: non-finite update at path index " + std::to_string(i), x);
    max_move = std::max(max_move, (next - x).norm());
    path.interior(i) = next;
  }
  return max_move;
}

struct RelaxationConfig {
  /// Sweep budget; 0 selects 20 n.
  int max_sweeps = 0;
  /// Stop once no point moves farther than this in a sweep; 0 selects
  /// 1e-8 times the endpoint distance.
  double tol = 0.0;
  std::uint64_t seed = 0;
  /// Follow each sweep (after the first `newton_after`) with a damped Newton
  /// correction on the same discrete equations. The fixed point is unchanged;
  /// only the smooth error modes that Gauss-Seidel removes slowly are
  /// eliminated faster. Disable for plain sweeps.
  bool newton = true;
  int newton_after = 10;
};

struct RelaxationReport {
  int sweeps_used = 0;
  double final_max_displacement = 0.0;
  bool converged = false;
  int newton_steps = 0;
};

class RelaxationError : public Error {
public:
  RelaxationError(const std::string &what, RelaxationReport report)
      : Error(what + " (sweeps " + std::to_string(report.sweeps_used) + ", last displacement " +
              std::to_string(report.final_max_displacement) + ")"),
        report_(report) {}

  const RelaxationReport &report() const { return report_; }

private:
  RelaxationReport report_;
};

struct RelaxResult {
  Path path;
  RelaxationReport report;
};

namespace detail {

template <typename ScoreFn>
double residual_sum_squares(const Path &path, ScoreFn &score, const MetricParams &params) {
  double ss = 0.0;
  for (double r : geodesic_residual(path, score, params))
    ss += r * r;
  return ss;
}

// Damped Newton step on F(phi) = 0, F_i the discrete geodesic residual. The
// Jacobian is block tridiagonal; the score Jacobian comes from central
// differences of the score. Returns the largest point displacement, or
// nullopt when no damping factor reduced the residual.
template <typename ScoreFn>
std::optional<double> newton_correction(Path &path, ScoreFn &score, const MetricParams &params) {
  const Eigen::Index n = path.intervals();
  const Eigen::Index D = path.dim();
  const Eigen::Index m = n - 1;
  const Matrix &P = path.points();
  const double beta = params.beta;
  const Matrix I = Matrix::Identity(D, D);

  std::vector<Matrix> lower(static_cast<std::size_t>(m)), diag(static_cast<std::size_t>(m)),
      upper(static_cast<std::size_t>(m));
  Matrix rhs(D, m);
  double ss = 0.0;
  Matrix Js(D, D);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = k + 1;
    const Vector x = P.col(i);
    const Vector v = 0.5 * (P.col(i + 1) - P.col(i - 1));
    const Vector s = checked_score(score, x, i);
    const Vector F = P.col(i + 1) - 2.0 * x + P.col(i - 1) + beta * bend(s, v);
    rhs.col(k) = -F;
    ss += F.squaredNorm();

    Vector probe = x;
    for (Eigen::Index j = 0; j < D; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
      probe[j] = x[j] + h;
      const Vector sp = checked_score(score, probe, i);
      probe[j] = x[j] - h;
      const Vector sm = checked_score(score, probe, i);
      probe[j] = x[j];
      Js.col(j) = (sp - sm) / (2.0 * h);
    }
    const Matrix Gs = v.squaredNorm() * I - v * v.transpose();
    const Matrix Gv = 2.0 * s * v.transpose() - v * s.transpose() - s.dot(v) * I;
    diag[static_cast<std::size_t>(k)] = -2.0 * I + beta * Gs * Js;
    upper[static_cast<std::size_t>(k)] = I + 0.5 * beta * Gv;
    lower[static_cast<std::size_t>(k)] = I - 0.5 * beta * Gv;
  }
  if (ss == 0.0)
    return 0.0;

  // Block Thomas elimination.
  std::vector<Eigen::PartialPivLU<Matrix>> lu(static_cast<std::size_t>(m));
  lu[0].compute(diag[0]);
  for (Eigen::Index k = 1; k < m; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const Matrix factor = lower[ku] * lu[ku - 1].inverse();
    diag[ku] -= factor * upper[ku - 1];
    rhs.col(k) -= factor * rhs.col(k - 1);
    lu[ku].compute(diag[ku]);
  }
  Matrix delta(D, m);
  delta.col(m - 1) = lu[static_cast<std::size_t>(m - 1)].solve(rhs.col(m - 1));
  for (Eigen::Index k = m - 1; k-- > 0;)
    delta.col(k) = lu[static_cast<std::size_t>(k)].solve(rhs.col(k) - upper[static_cast<std::size_t>(k)] * delta.col(k + 1));
  if (!delta.allFinite())
    return std::nullopt;

  for (double lambda = 1.0; lambda >= 1.0 / 64.0; lambda *= 0.5) {
    Matrix trial = P;
    trial.middleCols(1, m) += lambda * delta;
    if (!trial.allFinite())
      continue;
    Path candidate(std::move(trial));
    double trial_ss = 0.0;
    try {
      trial_ss = residual_sum_squares(candidate, score, params);
    } catch (const NonFiniteError &) {
      continue;
    }
    if (trial_ss < ss) {
      const double move = lambda * delta.colwise().norm().maxCoeff();
      path = std::move(candidate);
      return move;
    }
  }
  return std::nullopt;
}

} // namespace detail

/// Repeats relax_step until no point moves more than `tol` in a sweep or the
/// sweep budget runs out. Fails with "relaxation diverging" if the
/// displacement grows more than tenfold over ten sweeps and exceeds a tenth
/// of the endpoint distance.
template <typename ScoreFn>
RelaxResult relax(Path path, ScoreFn &&score, const MetricParams &params, const RelaxationConfig &config = {}) {
  const Eigen::Index n = path.intervals();
  if (n < 2)
    throw Error("relax: need at least one interior point");
  const double chord = path.chord_length();
  RelaxationReport report;
  if (chord == 0.0) {
    for (Eigen::Index i = 1; i < n; ++i)
      path.interior(i) = path.front();
    report.converged = true;
    return {std::move(path), report};
  }
  const int max_sweeps = config.max_sweeps > 0 ? config.max_sweeps : static_cast<int>(20 * n);
  const double tol = config.tol > 0.0 ? config.tol : 1e-8 * chord;
  if (config.max_sweeps < 0)
    throw Error("relax: max_sweeps must be >= 1");
  if (config.tol < 0.0)
    throw Error("relax: tol must be positive");

  Rng rng(config.seed);
  std::vector<double> history;
  // A rejected Newton correction costs far more than a sweep, so after each
  // failure the next attempt waits twice as long (up to 64 sweeps).
  int next_newton = config.newton_after, backoff = 1;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    const double sweep_move = relax_step(path, score, params, rng);
    double move = sweep_move;
    if (config.newton && sweep >= next_newton) {
      if (const auto step = detail::newton_correction(path, score, params)) {
        move = std::max(move, *step);
        ++report.newton_steps;
        backoff = 1;
      } else {
        next_newton = sweep + backoff;
        backoff = std::min(2 * backoff, 64);
      }
    }
    // Newton corrections only ever reduce the residual, so the divergence
    // guard watches the sweeps alone.
    history.push_back(sweep_move);
    report.sweeps_used = sweep + 1;
    report.final_max_displacement = move;
    if (move <= tol) {
      report.converged = true;
      break;
    }
    if (history.size() > 10) {
      const double before = history[history.size() - 11];
      if (sweep_move > 10.0 * before && sweep_move > 0.1 * chord)
        throw RelaxationError("relaxation diverging", report);
    }
  }
  return {std::move(path), report};
}

/// Coarse-to-fine relaxation: solves at `coarsest` intervals, then doubles the
/// resolution (resampling the previous solution) until the target. Same
/// fixed point as relax() at the target resolution, but far fewer expensive
/// fine-level iterations for jagged initial paths. Falls back to a direct
/// relax() if a coarse level fails.
template <typename ScoreFn>
RelaxResult relax_multilevel(Path path, ScoreFn &&score, const MetricParams &params,
                             const RelaxationConfig &config = {}, Eigen::Index coarsest = 64) {
  const Eigen::Index n = path.intervals();
  if (coarsest < 2 || n <= 2 * coarsest)
    return relax(std::move(path), score, params, config);
  std::optional<Path> start;
  try {
    RelaxationConfig coarse = config;
    coarse.max_sweeps = 0; // budget scales with each level
    Path cur = resample_uniform(path, coarsest);
    for (Eigen::Index m = coarsest; 2 * m < n; m *= 2) {
      auto r = relax(std::move(cur), score, params, coarse);
      if (!r.report.converged)
        throw Error("coarse level did not converge");
      cur = resample_uniform(r.path, 2 * m);
    }
    start = resample_uniform(cur, n);
  } catch (const Error &) {
    start.reset();
  }
  return relax(start ? std::move(*start) : std::move(path), score, params, config);
}

// ---------------------------------------------------------------------------
// Ground truth and evaluation

struct GroundTruthQuality {
  Eigen::Index n_points = 1024;
  int segments_per_edge = 8;
  /// 0 selects the relax default.
  double tol = 0.0;
  int max_sweeps = 0;
  std::uint64_t seed = 0;
};

struct GroundTruth {
  Vector from, to;
  double log_distance = kNegInf;
  Path geodesic;
  RelaxationReport report;
};

/// Relaxes a straight line (or `init`, resampled to the requested
/// resolution) between the endpoints and measures the result. Coincident
/// endpoints give distance zero (log = -inf).
inline GroundTruth ground_truth_distance(const Vector &from, const Vector &to, const DensityModel &model,
                                         const MetricParams &params, const GroundTruthQuality &quality = {},
                                         const std::optional<Path> &init = std::nullopt) {
  if (from.size() != model.dim() || to.size() != model.dim())
    throw Error("ground_truth_distance: dimension mismatch");
  if ((from - to).norm() == 0.0) {
    Path degenerate = Path::straight_line(from, to, std::max<Eigen::Index>(quality.n_points, 1));
    return {from, to, kNegInf, std::move(degenerate), RelaxationReport{0, 0.0, true, 0}};
  }
  Path start = init ? resample_uniform(*init, quality.n_points) : Path::straight_line(from, to, quality.n_points);
  if ((start.front() - from).norm() > 1e-9 * std::max(1.0, from.norm()) ||
      (start.back() - to).norm() > 1e-9 * std::max(1.0, to.norm()))
    throw Error("ground_truth_distance: initial path endpoints do not match");
  RelaxationConfig rc;
  rc.tol = quality.tol;
  rc.max_sweeps = quality.max_sweeps;
  rc.seed = quality.seed;
  auto result = relax_multilevel(std::move(start), score_of(model), params, rc);
  if (!result.report.converged)
    throw RelaxationError("ground_truth_distance: relaxation did not converge", result.report);
  const double len = path_length(result.path, model, params, quality.segments_per_edge);
  return {from, to, len, std::move(result.path), result.report};
}

/// Log path ratio log(L(path) / dist): zero for the geodesic itself.
inline double lpr(const Path &path, const DensityModel &model, const MetricParams &params,
                  double true_log_distance, int segments_per_edge = 8) {
  return path_length(path, model, params, segments_per_edge) - true_log_distance;
}

/// As above, checking that the path joins the ground truth's endpoints.
inline double lpr(const Path &path, const DensityModel &model, const MetricParams &params,
                  const GroundTruth &truth, int segments_per_edge = 8) {
  const double scale = std::max(1.0, std::max(truth.from.norm(), truth.to.norm()));
  if ((path.front() - truth.from).norm() > 1e-9 * scale || (path.back() - truth.to).norm() > 1e-9 * scale)
    throw Error("lpr: path endpoints do not match the ground truth endpoints");
  return lpr(path, model, params, truth.log_distance, segments_per_edge);
}

} // namespace fermat

#pragma once

// Expectation-maximization fitting of full-covariance Gaussian mixtures.

#include "fermat/density.hpp"

#include <string>
#include <vector>

namespace fermat {

struct EmConfig {
  int max_iters = 500;
  /// Stop once the per-sample log-likelihood improves by less than this.
  double tol = 1e-6;
  std::uint64_t seed = 0;
  /// Added to every covariance diagonal after each M-step.
  double reg_covar = 1e-6;
};

struct EmFit {
  GaussianMixture model;
  /// Mean per-sample log-likelihood, one entry per E-step.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

// k-means++ seeding: first center uniform, then proportional to the squared
// distance to the nearest chosen center.
inline std::vector<Eigen::Index> kmeanspp_seeds(const Matrix &data, std::size_t K, Rng &rng) {
  const Eigen::Index n = data.cols();
  std::vector<Eigen::Index> centers;
  centers.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    d2[static_cast<std::size_t>(i)] = (data.col(i) - data.col(centers[0])).squaredNorm();
  while (centers.size() < K) {
    double total = 0.0;
    for (double v : d2)
      total += v;
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2[static_cast<std::size_t>(i)];
        if (u < 0.0) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centers.push_back(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (data.col(i) - data.col(pick)).squaredNorm());
  }
  return centers;
}

// M-step from a responsibility matrix (n x K).
inline GaussianMixture m_step(const Matrix &data, const Matrix &resp, double reg) {
  const Eigen::Index K = resp.cols();
  std::vector<double> weights(static_cast<std::size_t>(K));
  std::vector<Vector> means(static_cast<std::size_t>(K));
  std::vector<Matrix> covs(static_cast<std::size_t>(K));
  double total = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double nk = resp.col(k).sum();
    if (!(nk > 0.0))
      throw Error("gmm_fit_em: degenerate component " + std::to_string(k) + " (no responsibility mass)");
    const Vector mean = data * resp.col(k) / nk;
    const Matrix centered = data.colwise() - mean;
    Matrix cov = (centered * resp.col(k).asDiagonal() * centered.transpose()) / nk;
    cov.diagonal().array() += reg;
    cov = 0.5 * (cov + cov.transpose());
    if (Eigen::LLT<Matrix>(cov).info() != Eigen::Success)
      throw Error("gmm_fit_em: degenerate component " + std::to_string(k) +
                  " (covariance not positive definite after regularization)");
    weights[static_cast<std::size_t>(k)] = nk;
    total += nk;
    means[static_cast<std::size_t>(k)] = mean;
    covs[static_cast<std::size_t>(k)] = std::move(cov);
  }
  for (double &w : weights)
    w /= total;
  return GaussianMixture(std::move(weights), std::move(means), std::move(covs));
}

} // namespace detail

/// Fits a K-component mixture to `data` (one sample per column).
inline EmFit gmm_fit_em_detailed(const Matrix &data, std::size_t K, const EmConfig &config = {}) {
  const Eigen::Index n = data.cols();
  if (K < 1)
    throw Error("gmm_fit_em: need at least one component");
  if (n <= static_cast<Eigen::Index>(K))
    throw Error("gmm_fit_em: need more samples than components");
  if (!data.allFinite())
    throw Error("gmm_fit_em: data must be finite");

  Rng rng(config.seed);
  const auto centers = detail::kmeanspp_seeds(data, K, rng);

  // Hard assignment to the nearest seed gives the starting responsibilities.
  Matrix resp = Matrix::Zero(n, static_cast<Eigen::Index>(K));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      const double d = (data.col(i) - data.col(centers[k])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<Eigen::Index>(k);
      }
    }
    resp(i, best) = 1.0;
  }

  GaussianMixture model = detail::m_step(data, resp, config.reg_covar);
  EmFit fit{model, {}, 0, false};
  std::vector<double> terms(K);
  for (int iter = 0; iter < config.max_iters; ++iter) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      fit.model.component_log_terms(data.col(i).data(), terms.data());
      const double li = log_sum_exp(terms);
      ll += li;
      for (std::size_t k = 0; k < K; ++k)
        resp(i, static_cast<Eigen::Index>(k)) = std::exp(terms[k] - li);
    }
    ll /= static_cast<double>(n);
    fit.log_likelihood.push_back(ll);
    fit.iterations = iter + 1;
    const std::size_t h = fit.log_likelihood.size();
    if (h >= 2 && fit.log_likelihood[h - 1] - fit.log_likelihood[h - 2] < config.tol) {
      fit.converged = true;
      break;
    }
    fit.model = detail::m_step(data, resp, config.reg_covar);
  }
  return fit;
}

inline GaussianMixture gmm_fit_em(const Matrix &data, std::size_t K, const EmConfig &config = {}) {
  return gmm_fit_em_detailed(data, K, config).model;
}

} // namespace fermat

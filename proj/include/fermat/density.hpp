#pragma once

// Probability densities and their scores (gradients of the log density).

#include "fermat/kdtree.hpp"
#include "fermat/numerics.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace fermat {

/// A density on R^D that can report log p(x) and s(x) = grad log p(x).
/// Implementations are immutable after construction and safe to share
/// between threads.
class DensityModel {
public:
  virtual ~DensityModel() = default;

  virtual Eigen::Index dim() const = 0;
  virtual double log_density(const Vector &x) const = 0;
  virtual Vector score(const Vector &x) const = 0;

protected:
  void check_dim(const Vector &x, const char *who) const {
    if (x.size() != dim())
      throw Error(std::string(who) + ": dimension mismatch (expected " + std::to_string(dim()) +
                  ", got " + std::to_string(x.size()) + ")");
  }
};

using DensityPtr = std::shared_ptr<const DensityModel>;

/// Score callable bound to a model, for the geometry routines.
inline auto score_of(const DensityModel &model) {
  return [&model](const Vector &x) { return model.score(x); };
}

// ---------------------------------------------------------------------------

/// Improper constant density p(x) = exp(log_value). Zero score everywhere.
class ConstantDensity final : public DensityModel {
public:
  ConstantDensity(Eigen::Index dim, double log_value) : dim_(dim), log_value_(log_value) {}

  Eigen::Index dim() const override { return dim_; }
  double log_density(const Vector &x) const override {
    check_dim(x, "ConstantDensity");
    return log_value_;
  }
  Vector score(const Vector &x) const override {
    check_dim(x, "ConstantDensity");
    return Vector::Zero(dim_);
  }

private:
  Eigen::Index dim_;
  double log_value_;
};

// ---------------------------------------------------------------------------

/// Mixture of full-covariance Gaussians. Each covariance is held through its
/// Cholesky factor; inverses are never formed.
class GaussianMixture final : public DensityModel {
public:
  GaussianMixture(std::vector<double> weights, std::vector<Vector> means,
                  std::vector<Matrix> covariances)
      : weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covariances)) {
    const std::size_t K = weights_.size();
    if (K == 0)
      throw Error("GaussianMixture: no components");
    if (means_.size() != K || covs_.size() != K)
      throw Error("GaussianMixture: component count mismatch");
    dim_ = means_.front().size();
    if (dim_ < 1)
      throw Error("GaussianMixture: zero dimension");
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (!(weights_[k] >= 0.0))
        throw Error("GaussianMixture: negative weight in component " + std::to_string(k));
      total += weights_[k];
      if (means_[k].size() != dim_ || covs_[k].rows() != dim_ || covs_[k].cols() != dim_)
        throw Error("GaussianMixture: dimension mismatch in component " + std::to_string(k));
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw Error("GaussianMixture: weights must sum to 1");

    const std::size_t D = static_cast<std::size_t>(dim_);
    chol_.assign(K * D * D, 0.0);
    mean_data_.assign(K * D, 0.0);
    log_norm_.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      Eigen::LLT<Matrix> llt(covs_[k]);
      if (llt.info() != Eigen::Success)
        throw Error("GaussianMixture: covariance of component " + std::to_string(k) +
                    " is not positive definite");
      const Matrix L = llt.matrixL();
      double log_det = 0.0;
      for (std::size_t i = 0; i < D; ++i) {
        log_det += 2.0 * std::log(L(i, i));
        mean_data_[k * D + i] = means_[k][i];
        for (std::size_t j = 0; j <= i; ++j)
          chol_[(k * D + i) * D + j] = L(i, j);
      }
      log_norm_[k] = std::log(weights_[k]) - 0.5 * static_cast<double>(D) * std::log(2.0 * std::numbers::pi) -
                     0.5 * log_det;
    }
  }

  /// Single standard normal component in `dim` dimensions.
  static GaussianMixture standard_normal(Eigen::Index dim) {
    return GaussianMixture({1.0}, {Vector::Zero(dim)}, {Matrix::Identity(dim, dim)});
  }

  Eigen::Index dim() const override { return dim_; }
  std::size_t components() const { return weights_.size(); }
  const std::vector<double> &weights() const { return weights_; }
  const std::vector<Vector> &means() const { return means_; }
  const std::vector<Matrix> &covariances() const { return covs_; }

  /// log(w_k N(x; mu_k, Sigma_k)) for every component.
  std::vector<double> component_log_terms(const Vector &x) const {
    check_dim(x, "gmm_log_density");
    std::vector<double> out(components());
    component_log_terms(x.data(), out.data());
    return out;
  }

  /// Unchecked variant for hot loops: `x` has dim() entries, `out` has
  /// components() entries.
  void component_log_terms(const double *x, double *out) const {
    std::vector<double> z(static_cast<std::size_t>(dim_));
    for (std::size_t k = 0; k < components(); ++k)
      out[k] = log_term(k, x, z.data());
  }

  double log_density(const Vector &x) const override {
    check_dim(x, "gmm_log_density");
    const std::size_t D = static_cast<std::size_t>(dim_);
    double zbuf[16];
    std::vector<double> zheap;
    double *z = zbuf;
    if (D > 16) {
      zheap.resize(D);
      z = zheap.data();
    }
    LogSumAccumulator acc;
    for (std::size_t k = 0; k < components(); ++k)
      acc.add(log_term(k, x.data(), z));
    return acc.value();
  }

  /// sum_k r_k(x) Sigma_k^{-1} (mu_k - x) with responsibilities in log space.
  Vector score(const Vector &x) const override {
    check_dim(x, "gmm_score");
    const std::size_t D = static_cast<std::size_t>(dim_);
    const std::size_t K = components();
    std::vector<double> z(K * D);
    std::vector<double> terms(K);
    double top = kNegInf;
    for (std::size_t k = 0; k < K; ++k) {
      terms[k] = log_term(k, x.data(), z.data() + k * D);
      top = std::max(top, terms[k]);
    }
    Vector s = Vector::Zero(dim_);
    if (top == kNegInf)
      return s;
    double total = 0.0;
    std::vector<double> w(D);
    for (std::size_t k = 0; k < K; ++k) {
      const double r = std::exp(terms[k] - top);
      total += r;
      if (r == 0.0)
        continue;
      // Sigma^{-1}(x - mu) = L^{-T} z with z = L^{-1}(x - mu).
      back_substitute(k, z.data() + k * D, w.data());
      for (std::size_t i = 0; i < D; ++i)
        s[static_cast<Eigen::Index>(i)] -= r * w[i];
    }
    return s / total;
  }

private:
  const double *factor(std::size_t k) const { return chol_.data() + k * dim_ * dim_; }

  // Writes z = L_k^{-1}(x - mu_k) and returns the component's log term.
  double log_term(std::size_t k, const double *x, double *z) const {
    const std::size_t D = static_cast<std::size_t>(dim_);
    const double *L = factor(k);
    const double *mu = mean_data_.data() + k * D;
    double q = 0.0;
    for (std::size_t i = 0; i < D; ++i) {
      double acc = x[i] - mu[i];
      for (std::size_t j = 0; j < i; ++j)
        acc -= L[i * D + j] * z[j];
      z[i] = acc / L[i * D + i];
      q += z[i] * z[i];
    }
    return log_norm_[k] - 0.5 * q;
  }

  // Solves L^T w = z.
  void back_substitute(std::size_t k, const double *z, double *w) const {
    const std::size_t D = static_cast<std::size_t>(dim_);
    const double *L = factor(k);
    for (std::size_t ii = D; ii-- > 0;) {
      double acc = z[ii];
      for (std::size_t j = ii + 1; j < D; ++j)
        acc -= L[j * D + ii] * w[j];
      w[ii] = acc / L[ii * D + ii];
    }
  }

  std::vector<double> weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covs_;
  Eigen::Index dim_ = 0;
  std::vector<double> chol_;      // K row-major lower factors
  std::vector<double> mean_data_; // K x D
  std::vector<double> log_norm_;  // log w_k - D/2 log 2pi - 1/2 log det
};

// ---------------------------------------------------------------------------
// Radially symmetric families

/// s(x) = -|x|^(alpha-2) x for p(x) ~ exp(-|x|^alpha / alpha).
inline Vector generalized_gaussian_score(const Vector &x, double alpha) {
  if (!(alpha > 0.0))
    throw Error("generalized_gaussian_score: alpha must be positive");
  const double r = x.norm();
  if (alpha == 2.0)
    return -x;
  if (r == 0.0) {
    if (alpha < 2.0)
      throw Error("generalized_gaussian_score: score singular at origin");
    return Vector::Zero(x.size());
  }
  return -std::pow(r, alpha - 2.0) * x;
}

/// s(x) = -(nu + D) / (nu + |x|^2) x for the multivariate Student-t.
inline Vector student_t_score(const Vector &x, double nu, Eigen::Index dim) {
  if (x.size() != dim)
    throw Error("student_t_score: dimension mismatch");
  return -(nu + static_cast<double>(dim)) / (nu + x.squaredNorm()) * x;
}

/// Normalized density proportional to exp(-|x|^alpha / alpha).
class GeneralizedGaussian final : public DensityModel {
public:
  GeneralizedGaussian(Eigen::Index dim, double alpha) : dim_(dim), alpha_(alpha) {
    if (dim < 1)
      throw Error("GeneralizedGaussian: dimension must be >= 1");
    if (!(alpha > 0.0))
      throw Error("GeneralizedGaussian: alpha must be positive");
    const double D = static_cast<double>(dim);
    // Z = surface(S^{D-1}) * alpha^(D/alpha - 1) * Gamma(D/alpha)
    log_z_ = std::log(2.0) + 0.5 * D * std::log(std::numbers::pi) - std::lgamma(0.5 * D) +
             (D / alpha - 1.0) * std::log(alpha) + std::lgamma(D / alpha);
  }

  Eigen::Index dim() const override { return dim_; }
  double alpha() const { return alpha_; }

  double log_density(const Vector &x) const override {
    check_dim(x, "GeneralizedGaussian");
    return -std::pow(x.norm(), alpha_) / alpha_ - log_z_;
  }
  Vector score(const Vector &x) const override {
    check_dim(x, "GeneralizedGaussian");
    return generalized_gaussian_score(x, alpha_);
  }

  /// |x|^alpha / alpha ~ Gamma(D/alpha, 1); the direction is uniform.
  Vector sample(Rng &rng) const {
    Vector dir;
    double n = 0.0;
    do {
      dir = rng.normal_vector(dim_);
      n = dir.norm();
    } while (n == 0.0);
    const double radius = std::pow(alpha_ * rng.gamma(static_cast<double>(dim_) / alpha_), 1.0 / alpha_);
    return radius / n * dir;
  }

private:
  Eigen::Index dim_;
  double alpha_;
  double log_z_;
};

/// Multivariate Student-t with identity scale, p ~ (1 + |x|^2/nu)^(-(nu+D)/2).
class StudentT final : public DensityModel {
public:
  StudentT(Eigen::Index dim, double nu) : dim_(dim), nu_(nu) {
    if (dim < 1)
      throw Error("StudentT: dimension must be >= 1");
    if (!(nu > 2.0))
      throw Error("StudentT: nu must exceed 2");
    const double D = static_cast<double>(dim);
    log_c_ = std::lgamma(0.5 * (nu + D)) - std::lgamma(0.5 * nu) - 0.5 * D * std::log(nu * std::numbers::pi);
  }

  Eigen::Index dim() const override { return dim_; }
  double nu() const { return nu_; }

  double log_density(const Vector &x) const override {
    check_dim(x, "StudentT");
    return log_c_ - 0.5 * (nu_ + static_cast<double>(dim_)) * std::log1p(x.squaredNorm() / nu_);
  }
  Vector score(const Vector &x) const override { return student_t_score(x, nu_, dim_); }

private:
  Eigen::Index dim_;
  double nu_;
  double log_c_;
};

// ---------------------------------------------------------------------------

/// Gaussian kernel density estimate with isotropic bandwidth sigma.
class KdeModel final : public DensityModel {
public:
  /// `samples` holds one sample per column.
  KdeModel(Matrix samples, double bandwidth) : samples_(std::move(samples)), sigma_(bandwidth) {
    if (samples_.cols() < 1)
      throw Error("KdeModel: need at least one sample");
    if (!(sigma_ > 0.0))
      throw Error("KdeModel: bandwidth must be positive");
    const double n = static_cast<double>(samples_.cols());
    const double D = static_cast<double>(samples_.rows());
    log_norm_ = -std::log(n) - 0.5 * D * std::log(2.0 * std::numbers::pi * sigma_ * sigma_);
  }

  Eigen::Index dim() const override { return samples_.rows(); }
  double bandwidth() const { return sigma_; }
  const Matrix &samples() const { return samples_; }

  double log_density(const Vector &x) const override {
    check_dim(x, "kde_log_density");
    LogSumAccumulator acc;
    const double scale = -0.5 / (sigma_ * sigma_);
    for (Eigen::Index i = 0; i < samples_.cols(); ++i)
      acc.add(scale * (x - samples_.col(i)).squaredNorm());
    return log_norm_ + acc.value();
  }

  Vector score(const Vector &x) const override {
    check_dim(x, "kde_score");
    const Eigen::Index n = samples_.cols();
    const double scale = -0.5 / (sigma_ * sigma_);
    std::vector<double> e(static_cast<std::size_t>(n));
    double top = kNegInf;
    for (Eigen::Index i = 0; i < n; ++i) {
      e[static_cast<std::size_t>(i)] = scale * (x - samples_.col(i)).squaredNorm();
      top = std::max(top, e[static_cast<std::size_t>(i)]);
    }
    Vector num = Vector::Zero(x.size());
    double den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = std::exp(e[static_cast<std::size_t>(i)] - top);
      den += w;
      num += w * (x - samples_.col(i));
    }
    return -num / (den * sigma_ * sigma_);
  }

private:
  Matrix samples_;
  double sigma_;
  double log_norm_;
};

/// Scott's rule bandwidth: mean per-coordinate std times n^(-1/(D+4)).
inline double scott_bandwidth(const Matrix &samples) {
  const double n = static_cast<double>(samples.cols());
  const double D = static_cast<double>(samples.rows());
  const Vector mean = samples.rowwise().mean();
  const double var = (samples.colwise() - mean).squaredNorm() / (D * std::max(1.0, n - 1.0));
  return std::sqrt(var) * std::pow(n, -1.0 / (D + 4.0));
}

// ---------------------------------------------------------------------------

/// Nearest-neighbor density estimate p(X_l) ~ (min_m |X_l - X_m|)^(-d).
/// Values are unnormalized: the proportionality constant is dropped.
class NnDensityField {
public:
  NnDensityField(Matrix data, int intrinsic_dim) : data_(std::move(data)), d_(intrinsic_dim) {
    if (data_.cols() < 2)
      throw Error("NnDensityField: need at least two points");
    if (d_ < 1)
      throw Error("NnDensityField: intrinsic dimension must be >= 1");
    const KdTree tree(data_);
    log_p_.resize(static_cast<std::size_t>(data_.cols()));
    for (Eigen::Index l = 0; l < data_.cols(); ++l) {
      const auto nn = tree.knn(data_.col(l), 1, static_cast<std::size_t>(l));
      const double dist = std::sqrt(nn.front().squared_distance);
      log_p_[static_cast<std::size_t>(l)] = dist > 0.0 ? -d_ * std::log(dist) : kNegInf;
    }
  }

  std::size_t size() const { return log_p_.size(); }
  int intrinsic_dim() const { return d_; }
  const Matrix &data() const { return data_; }

  /// -d log(distance to the nearest other sample).
  double log_density(std::size_t l) const {
    const double v = log_p_.at(l);
    if (v == kNegInf)
      throw Error("nn_log_density: degenerate nearest neighbor at index " + std::to_string(l));
    return v;
  }

private:
  Matrix data_;
  int d_;
  std::vector<double> log_p_;
};

} // namespace fermat

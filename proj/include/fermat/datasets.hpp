#pragma once

// The evaluation distributions: standard normals, a fixed three-component
// mixture and three noisy curves whose reference densities are fitted
// 50-component mixtures.

#include "fermat/density.hpp"
#include "fermat/em.hpp"

#include <memory>
#include <numbers>
#include <string>

namespace fermat {

enum class DatasetKind { StandardNormal, Gmm3, Circle, Spiral, TwoSpirals };

inline const char *to_string(DatasetKind kind) {
  switch (kind) {
  case DatasetKind::StandardNormal:
    return "standard_normal";
  case DatasetKind::Gmm3:
    return "gmm3";
  case DatasetKind::Circle:
    return "circle";
  case DatasetKind::Spiral:
    return "spiral";
  case DatasetKind::TwoSpirals:
    return "two_spirals";
  }
  return "?";
}

inline DatasetKind parse_dataset_kind(const std::string &name) {
  for (DatasetKind k : {DatasetKind::StandardNormal, DatasetKind::Gmm3, DatasetKind::Circle, DatasetKind::Spiral,
                        DatasetKind::TwoSpirals})
    if (name == to_string(k))
      return k;
  throw Error("unknown dataset '" + name + "'");
}

struct DatasetSpec {
  DatasetKind kind = DatasetKind::StandardNormal;
  /// Ambient dimension; only StandardNormal may differ from 2.
  Eigen::Index dim = 2;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  /// Isotropic noise for the curve datasets; <= 0 selects the default.
  double noise = 0.0;
  std::size_t fitted_components = 50;
  /// Size of the fresh sample the reference mixture is fitted to.
  std::size_t fit_samples = 100000;

  static double default_noise(DatasetKind kind) {
    switch (kind) {
    case DatasetKind::Circle:
      return 0.08;
    case DatasetKind::Spiral:
      return 0.05;
    case DatasetKind::TwoSpirals:
      return 0.045;
    default:
      return 0.0;
    }
  }

  double effective_noise() const { return noise > 0.0 ? noise : default_noise(kind); }

  void validate() const {
    if (n < 1)
      throw Error("DatasetSpec: n must be >= 1");
    if (dim < 1)
      throw Error("DatasetSpec: dim must be >= 1");
    if (kind != DatasetKind::StandardNormal && dim != 2)
      throw Error(std::string("DatasetSpec: dataset '") + to_string(kind) + "' is two-dimensional");
    if (fitted_components < 1)
      throw Error("DatasetSpec: fitted_components must be >= 1");
  }
};

/// The fixed three-component mixture.
inline GaussianMixture gmm3_model() {
  Vector m1(2), m2(2), m3(2);
  m1 << 2.0, 1.4;
  m2 << 6.5, 6.3;
  m3 << 8.0, 1.0;
  Matrix c1(2, 2), c2(2, 2), c3(2, 2);
  c1 << 3.0, 2.5, 2.5, 3.0;
  c2 << 3.0, 0.0, 0.0, 3.0;
  c3 << 2.0, -0.8, -0.8, 2.0;
  return GaussianMixture({0.25, 0.5, 0.25}, {m1, m2, m3}, {c1, c2, c3});
}

namespace detail {

inline Vector polar(double r, double theta) {
  Vector p(2);
  p << r * std::cos(theta), r * std::sin(theta);
  return p;
}

} // namespace detail

/// Draws spec.n points, one per column. The curve datasets pick the angle
/// uniformly; spirals use r = theta / 2pi and the second of two spirals is
/// the first rotated by pi.
inline Matrix sample_with_rng(const DatasetSpec &spec, std::size_t n, Rng &rng) {
  spec.validate();
  const Eigen::Index D = spec.dim;
  Matrix out(D, static_cast<Eigen::Index>(n));
  const double sigma = spec.effective_noise();
  const double two_pi = 2.0 * std::numbers::pi;

  switch (spec.kind) {
  case DatasetKind::StandardNormal:
    for (Eigen::Index i = 0; i < out.cols(); ++i)
      out.col(i) = rng.normal_vector(D);
    break;
  case DatasetKind::Gmm3: {
    const GaussianMixture g = gmm3_model();
    std::vector<Matrix> factors;
    for (const Matrix &c : g.covariances())
      factors.push_back(Eigen::LLT<Matrix>(c).matrixL());
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
      const double u = rng.uniform();
      std::size_t k = 0;
      double acc = g.weights()[0];
      while (u >= acc && k + 1 < g.components())
        acc += g.weights()[++k];
      out.col(i) = g.means()[k] + factors[k] * rng.normal_vector(2);
    }
    break;
  }
  case DatasetKind::Circle:
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
      const double theta = rng.uniform(0.0, two_pi);
      out.col(i) = detail::polar(1.0, theta) + sigma * rng.normal_vector(2);
    }
    break;
  case DatasetKind::Spiral:
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
      const double theta = rng.uniform(0.0, 1.75 * two_pi);
      out.col(i) = detail::polar(theta / two_pi, theta) + sigma * rng.normal_vector(2);
    }
    break;
  case DatasetKind::TwoSpirals:
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
      const double theta = rng.uniform(0.0, two_pi);
      const double offset = rng.uniform() < 0.5 ? 0.0 : std::numbers::pi;
      out.col(i) = detail::polar(theta / two_pi, theta + offset) + sigma * rng.normal_vector(2);
    }
    break;
  }
  return out;
}

inline Matrix sample(const DatasetSpec &spec) {
  Rng rng(spec.seed);
  return sample_with_rng(spec, spec.n, rng);
}

/// Ground-truth density of a dataset: exact for the Gaussian sets, a
/// K-component EM fit to a fresh sample for the curve sets.
inline std::shared_ptr<const GaussianMixture> reference_model(const DatasetSpec &spec, std::uint64_t fit_seed) {
  spec.validate();
  switch (spec.kind) {
  case DatasetKind::StandardNormal:
    return std::make_shared<GaussianMixture>(GaussianMixture::standard_normal(spec.dim));
  case DatasetKind::Gmm3:
    return std::make_shared<GaussianMixture>(gmm3_model());
  default:
    break;
  }
  Rng rng = Rng(fit_seed).child(0xF17);
  const Matrix data = sample_with_rng(spec, spec.fit_samples, rng);
  EmConfig config;
  config.seed = Rng(fit_seed).child(0xE11)();
  return std::make_shared<GaussianMixture>(gmm_fit_em(data, spec.fitted_components, config));
}

} // namespace fermat

#include "linalg.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "crystal/simd/kernels.hpp"

namespace crystal::detail {

std::optional<std::vector<double>> solve_symmetric(std::span<const double> a,
                                                   std::span<const double> b, std::size_t n) {
  if (n == 0) return std::vector<double>{};
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      mat(a.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<Eigen::Index>(n));

  const double scale = mat.diagonal().cwiseAbs().maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale)) return std::nullopt;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(mat);
  Eigen::VectorXd x;
  // rcond() alone misses exact zero pivots: LDLT's solve silently skips them.
  const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
  const bool well_posed = ldlt.info() == Eigen::Success && pivots.minCoeff() > 1e-13 * pivots.maxCoeff() &&
                          ldlt.rcond() > 1e-13;
  if (well_posed) {
    x = ldlt.solve(rhs);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(mat);
    qr.setThreshold(1e-12);
    if (qr.rank() < static_cast<Eigen::Index>(n)) return std::nullopt;
    x = qr.solve(rhs);
  }
  if (!x.allFinite()) return std::nullopt;
  return std::vector<double>(x.data(), x.data() + x.size());
}

RidgeFit weighted_ridge(const RowMatrix& x, std::span<const double> y,
                        std::span<const double> w, double lambda, bool fit_intercept) {
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  RidgeFit fit;
  fit.coefficients.assign(p, 0.0);

  std::vector<double> x_mean(p, 0.0);
  double y_mean = 0.0;
  if (fit_intercept) {
    double w_sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      w_sum += w[r];
      y_mean += w[r] * y[r];
      const auto row = x.row(r);
      for (std::size_t j = 0; j < p; ++j) x_mean[j] += w[r] * row[j];
    }
    if (!(w_sum > 0.0)) {
      fit.singular = true;
      return fit;
    }
    y_mean /= w_sum;
    for (double& m : x_mean) m /= w_sum;
  }

  RowMatrix centered = x;
  std::vector<double> y_centered(y.begin(), y.end());
  if (fit_intercept) {
    for (std::size_t r = 0; r < n; ++r) {
      auto row = centered.row(r);
      for (std::size_t j = 0; j < p; ++j) row[j] -= x_mean[j];
      y_centered[r] -= y_mean;
    }
  }

  std::vector<double> gram(p * p, 0.0);
  std::vector<double> moment(p, 0.0);
  simd::accumulate_weighted_gram(centered.data(), p, w, gram);
  simd::accumulate_weighted_moment(centered.data(), p, w, y_centered, moment);
  for (std::size_t j = 0; j < p; ++j) gram[j * p + j] += lambda;

  auto solved = solve_symmetric(gram, moment, p);
  if (!solved) {
    fit.singular = true;
    fit.intercept = y_mean;
    return fit;
  }
  fit.coefficients = std::move(*solved);
  if (fit_intercept) {
    fit.intercept = y_mean - simd::dot(fit.coefficients, x_mean);
  }
  return fit;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace crystal::detail

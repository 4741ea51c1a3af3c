#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "crystal/matrix.hpp"

namespace crystal::detail {

// Solves the symmetric system A x = b (A is n x n row-major). Returns
// std::nullopt when A is numerically singular.
std::optional<std::vector<double>> solve_symmetric(std::span<const double> a,
                                                   std::span<const double> b, std::size_t n);

struct RidgeFit {
  std::vector<double> coefficients;
  double intercept = 0.0;
  bool singular = false;
};

// Weighted ridge regression. When fit_intercept is set the intercept is
// unpenalized (solved by weighted centering). Sets `singular` instead of
// throwing when the normal equations cannot be solved.
RidgeFit weighted_ridge(const RowMatrix& x, std::span<const double> y,
                        std::span<const double> w, double lambda, bool fit_intercept);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace crystal::detail

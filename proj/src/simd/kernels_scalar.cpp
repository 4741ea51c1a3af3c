#include "crystal/simd/kernels.hpp"

namespace crystal::simd::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

void accumulate_weighted_gram(const double* rows, std::size_t n_rows, std::size_t cols,
                              const double* weights, double* gram) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double* x = rows + r * cols;
    const double w = weights[r];
    for (std::size_t i = 0; i < cols; ++i) {
      const double wx = w * x[i];
      double* out = gram + i * cols;
      for (std::size_t j = 0; j < cols; ++j) out[j] += wx * x[j];
    }
  }
}

void accumulate_weighted_moment(const double* rows, std::size_t n_rows, std::size_t cols,
                                const double* weights, const double* targets,
                                double* moment) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double* x = rows + r * cols;
    const double wy = weights[r] * targets[r];
    for (std::size_t j = 0; j < cols; ++j) moment[j] += wy * x[j];
  }
}

}  // namespace crystal::simd::scalar

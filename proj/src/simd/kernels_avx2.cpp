// Compiled with -mavx2 -mfma; only reached after a runtime cpuid check.
#include <immintrin.h>

#include "crystal/simd/kernels.hpp"

namespace crystal::simd::avx2 {
namespace {

inline double horizontal_sum(__m256d v) {
  const __m128d low = _mm256_castpd256_pd128(v);
  const __m128d high = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(low, high);
  const __m128d swapped = _mm_unpackhi_pd(pair, pair);
  return _mm_cvtsd_f64(_mm_add_sd(pair, swapped));
}

constexpr std::size_t kLanes = 4;

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + kLanes),
                           _mm256_loadu_pd(b + i + kLanes), acc1);
  }
  for (; i + kLanes <= n; i += kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double sum = horizontal_sum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(diff, diff, acc);
  }
  double sum = horizontal_sum(acc);
  for (; i < n; ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

void accumulate_weighted_gram(const double* rows, std::size_t n_rows, std::size_t cols,
                              const double* weights, double* gram) {
  const std::size_t vec_end = cols - cols % kLanes;
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double* x = rows + r * cols;
    const double w = weights[r];
    for (std::size_t i = 0; i < cols; ++i) {
      const double wx = w * x[i];
      const __m256d scale = _mm256_set1_pd(wx);
      double* out = gram + i * cols;
      std::size_t j = 0;
      for (; j < vec_end; j += kLanes) {
        const __m256d acc = _mm256_loadu_pd(out + j);
        _mm256_storeu_pd(out + j, _mm256_fmadd_pd(scale, _mm256_loadu_pd(x + j), acc));
      }
      for (; j < cols; ++j) out[j] += wx * x[j];
    }
  }
}

void accumulate_weighted_moment(const double* rows, std::size_t n_rows, std::size_t cols,
                                const double* weights, const double* targets,
                                double* moment) {
  const std::size_t vec_end = cols - cols % kLanes;
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double* x = rows + r * cols;
    const double wy = weights[r] * targets[r];
    const __m256d scale = _mm256_set1_pd(wy);
    std::size_t j = 0;
    for (; j < vec_end; j += kLanes) {
      const __m256d acc = _mm256_loadu_pd(moment + j);
      _mm256_storeu_pd(moment + j, _mm256_fmadd_pd(scale, _mm256_loadu_pd(x + j), acc));
    }
    for (; j < cols; ++j) moment[j] += wy * x[j];
  }
}

}  // namespace crystal::simd::avx2

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense double-precision kernels used by the surrogate fits and k-means.
// Every kernel has a scalar reference and, on x86-64, an AVX2+FMA variant.
// The variant is picked once at startup from cpuid and can be pinned for
// testing with force_isa().
namespace crystal::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa) noexcept;
bool isa_supported(Isa isa) noexcept;
Isa detected_isa() noexcept;
Isa active_isa() noexcept;
// Throws std::invalid_argument when the CPU lacks the requested ISA.
void force_isa(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

// gram[i*cols+j] += sum_r weights[r] * rows[r,i] * rows[r,j]
// rows is row-major with `cols` columns; gram is cols x cols row-major.
void accumulate_weighted_gram(std::span<const double> rows, std::size_t cols,
                              std::span<const double> weights,
                              std::span<double> gram);

// moment[j] += sum_r weights[r] * targets[r] * rows[r,j]
void accumulate_weighted_moment(std::span<const double> rows, std::size_t cols,
                                std::span<const double> weights,
                                std::span<const double> targets,
                                std::span<double> moment);

// Explicit per-ISA entry points, used by the equivalence tests.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void accumulate_weighted_gram(const double* rows, std::size_t n_rows, std::size_t cols,
                              const double* weights, double* gram);
void accumulate_weighted_moment(const double* rows, std::size_t n_rows, std::size_t cols,
                                const double* weights, const double* targets,
                                double* moment);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define CRYSTAL_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void accumulate_weighted_gram(const double* rows, std::size_t n_rows, std::size_t cols,
                              const double* weights, double* gram);
void accumulate_weighted_moment(const double* rows, std::size_t n_rows, std::size_t cols,
                                const double* weights, const double* targets,
                                double* moment);
}  // namespace avx2
#else
#define CRYSTAL_HAVE_AVX2_KERNELS 0
#endif

}  // namespace crystal::simd

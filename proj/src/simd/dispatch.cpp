#include <atomic>
#include <cassert>
#include <stdexcept>
#include <string>

#include "crystal/simd/kernels.hpp"

namespace crystal::simd {
namespace {

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*squared_distance)(const double*, const double*, std::size_t);
  void (*gram)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*moment)(const double*, std::size_t, std::size_t, const double*, const double*,
                 double*);
};

constexpr KernelTable kScalarTable{scalar::dot, scalar::squared_distance,
                                   scalar::accumulate_weighted_gram,
                                   scalar::accumulate_weighted_moment};
#if CRYSTAL_HAVE_AVX2_KERNELS
constexpr KernelTable kAvx2Table{avx2::dot, avx2::squared_distance,
                                 avx2::accumulate_weighted_gram,
                                 avx2::accumulate_weighted_moment};
#endif

const KernelTable& table_for(Isa isa) {
#if CRYSTAL_HAVE_AVX2_KERNELS
  if (isa == Isa::Avx2) return kAvx2Table;
#endif
  return kScalarTable;
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{detected_isa()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if CRYSTAL_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa detected_isa() noexcept { return isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar; }

Isa active_isa() noexcept { return active_slot().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA not supported on this CPU: " + std::string(isa_name(isa)));
  }
  active_slot().store(isa, std::memory_order_relaxed);
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return table_for(active_isa()).dot(a.data(), b.data(), a.size());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return table_for(active_isa()).squared_distance(a.data(), b.data(), a.size());
}

void accumulate_weighted_gram(std::span<const double> rows, std::size_t cols,
                              std::span<const double> weights, std::span<double> gram) {
  if (cols == 0) return;
  assert(rows.size() == weights.size() * cols);
  assert(gram.size() == cols * cols);
  table_for(active_isa()).gram(rows.data(), weights.size(), cols, weights.data(), gram.data());
}

void accumulate_weighted_moment(std::span<const double> rows, std::size_t cols,
                                std::span<const double> weights,
                                std::span<const double> targets, std::span<double> moment) {
  if (cols == 0) return;
  assert(rows.size() == weights.size() * cols);
  assert(targets.size() == weights.size());
  assert(moment.size() == cols);
  table_for(active_isa())
      .moment(rows.data(), weights.size(), cols, weights.data(), targets.data(), moment.data());
}

}  // namespace crystal::simd

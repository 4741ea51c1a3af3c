#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "crystal/matrix.hpp"
#include "crystal/model_io.hpp"

namespace crystal {

enum class AttributionMethod { Lime, KernelShap, ExactShap, KLime };
enum class RankingKey { Signed, Absolute };

std::string_view method_name(AttributionMethod method) noexcept;
std::optional<AttributionMethod> parse_method(std::string_view name) noexcept;
std::string_view ranking_key_name(RankingKey key) noexcept;
std::optional<RankingKey> parse_ranking_key(std::string_view name) noexcept;

struct AttributionEntry {
  std::size_t feature_index = 0;
  double importance = 0.0;
  friend bool operator==(const AttributionEntry&, const AttributionEntry&) = default;
};

struct AttributionList {
  std::string sample_id;
  AttributionMethod method = AttributionMethod::Lime;
  // Fitted intercept (LIME, K-LIME) or f(background) (SHAP variants).
  double baseline = 0.0;
  std::vector<AttributionEntry> entries;
  // All perturbation scores identical; entries are all zero.
  bool degenerate = false;
  // SingularFit fallback raised ridge_lambda for this result.
  bool regularization_raised = false;

  std::optional<double> importance_of(std::size_t feature_index) const;
  friend bool operator==(const AttributionList&, const AttributionList&) = default;
};

struct DatasetMeansBackground {};

struct InterpreterConfig {
  std::size_t n_perturbations = 5000;
  // std::nullopt = auto (0.75 * sqrt(d) on standardized distance).
  std::optional<double> kernel_width;
  std::variant<DatasetMeansBackground, RowMatrix> background = DatasetMeansBackground{};
  std::size_t top_k_features = 20;
  double ridge_lambda = 1e-3;
  std::uint64_t rng_seed = 0;
  RankingKey ranking_key = RankingKey::Signed;
};

// Throws InvalidConfig.
void validate(const InterpreterConfig& cfg, std::size_t feature_count);

// Orders by the ranking key, descending; ties by ascending feature index.
void sort_entries(std::vector<AttributionEntry>& entries, RankingKey key);

AttributionList lime_explain(const DatasetBundle& bundle, std::string_view sample_id,
                             ScoringChannel& channel, const InterpreterConfig& cfg);

// Full coalition enumeration when 2^d - 2 <= n_perturbations, otherwise
// coalitions are sampled from the Shapley kernel.
AttributionList kernel_shap_explain(const DatasetBundle& bundle, std::string_view sample_id,
                                    ScoringChannel& channel, const InterpreterConfig& cfg);

inline constexpr std::size_t kExactShapMaxFeatures = 20;

// Brute force over all 2^d coalitions. Masked features take background
// values; with several background rows the value function is their mean.
AttributionList exact_shap_explain(const DatasetBundle& bundle, std::string_view sample_id,
                                   ScoringChannel& channel, const RowMatrix& background,
                                   RankingKey key = RankingKey::Signed);

// Background rows implied by the config (dataset means or explicit rows).
RowMatrix resolve_background(const DatasetBundle& bundle, const InterpreterConfig& cfg);

struct ClusterFit {
  std::vector<double> feature_means;
  std::vector<double> coefficients;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t member_count = 0;
  bool regularization_raised = false;
};

struct KLimeResult {
  std::vector<AttributionList> attributions;  // bundle sample order
  std::vector<std::size_t> assignment;        // cluster index per sample
  std::vector<ClusterFit> clusters;
  std::size_t reseeds = 0;
};

// Model-free: clusters the samples, then fits stored scores per cluster.
KLimeResult klime_explain(const DatasetBundle& bundle, const InterpreterConfig& cfg,
                          std::size_t n_clusters);

// First min(k, size) entries, order preserved.
AttributionList top_features(const AttributionList& attr, std::size_t k);

}  // namespace crystal

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crystal/insights_design.hpp"
#include "crystal/interpreter.hpp"
#include "crystal/model_io.hpp"

namespace crystal {

struct Narrative {
  std::string super_feature;
  std::string ultra_feature;
  std::string category;
  std::string text;
  double importance = 0.0;
  friend bool operator==(const Narrative&, const Narrative&) = default;
};

struct Paragraph {
  std::string category;
  std::string text;
  double importance = 0.0;
  std::size_t member_count = 0;
  friend bool operator==(const Paragraph&, const Paragraph&) = default;
};

struct HeadlineTier {
  double min_percentile = 0.0;
  std::string phrase;
};

struct EngineConfig {
  std::size_t dedup_k = 1;
  std::size_t max_narratives = 5;
  bool concatenate = false;
  std::vector<std::string> conjunctions = {"and", "moreover", "what's more"};
  // Absolute ranks narratives by |attribution|; signed drops negative drivers.
  RankingKey ranking_key = RankingKey::Signed;
  // Headline wording. Tiers are checked top-down; below the last tier the
  // qualitative sentence is omitted.
  std::vector<HeadlineTier> headline_tiers = {
      {98.0, "extremely likely"}, {90.0, "very likely"}, {70.0, "likely"}};
  std::string entity = "account";
  std::string entity_plural = "accounts";
  std::string outcome = "upsell";
};

// Throws InvalidConfig.
void validate(const EngineConfig& cfg);

// Item name -> value for one super-feature of one sample, extra items included.
using ItemValues = std::map<std::string, ItemValue, std::less<>>;

struct SuperValues {
  ItemValues items;
  // Set when a user-source value is absent (or unusable) for this sample.
  std::optional<std::string> missing;
};

// Values of every super-feature (mapping order) for one sample.
std::vector<SuperValues> collect_super_values(const SuperFeatureMapping& mapping,
                                              const Sample& sample,
                                              const std::map<std::string, ItemValue>* user_values);

// Same for a single super-feature; throws MissingUserValue.
ItemValues collect_item_values(const SuperFeatureMapping& mapping, std::size_t super_index,
                               const Sample& sample,
                               const std::map<std::string, ItemValue>* user_values);

struct RankedSuper {
  std::size_t super_index = 0;
  double importance = 0.0;
  friend bool operator==(const RankedSuper&, const RankedSuper&) = default;
};

// Narrative importance = max over the super-feature's model features present
// in the attribution of importance * insight weight, sorted descending (ties in
// feature-info order). Super-features with no attributed feature are skipped;
// with the signed key, negative scores are skipped too.
std::vector<RankedSuper> score_super_features(const SuperFeatureMapping& mapping,
                                              const AttributionList& attribution,
                                              RankingKey key);

// Keeps the first `k` entries per ultra-feature, preserving order.
std::vector<RankedSuper> deduplicate(const SuperFeatureMapping& mapping,
                                     std::vector<RankedSuper> ranked, std::size_t k);

// score -> dedup -> truncate to max_narratives.
std::vector<RankedSuper> rank_super_features(const SuperFeatureMapping& mapping,
                                             const AttributionList& attribution,
                                             const EngineConfig& cfg);

std::string format_number(double value);
// " (+X%)", " (-X%)", or "" when non-finite.
std::string format_signed_percent(double value);

std::string render_narrative(const NarrativeTemplate& tmpl, std::string_view super_name,
                             const ItemValues& items);

struct ThresholdCandidate {
  RankedSuper ranked;
  const ItemValues* items = nullptr;
};

// Drops candidates whose super-feature threshold evaluates false.
std::vector<ThresholdCandidate> apply_thresholds(const std::vector<ThresholdCandidate>& candidates,
                                                 const SuperFeatureMapping& mapping);

std::vector<Paragraph> concatenate(const std::vector<Narrative>& narratives,
                                   const EngineConfig& cfg);

std::string render_headline(double percentile, bool has_narratives, const EngineConfig& cfg);

struct ExplanationRecord {
  std::string sample_id;
  std::string headline;
  std::vector<Narrative> narratives;
  std::vector<Paragraph> paragraphs;
  std::vector<std::string> warnings;
  friend bool operator==(const ExplanationRecord&, const ExplanationRecord&) = default;
};

struct GenerationStats {
  std::size_t dropped_by_threshold = 0;
  std::size_t dropped_missing_value = 0;
};

ExplanationRecord generate_for_sample(const DatasetBundle& bundle, std::string_view sample_id,
                                      const AttributionList& attribution,
                                      const InsightsDesign& design, const EngineConfig& cfg,
                                      GenerationStats* stats = nullptr);

}  // namespace crystal

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "crystal/expression.hpp"
#include "crystal/model_io.hpp"

namespace crystal {

enum class FeatureSource { Model, User };

struct FeatureInfoRecord {
  std::string original_feature;
  std::string super_feature;
  std::string ultra_feature;
  std::string category;
  std::string insight_type;
  std::string insight_item;
  std::optional<ThresholdExpr> insight_threshold;
  double insight_weight = 1.0;
  FeatureSource source = FeatureSource::Model;

  friend bool operator==(const FeatureInfoRecord&, const FeatureInfoRecord&) = default;
};

struct FeatureInfoTable {
  std::vector<FeatureInfoRecord> records;  // file order
  friend bool operator==(const FeatureInfoTable&, const FeatureInfoTable&) = default;
};

// CSV with header
//   Original-Feature,Super-Feature,Ultra-Feature,Category,Insight Type,
//   Insight Item[,Insight Threshold][,Insight Weight][,Source]
FeatureInfoTable parse_feature_info(const std::filesystem::path& path,
                                    const DatasetManifest& manifest);
FeatureInfoTable parse_feature_info_text(std::string_view csv, const DatasetManifest& manifest,
                                         std::string_view origin = "<feature info>");
std::string serialize_feature_info(const FeatureInfoTable& table);

enum class ItemFormat { Number, SignedPercent };

struct ExtraItem {
  std::string name;
  Expression expression;
  ItemFormat format = ItemFormat::Number;
  friend bool operator==(const ExtraItem&, const ExtraItem&) = default;
};

struct TemplateSegment {
  bool placeholder = false;
  std::string text;  // literal text, or the placeholder name
  friend bool operator==(const TemplateSegment&, const TemplateSegment&) = default;
};

inline constexpr std::string_view kSuperNamePlaceholder = "super_name";

struct NarrativeTemplate {
  std::string insight_type;
  std::string text;
  std::vector<TemplateSegment> segments;
  std::vector<ExtraItem> extra_items;

  // Distinct placeholder names in order of appearance.
  std::vector<std::string> placeholders() const;
  const ExtraItem* find_extra(std::string_view name) const;

  friend bool operator==(const NarrativeTemplate&, const NarrativeTemplate&) = default;
};

struct TemplateSet {
  std::vector<NarrativeTemplate> templates;  // file order
  const NarrativeTemplate* find(std::string_view insight_type) const;
  friend bool operator==(const TemplateSet&, const TemplateSet&) = default;
};

// Splits template text into literal and `{placeholder}` segments. `{{` and
// `}}` are literal braces. Throws MalformedPlaceholder.
std::vector<TemplateSegment> parse_template_text(std::string_view text);

TemplateSet parse_templates(const std::filesystem::path& path);
TemplateSet parse_templates_text(std::string_view json_text,
                                 std::string_view origin = "<templates>");
std::string serialize_templates(const TemplateSet& templates);

struct ItemBinding {
  std::string item;
  std::string original_feature;
  FeatureSource source = FeatureSource::Model;
  std::optional<std::size_t> feature_index;  // set for model-source items
  double weight = 1.0;
  friend bool operator==(const ItemBinding&, const ItemBinding&) = default;
};

struct SuperFeature {
  std::string name;
  std::string ultra_feature;
  std::string category;
  std::string insight_type;
  std::size_t template_index = 0;
  std::vector<ItemBinding> items;  // feature-info file order
  std::optional<ThresholdExpr> threshold;

  const ItemBinding* find_item(std::string_view item) const;
  friend bool operator==(const SuperFeature&, const SuperFeature&) = default;
};

// Link-checked design: every placeholder, extra-item operand and threshold
// term of every super-feature resolves.
struct SuperFeatureMapping {
  std::vector<SuperFeature> supers;  // order of first appearance in the feature info file
  TemplateSet templates;

  const NarrativeTemplate& template_for(const SuperFeature& super) const {
    return templates.templates[super.template_index];
  }
};

SuperFeatureMapping build_super_feature_mapping(const FeatureInfoTable& info,
                                                const TemplateSet& templates,
                                                const DatasetManifest& manifest);

// User-source values keyed by sample id, then original feature name.
using ItemValue = std::variant<double, std::string>;
using UserValueTable = std::map<std::string, std::map<std::string, ItemValue>, std::less<>>;

// Line-delimited {"sample_id":..., "values":{"<feature>": <string|number>}}.
UserValueTable load_user_values(const std::filesystem::path& path);

struct InsightsDesign {
  FeatureInfoTable info;
  TemplateSet templates;
  SuperFeatureMapping mapping;
  UserValueTable user_values;
};

InsightsDesign load_design(const std::filesystem::path& feature_info,
                           const std::filesystem::path& templates,
                           const std::optional<std::filesystem::path>& user_values,
                           const DatasetManifest& manifest);

bool is_identifier(std::string_view text) noexcept;

}  // namespace crystal

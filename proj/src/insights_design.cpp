#include "crystal/insights_design.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "crystal/error.hpp"

namespace crystal {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 9> kColumns = {
    "Original-Feature", "Super-Feature", "Ultra-Feature",  "Category", "Insight Type",
    "Insight Item",     "Insight Threshold", "Insight Weight", "Source"};
constexpr std::size_t kRequiredColumns = 6;

enum Column : std::size_t {
  kOriginal, kSuper, kUltra, kCategory, kType, kItem, kThreshold, kWeight, kSource
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// RFC 4180 records; unquoted fields are trimmed.
std::vector<CsvRow> parse_csv(std::string_view text, std::string_view origin) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted_field = false;
  bool in_quotes = false;
  bool row_has_content = false;
  std::size_t line = 1;
  row.line = 1;

  auto end_field = [&] {
    row.fields.push_back(quoted_field ? field : trim(field));
    field.clear();
    quoted_field = false;
  };
  auto end_row = [&] {
    end_field();
    if (row_has_content) rows.push_back(std::move(row));
    row = CsvRow{};
    row.line = line + 1;
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!trim(field).empty()) {
          throw Error(ErrorCode::SchemaViolation, std::string(origin) + ":" + std::to_string(line) +
                                                      ": stray quote inside field");
        }
        field.clear();
        in_quotes = true;
        quoted_field = true;
        row_has_content = true;
        break;
      case ',':
        end_field();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        if (c != ' ' && c != '\t') row_has_content = true;
        field.push_back(c);
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::SchemaViolation, std::string(origin) + ": unterminated quoted field");
  }
  end_row();
  return rows;
}

bool is_blank(char c) { return c == ' ' || c == '\t'; }

// Quotes whenever the parser would otherwise split or trim the value.
std::string csv_escape(std::string_view value) {
  const bool needs_quotes = value.find_first_of(",\"\n\r") != std::string_view::npos ||
                            (!value.empty() && (is_blank(value.front()) || is_blank(value.back())));
  if (!needs_quotes) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

[[noreturn]] void row_error(ErrorCode code, std::string_view origin, std::size_t line,
                            std::string_view what) {
  throw Error(code, std::string(origin) + ":" + std::to_string(line) + ": " + std::string(what));
}

}  // namespace

bool is_identifier(std::string_view text) noexcept {
  if (text.empty()) return false;
  const auto start = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  if (!start(text.front())) return false;
  return std::all_of(text.begin(), text.end(),
                     [&](char c) { return start(c) || (c >= '0' && c <= '9'); });
}

// --- feature info file ----------------------------------------------------------

FeatureInfoTable parse_feature_info_text(std::string_view csv, const DatasetManifest& manifest,
                                         std::string_view origin) {
  const std::vector<CsvRow> rows = parse_csv(csv, origin);
  if (rows.empty()) throw Error(ErrorCode::SchemaViolation, std::string(origin) + ": missing header row");

  // Map header names to canonical column slots.
  std::array<std::optional<std::size_t>, kColumns.size()> slot_of_column{};
  const CsvRow& header = rows.front();
  for (std::size_t pos = 0; pos < header.fields.size(); ++pos) {
    const auto it = std::find(kColumns.begin(), kColumns.end(), header.fields[pos]);
    if (it == kColumns.end()) {
      row_error(ErrorCode::SchemaViolation, origin, header.line,
                "unknown column '" + header.fields[pos] + "'");
    }
    const auto col = static_cast<std::size_t>(it - kColumns.begin());
    if (slot_of_column[col]) {
      row_error(ErrorCode::SchemaViolation, origin, header.line,
                "duplicate column '" + header.fields[pos] + "'");
    }
    slot_of_column[col] = pos;
  }
  for (std::size_t col = 0; col < kRequiredColumns; ++col) {
    if (!slot_of_column[col]) {
      row_error(ErrorCode::SchemaViolation, origin, header.line,
                "missing required column '" + std::string(kColumns[col]) + "'");
    }
  }

  FeatureInfoTable table;
  std::map<std::string, std::size_t> seen_original;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.fields.size() != header.fields.size()) {
      row_error(ErrorCode::SchemaViolation, origin, row.line,
                "expected " + std::to_string(header.fields.size()) + " fields, found " +
                    std::to_string(row.fields.size()));
    }
    const auto get = [&](Column col) -> std::string {
      return slot_of_column[col] ? row.fields[*slot_of_column[col]] : std::string{};
    };

    FeatureInfoRecord rec;
    rec.original_feature = get(kOriginal);
    rec.super_feature = get(kSuper);
    rec.ultra_feature = get(kUltra);
    rec.category = get(kCategory);
    rec.insight_type = get(kType);
    rec.insight_item = get(kItem);
    for (Column col : {kOriginal, kSuper, kType, kItem}) {
      if (get(col).empty()) {
        row_error(ErrorCode::SchemaViolation, origin, row.line,
                  "field '" + std::string(kColumns[col]) + "' is blank");
      }
    }
    if (!is_identifier(rec.insight_type)) {
      row_error(ErrorCode::SchemaViolation, origin, row.line,
                "Insight Type '" + rec.insight_type + "' is not an identifier");
    }
    if (!is_identifier(rec.insight_item) || rec.insight_item == kSuperNamePlaceholder) {
      row_error(ErrorCode::SchemaViolation, origin, row.line,
                "Insight Item '" + rec.insight_item + "' is not a usable identifier");
    }
    if (rec.ultra_feature.empty()) rec.ultra_feature = rec.super_feature;
    if (rec.category.empty()) rec.category = rec.super_feature;

    if (const std::string threshold = get(kThreshold); !threshold.empty()) {
      try {
        rec.insight_threshold = ThresholdExpr::parse(threshold);
      } catch (const Error& e) {
        row_error(ErrorCode::BadExpression, origin, row.line, e.what());
      }
    }
    if (const std::string weight = get(kWeight); !weight.empty()) {
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(weight.data(), weight.data() + weight.size(), value);
      if (ec != std::errc() || ptr != weight.data() + weight.size() || !std::isfinite(value)) {
        row_error(ErrorCode::SchemaViolation, origin, row.line,
                  "Insight Weight '" + weight + "' is not a number");
      }
      if (value < 0.0 || value > 1.0) {
        row_error(ErrorCode::WeightOutOfRange, origin, row.line,
                  "Insight Weight " + weight + " outside [0, 1]");
      }
      rec.insight_weight = value;
    }
    if (const std::string source = get(kSource); !source.empty()) {
      if (source == "model") rec.source = FeatureSource::Model;
      else if (source == "user") rec.source = FeatureSource::User;
      else row_error(ErrorCode::SchemaViolation, origin, row.line, "Source must be model or user");
    }

    if (const auto [it, inserted] = seen_original.emplace(rec.original_feature, row.line); !inserted) {
      row_error(ErrorCode::DuplicateOriginalFeature, origin, row.line,
                "original feature '" + rec.original_feature + "' already listed on line " +
                    std::to_string(it->second));
    }
    if (rec.source == FeatureSource::Model && !manifest.feature_index(rec.original_feature)) {
      row_error(ErrorCode::UnknownModelFeature, origin, row.line,
                "model feature '" + rec.original_feature + "' is not in the bundle manifest");
    }
    table.records.push_back(std::move(rec));
  }

  // Per-super-feature consistency and pairing.
  std::map<std::string, const FeatureInfoRecord*> first_of_super;
  std::map<std::string, bool> has_model_feature;
  for (const auto& rec : table.records) {
    auto [it, inserted] = first_of_super.emplace(rec.super_feature, &rec);
    const FeatureInfoRecord& first = *it->second;
    if (!inserted) {
      if (rec.insight_type != first.insight_type || rec.ultra_feature != first.ultra_feature ||
          rec.category != first.category) {
        throw Error(ErrorCode::InconsistentSuperFeature,
                    std::string(origin) + ": super-feature '" + rec.super_feature +
                        "' has conflicting insight type, ultra-feature or category");
      }
    }
    has_model_feature[rec.super_feature] |= rec.source == FeatureSource::Model;
  }
  for (const auto& [super, paired] : has_model_feature) {
    if (!paired) {
      throw Error(ErrorCode::UnpairedUserFeature,
                  std::string(origin) + ": super-feature '" + super +
                      "' has only user-source features; pair it with a model feature");
    }
  }
  // Thresholds: at most one distinct expression per super-feature.
  std::map<std::string, const ThresholdExpr*> threshold_of_super;
  for (const auto& rec : table.records) {
    if (!rec.insight_threshold) continue;
    auto [it, inserted] = threshold_of_super.emplace(rec.super_feature, &*rec.insight_threshold);
    if (!inserted && !(*it->second == *rec.insight_threshold)) {
      throw Error(ErrorCode::InconsistentSuperFeature,
                  std::string(origin) + ": super-feature '" + rec.super_feature +
                      "' has conflicting insight thresholds");
    }
  }
  return table;
}

FeatureInfoTable parse_feature_info(const fs::path& path, const DatasetManifest& manifest) {
  return parse_feature_info_text(read_file(path), manifest, path.string());
}

std::string serialize_feature_info(const FeatureInfoTable& table) {
  std::string out;
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    if (c > 0) out += ',';
    out += kColumns[c];
  }
  out += '\n';
  for (const auto& rec : table.records) {
    const std::array<std::string, kColumns.size()> fields = {
        rec.original_feature,
        rec.super_feature,
        rec.ultra_feature,
        rec.category,
        rec.insight_type,
        rec.insight_item,
        rec.insight_threshold ? rec.insight_threshold->to_string() : std::string{},
        format_shortest(rec.insight_weight),
        rec.source == FeatureSource::Model ? "model" : "user"};
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c > 0) out += ',';
      out += csv_escape(fields[c]);
    }
    out += '\n';
  }
  return out;
}

// --- templates ------------------------------------------------------------------

std::vector<TemplateSegment> parse_template_text(std::string_view text) {
  std::vector<TemplateSegment> segments;
  std::string literal;
  auto flush = [&] {
    if (!literal.empty()) segments.push_back({false, std::move(literal)});
    literal.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        literal.push_back('{');
        ++i;
        continue;
      }
      const auto close = text.find('}', i + 1);
      const auto next_open = text.find('{', i + 1);
      if (close == std::string_view::npos || (next_open != std::string_view::npos && next_open < close)) {
        throw Error(ErrorCode::MalformedPlaceholder,
                    "unclosed '{' at position " + std::to_string(i) + " in '" + std::string(text) + "'");
      }
      const std::string_view name = text.substr(i + 1, close - i - 1);
      if (!is_identifier(name)) {
        throw Error(ErrorCode::MalformedPlaceholder,
                    "placeholder '{" + std::string(name) + "}' at position " + std::to_string(i) +
                        " is not an identifier");
      }
      flush();
      segments.push_back({true, std::string(name)});
      i = close;
    } else if (c == '}') {
      if (i + 1 < text.size() && text[i + 1] == '}') {
        literal.push_back('}');
        ++i;
        continue;
      }
      throw Error(ErrorCode::MalformedPlaceholder,
                  "unmatched '}' at position " + std::to_string(i) + " in '" + std::string(text) + "'");
    } else {
      literal.push_back(c);
    }
  }
  flush();
  return segments;
}

std::vector<std::string> NarrativeTemplate::placeholders() const {
  std::vector<std::string> names;
  for (const auto& seg : segments) {
    if (seg.placeholder && std::find(names.begin(), names.end(), seg.text) == names.end()) {
      names.push_back(seg.text);
    }
  }
  return names;
}

const ExtraItem* NarrativeTemplate::find_extra(std::string_view name) const {
  for (const auto& extra : extra_items) {
    if (extra.name == name) return &extra;
  }
  return nullptr;
}

const NarrativeTemplate* TemplateSet::find(std::string_view insight_type) const {
  for (const auto& t : templates) {
    if (t.insight_type == insight_type) return &t;
  }
  return nullptr;
}

TemplateSet parse_templates_text(std::string_view json_text, std::string_view origin) {
  const std::string where(origin);
  // Duplicate top-level keys are silently merged by the parser, so catch
  // them while parsing.
  std::set<std::string> top_level_keys;
  std::string duplicate;
  const ordered_json::parser_callback_t detect_duplicates =
      [&](int depth, ordered_json::parse_event_t event, ordered_json& parsed) {
    if (event == ordered_json::parse_event_t::key && depth == 1) {
      const auto& key = parsed.get_ref<const std::string&>();
      if (!top_level_keys.insert(key).second && duplicate.empty()) duplicate = key;
    }
    return true;
  };
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text.begin(), json_text.end(), detect_duplicates);
  } catch (const ordered_json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, where + ": malformed JSON: " + e.what());
  }
  if (!duplicate.empty()) {
    throw Error(ErrorCode::DuplicateInsightType, where + ": insight type '" + duplicate + "' defined twice");
  }
  if (!doc.is_object()) throw Error(ErrorCode::SchemaViolation, where + ": expected an object keyed by insight type");

  TemplateSet set;
  for (const auto& [type, entry] : doc.items()) {
    const std::string ctx = where + ": insight type '" + type + "'";
    if (!is_identifier(type)) throw Error(ErrorCode::SchemaViolation, ctx + ": key is not an identifier");
    if (!entry.is_object()) throw Error(ErrorCode::SchemaViolation, ctx + ": expected an object");
    for (const auto& [key, _] : entry.items()) {
      if (key != "text" && key != "extra_items") {
        throw Error(ErrorCode::SchemaViolation, ctx + ": unknown key '" + key + "'");
      }
    }
    if (!entry.contains("text") || !entry["text"].is_string()) {
      throw Error(ErrorCode::SchemaViolation, ctx + ": 'text' must be a string");
    }
    NarrativeTemplate tmpl;
    tmpl.insight_type = type;
    tmpl.text = entry["text"].get<std::string>();
    try {
      tmpl.segments = parse_template_text(tmpl.text);
    } catch (const Error& e) {
      throw Error(e.code(), ctx + ": " + e.what());
    }

    if (entry.contains("extra_items")) {
      const ordered_json& extras = entry["extra_items"];
      if (!extras.is_array()) throw Error(ErrorCode::SchemaViolation, ctx + ": 'extra_items' must be an array");
      for (const ordered_json& item : extras) {
        if (!item.is_object() || !item.contains("name") || !item["name"].is_string() ||
            !item.contains("expression") || !item["expression"].is_string()) {
          throw Error(ErrorCode::SchemaViolation, ctx + ": extra item needs string 'name' and 'expression'");
        }
        for (const auto& [key, _] : item.items()) {
          if (key != "name" && key != "expression" && key != "format") {
            throw Error(ErrorCode::SchemaViolation, ctx + ": unknown extra item key '" + key + "'");
          }
        }
        ExtraItem extra;
        extra.name = item["name"].get<std::string>();
        if (!is_identifier(extra.name) || extra.name == kSuperNamePlaceholder) {
          throw Error(ErrorCode::SchemaViolation, ctx + ": extra item name '" + extra.name + "' is not usable");
        }
        if (tmpl.find_extra(extra.name)) {
          throw Error(ErrorCode::SchemaViolation, ctx + ": extra item '" + extra.name + "' defined twice");
        }
        try {
          extra.expression = Expression::parse(item["expression"].get<std::string>());
        } catch (const Error& e) {
          throw Error(ErrorCode::BadExpression, ctx + ": extra item '" + extra.name + "': " + e.what());
        }
        const std::string format = item.value("format", std::string("number"));
        if (format == "number") extra.format = ItemFormat::Number;
        else if (format == "signed_percent") extra.format = ItemFormat::SignedPercent;
        else throw Error(ErrorCode::SchemaViolation, ctx + ": unknown format '" + format + "'");
        tmpl.extra_items.push_back(std::move(extra));
      }
      // Extra items may only use insight items, never other extra items.
      for (const auto& extra : tmpl.extra_items) {
        for (const auto& id : extra.expression.identifiers()) {
          if (tmpl.find_extra(id) || id == kSuperNamePlaceholder) {
            throw Error(ErrorCode::BadExpression,
                        ctx + ": extra item '" + extra.name + "' references '" + id +
                            "', which is not an insight item");
          }
        }
      }
    }
    set.templates.push_back(std::move(tmpl));
  }
  return set;
}

TemplateSet parse_templates(const fs::path& path) {
  return parse_templates_text(read_file(path), path.string());
}

std::string serialize_templates(const TemplateSet& templates) {
  ordered_json doc = ordered_json::object();
  for (const auto& t : templates.templates) {
    ordered_json entry;
    entry["text"] = t.text;
    if (!t.extra_items.empty()) {
      ordered_json extras = ordered_json::array();
      for (const auto& extra : t.extra_items) {
        ordered_json item;
        item["name"] = extra.name;
        item["expression"] = extra.expression.to_string();
        item["format"] = extra.format == ItemFormat::Number ? "number" : "signed_percent";
        extras.push_back(std::move(item));
      }
      entry["extra_items"] = std::move(extras);
    }
    doc[t.insight_type] = std::move(entry);
  }
  return doc.dump(2) + "\n";
}

// --- linking ----------------------------------------------------------------------

const ItemBinding* SuperFeature::find_item(std::string_view item) const {
  for (const auto& b : items) {
    if (b.item == item) return &b;
  }
  return nullptr;
}

SuperFeatureMapping build_super_feature_mapping(const FeatureInfoTable& info,
                                                const TemplateSet& templates,
                                                const DatasetManifest& manifest) {
  SuperFeatureMapping mapping;
  mapping.templates = templates;
  std::map<std::string, std::size_t> index_of_super;

  for (const auto& rec : info.records) {
    auto [it, inserted] = index_of_super.emplace(rec.super_feature, mapping.supers.size());
    if (inserted) {
      SuperFeature super;
      super.name = rec.super_feature;
      super.ultra_feature = rec.ultra_feature;
      super.category = rec.category;
      super.insight_type = rec.insight_type;
      const NarrativeTemplate* tmpl = templates.find(rec.insight_type);
      if (!tmpl) {
        throw Error(ErrorCode::MissingTemplate, "no template for insight type '" + rec.insight_type +
                                                    "' (super-feature '" + rec.super_feature + "')");
      }
      super.template_index = static_cast<std::size_t>(tmpl - templates.templates.data());
      mapping.supers.push_back(std::move(super));
    }
    SuperFeature& super = mapping.supers[it->second];
    if (super.find_item(rec.insight_item)) {
      throw Error(ErrorCode::UnboundPlaceholder,
                  "insight item '" + rec.insight_item + "' is bound twice under super-feature '" +
                      super.name + "'; each item needs exactly one original feature");
    }
    ItemBinding binding;
    binding.item = rec.insight_item;
    binding.original_feature = rec.original_feature;
    binding.source = rec.source;
    binding.weight = rec.insight_weight;
    if (rec.source == FeatureSource::Model) {
      binding.feature_index = manifest.feature_index(rec.original_feature);
      if (!binding.feature_index) {
        throw Error(ErrorCode::UnknownModelFeature,
                    "model feature '" + rec.original_feature + "' is not in the bundle manifest");
      }
    }
    super.items.push_back(std::move(binding));
    if (rec.insight_threshold && !super.threshold) super.threshold = rec.insight_threshold;
  }

  for (const auto& super : mapping.supers) {
    const NarrativeTemplate& tmpl = mapping.template_for(super);
    const auto ctx = "super-feature '" + super.name + "' (template '" + tmpl.insight_type + "')";
    for (const auto& extra : tmpl.extra_items) {
      if (super.find_item(extra.name)) {
        throw Error(ErrorCode::UnboundPlaceholder,
                    ctx + ": extra item '" + extra.name + "' shadows a bound insight item");
      }
      for (const auto& id : extra.expression.identifiers()) {
        if (!super.find_item(id)) {
          throw Error(ErrorCode::UnboundPlaceholder,
                      ctx + ": extra item '" + extra.name + "' needs insight item '" + id +
                          "', which no feature provides");
        }
      }
    }
    for (const auto& name : tmpl.placeholders()) {
      if (name == kSuperNamePlaceholder || super.find_item(name) || tmpl.find_extra(name)) continue;
      throw Error(ErrorCode::UnboundPlaceholder,
                  ctx + ": placeholder '{" + name + "}' is not provided by any feature");
    }
    if (super.threshold) {
      for (const auto& id : super.threshold->identifiers()) {
        if (super.find_item(id) || tmpl.find_extra(id)) continue;
        throw Error(ErrorCode::UnboundPlaceholder,
                    ctx + ": threshold term '" + id + "' is not an insight item or extra item");
      }
    }
  }
  return mapping;
}

// --- user values -----------------------------------------------------------------

UserValueTable load_user_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  UserValueTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::SchemaViolation, where + ": malformed JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("sample_id") || !doc["sample_id"].is_string() ||
        !doc.contains("values") || !doc["values"].is_object()) {
      throw Error(ErrorCode::SchemaViolation, where + ": expected {\"sample_id\":..., \"values\":{...}}");
    }
    const auto id = doc["sample_id"].get<std::string>();
    if (table.contains(id)) {
      throw Error(ErrorCode::DuplicateSampleId, where + ": sample_id '" + id + "' repeated");
    }
    auto& values = table[id];
    for (const auto& [feature, value] : doc["values"].items()) {
      if (value.is_string()) {
        values.emplace(feature, value.get<std::string>());
      } else if (value.is_number()) {
        values.emplace(feature, value.get<double>());
      } else {
        throw Error(ErrorCode::SchemaViolation,
                    where + ": value for '" + feature + "' must be a string or number");
      }
    }
  }
  return table;
}

InsightsDesign load_design(const fs::path& feature_info, const fs::path& templates,
                           const std::optional<fs::path>& user_values,
                           const DatasetManifest& manifest) {
  InsightsDesign design;
  design.info = parse_feature_info(feature_info, manifest);
  design.templates = parse_templates(templates);
  design.mapping = build_super_feature_mapping(design.info, design.templates, manifest);
  if (user_values) design.user_values = load_user_values(*user_values);
  return design;
}

}  // namespace crystal

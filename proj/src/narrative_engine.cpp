#include "crystal/narrative_engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "crystal/error.hpp"

namespace crystal {
namespace {

std::optional<double> numeric_value(const ItemValue& value) {
  if (const double* d = std::get_if<double>(&value)) return *d;
  const auto& text = std::get<std::string>(value);
  double parsed = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, parsed);
  if (ec != std::errc() || ptr != last || text.empty()) return std::nullopt;
  return parsed;
}

Expression::Lookup lookup_in(const ItemValues& items) {
  return [&items](std::string_view name) -> std::optional<double> {
    const auto it = items.find(name);
    if (it == items.end()) return std::nullopt;
    return numeric_value(it->second);
  };
}

bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }

std::string capitalize_first(std::string text) {
  if (!text.empty() && is_lower(text.front())) text.front() = static_cast<char>(text.front() - 'a' + 'A');
  return text;
}

// Leaves acronyms ("URL ...") alone.
std::string lowercase_first(std::string text) {
  if (text.size() >= 1 && is_upper(text[0]) && !(text.size() >= 2 && is_upper(text[1]))) {
    text[0] = static_cast<char>(text[0] - 'A' + 'a');
  }
  return text;
}

double round_one_decimal(double value) {
  // std::round rounds half away from zero.
  return std::round(value * 10.0) / 10.0;
}

}  // namespace

void validate(const EngineConfig& cfg) {
  if (cfg.dedup_k == 0) throw Error(ErrorCode::InvalidConfig, "dedup_k must be >= 1");
  if (cfg.max_narratives == 0) throw Error(ErrorCode::InvalidConfig, "max_narratives must be >= 1");
  if (cfg.conjunctions.empty()) throw Error(ErrorCode::InvalidConfig, "conjunctions must not be empty");
}

// --- Step II ------------------------------------------------------------------------

ItemValues collect_item_values(const SuperFeatureMapping& mapping, std::size_t super_index,
                               const Sample& sample,
                               const std::map<std::string, ItemValue>* user_values) {
  const SuperFeature& super = mapping.supers.at(super_index);
  ItemValues items;
  for (const ItemBinding& binding : super.items) {
    if (binding.source == FeatureSource::Model) {
      items.emplace(binding.item, sample.features.at(*binding.feature_index));
      continue;
    }
    const auto it = user_values ? user_values->find(binding.original_feature)
                                : std::map<std::string, ItemValue>::const_iterator{};
    if (!user_values || it == user_values->end()) {
      throw Error(ErrorCode::MissingUserValue, "sample '" + sample.sample_id +
                                                   "' has no user value for '" +
                                                   binding.original_feature + "'");
    }
    items.emplace(binding.item, it->second);
  }

  const NarrativeTemplate& tmpl = mapping.template_for(super);
  const auto lookup = lookup_in(items);
  std::vector<std::pair<std::string, double>> extras;
  for (const ExtraItem& extra : tmpl.extra_items) {
    Expression::EvalOptions options;
    options.zero_over_zero_is_zero = extra.format == ItemFormat::SignedPercent;
    try {
      extras.emplace_back(extra.name, extra.expression.evaluate(lookup, options));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnknownIdentifier) throw;
      // Linking guarantees the names exist, so this is a non-numeric user value.
      throw Error(ErrorCode::MissingUserValue, "sample '" + sample.sample_id +
                                                   "': extra item '" + extra.name +
                                                   "' needs a numeric value: " + e.what());
    }
  }
  for (auto& [name, value] : extras) items.emplace(std::move(name), value);
  return items;
}

std::vector<SuperValues> collect_super_values(const SuperFeatureMapping& mapping,
                                              const Sample& sample,
                                              const std::map<std::string, ItemValue>* user_values) {
  std::vector<SuperValues> out(mapping.supers.size());
  for (std::size_t s = 0; s < mapping.supers.size(); ++s) {
    try {
      out[s].items = collect_item_values(mapping, s, sample, user_values);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingUserValue) throw;
      out[s].missing = e.what();
    }
  }
  return out;
}

// --- Step III -----------------------------------------------------------------------

std::vector<RankedSuper> score_super_features(const SuperFeatureMapping& mapping,
                                              const AttributionList& attribution,
                                              RankingKey key) {
  std::map<std::size_t, double> importance_by_feature;
  for (const auto& e : attribution.entries) importance_by_feature.emplace(e.feature_index, e.importance);

  std::vector<RankedSuper> ranked;
  for (std::size_t s = 0; s < mapping.supers.size(); ++s) {
    std::optional<double> best;
    for (const ItemBinding& binding : mapping.supers[s].items) {
      if (binding.source != FeatureSource::Model) continue;
      const auto it = importance_by_feature.find(*binding.feature_index);
      if (it == importance_by_feature.end()) continue;
      const double raw = key == RankingKey::Signed ? it->second : std::abs(it->second);
      const double weighted = raw * binding.weight;
      if (!best || weighted > *best) best = weighted;
    }
    if (!best || *best < 0.0) continue;
    // Canonical zero so weight-0 scores compare and print as 0.
    ranked.push_back({s, *best == 0.0 ? 0.0 : *best});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedSuper& a, const RankedSuper& b) {
    return a.importance > b.importance;
  });
  return ranked;
}

std::vector<RankedSuper> deduplicate(const SuperFeatureMapping& mapping,
                                     std::vector<RankedSuper> ranked, std::size_t k) {
  std::map<std::string_view, std::size_t> kept_per_ultra;
  std::vector<RankedSuper> out;
  for (const RankedSuper& r : ranked) {
    std::size_t& kept = kept_per_ultra[mapping.supers[r.super_index].ultra_feature];
    if (kept >= k) continue;
    ++kept;
    out.push_back(r);
  }
  return out;
}

std::vector<RankedSuper> rank_super_features(const SuperFeatureMapping& mapping,
                                             const AttributionList& attribution,
                                             const EngineConfig& cfg) {
  validate(cfg);
  auto ranked = deduplicate(mapping, score_super_features(mapping, attribution, cfg.ranking_key),
                            cfg.dedup_k);
  if (ranked.size() > cfg.max_narratives) ranked.resize(cfg.max_narratives);
  return ranked;
}

// --- Step V -------------------------------------------------------------------------

std::string format_number(double value) {
  if (!std::isfinite(value)) return {};
  double rounded = round_one_decimal(value);
  if (rounded == 0.0) rounded = 0.0;  // drop the sign of -0
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", rounded);
  std::string text(buf);
  if (text.size() >= 2 && text.compare(text.size() - 2, 2, ".0") == 0) text.resize(text.size() - 2);
  return text;
}

std::string format_signed_percent(double value) {
  if (!std::isfinite(value)) return {};
  const double rounded = round_one_decimal(value);
  const bool negative = rounded < 0.0;
  return std::string(" (") + (negative ? "-" : "+") + format_number(std::abs(rounded)) + "%)";
}

std::string render_narrative(const NarrativeTemplate& tmpl, std::string_view super_name,
                             const ItemValues& items) {
  std::string out;
  for (const TemplateSegment& seg : tmpl.segments) {
    if (!seg.placeholder) {
      out += seg.text;
      continue;
    }
    if (seg.text == kSuperNamePlaceholder) {
      out += super_name;
      continue;
    }
    const auto it = items.find(seg.text);
    if (it == items.end()) {
      // Link checking makes this unreachable for mapped designs.
      throw std::logic_error("unresolved placeholder '{" + seg.text + "}' in template '" +
                             tmpl.insight_type + "'");
    }
    const ExtraItem* extra = tmpl.find_extra(seg.text);
    if (const double* number = std::get_if<double>(&it->second)) {
      out += extra && extra->format == ItemFormat::SignedPercent ? format_signed_percent(*number)
                                                                  : format_number(*number);
    } else {
      out += std::get<std::string>(it->second);
    }
  }
  return capitalize_first(std::move(out));
}

std::vector<ThresholdCandidate> apply_thresholds(const std::vector<ThresholdCandidate>& candidates,
                                                 const SuperFeatureMapping& mapping) {
  std::vector<ThresholdCandidate> out;
  for (const ThresholdCandidate& c : candidates) {
    const SuperFeature& super = mapping.supers[c.ranked.super_index];
    if (super.threshold && !super.threshold->evaluate(lookup_in(*c.items))) continue;
    out.push_back(c);
  }
  return out;
}

// --- Step VI ------------------------------------------------------------------------

std::vector<Paragraph> concatenate(const std::vector<Narrative>& narratives,
                                   const EngineConfig& cfg) {
  validate(cfg);
  struct Group {
    std::string category;
    std::vector<const Narrative*> members;
    double importance = 0.0;
  };
  std::vector<Group> groups;
  for (const Narrative& n : narratives) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Group& g) { return g.category == n.category; });
    if (it == groups.end()) {
      groups.push_back({n.category, {}, n.importance});
      it = std::prev(groups.end());
    }
    it->members.push_back(&n);
    it->importance = std::max(it->importance, n.importance);
  }
  std::stable_sort(groups.begin(), groups.end(),
                   [](const Group& a, const Group& b) { return a.importance > b.importance; });

  std::vector<Paragraph> paragraphs;
  for (Group& g : groups) {
    std::stable_sort(g.members.begin(), g.members.end(),
                     [](const Narrative* a, const Narrative* b) { return a->importance > b->importance; });
    Paragraph p;
    p.category = g.category;
    p.importance = g.importance;
    p.member_count = g.members.size();
    if (g.members.size() == 1) {
      p.text = g.members.front()->text;
    } else {
      for (std::size_t i = 0; i < g.members.size(); ++i) {
        std::string sentence = g.members[i]->text;
        if (sentence.empty() || sentence.back() != '.') sentence += '.';
        const bool last = i + 1 == g.members.size();
        if (!last) sentence.pop_back();
        if (i == 0) {
          p.text = std::move(sentence);
        } else {
          p.text += ", " + cfg.conjunctions[(i - 1) % cfg.conjunctions.size()] + " " +
                    lowercase_first(std::move(sentence));
        }
      }
    }
    paragraphs.push_back(std::move(p));
  }
  return paragraphs;
}

std::string render_headline(double percentile, bool has_narratives, const EngineConfig& cfg) {
  std::string headline;
  for (const HeadlineTier& tier : cfg.headline_tiers) {
    if (percentile >= tier.min_percentile) {
      headline = "This " + cfg.entity + " is " + tier.phrase + " to " + cfg.outcome + ". ";
      break;
    }
  }
  headline += "Its " + cfg.outcome + " likelihood is larger than " + format_number(percentile) +
              "% of all " + cfg.entity_plural;
  headline += has_narratives ? ", which is driven by:" : ".";
  return headline;
}

// --- orchestration ------------------------------------------------------------------

ExplanationRecord generate_for_sample(const DatasetBundle& bundle, std::string_view sample_id,
                                      const AttributionList& attribution,
                                      const InsightsDesign& design, const EngineConfig& cfg,
                                      GenerationStats* stats) {
  validate(cfg);
  const Sample& sample = bundle.sample(sample_id);
  const SuperFeatureMapping& mapping = design.mapping;
  GenerationStats local;

  ExplanationRecord record;
  record.sample_id = sample.sample_id;
  if (attribution.degenerate) {
    record.warnings.push_back("attribution is degenerate (constant model output); no narratives");
  }

  const auto user_it = design.user_values.find(sample.sample_id);
  const std::map<std::string, ItemValue>* user_values =
      user_it == design.user_values.end() ? nullptr : &user_it->second;

  const std::vector<RankedSuper> scored = score_super_features(mapping, attribution, cfg.ranking_key);

  std::vector<ItemValues> values;
  values.reserve(scored.size());
  std::vector<ThresholdCandidate> candidates;
  std::vector<RankedSuper> collected;
  for (const RankedSuper& r : scored) {
    try {
      values.push_back(collect_item_values(mapping, r.super_index, sample, user_values));
      collected.push_back(r);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingUserValue) throw;
      ++local.dropped_missing_value;
      record.warnings.push_back("super-feature '" + mapping.supers[r.super_index].name +
                                "' dropped: " + e.what());
    }
  }
  for (std::size_t i = 0; i < collected.size(); ++i) candidates.push_back({collected[i], &values[i]});

  // Thresholds run before dedup and truncation so filtered items do not use up slots.
  const std::vector<ThresholdCandidate> passing = apply_thresholds(candidates, mapping);
  local.dropped_by_threshold = candidates.size() - passing.size();

  std::vector<RankedSuper> passing_ranked;
  passing_ranked.reserve(passing.size());
  for (const auto& c : passing) passing_ranked.push_back(c.ranked);
  std::vector<RankedSuper> selected = deduplicate(mapping, std::move(passing_ranked), cfg.dedup_k);
  if (selected.size() > cfg.max_narratives) selected.resize(cfg.max_narratives);

  for (const RankedSuper& r : selected) {
    const auto it = std::find_if(passing.begin(), passing.end(), [&](const ThresholdCandidate& c) {
      return c.ranked.super_index == r.super_index;
    });
    const SuperFeature& super = mapping.supers[r.super_index];
    Narrative n;
    n.super_feature = super.name;
    n.ultra_feature = super.ultra_feature;
    n.category = super.category;
    n.importance = r.importance;
    n.text = render_narrative(mapping.template_for(super), super.name, *it->items);
    record.narratives.push_back(std::move(n));
  }

  record.headline =
      render_headline(score_percentile(bundle, sample.sample_id), !record.narratives.empty(), cfg);
  if (cfg.concatenate) record.paragraphs = concatenate(record.narratives, cfg);
  if (stats) {
    stats->dropped_by_threshold += local.dropped_by_threshold;
    stats->dropped_missing_value += local.dropped_missing_value;
  }
  return record;
}

}  // namespace crystal

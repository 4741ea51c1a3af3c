#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crystal/interpreter.hpp"
#include "crystal/narrative_engine.hpp"

namespace crystal {

enum class ExportFormat { Jsonl, Markdown, Html, TextEmail };

std::string_view format_name(ExportFormat format) noexcept;
std::optional<ExportFormat> parse_format(std::string_view name) noexcept;

nlohmann::json record_to_json(const ExplanationRecord& record);
// Throws SchemaViolation.
ExplanationRecord record_from_json(const nlohmann::json& doc);

nlohmann::json attribution_to_json(const AttributionList& attr,
                                   const std::vector<std::string>& feature_names);
AttributionList attribution_from_json(const nlohmann::json& doc,
                                      const std::vector<std::string>& feature_names);

// Throws IoFailure when the stream goes bad.
void export_records(const std::vector<ExplanationRecord>& records, ExportFormat format,
                    std::ostream& out);

std::vector<ExplanationRecord> read_records_jsonl(std::istream& in);

std::string html_escape(std::string_view text);

}  // namespace crystal

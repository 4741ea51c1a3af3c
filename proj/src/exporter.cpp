#include "crystal/exporter.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "crystal/error.hpp"

namespace crystal {
using nlohmann::json;

namespace {

const json& require(const json& doc, const char* key, json::value_t type) {
  const auto it = doc.find(key);
  const bool ok = it != doc.end() &&
                  (it->type() == type ||
                   (type == json::value_t::number_float && it->is_number()));
  if (!ok) throw Error(ErrorCode::SchemaViolation, std::string("record field '") + key + "' missing or mistyped");
  return *it;
}

void check(std::ostream& out) {
  if (!out) throw Error(ErrorCode::IoFailure, "write to export destination failed");
}

void write_markdown(const std::vector<ExplanationRecord>& records, std::ostream& out) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (i > 0) out << "\n";
    out << "## " << r.sample_id << "\n\n" << r.headline << "\n";
    if (!r.paragraphs.empty()) {
      for (const auto& p : r.paragraphs) out << "\n" << p.text << "\n";
    } else if (!r.narratives.empty()) {
      out << "\n";
      for (const auto& n : r.narratives) out << "- " << n.text << "\n";
    }
  }
}

void write_html(const std::vector<ExplanationRecord>& records, std::ostream& out) {
  out << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
      << "<title>Narrative insights</title>\n</head>\n<body>\n";
  for (const auto& r : records) {
    out << "<section id=\"" << html_escape(r.sample_id) << "\">\n";
    out << "<h2>" << html_escape(r.sample_id) << "</h2>\n";
    out << "<p>" << html_escape(r.headline) << "</p>\n";
    if (!r.paragraphs.empty()) {
      for (const auto& p : r.paragraphs) out << "<p>" << html_escape(p.text) << "</p>\n";
    } else if (!r.narratives.empty()) {
      out << "<ul>\n";
      for (const auto& n : r.narratives) out << "<li>" << html_escape(n.text) << "</li>\n";
      out << "</ul>\n";
    }
    out << "</section>\n";
  }
  out << "</body>\n</html>\n";
}

void write_text_email(const std::vector<ExplanationRecord>& records, std::ostream& out) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (i > 0) out << "\n---\n\n";
    // Subject is the first sentence of the headline.
    std::string subject = r.headline;
    if (const auto stop = subject.find(". "); stop != std::string::npos) subject.resize(stop + 1);
    out << "Subject: [" << r.sample_id << "] " << subject << "\n\n";
    out << r.headline << "\n";
    if (!r.paragraphs.empty()) {
      for (const auto& p : r.paragraphs) out << "\n" << p.text << "\n";
    } else if (!r.narratives.empty()) {
      out << "\n";
      for (const auto& n : r.narratives) out << "  * " << n.text << "\n";
    }
  }
}

}  // namespace

std::string_view format_name(ExportFormat format) noexcept {
  switch (format) {
    case ExportFormat::Jsonl: return "jsonl";
    case ExportFormat::Markdown: return "markdown";
    case ExportFormat::Html: return "html";
    case ExportFormat::TextEmail: return "text_email";
  }
  return "unknown";
}

std::optional<ExportFormat> parse_format(std::string_view name) noexcept {
  if (name == "jsonl") return ExportFormat::Jsonl;
  if (name == "markdown") return ExportFormat::Markdown;
  if (name == "html") return ExportFormat::Html;
  if (name == "text_email") return ExportFormat::TextEmail;
  return std::nullopt;
}

std::string html_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

json record_to_json(const ExplanationRecord& record) {
  json narratives = json::array();
  for (const auto& n : record.narratives) {
    narratives.push_back({{"text", n.text},
                          {"importance", n.importance},
                          {"super", n.super_feature},
                          {"ultra", n.ultra_feature},
                          {"category", n.category}});
  }
  json paragraphs = json::array();
  for (const auto& p : record.paragraphs) {
    paragraphs.push_back({{"category", p.category},
                          {"text", p.text},
                          {"importance", p.importance},
                          {"member_count", p.member_count}});
  }
  json doc;
  doc["sample_id"] = record.sample_id;
  doc["headline"] = record.headline;
  doc["narratives"] = std::move(narratives);
  doc["paragraphs"] = std::move(paragraphs);
  doc["warnings"] = record.warnings;
  return doc;
}

ExplanationRecord record_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::SchemaViolation, "record must be an object");
  ExplanationRecord r;
  r.sample_id = require(doc, "sample_id", json::value_t::string).get<std::string>();
  r.headline = require(doc, "headline", json::value_t::string).get<std::string>();
  for (const auto& n : require(doc, "narratives", json::value_t::array)) {
    Narrative narrative;
    narrative.text = require(n, "text", json::value_t::string).get<std::string>();
    narrative.importance = require(n, "importance", json::value_t::number_float).get<double>();
    narrative.super_feature = require(n, "super", json::value_t::string).get<std::string>();
    narrative.ultra_feature = require(n, "ultra", json::value_t::string).get<std::string>();
    narrative.category = require(n, "category", json::value_t::string).get<std::string>();
    r.narratives.push_back(std::move(narrative));
  }
  for (const auto& p : require(doc, "paragraphs", json::value_t::array)) {
    Paragraph paragraph;
    paragraph.category = require(p, "category", json::value_t::string).get<std::string>();
    paragraph.text = require(p, "text", json::value_t::string).get<std::string>();
    paragraph.importance = require(p, "importance", json::value_t::number_float).get<double>();
    paragraph.member_count =
        require(p, "member_count", json::value_t::number_unsigned).get<std::size_t>();
    r.paragraphs.push_back(std::move(paragraph));
  }
  for (const auto& w : require(doc, "warnings", json::value_t::array)) {
    if (!w.is_string()) throw Error(ErrorCode::SchemaViolation, "warnings must be strings");
    r.warnings.push_back(w.get<std::string>());
  }
  return r;
}

json attribution_to_json(const AttributionList& attr, const std::vector<std::string>& feature_names) {
  json entries = json::array();
  for (const auto& e : attr.entries) {
    entries.push_back({{"feature", feature_names.at(e.feature_index)},
                       {"index", e.feature_index},
                       {"importance", e.importance}});
  }
  json doc;
  doc["sample_id"] = attr.sample_id;
  doc["method"] = std::string(method_name(attr.method));
  doc["baseline"] = attr.baseline;
  doc["degenerate"] = attr.degenerate;
  doc["regularization_raised"] = attr.regularization_raised;
  doc["entries"] = std::move(entries);
  return doc;
}

AttributionList attribution_from_json(const json& doc, const std::vector<std::string>& feature_names) {
  if (!doc.is_object()) throw Error(ErrorCode::SchemaViolation, "attribution must be an object");
  AttributionList attr;
  attr.sample_id = require(doc, "sample_id", json::value_t::string).get<std::string>();
  const auto method = parse_method(require(doc, "method", json::value_t::string).get<std::string>());
  if (!method) throw Error(ErrorCode::SchemaViolation, "unknown attribution method");
  attr.method = *method;
  attr.baseline = require(doc, "baseline", json::value_t::number_float).get<double>();
  attr.degenerate = doc.value("degenerate", false);
  attr.regularization_raised = doc.value("regularization_raised", false);
  for (const auto& e : require(doc, "entries", json::value_t::array)) {
    AttributionEntry entry;
    const auto name = require(e, "feature", json::value_t::string).get<std::string>();
    const auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) {
      throw Error(ErrorCode::SchemaViolation, "attribution names unknown feature '" + name + "'");
    }
    entry.feature_index = static_cast<std::size_t>(it - feature_names.begin());
    entry.importance = require(e, "importance", json::value_t::number_float).get<double>();
    attr.entries.push_back(entry);
  }
  return attr;
}

void export_records(const std::vector<ExplanationRecord>& records, ExportFormat format,
                    std::ostream& out) {
  check(out);
  switch (format) {
    case ExportFormat::Jsonl:
      for (const auto& r : records) out << record_to_json(r).dump() << "\n";
      break;
    case ExportFormat::Markdown: write_markdown(records, out); break;
    case ExportFormat::Html: write_html(records, out); break;
    case ExportFormat::TextEmail: write_text_email(records, out); break;
  }
  out.flush();
  check(out);
}

std::vector<ExplanationRecord> read_records_jsonl(std::istream& in) {
  std::vector<ExplanationRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::SchemaViolation, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace crystal

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "crystal/error.hpp"
#include "crystal/model_io.hpp"

namespace crystal {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const fs::path& file, std::size_t line, std::string_view field,
                               std::string_view what) {
  std::ostringstream msg;
  msg << file.string();
  if (line > 0) msg << ":" << line;
  msg << ": field '" << field << "': " << what;
  throw Error(ErrorCode::SchemaViolation, msg.str());
}

DatasetManifest parse_manifest(const json& doc, const fs::path& path) {
  if (!doc.is_object()) schema_error(path, 0, "<root>", "manifest must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "feature_names" && key != "sample_count" && key != "samples_path" &&
        key != "score_range") {
      schema_error(path, 0, key, "unknown key");
    }
  }
  DatasetManifest manifest;

  const auto names = doc.find("feature_names");
  if (names == doc.end() || !names->is_array()) {
    schema_error(path, 0, "feature_names", "expected array of strings");
  }
  std::set<std::string> seen;
  for (const auto& name : *names) {
    if (!name.is_string() || name.get_ref<const std::string&>().empty()) {
      schema_error(path, 0, "feature_names", "feature names must be non-empty strings");
    }
    const auto& str = name.get_ref<const std::string&>();
    if (!seen.insert(str).second) {
      schema_error(path, 0, "feature_names", "duplicate feature name '" + str + "'");
    }
    manifest.feature_names.push_back(str);
  }

  const auto count = doc.find("sample_count");
  if (count == doc.end() || !count->is_number_unsigned()) {
    schema_error(path, 0, "sample_count", "expected non-negative integer");
  }
  manifest.sample_count = count->get<std::size_t>();

  const auto samples = doc.find("samples_path");
  if (samples == doc.end() || !samples->is_string() || samples->get<std::string>().empty()) {
    schema_error(path, 0, "samples_path", "expected non-empty string");
  }
  manifest.samples_path = samples->get<std::string>();

  if (const auto range = doc.find("score_range"); range != doc.end()) {
    if (!range->is_array() || range->size() != 2 || !(*range)[0].is_number() ||
        !(*range)[1].is_number()) {
      schema_error(path, 0, "score_range", "expected [min, max]");
    }
    ScoreRange r{(*range)[0].get<double>(), (*range)[1].get<double>()};
    if (!(r.min <= r.max)) schema_error(path, 0, "score_range", "min exceeds max");
    manifest.score_range = r;
  }
  return manifest;
}

Sample parse_sample_line(std::string_view line, std::size_t line_no, const fs::path& path,
                         std::size_t feature_count) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    schema_error(path, line_no, "<record>", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) schema_error(path, line_no, "<record>", "record must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "sample_id" && key != "features" && key != "score") {
      schema_error(path, line_no, key, "unknown key");
    }
  }
  Sample sample;
  const auto id = doc.find("sample_id");
  if (id == doc.end() || !id->is_string() || id->get<std::string>().empty()) {
    schema_error(path, line_no, "sample_id", "expected non-empty string");
  }
  sample.sample_id = id->get<std::string>();

  const auto features = doc.find("features");
  if (features == doc.end() || !features->is_array()) {
    schema_error(path, line_no, "features", "expected array of numbers");
  }
  sample.features.reserve(features->size());
  for (std::size_t i = 0; i < features->size(); ++i) {
    const auto& v = (*features)[i];
    if (v.is_null()) {
      schema_error(path, line_no, "features", "missing value at position " + std::to_string(i));
    }
    if (!v.is_number()) {
      schema_error(path, line_no, "features", "non-numeric value at position " + std::to_string(i));
    }
    sample.features.push_back(v.get<double>());
  }
  if (sample.features.size() != feature_count) {
    std::ostringstream msg;
    msg << path.string() << ":" << line_no << ": sample '" << sample.sample_id << "' has "
        << sample.features.size() << " feature values, manifest declares " << feature_count;
    throw Error(ErrorCode::LengthMismatch, msg.str());
  }

  const auto score = doc.find("score");
  if (score == doc.end() || !score->is_number()) {
    schema_error(path, line_no, "score", "expected number");
  }
  sample.score = score->get<double>();
  return sample;
}

json manifest_to_json(const DatasetManifest& manifest) {
  json doc;
  doc["feature_names"] = manifest.feature_names;
  doc["sample_count"] = manifest.sample_count;
  doc["samples_path"] = manifest.samples_path;
  if (manifest.score_range) {
    doc["score_range"] = json::array({manifest.score_range->min, manifest.score_range->max});
  }
  return doc;
}

}  // namespace

std::optional<std::size_t> DatasetManifest::feature_index(std::string_view name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - feature_names.begin());
}

DatasetBundle::DatasetBundle(DatasetManifest manifest, std::vector<Sample> samples)
    : manifest_(std::move(manifest)), samples_(std::move(samples)) {
  if (manifest_.sample_count != samples_.size()) {
    throw Error(ErrorCode::SchemaViolation,
                "sample_count " + std::to_string(manifest_.sample_count) + " but " +
                    std::to_string(samples_.size()) + " records");
  }
  const std::size_t d = manifest_.feature_names.size();
  index_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    if (s.features.size() != d) {
      throw Error(ErrorCode::LengthMismatch, "sample '" + s.sample_id + "' has " +
                                                 std::to_string(s.features.size()) +
                                                 " feature values, expected " + std::to_string(d));
    }
    for (double v : s.features) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::SchemaViolation, "sample '" + s.sample_id + "' has non-finite feature");
      }
    }
    if (!std::isfinite(s.score)) {
      throw Error(ErrorCode::SchemaViolation, "sample '" + s.sample_id + "' has non-finite score");
    }
    if (manifest_.score_range &&
        (s.score < manifest_.score_range->min || s.score > manifest_.score_range->max)) {
      throw Error(ErrorCode::SchemaViolation,
                  "sample '" + s.sample_id + "' score outside declared score_range");
    }
    if (!index_.emplace(s.sample_id, i).second) {
      throw Error(ErrorCode::DuplicateSampleId, "duplicate sample_id '" + s.sample_id + "'");
    }
  }
}

std::optional<std::size_t> DatasetBundle::index_of(std::string_view sample_id) const {
  const auto it = index_.find(std::string(sample_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Sample& DatasetBundle::sample(std::string_view sample_id) const {
  const auto idx = index_of(sample_id);
  if (!idx) throw Error(ErrorCode::UnknownSampleId, "unknown sample_id '" + std::string(sample_id) + "'");
  return samples_[*idx];
}

std::vector<double> DatasetBundle::feature_means() const {
  std::vector<double> means(feature_count(), 0.0);
  if (samples_.empty()) return means;
  for (const Sample& s : samples_) {
    for (std::size_t j = 0; j < means.size(); ++j) means[j] += s.features[j];
  }
  for (double& m : means) m /= static_cast<double>(samples_.size());
  return means;
}

std::vector<double> DatasetBundle::feature_stddevs() const {
  std::vector<double> sd(feature_count(), 0.0);
  if (samples_.size() < 2) return sd;
  const std::vector<double> means = feature_means();
  for (const Sample& s : samples_) {
    for (std::size_t j = 0; j < sd.size(); ++j) {
      const double diff = s.features[j] - means[j];
      sd[j] += diff * diff;
    }
  }
  for (double& v : sd) v = std::sqrt(v / static_cast<double>(samples_.size() - 1));
  return sd;
}

RowMatrix DatasetBundle::feature_matrix() const {
  RowMatrix m(feature_count());
  m.reserve_rows(samples_.size());
  for (const Sample& s : samples_) m.append_row(s.features);
  return m;
}

DatasetBundle load_bundle(const fs::path& manifest_path) {
  std::ifstream manifest_in(manifest_path);
  if (!manifest_in) {
    throw Error(ErrorCode::MissingFile, "cannot open manifest " + manifest_path.string());
  }
  json doc;
  try {
    doc = json::parse(manifest_in);
  } catch (const json::parse_error& e) {
    schema_error(manifest_path, 0, "<root>", std::string("malformed JSON: ") + e.what());
  }
  DatasetManifest manifest = parse_manifest(doc, manifest_path);

  fs::path samples_path = manifest.samples_path;
  if (samples_path.is_relative()) samples_path = manifest_path.parent_path() / samples_path;
  std::ifstream samples_in(samples_path);
  if (!samples_in) {
    throw Error(ErrorCode::MissingFile, "cannot open samples file " + samples_path.string());
  }

  std::vector<Sample> samples;
  samples.reserve(manifest.sample_count);
  std::unordered_map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t line_no = 0;
  std::size_t pending_blank = 0;
  while (std::getline(samples_in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      if (pending_blank == 0) pending_blank = line_no;
      continue;
    }
    if (pending_blank != 0) schema_error(samples_path, pending_blank, "<record>", "blank line");
    Sample sample = parse_sample_line(line, line_no, samples_path, manifest.feature_names.size());
    if (const auto [it, inserted] = first_line.emplace(sample.sample_id, line_no); !inserted) {
      throw Error(ErrorCode::DuplicateSampleId,
                  samples_path.string() + ":" + std::to_string(line_no) + ": sample_id '" +
                      sample.sample_id + "' already defined on line " + std::to_string(it->second));
    }
    samples.push_back(std::move(sample));
  }
  if (samples.size() != manifest.sample_count) {
    schema_error(manifest_path, 0, "sample_count",
                 "declares " + std::to_string(manifest.sample_count) + " samples, file has " +
                     std::to_string(samples.size()));
  }
  return DatasetBundle(std::move(manifest), std::move(samples));
}

void save_bundle(const DatasetBundle& bundle, const fs::path& manifest_path) {
  const DatasetManifest& manifest = bundle.manifest();
  {
    std::ofstream out(manifest_path);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + manifest_path.string());
    out << manifest_to_json(manifest).dump(2) << "\n";
  }
  fs::path samples_path = manifest.samples_path;
  if (samples_path.is_relative()) samples_path = manifest_path.parent_path() / samples_path;
  std::ofstream out(samples_path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + samples_path.string());
  for (const Sample& s : bundle.samples()) {
    json record;
    record["sample_id"] = s.sample_id;
    record["features"] = s.features;
    record["score"] = s.score;
    out << record.dump() << "\n";
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + samples_path.string());
}

double score_percentile(const DatasetBundle& bundle, std::string_view sample_id) {
  const Sample& target = bundle.sample(sample_id);
  const std::size_t n = bundle.size();
  if (n == 1) return 100.0;
  const auto lower = std::count_if(bundle.samples().begin(), bundle.samples().end(),
                                   [&](const Sample& s) { return s.score < target.score; });
  return 100.0 * static_cast<double>(lower) / static_cast<double>(n - 1);
}

}  // namespace crystal

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crystal/exporter.hpp"
#include "crystal/insights_design.hpp"
#include "crystal/interpreter.hpp"
#include "crystal/model_io.hpp"
#include "crystal/narrative_engine.hpp"

namespace crystal {

// In-process model used when no external scoring command is configured.
struct SyntheticModel {
  enum class Kind { Linear, Stumps };
  Kind kind = Kind::Linear;
  std::vector<double> coefficients;  // linear
  double intercept = 0.0;            // linear
  std::size_t n_stumps = 16;         // stumps
  std::uint64_t seed = 0;            // stumps
  double lo = 0.0;                   // stumps, threshold range
  double hi = 1.0;
};

struct RunConfig {
  std::filesystem::path bundle;
  std::filesystem::path feature_info;
  std::filesystem::path templates;
  std::optional<std::filesystem::path> user_features;

  AttributionMethod method = AttributionMethod::Lime;
  InterpreterConfig interpreter;
  std::size_t n_clusters = 1;  // klime only

  EngineConfig engine;

  ExportFormat format = ExportFormat::Jsonl;
  std::optional<std::filesystem::path> output;  // stdout when empty

  std::vector<std::string> scoring_command;
  std::size_t batch_limit = 256;
  std::size_t timeout_ms = 30000;
  std::optional<SyntheticModel> synthetic;

  // Restricts the run to these ids, in this order. Empty = whole bundle.
  std::vector<std::string> samples;
  std::size_t workers = 1;
};

// Relative paths are resolved against base_dir. Throws InvalidConfig.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
// Throws MissingFile, InvalidConfig.
RunConfig load_run_config(const std::filesystem::path& path);

struct RunOverrides {
  std::optional<AttributionMethod> method;
  std::optional<ExportFormat> format;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> dedup_k;
  std::optional<std::size_t> max_narratives;
  std::optional<bool> concatenate;
  std::optional<std::filesystem::path> output;
  std::optional<std::size_t> workers;
};

void apply_overrides(RunConfig& cfg, const RunOverrides& overrides);

// Config-level checks that need no files: knob ranges, model availability.
void validate(const RunConfig& cfg);

bool method_needs_model(AttributionMethod method) noexcept;

struct RunInputs {
  DatasetBundle bundle;
  InsightsDesign design;
};

// Validates the config, then loads bundle and design. Nothing is scored.
RunInputs load_run_inputs(const RunConfig& cfg);

// nullptr for klime. Spawns the external process when one is configured.
std::unique_ptr<ScoringChannel> make_channel(const RunConfig& cfg, const DatasetBundle& bundle);

struct RunSummary {
  std::size_t samples_processed = 0;
  std::size_t samples_failed = 0;
  std::size_t narratives_emitted = 0;
  std::size_t dropped_by_threshold = 0;
  std::size_t dropped_missing_value = 0;
  // Run-level and per-record warnings; any entry means exit status 3.
  std::vector<std::string> warnings;
  double load_ms = 0.0;
  double interpret_ms = 0.0;
  double narrate_ms = 0.0;
  double export_ms = 0.0;
  double total_ms = 0.0;
};

nlohmann::json summary_to_json(const RunSummary& summary);

// Ids the run covers, in output order. Throws UnknownSampleId.
std::vector<std::string> selected_samples(const RunConfig& cfg, const DatasetBundle& bundle);

// One slot per selected sample; failures become warnings and empty slots.
// Entries are cut to top_k_features.
std::vector<std::optional<AttributionList>> interpret_samples(const RunConfig& cfg,
                                                              const DatasetBundle& bundle,
                                                              ScoringChannel* channel,
                                                              RunSummary& summary);

std::vector<ExplanationRecord> narrate_samples(const RunConfig& cfg, const RunInputs& inputs,
                                               const std::vector<AttributionList>& attributions,
                                               RunSummary& summary);

struct RunResult {
  std::vector<AttributionList> attributions;
  std::vector<ExplanationRecord> records;
  RunSummary summary;
};

// load -> interpret -> narrate. Does not export.
RunResult execute(const RunConfig& cfg);

// execute() then export to cfg.output (or stdout).
RunSummary run_pipeline(const RunConfig& cfg);

// Opens cfg.output (or stdout) and exports. Throws IoFailure.
void write_output(const RunConfig& cfg, const std::vector<ExplanationRecord>& records);

}  // namespace crystal

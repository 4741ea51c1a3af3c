#include "crystal/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "crystal/error.hpp"

namespace crystal {
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::InvalidConfig, where + ": " + what);
}

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
  if (!obj.is_object()) bad(where, "must be an object");
  for (const auto& [key, value] : obj.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
    if (!ok) bad(where, "unknown key '" + key + "'");
  }
}

fs::path resolve(const fs::path& base, const json& value, const std::string& where) {
  if (!value.is_string() || value.get<std::string>().empty()) bad(where, "expected a non-empty path string");
  const fs::path p = value.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

std::size_t positive(const json& value, const std::string& where, bool allow_zero = false) {
  if (!value.is_number_integer()) bad(where, "expected an integer");
  const auto v = value.get<std::int64_t>();
  if (v < 0 || (v == 0 && !allow_zero)) bad(where, allow_zero ? "must be non-negative" : "must be positive");
  return static_cast<std::size_t>(v);
}

double real(const json& value, const std::string& where) {
  if (!value.is_number()) bad(where, "expected a number");
  return value.get<double>();
}

std::string text(const json& value, const std::string& where) {
  if (!value.is_string()) bad(where, "expected a string");
  return value.get<std::string>();
}

bool flag(const json& value, const std::string& where) {
  if (!value.is_boolean()) bad(where, "expected true or false");
  return value.get<bool>();
}

RankingKey ranking_key(const json& value, const std::string& where) {
  const auto key = parse_ranking_key(text(value, where));
  if (!key) bad(where, "expected signed or absolute");
  return *key;
}

void read_interpreter(const json& obj, RunConfig& cfg) {
  reject_unknown(obj, "interpreter",
                 {"method", "n_perturbations", "kernel_width", "background", "top_k_features",
                  "ridge_lambda", "seed", "ranking_key", "n_clusters"});
  InterpreterConfig& ic = cfg.interpreter;
  if (obj.contains("method")) {
    const auto m = parse_method(text(obj["method"], "interpreter.method"));
    if (!m) bad("interpreter.method", "expected lime, kernel_shap, exact_shap or klime");
    cfg.method = *m;
  }
  if (obj.contains("n_perturbations")) ic.n_perturbations = positive(obj["n_perturbations"], "interpreter.n_perturbations");
  if (obj.contains("kernel_width")) {
    const json& w = obj["kernel_width"];
    if (w.is_string() && w.get<std::string>() == "auto") {
      ic.kernel_width.reset();
    } else {
      ic.kernel_width = real(w, "interpreter.kernel_width");
    }
  }
  if (obj.contains("background")) {
    const json& bg = obj["background"];
    if (bg.is_string() && bg.get<std::string>() == "dataset_means") {
      ic.background = DatasetMeansBackground{};
    } else if (bg.is_array() && !bg.empty()) {
      const std::size_t cols = bg.front().is_array() ? bg.front().size() : 0;
      RowMatrix rows(cols);
      for (const json& r : bg) {
        if (!r.is_array() || r.size() != cols) bad("interpreter.background", "rows must be equal-length arrays");
        std::vector<double> row;
        for (const json& v : r) row.push_back(real(v, "interpreter.background"));
        rows.append_row(row);
      }
      ic.background = std::move(rows);
    } else {
      bad("interpreter.background", "expected \"dataset_means\" or a non-empty list of rows");
    }
  }
  if (obj.contains("top_k_features")) ic.top_k_features = positive(obj["top_k_features"], "interpreter.top_k_features");
  if (obj.contains("ridge_lambda")) ic.ridge_lambda = real(obj["ridge_lambda"], "interpreter.ridge_lambda");
  if (obj.contains("seed")) {
    if (!obj["seed"].is_number_integer()) bad("interpreter.seed", "expected an integer");
    ic.rng_seed = obj["seed"].is_number_unsigned() ? obj["seed"].get<std::uint64_t>()
                                                   : static_cast<std::uint64_t>(obj["seed"].get<std::int64_t>());
  }
  if (obj.contains("ranking_key")) ic.ranking_key = ranking_key(obj["ranking_key"], "interpreter.ranking_key");
  if (obj.contains("n_clusters")) cfg.n_clusters = positive(obj["n_clusters"], "interpreter.n_clusters");
}

void read_engine(const json& obj, RunConfig& cfg) {
  reject_unknown(obj, "engine",
                 {"dedup_k", "max_narratives", "concatenate", "conjunctions", "ranking_key",
                  "headline_tiers", "entity", "entity_plural", "outcome"});
  EngineConfig& ec = cfg.engine;
  if (obj.contains("dedup_k")) ec.dedup_k = positive(obj["dedup_k"], "engine.dedup_k");
  if (obj.contains("max_narratives")) ec.max_narratives = positive(obj["max_narratives"], "engine.max_narratives");
  if (obj.contains("concatenate")) ec.concatenate = flag(obj["concatenate"], "engine.concatenate");
  if (obj.contains("conjunctions")) {
    if (!obj["conjunctions"].is_array()) bad("engine.conjunctions", "expected a list of strings");
    ec.conjunctions.clear();
    for (const json& c : obj["conjunctions"]) ec.conjunctions.push_back(text(c, "engine.conjunctions"));
  }
  if (obj.contains("ranking_key")) ec.ranking_key = ranking_key(obj["ranking_key"], "engine.ranking_key");
  if (obj.contains("headline_tiers")) {
    if (!obj["headline_tiers"].is_array()) bad("engine.headline_tiers", "expected a list");
    ec.headline_tiers.clear();
    for (const json& t : obj["headline_tiers"]) {
      reject_unknown(t, "engine.headline_tiers", {"min_percentile", "phrase"});
      if (!t.contains("min_percentile") || !t.contains("phrase")) {
        bad("engine.headline_tiers", "each tier needs min_percentile and phrase");
      }
      ec.headline_tiers.push_back({real(t["min_percentile"], "engine.headline_tiers.min_percentile"),
                                   text(t["phrase"], "engine.headline_tiers.phrase")});
    }
  }
  if (obj.contains("entity")) ec.entity = text(obj["entity"], "engine.entity");
  if (obj.contains("entity_plural")) ec.entity_plural = text(obj["entity_plural"], "engine.entity_plural");
  if (obj.contains("outcome")) ec.outcome = text(obj["outcome"], "engine.outcome");
}

void read_scoring(const json& obj, const fs::path& base, RunConfig& cfg) {
  reject_unknown(obj, "scoring", {"command", "batch_limit", "timeout_ms", "synthetic"});
  if (obj.contains("command")) {
    const json& cmd = obj["command"];
    if (!cmd.is_array() || cmd.empty()) bad("scoring.command", "expected a non-empty argv list");
    for (const json& a : cmd) cfg.scoring_command.push_back(text(a, "scoring.command"));
    // A relative program path with a slash is taken relative to the config file.
    fs::path program = cfg.scoring_command.front();
    if (program.is_relative() && cfg.scoring_command.front().find('/') != std::string::npos) {
      cfg.scoring_command.front() = (base / program).string();
    }
  }
  if (obj.contains("batch_limit")) cfg.batch_limit = positive(obj["batch_limit"], "scoring.batch_limit");
  if (obj.contains("timeout_ms")) cfg.timeout_ms = positive(obj["timeout_ms"], "scoring.timeout_ms");
  if (obj.contains("synthetic")) {
    const json& s = obj["synthetic"];
    reject_unknown(s, "scoring.synthetic", {"kind", "coefficients", "intercept", "n_stumps", "seed", "lo", "hi"});
    SyntheticModel model;
    const std::string kind = s.contains("kind") ? text(s["kind"], "scoring.synthetic.kind") : "linear";
    if (kind == "linear") {
      model.kind = SyntheticModel::Kind::Linear;
      if (!s.contains("coefficients") || !s["coefficients"].is_array()) {
        bad("scoring.synthetic.coefficients", "linear model needs a coefficient list");
      }
      for (const json& c : s["coefficients"]) model.coefficients.push_back(real(c, "scoring.synthetic.coefficients"));
      if (s.contains("intercept")) model.intercept = real(s["intercept"], "scoring.synthetic.intercept");
    } else if (kind == "stumps") {
      model.kind = SyntheticModel::Kind::Stumps;
      if (s.contains("n_stumps")) model.n_stumps = positive(s["n_stumps"], "scoring.synthetic.n_stumps");
      if (s.contains("seed")) model.seed = positive(s["seed"], "scoring.synthetic.seed", true);
      if (s.contains("lo")) model.lo = real(s["lo"], "scoring.synthetic.lo");
      if (s.contains("hi")) model.hi = real(s["hi"], "scoring.synthetic.hi");
    } else {
      bad("scoring.synthetic.kind", "expected linear or stumps");
    }
    cfg.synthetic = std::move(model);
  }
  if (cfg.synthetic && !cfg.scoring_command.empty()) {
    bad("scoring", "command and synthetic are mutually exclusive");
  }
}

}  // namespace

bool method_needs_model(AttributionMethod method) noexcept {
  return method != AttributionMethod::KLime;
}

RunConfig run_config_from_json(const json& doc, const fs::path& base_dir) {
  reject_unknown(doc, "config",
                 {"bundle", "design", "interpreter", "engine", "export", "scoring", "samples", "workers"});
  RunConfig cfg;
  if (!doc.contains("bundle")) bad("config", "missing 'bundle'");
  cfg.bundle = resolve(base_dir, doc["bundle"], "bundle");

  if (!doc.contains("design")) bad("config", "missing 'design'");
  const json& design = doc["design"];
  reject_unknown(design, "design", {"feature_info", "templates", "user_features"});
  if (!design.contains("feature_info")) bad("design", "missing 'feature_info'");
  if (!design.contains("templates")) bad("design", "missing 'templates'");
  cfg.feature_info = resolve(base_dir, design["feature_info"], "design.feature_info");
  cfg.templates = resolve(base_dir, design["templates"], "design.templates");
  if (design.contains("user_features")) {
    cfg.user_features = resolve(base_dir, design["user_features"], "design.user_features");
  }

  if (doc.contains("interpreter")) read_interpreter(doc["interpreter"], cfg);
  // The engine ranks with the interpreter's key unless told otherwise.
  cfg.engine.ranking_key = cfg.interpreter.ranking_key;
  if (doc.contains("engine")) read_engine(doc["engine"], cfg);

  if (doc.contains("export")) {
    const json& ex = doc["export"];
    reject_unknown(ex, "export", {"format", "output"});
    if (ex.contains("format")) {
      const auto f = parse_format(text(ex["format"], "export.format"));
      if (!f) bad("export.format", "expected jsonl, markdown, html or text_email");
      cfg.format = *f;
    }
    if (ex.contains("output")) cfg.output = resolve(base_dir, ex["output"], "export.output");
  }
  if (doc.contains("scoring")) read_scoring(doc["scoring"], base_dir, cfg);
  if (doc.contains("samples")) {
    if (!doc["samples"].is_array()) bad("samples", "expected a list of sample ids");
    for (const json& s : doc["samples"]) cfg.samples.push_back(text(s, "samples"));
  }
  if (doc.contains("workers")) cfg.workers = positive(doc["workers"], "workers");
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return run_config_from_json(doc, path.parent_path());
}

void apply_overrides(RunConfig& cfg, const RunOverrides& o) {
  if (o.method) cfg.method = *o.method;
  if (o.format) cfg.format = *o.format;
  if (o.seed) cfg.interpreter.rng_seed = *o.seed;
  if (o.dedup_k) cfg.engine.dedup_k = *o.dedup_k;
  if (o.max_narratives) cfg.engine.max_narratives = *o.max_narratives;
  if (o.concatenate) cfg.engine.concatenate = *o.concatenate;
  if (o.output) cfg.output = *o.output;
  if (o.workers) cfg.workers = *o.workers;
}

void validate(const RunConfig& cfg) {
  validate(cfg.engine);
  if (cfg.workers == 0) bad("workers", "must be positive");
  if (cfg.n_clusters == 0) bad("interpreter.n_clusters", "must be positive");
  if (method_needs_model(cfg.method) && cfg.scoring_command.empty() && !cfg.synthetic) {
    bad("scoring", std::string("method ") + std::string(method_name(cfg.method)) +
                       " needs a scoring command or a synthetic model");
  }
  if (cfg.synthetic && cfg.synthetic->kind == SyntheticModel::Kind::Stumps &&
      !(cfg.synthetic->lo < cfg.synthetic->hi)) {
    bad("scoring.synthetic", "lo must be below hi");
  }
  std::set<std::string> seen;
  for (const auto& id : cfg.samples) {
    if (!seen.insert(id).second) bad("samples", "duplicate id '" + id + "'");
  }
  for (const fs::path* p : {&cfg.bundle, &cfg.feature_info, &cfg.templates}) {
    if (!fs::exists(*p)) throw Error(ErrorCode::MissingFile, "'" + p->string() + "' does not exist");
  }
  if (cfg.user_features && !fs::exists(*cfg.user_features)) {
    throw Error(ErrorCode::MissingFile, "'" + cfg.user_features->string() + "' does not exist");
  }
}

RunInputs load_run_inputs(const RunConfig& cfg) {
  validate(cfg);
  DatasetBundle bundle = load_bundle(cfg.bundle);
  validate(cfg.interpreter, bundle.feature_count());
  if (cfg.synthetic && cfg.synthetic->kind == SyntheticModel::Kind::Linear &&
      cfg.synthetic->coefficients.size() != bundle.feature_count()) {
    bad("scoring.synthetic.coefficients", "expected " + std::to_string(bundle.feature_count()) +
                                              " coefficients, got " +
                                              std::to_string(cfg.synthetic->coefficients.size()));
  }
  InsightsDesign design = load_design(cfg.feature_info, cfg.templates, cfg.user_features, bundle.manifest());
  selected_samples(cfg, bundle);
  return RunInputs{std::move(bundle), std::move(design)};
}

std::unique_ptr<ScoringChannel> make_channel(const RunConfig& cfg, const DatasetBundle& bundle) {
  if (!method_needs_model(cfg.method)) return nullptr;
  if (!cfg.scoring_command.empty()) {
    return std::make_unique<ExternalProcessChannel>(cfg.scoring_command, cfg.batch_limit,
                                                    std::chrono::milliseconds(cfg.timeout_ms));
  }
  if (!cfg.synthetic) bad("scoring", "no model configured");
  const SyntheticModel& m = *cfg.synthetic;
  if (m.kind == SyntheticModel::Kind::Linear) {
    return std::make_unique<LinearChannel>(m.coefficients, m.intercept);
  }
  const auto drawn = StumpEnsembleChannel::random(bundle.feature_count(), m.n_stumps, m.seed, m.lo, m.hi);
  return std::make_unique<StumpEnsembleChannel>(drawn.stumps(), drawn.bias());
}

json summary_to_json(const RunSummary& s) {
  return json{{"samples_processed", s.samples_processed},
              {"samples_failed", s.samples_failed},
              {"narratives_emitted", s.narratives_emitted},
              {"dropped_by_threshold", s.dropped_by_threshold},
              {"dropped_missing_value", s.dropped_missing_value},
              {"warnings", s.warnings},
              {"timing_ms",
               {{"load", s.load_ms},
                {"interpret", s.interpret_ms},
                {"narrate", s.narrate_ms},
                {"export", s.export_ms},
                {"total", s.total_ms}}}};
}

std::vector<std::string> selected_samples(const RunConfig& cfg, const DatasetBundle& bundle) {
  if (cfg.samples.empty()) {
    std::vector<std::string> ids;
    ids.reserve(bundle.size());
    for (const auto& s : bundle.samples()) ids.push_back(s.sample_id);
    return ids;
  }
  for (const auto& id : cfg.samples) bundle.sample(id);  // throws UnknownSampleId
  return cfg.samples;
}

std::vector<std::optional<AttributionList>> interpret_samples(const RunConfig& cfg,
                                                              const DatasetBundle& bundle,
                                                              ScoringChannel* channel,
                                                              RunSummary& summary) {
  const std::vector<std::string> ids = selected_samples(cfg, bundle);
  std::vector<std::optional<AttributionList>> out(ids.size());
  std::vector<std::string> failures(ids.size());

  if (cfg.method == AttributionMethod::KLime) {
    // Global fit; a failure here is not per-sample and propagates.
    KLimeResult fit = klime_explain(bundle, cfg.interpreter, cfg.n_clusters);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::size_t idx = *bundle.index_of(ids[i]);
      out[i] = top_features(fit.attributions[idx], cfg.interpreter.top_k_features);
    }
    if (fit.reseeds > 0) {
      summary.warnings.push_back("klime: " + std::to_string(fit.reseeds) + " re-seed(s) after empty clusters");
    }
    for (std::size_t c = 0; c < fit.clusters.size(); ++c) {
      if (fit.clusters[c].regularization_raised) {
        summary.warnings.push_back("klime: cluster " + std::to_string(c) + " needed a larger ridge penalty");
      }
    }
    return out;
  }
  if (channel == nullptr) bad("scoring", "no scoring channel for a model-based method");

  RowMatrix background;
  if (cfg.method == AttributionMethod::ExactShap) background = resolve_background(bundle, cfg.interpreter);

  auto explain_one = [&](std::size_t i) {
    try {
      AttributionList attr;
      switch (cfg.method) {
        case AttributionMethod::Lime: attr = lime_explain(bundle, ids[i], *channel, cfg.interpreter); break;
        case AttributionMethod::KernelShap:
          attr = kernel_shap_explain(bundle, ids[i], *channel, cfg.interpreter);
          break;
        case AttributionMethod::ExactShap:
          attr = exact_shap_explain(bundle, ids[i], *channel, background, cfg.interpreter.ranking_key);
          break;
        case AttributionMethod::KLime: break;
      }
      out[i] = top_features(attr, cfg.interpreter.top_k_features);
    } catch (const Error& e) {
      // A broken channel cannot serve the remaining samples either.
      if (e.code() == ErrorCode::ChannelBroken) throw;
      failures[i] = e.what();
    }
  };

  const bool parallel = cfg.workers > 1 && channel->kind() == ChannelKind::InProcessSynthetic;
  if (!parallel) {
    for (std::size_t i = 0; i < ids.size(); ++i) explain_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    {
      std::vector<std::jthread> pool;
      const std::size_t n = std::min(cfg.workers, ids.size());
      for (std::size_t w = 0; w < n; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < ids.size(); i = next++) {
            try {
              explain_one(i);
            } catch (...) {
              std::lock_guard lock(error_mutex);
              if (!first_error) first_error = std::current_exception();
              next = ids.size();
            }
          }
        });
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  }

  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!out[i]) {
      ++summary.samples_failed;
      summary.warnings.push_back("sample '" + ids[i] + "' skipped: " + failures[i]);
    } else if (out[i]->regularization_raised) {
      summary.warnings.push_back("sample '" + ids[i] + "': singular fit, ridge penalty raised");
    }
  }
  return out;
}

std::vector<ExplanationRecord> narrate_samples(const RunConfig& cfg, const RunInputs& inputs,
                                               const std::vector<AttributionList>& attributions,
                                               RunSummary& summary) {
  std::vector<ExplanationRecord> records;
  records.reserve(attributions.size());
  for (const AttributionList& attr : attributions) {
    GenerationStats stats;
    records.push_back(generate_for_sample(inputs.bundle, attr.sample_id, attr, inputs.design, cfg.engine, &stats));
    summary.dropped_by_threshold += stats.dropped_by_threshold;
    summary.dropped_missing_value += stats.dropped_missing_value;
    summary.narratives_emitted += records.back().narratives.size();
    for (const auto& w : records.back().warnings) {
      summary.warnings.push_back("sample '" + attr.sample_id + "': " + w);
    }
    ++summary.samples_processed;
  }
  return records;
}

RunResult execute(const RunConfig& cfg) {
  const auto start = Clock::now();
  RunResult result;
  RunSummary& summary = result.summary;

  auto t = Clock::now();
  const RunInputs inputs = load_run_inputs(cfg);
  summary.load_ms = ms_since(t);

  t = Clock::now();
  std::unique_ptr<ScoringChannel> channel = make_channel(cfg, inputs.bundle);
  auto slots = interpret_samples(cfg, inputs.bundle, channel.get(), summary);
  channel.reset();  // terminates an external scorer
  for (auto& slot : slots) {
    if (slot) result.attributions.push_back(std::move(*slot));
  }
  summary.interpret_ms = ms_since(t);

  t = Clock::now();
  result.records = narrate_samples(cfg, inputs, result.attributions, summary);
  summary.narrate_ms = ms_since(t);
  summary.total_ms = ms_since(start);
  return result;
}

void write_output(const RunConfig& cfg, const std::vector<ExplanationRecord>& records) {
  if (!cfg.output) {
    export_records(records, cfg.format, std::cout);
    return;
  }
  std::ofstream out(*cfg.output, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open '" + cfg.output->string() + "' for writing");
  export_records(records, cfg.format, out);
}

RunSummary run_pipeline(const RunConfig& cfg) {
  const auto start = Clock::now();
  RunResult result = execute(cfg);
  const auto t = Clock::now();
  write_output(cfg, result.records);
  result.summary.export_ms = ms_since(t);
  result.summary.total_ms = ms_since(start);
  return result.summary;
}

}  // namespace crystal

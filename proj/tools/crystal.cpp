// crystal: command-line driver for bundle validation, attribution, narrative
// generation and export.
//
// Exit status: 0 ok, 1 validation error, 2 runtime failure, 3 ok with warnings.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crystal/error.hpp"
#include "crystal/exporter.hpp"
#include "crystal/pipeline.hpp"

namespace {

using namespace crystal;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;
constexpr int kWarnings = 3;

struct Flags {
  std::string config;
  std::string method;
  std::string format;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> dedup_k;
  std::optional<std::size_t> max_narratives;
  bool concatenate = false;
  std::string output;
  std::optional<std::size_t> workers;
  std::string input;
  bool quiet = false;
};

RunOverrides overrides_from(const Flags& f) {
  RunOverrides o;
  if (!f.method.empty()) {
    o.method = parse_method(f.method);
    if (!o.method) throw Error(ErrorCode::InvalidConfig, "--method: unknown method '" + f.method + "'");
  }
  if (!f.format.empty()) {
    o.format = parse_format(f.format);
    if (!o.format) throw Error(ErrorCode::InvalidConfig, "--format: unknown format '" + f.format + "'");
  }
  o.seed = f.seed;
  o.dedup_k = f.dedup_k;
  o.max_narratives = f.max_narratives;
  if (f.concatenate) o.concatenate = true;
  if (!f.output.empty()) o.output = f.output;
  o.workers = f.workers;
  return o;
}

RunConfig config_from(const Flags& f) {
  RunConfig cfg = load_run_config(f.config);
  apply_overrides(cfg, overrides_from(f));
  return cfg;
}

int finish(const RunSummary& summary, bool quiet) {
  if (!quiet) std::cerr << summary_to_json(summary).dump() << "\n";
  return summary.warnings.empty() ? kOk : kWarnings;
}

int cmd_validate(const Flags& f) {
  const RunConfig cfg = config_from(f);
  const RunInputs inputs = load_run_inputs(cfg);
  if (!f.quiet) {
    std::cerr << "ok: " << inputs.bundle.size() << " samples, " << inputs.bundle.feature_count()
              << " features, " << inputs.design.mapping.supers.size() << " super-features\n";
  }
  return kOk;
}

int cmd_interpret(const Flags& f) {
  const RunConfig cfg = config_from(f);
  const RunInputs inputs = load_run_inputs(cfg);
  RunSummary summary;
  auto channel = make_channel(cfg, inputs.bundle);
  const auto slots = interpret_samples(cfg, inputs.bundle, channel.get(), summary);
  channel.reset();

  std::ofstream file;
  if (!f.output.empty()) {
    file.open(f.output, std::ios::binary | std::ios::trunc);
    if (!file) throw Error(ErrorCode::IoFailure, "cannot open '" + f.output + "' for writing");
  }
  std::ostream& out = f.output.empty() ? std::cout : file;
  for (const auto& slot : slots) {
    if (!slot) continue;
    out << attribution_to_json(*slot, inputs.bundle.manifest().feature_names).dump() << "\n";
    ++summary.samples_processed;
  }
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed");
  return finish(summary, f.quiet);
}

int cmd_narrate(const Flags& f) {
  const RunConfig cfg = config_from(f);
  const RunInputs inputs = load_run_inputs(cfg);
  std::ifstream in(f.input);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open attributions '" + f.input + "'");
  std::vector<AttributionList> attributions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      attributions.push_back(attribution_from_json(json::parse(line), inputs.bundle.manifest().feature_names));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::SchemaViolation, f.input + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  RunSummary summary;
  const auto records = narrate_samples(cfg, inputs, attributions, summary);
  write_output(cfg, records);
  return finish(summary, f.quiet);
}

int cmd_export(const Flags& f) {
  std::ifstream in(f.input);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open records '" + f.input + "'");
  const auto records = read_records_jsonl(in);
  RunConfig cfg;
  const RunOverrides o = overrides_from(f);
  if (o.format) cfg.format = *o.format;
  if (o.output) cfg.output = *o.output;
  write_output(cfg, records);
  return kOk;
}

int cmd_run(const Flags& f) {
  const RunConfig cfg = config_from(f);
  return finish(run_pipeline(cfg), f.quiet);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crystal: narrative explanations for model predictions"};
  app.require_subcommand(1);
  Flags flags;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config,-c", flags.config, "run config (JSON)")->required()->check(CLI::ExistingFile);
  };
  auto add_output = [&](CLI::App* sub) { sub->add_option("--output,-o", flags.output, "output path (default stdout)"); };
  auto add_quiet = [&](CLI::App* sub) { sub->add_flag("--quiet,-q", flags.quiet, "no summary on stderr"); };
  auto add_interpreter = [&](CLI::App* sub) {
    sub->add_option("--method", flags.method, "lime | kernel_shap | exact_shap | klime");
    sub->add_option("--seed", flags.seed, "random seed");
    sub->add_option("--workers", flags.workers, "worker threads for in-process models");
  };
  auto add_engine = [&](CLI::App* sub) {
    sub->add_option("--format", flags.format, "jsonl | markdown | html | text_email");
    sub->add_option("--dedup-k", flags.dedup_k, "narratives kept per ultra-feature");
    sub->add_option("--max-narratives", flags.max_narratives, "narratives kept per sample");
    sub->add_flag("--concatenate", flags.concatenate, "merge narratives into paragraphs by category");
  };

  CLI::App* validate = app.add_subcommand("validate", "check config, bundle and insights design");
  add_config(validate);
  add_quiet(validate);

  CLI::App* interpret = app.add_subcommand("interpret", "write attributions as jsonl");
  add_config(interpret);
  add_interpreter(interpret);
  add_output(interpret);
  add_quiet(interpret);

  CLI::App* narrate = app.add_subcommand("narrate", "turn attributions jsonl into narratives");
  add_config(narrate);
  narrate->add_option("--attributions,-a", flags.input, "attributions jsonl")->required();
  add_engine(narrate);
  add_output(narrate);
  add_quiet(narrate);

  CLI::App* exporter = app.add_subcommand("export", "convert records jsonl to another format");
  exporter->add_option("--input,-i", flags.input, "records jsonl")->required();
  exporter->add_option("--format", flags.format, "jsonl | markdown | html | text_email")->required();
  add_output(exporter);

  CLI::App* run = app.add_subcommand("run", "full pipeline");
  add_config(run);
  add_interpreter(run);
  add_engine(run);
  add_output(run);
  add_quiet(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*validate) return cmd_validate(flags);
    if (*interpret) return cmd_interpret(flags);
    if (*narrate) return cmd_narrate(flags);
    if (*exporter) return cmd_export(flags);
    return cmd_run(flags);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? kValidation : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

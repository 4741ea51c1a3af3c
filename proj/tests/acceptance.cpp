// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Every model is an in-process synthetic channel.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "crystal/exporter.hpp"
#include "crystal/interpreter.hpp"
#include "crystal/narrative_engine.hpp"
#include "crystal/pipeline.hpp"
#include "support/gen.hpp"
#include "support/random_inputs.hpp"
#include "support/temp_dir.hpp"

using namespace crystal;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// --- shared inputs -----------------------------------------------------------------

const std::vector<std::string> kSlotFeatures{"job_qty",     "job_dprice_usd", "job_view_s3",
                                             "job_view_s4", "job_viewer_s3",  "job_viewer_s4"};

InsightsDesign slot_design() {
  const DatasetManifest m = support::manifest_of(kSlotFeatures, 1);
  InsightsDesign d;
  d.info = parse_feature_info_text(
      "Original-Feature,Super-Feature,Ultra-Feature,Category,Insight Type,Insight Item,Insight Weight\n"
      "job_qty,job slots,job slots,purchase,quantity,quantity_num,1\n"
      "job_dprice_usd,job slots,job slots,purchase,quantity,total_price,1\n"
      "job_view_s3,views per job,job view,engagement,value_change,prev_value,1\n"
      "job_view_s4,views per job,job view,engagement,value_change,current_value,1\n"
      "job_viewer_s3,viewers per job,job view,engagement,value_change,prev_value,1\n"
      "job_viewer_s4,viewers per job,job view,engagement,value_change,current_value,1\n",
      m);
  d.templates = parse_templates_text(R"({
    "quantity": {"text": "Purchased {quantity_num} {super_name} for ${total_price}."},
    "value_change": {
      "text": "{super_name} changed from {prev_value} to {current_value}{percent_change} in the last month.",
      "extra_items": [{"name": "percent_change", "expression": "(current_value-prev_value)/prev_value*100",
                       "format": "signed_percent"}]
    }
  })");
  d.mapping = build_super_feature_mapping(d.info, d.templates, m);
  return d;
}

DatasetBundle bundle_of(const std::vector<std::vector<double>>& rows,
                        const std::function<double(const std::vector<double>&)>& f) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < rows.front().size(); ++j) names.push_back("f" + std::to_string(j));
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < rows.size(); ++i) samples.push_back({"s" + std::to_string(i), rows[i], f(rows[i])});
  return DatasetBundle(support::manifest_of(names, rows.size()), std::move(samples));
}

std::vector<double> dense(const AttributionList& attr, std::size_t d) {
  std::vector<double> out(d, std::nan(""));
  for (const auto& e : attr.entries) out.at(e.feature_index) = e.importance;
  return out;
}

// Runs body(rng) for kCases seeded cases; stops at the first failure.
void for_cases(Outcome& o, const std::string& suite, std::uint64_t base,
               const std::function<bool(gen::Rng&)>& body) {
  for (std::size_t i = 0; i < gen::kCases && o.pass; ++i) {
    const std::uint64_t seed = gen::case_seed(base, i);
    gen::Rng rng(seed);
    o.require(body(rng), suite + " failed at case " + std::to_string(i) + " (seed " + std::to_string(seed) + ")");
  }
}

// --- criteria ------------------------------------------------------------------------

Outcome ranking_golden() {
  Outcome o;
  const InsightsDesign d = slot_design();
  AttributionList attr;
  const std::vector<double> imp{0.3, 0.4, 0.2, 0.6, 0.3, 0.2};
  for (std::size_t i = 0; i < imp.size(); ++i) attr.entries.push_back({i, imp[i]});
  EngineConfig cfg;
  cfg.dedup_k = 1;

  const auto start = Clock::now();
  const auto ranked = rank_super_features(d.mapping, attr, cfg);
  const double elapsed = ms_since(start);

  std::vector<std::pair<std::string, double>> got;
  for (const auto& r : ranked) got.emplace_back(d.mapping.supers[r.super_index].name, r.importance);
  const std::vector<std::pair<std::string, double>> want{{"views per job", 0.6}, {"job slots", 0.4}};
  o.require(got == want, "ranking differs from [views per job 0.6, job slots 0.4]");
  o.require(elapsed < 1.0, "took " + fmt(elapsed) + " ms");
  o.detail = o.pass ? "ranking in " + fmt(elapsed) + " ms (limit 1 ms)" : o.detail;
  return o;
}

Outcome end_to_end_golden() {
  Outcome o;
  const auto start = Clock::now();
  const RunResult result = execute(load_run_config(fs::path(FIXTURE_DIR) / "jobs_upsell" / "config.json"));
  const double elapsed = ms_since(start);
  o.require(result.records.size() == 1, "expected one record");
  if (!o.pass) return o;
  const auto& rec = result.records[0];
  const std::string sentence = "Views per job changed from 200 to 300 (+50%) in the last month.";
  bool found = false;
  for (const auto& n : rec.narratives) found = found || n.text == sentence;
  o.require(found, "sentence missing");
  o.require(rec.headline.find("larger than 98% of all accounts") != std::string::npos,
            "headline was: " + rec.headline);
  o.require(elapsed < 1000.0, "took " + fmt(elapsed) + " ms");
  o.detail = o.pass ? "load, interpret, narrate in " + fmt(elapsed) + " ms (limit 1000 ms)" : o.detail;
  return o;
}

Outcome formatting_suite() {
  Outcome o;
  const InsightsDesign d = slot_design();
  const auto& views = d.mapping.supers[1];
  const auto percent_clause = [&](double prev, double current) {
    Sample s{"A", {30, 6000, prev, current, 1, 1}, 0.5};
    const auto items = collect_item_values(d.mapping, 1, s, nullptr);
    const std::string text = render_narrative(d.mapping.template_for(views), views.name, items);
    const std::string head = "Views per job changed from " + format_number(prev) + " to " + format_number(current);
    const std::string tail = " in the last month.";
    if (text.rfind(head, 0) != 0 || text.size() < head.size() + tail.size()) return std::string("<malformed>");
    return text.substr(head.size(), text.size() - head.size() - tail.size());
  };
  const std::vector<std::tuple<double, double, std::string>> cases{
      {100, 150, " (+50%)"}, {4, 2, " (-50%)"}, {0, 4, ""}, {0, 0, " (+0%)"}};
  for (const auto& [prev, current, want] : cases) {
    const std::string got = percent_clause(prev, current);
    o.require(got == want, fmt(prev) + "->" + fmt(current) + " gave '" + got + "'");
  }
  if (o.pass) o.detail = "4 cases";
  return o;
}

Outcome shapley_equivalence() {
  Outcome o;
  const auto start = Clock::now();
  double worst_gap = 0.0;
  double worst_efficiency = 0.0;
  gen::Rng rng(0x5a9);
  for (std::size_t m = 0; m < 50 && o.pass; ++m) {
    const std::size_t d = 3 + m % 8;
    auto model = StumpEnsembleChannel::random(d, 4 + rng.index(20), rng.next());
    std::vector<std::vector<double>> rows(12);
    for (auto& r : rows) r = rng.vector(d, 0, 1);
    const auto bundle = bundle_of(rows, [&](const std::vector<double>& x) { return model.evaluate(x); });
    InterpreterConfig cfg;
    cfg.n_perturbations = std::size_t{1} << d;  // enough to enumerate every coalition
    const std::string id = "s" + std::to_string(rng.index(rows.size()));
    const auto kernel = kernel_shap_explain(bundle, id, model, cfg);
    const auto exact = exact_shap_explain(bundle, id, model, resolve_background(bundle, cfg));
    const auto k = dense(kernel, d);
    const auto e = dense(exact, d);
    const double fx = model.evaluate(bundle.sample(id).features);
    for (std::size_t j = 0; j < d; ++j) worst_gap = std::max(worst_gap, std::abs(k[j] - e[j]));
    worst_efficiency = std::max({worst_efficiency,
                                 std::abs(std::accumulate(k.begin(), k.end(), 0.0) - (fx - kernel.baseline)),
                                 std::abs(std::accumulate(e.begin(), e.end(), 0.0) - (fx - exact.baseline))});
    o.require(worst_gap <= 1e-6, "model " + std::to_string(m) + ": kernel vs exact gap " + fmt(worst_gap));
    o.require(worst_efficiency <= 1e-9, "model " + std::to_string(m) + ": efficiency gap " + fmt(worst_efficiency));
  }
  const double elapsed = ms_since(start);
  o.require(elapsed < 60000.0, "took " + fmt(elapsed) + " ms");
  if (o.pass) {
    o.detail = "50 models, max gap " + fmt(worst_gap) + ", max efficiency error " + fmt(worst_efficiency) + ", " +
               fmt(elapsed) + " ms (limit 60000 ms)";
  }
  return o;
}

Outcome lime_linear_recovery() {
  Outcome o;
  // Features 0 and 1 share the same values in a different order, so their
  // perturbation scales match and the ratio is the coefficient ratio.
  gen::Rng rng(0x11e);
  std::vector<double> base = rng.vector(200, 0, 10);
  std::vector<double> shuffled = base;
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < base.size(); ++i) rows.push_back({base[i], shuffled[i], rng.uniform(0, 10)});
  const auto f = [](const std::vector<double>& x) { return 3 * x[0] + x[1] + 0 * x[2]; };
  const auto bundle = bundle_of(rows, f);
  LinearChannel model({3.0, 1.0, 0.0});
  InterpreterConfig cfg;
  cfg.n_perturbations = 5000;
  cfg.rng_seed = 42;

  const auto start = Clock::now();
  const auto imp = dense(lime_explain(bundle, "s0", model, cfg), 3);
  const double elapsed = ms_since(start);
  const double ratio = imp[0] / imp[1];
  const double biggest = std::max({std::abs(imp[0]), std::abs(imp[1]), std::abs(imp[2])});
  o.require(std::abs(ratio - 3.0) <= 0.15, "ratio " + fmt(ratio));
  o.require(std::abs(imp[2]) < 0.01 * biggest, "feature 2 importance " + fmt(imp[2]));
  o.require(elapsed < 10000.0, "took " + fmt(elapsed) + " ms");
  if (o.pass) {
    o.detail = "ratio " + fmt(ratio) + ", |f2|/max " + fmt(std::abs(imp[2]) / biggest) + ", " + fmt(elapsed) +
               " ms (limit 10000 ms)";
  }
  return o;
}

Outcome property_suites() {
  Outcome o;
  for_cases(o, "argsort invariance", 0xa1, [](gen::Rng& rng) {
    const auto r = support::random_design(rng);
    const auto attr = support::random_attribution(rng, r.manifest.feature_names.size());
    EngineConfig cfg;
    cfg.dedup_k = 1 + rng.index(3);
    cfg.max_narratives = 1 + rng.index(6);
    const double c = std::exp(rng.uniform(-5, 5));
    AttributionList scaled = attr;
    for (auto& e : scaled.entries) e.importance *= c;
    const auto a = rank_super_features(r.design.mapping, attr, cfg);
    const auto b = rank_super_features(r.design.mapping, scaled, cfg);
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].super_index != b[i].super_index) return false;
    }
    return true;
  });
  for_cases(o, "dedup cardinality", 0xa2, [](gen::Rng& rng) {
    const auto r = support::random_design(rng);
    const auto attr = support::random_attribution(rng, r.manifest.feature_names.size());
    const std::size_t k = 1 + rng.index(3);
    const auto kept =
        deduplicate(r.design.mapping, score_super_features(r.design.mapping, attr, RankingKey::Signed), k);
    std::map<std::string, std::size_t> count;
    for (const auto& s : kept) {
      if (++count[r.design.mapping.supers[s.super_index].ultra_feature] > k) return false;
    }
    return true;
  });
  for_cases(o, "rendering totality", 0xa3, [](gen::Rng& rng) {
    const auto r = support::random_design(rng);
    Sample sample{"s", rng.vector(r.manifest.feature_names.size(), -1e6, 1e6), 0.0};
    const auto values = collect_super_values(r.design.mapping, sample, nullptr);
    for (std::size_t s = 0; s < r.design.mapping.supers.size(); ++s) {
      const auto& super = r.design.mapping.supers[s];
      if (values[s].missing) return false;
      const std::string text = render_narrative(r.design.mapping.template_for(super), super.name, values[s].items);
      if (text.find_first_of("{}") != std::string::npos) return false;
    }
    return true;
  });
  for_cases(o, "jsonl round trip", 0xa4, [](gen::Rng& rng) {
    std::vector<ExplanationRecord> records;
    const std::size_t n = rng.index(4);
    for (std::size_t i = 0; i < n; ++i) records.push_back(support::random_record(rng));
    std::ostringstream out;
    export_records(records, ExportFormat::Jsonl, out);
    std::istringstream in(out.str());
    return read_records_jsonl(in) == records;
  });
  support::TempDir dir;
  for_cases(o, "bundle round trip", 0xa5, [&](gen::Rng& rng) {
    const DatasetBundle original = support::random_bundle(rng);
    save_bundle(original, dir.path() / "manifest.json");
    return load_bundle(dir.path() / "manifest.json") == original;
  });
  if (o.pass) o.detail = "5 suites x " + std::to_string(gen::kCases) + " cases";
  return o;
}

Outcome klime_single_cluster() {
  Outcome o;
  gen::Rng rng(2024);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 1000; ++i) rows.push_back(rng.vector(3, 0, 100));
  const std::vector<double> truth{2.0, -3.0, 0.5};
  const auto bundle = bundle_of(rows, [&](const std::vector<double>& x) {
    return 5.0 + truth[0] * x[0] + truth[1] * x[1] + truth[2] * x[2];
  });
  const auto result = klime_explain(bundle, InterpreterConfig{}, 1);
  o.require(result.clusters.size() == 1, "expected one cluster");
  if (!o.pass) return o;
  double worst = 0.0;
  for (std::size_t j = 0; j < 3; ++j) worst = std::max(worst, std::abs(result.clusters[0].coefficients[j] - truth[j]));
  o.require(worst <= 1e-6, "coefficient error " + fmt(worst));
  if (o.pass) o.detail = "max coefficient error " + fmt(worst);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"ranking golden (dedup K=1)", ranking_golden},
      {"end-to-end jobs upsell golden", end_to_end_golden},
      {"percent formatting suite", formatting_suite},
      {"kernel SHAP matches exact Shapley", shapley_equivalence},
      {"LIME linear recovery", lime_linear_recovery},
      {"property suites", property_suites},
      {"K-LIME single-cluster recovery", klime_single_cluster},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <doctest.h>

#include "crystal/error.hpp"
#include "crystal/interpreter.hpp"
#include "support/gen.hpp"

using namespace crystal;

namespace {

DatasetBundle make_bundle(const std::vector<std::vector<double>>& rows,
                          const std::function<double(const std::vector<double>&)>& f) {
  DatasetManifest m;
  for (std::size_t j = 0; j < rows.front().size(); ++j) m.feature_names.push_back("f" + std::to_string(j));
  m.sample_count = rows.size();
  m.samples_path = "samples.jsonl";
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < rows.size(); ++i) samples.push_back({"s" + std::to_string(i), rows[i], f(rows[i])});
  return DatasetBundle(std::move(m), std::move(samples));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected crystal::Error");
  return ErrorCode::IoFailure;
}

std::vector<double> importances(const AttributionList& attr, std::size_t d) {
  std::vector<double> out(d, std::nan(""));
  for (const auto& e : attr.entries) out.at(e.feature_index) = e.importance;
  return out;
}

// Dense solve by Gaussian elimination with partial pivoting, long double.
std::vector<double> gauss_solve(std::vector<std::vector<long double>> a, std::vector<long double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const long double factor = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    long double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
    x[i] = static_cast<double>(s / a[i][i]);
  }
  return x;
}

// Weighted least squares with an intercept column; returns [intercept, b1..bd].
std::vector<double> wls_with_intercept(const std::vector<std::vector<double>>& z, const std::vector<double>& y,
                                       const std::vector<double>& w) {
  const std::size_t p = z.front().size() + 1;
  std::vector<std::vector<long double>> a(p, std::vector<long double>(p, 0.0L));
  std::vector<long double> b(p, 0.0L);
  for (std::size_t r = 0; r < z.size(); ++r) {
    std::vector<long double> row{1.0L};
    for (double v : z[r]) row.push_back(v);
    for (std::size_t i = 0; i < p; ++i) {
      b[i] += w[r] * row[i] * y[r];
      for (std::size_t j = 0; j < p; ++j) a[i][j] += w[r] * row[i] * row[j];
    }
  }
  return gauss_solve(a, b);
}

double sample_stddev(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Shapley values by averaging marginal contributions over all orderings.
std::vector<double> permutation_shapley(const std::function<double(const std::vector<double>&)>& f,
                                        const std::vector<double>& x,
                                        const std::vector<std::vector<double>>& background) {
  const std::size_t d = x.size();
  auto value = [&](const std::vector<bool>& present) {
    double total = 0.0;
    for (const auto& bg : background) {
      std::vector<double> row = bg;
      for (std::size_t j = 0; j < d; ++j) {
        if (present[j]) row[j] = x[j];
      }
      total += f(row);
    }
    return total / static_cast<double>(background.size());
  };
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(d, 0.0);
  std::size_t count = 0;
  do {
    std::vector<bool> present(d, false);
    double prev = value(present);
    for (std::size_t j : order) {
      present[j] = true;
      const double next = value(present);
      phi[j] += next - prev;
      prev = next;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& p : phi) p /= static_cast<double>(count);
  return phi;
}

std::vector<std::vector<double>> random_rows(gen::Rng& rng, std::size_t n, std::size_t d) {
  std::vector<std::vector<double>> rows(n);
  for (auto& r : rows) r = rng.vector(d, 0, 1);
  return rows;
}

RowMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
  RowMatrix m(rows.front().size());
  for (const auto& r : rows) m.append_row(r);
  return m;
}

}  // namespace

TEST_SUITE("attribution lists") {
  TEST_CASE("signed ordering, ties by feature index") {
    // Scores from the ranking example (job_qty .. job_viewer_s4).
    std::vector<AttributionEntry> entries{{0, 0.3}, {1, 0.4}, {2, 0.2}, {3, 0.6}, {4, 0.3}, {5, 0.2}};
    sort_entries(entries, RankingKey::Signed);
    std::vector<std::size_t> order;
    for (const auto& e : entries) order.push_back(e.feature_index);
    CHECK(order == std::vector<std::size_t>{3, 1, 0, 4, 2, 5});
  }

  TEST_CASE("absolute ordering") {
    std::vector<AttributionEntry> entries{{0, 0.1}, {1, -0.5}, {2, 0.4}, {3, -0.1}};
    sort_entries(entries, RankingKey::Absolute);
    std::vector<std::size_t> order;
    for (const auto& e : entries) order.push_back(e.feature_index);
    CHECK(order == std::vector<std::size_t>{1, 2, 0, 3});
  }

  TEST_CASE("top features of the upsell model output") {
    AttributionList attr;
    attr.entries = {{5, 0.002}, {10, 0.009}, {1, 0.030}, {4, 0.013}, {9, 0.011}, {0, -0.004}};
    sort_entries(attr.entries, RankingKey::Signed);
    const auto top = top_features(attr, 4);
    REQUIRE(top.entries.size() == 4);
    // paid_job_s4, job_view_s4, hire_cntr_s3, conn_cmp_s4
    CHECK(top.entries[0] == AttributionEntry{1, 0.030});
    CHECK(top.entries[1] == AttributionEntry{4, 0.013});
    CHECK(top.entries[2] == AttributionEntry{9, 0.011});
    CHECK(top.entries[3] == AttributionEntry{10, 0.009});
    CHECK(top_features(attr, 50).entries.size() == attr.entries.size());
    CHECK(code_of([&] { top_features(attr, 0); }) == ErrorCode::InvalidConfig);
  }

  TEST_CASE("property: sorting is a stable permutation, invariant under positive scaling") {
    gen::for_all(0x50f7, [](gen::Rng& rng) {
      const std::size_t d = rng.index(25);
      std::vector<AttributionEntry> entries;
      std::vector<double> pool{-1.0, 0.0, 0.5, 2.0};
      for (std::size_t j = 0; j < d; ++j) {
        entries.push_back({j, rng.coin(0.3) ? rng.pick(pool) : rng.uniform(-3, 3)});
      }
      for (std::size_t j = 0; j + 1 < d; ++j) std::swap(entries[j], entries[j + rng.index(d - j)]);
      const RankingKey key = rng.coin() ? RankingKey::Signed : RankingKey::Absolute;
      auto sorted = entries;
      sort_entries(sorted, key);
      REQUIRE(sorted.size() == d);
      for (std::size_t j = 0; j + 1 < sorted.size(); ++j) {
        const double a = key == RankingKey::Signed ? sorted[j].importance : std::abs(sorted[j].importance);
        const double b = key == RankingKey::Signed ? sorted[j + 1].importance : std::abs(sorted[j + 1].importance);
        CHECK(a >= b);
        if (a == b) CHECK(sorted[j].feature_index < sorted[j + 1].feature_index);
      }
      // Same order after multiplying every importance by c > 0.
      const double c = std::exp(rng.uniform(-5, 5));
      auto scaled = entries;
      for (auto& e : scaled) e.importance *= c;
      sort_entries(scaled, key);
      for (std::size_t j = 0; j < d; ++j) CHECK(scaled[j].feature_index == sorted[j].feature_index);
    });
  }

  TEST_CASE("config validation") {
    InterpreterConfig cfg;
    CHECK_NOTHROW(validate(cfg, 3));
    cfg.n_perturbations = 0;
    CHECK(code_of([&] { validate(cfg, 3); }) == ErrorCode::InvalidConfig);
    cfg = {};
    cfg.kernel_width = -1.0;
    CHECK(code_of([&] { validate(cfg, 3); }) == ErrorCode::InvalidConfig);
    cfg = {};
    cfg.ridge_lambda = -1e-3;
    CHECK(code_of([&] { validate(cfg, 3); }) == ErrorCode::InvalidConfig);
    cfg = {};
    cfg.background = RowMatrix(2, 2, 0.0);
    CHECK(code_of([&] { validate(cfg, 3); }) == ErrorCode::InvalidConfig);
    CHECK(parse_method("kernel_shap") == AttributionMethod::KernelShap);
    CHECK(!parse_method("shap"));
    CHECK(method_name(AttributionMethod::KLime) == "klime");
  }
}

TEST_SUITE("lime") {
  // Features 0 and 1 take the same multiset of values, so equal spread.
  const std::vector<std::vector<double>> kRows{{1, 1, 0}, {0, 1, 5}, {1, 0, 7}, {2, 3, 1}, {3, 2, 9}};

  TEST_CASE("irrelevant feature gets no weight") {
    const auto f = [](const std::vector<double>& x) { return 2 * x[0] + 0 * x[1]; };
    const auto bundle = make_bundle({{1, 1}, {0, 1}, {1, 0}, {2, 3}, {3, 2}}, f);
    LinearChannel channel({2.0, 0.0});
    InterpreterConfig cfg;
    cfg.rng_seed = 7;
    for (const auto& s : bundle.samples()) {
      const auto imp = importances(lime_explain(bundle, s.sample_id, channel, cfg), 2);
      CHECK(std::abs(imp[1]) < 1e-6);
      CHECK(imp[0] > 0.0);
    }
  }

  TEST_CASE("constant model is degenerate") {
    const auto bundle = make_bundle(kRows, [](const std::vector<double>&) { return 0.4; });
    LinearChannel channel({0.0, 0.0, 0.0}, 0.4);
    const auto attr = lime_explain(bundle, "s0", channel, InterpreterConfig{});
    CHECK(attr.degenerate);
    CHECK(attr.baseline == 0.4);
    REQUIRE(attr.entries.size() == 3);
    for (const auto& e : attr.entries) CHECK(e.importance == 0.0);
  }

  TEST_CASE("matches a hand-solved weighted least squares on the same design") {
    const auto f = [](const std::vector<double>& x) { return 3 * x[0] + x[1]; };
    const auto bundle = make_bundle(kRows, f);
    std::vector<std::vector<double>> seen;
    FunctionChannel recorder([&](std::span<const double> x) {
      seen.emplace_back(x.begin(), x.end());
      return 3 * x[0] + x[1];
    });
    InterpreterConfig cfg;
    cfg.ridge_lambda = 0.0;
    cfg.rng_seed = 3;
    const auto attr = lime_explain(bundle, "s0", recorder, cfg);
    REQUIRE(seen.size() == cfg.n_perturbations);

    // Rebuild the standardized design from the rows the model was asked about.
    std::vector<double> sd(3);
    for (std::size_t j = 0; j < 3; ++j) {
      std::vector<double> col;
      for (const auto& r : kRows) col.push_back(r[j]);
      sd[j] = sample_stddev(col);
    }
    const std::vector<double>& x = kRows[0];
    const double width = 0.75 * std::sqrt(3.0);
    std::vector<std::vector<double>> z;
    std::vector<double> y, w;
    for (const auto& row : seen) {
      std::vector<double> zr(3);
      double dist2 = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        zr[j] = (row[j] - x[j]) / sd[j];
        dist2 += zr[j] * zr[j];
      }
      z.push_back(zr);
      y.push_back(3 * row[0] + row[1]);
      w.push_back(std::sqrt(std::exp(-dist2 / (width * width))));
    }
    CHECK(z.front() == std::vector<double>{0, 0, 0});
    const auto beta = wls_with_intercept(z, y, w);
    const auto imp = importances(attr, 3);
    CHECK(attr.baseline == doctest::Approx(beta[0]).epsilon(1e-9));
    for (std::size_t j = 0; j < 3; ++j) CHECK(imp[j] == doctest::Approx(beta[j + 1]).epsilon(1e-9).scale(1.0));
    // Equal spread for features 0 and 1, so the ratio is the coefficient ratio.
    CHECK(sd[0] == doctest::Approx(sd[1]));
    CHECK(imp[0] / imp[1] == doctest::Approx(3.0).epsilon(0.05));
  }

  TEST_CASE("deterministic per seed") {
    const auto bundle = make_bundle(kRows, [](const std::vector<double>& x) { return std::sin(x[0]) + x[2]; });
    FunctionChannel f([](std::span<const double> x) { return std::sin(x[0]) + x[2]; });
    InterpreterConfig cfg;
    cfg.n_perturbations = 300;
    cfg.rng_seed = 11;
    const auto a = lime_explain(bundle, "s2", f, cfg);
    CHECK(lime_explain(bundle, "s2", f, cfg) == a);
    cfg.rng_seed = 12;
    CHECK(lime_explain(bundle, "s2", f, cfg) != a);
  }

  TEST_CASE("errors") {
    const auto single = make_bundle({{1, 2}}, [](const std::vector<double>&) { return 0.0; });
    LinearChannel ch({1, 1});
    CHECK(code_of([&] { lime_explain(single, "s0", ch, {}); }) == ErrorCode::InsufficientSamples);
    const auto bundle = make_bundle(kRows, [](const std::vector<double>&) { return 0.0; });
    LinearChannel ch3({1, 1, 1});
    CHECK(code_of([&] { lime_explain(bundle, "zz", ch3, {}); }) == ErrorCode::UnknownSampleId);
  }
}

TEST_SUITE("shapley") {
  TEST_CASE("symmetric features split the credit evenly") {
    const auto bundle = make_bundle({{1, 1}, {0, 0}, {-1, -1}}, [](const std::vector<double>& x) { return x[0] + x[1]; });
    LinearChannel ch({1, 1});
    InterpreterConfig cfg;
    const auto kernel = kernel_shap_explain(bundle, "s0", ch, cfg);
    const auto imp = importances(kernel, 2);
    CHECK(imp[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(imp[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(kernel.baseline == 0.0);
  }

  TEST_CASE("exact matches the permutation definition for three features") {
    gen::for_all(0x3f3, [](gen::Rng& rng) {
      auto ens = StumpEnsembleChannel::random(3, 1 + rng.index(6), rng.next());
      const auto f = [&](const std::vector<double>& x) { return ens.evaluate(x); };
      const auto rows = random_rows(rng, 6, 3);
      const auto bundle = make_bundle(rows, f);
      const std::size_t n_bg = 1 + rng.index(3);
      const auto background = random_rows(rng, n_bg, 3);
      const auto attr = exact_shap_explain(bundle, "s0", ens, to_matrix(background));
      const auto expected = permutation_shapley(f, rows[0], background);
      const auto got = importances(attr, 3);
      double mean_bg = 0.0;
      for (const auto& b : background) mean_bg += f(b);
      mean_bg /= static_cast<double>(n_bg);
      CHECK(attr.baseline == doctest::Approx(mean_bg).epsilon(1e-12));
      for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(got[j] - expected[j]) < 1e-12);
    }, 300);
  }

  TEST_CASE("kernel enumeration agrees with exact and is efficient") {
    gen::for_all(0x4e4, [](gen::Rng& rng) {
      const std::size_t d = 2 + rng.index(7);
      auto ens = StumpEnsembleChannel::random(d, 2 + rng.index(10), rng.next());
      const auto bundle = make_bundle(random_rows(rng, 8, d), [&](const std::vector<double>& x) { return ens.evaluate(x); });
      InterpreterConfig cfg;
      cfg.n_perturbations = 5000;
      const auto kernel = kernel_shap_explain(bundle, "s1", ens, cfg);
      const auto exact = exact_shap_explain(bundle, "s1", ens, resolve_background(bundle, cfg));
      const auto k = importances(kernel, d);
      const auto e = importances(exact, d);
      const double fx = ens.evaluate(bundle.sample("s1").features);
      CHECK(kernel.baseline == doctest::Approx(exact.baseline).epsilon(1e-12));
      for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(k[j] - e[j]) < 1e-6);
      CHECK(std::abs(std::accumulate(k.begin(), k.end(), 0.0) - (fx - kernel.baseline)) < 1e-9);
      CHECK(std::abs(std::accumulate(e.begin(), e.end(), 0.0) - (fx - exact.baseline)) < 1e-9);
    }, 150);
  }

  TEST_CASE("additive model: attributions are coefficient times offset") {
    gen::for_all(0xadd, [](gen::Rng& rng) {
      const std::size_t d = 1 + rng.index(14);
      const auto coefs = rng.vector(d, -2, 2);
      LinearChannel ch(coefs, rng.uniform(-1, 1));
      const auto rows = random_rows(rng, 5, d);
      const auto bundle = make_bundle(rows, [&](const std::vector<double>& x) { return ch.evaluate(x); });
      InterpreterConfig cfg;
      cfg.n_perturbations = 200;  // forces the sampled path once d >= 8
      cfg.rng_seed = rng.next();
      const auto means = bundle.feature_means();
      const auto k = importances(kernel_shap_explain(bundle, "s0", ch, cfg), d);
      for (std::size_t j = 0; j < d; ++j) {
        CHECK(std::abs(k[j] - coefs[j] * (rows[0][j] - means[j])) < 1e-8);
      }
      if (d <= 10) {
        const auto e = importances(exact_shap_explain(bundle, "s0", ch, resolve_background(bundle, cfg)), d);
        for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(e[j] - coefs[j] * (rows[0][j] - means[j])) < 1e-10);
      }
    }, 120);
  }

  TEST_CASE("sampled kernel path stays efficient") {
    gen::Rng rng(99);
    const std::size_t d = 12;
    auto ens = StumpEnsembleChannel::random(d, 20, 5);
    const auto bundle = make_bundle(random_rows(rng, 10, d), [&](const std::vector<double>& x) { return ens.evaluate(x); });
    InterpreterConfig cfg;
    cfg.n_perturbations = 800;
    const auto attr = kernel_shap_explain(bundle, "s3", ens, cfg);
    const auto k = importances(attr, d);
    const double fx = ens.evaluate(bundle.sample("s3").features);
    CHECK(std::abs(std::accumulate(k.begin(), k.end(), 0.0) - (fx - attr.baseline)) < 1e-9);
    CHECK(kernel_shap_explain(bundle, "s3", ens, cfg) == attr);
  }

  TEST_CASE("single feature") {
    const auto bundle = make_bundle({{2}, {4}}, [](const std::vector<double>& x) { return 3 * x[0]; });
    LinearChannel ch({3});
    const auto attr = kernel_shap_explain(bundle, "s0", ch, {});
    CHECK(importances(attr, 1)[0] == doctest::Approx(-3.0));
    CHECK(attr.baseline == doctest::Approx(9.0));
  }

  TEST_CASE("exact refuses more than twenty features") {
    std::vector<std::vector<double>> rows(2, std::vector<double>(21, 0.0));
    rows[1][0] = 1.0;
    const auto bundle = make_bundle(rows, [](const std::vector<double>&) { return 0.0; });
    LinearChannel ch(std::vector<double>(21, 0.0));
    CHECK(code_of([&] { exact_shap_explain(bundle, "s0", ch, RowMatrix(1, 21, 0.0)); }) ==
          ErrorCode::TooManyFeatures);
  }
}

TEST_SUITE("klime") {
  TEST_CASE("one cluster recovers a global linear model") {
    gen::Rng rng(2024);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 1000; ++i) rows.push_back(rng.vector(3, 0, 100));
    const auto f = [](const std::vector<double>& x) { return 5.0 + 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2]; };
    const auto bundle = make_bundle(rows, f);
    const auto result = klime_explain(bundle, InterpreterConfig{}, 1);
    REQUIRE(result.clusters.size() == 1);
    const auto& c = result.clusters[0];
    CHECK(std::abs(c.coefficients[0] - 2.0) < 1e-6);
    CHECK(std::abs(c.coefficients[1] + 3.0) < 1e-6);
    CHECK(std::abs(c.coefficients[2] - 0.5) < 1e-6);
    CHECK(std::abs(c.intercept - 5.0) < 1e-4);
    CHECK(c.r_squared == doctest::Approx(1.0));
    CHECK(c.member_count == 1000);
    // Local contribution is coefficient times offset from the cluster mean.
    const auto& a = result.attributions[17];
    const auto imp = importances(a, 3);
    double total = a.baseline;
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(imp[j] == doctest::Approx(c.coefficients[j] * (rows[17][j] - c.feature_means[j])));
      total += imp[j];
    }
    double surrogate = c.intercept;
    for (std::size_t j = 0; j < 3; ++j) surrogate += c.coefficients[j] * rows[17][j];
    CHECK(total == doctest::Approx(surrogate).epsilon(1e-12));
    CHECK(total == doctest::Approx(f(rows[17])).epsilon(1e-6));
  }

  TEST_CASE("two separated blobs get their own surrogates") {
    gen::Rng rng(8);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 200; ++i) {
      const bool far = i % 2 == 1;
      rows.push_back({rng.uniform(0, 1) + (far ? 50 : 0), rng.uniform(0, 1) + (far ? 50 : 0)});
    }
    const auto f = [](const std::vector<double>& x) { return x[0] < 25 ? 4 * x[0] + x[1] : -x[0] + 2 * x[1]; };
    const auto result = klime_explain(make_bundle(rows, f), InterpreterConfig{}, 2);
    REQUIRE(result.assignment.size() == 200);
    for (std::size_t i = 2; i < 200; ++i) CHECK(result.assignment[i] == result.assignment[i % 2]);
    const auto& near = result.clusters[result.assignment[0]];
    const auto& far = result.clusters[result.assignment[1]];
    CHECK(near.member_count == 100);
    CHECK(near.coefficients[0] == doctest::Approx(4.0).epsilon(1e-3));
    CHECK(far.coefficients[1] == doctest::Approx(2.0).epsilon(1e-3));
  }

  TEST_CASE("a lone member cannot be fitted") {
    const auto bundle = make_bundle({{0.0}, {0.1}, {100.0}}, [](const std::vector<double>& x) { return x[0]; });
    CHECK(code_of([&] { klime_explain(bundle, {}, 2); }) == ErrorCode::DegenerateFit);
  }

  TEST_CASE("identical points leave a cluster empty") {
    const auto bundle = make_bundle({{1, 1}, {1, 1}, {1, 1}, {1, 1}}, [](const std::vector<double>&) { return 0.5; });
    CHECK(code_of([&] { klime_explain(bundle, {}, 2); }) == ErrorCode::EmptyCluster);
  }

  TEST_CASE("more clusters than samples") {
    const auto bundle = make_bundle({{1}, {2}}, [](const std::vector<double>& x) { return x[0]; });
    CHECK(code_of([&] { klime_explain(bundle, {}, 3); }) == ErrorCode::InvalidConfig);
  }

  TEST_CASE("collinear features fall back to a larger penalty") {
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 20; ++i) rows.push_back({double(i), double(i)});
    InterpreterConfig cfg;
    cfg.ridge_lambda = 0.0;
    const auto result = klime_explain(make_bundle(rows, [](const std::vector<double>& x) { return x[0]; }), cfg, 1);
    CHECK(result.clusters[0].regularization_raised);
    CHECK(result.attributions[0].regularization_raised);
    CHECK(result.clusters[0].coefficients[0] + result.clusters[0].coefficients[1] == doctest::Approx(1.0).epsilon(1e-4));
  }

  TEST_CASE("deterministic per seed") {
    gen::Rng rng(5);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 60; ++i) rows.push_back(rng.vector(2, 0, 10));
    const auto bundle = make_bundle(rows, [](const std::vector<double>& x) { return x[0] * x[1]; });
    InterpreterConfig cfg;
    cfg.rng_seed = 77;
    const auto a = klime_explain(bundle, cfg, 3);
    const auto b = klime_explain(bundle, cfg, 3);
    CHECK(a.assignment == b.assignment);
    CHECK(a.attributions == b.attributions);
  }
}

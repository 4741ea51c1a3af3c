#include "crystal/interpreter.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "crystal/error.hpp"
#include "crystal/simd/kernels.hpp"
#include "linalg.hpp"

namespace crystal {
namespace {

std::vector<AttributionEntry> make_entries(std::span<const double> importances, RankingKey key) {
  std::vector<AttributionEntry> entries;
  entries.reserve(importances.size());
  for (std::size_t i = 0; i < importances.size(); ++i) entries.push_back({i, importances[i]});
  sort_entries(entries, key);
  return entries;
}

std::size_t require_sample(const DatasetBundle& bundle, std::string_view sample_id) {
  const auto idx = bundle.index_of(sample_id);
  if (!idx) throw Error(ErrorCode::UnknownSampleId, "unknown sample_id '" + std::string(sample_id) + "'");
  return *idx;
}

bool all_equal(std::span<const double> values) {
  return std::adjacent_find(values.begin(), values.end(), std::not_equal_to<>()) == values.end();
}

// v(S) for every coalition mask in `masks`: features in S come from x, the
// rest from each background row; the value is averaged over background rows.
std::vector<double> coalition_values(ScoringChannel& channel, std::span<const double> x,
                                     const RowMatrix& background,
                                     std::span<const std::vector<bool>> masks) {
  const std::size_t d = x.size();
  const std::size_t m = background.rows();
  RowMatrix rows(d);
  rows.reserve_rows(masks.size() * m);
  std::vector<double> buf(d);
  for (const auto& mask : masks) {
    for (std::size_t b = 0; b < m; ++b) {
      const auto bg = background.row(b);
      for (std::size_t j = 0; j < d; ++j) buf[j] = mask[j] ? x[j] : bg[j];
      rows.append_row(buf);
    }
  }
  const std::vector<double> scores = score_batch(channel, rows);
  std::vector<double> values(masks.size(), 0.0);
  for (std::size_t k = 0; k < masks.size(); ++k) {
    double sum = 0.0;
    for (std::size_t b = 0; b < m; ++b) sum += scores[k * m + b];
    values[k] = sum / static_cast<double>(m);
  }
  return values;
}

std::vector<bool> mask_from_bits(std::uint64_t bits, std::size_t d) {
  std::vector<bool> mask(d);
  for (std::size_t j = 0; j < d; ++j) mask[j] = (bits >> j) & 1U;
  return mask;
}

double binomial(std::size_t n, std::size_t k) {
  return std::exp(std::lgamma(static_cast<double>(n) + 1.0) -
                  std::lgamma(static_cast<double>(k) + 1.0) -
                  std::lgamma(static_cast<double>(n - k) + 1.0));
}

}  // namespace

std::string_view method_name(AttributionMethod method) noexcept {
  switch (method) {
    case AttributionMethod::Lime: return "lime";
    case AttributionMethod::KernelShap: return "kernel_shap";
    case AttributionMethod::ExactShap: return "exact_shap";
    case AttributionMethod::KLime: return "klime";
  }
  return "unknown";
}

std::optional<AttributionMethod> parse_method(std::string_view name) noexcept {
  if (name == "lime") return AttributionMethod::Lime;
  if (name == "kernel_shap") return AttributionMethod::KernelShap;
  if (name == "exact_shap") return AttributionMethod::ExactShap;
  if (name == "klime") return AttributionMethod::KLime;
  return std::nullopt;
}

std::string_view ranking_key_name(RankingKey key) noexcept {
  return key == RankingKey::Signed ? "signed" : "absolute";
}

std::optional<RankingKey> parse_ranking_key(std::string_view name) noexcept {
  if (name == "signed") return RankingKey::Signed;
  if (name == "absolute") return RankingKey::Absolute;
  return std::nullopt;
}

std::optional<double> AttributionList::importance_of(std::size_t feature_index) const {
  for (const auto& e : entries) {
    if (e.feature_index == feature_index) return e.importance;
  }
  return std::nullopt;
}

void validate(const InterpreterConfig& cfg, std::size_t feature_count) {
  if (cfg.n_perturbations == 0) throw Error(ErrorCode::InvalidConfig, "n_perturbations must be positive");
  if (cfg.kernel_width && !(*cfg.kernel_width > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "kernel_width must be positive");
  }
  if (cfg.top_k_features == 0) throw Error(ErrorCode::InvalidConfig, "top_k_features must be positive");
  if (!(cfg.ridge_lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "ridge_lambda must be >= 0");
  if (const auto* rows = std::get_if<RowMatrix>(&cfg.background)) {
    if (rows->rows() == 0) throw Error(ErrorCode::InvalidConfig, "explicit background has no rows");
    if (rows->cols() != feature_count) {
      throw Error(ErrorCode::InvalidConfig, "background rows must have " +
                                                std::to_string(feature_count) + " values");
    }
  }
}

void sort_entries(std::vector<AttributionEntry>& entries, RankingKey key) {
  const auto rank = [key](double v) { return key == RankingKey::Signed ? v : std::abs(v); };
  std::sort(entries.begin(), entries.end(), [&](const AttributionEntry& a, const AttributionEntry& b) {
    const double ra = rank(a.importance);
    const double rb = rank(b.importance);
    if (ra != rb) return ra > rb;
    return a.feature_index < b.feature_index;
  });
}

RowMatrix resolve_background(const DatasetBundle& bundle, const InterpreterConfig& cfg) {
  if (const auto* rows = std::get_if<RowMatrix>(&cfg.background)) return *rows;
  RowMatrix out(bundle.feature_count());
  out.append_row(bundle.feature_means());
  return out;
}

// --- LIME ---------------------------------------------------------------------

AttributionList lime_explain(const DatasetBundle& bundle, std::string_view sample_id,
                             ScoringChannel& channel, const InterpreterConfig& cfg) {
  const std::size_t d = bundle.feature_count();
  validate(cfg, d);
  const std::size_t sample_index = require_sample(bundle, sample_id);
  if (bundle.size() < 2) {
    throw Error(ErrorCode::InsufficientSamples, "LIME needs at least 2 samples for feature scales");
  }
  const Sample& sample = bundle.samples()[sample_index];

  std::vector<double> scale = bundle.feature_stddevs();
  for (double& s : scale) {
    if (!(s > 0.0)) s = 1.0;
  }

  // Row 0 is the instance itself; the rest are standardized Gaussian offsets.
  const std::size_t n = cfg.n_perturbations;
  std::mt19937_64 rng(detail::mix_seed(cfg.rng_seed, sample_index));
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix offsets(n, d);
  for (std::size_t r = 1; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) offsets(r, j) = normal(rng);
  }
  RowMatrix perturbed(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      perturbed(r, j) = sample.features[j] + offsets(r, j) * scale[j];
    }
  }
  const std::vector<double> scores = score_batch(channel, perturbed);

  AttributionList result;
  result.sample_id = sample.sample_id;
  result.method = AttributionMethod::Lime;

  if (all_equal(scores)) {
    result.degenerate = true;
    result.baseline = scores.empty() ? 0.0 : scores.front();
    result.entries = make_entries(std::vector<double>(d, 0.0), cfg.ranking_key);
    return result;
  }

  const double width = cfg.kernel_width.value_or(0.75 * std::sqrt(static_cast<double>(d)));
  std::vector<double> weights(n);
  const std::vector<double> origin(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double dist2 = simd::squared_distance(offsets.row(r), origin);
    weights[r] = std::sqrt(std::exp(-dist2 / (width * width)));
  }

  detail::RidgeFit fit = detail::weighted_ridge(offsets, scores, weights, cfg.ridge_lambda, true);
  double lambda = cfg.ridge_lambda;
  while (fit.singular) {
    lambda = lambda > 0.0 ? lambda * 10.0 : 1e-6;
    if (lambda > 1e6) throw Error(ErrorCode::SingularFit, "LIME surrogate could not be solved");
    fit = detail::weighted_ridge(offsets, scores, weights, lambda, true);
    result.regularization_raised = true;
  }
  result.baseline = fit.intercept;
  result.entries = make_entries(fit.coefficients, cfg.ranking_key);
  return result;
}

// --- KernelSHAP -----------------------------------------------------------------

AttributionList kernel_shap_explain(const DatasetBundle& bundle, std::string_view sample_id,
                                    ScoringChannel& channel, const InterpreterConfig& cfg) {
  const std::size_t d = bundle.feature_count();
  validate(cfg, d);
  if (d == 0) throw Error(ErrorCode::InvalidConfig, "KernelSHAP needs at least one feature");
  const std::size_t sample_index = require_sample(bundle, sample_id);
  const Sample& sample = bundle.samples()[sample_index];
  const RowMatrix background = resolve_background(bundle, cfg);

  // Endpoints: empty coalition (baseline) and full coalition (f(x)).
  std::vector<std::vector<bool>> endpoints{std::vector<bool>(d, false), std::vector<bool>(d, true)};
  const std::vector<double> ends = coalition_values(channel, sample.features, background, endpoints);
  const double base = ends[0];
  const double delta = ends[1] - base;

  AttributionList result;
  result.sample_id = sample.sample_id;
  result.method = AttributionMethod::KernelShap;
  result.baseline = base;

  if (d == 1) {
    result.entries = make_entries(std::vector<double>{delta}, cfg.ranking_key);
    return result;
  }

  std::vector<std::vector<bool>> masks;
  std::vector<double> weights;
  const bool enumerate = d < 63 && ((std::uint64_t{1} << d) - 2) <= cfg.n_perturbations;
  if (enumerate) {
    const std::uint64_t total = std::uint64_t{1} << d;
    masks.reserve(total - 2);
    for (std::uint64_t bits = 1; bits + 1 < total; ++bits) {
      std::vector<bool> mask = mask_from_bits(bits, d);
      const auto s = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
      weights.push_back(static_cast<double>(d - 1) /
                        (binomial(d, s) * static_cast<double>(s) * static_cast<double>(d - s)));
      masks.push_back(std::move(mask));
    }
  } else {
    // Sampling proportional to the kernel: the total kernel mass of size s
    // is (d-1)/(s(d-s)); pick a size from that, then a uniform subset.
    std::vector<double> size_mass(d - 1);
    for (std::size_t s = 1; s < d; ++s) {
      size_mass[s - 1] = static_cast<double>(d - 1) / static_cast<double>(s * (d - s));
    }
    std::mt19937_64 rng(detail::mix_seed(cfg.rng_seed, sample_index));
    std::discrete_distribution<std::size_t> pick_size(size_mass.begin(), size_mass.end());
    std::vector<std::size_t> order(d);
    masks.reserve(cfg.n_perturbations);
    for (std::size_t k = 0; k < cfg.n_perturbations; ++k) {
      const std::size_t s = pick_size(rng) + 1;
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = 0; i < s; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, d - 1);
        std::swap(order[i], order[pick(rng)]);
      }
      std::vector<bool> mask(d, false);
      for (std::size_t i = 0; i < s; ++i) mask[order[i]] = true;
      masks.push_back(std::move(mask));
    }
    weights.assign(masks.size(), 1.0);
  }

  const std::vector<double> values = coalition_values(channel, sample.features, background, masks);

  if (delta == 0.0 && std::all_of(values.begin(), values.end(), [&](double v) { return v == base; })) {
    result.degenerate = true;
    result.entries = make_entries(std::vector<double>(d, 0.0), cfg.ranking_key);
    return result;
  }

  // Efficiency is enforced by eliminating the last feature:
  //   phi_last = delta - sum(phi_i), regress y - z_last*delta on z_i - z_last.
  const std::size_t p = d - 1;
  RowMatrix design(masks.size(), p);
  std::vector<double> target(masks.size());
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const double z_last = masks[k][p] ? 1.0 : 0.0;
    for (std::size_t j = 0; j < p; ++j) design(k, j) = (masks[k][j] ? 1.0 : 0.0) - z_last;
    target[k] = values[k] - base - z_last * delta;
  }
  detail::RidgeFit fit = detail::weighted_ridge(design, target, weights, 0.0, false);
  if (fit.singular) {
    // Sampled designs can miss directions; a tiny ridge keeps them at zero.
    fit = detail::weighted_ridge(design, target, weights, 1e-9, false);
    result.regularization_raised = true;
    if (fit.singular) throw Error(ErrorCode::SingularFit, "KernelSHAP system could not be solved");
  }
  std::vector<double> phi = std::move(fit.coefficients);
  double partial = 0.0;
  for (double v : phi) partial += v;
  phi.push_back(delta - partial);
  result.entries = make_entries(phi, cfg.ranking_key);
  return result;
}

// --- exact Shapley -----------------------------------------------------------------

AttributionList exact_shap_explain(const DatasetBundle& bundle, std::string_view sample_id,
                                   ScoringChannel& channel, const RowMatrix& background,
                                   RankingKey key) {
  const std::size_t d = bundle.feature_count();
  if (d > kExactShapMaxFeatures) {
    throw Error(ErrorCode::TooManyFeatures, std::to_string(d) + " features exceeds the cap of " +
                                                std::to_string(kExactShapMaxFeatures));
  }
  if (background.rows() == 0 || background.cols() != d) {
    throw Error(ErrorCode::InvalidConfig, "background must have rows of width " + std::to_string(d));
  }
  const std::size_t sample_index = require_sample(bundle, sample_id);
  const Sample& sample = bundle.samples()[sample_index];

  const std::uint64_t total = std::uint64_t{1} << d;
  std::vector<double> values(total);
  constexpr std::uint64_t kBlock = 4096;
  for (std::uint64_t first = 0; first < total; first += kBlock) {
    const std::uint64_t last = std::min(total, first + kBlock);
    std::vector<std::vector<bool>> masks;
    masks.reserve(last - first);
    for (std::uint64_t bits = first; bits < last; ++bits) masks.push_back(mask_from_bits(bits, d));
    const std::vector<double> block = coalition_values(channel, sample.features, background, masks);
    std::copy(block.begin(), block.end(), values.begin() + static_cast<std::ptrdiff_t>(first));
  }

  // weight(s) = s! (d-s-1)! / d! = 1 / (d * C(d-1, s))
  std::vector<double> weight(d == 0 ? 0 : d);
  for (std::size_t s = 0; s < d; ++s) {
    weight[s] = 1.0 / (static_cast<double>(d) * binomial(d - 1, s));
  }
  std::vector<double> phi(d, 0.0);
  for (std::uint64_t bits = 0; bits < total; ++bits) {
    const auto s = static_cast<std::size_t>(std::popcount(bits));
    for (std::size_t i = 0; i < d; ++i) {
      const std::uint64_t bit = std::uint64_t{1} << i;
      if (bits & bit) continue;
      phi[i] += weight[s] * (values[bits | bit] - values[bits]);
    }
  }

  AttributionList result;
  result.sample_id = sample.sample_id;
  result.method = AttributionMethod::ExactShap;
  result.baseline = values[0];
  result.degenerate = all_equal(values);
  result.entries = make_entries(phi, key);
  return result;
}

// --- K-LIME ---------------------------------------------------------------------

namespace {

struct KMeansOutcome {
  std::vector<std::size_t> assignment;
  bool empty_cluster = false;
};

std::size_t nearest(const RowMatrix& centroids, std::span<const double> point, double* best_dist) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double dist = simd::squared_distance(centroids.row(c), point);
    if (dist < best_d) {  // strict: ties keep the lowest index
      best_d = dist;
      best = c;
    }
  }
  if (best_dist) *best_dist = best_d;
  return best;
}

KMeansOutcome run_kmeans(const RowMatrix& points, std::size_t k, std::uint64_t seed) {
  constexpr std::size_t kMaxIterations = 100;
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  std::mt19937_64 rng(seed);

  // k-means++ seeding
  RowMatrix centroids(d);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centroids.append_row(points.row(first(rng)));
  std::vector<double> dist2(n);
  while (centroids.rows() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest(centroids, points.row(i), &dist2[i]);
      total += dist2[i];
    }
    std::size_t chosen = 0;
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> pick(dist2.begin(), dist2.end());
      chosen = pick(rng);
    } else {
      chosen = first(rng);
    }
    centroids.append_row(points.row(chosen));
  }

  KMeansOutcome out;
  out.assignment.assign(n, 0);
  for (std::size_t iter = 0; iter < kMaxIterations; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(centroids, points.row(i), nullptr);
      if (c != out.assignment[i]) {
        out.assignment[i] = c;
        changed = true;
      }
    }
    RowMatrix next(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = out.assignment[i];
      ++counts[c];
      auto row = next.row(c);
      const auto p = points.row(i);
      for (std::size_t j = 0; j < d; ++j) row[j] += p[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        out.empty_cluster = true;
        return out;
      }
      for (double& v : next.row(c)) v /= static_cast<double>(counts[c]);
    }
    centroids = std::move(next);
    if (!changed) break;
  }
  return out;
}

}  // namespace

KLimeResult klime_explain(const DatasetBundle& bundle, const InterpreterConfig& cfg,
                          std::size_t n_clusters) {
  const std::size_t d = bundle.feature_count();
  validate(cfg, d);
  const std::size_t n = bundle.size();
  if (n_clusters == 0) throw Error(ErrorCode::InvalidConfig, "n_clusters must be positive");
  if (n < n_clusters) {
    throw Error(ErrorCode::InvalidConfig, "sample_count " + std::to_string(n) + " < n_clusters " +
                                              std::to_string(n_clusters));
  }

  // Cluster on standardized features so no single unit dominates the distance.
  const std::vector<double> means = bundle.feature_means();
  std::vector<double> scale = bundle.feature_stddevs();
  for (double& s : scale) {
    if (!(s > 0.0)) s = 1.0;
  }
  RowMatrix standardized(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = bundle.samples()[i].features;
    for (std::size_t j = 0; j < d; ++j) standardized(i, j) = (f[j] - means[j]) / scale[j];
  }

  KLimeResult result;
  constexpr std::size_t kMaxReseeds = 3;
  KMeansOutcome km;
  for (std::size_t attempt = 0;; ++attempt) {
    km = run_kmeans(standardized, n_clusters, detail::mix_seed(cfg.rng_seed, attempt));
    if (!km.empty_cluster) break;
    if (attempt == kMaxReseeds) {
      throw Error(ErrorCode::EmptyCluster, "k-means produced an empty cluster after " +
                                               std::to_string(kMaxReseeds) + " re-seeds");
    }
    ++result.reseeds;
  }
  result.assignment = km.assignment;

  result.clusters.resize(n_clusters);
  std::vector<std::vector<std::size_t>> members(n_clusters);
  for (std::size_t i = 0; i < n; ++i) members[km.assignment[i]].push_back(i);

  for (std::size_t c = 0; c < n_clusters; ++c) {
    const auto& idx = members[c];
    if (idx.size() < 2) {
      throw Error(ErrorCode::DegenerateFit, "cluster " + std::to_string(c) + " has " +
                                                std::to_string(idx.size()) +
                                                " member(s); a regression needs at least 2");
    }
    RowMatrix x(d);
    x.reserve_rows(idx.size());
    std::vector<double> y;
    y.reserve(idx.size());
    for (std::size_t i : idx) {
      x.append_row(bundle.samples()[i].features);
      y.push_back(bundle.samples()[i].score);
    }
    const std::vector<double> w(idx.size(), 1.0);

    ClusterFit& cluster = result.clusters[c];
    cluster.member_count = idx.size();
    double lambda = cfg.ridge_lambda;
    detail::RidgeFit fit = detail::weighted_ridge(x, y, w, lambda, true);
    while (fit.singular) {
      lambda = lambda > 0.0 ? lambda * 10.0 : 1e-6;
      if (lambda > 1e6) {
        throw Error(ErrorCode::SingularFit, "cluster " + std::to_string(c) + " fit is singular");
      }
      fit = detail::weighted_ridge(x, y, w, lambda, true);
      cluster.regularization_raised = true;
    }
    cluster.coefficients = fit.coefficients;
    cluster.intercept = fit.intercept;

    cluster.feature_means.assign(d, 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t j = 0; j < d; ++j) cluster.feature_means[j] += x(r, j);
    }
    for (double& m : cluster.feature_means) m /= static_cast<double>(x.rows());

    double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double pred = fit.intercept + simd::dot(fit.coefficients, x.row(r));
      ss_res += (y[r] - pred) * (y[r] - pred);
      ss_tot += (y[r] - y_mean) * (y[r] - y_mean);
    }
    cluster.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  }

  result.attributions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = bundle.samples()[i];
    const ClusterFit& cluster = result.clusters[km.assignment[i]];
    std::vector<double> contrib(d);
    for (std::size_t j = 0; j < d; ++j) {
      contrib[j] = cluster.coefficients[j] * (s.features[j] - cluster.feature_means[j]);
    }
    AttributionList attr;
    attr.sample_id = s.sample_id;
    attr.method = AttributionMethod::KLime;
    attr.baseline = cluster.intercept + simd::dot(cluster.coefficients, cluster.feature_means);
    attr.regularization_raised = cluster.regularization_raised;
    attr.degenerate = std::all_of(cluster.coefficients.begin(), cluster.coefficients.end(),
                                  [](double v) { return v == 0.0; });
    attr.entries = make_entries(contrib, cfg.ranking_key);
    result.attributions.push_back(std::move(attr));
  }
  return result;
}

AttributionList top_features(const AttributionList& attr, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "top_features requires k >= 1");
  AttributionList out = attr;
  if (out.entries.size() > k) out.entries.resize(k);
  return out;
}

}  // namespace crystal

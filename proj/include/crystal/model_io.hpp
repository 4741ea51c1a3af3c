#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "crystal/matrix.hpp"

namespace crystal {

struct ScoreRange {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const ScoreRange&, const ScoreRange&) = default;
};

struct DatasetManifest {
  std::vector<std::string> feature_names;
  std::size_t sample_count = 0;
  // Relative paths are resolved against the manifest's directory.
  std::string samples_path;
  std::optional<ScoreRange> score_range;

  std::optional<std::size_t> feature_index(std::string_view name) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Sample {
  std::string sample_id;
  std::vector<double> features;
  double score = 0.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// The standardized model output: manifest plus every sample, validated and
// immutable after construction.
class DatasetBundle {
 public:
  DatasetBundle() = default;
  // Validates the invariants (unique ids, vector lengths, finiteness, score range).
  DatasetBundle(DatasetManifest manifest, std::vector<Sample> samples);

  const DatasetManifest& manifest() const noexcept { return manifest_; }
  const std::vector<Sample>& samples() const noexcept { return samples_; }
  std::size_t feature_count() const noexcept { return manifest_.feature_names.size(); }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }

  // Throws UnknownSampleId.
  const Sample& sample(std::string_view sample_id) const;
  std::optional<std::size_t> index_of(std::string_view sample_id) const;

  std::vector<double> feature_means() const;
  // Sample standard deviation (n - 1 denominator); requires size() >= 2.
  std::vector<double> feature_stddevs() const;
  RowMatrix feature_matrix() const;

  friend bool operator==(const DatasetBundle& a, const DatasetBundle& b) {
    return a.manifest_ == b.manifest_ && a.samples_ == b.samples_;
  }

 private:
  DatasetManifest manifest_;
  std::vector<Sample> samples_;
  std::unordered_map<std::string, std::size_t> index_;
};

DatasetBundle load_bundle(const std::filesystem::path& manifest_path);
// Writes the manifest to `manifest_path` and the samples file next to it
// (at manifest().samples_path, relative to the manifest directory).
void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& manifest_path);

// 100 * (#samples with strictly lower score) / (n - 1); 100 for a singleton.
double score_percentile(const DatasetBundle& bundle, std::string_view sample_id);

// ---------------------------------------------------------------------------
// Scoring channels

enum class ChannelKind { InProcessSynthetic, ExternalProcess };

class ScoringChannel {
 public:
  virtual ~ScoringChannel() = default;
  ScoringChannel(const ScoringChannel&) = delete;
  ScoringChannel& operator=(const ScoringChannel&) = delete;

  virtual ChannelKind kind() const noexcept = 0;
  std::size_t batch_limit() const noexcept { return batch_limit_; }

 protected:
  explicit ScoringChannel(std::size_t batch_limit);

 private:
  friend std::vector<double> score_batch(ScoringChannel& channel, const RowMatrix& rows);
  // Scores at most batch_limit() rows. Implementations may return any number
  // of values; score_batch() validates the count.
  virtual std::vector<double> score_chunk(const RowMatrix& rows) = 0;

  std::size_t batch_limit_;
};

// Scores every row, chunking by the channel's batch limit. Throws
// ChannelBroken when a chunk comes back with the wrong count and
// NonFiniteScore when any score is NaN or infinite.
std::vector<double> score_batch(ScoringChannel& channel, const RowMatrix& rows);

inline constexpr std::size_t kDefaultBatchLimit = 4096;

// f(x) = intercept + coefficients . x
class LinearChannel final : public ScoringChannel {
 public:
  LinearChannel(std::vector<double> coefficients, double intercept = 0.0,
                std::size_t batch_limit = kDefaultBatchLimit);

  ChannelKind kind() const noexcept override { return ChannelKind::InProcessSynthetic; }
  const std::vector<double>& coefficients() const noexcept { return coefficients_; }
  double intercept() const noexcept { return intercept_; }
  double evaluate(std::span<const double> row) const;

 private:
  std::vector<double> score_chunk(const RowMatrix& rows) override;

  std::vector<double> coefficients_;
  double intercept_;
};

// Depth-2 decision tree: split on root, then split each branch once more.
struct Stump {
  std::size_t root_feature = 0;
  double root_threshold = 0.0;
  std::size_t left_feature = 0;
  double left_threshold = 0.0;
  std::size_t right_feature = 0;
  double right_threshold = 0.0;
  // leaves: left-left, left-right, right-left, right-right
  double leaves[4] = {0.0, 0.0, 0.0, 0.0};

  double evaluate(std::span<const double> row) const;
};

// Sum of depth-2 stumps plus a bias.
class StumpEnsembleChannel final : public ScoringChannel {
 public:
  explicit StumpEnsembleChannel(std::vector<Stump> stumps, double bias = 0.0,
                                std::size_t batch_limit = kDefaultBatchLimit);

  // Random ensemble over `features` inputs with thresholds drawn from [lo, hi).
  static StumpEnsembleChannel random(std::size_t features, std::size_t n_stumps,
                                     std::uint64_t seed, double lo = 0.0, double hi = 1.0);

  ChannelKind kind() const noexcept override { return ChannelKind::InProcessSynthetic; }
  const std::vector<Stump>& stumps() const noexcept { return stumps_; }
  double bias() const noexcept { return bias_; }
  double evaluate(std::span<const double> row) const;

 private:
  std::vector<double> score_chunk(const RowMatrix& rows) override;

  std::vector<Stump> stumps_;
  double bias_;
};

// Arbitrary in-process model. The callable must be pure.
class FunctionChannel final : public ScoringChannel {
 public:
  using Model = std::function<double(std::span<const double>)>;
  explicit FunctionChannel(Model model, std::size_t batch_limit = kDefaultBatchLimit);

  ChannelKind kind() const noexcept override { return ChannelKind::InProcessSynthetic; }

 private:
  std::vector<double> score_chunk(const RowMatrix& rows) override;

  Model model_;
};

// Child process speaking the score/1 line protocol on stdin/stdout:
//   handshake  {"protocol":"score/1"}
//   request    {"id":<int>,"rows":[[...],...]}
//   reply      {"id":<int>,"scores":[...]}
// Exclusive use: one batch in flight at a time.
class ExternalProcessChannel final : public ScoringChannel {
 public:
  // Spawns argv[0] (PATH lookup) and waits for the handshake. Throws ChannelBroken.
  explicit ExternalProcessChannel(std::vector<std::string> argv,
                                  std::size_t batch_limit = 256,
                                  std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~ExternalProcessChannel() override;

  ChannelKind kind() const noexcept override { return ChannelKind::ExternalProcess; }

 private:
  std::vector<double> score_chunk(const RowMatrix& rows) override;
  std::string read_line();
  void write_all(std::string_view data);
  void shutdown() noexcept;

  int socket_fd_ = -1;
  int child_pid_ = -1;
  std::int64_t next_id_ = 1;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
};

}  // namespace crystal

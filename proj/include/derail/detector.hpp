#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "derail/corpus.hpp"
#include "derail/gcn.hpp"
#include "derail/graph.hpp"

namespace derail {

inline constexpr double kDefaultThreshold = 0.5;
inline constexpr std::size_t kDefaultTopK = 5;
inline constexpr std::size_t kMaxTopK = 10;

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  void add(Label truth, Label verdict);
  Confusion& operator+=(const Confusion& other);
  bool operator==(const Confusion&) const = default;
};

/// Ratios are nullopt where the denominator is zero; JSON shows "undefined".
struct Metrics {
  Confusion counts;
  std::optional<double> accuracy;
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<double> f1;
  std::optional<double> fpr;

  static Metrics from_confusion(const Confusion& counts);
  Json to_json() const;
  bool operator==(const Metrics&) const = default;
};

struct Prediction {
  Label verdict = Label::Clean;
  double probability = 0.5;
};

/// Defective iff probability >= threshold.
Prediction predict(const GcnModel& model, const NormalizedGraph& graph,
                   double threshold = kDefaultThreshold);

/// Graphs are scored in parallel; every graph must carry a label.
/// Throws Error(EmptyTestSet) for an empty set, Error(BadLabel) for an
/// unlabeled graph.
Confusion confusion(const GcnModel& model, std::span<const NormalizedGraph> graphs,
                    double threshold = kDefaultThreshold);
Metrics evaluate(const GcnModel& model, std::span<const NormalizedGraph> testset,
                 double threshold = kDefaultThreshold);

struct LocalizedNode {
  std::size_t index = 0;  // row in the graph
  NodeId ast_id = 0;
  SrcSpan span;
  double salience = 0.0;
};

/// Salience of node i is the defective-vs-clean logit margin computed from
/// row i of the last GCN layer instead of the pooled vector. Returns at most
/// min(k, kMaxTopK) nodes, highest first, ties by row index.
std::vector<LocalizedNode> localize(const GcnModel& model, const NormalizedGraph& graph,
                                    std::size_t k = kDefaultTopK);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean over the epoch, before each step
  std::optional<Metrics> held_out;
  Json to_json() const;
};

struct TrainResult {
  GcnModel model;
  std::vector<EpochRecord> history;
  std::optional<Metrics> metrics;  // held-out metrics of the final model
};

/// Per-graph gradient steps over `train` for config.epochs epochs, visiting
/// graphs in a fresh seeded order each epoch. `test` may be empty.
TrainResult fit(std::span<const NormalizedGraph> train, std::span<const NormalizedGraph> test,
                const TrainConfig& config, const std::string& vocab_fingerprint);

/// Stratified split by config.train_fraction and config.seed, then fit.
/// Throws Error(EmptyCorpus) for fewer than two graphs and
/// Error(DegenerateCorpus) when only one label occurs.
TrainResult train(std::span<const NormalizedGraph> corpus, const TrainConfig& config,
                  const std::string& vocab_fingerprint);

struct PipelineConfig {
  TrainConfig train;
  std::size_t dim = kDefaultEmbeddingDim;
  std::size_t buckets = kDefaultNameBuckets;
};

struct SkippedContract {
  std::string path;
  std::string reason;
};

struct ProtocolResult {
  Vocabulary vocab;
  TrainResult result;
  SplitIndices split;  // indices into the input contracts
  std::vector<SkippedContract> skipped;
};

/// Contract-level protocol: split the contracts, build the vocabulary from
/// the training side only, turn both sides into graphs and fit. Contracts
/// whose graph comes out empty are skipped and reported.
ProtocolResult train_on_contracts(std::span<const LabeledContract> contracts,
                                  const PipelineConfig& config,
                                  const RuleTable& rules = RuleTable::defaults());

/// Same graph construction for a fixed split, used by k-fold runs.
ProtocolResult train_on_split(std::span<const LabeledContract> contracts, SplitIndices split,
                              const PipelineConfig& config,
                              const RuleTable& rules = RuleTable::defaults());

struct DetectionReport {
  std::string contract;
  Label verdict = Label::Clean;
  double probability = 0.5;
  std::vector<LocalizedNode> top_nodes;
  std::vector<std::string> excerpts;  // source text per node, when available
  std::string model_fingerprint;
  std::string timestamp;  // UTC, ISO 8601

  Json to_json() const;
  std::string to_text() const;
};

/// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

}  // namespace derail

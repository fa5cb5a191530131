#include "derail/detector.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <numeric>
#include <random>
#include <sstream>

#include "derail/error.hpp"
#include "derail/parallel.hpp"

namespace derail {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

Json optional_json(const std::optional<double>& v) {
  return v ? Json(*v) : Json("undefined");
}

std::string format_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

void Confusion::add(Label truth, Label verdict) {
  if (truth == Label::Defective) {
    ++(verdict == Label::Defective ? tp : fn);
  } else {
    ++(verdict == Label::Defective ? fp : tn);
  }
}

Confusion& Confusion::operator+=(const Confusion& other) {
  tp += other.tp;
  fp += other.fp;
  tn += other.tn;
  fn += other.fn;
  return *this;
}

Metrics Metrics::from_confusion(const Confusion& c) {
  Metrics m;
  m.counts = c;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.fpr = ratio(c.fp, c.fp + c.tn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

Json Metrics::to_json() const {
  Json j;
  j["acc"] = optional_json(accuracy);
  j["recall"] = optional_json(recall);
  j["precision"] = optional_json(precision);
  j["f1"] = optional_json(f1);
  j["fpr"] = optional_json(fpr);
  j["tp"] = counts.tp;
  j["fp"] = counts.fp;
  j["tn"] = counts.tn;
  j["fn"] = counts.fn;
  return j;
}

Prediction predict(const GcnModel& model, const NormalizedGraph& graph, double threshold) {
  const double p = forward(model.params, graph).probability;
  return {p >= threshold ? Label::Defective : Label::Clean, p};
}

Confusion confusion(const GcnModel& model, std::span<const NormalizedGraph> graphs,
                    double threshold) {
  if (graphs.empty()) throw Error(ErrorCode::EmptyTestSet, "nothing to evaluate");
  for (const auto& g : graphs) {
    if (!g.label) throw Error(ErrorCode::BadLabel, "evaluation graph has no label");
  }
  std::vector<Label> verdicts(graphs.size());
  parallel_for(graphs.size(),
               [&](std::size_t i) { verdicts[i] = predict(model, graphs[i], threshold).verdict; });
  Confusion c;
  for (std::size_t i = 0; i < graphs.size(); ++i) c.add(*graphs[i].label, verdicts[i]);
  return c;
}

Metrics evaluate(const GcnModel& model, std::span<const NormalizedGraph> testset,
                 double threshold) {
  return Metrics::from_confusion(confusion(model, testset, threshold));
}

std::vector<LocalizedNode> localize(const GcnModel& model, const NormalizedGraph& graph,
                                    std::size_t k) {
  k = std::min({k, kMaxTopK, graph.size()});
  if (k == 0) return {};
  const ForwardTrace trace = forward(model.params, graph);
  const auto& p = model.params;
  std::vector<LocalizedNode> nodes(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    double s = p.b_out(0, 1) - p.b_out(0, 0);
    auto row = trace.h2.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * (p.w_out(c, 1) - p.w_out(c, 0));
    nodes[i] = {i, graph.node_ids[i], graph.spans[i], s};
  }
  std::stable_sort(nodes.begin(), nodes.end(),
                   [](const LocalizedNode& a, const LocalizedNode& b) { return a.salience > b.salience; });
  nodes.resize(k);
  return nodes;
}

Json EpochRecord::to_json() const {
  Json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  j["held_out"] = held_out ? held_out->to_json() : Json(nullptr);
  return j;
}

TrainResult fit(std::span<const NormalizedGraph> train_set, std::span<const NormalizedGraph> test,
                const TrainConfig& config, const std::string& vocab_fingerprint) {
  config.validate();
  if (train_set.empty()) throw Error(ErrorCode::EmptyCorpus, "no training graphs");
  const std::size_t dim = train_set.front().features.cols();
  for (const auto& g : train_set) {
    if (!g.label) throw Error(ErrorCode::BadLabel, "training graph has no label");
    if (g.features.cols() != dim) {
      throw Error(ErrorCode::ShapeMismatch, "training graphs disagree on feature width");
    }
  }

  TrainResult result;
  result.model.vocab_fingerprint = vocab_fingerprint;
  result.model.params = GcnParams::glorot(dim, config.hidden, config.seed);
  OptimizerState state = OptimizerState::for_params(result.model.params);

  // Visiting order uses its own stream so it does not depend on how many
  // draws initialization made.
  std::mt19937_64 order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double total = 0.0;
    for (std::size_t i : order) {
      const auto& g = train_set[i];
      LossAndGrads lg = loss_and_grads(result.model.params, g, *g.label, config.l2_penalty);
      total += lg.loss;
      optimizer_step(state, result.model.params, lg.grads, config);
    }
    EpochRecord record{epoch, total / static_cast<double>(train_set.size()), std::nullopt};
    if (!test.empty()) record.held_out = evaluate(result.model, test);
    result.history.push_back(std::move(record));
  }
  if (!test.empty()) result.metrics = evaluate(result.model, test);
  return result;
}

TrainResult train(std::span<const NormalizedGraph> corpus, const TrainConfig& config,
                  const std::string& vocab_fingerprint) {
  if (corpus.size() < 2) throw Error(ErrorCode::EmptyCorpus, "need at least two labeled graphs");
  std::vector<Label> labels;
  for (const auto& g : corpus) {
    if (!g.label) throw Error(ErrorCode::BadLabel, "training graph has no label");
    labels.push_back(*g.label);
  }
  if (std::all_of(labels.begin(), labels.end(), [&](Label l) { return l == labels[0]; })) {
    throw Error(ErrorCode::DegenerateCorpus,
                "all graphs are labeled " + std::string(to_string(labels[0])));
  }
  const auto idx = split_indices(labels, config.train_fraction, config.seed);
  std::vector<NormalizedGraph> train_set, test;
  for (auto i : idx.train) train_set.push_back(corpus[i]);
  for (auto i : idx.test) test.push_back(corpus[i]);
  return fit(train_set, test, config, vocab_fingerprint);
}

ProtocolResult train_on_split(std::span<const LabeledContract> contracts, SplitIndices split,
                              const PipelineConfig& config, const RuleTable& rules) {
  const LabelSet labels = rules.label_set();
  // The vocabulary only sees tokens of training graphs that survive pruning.
  std::vector<std::optional<ContractGraph>> graphs(contracts.size());
  std::vector<std::string> failures(contracts.size());
  parallel_for(contracts.size(), [&](std::size_t i) {
    try {
      graphs[i] = tree_to_graph(contracts[i].tree, rules, labels, config.buckets);
      graphs[i]->label = contracts[i].label;
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  });

  std::vector<SkippedContract> skipped;
  auto keep = [&](const std::vector<std::size_t>& side) {
    std::vector<std::size_t> out;
    for (auto i : side) {
      if (graphs[i]) out.push_back(i);
      else skipped.push_back({contracts[i].path.string(), failures[i]});
    }
    return out;
  };
  split.train = keep(split.train);
  split.test = keep(split.test);
  if (split.train.empty()) throw Error(ErrorCode::EmptyCorpus, "no usable training contracts");

  std::vector<std::vector<std::string>> train_tokens;
  for (auto i : split.train) {
    auto& doc = train_tokens.emplace_back();
    for (const auto& node : graphs[i]->nodes()) doc.push_back(node.token);
  }
  Vocabulary vocab = build_vocabulary_from_tokens(train_tokens, config.dim, config.train.seed,
                                                  config.buckets);

  auto materialize = [&](const std::vector<std::size_t>& side) {
    std::vector<NormalizedGraph> out;
    out.reserve(side.size());
    for (auto i : side) out.push_back(normalize(embed_nodes(*graphs[i], vocab)));
    return out;
  };
  const auto train_set = materialize(split.train);
  const auto test = materialize(split.test);
  TrainResult result = fit(train_set, test, config.train, vocab.fingerprint());
  return {std::move(vocab), std::move(result), std::move(split), std::move(skipped)};
}

ProtocolResult train_on_contracts(std::span<const LabeledContract> contracts,
                                  const PipelineConfig& config, const RuleTable& rules) {
  config.train.validate();
  if (contracts.size() < 2) throw Error(ErrorCode::EmptyCorpus, "need at least two contracts");
  std::vector<Label> labels;
  for (const auto& c : contracts) labels.push_back(c.label);
  if (std::all_of(labels.begin(), labels.end(), [&](Label l) { return l == labels[0]; })) {
    throw Error(ErrorCode::DegenerateCorpus,
                "all contracts are labeled " + std::string(to_string(labels[0])));
  }
  return train_on_split(contracts, split_indices(labels, config.train.train_fraction, config.train.seed),
                        config, rules);
}

Json DetectionReport::to_json() const {
  Json j;
  j["contract"] = contract;
  j["verdict"] = std::string(to_string(verdict));
  j["probability"] = probability;
  Json nodes = Json::array();
  for (std::size_t i = 0; i < top_nodes.size(); ++i) {
    const auto& n = top_nodes[i];
    Json node;
    node["ast_id"] = n.ast_id;
    node["src"] = format_src_span(n.span);
    node["salience"] = n.salience;
    if (i < excerpts.size()) node["excerpt"] = excerpts[i];
    nodes.push_back(std::move(node));
  }
  j["top_k_nodes"] = std::move(nodes);
  j["model_fingerprint"] = model_fingerprint;
  j["timestamp"] = timestamp;
  return j;
}

std::string DetectionReport::to_text() const {
  std::ostringstream out;
  out << contract << ": " << to_string(verdict) << " (p=" << format_double(probability, 4) << ")\n";
  for (std::size_t i = 0; i < top_nodes.size(); ++i) {
    const auto& n = top_nodes[i];
    out << "  #" << i + 1 << " node " << n.ast_id << " at " << format_src_span(n.span)
        << " salience " << format_double(n.salience, 4);
    if (i < excerpts.size() && !excerpts[i].empty()) {
      std::string line = excerpts[i].substr(0, excerpts[i].find('\n'));
      if (line.size() > 60) line = line.substr(0, 57) + "...";
      out << "  " << line;
    }
    out << '\n';
  }
  return out.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace derail

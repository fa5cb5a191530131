#include "derail/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "derail/error.hpp"
#include "derail/hash.hpp"

namespace derail {

std::string node_token(const NodeTuple& tuple, std::size_t buckets) {
  if (tuple.n_type == "Literal") {
    return "Literal:" + (tuple.value_kind.empty() ? std::string("?") : tuple.value_kind);
  }
  if (tuple.n_name.empty()) return tuple.n_type + ":-";
  return tuple.n_type + ":" + std::to_string(fnv1a(tuple.n_name) % std::max<std::size_t>(buckets, 1));
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, Matrix embedding, std::uint64_t seed,
                       std::size_t buckets)
    : tokens_(std::move(tokens)), embedding_(std::move(embedding)), seed_(seed), buckets_(buckets) {
  if (tokens_.empty() || tokens_.front() != kUnkToken) {
    throw Error(ErrorCode::BadFormat, "vocabulary must start with the UNK token");
  }
  if (embedding_.rows() != tokens_.size() || embedding_.cols() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "embedding rows must match vocabulary size");
  }
  if (!all_finite(embedding_)) throw Error(ErrorCode::BadFormat, "non-finite embedding entry");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!word2idx_.emplace(tokens_[i], i).second) {
      throw Error(ErrorCode::BadFormat, "duplicate vocabulary token " + tokens_[i]);
    }
  }
}

std::size_t Vocabulary::index_of(std::string_view token) const {
  auto it = word2idx_.find(std::string(token));
  return it == word2idx_.end() ? kUnkIndex : it->second;
}

std::string Vocabulary::fingerprint() const {
  Fnv1a h;
  h.update_u64(dim()).update_u64(buckets_).update_u64(tokens_.size());
  for (const auto& t : tokens_) h.update(t).update(std::string_view("\0", 1));
  for (double v : embedding_.values()) h.update_f64(v);
  return h.hex();
}

Json Vocabulary::to_json() const {
  Json j;
  j["format"] = "derail-vocab/1";
  j["dim"] = dim();
  j["buckets"] = buckets_;
  j["seed"] = seed_;
  j["fingerprint"] = fingerprint();
  j["tokens"] = tokens_;
  Json rows = Json::array();
  for (std::size_t r = 0; r < embedding_.rows(); ++r) {
    auto row = embedding_.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["embedding"] = std::move(rows);
  return j;
}

Vocabulary Vocabulary::from_json(const Json& j) {
  try {
    if (j.at("format") != "derail-vocab/1") {
      throw Error(ErrorCode::BadFormat, "unsupported vocabulary format");
    }
    auto tokens = j.at("tokens").get<std::vector<std::string>>();
    const auto dim = j.at("dim").get<std::size_t>();
    const auto& rows = j.at("embedding");
    Matrix m(rows.size(), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != dim) throw Error(ErrorCode::ShapeMismatch, "embedding row width");
      for (std::size_t c = 0; c < dim; ++c) m(r, c) = rows[r][c].get<double>();
    }
    Vocabulary vocab(std::move(tokens), std::move(m), j.at("seed").get<std::uint64_t>(),
                     j.at("buckets").get<std::size_t>());
    if (auto fp = j.find("fingerprint"); fp != j.end() && *fp != vocab.fingerprint()) {
      throw Error(ErrorCode::VocabularyMismatch, "stored fingerprint does not match contents");
    }
    return vocab;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("vocabulary: ") + e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << to_json().dump() << '\n';
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open vocabulary " + path.string());
  try {
    return from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, path.string() + ": " + e.what(), e.byte);
  }
}

Vocabulary build_vocabulary_from_tokens(std::span<const std::vector<std::string>> documents,
                                        std::size_t dim, std::uint64_t seed, std::size_t buckets) {
  if (documents.empty()) throw Error(ErrorCode::EmptyCorpus, "no graphs to build a vocabulary from");
  if (dim == 0) throw Error(ErrorCode::ShapeMismatch, "embedding width must be positive");
  std::map<std::string, std::size_t> counts;
  for (const auto& tokens : documents) {
    for (const auto& t : tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens{std::string(Vocabulary::kUnkToken)};
  for (auto& [token, count] : ranked) tokens.push_back(token);

  Matrix m(tokens.size(), dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (double& v : m.values()) v = uniform(rng);
  return Vocabulary(std::move(tokens), std::move(m), seed, buckets);
}

Vocabulary build_vocabulary(std::span<const std::vector<NodeTuple>> corpus, std::size_t dim,
                            std::uint64_t seed, std::size_t buckets) {
  std::vector<std::vector<std::string>> documents;
  documents.reserve(corpus.size());
  for (const auto& tuples : corpus) {
    auto& doc = documents.emplace_back();
    for (const auto& t : tuples) doc.push_back(node_token(t, buckets));
  }
  return build_vocabulary_from_tokens(documents, dim, seed, buckets);
}

ContractGraph::ContractGraph(std::vector<GraphNode> nodes, std::vector<GraphEdge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  const std::size_t n = nodes_.size();
  if (n == 0) throw Error(ErrorCode::EmptyGraph, "graph has no nodes");
  for (const auto& node : nodes_) {
    if (node.parent && *node.parent >= n) {
      throw Error(ErrorCode::ShapeMismatch, "parent index out of range");
    }
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  adjacency_ = Matrix(n, n);
  for (const auto& e : edges_) {
    if (e.source >= n || e.target >= n) {
      throw Error(ErrorCode::ShapeMismatch, "edge endpoint out of range");
    }
    adjacency_(e.source, e.target) = 1.0;
    adjacency_(e.target, e.source) = 1.0;
  }
  neighbors_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (adjacency_(i, j) != 0.0) neighbors_[i].push_back(j);
    }
  }
  features_ = Matrix(n, 0);
}

void ContractGraph::set_features(Matrix features) {
  if (features.rows() != nodes_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "feature rows must equal node count");
  }
  features_ = std::move(features);
}

ContractGraph build_graph(const AstTree& tree, const std::vector<NodeTuple>& tuples,
                          const std::vector<EdgeTuple>& edges, std::size_t buckets) {
  if (tuples.empty()) throw Error(ErrorCode::EmptyGraph, "no categorized nodes");
  std::unordered_map<NodeId, std::size_t> index;
  std::vector<GraphNode> nodes;
  nodes.reserve(tuples.size());
  for (const auto& t : tuples) {
    tree.at(t.n_id);
    index.emplace(t.n_id, nodes.size());
    nodes.push_back({t.n_id, t.n_type, t.category, node_token(t, buckets), t.span, std::nullopt});
  }
  std::vector<GraphEdge> graph_edges;
  graph_edges.reserve(edges.size());
  for (const auto& e : edges) {
    auto s = index.find(e.e_s);
    auto t = index.find(e.e_e);
    if (s == index.end() || t == index.end()) continue;
    graph_edges.push_back({s->second, t->second, e.e_t});
    if (e.e_t == EdgeType::AstChild) nodes[t->second].parent = s->second;
  }
  return ContractGraph(std::move(nodes), std::move(graph_edges));
}

ContractGraph optimize_graph(const ContractGraph& graph, const LabelSet& labels) {
  const std::size_t n = graph.size();
  std::vector<bool> kept(n);
  for (std::size_t i = 0; i < n; ++i) {
    kept[i] = labels.contains(graph.node(i).node_type, graph.node(i).category);
  }
  // Nearest kept ancestor, following the original parent chain.
  auto kept_parent = [&](std::size_t i) -> std::optional<std::size_t> {
    auto p = graph.node(i).parent;
    while (p && !kept[*p]) p = graph.node(*p).parent;
    return p;
  };

  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& e : graph.edges()) {
    if (!kept[e.source] || !kept[e.target]) continue;
    adj[e.source].push_back(e.target);
    adj[e.target].push_back(e.source);
  }
  std::vector<bool> reached(n);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i) {
    if (kept[i] && !kept_parent(i)) {
      reached[i] = true;
      stack.push_back(i);
    }
  }
  while (!stack.empty()) {
    std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j : adj[i]) {
      if (!reached[j]) {
        reached[j] = true;
        stack.push_back(j);
      }
    }
  }

  std::vector<std::optional<std::size_t>> remap(n);
  std::vector<GraphNode> nodes;
  for (std::size_t i = 0; i < n; ++i) {
    if (!reached[i]) continue;
    remap[i] = nodes.size();
    nodes.push_back(graph.node(i));
  }
  if (nodes.empty()) throw Error(ErrorCode::EmptyGraph, "pruning removed every node");
  for (std::size_t i = 0, k = 0; i < n; ++i) {
    if (!reached[i]) continue;
    // Intermediate kept ancestors may be unreached; the topmost one never is.
    auto p = kept_parent(i);
    while (p && !reached[*p]) p = kept_parent(*p);
    nodes[k++].parent = p ? remap[*p] : std::nullopt;
  }
  std::vector<GraphEdge> edges;
  for (const auto& e : graph.edges()) {
    if (reached[e.source] && reached[e.target]) {
      edges.push_back({*remap[e.source], *remap[e.target], e.type});
    }
  }
  ContractGraph out(std::move(nodes), std::move(edges));
  out.label = graph.label;
  if (graph.features().cols() > 0) {
    Matrix f(out.size(), graph.features().cols());
    for (std::size_t i = 0; i < n; ++i) {
      if (!remap[i]) continue;
      auto src = graph.value(i);
      std::copy(src.begin(), src.end(), f.row(*remap[i]).begin());
    }
    out.set_features(std::move(f));
  }
  return out;
}

ContractGraph embed_nodes(const ContractGraph& graph, const Vocabulary& vocab) {
  Matrix x(graph.size(), vocab.dim());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    auto src = vocab.embedding().row(vocab.index_of(graph.node(i).token));
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }
  ContractGraph out = graph;
  out.set_features(std::move(x));
  return out;
}

NormalizedGraph normalize(const ContractGraph& graph) {
  const std::size_t n = graph.size();
  NormalizedGraph g;
  g.features = graph.features();
  g.a_hat = graph.adjacency();
  for (std::size_t i = 0; i < n; ++i) g.a_hat(i, i) += 1.0;
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double degree = 0.0;
    for (double v : g.a_hat.row(i)) degree += v;
    inv_sqrt[i] = 1.0 / std::sqrt(degree);
  }
  g.s_hat = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (g.a_hat(i, j) != 0.0) g.s_hat(i, j) = inv_sqrt[i] * g.a_hat(i, j) * inv_sqrt[j];
    }
  }
  g.node_ids.reserve(n);
  g.spans.reserve(n);
  for (const auto& node : graph.nodes()) {
    g.node_ids.push_back(node.ast_id);
    g.spans.push_back(node.span);
  }
  g.label = graph.label;
  return g;
}

ContractGraph tree_to_graph(const AstTree& tree, const RuleTable& rules, const LabelSet& labels,
                            std::size_t buckets) {
  auto tuples = extract_node_tuples(tree, rules);
  auto edges = extract_edges(tree, tuples);
  return optimize_graph(build_graph(tree, tuples, edges, buckets), labels);
}

NormalizedGraph source_to_graph(const AstTree& tree, const RuleTable& rules,
                                const LabelSet& labels, const Vocabulary& vocab) {
  return normalize(embed_nodes(tree_to_graph(tree, rules, labels, vocab.buckets()), vocab));
}

}  // namespace derail

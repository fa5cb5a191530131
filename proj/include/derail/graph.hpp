#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "derail/ast.hpp"
#include "derail/features.hpp"
#include "derail/label.hpp"
#include "derail/matrix.hpp"

namespace derail {

inline constexpr std::size_t kDefaultEmbeddingDim = 64;
inline constexpr std::size_t kDefaultNameBuckets = 256;

/// Vocabulary token for a node: "<type>:<name bucket>", with the name hashed
/// into `buckets` buckets ("-" when unnamed). Literals use their kind instead
/// of a name so that constant values do not grow the vocabulary.
std::string node_token(const NodeTuple& tuple, std::size_t buckets = kDefaultNameBuckets);

/// word2idx plus the embedding matrix M (|vocab| x dim). Index 0 is UNK.
class Vocabulary {
 public:
  static constexpr std::size_t kUnkIndex = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  /// `tokens[0]` must be the UNK token; embedding rows must match.
  Vocabulary(std::vector<std::string> tokens, Matrix embedding, std::uint64_t seed,
             std::size_t buckets);

  std::size_t size() const { return tokens_.size(); }
  std::size_t dim() const { return embedding_.cols(); }
  std::size_t buckets() const { return buckets_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t index_of(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const Matrix& embedding() const { return embedding_; }
  /// FNV-1a over dims, tokens and embedding bits, as 16 hex digits.
  std::string fingerprint() const;

  Json to_json() const;
  static Vocabulary from_json(const Json& j);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> word2idx_;
  Matrix embedding_;
  std::uint64_t seed_ = 0;
  std::size_t buckets_ = kDefaultNameBuckets;
};

/// Tokens are indexed by descending corpus frequency, ties broken
/// lexicographically; M is drawn uniformly from [-1/sqrt(d), 1/sqrt(d)].
/// Throws Error(EmptyCorpus) when `corpus` is empty.
Vocabulary build_vocabulary(std::span<const std::vector<NodeTuple>> corpus, std::size_t dim,
                            std::uint64_t seed, std::size_t buckets = kDefaultNameBuckets);
/// Same, over already-tokenized documents.
Vocabulary build_vocabulary_from_tokens(std::span<const std::vector<std::string>> documents,
                                        std::size_t dim, std::uint64_t seed,
                                        std::size_t buckets = kDefaultNameBuckets);

struct GraphNode {
  NodeId ast_id = 0;
  std::string node_type;
  DependencyCategory category = DependencyCategory::Declaration;
  std::string token;
  SrcSpan span;
  /// Graph index of the nearest categorized AST ancestor; nullopt for nodes
  /// hanging directly off the (uncategorized) upper levels of the tree.
  std::optional<std::size_t> parent;
};

struct GraphEdge {
  std::size_t source = 0;
  std::size_t target = 0;
  EdgeType type = EdgeType::AstChild;

  auto operator<=>(const GraphEdge&) const = default;
};

/// Pruned contract graph. Edges keep their direction; `adjacency` is the
/// symmetrized 0/1 matrix A and `neighbors(i)` lists exactly the j with
/// A[i][j] = 1. Features are n x 0 until `embed_nodes` runs.
class ContractGraph {
 public:
  /// Throws Error(EmptyGraph) for zero nodes and Error(ShapeMismatch) for
  /// out-of-range edge endpoints or parents.
  ContractGraph(std::vector<GraphNode> nodes, std::vector<GraphEdge> edges);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const GraphNode& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  const Matrix& adjacency() const { return adjacency_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_.at(i); }

  const Matrix& features() const { return features_; }
  /// Feature row of node i.
  std::span<const double> value(std::size_t i) const { return features_.row(i); }
  void set_features(Matrix features);

  std::optional<Label> label;

 private:
  std::vector<GraphNode> nodes_;
  std::vector<GraphEdge> edges_;
  Matrix adjacency_;
  std::vector<std::vector<std::size_t>> neighbors_;
  Matrix features_;
};

/// GCN-ready graph: features X, Â = A + I and Ŝ = D̂^{-1/2} Â D̂^{-1/2}.
struct NormalizedGraph {
  Matrix features;
  Matrix a_hat;
  Matrix s_hat;
  std::vector<NodeId> node_ids;
  std::vector<SrcSpan> spans;
  std::optional<Label> label;

  std::size_t size() const { return node_ids.size(); }
  bool operator==(const NormalizedGraph&) const = default;
};

/// Graph indices follow the tuples' DFS preorder. Throws Error(EmptyGraph)
/// when there are no tuples.
ContractGraph build_graph(const AstTree& tree, const std::vector<NodeTuple>& tuples,
                          const std::vector<EdgeTuple>& edges,
                          std::size_t buckets = kDefaultNameBuckets);

/// Drops nodes whose (type, category) is not in `labels` together with their
/// edges, then keeps only what a DFS reaches from the surviving roots: the
/// survivors with no surviving categorized ancestor. Throws Error(EmptyGraph)
/// when nothing survives.
ContractGraph optimize_graph(const ContractGraph& graph, const LabelSet& labels);

ContractGraph embed_nodes(const ContractGraph& graph, const Vocabulary& vocab);

NormalizedGraph normalize(const ContractGraph& graph);

/// extract -> build -> optimize, unembedded.
ContractGraph tree_to_graph(const AstTree& tree, const RuleTable& rules, const LabelSet& labels,
                            std::size_t buckets = kDefaultNameBuckets);

/// The whole source-to-matrices pipeline for one tree.
NormalizedGraph source_to_graph(const AstTree& tree, const RuleTable& rules,
                                const LabelSet& labels, const Vocabulary& vocab);

}  // namespace derail

#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "derail/gcn.hpp"
#include "derail/graph.hpp"

namespace derail::test {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(DERAIL_FIXTURE_DIR) / name;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline AstTree load_fixture(const std::string& stem) {
  return parse_ast_file(fixture(stem + ".ast.json"));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("derail_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                            double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = uniform(rng, -scale, scale);
  return m;
}

/// Random pruning input: a forest of parent links (parent index < child
/// index, like preorder), node kinds drawn from a small pool, and random
/// extra typed edges.
inline ContractGraph random_contract_graph(std::mt19937_64& rng, std::size_t n) {
  static const std::vector<std::pair<std::string, DependencyCategory>> kinds = {
      {"FunctionDefinition", DependencyCategory::Function},
      {"VariableDeclaration", DependencyCategory::Declaration},
      {"Assignment", DependencyCategory::Expression},
      {"IfStatement", DependencyCategory::Control},
      {"Identifier", DependencyCategory::Data},
      {"Identifier", DependencyCategory::Function},
  };
  std::vector<GraphNode> nodes(n);
  std::vector<GraphEdge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& kind = kinds[uniform_index(rng, 0, kinds.size() - 1)];
    nodes[i].ast_id = static_cast<NodeId>(100 + i);
    nodes[i].node_type = kind.first;
    nodes[i].category = kind.second;
    nodes[i].token = kind.first + ":-";
    if (i > 0 && uniform(rng, 0, 1) < 0.8) {
      nodes[i].parent = uniform_index(rng, 0, i - 1);
      edges.push_back({*nodes[i].parent, i, EdgeType::AstChild});
    }
  }
  const std::size_t extra = uniform_index(rng, 0, n);
  for (std::size_t k = 0; k < extra; ++k) {
    const auto a = uniform_index(rng, 0, n - 1);
    const auto b = uniform_index(rng, 0, n - 1);
    if (a == b) continue;
    edges.push_back({a, b, static_cast<EdgeType>(uniform_index(rng, 1, 4))});
  }
  return ContractGraph(std::move(nodes), std::move(edges));
}

/// Random symmetric 0/1 adjacency without self-loops.
inline Matrix random_adjacency(std::mt19937_64& rng, std::size_t n, double density = 0.4) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (uniform(rng, 0, 1) < density) a(i, j) = a(j, i) = 1.0;
    }
  }
  return a;
}

/// ContractGraph whose adjacency is exactly `a`.
inline ContractGraph graph_from_adjacency(const Matrix& a) {
  const std::size_t n = a.rows();
  std::vector<GraphNode> nodes(n);
  std::vector<GraphEdge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].ast_id = static_cast<NodeId>(i + 1);
    nodes[i].node_type = "Identifier";
    nodes[i].category = DependencyCategory::Data;
    nodes[i].token = "Identifier:-";
    for (std::size_t j = i + 1; j < n; ++j) {
      if (a(i, j) != 0.0) edges.push_back({i, j, EdgeType::DataDep});
    }
  }
  return ContractGraph(std::move(nodes), std::move(edges));
}

inline NormalizedGraph random_normalized(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  ContractGraph g = graph_from_adjacency(random_adjacency(rng, n));
  g.set_features(random_matrix(rng, n, d));
  return normalize(g);
}

inline GcnParams random_params(std::mt19937_64& rng, std::size_t d, std::size_t h,
                               double scale = 1.0) {
  GcnParams p = GcnParams::zeros(d, h);
  for (Matrix* t : p.tensors()) *t = random_matrix(rng, t->rows(), t->cols(), scale);
  return p;
}

/// Simultaneous node permutation: row/column perm[i] of the result is
/// row/column i of the input.
inline NormalizedGraph permute(const NormalizedGraph& g, const std::vector<std::size_t>& perm) {
  NormalizedGraph out = g;
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < g.features.cols(); ++c) out.features(perm[i], c) = g.features(i, c);
    for (std::size_t j = 0; j < n; ++j) {
      out.a_hat(perm[i], perm[j]) = g.a_hat(i, j);
      out.s_hat(perm[i], perm[j]) = g.s_hat(i, j);
    }
    out.node_ids[perm[i]] = g.node_ids[i];
    out.spans[perm[i]] = g.spans[i];
  }
  return out;
}

}  // namespace derail::test

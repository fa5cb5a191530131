#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <sstream>

#include "derail/corpus.hpp"
#include "derail/error.hpp"
#include "derail/graph.hpp"
#include "derail/graph_io.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace derail;
using namespace derail::test;

namespace {

NodeTuple tuple(std::string type, std::string name = "") {
  NodeTuple t;
  t.n_type = std::move(type);
  t.n_name = std::move(name);
  return t;
}

GraphNode gnode(std::string type, DependencyCategory cat, std::optional<std::size_t> parent = {}) {
  GraphNode n;
  n.node_type = std::move(type);
  n.category = cat;
  n.token = n.node_type + ":-";
  n.parent = parent;
  return n;
}

LabelSet all_pairs_of(const ContractGraph& g) {
  std::set<std::pair<std::string, DependencyCategory>> s;
  for (const auto& n : g.nodes()) s.insert({n.node_type, n.category});
  return LabelSet(std::move(s));
}

ContractGraph pipeline_graph(const AstTree& tree) {
  return tree_to_graph(tree, RuleTable::defaults(), RuleTable::defaults().label_set());
}

}  // namespace

TEST_CASE("node tokens") {
  CHECK(node_token(tuple("Block")) == "Block:-");
  auto lit = tuple("Literal", "");
  lit.value_kind = "number";
  lit.n_value = "12345";
  CHECK(node_token(lit) == "Literal:number");
  const auto named = node_token(tuple("Identifier", "balance"));
  CHECK(named.starts_with("Identifier:"));
  CHECK(std::stoul(named.substr(11)) < kDefaultNameBuckets);
  CHECK(node_token(tuple("Identifier", "balance"), 1) == "Identifier:0");
}

TEST_CASE("vocabulary construction") {
  SUBCASE("one token kind gives UNK plus that token") {
    std::vector<std::vector<NodeTuple>> corpus{{tuple("Block"), tuple("Block")}};
    const auto v = build_vocabulary(corpus, 4, 1);
    CHECK(v.size() == 2);
    CHECK(v.token(0) == "<unk>");
    CHECK(v.index_of("Block:-") == 1);
    CHECK(v.index_of("never-seen") == Vocabulary::kUnkIndex);
  }
  SUBCASE("frequency then lexicographic order, bounded uniform embedding") {
    std::vector<std::vector<NodeTuple>> corpus{
        {tuple("B"), tuple("C"), tuple("A")}, {tuple("C"), tuple("B"), tuple("D")}};
    const auto v = build_vocabulary(corpus, 16, 3);
    CHECK(v.tokens() == std::vector<std::string>{"<unk>", "B:-", "C:-", "A:-", "D:-"});
    for (double x : v.embedding().values()) CHECK(std::abs(x) <= 1.0 / 4.0);
  }
  SUBCASE("same seed is bit-identical, another seed is not") {
    std::vector<std::vector<NodeTuple>> corpus{{tuple("A"), tuple("B")}};
    CHECK(build_vocabulary(corpus, 8, 5).embedding() == build_vocabulary(corpus, 8, 5).embedding());
    CHECK_FALSE(build_vocabulary(corpus, 8, 5).embedding() == build_vocabulary(corpus, 8, 6).embedding());
  }
  SUBCASE("token order inside or across documents does not matter") {
    std::mt19937_64 rng(9);
    std::vector<NodeTuple> flat;
    for (int i = 0; i < 40; ++i) flat.push_back(tuple("T" + std::to_string(uniform_index(rng, 0, 7))));
    std::vector<std::vector<NodeTuple>> a{flat};
    auto shuffled = flat;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<std::vector<NodeTuple>> b{
        std::vector<NodeTuple>(shuffled.begin(), shuffled.begin() + 15),
        std::vector<NodeTuple>(shuffled.begin() + 15, shuffled.end())};
    CHECK(build_vocabulary(a, 4, 1).tokens() == build_vocabulary(b, 4, 1).tokens());
  }
  SUBCASE("errors") {
    std::vector<std::vector<NodeTuple>> empty;
    CHECK_THROWS_AS(build_vocabulary(empty, 4, 1), Error);
  }
  SUBCASE("json round trip keeps the fingerprint; tampering is detected") {
    std::vector<std::vector<NodeTuple>> corpus{{tuple("A"), tuple("B"), tuple("B")}};
    const auto v = build_vocabulary(corpus, 3, 2);
    const auto back = Vocabulary::from_json(Json::parse(v.to_json().dump()));
    CHECK(back.fingerprint() == v.fingerprint());
    CHECK(back.embedding() == v.embedding());
    auto j = v.to_json();
    j["embedding"][1][0] = 0.125;
    try {
      Vocabulary::from_json(j);
      FAIL("tampered vocabulary accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::VocabularyMismatch);
    }
  }
}

TEST_CASE("build_graph adjacency") {
  SUBCASE("one node, no edges") {
    ContractGraph g({gnode("A", DependencyCategory::Data)}, {});
    CHECK(g.size() == 1);
    CHECK(g.adjacency() == Matrix{{0.0}});
  }
  SUBCASE("one edge is symmetrized") {
    ContractGraph g({gnode("A", DependencyCategory::Data), gnode("B", DependencyCategory::Data)},
                    {{0, 1, EdgeType::DataDep}});
    CHECK(g.adjacency() == Matrix{{0.0, 1.0}, {1.0, 0.0}});
    CHECK(g.neighbors(0) == std::vector<std::size_t>{1});
    CHECK(g.neighbors(1) == std::vector<std::size_t>{0});
    CHECK(g.edges().size() == 1);  // direction kept out of band
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(ContractGraph({}, {}), Error);
    CHECK_THROWS_AS(ContractGraph({gnode("A", DependencyCategory::Data)}, {{0, 3, EdgeType::DataDep}}), Error);
    const auto minimal = load_fixture("minimal");
    CHECK_THROWS_AS(build_graph(minimal, extract_node_tuples(minimal), {}), Error);
  }
  SUBCASE("transfer handler: call edge appears in both directions, A is symmetric") {
    const auto tree = load_fixture("token_handler");
    const auto tuples = extract_node_tuples(tree);
    const auto g = build_graph(tree, tuples, extract_edges(tree, tuples));
    CHECK(g.size() == tuples.size());
    bool found = false;
    for (const auto& e : g.edges()) {
      if (e.type != EdgeType::FuncCall) continue;
      found = true;
      CHECK(g.adjacency()(e.source, e.target) == 1.0);
      CHECK(g.adjacency()(e.target, e.source) == 1.0);
    }
    CHECK(found);
    CHECK(g.adjacency() == transpose(g.adjacency()));
    for (std::size_t i = 0; i < g.size(); ++i) {
      std::vector<std::size_t> expected;
      for (std::size_t j = 0; j < g.size(); ++j) {
        if (g.adjacency()(i, j) == 1.0) expected.push_back(j);
      }
      CHECK(g.neighbors(i) == expected);
    }
  }
}

TEST_CASE("optimize_graph") {
  SUBCASE("label set holding every pair is the identity") {
    const auto g = build_graph(load_fixture("assign"), extract_node_tuples(load_fixture("assign")),
                               extract_edges(load_fixture("assign"), extract_node_tuples(load_fixture("assign"))));
    const auto out = optimize_graph(g, all_pairs_of(g));
    CHECK(ids_of(out) == ids_of(g));
    CHECK(edge_keys(out) == edge_keys(g));
  }
  SUBCASE("empty label set removes everything") {
    ContractGraph g({gnode("A", DependencyCategory::Data)}, {});
    CHECK_THROWS_AS(optimize_graph(g, LabelSet{}), Error);
  }
  SUBCASE("chain a-b-c with b dropped keeps only a") {
    std::vector<GraphNode> nodes{gnode("A", DependencyCategory::Data), gnode("B", DependencyCategory::Control, 0),
                                 gnode("C", DependencyCategory::Data, 1)};
    for (std::size_t i = 0; i < 3; ++i) nodes[i].ast_id = static_cast<NodeId>(i + 1);
    ContractGraph g(nodes, {{0, 1, EdgeType::AstChild}, {1, 2, EdgeType::AstChild}});
    const LabelSet labels({{"A", DependencyCategory::Data}, {"C", DependencyCategory::Data}});
    const auto out = optimize_graph(g, labels);
    CHECK(ids_of(out) == std::set<NodeId>{1});
    CHECK(survivors_oracle(g, labels) == std::set<NodeId>{1});
  }
  SUBCASE("features and label travel with survivors") {
    ContractGraph g({gnode("A", DependencyCategory::Data), gnode("B", DependencyCategory::Data, 0)},
                    {{0, 1, EdgeType::AstChild}});
    g.set_features(Matrix{{1.0, 2.0}, {3.0, 4.0}});
    g.label = Label::Defective;
    const auto out = optimize_graph(g, LabelSet({{"B", DependencyCategory::Data}}));
    CHECK(out.size() == 1);
    CHECK(out.features() == Matrix{{3.0, 4.0}});
    CHECK(out.label == Label::Defective);
  }
  SUBCASE("random graphs: oracle equality, idempotence, no dangling or new edges") {
    std::mt19937_64 rng(77);
    const std::vector<std::pair<std::string, DependencyCategory>> pool = {
        {"FunctionDefinition", DependencyCategory::Function}, {"VariableDeclaration", DependencyCategory::Declaration},
        {"Assignment", DependencyCategory::Expression},       {"IfStatement", DependencyCategory::Control},
        {"Identifier", DependencyCategory::Data},             {"Identifier", DependencyCategory::Function}};
    for (int trial = 0; trial < 300; ++trial) {
      const auto g = random_contract_graph(rng, uniform_index(rng, 3, 10));
      std::set<std::pair<std::string, DependencyCategory>> chosen;
      for (const auto& p : pool) {
        if (uniform(rng, 0, 1) < 0.6) chosen.insert(p);
      }
      const LabelSet labels(chosen);
      const auto expected = survivors_oracle(g, labels);
      if (expected.empty()) {
        CHECK_THROWS_AS(optimize_graph(g, labels), Error);
        continue;
      }
      const auto once = optimize_graph(g, labels);
      CHECK(ids_of(once) == expected);
      const auto twice = optimize_graph(once, labels);
      CHECK(ids_of(twice) == ids_of(once));
      CHECK(edge_keys(twice) == edge_keys(once));
      const auto before = edge_keys(g);
      for (const auto& k : edge_keys(once)) CHECK(before.contains(k));
      for (const auto& e : once.edges()) {
        CHECK(e.source < once.size());
        CHECK(e.target < once.size());
      }
    }
  }
}

TEST_CASE("embed_nodes") {
  std::vector<GraphNode> nodes{gnode("Known", DependencyCategory::Data), gnode("Unseen", DependencyCategory::Data)};
  ContractGraph g(nodes, {});
  std::vector<std::vector<NodeTuple>> corpus{{tuple("Known")}};
  const auto vocab = build_vocabulary(corpus, 5, 8);
  const auto e = embed_nodes(g, vocab);
  REQUIRE(e.features().rows() == 2);
  REQUIRE(e.features().cols() == 5);
  const auto known = vocab.embedding().row(vocab.index_of("Known:-"));
  const auto unk = vocab.embedding().row(Vocabulary::kUnkIndex);
  CHECK(std::equal(known.begin(), known.end(), e.value(0).begin()));
  CHECK(std::equal(unk.begin(), unk.end(), e.value(1).begin()));
  CHECK(all_finite(e.features()));
}

TEST_CASE("normalize") {
  SUBCASE("single node") {
    const auto n = normalize(ContractGraph({gnode("A", DependencyCategory::Data)}, {}));
    CHECK(n.a_hat == Matrix{{1.0}});
    CHECK(n.s_hat == Matrix{{1.0}});
  }
  SUBCASE("two connected nodes") {
    const auto n = normalize(graph_from_adjacency(Matrix{{0, 1}, {1, 0}}));
    CHECK(max_abs_diff(n.s_hat, Matrix{{0.5, 0.5}, {0.5, 0.5}}) < 1e-15);
  }
  SUBCASE("random graphs against a dense computation and an eigensolver") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
      const auto n = uniform_index(rng, 1, 8);
      const auto a = random_adjacency(rng, n, uniform(rng, 0.0, 1.0));
      const auto g = normalize(graph_from_adjacency(a));
      CHECK(max_abs_diff(g.s_hat, brute_force_s_hat(a)) <= 1e-12);
      CHECK(g.s_hat == transpose(g.s_hat));
      Eigen::MatrixXd s(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        double deg = 0;
        for (std::size_t j = 0; j < n; ++j) {
          s(i, j) = g.s_hat(i, j);
          deg += g.a_hat(i, j);
          CHECK(g.s_hat(i, j) >= 0.0);
          CHECK(g.s_hat(i, j) <= 1.0);
        }
        CHECK(g.a_hat(i, i) == 1.0 + a(i, i));
        CHECK(std::abs(g.s_hat(i, i) - 1.0 / deg) < 1e-15);
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
      CHECK(eig.eigenvalues().minCoeff() >= -1.0 - 1e-12);
      CHECK(eig.eigenvalues().maxCoeff() <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("whole pipeline is deterministic and serializes losslessly") {
  const auto contracts = synth_generate(2, 4);
  std::vector<std::vector<NodeTuple>> corpus;
  for (const auto& c : contracts) corpus.push_back(extract_node_tuples(parse_ast_json(c.ast_json)));
  const auto vocab = build_vocabulary(corpus, 16, 4);
  const auto& rules = RuleTable::defaults();
  for (const auto& c : contracts) {
    const auto tree = parse_ast_json(c.ast_json);
    auto g = source_to_graph(tree, rules, rules.label_set(), vocab);
    CHECK(g == source_to_graph(parse_ast_json(c.ast_json), rules, rules.label_set(), vocab));
    g.label = c.label;

    std::stringstream bin;
    write_graph(bin, g);
    CHECK(read_graph(bin) == g);
    CHECK(graph_from_json(Json::parse(to_json(g).dump())) == g);
  }
  std::stringstream bad("SGGX....");
  CHECK_THROWS_AS(read_graph(bad), Error);

  const auto path = scratch_dir("graph_io") / "g.sgg";
  const auto g = source_to_graph(parse_ast_json(contracts[0].ast_json), rules, rules.label_set(), vocab);
  save_graph(path, g);
  CHECK(load_graph(path) == g);
}

TEST_CASE("transfer handler survives the whole pipeline with its entry point") {
  const auto tree = load_fixture("token_handler");
  const auto g = pipeline_graph(tree);
  bool found = false;
  for (const auto& n : g.nodes()) {
    found |= n.category == DependencyCategory::Function && n.node_type == "FunctionDefinition" &&
             tree.at(n.ast_id).name == "safeTransferFrom";
  }
  CHECK(found);
}

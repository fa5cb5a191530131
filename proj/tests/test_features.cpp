#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "derail/corpus.hpp"
#include "derail/error.hpp"
#include "derail/features.hpp"
#include "support.hpp"

using namespace derail;
using derail::test::fixture;
using derail::test::load_fixture;
using derail::test::read_text;

namespace {

AstNode node_of(std::string type, std::map<std::string, std::string> attrs = {}) {
  AstNode n;
  n.id = 1;
  n.node_type = std::move(type);
  n.attributes = std::move(attrs);
  return n;
}

// Raw-JSON helpers for oracles that do not go through the library.
void collect(const nlohmann::json& j, const std::function<void(const nlohmann::json&)>& visit) {
  if (j.is_object()) {
    if (j.contains("nodeType")) visit(j);
    for (const auto& [k, v] : j.items()) collect(v, visit);
  } else if (j.is_array()) {
    for (const auto& v : j) collect(v, visit);
  }
}

nlohmann::json raw_fixture(const std::string& stem) {
  return nlohmann::json::parse(read_text(fixture(stem + ".ast.json")));
}

std::vector<AstTree> all_trees() {
  std::vector<AstTree> trees;
  for (const auto* stem : {"minimal", "state_init", "assign", "token_handler"}) {
    trees.push_back(load_fixture(stem));
  }
  for (const auto& c : synth_generate(6, 11)) trees.push_back(parse_ast_json(c.ast_json));
  return trees;
}

}  // namespace

TEST_CASE("categorize_node follows the shipped rule table") {
  CHECK(categorize_node(node_of("VariableDeclaration")) == DependencyCategory::Declaration);
  CHECK(categorize_node(node_of("IfStatement")) == DependencyCategory::Control);
  CHECK(categorize_node(node_of("DoWhileStatement")) == DependencyCategory::Control);
  CHECK(categorize_node(node_of("BinaryOperation")) == DependencyCategory::Expression);
  CHECK(categorize_node(node_of("FunctionCall")) == DependencyCategory::Function);
  CHECK_FALSE(categorize_node(node_of("PragmaDirective")));
  CHECK_FALSE(categorize_node(node_of("SourceUnit")));
  CHECK_FALSE(categorize_node(node_of("SomeFutureNode")));
}

TEST_CASE("identifiers take the category of what they reference") {
  const std::string key = "typeDescriptions.typeIdentifier";
  CHECK(categorize_node(node_of("Identifier", {{key, "t_uint256"}})) == DependencyCategory::Data);
  CHECK(categorize_node(node_of("Identifier", {{key, "t_function_internal_nonpayable$__$"}})) ==
        DependencyCategory::Function);
  CHECK(categorize_node(node_of("Identifier", {{key, "t_modifier$__$"}})) == DependencyCategory::Function);
  CHECK_FALSE(categorize_node(node_of("Identifier", {{key, "t_type$_t_contract$_C_$1_$"}})));
  CHECK(categorize_node(node_of("Identifier", {{"type", "function (uint256)"}})) ==
        DependencyCategory::Function);
  CHECK(categorize_node(node_of("Identifier")) == DependencyCategory::Data);
}

TEST_CASE("categorization is a function of type and attributes only") {
  auto a = node_of("Identifier", {{"typeDescriptions.typeIdentifier", "t_address"}});
  auto b = a;
  b.id = 999;
  b.span = {5, 5, 0};
  b.name = "other";
  CHECK(categorize_node(a) == categorize_node(b));
}

TEST_CASE("rule table text format") {
  const auto table = RuleTable::parse(
      "# comment\n"
      "Identifier  kind=x&name?   Data\n"
      "Identifier  kind!=y        Function\n"
      "Identifier  *              -\n");
  REQUIRE(table.rules().size() == 3);
  CHECK(table.categorize(node_of("Identifier", {{"kind", "x"}, {"name", "n"}})) == DependencyCategory::Data);
  CHECK(table.categorize(node_of("Identifier", {{"kind", "x"}})) == DependencyCategory::Function);
  CHECK_FALSE(table.categorize(node_of("Identifier", {{"kind", "y"}})));
  CHECK(table.label_set().entries().size() == 2);

  for (std::string bad : {"Identifier *\n", "X * Nonsense\n", "X * Data extra\n", "X a~b Data\n", "# only\n"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(RuleTable::parse(bad), Error);
  }
  try {
    RuleTable::parse("A * Data\n\nB * Wrong\n");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadFormat);
    CHECK(e.location() == 3);
  }
}

TEST_CASE("rule audit: defaults are clean, shadowed rules are reported") {
  CHECK(RuleTable::defaults().audit().empty());
  const auto shadowed = RuleTable::parse("Identifier * Data\nIdentifier kind=f Function\n");
  CHECK(shadowed.audit().size() == 1);
}

TEST_CASE("label set covers every categorized pair of the defaults") {
  const auto labels = RuleTable::defaults().label_set();
  CHECK_FALSE(labels.empty());
  CHECK(labels.contains("VariableDeclaration", DependencyCategory::Declaration));
  CHECK(labels.contains("Identifier", DependencyCategory::Data));
  CHECK(labels.contains("Identifier", DependencyCategory::Function));
  CHECK_FALSE(labels.contains("VariableDeclaration", DependencyCategory::Data));
  CHECK_FALSE(labels.contains("PragmaDirective", DependencyCategory::Control));
}

TEST_CASE("node tuples") {
  SUBCASE("pragma-only source unit has none") {
    const auto tree = parse_ast_json(R"({"id": 2, "nodeType": "SourceUnit", "src": "0:23:0", "nodes": [
      {"id": 1, "nodeType": "PragmaDirective", "literals": ["solidity", "^0.8.0"], "src": "0:23:0"}]})");
    CHECK(extract_node_tuples(tree).empty());
  }
  SUBCASE("transfer handler entry point") {
    const auto tuples = extract_node_tuples(load_fixture("token_handler"));
    auto it = std::find_if(tuples.begin(), tuples.end(),
                           [](const NodeTuple& t) { return t.n_name == "safeTransferFrom"; });
    REQUIRE(it != tuples.end());
    CHECK(it->n_type == "FunctionDefinition");
    CHECK(it->category == DependencyCategory::Function);
  }
  SUBCASE("state variable initializer value, checked against the raw compiler output") {
    std::string raw_value;
    collect(raw_fixture("state_init"), [&](const nlohmann::json& j) {
      if (j["nodeType"] == "VariableDeclaration" && j["name"] == "x") raw_value = j["value"]["value"];
    });
    REQUIRE(raw_value == "5");
    const auto tuples = extract_node_tuples(load_fixture("state_init"));
    auto it = std::find_if(tuples.begin(), tuples.end(), [](const NodeTuple& t) {
      return t.n_type == "VariableDeclaration" && t.n_name == "x";
    });
    REQUIRE(it != tuples.end());
    CHECK(it->n_value == raw_value);
    CHECK(it->category == DependencyCategory::Declaration);
  }
  SUBCASE("operators carry their operator as name; literals their kind") {
    const auto tuples = extract_node_tuples(load_fixture("assign"));
    bool saw_plus = false, saw_assign = false, saw_literal = false;
    for (const auto& t : tuples) {
      saw_plus |= t.n_type == "BinaryOperation" && t.n_name == "+";
      saw_assign |= t.n_type == "Assignment" && t.n_name == "=";
      saw_literal |= t.n_type == "Literal" && t.n_value == "1" && t.value_kind == "number";
    }
    CHECK(saw_plus);
    CHECK(saw_assign);
    CHECK(saw_literal);
  }
  SUBCASE("tuples are the categorized nodes in preorder, each once") {
    for (const auto& tree : all_trees()) {
      const auto tuples = extract_node_tuples(tree);
      std::vector<NodeId> expected;
      for (NodeId id : tree.preorder()) {
        if (categorize_node(tree.at(id))) expected.push_back(id);
      }
      std::vector<NodeId> got;
      for (const auto& t : tuples) got.push_back(t.n_id);
      CHECK(got == expected);
    }
  }
}

TEST_CASE("edges") {
  SUBCASE("function with an empty body has none") {
    const auto tree = parse_ast_json(R"({"id": 6, "nodeType": "SourceUnit", "src": "0:40:0", "nodes": [
      {"id": 5, "nodeType": "ContractDefinition", "name": "C", "src": "0:40:0", "nodes": [
        {"id": 4, "nodeType": "FunctionDefinition", "name": "f", "src": "13:25:0", "visibility": "public",
         "parameters": {"id": 1, "nodeType": "ParameterList", "parameters": [], "src": "23:2:0"},
         "returnParameters": {"id": 2, "nodeType": "ParameterList", "parameters": [], "src": "33:0:0"},
         "body": {"id": 3, "nodeType": "Block", "statements": [], "src": "33:2:0"}}]}]})");
    const auto tuples = extract_node_tuples(tree);
    CHECK(tuples.size() == 1);
    CHECK(extract_edges(tree, tuples).empty());
  }
  SUBCASE("x = y + 1 puts a data edge from y to x") {
    // Oracle: every Identifier under the right-hand side points at the
    // left-hand side node; nothing else is a data edge.
    std::set<std::pair<NodeId, NodeId>> expected;
    collect(raw_fixture("assign"), [&](const nlohmann::json& j) {
      if (j["nodeType"] != "Assignment") return;
      const NodeId lhs = j["leftHandSide"]["id"];
      collect(j["rightHandSide"], [&](const nlohmann::json& k) {
        if (k["nodeType"] == "Identifier") expected.insert({k["id"].get<NodeId>(), lhs});
      });
    });
    REQUIRE(expected.size() == 1);

    const auto tree = load_fixture("assign");
    const auto edges = extract_edges(tree, extract_node_tuples(tree));
    std::set<std::pair<NodeId, NodeId>> data;
    for (const auto& e : edges) {
      if (e.e_t == EdgeType::DataDep) data.insert({e.e_s, e.e_e});
    }
    CHECK(data == expected);
    const auto [y, x] = *expected.begin();
    CHECK(tree.at(y).name == "y");
    CHECK(tree.at(x).name == "x");
  }
  SUBCASE("call to a function of the same contract") {
    NodeId call = 0, target = 0;
    collect(raw_fixture("token_handler"), [&](const nlohmann::json& j) {
      if (j["nodeType"] == "FunctionCall" && j["expression"].value("name", "") == "execute") call = j["id"];
      if (j["nodeType"] == "FunctionDefinition" && j["name"] == "execute") target = j["id"];
    });
    REQUIRE(call != 0);
    REQUIRE(target != 0);
    const auto tree = load_fixture("token_handler");
    const auto edges = extract_edges(tree, extract_node_tuples(tree));
    CHECK(std::find(edges.begin(), edges.end(), EdgeTuple{call, target, EdgeType::FuncCall}) != edges.end());
  }
  SUBCASE("control nodes point at the first categorized node of each branch") {
    const auto contracts = synth_generate(3, 5);
    const auto tree = parse_ast_json(contracts[1].ast_json);  // clean: has a guard
    const auto edges = extract_edges(tree, extract_node_tuples(tree));
    std::size_t control = 0;
    for (const auto& e : edges) {
      if (e.e_t != EdgeType::ControlFlow) continue;
      ++control;
      const auto& src = tree.at(e.e_s);
      CHECK(categorize_node(src) == DependencyCategory::Control);
      CHECK(categorize_node(tree.at(e.e_e)));
    }
    CHECK(control > 0);
  }
}

TEST_CASE("edge properties over every fixture") {
  for (const auto& tree : all_trees()) {
    const auto tuples = extract_node_tuples(tree);
    std::set<NodeId> ids;
    for (const auto& t : tuples) ids.insert(t.n_id);
    const auto edges = extract_edges(tree, tuples);
    CHECK(std::is_sorted(edges.begin(), edges.end()));
    CHECK(std::adjacent_find(edges.begin(), edges.end()) == edges.end());
    for (const auto& e : edges) {
      CHECK(ids.contains(e.e_s));
      CHECK(ids.contains(e.e_e));
      if (e.e_t != EdgeType::AstChild && e.e_t != EdgeType::ControlFlow) CHECK(e.e_s != e.e_e);
    }
    CHECK(extract_edges(tree, tuples) == edges);
    CHECK(extract_node_tuples(tree) == tuples);
  }
}

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "derail/ast.hpp"

namespace derail {

enum class DependencyCategory { Declaration, Expression, Control, Data, Function };

std::string_view to_string(DependencyCategory category);
std::optional<DependencyCategory> parse_category(std::string_view text);

/// One condition on a node attribute. Text forms: `key=value`, `key!=value`,
/// `key^=prefix`, `key?` (present) and `*` (always true).
struct AttributePredicate {
  enum class Op { Always, Equals, NotEquals, Prefix, Present };
  Op op = Op::Always;
  std::string key;
  std::string value;

  bool matches(const AstNode& node) const;
};

struct CategoryRule {
  std::string node_type;
  std::vector<AttributePredicate> predicates;  // conjunction
  std::optional<DependencyCategory> category;  // nullopt: explicitly uncategorized
  std::size_t line = 0;

  bool matches(const AstNode& node) const;
};

/// (node_type, category) pairs retained by graph pruning.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::set<std::pair<std::string, DependencyCategory>> entries)
      : entries_(std::move(entries)) {}

  bool contains(std::string_view node_type, DependencyCategory category) const;
  const auto& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::set<std::pair<std::string, DependencyCategory>> entries_;
};

/// Ordered node-type -> category rules; the first matching rule decides.
///
/// Text format, one rule per line, '#' starts a comment:
///
///     <NodeType>  <predicate>[&<predicate>...]  <Category | ->
///
/// where `-` marks a matching node as uncategorized.
class RuleTable {
 public:
  explicit RuleTable(std::vector<CategoryRule> rules) : rules_(std::move(rules)) {}

  /// Throws Error(BadFormat) naming the offending line.
  static RuleTable parse(std::string_view text);
  static RuleTable load(const std::filesystem::path& path);
  static const RuleTable& defaults();
  static std::string_view default_text();

  std::optional<DependencyCategory> categorize(const AstNode& node) const;
  /// Every (node_type, category) pair a rule can produce.
  LabelSet label_set() const;
  /// Problems that would make the table ambiguous: an unconditional rule for
  /// a type followed by more rules for the same type (unreachable).
  std::vector<std::string> audit() const;

  const std::vector<CategoryRule>& rules() const { return rules_; }

 private:
  std::vector<CategoryRule> rules_;
};

std::optional<DependencyCategory> categorize_node(const AstNode& node,
                                                  const RuleTable& rules = RuleTable::defaults());

struct NodeTuple {
  NodeId n_id = 0;
  std::string n_name;
  std::string n_type;
  std::string n_value;
  DependencyCategory category = DependencyCategory::Declaration;
  /// Literal kind ("number", "string", "bool", ...) for Literal nodes.
  std::string value_kind;
  SrcSpan span;

  bool operator==(const NodeTuple&) const = default;
};

enum class EdgeType { AstChild, ControlFlow, DataDep, FuncCall, DeclRef };

std::string_view to_string(EdgeType type);

struct EdgeTuple {
  NodeId e_s = 0;
  NodeId e_e = 0;
  EdgeType e_t = EdgeType::AstChild;

  auto operator<=>(const EdgeTuple&) const = default;
};

/// Categorized nodes in depth-first preorder.
std::vector<NodeTuple> extract_node_tuples(const AstTree& tree,
                                           const RuleTable& rules = RuleTable::defaults());

/// Typed edges between categorized nodes, sorted by (e_s, e_e, e_t) and
/// deduplicated. AstChild edges link each categorized node to its nearest
/// categorized ancestor, so uncategorized wrappers (Block,
/// ExpressionStatement, ...) do not disconnect the graph.
std::vector<EdgeTuple> extract_edges(const AstTree& tree, const std::vector<NodeTuple>& tuples);

}  // namespace derail

#include "derail/features.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "derail/error.hpp"

namespace derail {

namespace {

#include "default_rules.inc"  // kDefaultRules, generated from data/rules.txt

std::optional<NodeId> parse_id(const std::string* text) {
  if (!text) return std::nullopt;
  NodeId id = 0;
  auto [p, ec] = std::from_chars(text->data(), text->data() + text->size(), id);
  if (ec != std::errc{} || p != text->data() + text->size()) return std::nullopt;
  return id;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

AttributePredicate parse_predicate(std::string_view text, std::size_t line) {
  AttributePredicate p;
  if (text == "*") return p;
  if (text.ends_with("?")) {
    p.op = AttributePredicate::Op::Present;
    p.key = std::string(text.substr(0, text.size() - 1));
  } else if (auto pos = text.find("!="); pos != std::string_view::npos) {
    p.op = AttributePredicate::Op::NotEquals;
    p.key = std::string(text.substr(0, pos));
    p.value = std::string(text.substr(pos + 2));
  } else if (auto pos2 = text.find("^="); pos2 != std::string_view::npos) {
    p.op = AttributePredicate::Op::Prefix;
    p.key = std::string(text.substr(0, pos2));
    p.value = std::string(text.substr(pos2 + 2));
  } else if (auto pos3 = text.find('='); pos3 != std::string_view::npos) {
    p.op = AttributePredicate::Op::Equals;
    p.key = std::string(text.substr(0, pos3));
    p.value = std::string(text.substr(pos3 + 1));
  } else {
    throw Error(ErrorCode::BadFormat, "unrecognized predicate '" + std::string(text) + "'", line);
  }
  if (p.key.empty()) {
    throw Error(ErrorCode::BadFormat, "predicate without attribute key", line);
  }
  return p;
}

}  // namespace

std::string_view to_string(DependencyCategory category) {
  switch (category) {
    case DependencyCategory::Declaration: return "Declaration";
    case DependencyCategory::Expression: return "Expression";
    case DependencyCategory::Control: return "Control";
    case DependencyCategory::Data: return "Data";
    case DependencyCategory::Function: return "Function";
  }
  return "?";
}

std::optional<DependencyCategory> parse_category(std::string_view text) {
  for (auto c : {DependencyCategory::Declaration, DependencyCategory::Expression,
                 DependencyCategory::Control, DependencyCategory::Data,
                 DependencyCategory::Function}) {
    if (to_string(c) == text) return c;
  }
  return std::nullopt;
}

std::string_view to_string(EdgeType type) {
  switch (type) {
    case EdgeType::AstChild: return "AstChild";
    case EdgeType::ControlFlow: return "ControlFlow";
    case EdgeType::DataDep: return "DataDep";
    case EdgeType::FuncCall: return "FuncCall";
    case EdgeType::DeclRef: return "DeclRef";
  }
  return "?";
}

bool AttributePredicate::matches(const AstNode& node) const {
  if (op == Op::Always) return true;
  const std::string* v = node.attribute(key);
  switch (op) {
    case Op::Present: return v != nullptr;
    case Op::Equals: return v && *v == value;
    case Op::NotEquals: return !v || *v != value;
    case Op::Prefix: return v && v->starts_with(value);
    case Op::Always: break;
  }
  return true;
}

bool CategoryRule::matches(const AstNode& node) const {
  if (node.node_type != node_type) return false;
  return std::all_of(predicates.begin(), predicates.end(),
                     [&](const AttributePredicate& p) { return p.matches(node); });
}

bool LabelSet::contains(std::string_view node_type, DependencyCategory category) const {
  return entries_.contains({std::string(node_type), category});
}

RuleTable RuleTable::parse(std::string_view text) {
  std::vector<CategoryRule> rules;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    std::istringstream cols(line);
    std::string type, preds, category, extra;
    if (!(cols >> type >> preds >> category) || (cols >> extra)) {
      throw Error(ErrorCode::BadFormat, "expected 3 columns: '" + trim(line) + "'", line_no);
    }
    CategoryRule rule;
    rule.node_type = type;
    rule.line = line_no;
    std::stringstream ps(preds);
    for (std::string part; std::getline(ps, part, '&');) {
      auto pred = parse_predicate(part, line_no);
      if (pred.op != AttributePredicate::Op::Always) rule.predicates.push_back(std::move(pred));
    }
    if (category != "-") {
      rule.category = parse_category(category);
      if (!rule.category) {
        throw Error(ErrorCode::BadFormat, "unknown category '" + category + "'", line_no);
      }
    }
    rules.push_back(std::move(rule));
  }
  if (rules.empty()) throw Error(ErrorCode::BadFormat, "rule table has no rules");
  return RuleTable(std::move(rules));
}

RuleTable RuleTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open rule table " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string_view RuleTable::default_text() {
  return kDefaultRules;
}

const RuleTable& RuleTable::defaults() {
  static const RuleTable table = parse(kDefaultRules);
  return table;
}

std::optional<DependencyCategory> RuleTable::categorize(const AstNode& node) const {
  for (const auto& rule : rules_) {
    if (rule.matches(node)) return rule.category;
  }
  return std::nullopt;
}

LabelSet RuleTable::label_set() const {
  std::set<std::pair<std::string, DependencyCategory>> entries;
  for (const auto& rule : rules_) {
    if (rule.category) entries.emplace(rule.node_type, *rule.category);
  }
  return LabelSet(std::move(entries));
}

std::vector<std::string> RuleTable::audit() const {
  std::vector<std::string> issues;
  std::unordered_map<std::string, std::size_t> catch_all;
  for (const auto& rule : rules_) {
    if (auto it = catch_all.find(rule.node_type); it != catch_all.end()) {
      issues.push_back("line " + std::to_string(rule.line) + ": rule for " + rule.node_type +
                       " is shadowed by the unconditional rule on line " +
                       std::to_string(it->second));
      continue;
    }
    if (rule.predicates.empty()) catch_all.emplace(rule.node_type, rule.line);
  }
  return issues;
}

std::optional<DependencyCategory> categorize_node(const AstNode& node, const RuleTable& rules) {
  return rules.categorize(node);
}

namespace {

// Short text for simple initializers; compound expressions yield "".
std::string initializer_text(const AstTree& tree, std::optional<NodeId> id) {
  if (!id) return {};
  const AstNode* n = tree.find(*id);
  if (!n) return {};
  if (n->node_type == "Literal") {
    if (auto v = n->attribute("value")) return *v;
    if (auto h = n->attribute("hexValue")) return *h;
    return {};
  }
  if (n->node_type == "Identifier") return n->name;
  return {};
}

std::string callee_name(const AstTree& tree, const AstNode& call) {
  auto expr = call.child("expression");
  if (!expr && !call.children.empty()) expr = call.children.front();
  const AstNode* callee = expr ? tree.find(*expr) : nullptr;
  if (!callee) return {};
  if (callee->node_type == "MemberAccess") {
    if (auto m = callee->attribute("memberName")) return *m;
  }
  return callee->name;
}

}  // namespace

std::vector<NodeTuple> extract_node_tuples(const AstTree& tree, const RuleTable& rules) {
  std::vector<NodeTuple> out;
  const auto parents = tree.parent_map();
  for (NodeId id : tree.preorder()) {
    const AstNode& n = tree.at(id);
    auto category = rules.categorize(n);
    if (!category) continue;
    NodeTuple t;
    t.n_id = n.id;
    t.n_type = n.node_type;
    t.category = *category;
    t.span = n.span;
    if (n.node_type == "Literal") {
      t.n_value = initializer_text(tree, n.id);
      if (auto kind = n.attribute("kind")) t.value_kind = *kind;
      else if (auto token = n.attribute("token")) t.value_kind = *token;
    } else if (n.node_type == "BinaryOperation" || n.node_type == "UnaryOperation" ||
               n.node_type == "Assignment") {
      if (auto op = n.attribute("operator")) t.n_name = *op;
    } else if (n.node_type == "MemberAccess") {
      if (auto m = n.attribute("memberName")) t.n_name = *m;
    } else if (n.node_type == "FunctionCall") {
      t.n_name = callee_name(tree, n);
    } else {
      t.n_name = n.name;
    }
    if (n.node_type == "VariableDeclaration") {
      t.n_value = initializer_text(tree, n.child("value"));
      auto parent = parents.find(n.id);
      if (t.n_value.empty() && parent != parents.end()) {
        const AstNode& stmt = tree.at(parent->second);
        if (stmt.node_type == "VariableDeclarationStatement") {
          t.n_value = initializer_text(tree, stmt.child("initialValue"));
        }
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<EdgeTuple> extract_edges(const AstTree& tree, const std::vector<NodeTuple>& tuples) {
  std::unordered_map<NodeId, DependencyCategory> categorized;
  for (const auto& t : tuples) categorized.emplace(t.n_id, t.category);
  const auto parents = tree.parent_map();
  auto is_categorized = [&](NodeId id) { return categorized.contains(id); };

  auto first_categorized = [&](NodeId start) -> std::optional<NodeId> {
    std::vector<NodeId> stack{start};
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      if (is_categorized(id)) return id;
      const AstNode* n = tree.find(id);
      if (!n) continue;
      for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) stack.push_back(*it);
    }
    return std::nullopt;
  };

  auto collect_data_identifiers = [&](NodeId start, std::vector<NodeId>& out) {
    std::vector<NodeId> stack{start};
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      const AstNode* n = tree.find(id);
      if (!n) continue;
      auto cat = categorized.find(id);
      if (n->node_type == "Identifier" && cat != categorized.end() &&
          cat->second == DependencyCategory::Data) {
        out.push_back(id);
      }
      for (NodeId c : n->children) stack.push_back(c);
    }
  };

  std::vector<EdgeTuple> edges;
  for (const auto& t : tuples) {
    const AstNode& n = tree.at(t.n_id);

    for (auto p = parents.find(n.id); p != parents.end(); p = parents.find(p->second)) {
      if (is_categorized(p->second)) {
        edges.push_back({p->second, n.id, EdgeType::AstChild});
        break;
      }
    }

    if (n.node_type == "Identifier") {
      auto target = parse_id(n.attribute("referencedDeclaration"));
      if (target && *target != n.id && is_categorized(*target)) {
        edges.push_back({n.id, *target, EdgeType::DeclRef});
      }
    }

    if (n.node_type == "FunctionCall") {
      auto expr = n.child("expression");
      if (!expr && !n.children.empty()) expr = n.children.front();
      const AstNode* callee = expr ? tree.find(*expr) : nullptr;
      if (callee) {
        auto target = parse_id(callee->attribute("referencedDeclaration"));
        const AstNode* def = target ? tree.find(*target) : nullptr;
        if (def && def->node_type == "FunctionDefinition" && def->id != n.id &&
            is_categorized(def->id)) {
          edges.push_back({n.id, def->id, EdgeType::FuncCall});
        }
      }
    }

    if (t.category == DependencyCategory::Control) {
      for (NodeId branch : n.children) {
        if (auto head = first_categorized(branch)) {
          edges.push_back({n.id, *head, EdgeType::ControlFlow});
        }
      }
    }

    if (n.node_type == "Assignment") {
      auto lhs = n.child("leftHandSide");
      auto rhs = n.child("rightHandSide");
      if (!lhs && !rhs && n.children.size() == 2) {
        lhs = n.children[0];
        rhs = n.children[1];
      }
      if (lhs && rhs && is_categorized(*lhs)) {
        std::vector<NodeId> sources;
        collect_data_identifiers(*rhs, sources);
        for (NodeId s : sources) {
          if (s != *lhs) edges.push_back({s, *lhs, EdgeType::DataDep});
        }
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

}  // namespace derail

#include "derail/ast.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "derail/error.hpp"

namespace derail {

namespace {

bool is_scalar(const Json& v) {
  return !v.is_object() && !v.is_array();
}

std::optional<std::string> scalar_text(const Json& v) {
  if (v.is_null()) return std::nullopt;
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

bool is_yul(std::string_view node_type) {
  return node_type.starts_with("Yul");
}

// Largest integer id carried by any node object, so synthetic ids never
// collide with compiler-assigned ones.
NodeId max_explicit_id(const Json& v) {
  NodeId best = -1;
  if (v.is_object()) {
    auto it = v.find("id");
    if (it != v.end() && it->is_number_integer()) best = it->get<NodeId>();
    for (const auto& [k, child] : v.items()) best = std::max(best, max_explicit_id(child));
  } else if (v.is_array()) {
    for (const auto& child : v) best = std::max(best, max_explicit_id(child));
  }
  return best;
}

class CompactParser {
 public:
  explicit CompactParser(const Json& document)
      : next_synthetic_(max_explicit_id(document) + 1) {}

  NodeId node(const Json& obj) {
    const auto& type = obj.at("nodeType");
    if (!type.is_string()) throw Error(ErrorCode::SchemaViolation, "nodeType must be a string");
    AstNode n;
    n.node_type = type.get<std::string>();
    auto id_it = obj.find("id");
    if (id_it != obj.end() && id_it->is_number_integer()) {
      n.id = id_it->get<NodeId>();
    } else if (is_yul(n.node_type)) {
      n.id = next_synthetic_++;
      n.attributes["synthetic_id"] = "true";
    } else {
      throw Error(ErrorCode::SchemaViolation, "node of type " + n.node_type + " has no integer id");
    }
    if (!seen_.insert(n.id).second) {
      throw Error(ErrorCode::SchemaViolation, "duplicate node id " + std::to_string(n.id));
    }
    if (auto src = obj.find("src"); src != obj.end()) {
      auto span = src->is_string() ? parse_src_span(src->get<std::string>()) : std::nullopt;
      if (!span) throw Error(ErrorCode::SchemaViolation, "bad src on node " + std::to_string(n.id));
      n.span = *span;
    }
    if (auto name = obj.find("name"); name != obj.end() && name->is_string()) {
      n.name = name->get<std::string>();
    }
    for (const auto& [key, value] : obj.items()) {
      if (key == "id" || key == "nodeType" || key == "src") continue;
      flatten(value, key, n);
    }
    NodeId id = n.id;
    tree_.add(std::move(n));
    return id;
  }

  AstTree finish(NodeId root) {
    tree_.root_id = root;
    return std::move(tree_);
  }

 private:
  void flatten(const Json& value, const std::string& key, AstNode& owner) {
    if (value.is_object()) {
      if (value.contains("nodeType")) {
        NodeId child = node(value);
        owner.children.push_back(child);
        owner.child_roles.push_back(key);
        return;
      }
      for (const auto& [k, v] : value.items()) flatten(v, key + "." + k, owner);
      return;
    }
    if (value.is_array()) {
      if (value.empty()) return;
      if (std::all_of(value.begin(), value.end(), is_scalar)) {
        std::string joined;
        for (std::size_t i = 0; i < value.size(); ++i) {
          if (i) joined += ',';
          joined += scalar_text(value[i]).value_or("null");
        }
        owner.attributes.emplace(key, std::move(joined));
        return;
      }
      for (std::size_t i = 0; i < value.size(); ++i) {
        const auto& elem = value[i];
        if (elem.is_object() && elem.contains("nodeType")) {
          flatten(elem, key, owner);
        } else {
          flatten(elem, key + "[" + std::to_string(i) + "]", owner);
        }
      }
      return;
    }
    if (auto text = scalar_text(value)) owner.attributes.emplace(key, std::move(*text));
  }

  AstTree tree_;
  NodeId next_synthetic_;
  std::unordered_set<NodeId> seen_;
};

class LegacyParser {
 public:
  NodeId node(const Json& obj) {
    if (!obj.is_object()) throw Error(ErrorCode::SchemaViolation, "legacy child is not an object");
    auto type = obj.find("name");
    auto id = obj.find("id");
    if (type == obj.end() || !type->is_string()) {
      throw Error(ErrorCode::SchemaViolation, "legacy node without a type name");
    }
    if (id == obj.end() || !id->is_number_integer()) {
      throw Error(ErrorCode::SchemaViolation, "legacy node " + type->get<std::string>() + " has no id");
    }
    AstNode n;
    n.node_type = type->get<std::string>();
    n.id = id->get<NodeId>();
    if (!seen_.insert(n.id).second) {
      throw Error(ErrorCode::SchemaViolation, "duplicate node id " + std::to_string(n.id));
    }
    if (auto src = obj.find("src"); src != obj.end()) {
      auto span = src->is_string() ? parse_src_span(src->get<std::string>()) : std::nullopt;
      if (!span) throw Error(ErrorCode::SchemaViolation, "bad src on node " + std::to_string(n.id));
      n.span = *span;
    }
    if (auto attrs = obj.find("attributes"); attrs != obj.end() && attrs->is_object()) {
      for (const auto& [k, v] : attrs->items()) {
        if (v.is_array()) {
          std::string joined;
          for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) joined += ',';
            joined += scalar_text(v[i]).value_or("null");
          }
          if (!v.empty()) n.attributes.emplace(k, joined);
        } else if (auto text = scalar_text(v); text && is_scalar(v)) {
          n.attributes.emplace(k, *text);
        }
      }
      if (auto name = n.attribute("name")) n.name = *name;
    }
    if (auto kids = obj.find("children"); kids != obj.end() && kids->is_array()) {
      for (const auto& kid : *kids) {
        n.children.push_back(node(kid));
        n.child_roles.emplace_back("children");
      }
    }
    NodeId nid = n.id;
    tree_.add(std::move(n));
    return nid;
  }

  AstTree finish(NodeId root) {
    tree_.root_id = root;
    return std::move(tree_);
  }

 private:
  AstTree tree_;
  std::unordered_set<NodeId> seen_;
};

const Json& unwrap(const Json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::SchemaViolation, "document root is not an object");
  if (doc.contains("nodeType")) return doc;
  for (const char* key : {"ast", "AST", "legacyAST", "legacyAst"}) {
    auto it = doc.find(key);
    if (it != doc.end() && it->is_object()) return *it;
  }
  return doc;
}

std::string pragma_version(const AstTree& tree) {
  for (const auto& n : tree.nodes()) {
    if (n.node_type != "PragmaDirective") continue;
    const std::string* literals = n.attribute("literals");
    if (!literals || !literals->starts_with("solidity")) continue;
    std::string version;
    std::stringstream in(literals->substr(std::string_view("solidity").size()));
    for (std::string part; std::getline(in, part, ',');) version += part;
    return version;
  }
  return {};
}

}  // namespace

std::optional<SrcSpan> parse_src_span(std::string_view text) {
  std::int64_t parts[3] = {0, 0, -1};
  std::size_t field = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  while (field < 3) {
    auto [next, ec] = std::from_chars(p, end, parts[field]);
    if (ec != std::errc{}) return std::nullopt;
    ++field;
    p = next;
    if (p == end) break;
    if (*p != ':') return std::nullopt;
    ++p;
  }
  if (p != end || field < 2) return std::nullopt;
  return SrcSpan{parts[0], parts[1], parts[2]};
}

std::string format_src_span(const SrcSpan& span) {
  return std::to_string(span.offset) + ":" + std::to_string(span.length) + ":" +
         std::to_string(span.file);
}

const std::string* AstNode::attribute(std::string_view key) const {
  auto it = attributes.find(std::string(key));
  return it == attributes.end() ? nullptr : &it->second;
}

std::optional<NodeId> AstNode::child(std::string_view role) const {
  for (std::size_t i = 0; i < children.size() && i < child_roles.size(); ++i) {
    if (child_roles[i] == role) return children[i];
  }
  return std::nullopt;
}

void AstTree::add(AstNode node) {
  index_.try_emplace(node.id, nodes_.size());
  nodes_.push_back(std::move(node));
}

const AstNode* AstTree::find(NodeId id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

const AstNode& AstTree::at(NodeId id) const {
  if (const AstNode* n = find(id)) return *n;
  throw Error(ErrorCode::UnknownNode, "no node with id " + std::to_string(id));
}

std::vector<NodeId> AstTree::preorder() const {
  std::vector<NodeId> order;
  if (!find(root_id)) return order;
  std::unordered_set<NodeId> visited;
  std::vector<NodeId> stack{root_id};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    const AstNode* n = find(id);
    if (!n || !visited.insert(id).second) continue;
    order.push_back(id);
    for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) stack.push_back(*it);
  }
  return order;
}

std::unordered_map<NodeId, NodeId> AstTree::parent_map() const {
  std::unordered_map<NodeId, NodeId> parents;
  for (const auto& n : nodes_) {
    for (NodeId c : n.children) {
      if (find(c)) parents.try_emplace(c, n.id);
    }
  }
  return parents;
}

AstDialect detect_dialect(const Json& document) {
  const Json& doc = unwrap(document);
  if (doc.contains("nodeType")) return AstDialect::Compact;
  auto name = doc.find("name");
  if (name != doc.end() && name->is_string() &&
      (doc.contains("children") || doc.contains("attributes"))) {
    return AstDialect::Legacy;
  }
  throw Error(ErrorCode::SchemaViolation, "no nodeType at document root");
}

AstTree parse_ast_json(std::string_view document) {
  if (std::all_of(document.begin(), document.end(),
                  [](unsigned char c) { return std::isspace(c); })) {
    throw Error(ErrorCode::EmptyDocument, "AST document is empty");
  }
  Json parsed;
  try {
    parsed = Json::parse(document);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, e.what(), e.byte);
  }
  AstDialect dialect = detect_dialect(parsed);
  const Json& root = unwrap(parsed);
  AstTree tree;
  if (dialect == AstDialect::Compact) {
    CompactParser parser(root);
    NodeId root_id = parser.node(root);
    tree = parser.finish(root_id);
  } else {
    LegacyParser parser;
    NodeId root_id = parser.node(root);
    tree = parser.finish(root_id);
  }
  if (auto path = tree.root().attribute("absolutePath")) tree.source_unit = *path;
  tree.compiler_version = pragma_version(tree);
  return tree;
}

AstTree parse_ast_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  AstTree tree = parse_ast_json(buf.str());
  if (tree.source_unit.empty()) tree.source_unit = path.string();
  return tree;
}

namespace {

Json node_to_json(const AstTree& tree, const AstNode& n, std::unordered_set<NodeId>& visiting) {
  Json obj = Json::object();
  obj["id"] = n.id;
  obj["nodeType"] = n.node_type;
  obj["src"] = format_src_span(n.span);
  if (!n.name.empty() && !n.attributes.contains("name")) obj["name"] = n.name;
  for (const auto& [k, v] : n.attributes) obj[k] = v;
  visiting.insert(n.id);
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    const AstNode* c = tree.find(n.children[i]);
    if (!c || visiting.contains(c->id)) continue;
    const std::string& role = i < n.child_roles.size() ? n.child_roles[i] : "nodes";
    Json& slot = obj[role];
    if (!slot.is_array()) slot = Json::array();
    slot.push_back(node_to_json(tree, *c, visiting));
  }
  visiting.erase(n.id);
  return obj;
}

}  // namespace

Json to_json(const AstTree& tree) {
  std::unordered_set<NodeId> visiting;
  return node_to_json(tree, tree.root(), visiting);
}

std::string_view to_string(DiagnosticKind kind) {
  switch (kind) {
    case DiagnosticKind::DuplicateId: return "duplicate id";
    case DiagnosticKind::DanglingChild: return "dangling child";
    case DiagnosticKind::MissingRoot: return "missing root";
    case DiagnosticKind::RootHasParent: return "root has parent";
    case DiagnosticKind::MultipleParents: return "multiple parents";
    case DiagnosticKind::Cycle: return "cycle";
    case DiagnosticKind::Unreachable: return "unreachable";
    case DiagnosticKind::NegativeSpan: return "negative span";
  }
  return "unknown";
}

Json to_json(const TreeDiagnostic& d) {
  Json j;
  j["node_id"] = d.node_id;
  j["kind"] = std::string(to_string(d.kind));
  j["message"] = d.message;
  return j;
}

std::vector<TreeDiagnostic> validate_tree(const AstTree& tree) {
  std::vector<TreeDiagnostic> out;
  auto report = [&](NodeId id, DiagnosticKind kind, std::string msg) {
    out.push_back({id, kind, std::move(msg)});
  };

  std::unordered_set<NodeId> ids;
  std::unordered_map<NodeId, int> parent_count;
  for (const auto& n : tree.nodes()) {
    if (!ids.insert(n.id).second) {
      report(n.id, DiagnosticKind::DuplicateId, "id " + std::to_string(n.id) + " used by more than one node");
    }
    if (n.span.offset < 0 || n.span.length < 0) {
      report(n.id, DiagnosticKind::NegativeSpan, "src " + format_src_span(n.span));
    }
  }
  for (const auto& n : tree.nodes()) {
    for (NodeId c : n.children) {
      if (!ids.contains(c)) {
        report(n.id, DiagnosticKind::DanglingChild, "child id " + std::to_string(c) + " does not exist");
      } else if (++parent_count[c] == 2) {
        report(c, DiagnosticKind::MultipleParents, "listed as a child more than once");
      }
    }
  }
  if (!tree.find(tree.root_id)) {
    report(tree.root_id, DiagnosticKind::MissingRoot, "root id does not exist");
    return out;
  }
  if (parent_count.contains(tree.root_id)) {
    report(tree.root_id, DiagnosticKind::RootHasParent, "root is listed as a child");
  }

  // Iterative DFS with an on-stack marker for back edges.
  enum class Mark { Open, Done };
  std::unordered_map<NodeId, Mark> mark;
  std::vector<std::pair<NodeId, std::size_t>> stack{{tree.root_id, 0}};
  mark[tree.root_id] = Mark::Open;
  while (!stack.empty()) {
    auto& [id, next] = stack.back();
    const AstNode& n = tree.at(id);
    if (next == n.children.size()) {
      mark[id] = Mark::Done;
      stack.pop_back();
      continue;
    }
    NodeId c = n.children[next++];
    if (!ids.contains(c)) continue;
    auto it = mark.find(c);
    if (it == mark.end()) {
      mark[c] = Mark::Open;
      stack.emplace_back(c, 0);
    } else if (it->second == Mark::Open) {
      report(c, DiagnosticKind::Cycle, "child relation loops back through " + std::to_string(c));
    }
  }
  std::unordered_set<NodeId> reported;
  for (const auto& n : tree.nodes()) {
    if (!mark.contains(n.id) && reported.insert(n.id).second) {
      report(n.id, DiagnosticKind::Unreachable, "not reachable from root");
    }
  }
  return out;
}

std::string span_to_source(const AstTree& tree, NodeId node_id, std::string_view source_text) {
  const AstNode& n = tree.at(node_id);
  const auto size = static_cast<std::int64_t>(source_text.size());
  if (n.span.offset < 0 || n.span.length < 0 || n.span.offset > size ||
      n.span.length > size - n.span.offset) {
    throw Error(ErrorCode::OutOfBounds, "span " + format_src_span(n.span) + " exceeds source of " +
                                            std::to_string(size) + " bytes");
  }
  return std::string(source_text.substr(static_cast<std::size_t>(n.span.offset),
                                        static_cast<std::size_t>(n.span.length)));
}

}  // namespace derail

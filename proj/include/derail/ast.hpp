#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace derail {

using NodeId = std::int64_t;
using Json = nlohmann::ordered_json;

/// Byte range "offset:length:file" as emitted in the compiler's `src` field.
struct SrcSpan {
  std::int64_t offset = 0;
  std::int64_t length = 0;
  std::int64_t file = -1;

  bool operator==(const SrcSpan&) const = default;
};

std::optional<SrcSpan> parse_src_span(std::string_view text);
std::string format_src_span(const SrcSpan& span);

struct AstNode {
  NodeId id = 0;
  std::string node_type;
  std::string name;
  /// Scalar fields of the JSON object, flattened. Nested plain objects use
  /// dotted keys ("typeDescriptions.typeIdentifier"); scalar arrays are
  /// joined with ','.
  std::map<std::string, std::string> attributes;
  SrcSpan span;
  std::vector<NodeId> children;
  /// JSON key under which each child appeared; parallel to `children`.
  std::vector<std::string> child_roles;

  const std::string* attribute(std::string_view key) const;
  /// Child id stored under `role`, first occurrence.
  std::optional<NodeId> child(std::string_view role) const;
};

/// One source unit. Node storage keeps insertion order and tolerates
/// duplicate ids so that `validate_tree` can report them; lookups resolve to
/// the first node carrying an id.
class AstTree {
 public:
  NodeId root_id = 0;
  std::string source_unit;
  std::string compiler_version;

  void add(AstNode node);
  std::span<const AstNode> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  const AstNode* find(NodeId id) const;
  /// Throws Error(UnknownNode).
  const AstNode& at(NodeId id) const;
  const AstNode& root() const { return at(root_id); }

  /// Node ids in depth-first preorder from the root, children in stored order.
  std::vector<NodeId> preorder() const;
  /// child id -> parent id, for every resolvable edge.
  std::unordered_map<NodeId, NodeId> parent_map() const;

 private:
  std::vector<AstNode> nodes_;
  std::unordered_map<NodeId, std::size_t> index_;
};

enum class AstDialect { Compact, Legacy };

/// Parses one compiler AST document. Accepts the compact schema
/// (`nodeType`), the pre-0.8 legacy schema (`name`/`children`/`attributes`),
/// and a per-source wrapper object holding either under `ast` / `AST` /
/// `legacyAST`. Yul nodes, which the compiler emits without ids, get fresh
/// ids above the largest id in the document and the attribute
/// `synthetic_id = "true"`.
AstTree parse_ast_json(std::string_view document);
AstTree parse_ast_file(const std::filesystem::path& path);
AstDialect detect_dialect(const Json& document);

/// Serializes back to the compact schema. Re-parsing the result yields an
/// isomorphic tree.
Json to_json(const AstTree& tree);

enum class DiagnosticKind {
  DuplicateId,
  DanglingChild,
  MissingRoot,
  RootHasParent,
  MultipleParents,
  Cycle,
  Unreachable,
  NegativeSpan,
};

std::string_view to_string(DiagnosticKind kind);

struct TreeDiagnostic {
  NodeId node_id = 0;
  DiagnosticKind kind = DiagnosticKind::DuplicateId;
  std::string message;
};

Json to_json(const TreeDiagnostic& diagnostic);

std::vector<TreeDiagnostic> validate_tree(const AstTree& tree);

std::string span_to_source(const AstTree& tree, NodeId node_id,
                           std::string_view source_text);

}  // namespace derail

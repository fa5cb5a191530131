#include "derail/graph_io.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "derail/error.hpp"

namespace derail {

namespace {

constexpr std::string_view kGraphMagic = "SGG1";
constexpr std::uint32_t kGraphVersion = 1;
constexpr std::uint64_t kMaxNodes = 1u << 20;
constexpr std::uint64_t kMaxDim = 1u << 16;

std::int32_t label_code(const std::optional<Label>& label) {
  return label ? static_cast<std::int32_t>(*label) : -1;
}

std::optional<Label> label_from_code(std::int64_t code) {
  switch (code) {
    case -1: return std::nullopt;
    case 0: return Label::Clean;
    case 1: return Label::Defective;
    default: throw Error(ErrorCode::BadFormat, "bad label code " + std::to_string(code));
  }
}

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Matrix matrix_from_json(const Json& rows, std::size_t n_rows, std::size_t n_cols) {
  if (rows.size() != n_rows) throw Error(ErrorCode::ShapeMismatch, "matrix row count");
  Matrix m(n_rows, n_cols);
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (rows[r].size() != n_cols) throw Error(ErrorCode::ShapeMismatch, "matrix row width");
    for (std::size_t c = 0; c < n_cols; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

}  // namespace

void write_graph(std::ostream& out, const NormalizedGraph& g) {
  const std::size_t n = g.size();
  if (g.features.rows() != n || g.a_hat.rows() != n || g.a_hat.cols() != n ||
      g.s_hat.rows() != n || g.s_hat.cols() != n || g.spans.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "inconsistent normalized graph");
  }
  binary::put_magic(out, kGraphMagic);
  binary::put_u32(out, kGraphVersion);
  binary::put_u64(out, n);
  binary::put_u64(out, g.features.cols());
  binary::put_i32(out, label_code(g.label));
  binary::put_u32(out, 0);
  for (NodeId id : g.node_ids) binary::put_i64(out, id);
  for (const auto& s : g.spans) {
    binary::put_i64(out, s.offset);
    binary::put_i64(out, s.length);
    binary::put_i64(out, s.file);
  }
  binary::put_matrix(out, g.features);
  binary::put_matrix(out, g.a_hat);
  binary::put_matrix(out, g.s_hat);
  if (!out) throw Error(ErrorCode::Io, "failed writing graph container");
}

NormalizedGraph read_graph(std::istream& in) {
  binary::expect_magic(in, kGraphMagic);
  if (auto v = binary::get_u32(in); v != kGraphVersion) {
    throw Error(ErrorCode::BadFormat, "unsupported graph container version " + std::to_string(v));
  }
  const auto n = binary::checked_dim(binary::get_u64(in), kMaxNodes, "node count");
  const auto d = binary::checked_dim(binary::get_u64(in), kMaxDim, "feature width");
  NormalizedGraph g;
  g.label = label_from_code(binary::get_i32(in));
  binary::get_u32(in);
  g.node_ids.resize(n);
  for (auto& id : g.node_ids) id = binary::get_i64(in);
  g.spans.resize(n);
  for (auto& s : g.spans) {
    s.offset = binary::get_i64(in);
    s.length = binary::get_i64(in);
    s.file = binary::get_i64(in);
  }
  g.features = binary::get_matrix(in, n, d);
  g.a_hat = binary::get_matrix(in, n, n);
  g.s_hat = binary::get_matrix(in, n, n);
  return g;
}

void save_graph(const std::filesystem::path& path, const NormalizedGraph& graph) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_graph(out, graph);
}

NormalizedGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return read_graph(in);
}

Json to_json(const NormalizedGraph& g) {
  Json j;
  j["format"] = "derail-graph/1";
  j["n"] = g.size();
  j["d"] = g.features.cols();
  j["label"] = g.label ? Json(std::string(to_string(*g.label))) : Json(nullptr);
  j["node_ids"] = g.node_ids;
  Json spans = Json::array();
  for (const auto& s : g.spans) spans.push_back(format_src_span(s));
  j["spans"] = std::move(spans);
  j["features"] = matrix_json(g.features);
  j["a_hat"] = matrix_json(g.a_hat);
  j["s_hat"] = matrix_json(g.s_hat);
  return j;
}

NormalizedGraph graph_from_json(const Json& j) {
  try {
    NormalizedGraph g;
    const auto n = j.at("n").get<std::size_t>();
    const auto d = j.at("d").get<std::size_t>();
    if (!j.at("label").is_null()) {
      g.label = parse_label(j.at("label").get<std::string>());
      if (!g.label) throw Error(ErrorCode::BadLabel, "graph label");
    }
    g.node_ids = j.at("node_ids").get<std::vector<NodeId>>();
    for (const auto& s : j.at("spans")) {
      auto span = parse_src_span(s.get<std::string>());
      if (!span) throw Error(ErrorCode::BadFormat, "bad span in graph dump");
      g.spans.push_back(*span);
    }
    if (g.node_ids.size() != n || g.spans.size() != n) {
      throw Error(ErrorCode::ShapeMismatch, "node list length");
    }
    g.features = matrix_from_json(j.at("features"), n, d);
    g.a_hat = matrix_from_json(j.at("a_hat"), n, n);
    g.s_hat = matrix_from_json(j.at("s_hat"), n, n);
    return g;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("graph dump: ") + e.what());
  }
}

}  // namespace derail

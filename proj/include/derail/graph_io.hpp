#pragma once

#include <filesystem>
#include <iosfwd>

#include "derail/graph.hpp"

namespace derail {

// "SGG1" container; layout documented in docs/formats.md.
void write_graph(std::ostream& out, const NormalizedGraph& graph);
NormalizedGraph read_graph(std::istream& in);
void save_graph(const std::filesystem::path& path, const NormalizedGraph& graph);
NormalizedGraph load_graph(const std::filesystem::path& path);

/// Debug dump; doubles are written with round-trip precision.
Json to_json(const NormalizedGraph& graph);
NormalizedGraph graph_from_json(const Json& j);

}  // namespace derail

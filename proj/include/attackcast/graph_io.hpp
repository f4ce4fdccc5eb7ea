#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "attackcast/graph.hpp"

namespace attackcast {

inline constexpr int kGraphFormatVersion = 1;

/// Graph document: {version, role, nodes:[{id, attr, order_index, label}],
/// edges:[{src, dst, event, seq}], provenance}. Forecast elements carry an
/// extra "forecast": true.
nlohmann::json graph_to_json(const AttackGraph& g);

/// Parses and validates a graph document. Throws GraphError.
AttackGraph graph_from_json(const nlohmann::json& j);

void save_graph(const AttackGraph& g, const std::filesystem::path& path);
AttackGraph load_graph(const std::filesystem::path& path);

/// Reads a JSON file; throws GraphError with the path on failure.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Deterministic Graphviz rendering: P red, files blue, registry gray,
/// sockets green; edges labeled with the event and annotated with seq.
std::string export_dot(const AttackGraph& g);

}  // namespace attackcast

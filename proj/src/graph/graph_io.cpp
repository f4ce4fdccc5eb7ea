#include "attackcast/graph_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace attackcast {

using nlohmann::json;

json graph_to_json(const AttackGraph& g) {
    json nodes = json::array();
    for (const Node& n : g.nodes()) {
        json jn = {{"id", n.id}, {"attr", to_string(n.attr)}, {"order_index", n.order_index}, {"label", n.label}};
        if (n.forecast) jn["forecast"] = true;
        nodes.push_back(std::move(jn));
    }
    json edges = json::array();
    for (const Edge& e : g.edges()) {
        json je = {{"src", e.src}, {"dst", e.dst}, {"event", to_string(e.event)}, {"seq", e.seq}};
        if (e.forecast) je["forecast"] = true;
        edges.push_back(std::move(je));
    }
    return json{{"version", kGraphFormatVersion},
                {"role", to_string(g.role())},
                {"nodes", std::move(nodes)},
                {"edges", std::move(edges)},
                {"provenance", g.provenance()}};
}

namespace {

template <typename T>
T field(const json& j, const char* key) {
    if (!j.contains(key)) throw GraphError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& ex) {
        throw GraphError(std::string("bad field '") + key + "': " + ex.what());
    }
}

}  // namespace

AttackGraph graph_from_json(const json& j) {
    if (!j.is_object()) throw GraphError("graph document must be an object");
    const int version = field<int>(j, "version");
    if (version != kGraphFormatVersion) throw GraphError("unsupported graph format version " + std::to_string(version));
    const auto role_name = field<std::string>(j, "role");
    const auto role = parse_role(role_name);
    if (!role) throw GraphError("unknown role '" + role_name + "'");

    AttackGraph g(*role, j.value("provenance", std::string{}));

    if (!j.contains("nodes")) throw GraphError("missing field 'nodes'");
    if (!j.contains("edges")) throw GraphError("missing field 'edges'");
    const json& nodes = j.at("nodes");
    if (!nodes.is_array()) throw GraphError("'nodes' must be an array");
    struct Pending {
        std::size_t order;
        std::string id;
        EntityAttr attr;
        std::string label;
        bool forecast;
    };
    std::vector<Pending> pending;
    for (const json& jn : nodes) {
        const auto attr_name = field<std::string>(jn, "attr");
        const auto attr = parse_attr(attr_name);
        if (!attr) throw GraphError("unknown entity attribute '" + attr_name + "'");
        pending.push_back({field<std::size_t>(jn, "order_index"), field<std::string>(jn, "id"), *attr,
                           jn.value("label", std::string{}), jn.value("forecast", false)});
    }
    std::sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) { return a.order < b.order; });
    for (std::size_t i = 0; i < pending.size(); ++i) {
        if (pending[i].order != i) throw GraphError("order_index values are not a permutation of 0..n-1");
        if (pending[i].id.empty()) throw GraphError("node id must be non-empty");
        g.add_node(pending[i].attr, pending[i].label, pending[i].id, pending[i].forecast);
    }

    const json& edges = j.at("edges");
    if (!edges.is_array()) throw GraphError("'edges' must be an array");
    for (const json& je : edges) {
        const auto ev_name = field<std::string>(je, "event");
        const auto ev = parse_event(ev_name);
        if (!ev) throw GraphError("unknown event type '" + ev_name + "'");
        g.add_edge(field<std::string>(je, "src"), field<std::string>(je, "dst"), *ev, field<std::uint64_t>(je, "seq"),
                   je.value("forecast", false));
    }
    g.validate();
    return g;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw GraphError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& ex) {
        throw GraphError(path.string() + ": " + ex.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw GraphError("cannot write " + path.string());
    out << text;
}

void save_graph(const AttackGraph& g, const std::filesystem::path& path) {
    write_text_file(path, graph_to_json(g).dump(2) + "\n");
}

AttackGraph load_graph(const std::filesystem::path& path) {
    try {
        return graph_from_json(read_json_file(path));
    } catch (const GraphError& ex) {
        const std::string what = ex.what();
        if (what.rfind(path.string(), 0) == 0) throw;
        throw GraphError(path.string() + ": " + what);
    }
}

namespace {

std::string_view color_for(EntityAttr a) {
    switch (a) {
        case EntityAttr::P:
            return "red";
        case EntityAttr::S:
            return "green";
        case EntityAttr::FR:
            return "gray";
        default:
            return "blue";
    }
}

std::string_view shape_for(EntityAttr a) {
    switch (a) {
        case EntityAttr::P:
            return "box";
        case EntityAttr::S:
            return "diamond";
        default:
            return "ellipse";
    }
}

std::string quoted(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

std::string export_dot(const AttackGraph& g) {
    std::ostringstream os;
    os << "digraph " << to_string(g.role()) << " {\n";
    for (const Node& n : g.nodes()) {
        std::string label(to_string(n.attr));
        if (!n.label.empty()) label += "\n" + n.label;
        os << "  " << quoted(n.id) << " [label=" << quoted(label) << ", color=" << color_for(n.attr)
           << ", shape=" << shape_for(n.attr);
        if (n.forecast) os << ", style=dashed";
        os << "];\n";
    }
    for (const Edge& e : g.edges()) {
        os << "  " << quoted(e.src) << " -> " << quoted(e.dst) << " [label=" << quoted(to_string(e.event))
           << ", xlabel=\"#" << e.seq << "\"";
        if (e.forecast) os << ", style=dashed";
        os << "];\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace attackcast

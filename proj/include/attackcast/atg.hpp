#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "attackcast/atg_template.hpp"
#include "attackcast/graph.hpp"

namespace attackcast {

nlohmann::json template_to_json(const AtgTemplate& t);

/// Parses a template document (a graph document plus technique_id, tactic and
/// description). Throws GraphError if the graph is invalid or has fewer than
/// two nodes or no edge.
AtgTemplate template_from_json(const nlohmann::json& j);

struct TemplateLoad {
    std::vector<AtgTemplate> templates;   // sorted by technique id
    std::vector<std::string> diagnostics; // one line per rejected file
};

/// Loads every *.json file in `dir`. Malformed files are skipped with a
/// diagnostic; throws GraphError when nothing valid remains.
TemplateLoad load_templates(const std::filesystem::path& dir);

struct TemplateStats {
    std::size_t templates = 0;
    std::size_t nodes = 0;
    std::size_t edges = 0;
    std::map<std::string, std::size_t> nodes_per_attr;
    std::map<std::string, std::size_t> edges_per_event;
    std::map<std::string, std::size_t> templates_per_tactic;
    double mean_nodes = 0.0;
    double mean_edges = 0.0;
};

/// Throws InvalidInput for an empty list.
TemplateStats template_stats(const std::vector<AtgTemplate>& templates);
std::string format_stats(const TemplateStats& s);

enum class SpliceRule { ShareRootProcess, SequentialTaint };
std::string_view to_string(SpliceRule r);
std::optional<SpliceRule> parse_splice_rule(std::string_view s);

struct CorpusSpec {
    std::size_t min_chain = 1;
    std::size_t max_chain = 3;
    SpliceRule splice = SpliceRule::SequentialTaint;
    std::size_t count = 20;
    std::uint64_t seed = 1;
    std::size_t max_retries = 64;

    void validate() const;
};

struct Corpus {
    std::vector<AttackGraph> graphs;
    std::vector<std::vector<std::string>> techniques;  // spliced technique ids per graph
    std::vector<std::string> diagnostics;
    CorpusSpec spec;
};

/// Builds `spec.count` graphs, each splicing a chain of distinct templates.
/// Chains whose junctions are incompatible are resampled; after
/// spec.max_retries failures in a row a GraphError is thrown.
Corpus synthesize_corpus(const std::vector<AtgTemplate>& templates, const CorpusSpec& spec);

/// Writes graph_NNNN.json files and manifest.json (seed, spec, labels).
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Reads every graph file in a corpus directory in name order. The manifest,
/// when present, supplies technique labels.
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace attackcast

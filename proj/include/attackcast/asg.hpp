#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "attackcast/classify.hpp"
#include "attackcast/graph.hpp"

namespace attackcast {

// Input contract: sentences already filtered, tagged, parsed and
// entity-annotated upstream.

struct Token {
    std::string text;
    std::string pos;      // coarse part-of-speech tag, e.g. VERB, NOUN, ADP
    int head = -1;        // index of the head token, -1 for the root
    std::string dep;      // dependency relation to the head
    std::string lemma;    // optional; lowercase text when empty

    std::string lemma_or_text() const;
};

struct EntitySpan {
    std::size_t start = 0;  // token range [start, end)
    std::size_t end = 0;
    std::string name;
    CoarseClass coarse = CoarseClass::File;
};

struct AnnotatedSentence {
    std::size_t index = 0;
    std::vector<Token> tokens;
    std::vector<EntitySpan> entities;

    /// Empty when the dependency heads form a single-rooted tree and the spans
    /// are in range and disjoint; otherwise a description of the problem.
    std::string problem() const;
};

/// Report document: {"sentences": [{"index", "tokens": [{text,pos,head,dep,lemma}],
/// "entities": [{start,end,name,class}]}]} with class in File/Process/Socket.
std::vector<AnnotatedSentence> parse_annotated(const nlohmann::json& j);
std::vector<AnnotatedSentence> load_annotated(const std::filesystem::path& path);

struct EntityRef {
    std::string name;
    EntityAttr attr = EntityAttr::F3;
    std::size_t index = 0;  // sentence index inside a Triple, triple index for co-reference

    bool operator==(const EntityRef&) const = default;
};

/// subject/object follow storage direction, so (subject.attr, event,
/// object.attr) always passes validate_edge.
struct Triple {
    EntityRef subject;
    std::string verb;
    EntityRef object;
    EventType event = EventType::Write;

    bool operator==(const Triple&) const = default;
};

/// Verb lexicon. The main table maps a lemma to candidate events in
/// preference order; the read/execute table is the two-class lexicon used for
/// file-process pairs the main table does not settle.
class VerbLexicon {
public:
    /// Lines "lemma<TAB>Event"; a "[read-execute]" header switches to the
    /// two-class table whose events must be Read or Execute. '#' starts a
    /// comment line. Throws GraphError with the line number.
    static VerbLexicon parse(const std::string& text);
    static VerbLexicon load(const std::filesystem::path& path);

    const std::vector<EventType>* events(const std::string& lemma) const;
    const std::vector<std::pair<std::string, EventType>>& read_execute() const { return read_execute_; }
    std::size_t size() const { return main_.size(); }

private:
    std::map<std::string, std::vector<EventType>> main_;
    std::vector<std::pair<std::string, EventType>> read_execute_;
};

struct ExtractResult {
    std::vector<Triple> triples;
    std::vector<std::string> diagnostics;
};

/// Pairs every subject-side entity of a verb with every object-side entity,
/// resolves the event from the lexicon and orients the triple by the event
/// direction rules. Malformed sentences are skipped with a diagnostic.
ExtractResult extract_triples(const std::vector<AnnotatedSentence>& sentences, const VerbLexicon& lexicon);

/// Read or Execute for a file-process pair: exact lemma match in the
/// two-class table, then simple inflection stripping, then the closest entry
/// with name similarity of at least 0.75. Unknown verbs give Read.
EventType disambiguate_read_execute(std::string_view verb, const VerbLexicon& lexicon);

/// 1 - edit distance / longer length, on lowercase text. Two empty strings
/// give 1.
double name_similarity(std::string_view a, std::string_view b);

struct CorefConfig {
    double w_d = 10.0;
    double w_t = 2.0;
    double threshold = 0.75;

    void validate() const;
};

/// sim(names) - |index difference| / w_d - type distance / w_t, where the
/// type distance is 0 for equal attributes and 1 otherwise.
double coref_similarity(const EntityRef& n, const EntityRef& m, const CorefConfig& cfg);

/// Unifies entities whose similarity exceeds the threshold with an earlier
/// entity of the same family (file, process, socket). Merges that would put
/// both ends of one triple into the same entity are skipped. The earliest
/// entity of each group names it. Repeats until nothing changes.
std::vector<Triple> merge_coreferent(const std::vector<Triple>& triples, const CorefConfig& cfg);

/// Entities become nodes and triples become edges in triple order. Returns
/// nothing for fewer than min_nodes nodes.
std::optional<AttackGraph> assemble_graph(const std::vector<Triple>& triples, std::size_t min_nodes = 5);

}  // namespace attackcast

#include "attackcast/asg.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "attackcast/graph_io.hpp"

namespace attackcast {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

enum class Family { File, Process, Socket };

Family family(EntityAttr a) {
    if (a == EntityAttr::P) return Family::Process;
    if (a == EntityAttr::S) return Family::Socket;
    return Family::File;
}

}  // namespace

std::string Token::lemma_or_text() const { return lemma.empty() ? lower(text) : lower(lemma); }

std::string AnnotatedSentence::problem() const {
    const int n = static_cast<int>(tokens.size());
    if (n == 0) return "no tokens";
    int roots = 0;
    for (int i = 0; i < n; ++i) {
        const int h = tokens[i].head;
        if (h == -1) {
            ++roots;
        } else if (h < 0 || h >= n || h == i) {
            return "token " + std::to_string(i) + " has head " + std::to_string(h);
        }
    }
    if (roots != 1) return "expected one root, found " + std::to_string(roots);
    for (int i = 0; i < n; ++i) {
        int t = i;
        for (int steps = 0; t != -1; ++steps) {
            if (steps > n) return "dependency cycle through token " + std::to_string(i);
            t = tokens[t].head;
        }
    }
    std::vector<bool> covered(tokens.size(), false);
    for (const EntitySpan& s : entities) {
        if (s.start >= s.end || s.end > tokens.size()) return "entity '" + s.name + "' has a bad token range";
        if (s.name.empty()) return "entity with empty name";
        for (std::size_t k = s.start; k < s.end; ++k) {
            if (covered[k]) return "entity spans overlap at token " + std::to_string(k);
            covered[k] = true;
        }
    }
    return {};
}

std::vector<AnnotatedSentence> parse_annotated(const json& j) {
    const json& arr = j.is_array() ? j : j.at("sentences");
    std::vector<AnnotatedSentence> out;
    for (std::size_t s = 0; s < arr.size(); ++s) {
        const json& js = arr[s];
        AnnotatedSentence sent;
        sent.index = js.value("index", s);
        for (const json& jt : js.at("tokens")) {
            sent.tokens.push_back(Token{jt.at("text").get<std::string>(), jt.value("pos", std::string{}),
                                        jt.value("head", -1), jt.value("dep", std::string{}),
                                        jt.value("lemma", std::string{})});
        }
        for (const json& je : js.value("entities", json::array())) {
            const auto cls = je.at("class").get<std::string>();
            CoarseClass c;
            if (cls == "File") {
                c = CoarseClass::File;
            } else if (cls == "Process") {
                c = CoarseClass::Process;
            } else if (cls == "Socket") {
                c = CoarseClass::Socket;
            } else {
                throw GraphError("sentence " + std::to_string(sent.index) + ": unknown entity class '" + cls + "'");
            }
            sent.entities.push_back(
                EntitySpan{je.at("start").get<std::size_t>(), je.at("end").get<std::size_t>(),
                           je.at("name").get<std::string>(), c});
        }
        out.push_back(std::move(sent));
    }
    return out;
}

std::vector<AnnotatedSentence> load_annotated(const std::filesystem::path& path) {
    try {
        return parse_annotated(read_json_file(path));
    } catch (const json::exception& ex) {
        throw GraphError(path.string() + ": " + ex.what());
    }
}

// ---------------------------------------------------------------------------
// Lexicon

VerbLexicon VerbLexicon::parse(const std::string& text) {
    VerbLexicon lex;
    std::istringstream in(text);
    std::string line;
    bool re_section = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t == "[read-execute]") {
            re_section = true;
            continue;
        }
        const auto tab = t.find('\t');
        if (tab == std::string::npos) throw GraphError("lexicon line " + std::to_string(lineno) + ": missing tab");
        const std::string lemma = lower(trim(t.substr(0, tab)));
        const std::string ev_name = trim(t.substr(tab + 1));
        const auto ev = parse_event(ev_name);
        if (!ev || lemma.empty()) {
            throw GraphError("lexicon line " + std::to_string(lineno) + ": bad entry '" + t + "'");
        }
        if (re_section) {
            if (*ev != EventType::Read && *ev != EventType::Execute) {
                throw GraphError("lexicon line " + std::to_string(lineno) + ": read-execute entries need Read or Execute");
            }
            lex.read_execute_.emplace_back(lemma, *ev);
        } else {
            auto& v = lex.main_[lemma];
            if (std::find(v.begin(), v.end(), *ev) == v.end()) v.push_back(*ev);
        }
    }
    return lex;
}

VerbLexicon VerbLexicon::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw GraphError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const std::vector<EventType>* VerbLexicon::events(const std::string& lemma) const {
    auto it = main_.find(lower(lemma));
    return it == main_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Similarity

double name_similarity(std::string_view a_in, std::string_view b_in) {
    const std::string a = lower(a_in);
    const std::string b = lower(b_in);
    if (a.empty() && b.empty()) return 1.0;
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    const double dist = static_cast<double>(prev[b.size()]);
    return 1.0 - dist / static_cast<double>(std::max(a.size(), b.size()));
}

EventType disambiguate_read_execute(std::string_view verb, const VerbLexicon& lexicon) {
    const auto& table = lexicon.read_execute();
    const std::string v = lower(verb);
    auto exact = [&](const std::string& w) -> std::optional<EventType> {
        for (const auto& [lemma, ev] : table) {
            if (lemma == w) return ev;
        }
        return std::nullopt;
    };
    if (auto e = exact(v)) return *e;

    std::vector<std::string> variants;
    for (std::string_view suffix : {"ing", "ies", "es", "ed", "s", "d"}) {
        if (v.size() > suffix.size() + 2 && v.compare(v.size() - suffix.size(), suffix.size(), suffix) == 0) {
            const std::string stem = v.substr(0, v.size() - suffix.size());
            if (suffix == "ies") {
                variants.push_back(stem + "y");
            } else {
                variants.push_back(stem);
                variants.push_back(stem + "e");
            }
        }
    }
    for (const auto& w : variants) {
        if (auto e = exact(w)) return *e;
    }

    double best = 0.0;
    EventType best_ev = EventType::Read;
    for (const auto& [lemma, ev] : table) {
        const double s = name_similarity(v, lemma);
        if (s > best) {
            best = s;
            best_ev = ev;
        }
    }
    return best >= 0.75 ? best_ev : EventType::Read;
}

void CorefConfig::validate() const {
    if (!(w_d > 0.0) || !(w_t > 0.0)) throw InvalidInput("coreference weights must be positive");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidInput("coreference threshold must lie in [0,1]");
}

double coref_similarity(const EntityRef& n, const EntityRef& m, const CorefConfig& cfg) {
    const double d_index =
        static_cast<double>(n.index > m.index ? n.index - m.index : m.index - n.index);
    const double d_type = n.attr == m.attr ? 0.0 : 1.0;
    return name_similarity(n.name, m.name) - d_index / cfg.w_d - d_type / cfg.w_t;
}

// ---------------------------------------------------------------------------
// Triple extraction

namespace {

enum class Role { Subject, Object };

bool is_verb(const Token& t) { return t.pos == "VERB" || t.pos == "AUX"; }

std::size_t span_root(const AnnotatedSentence& s, const EntitySpan& span) {
    for (std::size_t k = span.start; k < span.end; ++k) {
        const int h = s.tokens[k].head;
        if (h < static_cast<int>(span.start) || h >= static_cast<int>(span.end)) return k;
    }
    return span.start;
}

bool has_case_by(const AnnotatedSentence& s, std::size_t t) {
    for (const Token& tok : s.tokens) {
        if (tok.head == static_cast<int>(t) && tok.dep == "case" && lower(tok.text) == "by") return true;
    }
    return false;
}

// Walks from an entity's root token to the verb that governs it.
std::optional<std::pair<std::size_t, Role>> governing_verb(const AnnotatedSentence& s, std::size_t root) {
    static const std::set<std::string> climb = {"compound", "amod", "appos", "nmod", "poss", "conj", "nn", "flat"};
    static const std::set<std::string> objects = {"dobj", "obj", "iobj", "attr", "dative", "oprd"};
    std::size_t t = root;
    for (std::size_t steps = 0; steps <= s.tokens.size(); ++steps) {
        const Token& tok = s.tokens[t];
        if (tok.head < 0) return std::nullopt;
        const auto h = static_cast<std::size_t>(tok.head);
        if (climb.count(tok.dep)) {
            t = h;
            continue;
        }
        Role role;
        int attach = tok.head;
        if (tok.dep == "nsubj" || tok.dep == "csubj") {
            role = Role::Subject;
        } else if (tok.dep == "nsubjpass" || tok.dep == "csubjpass" || tok.dep == "nsubj:pass") {
            role = Role::Object;
        } else if (objects.count(tok.dep)) {
            role = Role::Object;
        } else if (tok.dep == "pobj") {
            const Token& prep = s.tokens[h];
            role = (lower(prep.text) == "by" || prep.dep == "agent") ? Role::Subject : Role::Object;
            attach = prep.head;
        } else if (tok.dep == "obl:agent") {
            role = Role::Subject;
        } else if (tok.dep == "obl") {
            role = has_case_by(s, t) ? Role::Subject : Role::Object;
        } else {
            return std::nullopt;
        }
        while (attach >= 0 && !is_verb(s.tokens[static_cast<std::size_t>(attach)])) {
            attach = s.tokens[static_cast<std::size_t>(attach)].head;
        }
        if (attach < 0) return std::nullopt;
        return std::make_pair(static_cast<std::size_t>(attach), role);
    }
    return std::nullopt;
}

struct Resolved {
    EventType event;
    bool first_is_subject;
};

std::optional<Resolved> choose_event(const std::string& lemma, const std::string& verb_text, EntityAttr gs,
                                     EntityAttr go, const VerbLexicon& lexicon) {
    if (const auto* evs = lexicon.events(lemma)) {
        for (EventType e : *evs) {
            if (validate_edge(gs, e, go)) return Resolved{e, true};
            if (validate_edge(go, e, gs)) return Resolved{e, false};
        }
    }
    const Family fs = family(gs);
    const Family fo = family(go);
    if (fs == Family::Process && fo == Family::Process) return Resolved{EventType::ForkClone, true};
    if ((fs == Family::Process && fo == Family::File) || (fs == Family::File && fo == Family::Process)) {
        const EventType e = disambiguate_read_execute(lemma.empty() ? verb_text : lemma, lexicon);
        // Read is stored file -> process, Execute process -> file.
        const bool subject_is_process = fs == Family::Process;
        if (e == EventType::Read) return Resolved{e, !subject_is_process};
        return Resolved{e, subject_is_process};
    }
    if (fs == Family::Process && fo == Family::Socket) return Resolved{EventType::Send, true};
    if (fs == Family::Socket && fo == Family::Process) return Resolved{EventType::Receive, true};
    return std::nullopt;
}

}  // namespace

ExtractResult extract_triples(const std::vector<AnnotatedSentence>& sentences, const VerbLexicon& lexicon) {
    ExtractResult out;
    for (const AnnotatedSentence& s : sentences) {
        if (const std::string p = s.problem(); !p.empty()) {
            out.diagnostics.push_back("sentence " + std::to_string(s.index) + " skipped: " + p);
            continue;
        }
        std::map<std::size_t, std::vector<std::size_t>> subjects, objects;  // verb -> entity indices
        for (std::size_t e = 0; e < s.entities.size(); ++e) {
            auto gov = governing_verb(s, span_root(s, s.entities[e]));
            if (!gov) continue;
            (gov->second == Role::Subject ? subjects : objects)[gov->first].push_back(e);
        }
        // Verbs without their own subject inherit one from the verb they
        // coordinate with or complement.
        std::function<std::vector<std::size_t>(std::size_t, std::size_t)> subjects_of =
            [&](std::size_t v, std::size_t depth) -> std::vector<std::size_t> {
            auto it = subjects.find(v);
            if (it != subjects.end() && !it->second.empty()) return it->second;
            const Token& t = s.tokens[v];
            if (depth < s.tokens.size() && t.head >= 0 && (t.dep == "conj" || t.dep == "xcomp" || t.dep == "advcl")) {
                const auto h = static_cast<std::size_t>(t.head);
                if (is_verb(s.tokens[h])) return subjects_of(h, depth + 1);
            }
            return {};
        };

        for (const auto& [v, objs] : objects) {
            const Token& verb = s.tokens[v];
            const std::string lemma = verb.lemma_or_text();
            for (std::size_t si : subjects_of(v, 0)) {
                for (std::size_t oi : objs) {
                    if (si == oi) continue;
                    const EntitySpan& a = s.entities[si];
                    const EntitySpan& b = s.entities[oi];
                    const EntityAttr aa = subdivide_entity(a.name, a.coarse);
                    const EntityAttr ba = subdivide_entity(b.name, b.coarse);
                    auto r = choose_event(lemma, verb.text, aa, ba, lexicon);
                    if (!r) continue;
                    EntityRef ra{a.name, aa, s.index};
                    EntityRef rb{b.name, ba, s.index};
                    Triple t = r->first_is_subject ? Triple{ra, verb.text, rb, r->event}
                                                   : Triple{rb, verb.text, ra, r->event};
                    if (!validate_edge(t.subject.attr, t.event, t.object.attr)) continue;
                    out.triples.push_back(std::move(t));
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Co-reference

namespace {

std::vector<Triple> merge_once(const std::vector<Triple>& triples, const CorefConfig& cfg) {
    // Distinct entities in first-appearance order, indexed by triple position.
    std::vector<EntityRef> ents;
    std::map<std::pair<std::string, EntityAttr>, std::size_t> id_of;
    std::vector<std::pair<std::size_t, std::size_t>> ends;
    auto intern = [&](const EntityRef& r, std::size_t triple_index) {
        auto key = std::make_pair(r.name, r.attr);
        auto it = id_of.find(key);
        if (it != id_of.end()) return it->second;
        id_of.emplace(key, ents.size());
        ents.push_back(EntityRef{r.name, r.attr, triple_index});
        return ents.size() - 1;
    };
    for (std::size_t t = 0; t < triples.size(); ++t) {
        const std::size_t a = intern(triples[t].subject, t);
        const std::size_t b = intern(triples[t].object, t);
        ends.emplace_back(a, b);
    }

    std::vector<std::size_t> parent(ents.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    auto would_loop = [&](std::size_t ra, std::size_t rb) {
        for (auto [a, b] : ends) {
            const std::size_t fa = find(a), fb = find(b);
            if ((fa == ra && fb == rb) || (fa == rb && fb == ra)) return true;
        }
        return false;
    };
    for (std::size_t m = 0; m < ents.size(); ++m) {
        for (std::size_t e = 0; e < m; ++e) {
            if (family(ents[e].attr) != family(ents[m].attr)) continue;
            const std::size_t re = find(e), rm = find(m);
            if (re == rm) continue;
            if (!(coref_similarity(ents[m], ents[e], cfg) > cfg.threshold)) continue;
            if (would_loop(re, rm)) continue;
            // The earliest entity stays the representative.
            if (re < rm) {
                parent[rm] = re;
            } else {
                parent[re] = rm;
            }
        }
    }

    std::vector<Triple> out = triples;
    for (std::size_t t = 0; t < out.size(); ++t) {
        const EntityRef& rs = ents[find(ends[t].first)];
        const EntityRef& ro = ents[find(ends[t].second)];
        out[t].subject.name = rs.name;
        out[t].subject.attr = rs.attr;
        out[t].object.name = ro.name;
        out[t].object.attr = ro.attr;
    }
    return out;
}

}  // namespace

std::vector<Triple> merge_coreferent(const std::vector<Triple>& triples, const CorefConfig& cfg) {
    cfg.validate();
    std::vector<Triple> cur = triples;
    for (std::size_t round = 0; round <= triples.size() * 2 + 1; ++round) {
        std::vector<Triple> next = merge_once(cur, cfg);
        if (next == cur) return cur;
        cur = std::move(next);
    }
    return cur;
}

std::optional<AttackGraph> assemble_graph(const std::vector<Triple>& triples, std::size_t min_nodes) {
    AttackGraph g(GraphRole::ASG);
    std::map<std::pair<std::string, EntityAttr>, NodeId> ids;
    auto node_for = [&](const EntityRef& r) {
        auto key = std::make_pair(r.name, r.attr);
        auto it = ids.find(key);
        if (it != ids.end()) return it->second;
        NodeId id = g.add_node(r.attr, r.name, "e" + std::to_string(ids.size()));
        ids.emplace(key, id);
        return id;
    };
    for (std::size_t t = 0; t < triples.size(); ++t) {
        const Triple& tr = triples[t];
        if (tr.subject.name == tr.object.name && tr.subject.attr == tr.object.attr) continue;
        const NodeId a = node_for(tr.subject);
        const NodeId b = node_for(tr.object);
        g.add_edge(a, b, tr.event, t);
    }
    if (g.node_count() == 0 || g.node_count() < min_nodes) return std::nullopt;
    g.reorder_chronologically();
    return g;
}

}  // namespace attackcast

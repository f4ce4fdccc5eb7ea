#include "attackcast/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "attackcast/asg.hpp"
#include "attackcast/atg.hpp"
#include "attackcast/eval.hpp"
#include "attackcast/forecast.hpp"
#include "attackcast/graph_io.hpp"

namespace attackcast {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Everything a config file may set. Flags given on the command line replace
/// the corresponding values after the file is read.
struct Settings {
    ExperimentConfig experiment;
    ModelConfig model;
    CorefConfig coref;
    fs::path templates;
    fs::path lexicon;
    bool verbose = false;
};

CorefConfig coref_from_json(const json& j) {
    CorefConfig c;
    if (!j.is_object()) throw InvalidInput("coref: expected an object");
    for (const auto& [key, value] : j.items()) {
        if (!value.is_number()) throw InvalidInput("coref." + key + ": expected a number");
        if (key == "w_d") c.w_d = value.get<double>();
        else if (key == "w_t") c.w_t = value.get<double>();
        else if (key == "threshold") c.threshold = value.get<double>();
        else throw InvalidInput("coref: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

Settings load_settings(const fs::path& path) {
    Settings s;
    if (path.empty()) return s;
    if (!fs::exists(path)) throw InvalidInput("config file not found: " + path.string());
    const json j = read_json_file(path);
    if (!j.is_object()) throw InvalidInput("config: expected an object");
    json experiment = json::object();
    for (const auto& [key, value] : j.items()) {
        if (key == "alignment" || key == "perturbation" || key == "reconstruction" || key == "dispatch") {
            experiment[key] = value;
        } else if (key == "model") {
            s.model = config_from_json(value);
        } else if (key == "coref") {
            s.coref = coref_from_json(value);
        } else if (key == "paths") {
            for (const auto& [pk, pv] : value.items()) {
                if (!pv.is_string()) throw InvalidInput("paths." + pk + ": expected a string");
                if (pk == "templates") s.templates = pv.get<std::string>();
                else if (pk == "lexicon") s.lexicon = pv.get<std::string>();
                else throw InvalidInput("paths: unknown key '" + pk + "'");
            }
        } else if (key == "verbose") {
            s.verbose = value.get<bool>();
        } else {
            throw InvalidInput("config: unknown key '" + key + "'");
        }
    }
    s.experiment = experiment_config_from_json(experiment);
    return s;
}

template <class T>
void apply(std::optional<T>& flag, T& target) {
    if (flag) target = *flag;
}

void require_file(const fs::path& p, const char* what) {
    if (p.empty()) throw InvalidInput(std::string("missing ") + what);
    if (!fs::is_regular_file(p)) throw InvalidInput(std::string(what) + " not found: " + p.string());
}

void require_dir(const fs::path& p, const char* what) {
    if (p.empty()) throw InvalidInput(std::string("missing ") + what);
    if (!fs::is_directory(p)) throw InvalidInput(std::string(what) + " not found: " + p.string());
}

/// Graph files and template files both load as graphs.
AttackGraph load_any_graph(const fs::path& p) {
    const json j = read_json_file(p);
    if (j.is_object() && j.contains("technique_id")) return template_from_json(j).graph;
    return graph_from_json(j);
}

void emit(std::ostream& out, const fs::path& path, const std::string& text) {
    if (path.empty()) out << text;
    else write_text_file(path, text);
}

PredictMode parse_mode(const std::string& m) {
    if (m == "greedy") return PredictMode::Greedy;
    if (m == "sample") return PredictMode::Sample;
    throw InvalidInput("unknown mode '" + m + "'");
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

struct AlignmentFlags {
    std::optional<double> fix_threshold;
    std::optional<double> interpret_threshold;
    std::optional<int> max_hops;

    void add(CLI::App* app, bool with_interpret) {
        app->add_option("--fix-threshold", fix_threshold, "Minimum node score for fixing a query node");
        if (with_interpret) {
            app->add_option("--threshold", interpret_threshold, "Minimum score for reporting a technique");
        }
        app->add_option("--max-hops", max_hops, "Longest delivery chain accepted for one query edge");
    }

    void apply_to(AlignmentConfig& c) {
        apply(fix_threshold, c.fix_threshold);
        apply(interpret_threshold, c.interpret_threshold);
        apply(max_hops, c.max_hops);
        c.validate();
    }
};

// ---------------------------------------------------------------------------

struct BuildAsgCmd {
    fs::path input, lexicon, output;
    std::optional<std::size_t> min_nodes;
    std::optional<double> coref_threshold;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("build-asg", "Build an attack scenario graph from annotated sentences");
        c->add_option("--input", input, "Annotated sentence file (JSON)")->required();
        c->add_option("--lexicon", lexicon, "Verb lexicon (TSV); defaults to paths.lexicon from the config");
        c->add_option("--output", output, "Graph file to write; stdout when omitted");
        c->add_option("--min-nodes", min_nodes, "Reject graphs with fewer nodes (default 5)");
        c->add_option("--coref-threshold", coref_threshold, "Co-reference merge threshold");
    }

    int run(Settings& s, std::ostream& out, std::ostream& err) {
        if (lexicon.empty()) lexicon = s.lexicon;
        require_file(input, "input file");
        require_file(lexicon, "lexicon");
        apply(coref_threshold, s.coref.threshold);
        s.coref.validate();
        const auto sentences = load_annotated(input);
        const VerbLexicon lex = VerbLexicon::load(lexicon);
        const ExtractResult ex = extract_triples(sentences, lex);
        for (const auto& d : ex.diagnostics) err << "warning: " << d << '\n';
        const auto merged = merge_coreferent(ex.triples, s.coref);
        const std::size_t floor = min_nodes.value_or(5);
        const auto g = assemble_graph(merged, floor);
        if (!g) {
            throw InvalidInput("graph has fewer than " + std::to_string(floor) + " nodes (" +
                               std::to_string(merged.size()) + " triples)");
        }
        const std::string text = graph_to_json(*g).dump(2) + "\n";
        if (output.empty()) {
            out << text;
        } else {
            write_text_file(output, text);
            out << "nodes " << g->node_count() << " edges " << g->edge_count() << " -> " << output.string() << '\n';
        }
        return 0;
    }
};

struct TemplatesCmd {
    fs::path dir;
    bool strict = false;
    bool list = false;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("templates", "Load, validate and summarize a template directory");
        c->add_option("--dir", dir, "Template directory; defaults to paths.templates from the config");
        c->add_flag("--strict", strict, "Fail when any template file is rejected");
        c->add_flag("--list", list, "List technique ids with node and edge counts");
    }

    int run(Settings& s, std::ostream& out, std::ostream& err) {
        if (dir.empty()) dir = s.templates;
        require_dir(dir, "template directory");
        const TemplateLoad load = load_templates(dir);
        for (const auto& d : load.diagnostics) err << "rejected: " << d << '\n';
        out << format_stats(template_stats(load.templates));
        if (list) {
            for (const auto& t : load.templates) {
                out << t.technique_id << '\t' << t.tactic << '\t' << t.graph.node_count() << '\t'
                    << t.graph.edge_count() << '\n';
            }
        }
        if (strict && !load.diagnostics.empty()) {
            throw InvalidInput(std::to_string(load.diagnostics.size()) + " template file(s) rejected");
        }
        return 0;
    }
};

struct SynthCmd {
    fs::path templates, output;
    CorpusSpec spec;
    std::string splice = "sequential-taint";

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("synth", "Synthesize a corpus by splicing template instances");
        c->add_option("--templates", templates, "Template directory; defaults to paths.templates");
        c->add_option("--output", output, "Corpus directory to write")->required();
        c->add_option("--count", spec.count, "Number of graphs")->capture_default_str();
        c->add_option("--min-chain", spec.min_chain, "Fewest templates per graph")->capture_default_str();
        c->add_option("--max-chain", spec.max_chain, "Most templates per graph")->capture_default_str();
        c->add_option("--splice", splice, "share-root-process or sequential-taint")->capture_default_str();
        c->add_option("--max-retries", spec.max_retries, "Attempts per graph before giving up")
            ->capture_default_str();
        c->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
    }

    int run(Settings& s, std::ostream& out, std::ostream& err) {
        if (templates.empty()) templates = s.templates;
        require_dir(templates, "template directory");
        const auto rule = parse_splice_rule(splice);
        if (!rule) throw InvalidInput("unknown splice rule '" + splice + "'");
        spec.splice = *rule;
        spec.validate();
        const TemplateLoad load = load_templates(templates);
        for (const auto& d : load.diagnostics) err << "rejected: " << d << '\n';
        const Corpus c = synthesize_corpus(load.templates, spec);
        for (const auto& d : c.diagnostics) err << "warning: " << d << '\n';
        write_corpus(c, output);
        out << "wrote " << c.graphs.size() << " graphs to " << output.string() << '\n';
        return 0;
    }
};

struct TrainCmd {
    fs::path corpus, output, resume, report;
    std::optional<int> epochs, batch_size, window;
    std::optional<double> learning_rate;
    std::optional<std::uint64_t> seed;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("train", "Train a forecast model on a corpus");
        c->add_option("--corpus", corpus, "Corpus directory")->required();
        c->add_option("--output", output, "Checkpoint file to write")->required();
        c->add_option("--resume", resume, "Continue training from this checkpoint");
        c->add_option("--epochs", epochs, "Training epochs");
        c->add_option("--batch-size", batch_size, "Sequences per update");
        c->add_option("--learning-rate", learning_rate, "Adam step size");
        c->add_option("--window", window, "Adjacency window length");
        c->add_option("--seed", seed, "Initialization and shuffling seed");
        c->add_option("--report", report, "Per-epoch statistics (CSV)");
    }

    int run(Settings& s, std::ostream& out, std::ostream&) {
        require_dir(corpus, "corpus directory");
        if (!resume.empty()) require_file(resume, "checkpoint");
        ModelConfig cfg = resume.empty() ? s.model : load_checkpoint(resume).config();
        apply(epochs, cfg.epochs);
        apply(batch_size, cfg.batch_size);
        apply(window, cfg.window);
        apply(learning_rate, cfg.learning_rate);
        apply(seed, cfg.seed);
        cfg.validate();
        const Corpus c = read_corpus(corpus);
        const auto seqs = encode_corpus(c.graphs, cfg.window);
        const bool verbose = s.verbose;
        auto progress = [&out, verbose](const EpochStats& e) {
            if (verbose) {
                out << "epoch " << e.epoch << " node_loss " << fmt(e.node_loss) << " edge_loss " << fmt(e.edge_loss)
                    << " node_tpr " << fmt(e.node_tpr) << " edge_tpr " << fmt(e.edge_tpr) << '\n';
            }
        };
        TrainReport rep;
        std::optional<ForecastModel> model;
        if (resume.empty()) {
            TrainResult r = train(seqs, cfg, progress);
            rep = std::move(r.report);
            model = std::move(r.model);
        } else {
            model = load_checkpoint(resume);
            if (model->config().window != cfg.window) throw InvalidInput("--window differs from the checkpoint");
            // Only the schedule may change when resuming.
            ModelConfig resumed = model->config();
            resumed.epochs = cfg.epochs;
            resumed.batch_size = cfg.batch_size;
            resumed.learning_rate = cfg.learning_rate;
            resumed.seed = cfg.seed;
            ForecastModel next(resumed);
            next.parameters() = model->parameters();
            model = std::move(next);
            rep = train_more(*model, seqs, progress);
        }
        save_checkpoint(*model, output);
        if (!report.empty()) write_text_file(report, report_csv(rep));
        const EpochStats e = evaluate(*model, seqs);
        out << "graphs " << seqs.size() << " node_tpr " << fmt(e.node_tpr) << " edge_tpr " << fmt(e.edge_tpr)
            << " -> " << output.string() << '\n';
        return 0;
    }
};

struct ForecastCmd {
    fs::path model, graph, output, templates, dot, rules;
    std::size_t steps = 5;
    std::string mode = "greedy";
    std::uint64_t seed = 0;
    std::optional<std::int64_t> decay;
    AlignmentFlags align;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("forecast", "Extend a graph with predicted future nodes");
        c->add_option("--model", model, "Checkpoint file")->required();
        c->add_option("--graph", graph, "Input graph file")->required();
        c->add_option("--output", output, "Forecast graph file; stdout when omitted");
        c->add_option("--steps", steps, "Most nodes to predict")->capture_default_str();
        c->add_option("--templates", templates,
                      "Stop once more techniques match than on the input (template directory)");
        c->add_option("--mode", mode, "greedy or sample")->capture_default_str();
        c->add_option("--seed", seed, "Sampling seed")->capture_default_str();
        c->add_option("--dot", dot, "Also write the forecast graph as DOT");
        c->add_option("--rules", rules, "Write countermeasure rules for the forecast edges (JSON)");
        c->add_option("--decay-seconds", decay, "Lifetime of dispatched rules");
        align.add(c, true);
    }

    int run(Settings& s, std::ostream& out, std::ostream& err) {
        require_file(model, "checkpoint");
        require_file(graph, "graph file");
        if (!templates.empty()) require_dir(templates, "template directory");
        AlignmentConfig acfg = s.experiment.alignment;
        align.apply_to(acfg);
        if (decay) {
            if (*decay <= 0) throw InvalidInput("--decay-seconds must be positive");
            s.experiment.dispatch.decay = std::chrono::seconds(*decay);
        }
        const ForecastModel m = load_checkpoint(model);
        const AttackGraph g = load_any_graph(graph);
        std::vector<AtgTemplate> tpl;
        StopCriterion stop;
        stop.max_steps = steps;
        if (!templates.empty()) {
            tpl = load_templates(templates).templates;
            stop = stop_on_technique_increase(tpl, g, acfg, steps);
        }
        const ForecastResult r = forecast(m, g, stop, {parse_mode(mode), seed});
        for (const auto& d : r.diagnostics) err << "note: " << d << '\n';
        const std::string text = graph_to_json(r.graph).dump(2) + "\n";
        if (output.empty()) out << text;
        else write_text_file(output, text);
        if (!dot.empty()) write_text_file(dot, export_dot(r.graph));
        if (!rules.empty()) {
            const InvestigationHook hook =
                tpl.empty() ? InvestigationHook{} : technique_increase_hook(tpl, g, acfg);
            write_text_file(rules, rules_to_json(investigate_and_dispatch(r.graph, hook, s.experiment.dispatch))
                                           .dump(2) + "\n");
        }
        if (!output.empty()) {
            out << "stop " << to_string(r.reason) << " steps " << r.steps << " added_nodes " << r.added_nodes
                << " added_edges " << r.added_edges << " -> " << output.string() << '\n';
        }
        return 0;
    }
};

struct AlignCmd {
    fs::path query, host, report;
    AlignmentFlags align;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("align", "Score how well a query graph aligns into a host graph");
        c->add_option("--query", query, "Query graph or template file")->required();
        c->add_option("--host", host, "Host graph file")->required();
        c->add_option("--report", report, "Write the full alignment report (JSON)");
        align.add(c, false);
    }

    int run(Settings& s, std::ostream& out, std::ostream&) {
        require_file(query, "query file");
        require_file(host, "host file");
        AlignmentConfig acfg = s.experiment.alignment;
        align.apply_to(acfg);
        const AttackGraph q = load_any_graph(query);
        const AttackGraph h = load_any_graph(host);
        const AlignmentResult r = attackcast::align(q, h, acfg);
        const json rep = alignment_report(q, h, r);
        out << "score " << fmt(r.score) << " flows " << r.matched_flows << "/" << r.total_flows << '\n';
        for (const auto& [qid, hid] : rep["fixed"].items()) {
            out << qid << " -> " << (hid.is_null() ? std::string("-") : hid.get<std::string>()) << '\n';
        }
        if (!report.empty()) write_text_file(report, rep.dump(2) + "\n");
        return 0;
    }
};

struct InterpretCmd {
    fs::path afg, templates;
    AlignmentFlags align;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("interpret", "List the techniques whose templates align into a graph");
        c->add_option("--afg", afg, "Graph file to interpret")->required();
        c->add_option("--templates", templates, "Template directory; defaults to paths.templates");
        align.add(c, true);
    }

    int run(Settings& s, std::ostream& out, std::ostream&) {
        if (templates.empty()) templates = s.templates;
        require_file(afg, "graph file");
        require_dir(templates, "template directory");
        AlignmentConfig acfg = s.experiment.alignment;
        align.apply_to(acfg);
        const auto matches = interpret(load_any_graph(afg), load_templates(templates).templates, acfg);
        out << "technique\tscore\n";
        for (const auto& m : matches) out << m.technique_id << '\t' << fmt(m.score) << '\n';
        return 0;
    }
};

struct PerturbationCmd {
    fs::path corpus, output;
    std::optional<int> max_count;
    std::vector<std::uint64_t> seeds;
    std::optional<unsigned> threads;
    AlignmentFlags align;

    void add(CLI::App* parent) {
        auto* c = parent->add_subcommand("perturbation-study", "Score perturbed graphs against their originals");
        c->add_option("--corpus", corpus, "Corpus directory")->required();
        c->add_option("--output", output, "Score table (CSV); stdout when omitted");
        c->add_option("--max-count", max_count, "Largest number of operations per kind");
        c->add_option("--seed", seeds, "Perturbation seed, repeatable");
        c->add_option("--threads", threads, "Worker threads, 0 for all cores");
        align.add(c, false);
    }

    int run(Settings& s, std::ostream& out, std::ostream&) {
        require_dir(corpus, "corpus directory");
        PerturbationStudyConfig cfg = s.experiment.perturbation;
        align.apply_to(cfg.alignment);
        apply(max_count, cfg.max_count);
        apply(threads, cfg.threads);
        if (!seeds.empty()) cfg.seeds = seeds;
        if (cfg.max_count < 0) throw InvalidInput("--max-count must be non-negative");
        const Corpus c = read_corpus(corpus);
        emit(out, output, perturbation_csv(perturbation_study(c.graphs, cfg)));
        if (!output.empty()) out << "graphs " << c.graphs.size() << " -> " << output.string() << '\n';
        return 0;
    }
};

struct ReconstructionCmd {
    fs::path model, corpus, templates, output, summary, dot_dir;
    std::optional<std::size_t> max_del, max_steps;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    AlignmentFlags align;

    void add(CLI::App* parent) {
        auto* c = parent->add_subcommand("reconstruction", "Break, forecast and re-score every corpus graph");
        c->add_option("--model", model, "Checkpoint file")->required();
        c->add_option("--corpus", corpus, "Corpus directory")->required();
        c->add_option("--templates", templates, "Template directory; defaults to paths.templates");
        c->add_option("--output", output, "Per-graph records (CSV); stdout when omitted");
        c->add_option("--summary", summary, "Means per deletion count (CSV)");
        c->add_option("--dot-dir", dot_dir, "Write original, broken and forecast DOT files here");
        c->add_option("--max-del", max_del, "Most nodes deleted per graph");
        c->add_option("--max-steps", max_steps, "Most nodes forecast per graph");
        c->add_option("--mode", mode, "greedy or sample");
        c->add_option("--seed", seed, "Sampling seed");
        c->add_option("--threads", threads, "Worker threads, 0 for all cores");
        align.add(c, true);
    }

    int run(Settings& s, std::ostream& out, std::ostream&) {
        if (templates.empty()) templates = s.templates;
        require_file(model, "checkpoint");
        require_dir(corpus, "corpus directory");
        require_dir(templates, "template directory");
        ReconstructionConfig cfg = s.experiment.reconstruction;
        align.apply_to(cfg.alignment);
        apply(max_del, cfg.max_del);
        apply(max_steps, cfg.max_steps);
        apply(seed, cfg.seed);
        apply(threads, cfg.threads);
        if (mode) cfg.mode = parse_mode(*mode);
        cfg.dot_dir = dot_dir;
        const ForecastModel m = load_checkpoint(model);
        const Corpus c = read_corpus(corpus);
        const auto tpl = load_templates(templates).templates;
        const auto recs = reconstruction_experiment(m, c.graphs, tpl, cfg);
        emit(out, output, reconstruction_csv(recs));
        if (!summary.empty()) write_text_file(summary, summary_csv(summarize(recs)));
        std::vector<std::vector<std::string>> truth, broken, afg;
        for (const auto& r : recs) {
            truth.push_back(r.original_techniques);
            broken.push_back(r.broken_techniques);
            afg.push_back(r.afg_techniques);
        }
        if (!output.empty()) {
            const Prf b = technique_prf(truth, broken);
            const Prf a = technique_prf(truth, afg);
            out << "records " << recs.size() << '\n';
            out << "broken precision " << fmt(b.precision) << " recall " << fmt(b.recall) << " f1 " << fmt(b.f1)
                << '\n';
            out << "afg precision " << fmt(a.precision) << " recall " << fmt(a.recall) << " f1 " << fmt(a.f1)
                << '\n';
        }
        return 0;
    }
};

struct ExportDotCmd {
    fs::path graph, output;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("export-dot", "Render a graph or template as Graphviz DOT");
        c->add_option("--graph", graph, "Graph or template file")->required();
        c->add_option("--output", output, "DOT file; stdout when omitted");
    }

    int run(Settings&, std::ostream& out, std::ostream&) {
        require_file(graph, "graph file");
        emit(out, output, export_dot(load_any_graph(graph)));
        return 0;
    }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Attack graph alignment, forecasting and evaluation", "attackcast"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    bool verbose = false;
    app.add_option("--config", config_path,
                   std::string("JSON config file; overrides $") + kConfigEnv + ", flags override both");
    app.add_flag("-v,--verbose", verbose, "Print progress while working");

    BuildAsgCmd build_asg;
    TemplatesCmd templates;
    SynthCmd synth;
    TrainCmd train_cmd;
    ForecastCmd forecast_cmd;
    AlignCmd align_cmd;
    InterpretCmd interpret_cmd;
    PerturbationCmd perturbation;
    ReconstructionCmd reconstruction;
    ExportDotCmd export_dot_cmd;
    build_asg.add(app);
    templates.add(app);
    synth.add(app);
    train_cmd.add(app);
    forecast_cmd.add(app);
    align_cmd.add(app);
    interpret_cmd.add(app);
    auto* evaluate = app.add_subcommand("evaluate", "Run an evaluation experiment");
    evaluate->require_subcommand(1);
    perturbation.add(evaluate);
    reconstruction.add(evaluate);
    export_dot_cmd.add(app);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        const CLI::App* failed = &app;
        for (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front(); sub;
             sub = sub->get_subcommands().empty() ? nullptr : sub->get_subcommands().front()) {
            failed = sub;
        }
        err << failed->help();
        return 2;
    }

    try {
        if (config_path.empty()) {
            if (const char* env = std::getenv(kConfigEnv)) config_path = env;
        }
        Settings s = load_settings(config_path);
        s.verbose = s.verbose || verbose;
        const CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (name == "build-asg") return build_asg.run(s, out, err);
        if (name == "templates") return templates.run(s, out, err);
        if (name == "synth") return synth.run(s, out, err);
        if (name == "train") return train_cmd.run(s, out, err);
        if (name == "forecast") return forecast_cmd.run(s, out, err);
        if (name == "align") return align_cmd.run(s, out, err);
        if (name == "interpret") return interpret_cmd.run(s, out, err);
        if (name == "export-dot") return export_dot_cmd.run(s, out, err);
        const std::string which = sub->get_subcommands().front()->get_name();
        if (which == "perturbation-study") return perturbation.run(s, out, err);
        return reconstruction.run(s, out, err);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "error: " << msg << '\n';
        return 1;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace attackcast

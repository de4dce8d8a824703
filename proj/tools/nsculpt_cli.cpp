// nsculpt: command-line driver for graph generation, training, pruning,
// module detection, path analysis, trial grids and Graphviz export.

#include "nsculpt/boolean_graph.hpp"
#include "nsculpt/csv.hpp"
#include "nsculpt/error.hpp"
#include "nsculpt/hierarchy_eval.hpp"
#include "nsculpt/io.hpp"
#include "nsculpt/module_detection.hpp"
#include "nsculpt/mlp.hpp"
#include "nsculpt/path_analysis.hpp"
#include "nsculpt/pruning.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nsculpt;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    int threads = 1;
    double t_m = kDefaultModularityThreshold;
    double delta_m = kDefaultMergeThreshold;
    double lr = 0.05;
    std::size_t batch = 16;
    std::size_t epochs = 120;
};

struct Options {
    // gen
    std::string family = "separable";
    std::size_t reuse = 0;
    std::size_t overlap = 0;
    std::string spec_file;
    // train / prune / detect / analyze / viz
    std::string graph_file;
    std::string checkpoint_file;
    std::string input_file;
    std::vector<std::size_t> hidden{24, 24};
    double l2 = 1e-4;
    double sigma = 0.1;
    double p_u = 10.0;
    double p_e = 1.0;
    bool full_grid = false;
    double percent = 90.0;
    double alpha = 0.05;
    // eval
    std::string config_file;
};

ModularitySpec spec_from_options(const Options& o) {
    if (!o.spec_file.empty()) return spec_from_json(parse_json_file(o.spec_file));
    const Family f = family_from_string(o.family);
    switch (f) {
        case Family::Reused: return ModularitySpec::reused(o.reuse ? o.reuse : 8);
        case Family::Overlap: return ModularitySpec::input_overlap(o.overlap, o.reuse ? o.reuse : 4);
        case Family::Hierarchy: return ModularitySpec::hierarchy(o.reuse ? o.reuse : 4);
        default: return ModularitySpec::make(f, f == Family::Dense ? 4 : 2, 0);
    }
}

ModularitySpec spec_of(const FunctionGraph& g) {
    if (!g.spec()) throw ValidationError("graph file carries no spec");
    return *g.spec();
}

MlpConfig train_config(const Common& c, const Options& o, const TruthTable& t, std::uint64_t seed) {
    MlpConfig mc;
    mc.layer_widths.push_back(t.n_inputs);
    mc.layer_widths.insert(mc.layer_widths.end(), o.hidden.begin(), o.hidden.end());
    mc.layer_widths.push_back(t.n_outputs);
    mc.seed = seed;
    mc.lr = c.lr;
    mc.batch_size = c.batch;
    mc.epochs = c.epochs;
    mc.l2 = o.l2;
    return mc;
}

std::string joined(int argc, char** argv) {
    std::string s;
    for (int i = 1; i < argc; ++i) {
        if (i > 1) s += ' ';
        s += argv[i];
    }
    return s;
}

json common_json(const Common& c) {
    return json{{"seed", c.seed},   {"threads", c.threads}, {"tm", c.t_m},          {"dm", c.delta_m},
                {"lr", c.lr},       {"batch", c.batch},     {"epochs", c.epochs}};
}

void finish(RunManifest& m, const fs::path& out) { write_file(out / kManifestName, json_text(m.to_json())); }

int cmd_gen(const Common& c, const Options& o, RunManifest& m, const fs::path& out) {
    const auto spec = spec_from_options(o);
    const auto g = generate(spec, c.seed);
    const auto t = truth_table(g);
    CsvTable csv = [&] {
        std::vector<std::string> header;
        for (std::size_t i = 0; i < t.n_inputs; ++i) header.push_back("x" + std::to_string(i + 1));
        for (std::size_t j = 0; j < t.n_outputs; ++j) header.push_back("y" + std::to_string(j + 1));
        CsvTable tab(header);
        for (std::size_t r = 0; r < t.rows(); ++r) {
            std::vector<std::string> row;
            for (auto b : t.input_row(r)) row.push_back(std::to_string(b));
            for (auto b : t.output_row(r)) row.push_back(std::to_string(b));
            tab.add(row);
        }
        return tab;
    }();
    m.config["spec"] = to_json(spec);
    m.emit(out, "graph.json", json_text(to_json(g)));
    m.emit(out, "truth_table.csv", csv.str());
    m.emit(out, "signature.json", json_text(to_json(signature(g, spec))));
    return 0;
}

int cmd_train(const Common& c, const Options& o, RunManifest& m, const fs::path& out) {
    const auto g = graph_from_json(parse_json_file(o.graph_file));
    const auto t = truth_table(g);
    const auto mc = train_config(c, o, t, c.seed);
    auto mlp = init(mc);
    const auto h = train(mlp, t, NoiseConfig{o.sigma, c.seed}, mc);
    CsvTable csv({"epoch", "loss", "accuracy"});
    for (std::size_t e = 0; e < h.loss.size(); ++e) {
        csv.add({std::to_string(e), format_double(h.loss[e]), format_double(h.accuracy[e])});
    }
    m.config["widths"] = mc.layer_widths;
    m.config["l2"] = o.l2;
    m.config["sigma"] = o.sigma;
    m.emit(out, "checkpoint.json", json_text(to_json(mlp)));
    m.emit(out, "history.csv", csv.str());
    std::cout << "final accuracy " << format_double(h.accuracy.empty() ? bitwise_accuracy(mlp, validation_view(t)) : h.accuracy.back())
              << "\n";
    return 0;
}

int cmd_prune(const Common& c, const Options& o, RunManifest& m, const fs::path& out) {
    const auto g = graph_from_json(parse_json_file(o.graph_file));
    const auto t = truth_table(g);
    const auto mlp = mlp_from_json(parse_json_file(o.checkpoint_file));
    MlpConfig mc;
    mc.layer_widths = mlp.widths();
    mc.seed = mlp.seed;
    mc.lr = c.lr;
    mc.batch_size = c.batch;
    mc.epochs = c.epochs;
    mc.l2 = o.l2;
    const NoiseConfig noise{o.sigma, c.seed};
    PruneTrace trace;
    MaskedMlp sparse;
    if (o.full_grid) {
        auto r = grid_search(mlp, t, noise, mc, GridConfig::defaults());
        if (!r.success) throw PreconditionError("no pruning configuration reached the accuracy target (" + r.failure + ")");
        sparse = std::move(r.best);
        trace = std::move(r.trace);
        m.config["grid"] = true;
        m.config["p_u"] = r.p_u;
        m.config["p_e"] = r.p_e;
    } else {
        PruneConfig pc;
        pc.p_u = o.p_u;
        pc.p_e = o.p_e;
        auto r = sculpt(mlp, t, noise, mc, pc);
        sparse = std::move(r.mlp);
        trace = std::move(r.trace);
        m.config["p_u"] = o.p_u;
        m.config["p_e"] = o.p_e;
    }
    m.emit(out, "sparse.json", json_text(to_json(sparse)));
    m.emit(out, "trace.csv", trace.csv().str());
    std::cout << "density " << format_double(sparse.edge_density()) << ", alive hidden units "
              << sparse.alive_hidden_count() << "\n";
    return 0;
}

int cmd_detect(const Common& c, const Options& o, RunManifest& m, const fs::path& out) {
    const auto mlp = mlp_from_json(parse_json_file(o.checkpoint_file));
    const auto h = detect(mlp, c.t_m, c.delta_m);
    m.emit(out, "hierarchy.json", json_text(to_json(h)));
    m.emit(out, "network.dot", export_dot(h, mlp));
    m.emit(out, "modules.dot", export_dot(h));
    std::cout << h.modules.size() << " modules\n";
    if (!o.graph_file.empty()) {
        const auto g = graph_from_json(parse_json_file(o.graph_file));
        const auto f = compare(h, signature(g, spec_of(g), mlp.hidden_layers()));
        const json flags{{"input_modules", f.input_modules},
                         {"output_modules", f.output_modules},
                         {"middle_separation", f.middle_separation},
                         {"exact_structure", f.exact_structure}};
        m.emit(out, "comparison.json", json_text(flags));
        std::cout << flags.dump() << "\n";
    }
    return 0;
}

int cmd_analyze(const Common&, const Options& o, RunManifest& m, const fs::path& out) {
    const auto mlp = mlp_from_json(parse_json_file(o.checkpoint_file));
    const auto pi = path_product_matrix(mlp);
    std::vector<CoverageResult> cov;
    for (std::size_t l = 1; l <= mlp.hidden_layers(); ++l) cov.push_back(layer_coverage(mlp, l, o.percent));
    m.config["percent"] = o.percent;
    m.emit(out, "path_products.csv", path_product_csv(pi).str());
    m.emit(out, "coverage.csv", coverage_csv(cov).str());
    for (const auto& cr : cov) std::cout << "layer " << cr.layer << ": N_" << o.percent << " = " << cr.n_units << "\n";
    if (!o.graph_file.empty()) {
        // One test per true module that owns both inputs and outputs.
        const auto g = graph_from_json(parse_json_file(o.graph_file));
        const auto sig = signature(g, spec_of(g));
        json tests = json::array();
        for (const auto& mod : sig.modules) {
            if (mod.inputs.empty() || mod.outputs.empty()) continue;
            std::vector<std::size_t> in(mod.inputs.begin(), mod.inputs.end());
            std::vector<std::size_t> own(mod.outputs.begin(), mod.outputs.end()), other;
            for (std::size_t j = 0; j < g.n_outputs(); ++j) {
                if (!mod.outputs.count(j)) other.push_back(j);
            }
            if (other.empty()) continue;
            const auto r = input_separability_test(pi, in, own, other, o.alpha);
            tests.push_back({{"inputs", in},
                             {"outputs_own", own},
                             {"outputs_other", other},
                             {"t", r.result.t_stat},
                             {"dof", r.result.dof},
                             {"p_value", r.result.p_value},
                             {"reject", r.reject}});
            std::cout << "inputs " << json(in).dump() << ": p = " << format_double(r.result.p_value)
                      << (r.reject ? " (reject)" : " (keep)") << "\n";
        }
        m.config["alpha"] = o.alpha;
        m.emit(out, "welch.json", json_text(tests));
    }
    return 0;
}

int cmd_eval(const Common& c, const Options& o, RunManifest& m, const fs::path& out) {
    TrialConfig cfg;
    if (!o.config_file.empty()) {
        cfg = trial_config_from_json(parse_json_file(o.config_file));
    } else {
        cfg.spec = spec_from_options(o);
        cfg.t_m = c.t_m;
        cfg.delta_m = c.delta_m;
        cfg.lr = c.lr;
        cfg.batch_size = c.batch;
        cfg.epochs = c.epochs;
        cfg.graph_seed = c.seed;
    }
    const auto rep = run_grid(cfg, c.threads);
    m.config["trial_config"] = to_json(cfg);
    // Thread count does not change results, so keep it out of the digests.
    m.config.erase("threads");
    m.emit(out, "trials.csv", rep.csv().str());
    m.emit(out, "report.json", json_text(rep.aggregate_json()));
    for (const auto& r : rep.rates) {
        std::cout << "depth " << r.depth << " " << r.flag << " " << r.successes << "/" << r.trials << "\n";
    }
    for (const auto& t : rep.thresholds) {
        std::cout << (t.passed ? "PASS " : "FAIL ") << t.threshold.flag << " rate " << format_double(t.rate)
                  << " >= " << format_double(t.threshold.min_rate) << "\n";
    }
    return rep.passed() ? 0 : 1;
}

int cmd_viz(const Common&, const Options& o, RunManifest& m, const fs::path& out) {
    const auto j = parse_json_file(o.input_file);
    std::string dot;
    if (j.contains("modules")) {
        const auto h = hierarchy_from_json(j);
        dot = o.checkpoint_file.empty() ? export_dot(h) : export_dot(h, mlp_from_json(parse_json_file(o.checkpoint_file)));
    } else if (j.contains("nodes")) {
        dot = export_dot(graph_from_json(j));
    } else {
        throw FormatError("viz expects a hierarchy or graph JSON file");
    }
    m.emit(out, fs::path(o.input_file).stem().string() + ".dot", dot);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Train, prune and dissect MLPs on modular Boolean tasks"};
    app.require_subcommand(1);
    app.fallthrough();
    Common c;
    Options o;
    if (const char* env = std::getenv("NS_SEED")) {
        try {
            c.seed = std::stoull(env);
        } catch (const std::exception&) {
            std::cerr << "error: NS_SEED must be an unsigned integer\n";
            return 2;
        }
    }
    app.add_option("--seed", c.seed, "Seed (default from NS_SEED, else 0)");
    app.add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
    app.add_option("--threads", c.threads, "Trial-level threads for eval")->check(CLI::PositiveNumber);
    app.add_option("--tm", c.t_m, "Modularity metric threshold")->capture_default_str();
    app.add_option("--dm", c.delta_m, "Cluster merging threshold")->capture_default_str();
    app.add_option("--lr", c.lr, "Learning rate")->capture_default_str();
    app.add_option("--batch", c.batch, "Batch size")->capture_default_str();
    app.add_option("--epochs", c.epochs, "Epochs per (re)training")->capture_default_str();

    auto* gen = app.add_subcommand("gen", "Generate a function graph and its truth table");
    gen->add_option("--family", o.family, "separable|reused|separable_reused|dense|overlap|hierarchy");
    gen->add_option("--reuse", o.reuse, "Outputs per reused sub-function");
    gen->add_option("--overlap", o.overlap, "Shared inputs (overlap family)");
    gen->add_option("--spec", o.spec_file, "Spec JSON instead of --family")->check(CLI::ExistingFile);

    auto* tr = app.add_subcommand("train", "Train a dense network on a graph");
    tr->add_option("--graph", o.graph_file, "Graph JSON")->required()->check(CLI::ExistingFile);
    tr->add_option("--hidden", o.hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
    tr->add_option("--l2", o.l2)->capture_default_str();
    tr->add_option("--sigma", o.sigma, "Input noise std-dev")->capture_default_str();

    auto* pr = app.add_subcommand("prune", "Unit then edge pruning of a checkpoint");
    pr->add_option("--graph", o.graph_file, "Graph JSON")->required()->check(CLI::ExistingFile);
    pr->add_option("--checkpoint", o.checkpoint_file, "Dense checkpoint")->required()->check(CLI::ExistingFile);
    pr->add_option("--p-u", o.p_u, "Unit step percent")->capture_default_str();
    pr->add_option("--p-e", o.p_e, "Edge step percent")->capture_default_str();
    pr->add_flag("--grid", o.full_grid, "Search the full step grid and keep the sparsest network");
    pr->add_option("--l2", o.l2)->capture_default_str();
    pr->add_option("--sigma", o.sigma)->capture_default_str();

    auto* de = app.add_subcommand("detect", "Detect modules in a sparse checkpoint");
    de->add_option("--checkpoint", o.checkpoint_file, "Sparse checkpoint")->required()->check(CLI::ExistingFile);
    de->add_option("--graph", o.graph_file, "Graph JSON to compare against")->check(CLI::ExistingFile);

    auto* an = app.add_subcommand("analyze", "Path products, unit coverage and separability tests");
    an->add_option("--checkpoint", o.checkpoint_file, "Checkpoint")->required()->check(CLI::ExistingFile);
    an->add_option("--graph", o.graph_file, "Graph JSON (enables separability tests)")->check(CLI::ExistingFile);
    an->add_option("--percent", o.percent, "Coverage percent")->capture_default_str();
    an->add_option("--alpha", o.alpha, "Test level")->capture_default_str();

    auto* ev = app.add_subcommand("eval", "Run a trial grid and score detected hierarchies");
    ev->add_option("--config", o.config_file, "Trial config JSON")->check(CLI::ExistingFile);
    ev->add_option("--family", o.family, "Family when no config is given");
    ev->add_option("--reuse", o.reuse);
    ev->add_option("--overlap", o.overlap);

    auto* vz = app.add_subcommand("viz", "Render a hierarchy or graph JSON as DOT");
    vz->add_option("--input", o.input_file, "Hierarchy or graph JSON")->required()->check(CLI::ExistingFile);
    vz->add_option("--checkpoint", o.checkpoint_file, "Checkpoint for a unit-level drawing")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const fs::path out = c.out_dir;
    RunManifest manifest;
    manifest.command = joined(argc, argv);
    manifest.seed = c.seed;
    manifest.config = common_json(c);
    try {
        if (!(c.t_m < 0.0)) throw ValidationError("--tm must be negative");
        if (!(c.delta_m > 0.0 && c.delta_m <= 1.0)) throw ValidationError("--dm must lie in (0, 1]");
        int code = 0;
        const auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        manifest.config["subcommand"] = name;
        if (name == "gen") code = cmd_gen(c, o, manifest, out);
        else if (name == "train") code = cmd_train(c, o, manifest, out);
        else if (name == "prune") code = cmd_prune(c, o, manifest, out);
        else if (name == "detect") code = cmd_detect(c, o, manifest, out);
        else if (name == "analyze") code = cmd_analyze(c, o, manifest, out);
        else if (name == "eval") code = cmd_eval(c, o, manifest, out);
        else if (name == "viz") code = cmd_viz(c, o, manifest, out);
        finish(manifest, out);
        return code;
    } catch (const nsculpt::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

#include "nsculpt/hierarchy_eval.hpp"

#include "nsculpt/error.hpp"
#include "nsculpt/rng.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nsculpt {

using nlohmann::json;

bool flag_value(const SuccessFlags& f, const std::string& name) {
    if (name == "input_modules") return f.input_modules;
    if (name == "output_modules") return f.output_modules;
    if (name == "middle_separation") return f.middle_separation;
    if (name == "exact_structure") return f.exact_structure;
    throw ValidationError("unknown success flag '" + name + "'");
}

namespace {

using Key = std::pair<std::set<std::size_t>, std::set<std::size_t>>;
using Partition = std::set<std::set<std::size_t>>;

template <class Mods, class Get>
Partition partition_of(const Mods& mods, Get get) {
    Partition p;
    for (const auto& m : mods) {
        const auto& s = get(m);
        if (!s.empty()) p.insert(s);
    }
    return p;
}

std::set<std::size_t> union_of(const Partition& p) {
    std::set<std::size_t> u;
    for (const auto& s : p) u.insert(s.begin(), s.end());
    return u;
}

bool has_hidden(const FoundModule& m, std::size_t depth) {
    return std::any_of(m.units.begin(), m.units.end(),
                       [&](const UnitRef& u) { return u.layer > 0 && u.layer < depth; });
}

// Exact matching: keyed modules by key, anonymous ones by backtracking, then
// identical uses-edges.
bool isomorphic(const ModuleHierarchy& found, const HierarchySignature& truth) {
    const std::size_t n = truth.modules.size();
    if (found.modules.size() != n) return false;
    std::map<Key, std::size_t> truth_key;
    std::vector<std::size_t> anon_truth;
    for (const auto& m : truth.modules) {
        if (m.inputs.empty() && m.outputs.empty()) {
            anon_truth.push_back(m.id);
        } else if (!truth_key.emplace(Key{m.inputs, m.outputs}, m.id).second) {
            return false;
        }
    }
    std::vector<std::size_t> map(n, n);
    std::vector<std::size_t> anon_found;
    std::set<std::size_t> used;
    for (const auto& m : found.modules) {
        if (m.inputs.empty() && m.outputs.empty()) {
            anon_found.push_back(m.id);
            continue;
        }
        auto it = truth_key.find(Key{m.inputs, m.outputs});
        if (it == truth_key.end() || !used.insert(it->second).second) return false;
        map[m.id] = it->second;
    }
    if (anon_found.size() != anon_truth.size()) return false;
    const std::set<std::pair<std::size_t, std::size_t>> truth_uses(truth.uses.begin(), truth.uses.end());
    std::vector<std::uint8_t> taken(n, 0);
    auto check = [&] {
        std::set<std::pair<std::size_t, std::size_t>> mapped;
        for (const auto& [a, b] : found.uses) mapped.insert({map[a], map[b]});
        return mapped == truth_uses;
    };
    auto rec = [&](auto&& self, std::size_t k) -> bool {
        if (k == anon_found.size()) return check();
        for (auto t : anon_truth) {
            if (taken[t]) continue;
            taken[t] = 1;
            map[anon_found[k]] = t;
            if (self(self, k + 1)) return true;
            taken[t] = 0;
        }
        return false;
    };
    return rec(rec, 0);
}

}  // namespace

SuccessFlags compare(const ModuleHierarchy& found, const HierarchySignature& truth) {
    const auto get_in = [](const auto& m) -> const std::set<std::size_t>& { return m.inputs; };
    const auto get_out = [](const auto& m) -> const std::set<std::size_t>& { return m.outputs; };
    const auto fin = partition_of(found.modules, get_in), tin = partition_of(truth.modules, get_in);
    const auto fout = partition_of(found.modules, get_out), tout = partition_of(truth.modules, get_out);
    if (union_of(fin) != union_of(tin) || union_of(fout) != union_of(tout)) {
        throw ComparisonError("found and true hierarchies cover different input/output units");
    }
    SuccessFlags f;
    f.input_modules = fin == tin;
    f.output_modules = fout == tout;

    // Middle separation: each module holding hidden units is a true keyed
    // module, or an anonymous module whose keyed neighbours match those of
    // an anonymous true module.
    std::map<Key, std::size_t> truth_key;
    for (const auto& m : truth.modules) {
        if (!m.inputs.empty() || !m.outputs.empty()) truth_key[{m.inputs, m.outputs}] = m.id;
    }
    auto neighbours = [](const auto& uses, std::size_t id, const auto& key_of) {
        std::pair<std::set<std::size_t>, std::set<std::size_t>> nb;
        for (const auto& [a, b] : uses) {
            if (b == id) {
                if (auto k = key_of(a)) nb.first.insert(*k);
            }
            if (a == id) {
                if (auto k = key_of(b)) nb.second.insert(*k);
            }
        }
        return nb;
    };
    auto found_key = [&](std::size_t id) -> std::optional<std::size_t> {
        const auto& m = found.modules.at(id);
        auto it = truth_key.find({m.inputs, m.outputs});
        if (it == truth_key.end()) return std::nullopt;
        return it->second;
    };
    auto true_key = [&](std::size_t id) -> std::optional<std::size_t> {
        const auto& m = truth.modules.at(id);
        if (m.inputs.empty() && m.outputs.empty()) return std::nullopt;
        return id;
    };
    std::set<std::pair<std::set<std::size_t>, std::set<std::size_t>>> anon_truth_nb;
    for (const auto& m : truth.modules) {
        if (m.inputs.empty() && m.outputs.empty()) anon_truth_nb.insert(neighbours(truth.uses, m.id, true_key));
    }
    f.middle_separation = true;
    for (const auto& m : found.modules) {
        if (!has_hidden(m, found.depth)) continue;
        if (!m.inputs.empty() || !m.outputs.empty()) {
            if (!truth_key.count({m.inputs, m.outputs})) f.middle_separation = false;
        } else if (!anon_truth_nb.count(neighbours(found.uses, m.id, found_key))) {
            f.middle_separation = false;
        }
    }
    f.exact_structure = f.input_modules && f.output_modules && isomorphic(found, truth);
    return f;
}

// ---------------------------------------------------------------------------

void TrialConfig::validate() const {
    spec.validate();
    if (widths.empty() || depths.empty() || seeds.empty()) throw ValidationError("trial grids must be nonempty");
    for (auto w : widths) {
        if (w < 1) throw ValidationError("widths must be >= 1");
    }
    for (auto d : depths) {
        if (d < 1) throw ValidationError("depths must be >= 1");
    }
    if (!(t_m < 0.0)) throw ValidationError("modularity threshold must be negative");
    if (!(delta_m > 0.0 && delta_m <= 1.0)) throw ValidationError("merge threshold must lie in (0, 1]");
    if (grid.p_u_values.empty() || grid.p_e_values.empty()) throw ValidationError("pruning grids must be nonempty");
    for (const auto& t : thresholds) {
        flag_value({}, t.flag);
        if (!(t.min_rate >= 0.0 && t.min_rate <= 1.0)) throw ValidationError("threshold rates must lie in [0, 1]");
    }
}

json to_json(const TrialConfig& c) {
    json th = json::array();
    for (const auto& t : c.thresholds) th.push_back({{"flag", t.flag}, {"min_rate", t.min_rate}, {"deep_only", t.deep_only}});
    return json{{"spec", to_json(c.spec)},
                {"graph_seed", c.graph_seed},
                {"widths", c.widths},
                {"depths", c.depths},
                {"seeds", c.seeds},
                {"t_m", c.t_m},
                {"delta_m", c.delta_m},
                {"lr", c.lr},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"l2", c.l2},
                {"sigma", c.sigma},
                {"p_u_values", c.grid.p_u_values},
                {"p_e_values", c.grid.p_e_values},
                {"accuracy_target", c.grid.accuracy_target},
                {"max_rounds", c.grid.max_rounds},
                {"thresholds", th}};
}

TrialConfig trial_config_from_json(const json& j) {
    try {
        TrialConfig c;
        if (j.contains("spec")) c.spec = spec_from_json(j.at("spec"));
        c.graph_seed = j.value("graph_seed", c.graph_seed);
        c.widths = j.value("widths", c.widths);
        c.depths = j.value("depths", c.depths);
        c.seeds = j.value("seeds", c.seeds);
        c.t_m = j.value("t_m", c.t_m);
        c.delta_m = j.value("delta_m", c.delta_m);
        c.lr = j.value("lr", c.lr);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.l2 = j.value("l2", c.l2);
        c.sigma = j.value("sigma", c.sigma);
        c.grid.p_u_values = j.value("p_u_values", c.grid.p_u_values);
        c.grid.p_e_values = j.value("p_e_values", c.grid.p_e_values);
        c.grid.accuracy_target = j.value("accuracy_target", c.grid.accuracy_target);
        c.grid.max_rounds = j.value("max_rounds", c.grid.max_rounds);
        if (j.contains("thresholds")) {
            for (const auto& t : j.at("thresholds")) {
                c.thresholds.push_back(
                    {t.at("flag").get<std::string>(), t.value("min_rate", 0.75), t.value("deep_only", true)});
            }
        }
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed trial config: ") + e.what());
    }
}

TrialOutput run_trial(const TrialConfig& cfg, const FunctionGraph& graph, std::size_t width, std::size_t depth,
                      std::uint64_t seed) {
    const auto table = truth_table(graph);
    MlpConfig mc;
    mc.layer_widths.push_back(table.n_inputs);
    for (std::size_t d = 0; d < depth; ++d) mc.layer_widths.push_back(width);
    mc.layer_widths.push_back(table.n_outputs);
    mc.seed = derive_key(seed, width, depth);
    mc.lr = cfg.lr;
    mc.batch_size = cfg.batch_size;
    mc.epochs = cfg.epochs;
    mc.l2 = cfg.l2;
    mc.accuracy_threshold = cfg.grid.accuracy_target;
    const NoiseConfig noise{cfg.sigma, derive_key(seed, 0x6E6F6973ULL, width * 16 + depth)};

    TrialOutput out;
    auto& r = out.result;
    r.width = width;
    r.depth = depth;
    r.seed = seed;
    out.truth = signature(graph, cfg.spec, depth);
    out.dense = init(mc);
    try {
        r.dense_accuracy = train(out.dense, table, noise, mc).accuracy.back();
    } catch (const DivergenceError& e) {
        r.failure = "diverged";
        return out;
    }
    auto grid = grid_search(out.dense, table, noise, mc, cfg.grid);
    if (!grid.success) {
        r.failure = grid.failure;
        r.final_accuracy = r.dense_accuracy;
        return out;
    }
    r.completed = true;
    out.sparse = std::move(grid.best);
    r.final_accuracy = bitwise_accuracy(out.sparse, validation_view(table));
    r.final_density = out.sparse.edge_density();
    r.alive_units = out.sparse.alive_hidden_count();
    r.p_u = grid.p_u;
    r.p_e = grid.p_e;
    out.found = detect(out.sparse, cfg.t_m, cfg.delta_m);
    r.modules = out.found.modules.size();
    r.flags = compare(out.found, out.truth);
    return out;
}

bool TrialReport::passed() const {
    return std::all_of(thresholds.begin(), thresholds.end(), [](const auto& t) { return t.passed; });
}

CsvTable TrialReport::csv() const {
    CsvTable t({"width", "depth", "seed", "completed", "failure", "dense_accuracy", "final_accuracy", "final_density",
                "alive_units", "modules", "p_u", "p_e", "input_modules", "output_modules", "middle_separation",
                "exact_structure"});
    auto b = [](bool v) { return std::string(v ? "1" : "0"); };
    for (const auto& r : trials) {
        t.add({std::to_string(r.width), std::to_string(r.depth), std::to_string(r.seed), b(r.completed), r.failure,
               format_double(r.dense_accuracy), format_double(r.final_accuracy), format_double(r.final_density),
               std::to_string(r.alive_units), std::to_string(r.modules), format_double(r.p_u), format_double(r.p_e),
               b(r.flags.input_modules), b(r.flags.output_modules), b(r.flags.middle_separation),
               b(r.flags.exact_structure)});
    }
    return t;
}

json TrialReport::aggregate_json() const {
    json rates_j = json::array();
    for (const auto& r : rates) {
        rates_j.push_back({{"depth", r.depth}, {"flag", r.flag}, {"successes", r.successes}, {"trials", r.trials},
                           {"rate", r.rate()}});
    }
    json th = json::array();
    for (const auto& t : thresholds) {
        th.push_back({{"flag", t.threshold.flag},
                      {"min_rate", t.threshold.min_rate},
                      {"deep_only", t.threshold.deep_only},
                      {"rate", t.rate},
                      {"eligible", t.eligible},
                      {"passed", t.passed}});
    }
    std::size_t completed = 0;
    for (const auto& r : trials) completed += r.completed;
    return json{{"trials", trials.size()}, {"completed", completed}, {"rates", rates_j}, {"thresholds", th},
                {"passed", passed()}};
}

TrialReport aggregate(const TrialConfig& cfg, std::vector<TrialResult> trials) {
    TrialReport rep;
    rep.trials = std::move(trials);
    for (auto d : cfg.depths) {
        for (const auto& f : flag_names()) {
            RateRow row{d, f, 0, 0};
            for (const auto& t : rep.trials) {
                if (t.depth != d) continue;
                ++row.trials;
                row.successes += t.completed && flag_value(t.flags, f);
            }
            rep.rates.push_back(row);
        }
    }
    const std::size_t levels = cfg.spec.gate_levels();
    for (const auto& th : cfg.thresholds) {
        ThresholdOutcome o;
        o.threshold = th;
        std::size_t ok = 0;
        for (const auto& t : rep.trials) {
            if (th.deep_only && t.depth < levels) continue;
            ++o.eligible;
            ok += t.completed && flag_value(t.flags, th.flag);
        }
        o.rate = o.eligible == 0 ? 0.0 : static_cast<double>(ok) / static_cast<double>(o.eligible);
        o.passed = o.eligible > 0 && o.rate >= th.min_rate;
        rep.thresholds.push_back(o);
    }
    return rep;
}

namespace {

struct Cell {
    std::size_t width, depth;
    std::uint64_t seed;
};

std::vector<Cell> cells_of(const TrialConfig& cfg) {
    std::vector<Cell> cells;
    for (auto w : cfg.widths) {
        for (auto d : cfg.depths) {
            for (auto s : cfg.seeds) cells.push_back({w, d, s});
        }
    }
    return cells;
}

}  // namespace

TrialReport run_grid_serial(const TrialConfig& cfg) {
    cfg.validate();
    const auto graph = generate(cfg.spec, cfg.graph_seed);
    std::vector<TrialResult> results;
    for (const auto& c : cells_of(cfg)) results.push_back(run_trial(cfg, graph, c.width, c.depth, c.seed).result);
    return aggregate(cfg, std::move(results));
}

TrialReport run_grid(const TrialConfig& cfg, int threads) {
    if (threads <= 1) return run_grid_serial(cfg);
    cfg.validate();
    const auto graph = generate(cfg.spec, cfg.graph_seed);
    const auto cells = cells_of(cfg);
    std::vector<TrialResult> results(cells.size());
    std::vector<std::string> errors(cells.size());
    const auto n = static_cast<std::ptrdiff_t>(cells.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& c = cells[static_cast<std::size_t>(i)];
        try {
            results[static_cast<std::size_t>(i)] = run_trial(cfg, graph, c.width, c.depth, c.seed).result;
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw Error(e);
    }
    return aggregate(cfg, std::move(results));
}

}  // namespace nsculpt

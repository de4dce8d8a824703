#include "nsculpt/pruning.hpp"

#include "nsculpt/error.hpp"

#include <algorithm>
#include <cmath>

namespace nsculpt {

void PruneConfig::validate() const {
    if (!(p_u > 0.0 && p_u <= 100.0)) throw ValidationError("p_u must lie in (0, 100]");
    if (!(p_e > 0.0 && p_e <= 100.0)) throw ValidationError("p_e must lie in (0, 100]");
    if (!(accuracy_target >= 0.0 && accuracy_target <= 1.0)) throw ValidationError("accuracy target must lie in [0, 1]");
}

std::string to_string(PruneKind k) { return k == PruneKind::Unit ? "unit" : "edge"; }

CsvTable PruneTrace::csv() const {
    CsvTable t({"round", "kind", "p", "accuracy", "accepted", "density", "alive_units"});
    for (const auto& r : rounds) {
        t.add({std::to_string(r.round), to_string(r.kind), format_double(r.p_attempted), format_double(r.accuracy),
               r.accepted ? "1" : "0", format_double(r.density_after), std::to_string(r.alive_units_after)});
    }
    return t;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ArityError("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double rank = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

namespace {

double retrain(MaskedMlp& mlp, const TruthTable& table, const NoiseConfig& noise, const MlpConfig& cfg) {
    if (cfg.epochs == 0) return bitwise_accuracy(mlp, validation_view(table));
    try {
        return train(mlp, table, noise, cfg).accuracy.back();
    } catch (const DivergenceError&) {
        return -1.0;
    }
}

// Applies one cumulative-p prune to `cand`; returns the number of newly
// removed elements.
using PruneStep = std::size_t (*)(MaskedMlp& cand, const DataView& val, double p, const PruneConfig& cfg);

std::size_t unit_step(MaskedMlp& cand, const DataView& val, double p, const PruneConfig& cfg) {
    const auto scores = loss_sensitivity_scores(cand, val, cfg.aggregation);
    std::vector<double> flat;
    for (const auto& s : scores) flat.insert(flat.end(), s.begin(), s.end());
    const double thr = percentile(flat, p);
    std::size_t removed = 0;
    for (std::size_t h = 0; h < scores.size(); ++h) {
        for (std::size_t u = 0; u < scores[h].size(); ++u) {
            if (cand.unit_alive[h][u] && scores[h][u] <= thr) {
                cand.kill_unit(h + 1, u);
                ++removed;
            }
        }
    }
    return removed;
}

std::size_t edge_step(MaskedMlp& cand, const DataView&, double p, const PruneConfig&) {
    std::vector<double> flat;
    flat.reserve(cand.weight_count());
    for (const auto& L : cand.layers) {
        for (std::size_t k = 0; k < L.weight.size(); ++k) flat.push_back(L.mask[k] ? std::abs(L.weight[k]) : 0.0);
    }
    const double thr = percentile(flat, p);
    std::size_t removed = 0;
    for (std::size_t l = 0; l < cand.depth(); ++l) {
        auto& L = cand.layers[l];
        for (std::size_t j = 0; j < L.fan_out; ++j) {
            for (std::size_t i = 0; i < L.fan_in; ++i) {
                if (L.live(j, i) && std::abs(L.w(j, i)) <= thr) {
                    cand.mask_edge(l, j, i);
                    ++removed;
                }
            }
        }
    }
    return removed;
}

PruneResult finish(PruneResult& res) {
    remove_dead_ends(res.mlp);
    return std::move(res);
}

PruneResult run_phase(const MaskedMlp& mlp, const TruthTable& table, const NoiseConfig& noise,
                      const MlpConfig& train_cfg, const PruneConfig& cfg, PruneKind kind) {
    cfg.validate();
    const auto val = validation_view(table);
    if (bitwise_accuracy(mlp, val) < cfg.accuracy_target) {
        throw PreconditionError("network is below the accuracy target before pruning");
    }
    const bool units = kind == PruneKind::Unit;
    const double total = static_cast<double>(units ? mlp.hidden_unit_count() : mlp.weight_count());
    PruneResult res{mlp, {}};
    if (total == 0) return res;
    const double removed_already =
        static_cast<double>(units ? mlp.hidden_unit_count() - mlp.alive_hidden_count()
                                  : mlp.weight_count() - mlp.unmasked_count());
    const double p_min = 100.0 / total;
    double step = units ? cfg.p_u : cfg.p_e;
    // Cumulative p starts at the fraction already removed, so an edge phase
    // after unit pruning does not spend rounds re-pruning masked edges.
    double p = 100.0 * removed_already / total;
    const PruneStep apply = units ? unit_step : edge_step;

    // A step below p_min is never started, but a halved step is tried once
    // before the failed step's size ends the phase.
    if (step < p_min) return finish(res);
    for (std::size_t round = 0; round < cfg.max_rounds && p < 100.0; ++round) {
        const double p_try = std::min(100.0, p + step);
        MaskedMlp cand = res.mlp;
        const std::size_t removed = apply(cand, val, p_try, cfg);
        double acc;
        if (removed == 0) {
            acc = bitwise_accuracy(cand, val);
        } else {
            acc = retrain(cand, table, noise, train_cfg);
        }
        PruneRound r;
        r.round = round;
        r.kind = kind;
        r.p_attempted = p_try;
        r.accuracy = acc;
        r.accepted = acc >= cfg.accuracy_target;
        if (r.accepted) {
            res.mlp = std::move(cand);
            p = p_try;
        } else {
            // Rewind; later retries still draw fresh noise.
            res.mlp.epochs_seen = cand.epochs_seen;
        }
        r.density_after = res.mlp.edge_density();
        r.alive_units_after = res.mlp.alive_hidden_count();
        res.trace.rounds.push_back(r);
        if (!r.accepted) {
            if (step < p_min) break;
            step /= 2.0;
        }
    }
    return finish(res);
}

}  // namespace

PruneResult prune_units(const MaskedMlp& mlp, const TruthTable& table, const NoiseConfig& noise,
                        const MlpConfig& train_cfg, const PruneConfig& cfg) {
    return run_phase(mlp, table, noise, train_cfg, cfg, PruneKind::Unit);
}

PruneResult prune_edges(const MaskedMlp& mlp, const TruthTable& table, const NoiseConfig& noise,
                        const MlpConfig& train_cfg, const PruneConfig& cfg) {
    return run_phase(mlp, table, noise, train_cfg, cfg, PruneKind::Edge);
}

PruneResult sculpt(const MaskedMlp& mlp, const TruthTable& table, const NoiseConfig& noise,
                   const MlpConfig& train_cfg, const PruneConfig& cfg) {
    auto u = prune_units(mlp, table, noise, train_cfg, cfg);
    auto e = prune_edges(u.mlp, table, noise, train_cfg, cfg);
    for (auto& r : e.trace.rounds) r.round += u.trace.rounds.size();
    u.trace.rounds.insert(u.trace.rounds.end(), e.trace.rounds.begin(), e.trace.rounds.end());
    return {std::move(e.mlp), std::move(u.trace)};
}

GridConfig GridConfig::defaults() {
    GridConfig g;
    for (int p = 5; p <= 70; p += 5) g.p_u_values.push_back(p);
    g.p_e_values = {0.5, 1.0, 1.5, 2.0, 2.5};
    return g;
}

GridResult grid_search(const MaskedMlp& dense, const TruthTable& table, const NoiseConfig& noise,
                       const MlpConfig& train_cfg, const GridConfig& grid) {
    if (grid.p_u_values.empty() || grid.p_e_values.empty()) throw ValidationError("pruning grids must be nonempty");
    GridResult out;
    if (bitwise_accuracy(dense, validation_view(table)) < grid.accuracy_target) {
        out.failure = "dense_below_target";
        out.best = dense;
        return out;
    }
    auto better = [](const MaskedMlp& a, const MaskedMlp& b) {
        const auto ua = a.unmasked_count(), ub = b.unmasked_count();
        if (ua != ub) return ua < ub;  // same original count, so density order
        return a.alive_hidden_count() < b.alive_hidden_count();
    };
    for (double p_u : grid.p_u_values) {
        PruneConfig cfg;
        cfg.p_u = p_u;
        cfg.p_e = grid.p_e_values.front();
        cfg.accuracy_target = grid.accuracy_target;
        cfg.max_rounds = grid.max_rounds;
        cfg.aggregation = grid.aggregation;
        const auto units = prune_units(dense, table, noise, train_cfg, cfg);
        for (double p_e : grid.p_e_values) {
            cfg.p_e = p_e;
            auto edges = prune_edges(units.mlp, table, noise, train_cfg, cfg);
            ++out.cells;
            if (out.success && !better(edges.mlp, out.best)) continue;
            out.success = true;
            out.best = std::move(edges.mlp);
            out.trace = units.trace;
            for (auto r : edges.trace.rounds) {
                r.round += units.trace.rounds.size();
                out.trace.rounds.push_back(r);
            }
            out.p_u = p_u;
            out.p_e = p_e;
        }
    }
    return out;
}

}  // namespace nsculpt

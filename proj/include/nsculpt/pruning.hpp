#pragma once

// Iterative pruning with retraining: unit pruning by loss sensitivity, edge
// pruning by weight magnitude, each with a rewind-and-halve step schedule,
// and a grid search over step sizes that keeps the sparsest network.

#include "nsculpt/csv.hpp"
#include "nsculpt/dataset.hpp"
#include "nsculpt/mlp.hpp"
#include "nsculpt/truth_table.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nsculpt {

struct PruneConfig {
    double p_u = 10.0;  // unit step, percent of the original hidden-unit count
    double p_e = 1.0;   // edge step, percent of the original edge count
    double accuracy_target = 1.0;
    std::size_t max_rounds = 200;  // per phase
    SensitivityAggregation aggregation = SensitivityAggregation::MeanThenAbs;

    void validate() const;
};

enum class PruneKind { Unit, Edge };
std::string to_string(PruneKind k);

struct PruneRound {
    std::size_t round = 0;
    PruneKind kind = PruneKind::Unit;
    double p_attempted = 0.0;  // cumulative percent tried this round
    double accuracy = 0.0;     // validation accuracy after retraining
    bool accepted = false;
    double density_after = 0.0;  // edge density of the kept network
    std::size_t alive_units_after = 0;

    bool operator==(const PruneRound&) const = default;
};

struct PruneTrace {
    std::vector<PruneRound> rounds;

    CsvTable csv() const;  // round,kind,p,accuracy,accepted,density,alive_units
    bool operator==(const PruneTrace&) const = default;
};

struct PruneResult {
    MaskedMlp mlp;
    PruneTrace trace;
};

// Linear-interpolation percentile (numpy's default) of `values`.
double percentile(std::vector<double> values, double p);

// Unit pruning. Scores of dead units count as 0 so the percentile is taken
// over the original unit count; alive units scoring <= threshold are removed.
// Throws PreconditionError if `mlp` is below the accuracy target.
PruneResult prune_units(const MaskedMlp& mlp, const TruthTable& table, const NoiseConfig& noise,
                        const MlpConfig& train_cfg, const PruneConfig& cfg);

// Edge pruning by |w| over the original edge count (masked edges score 0).
PruneResult prune_edges(const MaskedMlp& mlp, const TruthTable& table, const NoiseConfig& noise,
                        const MlpConfig& train_cfg, const PruneConfig& cfg);

// Unit pruning followed by edge pruning.
PruneResult sculpt(const MaskedMlp& mlp, const TruthTable& table, const NoiseConfig& noise,
                   const MlpConfig& train_cfg, const PruneConfig& cfg);

struct GridConfig {
    std::vector<double> p_u_values;  // default 5, 10, ..., 70
    std::vector<double> p_e_values;  // default 0.5, 1.0, ..., 2.5
    double accuracy_target = 1.0;
    std::size_t max_rounds = 200;
    SensitivityAggregation aggregation = SensitivityAggregation::MeanThenAbs;

    static GridConfig defaults();
    bool operator==(const GridConfig&) const = default;
};

struct GridResult {
    bool success = false;
    std::string failure;  // reason tag when !success
    MaskedMlp best;
    PruneTrace trace;
    double p_u = 0.0;
    double p_e = 0.0;
    std::size_t cells = 0;  // (p_u, p_e) combinations evaluated
};

// Runs sculpt over the grid (the unit phase is shared by all p_e values of
// one p_u) and keeps the network with the lowest edge density; ties go to
// fewer alive units, then to the earlier grid cell.
GridResult grid_search(const MaskedMlp& dense, const TruthTable& table, const NoiseConfig& noise,
                       const MlpConfig& train_cfg, const GridConfig& grid);

}  // namespace nsculpt

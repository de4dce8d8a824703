#pragma once

// Scoring detected module hierarchies against ground truth, and the trial
// grid runner (train dense, prune, detect, compare) with a serial reference
// path and an OpenMP path that must agree exactly.

#include "nsculpt/boolean_graph.hpp"
#include "nsculpt/csv.hpp"
#include "nsculpt/module_detection.hpp"
#include "nsculpt/pruning.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace nsculpt {

struct SuccessFlags {
    bool input_modules = false;
    bool output_modules = false;
    bool middle_separation = false;
    bool exact_structure = false;

    bool operator==(const SuccessFlags&) const = default;
};

inline const std::vector<std::string>& flag_names() {
    static const std::vector<std::string> names{"input_modules", "output_modules", "middle_separation",
                                                "exact_structure"};
    return names;
}
bool flag_value(const SuccessFlags& f, const std::string& name);

// Throws ComparisonError when the two hierarchies cover different input or
// output index sets.
SuccessFlags compare(const ModuleHierarchy& found, const HierarchySignature& truth);

struct Threshold {
    std::string flag;        // one of flag_names()
    double min_rate = 0.75;  // over eligible trials
    bool deep_only = true;   // eligible = hidden layers >= graph gate levels

    bool operator==(const Threshold&) const = default;
};

struct TrialConfig {
    ModularitySpec spec = ModularitySpec::separable();
    std::uint64_t graph_seed = 0;
    std::vector<std::size_t> widths{24, 36, 48};
    std::vector<std::size_t> depths{1, 2, 3};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3};
    double t_m = kDefaultModularityThreshold;
    double delta_m = kDefaultMergeThreshold;
    double lr = 0.05;
    std::size_t batch_size = 16;
    std::size_t epochs = 120;
    double l2 = 1e-4;
    double sigma = 0.1;
    GridConfig grid = GridConfig::defaults();
    std::vector<Threshold> thresholds;

    void validate() const;
    std::size_t trial_count() const noexcept { return widths.size() * depths.size() * seeds.size(); }
    bool operator==(const TrialConfig&) const = default;
};

nlohmann::json to_json(const TrialConfig& c);
TrialConfig trial_config_from_json(const nlohmann::json& j);

struct TrialResult {
    std::size_t width = 0;
    std::size_t depth = 0;  // hidden layers
    std::uint64_t seed = 0;
    bool completed = false;  // false when the dense net missed the target
    std::string failure;     // reason tag
    double dense_accuracy = 0.0;
    double final_accuracy = 0.0;
    double final_density = 1.0;
    std::size_t alive_units = 0;
    std::size_t modules = 0;
    double p_u = 0.0;
    double p_e = 0.0;
    SuccessFlags flags;

    bool operator==(const TrialResult&) const = default;
};

struct TrialOutput {
    TrialResult result;
    MaskedMlp dense;
    MaskedMlp sparse;
    ModuleHierarchy found;
    HierarchySignature truth;
};

// One (width, depth, seed) trial on `graph`.
TrialOutput run_trial(const TrialConfig& cfg, const FunctionGraph& graph, std::size_t width, std::size_t depth,
                      std::uint64_t seed);

struct RateRow {
    std::size_t depth = 0;
    std::string flag;
    std::size_t successes = 0;
    std::size_t trials = 0;
    double rate() const { return trials == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(trials); }

    bool operator==(const RateRow&) const = default;
};

struct ThresholdOutcome {
    Threshold threshold;
    double rate = 0.0;
    std::size_t eligible = 0;
    bool passed = false;

    bool operator==(const ThresholdOutcome&) const = default;
};

struct TrialReport {
    std::vector<TrialResult> trials;  // widths x depths x seeds, row-major
    std::vector<RateRow> rates;       // per depth, per flag
    std::vector<ThresholdOutcome> thresholds;

    bool passed() const;
    CsvTable csv() const;
    nlohmann::json aggregate_json() const;
    bool operator==(const TrialReport&) const = default;
};

// Aggregates completed trial results (single-threaded fold).
TrialReport aggregate(const TrialConfig& cfg, std::vector<TrialResult> trials);

// Serial reference runner.
TrialReport run_grid_serial(const TrialConfig& cfg);
// Trial-parallel runner; threads <= 1 falls back to the serial path.
TrialReport run_grid(const TrialConfig& cfg, int threads = 1);

}  // namespace nsculpt

#pragma once

// Module detection on sparse networks. Each unit is described by the set of
// later units it reaches; units of one layer are grouped by average-linkage
// clustering on cosine distance, the number of clusters is picked with a
// modularity metric plus binomial separability tests, and clusters of
// adjacent layers are merged into modules when most of their edges connect.

#include "nsculpt/matrix.hpp"
#include "nsculpt/mlp.hpp"

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace nsculpt {

struct UnitRef {
    std::size_t layer = 0;  // width-layer (0 = inputs, depth() = outputs)
    std::size_t unit = 0;

    auto operator<=>(const UnitRef&) const = default;
};

struct FeatureMatrix {
    std::size_t layer = 0;
    std::vector<std::size_t> units;               // alive units of `layer`, ascending
    std::vector<UnitRef> columns;                 // alive units of later layers, layer-major
    std::vector<std::vector<std::uint8_t>> rows;  // rows[k][c] = 1 iff units[k] reaches columns[c]

    std::size_t g() const noexcept { return columns.size(); }
};

// Transitive closure over unmasked edges between alive units.
FeatureMatrix reachability_features(const MaskedMlp& mlp, std::size_t layer);

// 1 - cosine similarity; 0 when both vectors are zero, 1 when exactly one is.
double cosine_distance(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);
Matrix cosine_distances(const std::vector<std::vector<std::uint8_t>>& rows);

struct Dendrogram {
    std::size_t n = 0;
    // Merge t joins clusters `a` and `b` (ids < n are leaves, n + t is the
    // cluster formed by merge t) at average-linkage distance `height`.
    struct Merge {
        std::size_t a = 0, b = 0;
        double height = 0.0;
    };
    std::vector<Merge> merges;

    // Labels for the k-cluster cut, numbered by smallest member index.
    std::vector<std::size_t> cut(std::size_t k) const;
    std::vector<std::size_t> members(std::size_t cluster) const;
};

// Average linkage over the given distance matrix. Equal distances are
// resolved toward the pair whose smallest members are smallest.
Dendrogram agglomerative(const Matrix& distances);

// sum_i (A_ii - (sum_j A_ij)^2) on the distance matrix with zeroed diagonal
// normalized to unit sum; 0 when all distances are 0.
double modularity_metric(const Matrix& distances, const std::vector<std::size_t>& labels);

struct SeparabilityOutcome {
    std::size_t o_i = 0, o_j = 0, o_ij = 0, g = 0;
    double expected = 0.0;
    double z = 0.0;  // (expected - o_ij) / sd; positive favours separability
    bool separable = false;
};

SeparabilityOutcome separability(const std::vector<std::uint8_t>& f_i, const std::vector<std::uint8_t>& f_j);

struct ChooseKResult {
    std::size_t k = 1;
    std::vector<std::size_t> labels;
    std::vector<double> metric;  // metric[k] for scanned k (others NaN)
    std::size_t argmin = 0;      // 0 when no scan ran
    bool tests_run = false;
    bool test1_positive = false;  // the pair joined at the N-1 cut is separable
    bool test2_positive = false;  // the two groups of the 2-cut are not separable
    double z_sep = 0.0;
    double z_sin = 0.0;
};

// Picks the cluster count for one layer from its (nonzero) feature rows.
ChooseKResult choose_k(const std::vector<std::vector<std::uint8_t>>& rows, double t_m);

struct LayerClusters {
    std::size_t layer = 0;
    std::vector<std::size_t> units;   // clustered units (nonzero features)
    std::vector<std::size_t> labels;  // cluster label per clustered unit
    std::size_t k = 0;
};

struct FoundModule {
    std::size_t id = 0;
    std::size_t level = 0;  // smallest layer among members
    std::vector<UnitRef> units;
    std::set<std::size_t> inputs;
    std::set<std::size_t> outputs;

    bool operator==(const FoundModule&) const = default;
};

struct ModuleHierarchy {
    std::size_t depth = 0;  // weight layers of the source network
    std::vector<FoundModule> modules;
    std::vector<std::pair<std::size_t, std::size_t>> uses;
    std::vector<LayerClusters> clusters;

    // Module id of a unit, or npos when the unit is not covered.
    std::size_t module_of(UnitRef u) const;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

inline constexpr double kDefaultModularityThreshold = -0.2;
inline constexpr double kDefaultMergeThreshold = 0.9;

// Merges adjacent-layer clusters into modules, attaches outputs and units
// without features, and condenses any cyclic uses into single modules.
ModuleHierarchy merge_layers(const std::vector<LayerClusters>& clusters, const MaskedMlp& mlp, double delta_m);

ModuleHierarchy detect(const MaskedMlp& mlp, double t_m = kDefaultModularityThreshold,
                       double delta_m = kDefaultMergeThreshold);

// {"depth", "modules":[{"id","level","units":[[layer,unit]],"inputs","outputs"}], "uses":[[src,dst]]}
nlohmann::json to_json(const ModuleHierarchy& h);
ModuleHierarchy hierarchy_from_json(const nlohmann::json& j);

}  // namespace nsculpt

#pragma once

// Boolean function graphs: DAGs of inputs, AND/OR/ID gates and outputs with
// transfer or negation edges, plus generators for the modular task families
// and the ground-truth module hierarchy of each generated graph.

#include "nsculpt/truth_table.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace nsculpt {

enum class NodeKind { Input, Gate, Output };
enum class GateKind { And, Or, Id };

struct Node {
    std::size_t id = 0;
    NodeKind kind = NodeKind::Input;
    GateKind gate = GateKind::Id;  // ignored for inputs

    bool operator==(const Node&) const = default;
};

struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    bool negate = false;

    bool operator==(const Edge&) const = default;
};

enum class Family { Separable, Reused, SeparableReused, Dense, Overlap, Hierarchy };

std::string to_string(Family f);
Family family_from_string(const std::string& name);

// Description of a modular task. The named constructors reproduce the task
// families; `levels`, `input_partition` and `reuse_counts` are derived from
// the family parameters and kept for serialization and reporting.
struct ModularitySpec {
    Family family = Family::Separable;
    std::size_t n_inputs = 0;
    std::vector<std::size_t> levels;                       // sub-functions per hierarchical level
    std::size_t n_outputs = 0;
    std::vector<std::vector<std::size_t>> input_partition; // inputs read by each first-level sub-function
    std::vector<std::size_t> reuse_counts;                 // outputs fed by each output sub-function
    std::size_t reuse = 1;                                 // family parameter
    std::size_t overlap = 0;                               // family parameter (Overlap only)

    static ModularitySpec separable();
    static ModularitySpec reused(std::size_t reuse = 8);
    static ModularitySpec separable_reused();
    static ModularitySpec dense();
    static ModularitySpec input_overlap(std::size_t overlap, std::size_t reuse = 4);
    static ModularitySpec hierarchy(std::size_t reuse = 4);

    // Rebuilds a spec from family parameters (used by the JSON reader).
    static ModularitySpec make(Family family, std::size_t reuse, std::size_t overlap);

    // Number of hierarchical levels of internal (non-output) gates.
    std::size_t gate_levels() const noexcept { return levels.size(); }

    void validate() const;  // throws ValidationError

    bool operator==(const ModularitySpec&) const = default;
};

class FunctionGraph {
public:
    FunctionGraph() = default;
    // Validates invariants; throws ValidationError.
    FunctionGraph(std::size_t n_inputs, std::size_t n_outputs, std::vector<Node> nodes,
                  std::vector<Edge> edges, std::optional<ModularitySpec> spec = std::nullopt);

    std::size_t n_inputs() const noexcept { return n_inputs_; }
    std::size_t n_outputs() const noexcept { return n_outputs_; }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const std::optional<ModularitySpec>& spec() const noexcept { return spec_; }

    // Longest-path depth from the inputs (inputs are level 0).
    std::size_t level_of(std::size_t node) const { return level_.at(node); }
    std::vector<std::size_t> output_nodes() const;
    std::vector<std::size_t> input_nodes() const;

    bool operator==(const FunctionGraph& o) const {
        return n_inputs_ == o.n_inputs_ && n_outputs_ == o.n_outputs_ && nodes_ == o.nodes_ &&
               edges_ == o.edges_ && spec_ == o.spec_;
    }

private:
    friend std::vector<std::uint8_t> evaluate(const FunctionGraph&, std::span<const std::uint8_t>);

    std::size_t n_inputs_ = 0;
    std::size_t n_outputs_ = 0;
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::optional<ModularitySpec> spec_;
    std::vector<std::size_t> topo_;
    std::vector<std::vector<std::size_t>> in_edges_;  // edge indices per node
    std::vector<std::size_t> level_;
};

// Evaluates the graph on one input assignment (bits in declared input order).
std::vector<std::uint8_t> evaluate(const FunctionGraph& graph, std::span<const std::uint8_t> input);

inline constexpr std::size_t kMaxTableInputs = 16;

TruthTable truth_table(const FunctionGraph& graph);

// Generates a graph with the spec's topology; gate kinds and negations are
// drawn from `seed` and re-drawn until every output depends on each of its
// designated inputs and all internal gate columns are distinct.
FunctionGraph generate(const ModularitySpec& spec, std::uint64_t seed);

// Ground-truth module DAG.
struct SignatureModule {
    std::size_t id = 0;
    std::size_t level = 0;
    std::set<std::size_t> inputs;   // owned input indices
    std::set<std::size_t> outputs;  // owned output indices

    bool operator==(const SignatureModule&) const = default;
};

struct HierarchySignature {
    std::vector<SignatureModule> modules;
    std::vector<std::pair<std::size_t, std::size_t>> uses;  // (src module, dst module)

    bool operator==(const HierarchySignature&) const = default;
};

// Signature for a network with enough hidden layers to mirror the graph.
HierarchySignature signature(const FunctionGraph& graph, const ModularitySpec& spec);
// Signature expected from a network with `hidden_layers` hidden layers; when
// the network is shallower than the graph's gate levels, the deeper
// sub-functions collapse into one module.
HierarchySignature signature(const FunctionGraph& graph, const ModularitySpec& spec,
                             std::size_t hidden_layers);

// JSON graph format: {"n_inputs","n_outputs","nodes":[{"id","kind","gate"}],
// "edges":[{"src","dst","negate"}],"spec":{...}}.
nlohmann::json to_json(const FunctionGraph& graph);
FunctionGraph graph_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModularitySpec& spec);
ModularitySpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HierarchySignature& sig);

}  // namespace nsculpt

#include "nsculpt/boolean_graph.hpp"

#include "nsculpt/error.hpp"
#include "nsculpt/rng.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <queue>

namespace nsculpt {

using nlohmann::json;

std::string to_string(Family f) {
    switch (f) {
        case Family::Separable: return "separable";
        case Family::Reused: return "reused";
        case Family::SeparableReused: return "separable_reused";
        case Family::Dense: return "dense";
        case Family::Overlap: return "overlap";
        case Family::Hierarchy: return "hierarchy";
    }
    return "unknown";
}

Family family_from_string(const std::string& name) {
    for (Family f : {Family::Separable, Family::Reused, Family::SeparableReused, Family::Dense,
                     Family::Overlap, Family::Hierarchy}) {
        if (to_string(f) == name) return f;
    }
    throw ValidationError("unknown graph family '" + name + "'");
}

namespace {

// One sub-function of a family topology: `gates` gate nodes, each reading
// every node of every source (inputs and/or gates of earlier sub-functions).
struct SubFunction {
    std::size_t level = 1;
    std::size_t gates = 1;
    std::vector<std::size_t> inputs;
    std::vector<std::size_t> sources;  // earlier sub-function indices
    std::size_t outputs = 0;
};

struct Blueprint {
    std::size_t n_inputs = 0;
    std::vector<SubFunction> sfs;
};

std::vector<std::size_t> iota_vec(std::size_t first, std::size_t count) {
    std::vector<std::size_t> v(count);
    std::iota(v.begin(), v.end(), first);
    return v;
}

Blueprint blueprint(const ModularitySpec& s) {
    Blueprint bp;
    bp.n_inputs = s.n_inputs;
    switch (s.family) {
        case Family::Separable:
            bp.sfs = {{1, 2, {0, 1}, {}, 2}, {1, 2, {2, 3}, {}, 2}};
            break;
        case Family::Reused:
            bp.sfs = {{1, 3, {0, 1, 2, 3}, {}, 0}, {2, 1, {}, {0}, s.reuse}, {2, 1, {}, {0}, s.reuse}};
            break;
        case Family::SeparableReused:
            bp.sfs = {{1, 1, {0, 1}, {}, 2}, {1, 1, {2, 3}, {}, 2}, {1, 1, {4, 5}, {}, 2}};
            break;
        case Family::Dense:
            bp.sfs = {{1, 4, {0, 1, 2, 3}, {}, 4}};
            break;
        case Family::Overlap: {
            const std::size_t own = 4 - s.overlap;
            auto a = iota_vec(0, own + s.overlap);
            auto b = iota_vec(own, s.overlap);
            for (std::size_t i = 0; i < own; ++i) b.push_back(own + s.overlap + i);
            bp.sfs = {{1, 2, a, {}, s.reuse}, {1, 2, b, {}, s.reuse}};
            break;
        }
        case Family::Hierarchy:
            bp.sfs = {{1, 2, {0, 1}, {}, 0},
                      {1, 2, {2, 3}, {}, 0},
                      {2, 2, {}, {0, 1}, 0},
                      {3, 1, {}, {2}, s.reuse},
                      {3, 1, {}, {2}, s.reuse}};
            break;
    }
    return bp;
}

ModularitySpec describe(Family family, std::size_t reuse, std::size_t overlap) {
    ModularitySpec s;
    s.family = family;
    s.reuse = reuse;
    s.overlap = overlap;
    switch (family) {
        case Family::Separable: s.n_inputs = 4; break;
        case Family::Reused: s.n_inputs = 4; break;
        case Family::SeparableReused: s.n_inputs = 6; break;
        case Family::Dense: s.n_inputs = 4; break;
        case Family::Overlap: s.n_inputs = 8 - overlap; break;
        case Family::Hierarchy: s.n_inputs = 4; break;
    }
    if (family == Family::Overlap && overlap > 4) throw ValidationError("input overlap must be in [0, 4]");
    if ((family == Family::Reused || family == Family::Overlap || family == Family::Hierarchy) &&
        (reuse < 1 || reuse > 8)) {
        throw ValidationError("reuse count must be in [1, 8]");
    }
    const Blueprint bp = blueprint(s);
    std::size_t max_level = 0;
    for (const auto& sf : bp.sfs) max_level = std::max(max_level, sf.level);
    s.levels.assign(max_level, 0);
    for (const auto& sf : bp.sfs) {
        ++s.levels[sf.level - 1];
        if (sf.level == 1) s.input_partition.push_back(sf.inputs);
        if (sf.outputs > 0) {
            s.reuse_counts.push_back(sf.outputs);
            s.n_outputs += sf.outputs;
        }
    }
    return s;
}

}  // namespace

ModularitySpec ModularitySpec::separable() { return describe(Family::Separable, 2, 0); }
ModularitySpec ModularitySpec::reused(std::size_t reuse) { return describe(Family::Reused, reuse, 0); }
ModularitySpec ModularitySpec::separable_reused() { return describe(Family::SeparableReused, 2, 0); }
ModularitySpec ModularitySpec::dense() { return describe(Family::Dense, 4, 0); }
ModularitySpec ModularitySpec::input_overlap(std::size_t overlap, std::size_t reuse) {
    return describe(Family::Overlap, reuse, overlap);
}
ModularitySpec ModularitySpec::hierarchy(std::size_t reuse) { return describe(Family::Hierarchy, reuse, 0); }
ModularitySpec ModularitySpec::make(Family family, std::size_t reuse, std::size_t overlap) {
    return describe(family, reuse, overlap);
}

void ModularitySpec::validate() const {
    if (levels.empty()) throw ValidationError("modularity spec has no levels");
    for (auto c : levels) {
        if (c < 1) throw ValidationError("every level needs at least one sub-function");
    }
    if (n_inputs < 1 || n_outputs < 1) throw ValidationError("spec needs inputs and outputs");
    std::vector<bool> covered(n_inputs, false);
    for (const auto& part : input_partition) {
        for (auto i : part) {
            if (i >= n_inputs) throw ValidationError("input partition references unknown input");
            covered[i] = true;
        }
    }
    if (std::find(covered.begin(), covered.end(), false) != covered.end()) {
        throw ValidationError("input partition does not cover every input");
    }
    for (auto r : reuse_counts) {
        if (r < 1) throw GenerationError("output sub-function assigned zero outputs");
    }
    if (!(*this == describe(family, reuse, overlap))) {
        throw ValidationError("spec fields disagree with the family parameters");
    }
}

// ---------------------------------------------------------------------------

FunctionGraph::FunctionGraph(std::size_t n_inputs, std::size_t n_outputs, std::vector<Node> nodes,
                             std::vector<Edge> edges, std::optional<ModularitySpec> spec)
    : n_inputs_(n_inputs), n_outputs_(n_outputs), nodes_(std::move(nodes)), edges_(std::move(edges)),
      spec_(std::move(spec)) {
    const std::size_t n = nodes_.size();
    std::size_t seen_inputs = 0, seen_outputs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (nodes_[i].id != i) throw ValidationError("node ids must be dense and ordered");
        if (nodes_[i].kind == NodeKind::Input) ++seen_inputs;
        if (nodes_[i].kind == NodeKind::Output) ++seen_outputs;
    }
    if (seen_inputs != n_inputs_ || seen_outputs != n_outputs_) {
        throw ValidationError("declared input/output counts do not match nodes");
    }
    in_edges_.assign(n, {});
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        const auto& ed = edges_[e];
        if (ed.src >= n || ed.dst >= n || ed.src == ed.dst) throw ValidationError("edge references invalid node");
        in_edges_[ed.dst].push_back(e);
        out[ed.src].push_back(ed.dst);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& node = nodes_[i];
        const auto indeg = in_edges_[i].size();
        if (node.kind == NodeKind::Input) {
            if (indeg != 0) throw ValidationError("input node with in-edges");
            continue;
        }
        if (node.kind == NodeKind::Output && !out[i].empty()) throw ValidationError("output node with out-edges");
        if (node.gate == GateKind::Id && indeg != 1) throw ValidationError("ID gate needs exactly one in-edge");
        if (indeg < 1) throw ValidationError("gate node without in-edges");
    }
    // Kahn's algorithm; ties resolved by smallest id so the order is stable.
    std::vector<std::size_t> indeg(n);
    for (std::size_t i = 0; i < n; ++i) indeg[i] = in_edges_[i].size();
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i) {
        if (indeg[i] == 0) ready.push(i);
    }
    level_.assign(n, 0);
    while (!ready.empty()) {
        const auto u = ready.top();
        ready.pop();
        topo_.push_back(u);
        for (auto v : out[u]) {
            level_[v] = std::max(level_[v], level_[u] + 1);
            if (--indeg[v] == 0) ready.push(v);
        }
    }
    if (topo_.size() != n) throw ValidationError("function graph contains a cycle");

    // Every gate must lie on an input -> output path.
    std::vector<bool> from_input(n, false), to_output(n, false);
    for (auto u : topo_) {
        if (nodes_[u].kind == NodeKind::Input) from_input[u] = true;
        for (auto v : out[u]) from_input[v] = from_input[v] || from_input[u];
    }
    for (auto it = topo_.rbegin(); it != topo_.rend(); ++it) {
        const auto u = *it;
        if (nodes_[u].kind == NodeKind::Output) to_output[u] = true;
        for (auto v : out[u]) to_output[u] = to_output[u] || to_output[v];
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (nodes_[i].kind == NodeKind::Gate && !(from_input[i] && to_output[i])) {
            throw ValidationError("gate node " + std::to_string(i) + " is not on an input-output path");
        }
    }
}

std::vector<std::size_t> FunctionGraph::output_nodes() const {
    std::vector<std::size_t> r;
    for (const auto& nd : nodes_) {
        if (nd.kind == NodeKind::Output) r.push_back(nd.id);
    }
    return r;
}

std::vector<std::size_t> FunctionGraph::input_nodes() const {
    std::vector<std::size_t> r;
    for (const auto& nd : nodes_) {
        if (nd.kind == NodeKind::Input) r.push_back(nd.id);
    }
    return r;
}

namespace {

// Values of every node for one assignment.
std::vector<std::uint8_t> node_values(const FunctionGraph& g, std::span<const std::uint8_t> input,
                                      const std::vector<std::size_t>& topo,
                                      const std::vector<std::vector<std::size_t>>& in_edges) {
    std::vector<std::uint8_t> val(g.nodes().size(), 0);
    std::size_t next_input = 0;
    std::vector<std::size_t> input_slot(g.nodes().size(), 0);
    for (const auto& nd : g.nodes()) {
        if (nd.kind == NodeKind::Input) input_slot[nd.id] = next_input++;
    }
    for (auto u : topo) {
        const auto& nd = g.nodes()[u];
        if (nd.kind == NodeKind::Input) {
            val[u] = input[input_slot[u]] ? 1 : 0;
            continue;
        }
        bool acc = nd.gate == GateKind::And;
        for (auto e : in_edges[u]) {
            const auto& ed = g.edges()[e];
            const bool bit = (val[ed.src] != 0) != ed.negate;
            switch (nd.gate) {
                case GateKind::And: acc = acc && bit; break;
                case GateKind::Or: acc = acc || bit; break;
                case GateKind::Id: acc = bit; break;
            }
        }
        val[u] = acc ? 1 : 0;
    }
    return val;
}

}  // namespace

std::vector<std::uint8_t> evaluate(const FunctionGraph& graph, std::span<const std::uint8_t> input) {
    if (input.size() != graph.n_inputs_) {
        throw DimensionError("expected " + std::to_string(graph.n_inputs_) + " input bits, got " +
                             std::to_string(input.size()));
    }
    for (auto b : input) {
        if (b > 1) throw DimensionError("input bits must be 0 or 1");
    }
    const auto val = node_values(graph, input, graph.topo_, graph.in_edges_);
    std::vector<std::uint8_t> out;
    out.reserve(graph.n_outputs_);
    for (const auto& nd : graph.nodes_) {
        if (nd.kind == NodeKind::Output) out.push_back(val[nd.id]);
    }
    return out;
}

TruthTable truth_table(const FunctionGraph& graph) {
    const std::size_t n = graph.n_inputs();
    if (n > kMaxTableInputs) {
        throw CapacityError("truth tables are limited to " + std::to_string(kMaxTableInputs) + " inputs");
    }
    TruthTable t;
    t.n_inputs = n;
    t.n_outputs = graph.n_outputs();
    const std::size_t rows = std::size_t{1} << n;
    t.inputs.resize(rows * n);
    t.outputs.resize(rows * t.n_outputs);
    std::vector<std::uint8_t> in(n);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < n; ++i) in[i] = static_cast<std::uint8_t>((r >> (n - 1 - i)) & 1U);
        std::copy(in.begin(), in.end(), t.inputs.begin() + static_cast<std::ptrdiff_t>(r * n));
        const auto out = evaluate(graph, in);
        std::copy(out.begin(), out.end(), t.outputs.begin() + static_cast<std::ptrdiff_t>(r * t.n_outputs));
    }
    return t;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

struct Draft {
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    std::vector<std::vector<std::size_t>> sf_gates;  // gate node ids per sub-function
    std::vector<std::size_t> output_sf;              // owning sub-function per output
};

Draft draft(const Blueprint& bp, Stream& rng) {
    Draft d;
    for (std::size_t i = 0; i < bp.n_inputs; ++i) d.nodes.push_back({i, NodeKind::Input, GateKind::Id});

    // Gates are laid out level by level, so ids follow a topological order.
    std::vector<std::size_t> order(bp.sfs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return bp.sfs[a].level < bp.sfs[b].level; });
    d.sf_gates.assign(bp.sfs.size(), {});
    for (auto s : order) {
        const auto& sf = bp.sfs[s];
        std::vector<std::size_t> srcs = sf.inputs;
        for (auto src_sf : sf.sources) {
            srcs.insert(srcs.end(), d.sf_gates[src_sf].begin(), d.sf_gates[src_sf].end());
        }
        // Each gate reads all of the sub-function's sources or all but one
        // (never fewer than two). Gates over all four literals of the same
        // inputs are lone minterms, which makes stacked gates collapse onto
        // each other; dropping one source per gate avoids that while keeping
        // every gate mixed across the sub-function's inputs. Every primary
        // input source is read by a gate of this sub-function; a gate source
        // only needs some reader somewhere.
        std::vector<std::vector<std::size_t>> reads(sf.gates);
        std::vector<std::uint8_t> covered(srcs.size(), 0);
        for (auto& picked : reads) {
            const std::size_t skip = srcs.size() <= 2 ? srcs.size() : rng.below(srcs.size() + 1);
            for (std::size_t q = 0; q < srcs.size(); ++q) {
                if (q != skip) picked.push_back(q);
            }
            for (auto q : picked) covered[q] = 1;
        }
        for (std::size_t q = 0; q < sf.inputs.size(); ++q) {
            if (covered[q]) continue;
            auto& target = reads[rng.below(sf.gates)];
            target.insert(std::upper_bound(target.begin(), target.end(), q), q);
        }
        for (std::size_t k = 0; k < sf.gates; ++k) {
            std::vector<std::size_t> picked;
            for (auto q : reads[k]) picked.push_back(srcs[q]);
            const std::size_t id = d.nodes.size();
            const GateKind kind = picked.size() == 1 ? GateKind::Id : (rng.coin() ? GateKind::And : GateKind::Or);
            d.nodes.push_back({id, NodeKind::Gate, kind});
            for (auto src : picked) d.edges.push_back({src, id, rng.coin()});
            d.sf_gates[s].push_back(id);
        }
    }
    for (std::size_t s = 0; s < bp.sfs.size(); ++s) {
        const auto& gates = d.sf_gates[s];
        for (std::size_t k = 0; k < bp.sfs[s].outputs; ++k) {
            const std::size_t id = d.nodes.size();
            const GateKind kind = gates.size() == 1 ? GateKind::Id : (rng.coin() ? GateKind::And : GateKind::Or);
            d.nodes.push_back({id, NodeKind::Output, kind});
            for (auto src : gates) d.edges.push_back({src, id, rng.coin()});
            d.output_sf.push_back(s);
        }
    }
    return d;
}

// Inputs each sub-function transitively reads.
std::vector<std::set<std::size_t>> designated_inputs(const Blueprint& bp) {
    std::vector<std::set<std::size_t>> des(bp.sfs.size());
    // Sources always precede their consumers in level order.
    std::vector<std::size_t> order(bp.sfs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return bp.sfs[a].level < bp.sfs[b].level; });
    for (auto s : order) {
        des[s].insert(bp.sfs[s].inputs.begin(), bp.sfs[s].inputs.end());
        for (auto src : bp.sfs[s].sources) des[s].insert(des[src].begin(), des[src].end());
    }
    return des;
}

bool non_degenerate(const FunctionGraph& g, const Draft& d, const Blueprint& bp) {
    const std::size_t n = g.n_inputs();
    const std::size_t rows = std::size_t{1} << n;
    // Node values for every row, via the output-evaluation path: build one
    // column per node by promoting every node to a probe.
    std::vector<std::vector<std::uint8_t>> cols(g.nodes().size(), std::vector<std::uint8_t>(rows));
    std::vector<std::vector<std::size_t>> in_edges(g.nodes().size());
    for (std::size_t e = 0; e < g.edges().size(); ++e) in_edges[g.edges()[e].dst].push_back(e);
    {
        std::vector<std::size_t> topo(g.nodes().size());
        std::iota(topo.begin(), topo.end(), 0);
        std::vector<std::uint8_t> in(n);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < n; ++i) in[i] = static_cast<std::uint8_t>((r >> (n - 1 - i)) & 1U);
            const auto val = node_values(g, in, topo, in_edges);
            for (std::size_t v = 0; v < val.size(); ++v) cols[v][r] = val[v];
        }
    }
    // Internal gates: non-constant, pairwise distinct and not complementary.
    std::vector<std::size_t> gates;
    for (const auto& nd : g.nodes()) {
        if (nd.kind == NodeKind::Gate) gates.push_back(nd.id);
    }
    for (std::size_t a = 0; a < gates.size(); ++a) {
        const auto& ca = cols[gates[a]];
        const auto ones = std::count(ca.begin(), ca.end(), 1);
        if (ones == 0 || static_cast<std::size_t>(ones) == rows) return false;
        for (std::size_t b = a + 1; b < gates.size(); ++b) {
            const auto& cb = cols[gates[b]];
            bool same = true, comp = true;
            for (std::size_t r = 0; r < rows && (same || comp); ++r) {
                same = same && ca[r] == cb[r];
                comp = comp && ca[r] != cb[r];
            }
            if (same || comp) return false;
        }
    }
    // No redundant gate in-edge: dropping any one literal changes the gate's
    // column, so no source is implied by the others (e.g. OR(not a, not b)
    // when a implies b).
    for (auto u : gates) {
        const auto& ins = in_edges[u];
        if (ins.size() < 2) continue;
        const bool is_and = g.nodes()[u].gate == GateKind::And;
        for (auto drop : ins) {
            bool differs = false;
            for (std::size_t r = 0; r < rows && !differs; ++r) {
                bool acc = is_and;
                for (auto e : ins) {
                    if (e == drop) continue;
                    const auto& ed = g.edges()[e];
                    const bool bit = (cols[ed.src][r] != 0) != ed.negate;
                    acc = is_and ? (acc && bit) : (acc || bit);
                }
                differs = acc != (cols[u][r] != 0);
            }
            if (!differs) return false;
        }
    }
    // Every output depends on each of its designated inputs.
    const auto des = designated_inputs(bp);
    const auto outs = g.output_nodes();
    for (std::size_t j = 0; j < outs.size(); ++j) {
        const auto& col = cols[outs[j]];
        for (auto i : des[d.output_sf[j]]) {
            const std::size_t bit = std::size_t{1} << (n - 1 - i);
            bool depends = false;
            for (std::size_t r = 0; r < rows && !depends; ++r) depends = col[r] != col[r ^ bit];
            if (!depends) return false;
        }
    }
    return true;
}

}  // namespace

FunctionGraph generate(const ModularitySpec& spec, std::uint64_t seed) {
    spec.validate();
    const Blueprint bp = blueprint(spec);
    constexpr std::size_t kMaxAttempts = 20000;
    for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Stream rng(derive_key(seed, 0x67656EULL, attempt));
        Draft d = draft(bp, rng);
        // a gate source nobody reads
        std::vector<std::uint8_t> read(d.nodes.size(), 0);
        for (const auto& e : d.edges) read[e.src] = 1;
        if (std::any_of(d.nodes.begin(), d.nodes.end(),
                        [&](const Node& nd) { return nd.kind == NodeKind::Gate && !read[nd.id]; })) {
            continue;
        }
        FunctionGraph g(spec.n_inputs, spec.n_outputs, d.nodes, d.edges, spec);
        if (non_degenerate(g, d, bp)) return g;
    }
    throw GenerationError("no non-degenerate gate assignment found for family " + to_string(spec.family));
}

// ---------------------------------------------------------------------------
// Ground-truth signatures

namespace {

// Module graph before contraction: nodes are input groups and sub-functions.
struct ProtoModule {
    std::size_t level = 0;
    std::set<std::size_t> inputs;
    std::set<std::size_t> outputs;
};

HierarchySignature contract(std::vector<ProtoModule> mods, std::set<std::pair<std::size_t, std::size_t>> uses) {
    // Fuse u -> v when v is u's only consumer and u is v's only source.
    bool changed = true;
    std::vector<bool> gone(mods.size(), false);
    while (changed) {
        changed = false;
        for (const auto& [u, v] : uses) {
            std::size_t out_u = 0, in_v = 0;
            for (const auto& [a, b] : uses) {
                out_u += a == u;
                in_v += b == v;
            }
            if (out_u != 1 || in_v != 1) continue;
            mods[v].level = std::min(mods[v].level, mods[u].level);
            mods[v].inputs.insert(mods[u].inputs.begin(), mods[u].inputs.end());
            mods[v].outputs.insert(mods[u].outputs.begin(), mods[u].outputs.end());
            gone[u] = true;
            std::set<std::pair<std::size_t, std::size_t>> next;
            for (auto [a, b] : uses) {
                if (a == u && b == v) continue;
                next.insert({a == u ? v : a, b == u ? v : b});
            }
            uses = std::move(next);
            changed = true;
            break;
        }
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < mods.size(); ++i) {
        if (!gone[i]) keep.push_back(i);
    }
    auto first_terminal = [&](std::size_t i) {
        const auto& m = mods[i];
        return std::pair{m.inputs.empty() ? SIZE_MAX : *m.inputs.begin(),
                         m.outputs.empty() ? SIZE_MAX : *m.outputs.begin()};
    };
    std::stable_sort(keep.begin(), keep.end(), [&](auto a, auto b) {
        if (mods[a].level != mods[b].level) return mods[a].level < mods[b].level;
        return first_terminal(a) < first_terminal(b);
    });
    std::map<std::size_t, std::size_t> renum;
    HierarchySignature sig;
    for (auto i : keep) {
        renum[i] = sig.modules.size();
        sig.modules.push_back({sig.modules.size(), mods[i].level, mods[i].inputs, mods[i].outputs});
    }
    for (auto [a, b] : uses) sig.uses.emplace_back(renum.at(a), renum.at(b));
    std::sort(sig.uses.begin(), sig.uses.end());
    return sig;
}

HierarchySignature signature_of(const Blueprint& bp, bool collapse_upper) {
    std::vector<ProtoModule> mods;
    std::set<std::pair<std::size_t, std::size_t>> uses;

    // Input groups: inputs read by the same set of first-level sub-functions.
    std::map<std::set<std::size_t>, std::size_t> group_of_key;
    std::vector<std::set<std::size_t>> readers(bp.n_inputs);
    for (std::size_t s = 0; s < bp.sfs.size(); ++s) {
        for (auto i : bp.sfs[s].inputs) readers[i].insert(s);
    }
    std::vector<std::size_t> input_group(bp.n_inputs);
    for (std::size_t i = 0; i < bp.n_inputs; ++i) {
        auto [it, fresh] = group_of_key.try_emplace(readers[i], mods.size());
        if (fresh) mods.push_back({0, {}, {}});
        mods[it->second].inputs.insert(i);
        input_group[i] = it->second;
    }

    // Sub-function modules; with collapse_upper every sub-function above
    // level 1 folds into one module.
    std::size_t upper = SIZE_MAX;
    std::vector<std::size_t> sf_module(bp.sfs.size());
    for (std::size_t s = 0; s < bp.sfs.size(); ++s) {
        if (collapse_upper && bp.sfs[s].level > 1) {
            if (upper == SIZE_MAX) {
                upper = mods.size();
                mods.push_back({bp.sfs[s].level, {}, {}});
            }
            sf_module[s] = upper;
        } else {
            sf_module[s] = mods.size();
            mods.push_back({bp.sfs[s].level, {}, {}});
        }
    }
    std::size_t next_output = 0;
    for (std::size_t s = 0; s < bp.sfs.size(); ++s) {
        const auto m = sf_module[s];
        mods[m].level = std::min(mods[m].level, bp.sfs[s].level);
        for (std::size_t k = 0; k < bp.sfs[s].outputs; ++k) mods[m].outputs.insert(next_output++);
        for (auto i : bp.sfs[s].inputs) uses.insert({input_group[i], m});
        for (auto src : bp.sfs[s].sources) {
            if (sf_module[src] != m) uses.insert({sf_module[src], m});
        }
    }
    return contract(std::move(mods), std::move(uses));
}

}  // namespace

HierarchySignature signature(const FunctionGraph& graph, const ModularitySpec& spec) {
    return signature(graph, spec, spec.gate_levels());
}

HierarchySignature signature(const FunctionGraph& graph, const ModularitySpec& spec, std::size_t hidden_layers) {
    if (graph.n_inputs() != spec.n_inputs || graph.n_outputs() != spec.n_outputs) {
        throw ValidationError("graph does not match the modularity spec");
    }
    const Blueprint bp = blueprint(spec);
    if (hidden_layers >= spec.gate_levels()) return signature_of(bp, false);
    std::size_t first_level = 0;
    for (const auto& sf : bp.sfs) first_level += sf.level == 1;
    if (first_level >= 2) return signature_of(bp, true);
    // A single first-level sub-function: the whole task is one module.
    HierarchySignature sig;
    SignatureModule m;
    for (std::size_t i = 0; i < spec.n_inputs; ++i) m.inputs.insert(i);
    for (std::size_t j = 0; j < spec.n_outputs; ++j) m.outputs.insert(j);
    sig.modules.push_back(m);
    return sig;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const char* kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::Input: return "input";
        case NodeKind::Gate: return "gate";
        case NodeKind::Output: return "output";
    }
    return "";
}

const char* gate_name(GateKind g) {
    switch (g) {
        case GateKind::And: return "and";
        case GateKind::Or: return "or";
        case GateKind::Id: return "id";
    }
    return "";
}

}  // namespace

json to_json(const ModularitySpec& s) {
    return json{{"family", to_string(s.family)},
                {"reuse", s.reuse},
                {"overlap", s.overlap},
                {"n_inputs", s.n_inputs},
                {"n_outputs", s.n_outputs},
                {"levels", s.levels},
                {"input_partition", s.input_partition},
                {"reuse_counts", s.reuse_counts}};
}

ModularitySpec spec_from_json(const json& j) {
    try {
        const auto family = family_from_string(j.at("family").get<std::string>());
        std::size_t reuse = 4;
        switch (family) {
            case Family::Separable:
            case Family::SeparableReused: reuse = 2; break;
            case Family::Dense: reuse = 4; break;
            case Family::Reused: reuse = j.value("reuse", std::size_t{8}); break;
            case Family::Overlap:
            case Family::Hierarchy: reuse = j.value("reuse", std::size_t{4}); break;
        }
        const auto s = ModularitySpec::make(family, reuse, j.value("overlap", std::size_t{0}));
        if (j.contains("n_inputs") && j.at("n_inputs").get<std::size_t>() != s.n_inputs) {
            throw ValidationError("spec n_inputs disagrees with family");
        }
        if (j.contains("n_outputs") && j.at("n_outputs").get<std::size_t>() != s.n_outputs) {
            throw ValidationError("spec n_outputs disagrees with family");
        }
        return s;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed spec JSON: ") + e.what());
    }
}

json to_json(const FunctionGraph& g) {
    json nodes = json::array();
    for (const auto& nd : g.nodes()) {
        json jn{{"id", nd.id}, {"kind", kind_name(nd.kind)}};
        if (nd.kind != NodeKind::Input) jn["gate"] = gate_name(nd.gate);
        nodes.push_back(std::move(jn));
    }
    json edges = json::array();
    for (const auto& e : g.edges()) edges.push_back({{"src", e.src}, {"dst", e.dst}, {"negate", e.negate}});
    json j{{"n_inputs", g.n_inputs()}, {"n_outputs", g.n_outputs()}, {"nodes", nodes}, {"edges", edges}};
    if (g.spec()) j["spec"] = to_json(*g.spec());
    return j;
}

FunctionGraph graph_from_json(const json& j) {
    try {
        std::vector<Node> nodes;
        for (const auto& jn : j.at("nodes")) {
            Node nd;
            nd.id = jn.at("id").get<std::size_t>();
            const auto kind = jn.at("kind").get<std::string>();
            if (kind == "input") nd.kind = NodeKind::Input;
            else if (kind == "gate") nd.kind = NodeKind::Gate;
            else if (kind == "output") nd.kind = NodeKind::Output;
            else throw FormatError("unknown node kind '" + kind + "'");
            if (nd.kind != NodeKind::Input) {
                const auto gate = jn.at("gate").get<std::string>();
                if (gate == "and") nd.gate = GateKind::And;
                else if (gate == "or") nd.gate = GateKind::Or;
                else if (gate == "id") nd.gate = GateKind::Id;
                else throw FormatError("unknown gate '" + gate + "'");
            }
            nodes.push_back(nd);
        }
        std::vector<Edge> edges;
        for (const auto& je : j.at("edges")) {
            edges.push_back({je.at("src").get<std::size_t>(), je.at("dst").get<std::size_t>(),
                             je.value("negate", false)});
        }
        std::optional<ModularitySpec> spec;
        if (j.contains("spec")) spec = spec_from_json(j.at("spec"));
        return FunctionGraph(j.at("n_inputs").get<std::size_t>(), j.at("n_outputs").get<std::size_t>(),
                             std::move(nodes), std::move(edges), std::move(spec));
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed graph JSON: ") + e.what());
    }
}

json to_json(const HierarchySignature& sig) {
    json mods = json::array();
    for (const auto& m : sig.modules) {
        mods.push_back({{"id", m.id}, {"level", m.level}, {"inputs", m.inputs}, {"outputs", m.outputs}});
    }
    json uses = json::array();
    for (auto [a, b] : sig.uses) uses.push_back({a, b});
    return json{{"modules", mods}, {"uses", uses}};
}

}  // namespace nsculpt

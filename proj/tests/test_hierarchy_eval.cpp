#include "doctest.h"

#include "nsculpt/error.hpp"
#include "nsculpt/hierarchy_eval.hpp"

using namespace nsculpt;

namespace {

// A found hierarchy mirroring `sig`: each module gets its terminals plus one
// hidden unit, so every module carries hidden units.
ModuleHierarchy mirror(const HierarchySignature& sig, std::size_t depth = 3) {
    ModuleHierarchy h;
    h.depth = depth;
    for (const auto& m : sig.modules) {
        FoundModule f;
        f.id = m.id;
        f.level = m.level;
        f.inputs = m.inputs;
        f.outputs = m.outputs;
        for (auto i : m.inputs) f.units.push_back({0, i});
        f.units.push_back({1, m.id});
        for (auto o : m.outputs) f.units.push_back({depth, o});
        h.modules.push_back(f);
    }
    h.uses = sig.uses;
    return h;
}

// Permutes module ids (and uses-edges) of a found hierarchy.
ModuleHierarchy relabel(ModuleHierarchy h, const std::vector<std::size_t>& perm) {
    std::vector<FoundModule> mods(h.modules.size());
    for (auto m : h.modules) {
        m.id = perm[m.id];
        mods[m.id] = m;
    }
    h.modules = mods;
    for (auto& [a, b] : h.uses) {
        a = perm[a];
        b = perm[b];
    }
    return h;
}

TrialConfig tiny_config() {
    TrialConfig c;
    c.spec = ModularitySpec::separable();
    c.widths = {12};
    c.depths = {1, 2};
    c.seeds = {0, 1};
    c.epochs = 60;
    c.grid.p_u_values = {30};
    c.grid.p_e_values = {2.5};
    c.thresholds = {{"exact_structure", 0.5, true}};
    return c;
}

}  // namespace

TEST_SUITE("hierarchy_eval") {

TEST_CASE("identical structures pass every flag") {
    for (const auto& spec : {ModularitySpec::separable(), ModularitySpec::reused(4), ModularitySpec::hierarchy(2),
                             ModularitySpec::input_overlap(2)}) {
        const auto sig = signature(generate(spec, 0), spec);
        const auto f = compare(mirror(sig), sig);
        CHECK(f.input_modules);
        CHECK(f.output_modules);
        CHECK(f.middle_separation);
        CHECK(f.exact_structure);
        // module numbering does not matter
        std::vector<std::size_t> perm(sig.modules.size());
        std::iota(perm.rbegin(), perm.rend(), 0);
        CHECK(compare(relabel(mirror(sig), perm), sig) == f);
    }
}

TEST_CASE("one blob against two separable chains") {
    const auto spec = ModularitySpec::separable();
    const auto sig = signature(generate(spec, 0), spec);
    HierarchySignature blob;
    blob.modules.push_back({0, 0, {0, 1, 2, 3}, {0, 1, 2, 3}});
    const auto f = compare(mirror(blob), sig);
    CHECK_FALSE(f.input_modules);
    CHECK_FALSE(f.output_modules);
    CHECK_FALSE(f.middle_separation);
    CHECK_FALSE(f.exact_structure);
}

TEST_CASE("inputs split but upper levels fused") {
    const auto spec = ModularitySpec::hierarchy(4);
    const auto sig = signature(generate(spec, 0), spec);
    HierarchySignature found;
    found.modules.push_back({0, 0, {0, 1}, {}});
    found.modules.push_back({1, 0, {2, 3}, {}});
    found.modules.push_back({2, 2, {}, {0, 1, 2, 3, 4, 5, 6, 7}});
    found.uses = {{0, 2}, {1, 2}};
    const auto f = compare(mirror(found), sig);
    CHECK(f.input_modules);
    CHECK_FALSE(f.output_modules);
    CHECK_FALSE(f.exact_structure);
}

TEST_CASE("an extra uses-edge breaks exactness only") {
    const auto spec = ModularitySpec::reused(2);
    const auto sig = signature(generate(spec, 0), spec);
    auto h = mirror(sig);
    h.uses.push_back({1, 2});
    const auto f = compare(h, sig);
    CHECK(f.input_modules);
    CHECK(f.output_modules);
    CHECK_FALSE(f.exact_structure);
}

TEST_CASE("mismatched terminals are an error") {
    const auto spec = ModularitySpec::separable();
    const auto sig = signature(generate(spec, 0), spec);
    HierarchySignature small;
    small.modules.push_back({0, 0, {0, 1}, {0, 1}});
    CHECK_THROWS_AS(compare(mirror(small), sig), ComparisonError);
}

TEST_CASE("trial config defaults and serialization") {
    TrialConfig c;
    CHECK(c.trial_count() == 36);
    c.thresholds = {{"exact_structure", 0.75, true}};
    CHECK(trial_config_from_json(nlohmann::json::parse(to_json(c).dump())) == c);
    c.widths.clear();
    CHECK_THROWS_AS(c.validate(), ValidationError);
    TrialConfig bad;
    bad.thresholds = {{"no_such_flag", 0.5, true}};
    CHECK_THROWS(bad.validate());
}

TEST_CASE("aggregation and thresholds") {
    TrialConfig c = tiny_config();
    std::vector<TrialResult> trials(4);
    trials[0] = {12, 1, 0, true, "", 1, 1, 0.2, 4, 2, 30, 2.5, {true, true, true, true}};
    trials[1] = {12, 1, 1, false, "dense_below_target", 0.9, 0.9, 1, 0, 0, 0, 0, {}};
    trials[2] = {12, 2, 0, true, "", 1, 1, 0.2, 4, 2, 30, 2.5, {true, true, true, true}};
    trials[3] = {12, 2, 1, true, "", 1, 1, 0.2, 4, 2, 30, 2.5, {true, false, false, false}};
    const auto rep = aggregate(c, trials);
    for (const auto& r : rep.rates) {
        CHECK(r.rate() >= 0.0);
        CHECK(r.rate() <= 1.0);
        CHECK(r.trials == 2);
    }
    REQUIRE(rep.thresholds.size() == 1);
    // separable graphs have one gate level, so every depth is eligible
    CHECK(rep.thresholds[0].eligible == 4);
    CHECK(rep.thresholds[0].rate == 0.5);
    CHECK(rep.passed());
    c.thresholds[0].min_rate = 0.75;
    CHECK_FALSE(aggregate(c, trials).passed());
    CHECK(rep.csv().rows().size() == 4);
    CHECK(rep.aggregate_json()["completed"] == 3);
}

TEST_CASE("grid runs are reproducible and thread-count independent") {
    const auto c = tiny_config();
    const auto serial = run_grid_serial(c);
    CHECK(serial.trials.size() == c.trial_count());
    CHECK(run_grid_serial(c) == serial);
    CHECK(run_grid(c, 2) == serial);
    CHECK(run_grid(c, 3).csv().str() == serial.csv().str());
    for (const auto& t : serial.trials) {
        if (t.flags.exact_structure) {
            CHECK(t.flags.input_modules);
            CHECK(t.flags.output_modules);
        }
        if (t.completed) CHECK(t.final_accuracy == 1.0);
    }
}

TEST_CASE("dense graph trials are scored against a single module") {
    TrialConfig c;
    c.spec = ModularitySpec::dense();
    const auto graph = generate(c.spec, 0);
    const auto out = run_trial(c, graph, 24, 2, 0);
    REQUIRE(out.truth.modules.size() == 1);
    if (out.result.completed) CHECK(out.result.flags.exact_structure == (out.found.modules.size() == 1));
}

}  // TEST_SUITE

#include "doctest.h"

#include "nsculpt/module_detection.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>

using namespace nsculpt;

namespace {

using Rows = std::vector<std::vector<std::uint8_t>>;

// Net with the given widths and only the listed edges live.
MaskedMlp sparse_net(std::vector<std::size_t> widths,
                     const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>& live) {
    MlpConfig cfg;
    cfg.layer_widths = std::move(widths);
    auto mlp = init(cfg);
    for (auto& L : mlp.layers) {
        std::fill(L.mask.begin(), L.mask.end(), 0);
        std::fill(L.weight.begin(), L.weight.end(), 0.0);
    }
    for (const auto& [l, out, in] : live) {
        mlp.layers[l].mask[out * mlp.layers[l].fan_in + in] = 1;
        mlp.layers[l].w(out, in) = 1.0;
    }
    return mlp;
}

// Two parallel blocks: {x0,x1} -> {h0,h1} -> {y0,y1} and {x2,x3} -> {h2,h3} -> {y2,y3}.
MaskedMlp separable_net() {
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> e;
    for (std::size_t block = 0; block < 2; ++block)
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b) {
                e.push_back({0, 2 * block + a, 2 * block + b});
                e.push_back({1, 2 * block + a, 2 * block + b});
            }
    return sparse_net({4, 4, 4}, e);
}

// Naive average linkage: recompute every inter-cluster mean from scratch.
struct NaiveMerge {
    std::vector<std::size_t> a, b;
    double height;
};
std::vector<NaiveMerge> naive_linkage(const Matrix& d) {
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < d.rows; ++i) clusters.push_back({i});
    std::vector<NaiveMerge> out;
    while (clusters.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < clusters.size(); ++i)
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                double s = 0.0;
                for (auto x : clusters[i])
                    for (auto y : clusters[j]) s += d(x, y);
                s /= static_cast<double>(clusters[i].size() * clusters[j].size());
                if (s < best - 1e-12) {
                    best = s;
                    bi = i;
                    bj = j;
                }
            }
        out.push_back({clusters[bi], clusters[bj], best});
        clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
        std::sort(clusters[bi].begin(), clusters[bi].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
        std::sort(clusters.begin(), clusters.end());
    }
    return out;
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
    std::sort(v.begin(), v.end());
    return v;
}

// Canonical form of a labelling: labels renumbered by first appearance.
std::vector<std::size_t> canon(const std::vector<std::size_t>& labels) {
    std::map<std::size_t, std::size_t> m;
    std::vector<std::size_t> out;
    for (auto l : labels) out.push_back(m.try_emplace(l, m.size()).first->second);
    return out;
}

Rows block_rows(std::size_t groups, std::size_t per_group, std::size_t width) {
    Rows rows;
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t k = 0; k < per_group; ++k) {
            std::vector<std::uint8_t> r(groups * width, 0);
            for (std::size_t c = 0; c < width; ++c) r[g * width + c] = 1;
            rows.push_back(r);
        }
    return rows;
}

}  // namespace

TEST_SUITE("module_detection") {

TEST_CASE("reachability basics") {
    MlpConfig cfg;
    cfg.layer_widths = {2, 3, 2};
    const auto dense = init(cfg);
    const auto f = reachability_features(dense, 0);
    CHECK(f.g() == 5);
    for (const auto& r : f.rows)
        for (auto v : r) CHECK(v == 1);

    // a -> b -> c chain and a unit without out-edges
    const auto chain = sparse_net({2, 1, 1}, {{0, 0, 0}, {1, 0, 0}});
    const auto fc = reachability_features(chain, 0);
    CHECK(fc.rows[0] == std::vector<std::uint8_t>{1, 1});
    CHECK(fc.rows[1] == std::vector<std::uint8_t>{0, 0});
}

TEST_CASE("reachability equals DFS closure") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto mlp = oracle::random_net(s, 4, 8, 0.6, 0.15);
        for (std::size_t layer = 0; layer < mlp.depth(); ++layer) {
            const auto f = reachability_features(mlp, layer);
            CHECK(f.units == mlp.alive_units(layer));
            for (std::size_t k = 0; k < f.units.size(); ++k) {
                const auto reach = oracle::dfs_reach(mlp, {layer, f.units[k]});
                for (std::size_t c = 0; c < f.g(); ++c) CHECK((f.rows[k][c] != 0) == (reach.count(f.columns[c]) != 0));
                std::size_t ones = 0;
                for (auto v : f.rows[k]) ones += v;
                CHECK(ones == reach.size());
            }
        }
    }
}

TEST_CASE("cosine distance conventions") {
    CHECK(cosine_distance({0, 0}, {0, 0}) == 0.0);
    CHECK(cosine_distance({1, 0}, {0, 0}) == 1.0);
    CHECK(cosine_distance({1, 0}, {0, 1}) == 1.0);
    CHECK(cosine_distance({1, 1}, {1, 1}) == doctest::Approx(0.0));
    CHECK(cosine_distance({1, 1, 0}, {1, 0, 0}) == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)));
}

TEST_CASE("average linkage matches a from-scratch oracle") {
    // four hand-built vectors
    const Rows rows{{1, 1, 0, 0, 0}, {1, 1, 1, 0, 0}, {0, 0, 1, 1, 1}, {0, 0, 0, 1, 1}};
    std::vector<Matrix> cases{cosine_distances(rows)};
    for (std::uint64_t s = 0; s < 30; ++s) cases.push_back(oracle::random_distances(s, 3 + s % 6));
    for (const auto& d : cases) {
        const auto dg = agglomerative(d);
        const auto ref = naive_linkage(d);
        REQUIRE(dg.merges.size() == ref.size());
        for (std::size_t t = 0; t < ref.size(); ++t) {
            CHECK(dg.merges[t].height == doctest::Approx(ref[t].height).epsilon(1e-12));
            auto got = dg.members(dg.merges[t].a);
            auto other = dg.members(dg.merges[t].b);
            got.insert(got.end(), other.begin(), other.end());
            auto want = ref[t].a;
            want.insert(want.end(), ref[t].b.begin(), ref[t].b.end());
            CHECK(sorted(got) == sorted(want));
        }
    }
}

TEST_CASE("cuts recover blocks and label by smallest member") {
    const auto dg = agglomerative(cosine_distances({{1, 0}, {0, 1}, {1, 0}, {0, 1}}));
    CHECK(dg.cut(2) == std::vector<std::size_t>{0, 1, 0, 1});
    CHECK(dg.cut(1) == std::vector<std::size_t>{0, 0, 0, 0});
    CHECK(dg.cut(4) == std::vector<std::size_t>{0, 1, 2, 3});
    const auto same = agglomerative(Matrix(3, 3, 0.0));
    CHECK(same.cut(1) == std::vector<std::size_t>{0, 0, 0});
}

TEST_CASE("modularity metric identities") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const std::size_t n = 2 + s % 7;
        const auto d = oracle::random_distances(s, n);
        CHECK(modularity_metric(d, std::vector<std::size_t>(n, 0)) == 0.0);
        std::vector<std::size_t> single(n);
        std::iota(single.begin(), single.end(), 0);
        double total = 0.0, expect = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) total += d(i, j);
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += d(i, j);
            expect -= (row / total) * (row / total);
        }
        CHECK(modularity_metric(d, single) == doctest::Approx(expect).epsilon(1e-12));
        CHECK(modularity_metric(d, single) <= 0.0);
    }
    CHECK(modularity_metric(Matrix(3, 3, 0.0), {0, 1, 1}) == 0.0);
}

TEST_CASE("modularity argmin agrees with an exhaustive oracle") {
    for (std::uint64_t s = 0; s < 50; ++s) {
        const std::size_t n = 3 + s % 6;
        const auto d = oracle::random_distances(100 + s, n);
        const auto ours = oracle::exhaustive_min(n, 2, n - 1, [&](const auto& l) { return modularity_metric(d, l); });
        const auto ref = oracle::exhaustive_min(n, 2, n - 1, [&](const auto& l) { return oracle::modularity(d, l); });
        CHECK(ours.value == doctest::Approx(ref.value).epsilon(1e-12));
        CHECK(ours.labels == ref.labels);
    }
}

TEST_CASE("two tight pairs: the 2-split is the global minimum") {
    Matrix d(4, 4);
    auto set = [&](std::size_t i, std::size_t j, double v) { d(i, j) = d(j, i) = v; };
    set(0, 1, 0.05);
    set(2, 3, 0.05);
    for (std::size_t i : {0, 1})
        for (std::size_t j : {2, 3}) set(i, j, 0.9);
    const auto best = oracle::exhaustive_min(4, 1, 4, [&](const auto& l) { return oracle::modularity(d, l); });
    CHECK(canon(best.labels) == std::vector<std::size_t>{0, 0, 1, 1});
    CHECK(canon(agglomerative(d).cut(2)) == best.labels);
}

TEST_CASE("separability arithmetic") {
    std::vector<std::uint8_t> a(9, 0), b(9, 0);
    a[0] = a[1] = a[2] = 1;
    b[3] = b[4] = b[5] = 1;
    const auto r = separability(a, b);
    CHECK(r.g == 9);
    CHECK(r.expected == doctest::Approx(1.0));
    CHECK(r.o_ij == 0);
    CHECK(r.separable);
    CHECK(r.z == doctest::Approx(1.0 / std::sqrt(9.0 * (1.0 / 9) * (8.0 / 9))));
    CHECK(r.z == doctest::Approx(1.0607).epsilon(1e-4));

    const std::vector<std::uint8_t> ones(5, 1);
    const auto full = separability(ones, ones);
    CHECK(full.expected == 5.0);
    CHECK_FALSE(full.separable);
    CHECK(full.z == 0.0);

    const std::vector<std::uint8_t> f{1, 0, 1, 1, 0, 0};
    const auto eq = separability(f, f);
    CHECK_FALSE(eq.separable);
    CHECK(eq.o_ij <= std::min(eq.o_i, eq.o_j));
}

TEST_CASE("choose_k fixtures") {
    const auto dense = choose_k(Rows(5, std::vector<std::uint8_t>(6, 1)), kDefaultModularityThreshold);
    CHECK(dense.k == 1);
    CHECK(dense.z_sin >= dense.z_sep);

    // pairwise disjoint supports
    const auto disjoint = choose_k(block_rows(5, 1, 2), kDefaultModularityThreshold);
    CHECK(disjoint.k == 5);
    CHECK(disjoint.test1_positive);

    const auto rows = block_rows(2, 3, 4);
    const auto two = choose_k(rows, kDefaultModularityThreshold);
    CHECK(two.argmin == 2);
    CHECK(two.metric[2] < kDefaultModularityThreshold);
    CHECK(two.k == 2);
    CHECK(two.labels == std::vector<std::size_t>{0, 0, 0, 1, 1, 1});
    const auto d = cosine_distances(rows);
    const auto best = oracle::exhaustive_min(6, 2, 5, [&](const auto& l) { return oracle::modularity(d, l); });
    CHECK(canon(best.labels) == two.labels);

    CHECK(choose_k({}, -0.2).k == 0);
    CHECK(choose_k({{1, 0}}, -0.2).k == 1);
}

TEST_CASE("choose_k is invariant under unit reordering") {
    std::size_t distinct = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        Stream r(derive_key(s, 0x5));
        const std::size_t n = 3 + r.below(4), g = 12 + r.below(12);
        Rows rows(n, std::vector<std::uint8_t>(g));
        for (auto& row : rows) {
            for (auto& v : row) v = r.below(3) == 0;
            row[r.below(g)] = 1;
        }
        std::vector<std::size_t> perm(n), cperm(g);
        std::iota(perm.begin(), perm.end(), 0);
        std::iota(cperm.begin(), cperm.end(), 0);
        r.shuffle(std::span<std::size_t>(perm));
        r.shuffle(std::span<std::size_t>(cperm));
        Rows shuffled(n, std::vector<std::uint8_t>(g));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < g; ++c) shuffled[i][c] = rows[perm[i]][cperm[c]];
        const auto a = choose_k(rows, -0.2);
        const auto b = choose_k(shuffled, -0.2);
        // Tied distances are broken by index, so results are only
        // reorder-invariant when all pairwise distances differ.
        const auto d = cosine_distances(rows);
        std::vector<double> seen;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) seen.push_back(d(i, j));
        std::sort(seen.begin(), seen.end());
        if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) continue;
        ++distinct;
        CHECK(a.k == b.k);
        std::vector<std::size_t> back(n);
        for (std::size_t i = 0; i < n; ++i) back[perm[i]] = b.labels[i];
        CHECK(canon(back) == canon(a.labels));
    }
    CHECK(distinct > 0);
}

TEST_CASE("merging: disjoint chains and a 50/50 split") {
    const auto sep = separable_net();
    std::vector<LayerClusters> cl{{0, {0, 1, 2, 3}, {0, 0, 1, 1}, 2}, {1, {0, 1, 2, 3}, {0, 0, 1, 1}, 2}};
    const auto h = merge_layers(cl, sep, 0.9);
    CHECK(h.modules.size() == 2);
    CHECK(h.uses.empty());

    // x0 -> h1 -> {h2_0 -> y0, h2_1 -> y1}
    const auto split = sparse_net({1, 1, 2, 2}, {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {2, 0, 0}, {2, 1, 1}});
    std::vector<LayerClusters> c2{{0, {0}, {0}, 1}, {1, {0}, {0}, 1}, {2, {0, 1}, {0, 1}, 2}};
    const auto m = merge_layers(c2, split, 0.9);
    REQUIRE(m.modules.size() == 3);
    CHECK(m.uses.size() == 2);
    const auto root = m.module_of({0, 0});
    CHECK(m.module_of({1, 0}) == root);
    for (const auto& [a, b] : m.uses) CHECK(a == root);
    CHECK(m.module_of({3, 0}) == m.module_of({2, 0}));
    CHECK(m.module_of({3, 1}) == m.module_of({2, 1}));
}

TEST_CASE("detect on hand-built nets") {
    const auto h = detect(separable_net());
    REQUIRE(h.modules.size() == 2);
    CHECK(h.uses.empty());
    CHECK(h.modules[0].inputs == std::set<std::size_t>{0, 1});
    CHECK(h.modules[0].outputs == std::set<std::size_t>{0, 1});
    CHECK(h.modules[1].inputs == std::set<std::size_t>{2, 3});
    CHECK(h.modules[1].outputs == std::set<std::size_t>{2, 3});

    MlpConfig cfg;
    cfg.layer_widths = {3, 5, 4, 2};
    const auto dense = detect(init(cfg));
    CHECK(dense.modules.size() == 1);

    // h3 has in-edges from block 1 only and no out-edges
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> e;
    for (std::size_t block = 0; block < 2; ++block)
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b) {
                e.push_back({0, 2 * block + a, 2 * block + b});
                e.push_back({1, 2 * block + a, 2 * block + b});
            }
    e.push_back({0, 4, 2});
    e.push_back({0, 4, 3});
    const auto d = detect(sparse_net({4, 5, 4}, e));
    CHECK(d.modules.size() == 2);
    CHECK(d.module_of({1, 4}) == d.module_of({0, 2}));
}

TEST_CASE("detection output invariants on random sparse nets") {
    for (std::uint64_t s = 0; s < 40; ++s) {
        const auto mlp = oracle::random_net(s, 4, 6, 0.5, 0.1);
        const auto h = detect(mlp);
        std::size_t alive = 0, covered = 0;
        for (std::size_t l = 0; l <= mlp.depth(); ++l) alive += mlp.alive_units(l).size();
        std::set<UnitRef> seen;
        for (const auto& m : h.modules) {
            for (const auto& u : m.units) {
                CHECK(seen.insert(u).second);
                CHECK(mlp.alive(u.layer, u.unit));
                ++covered;
            }
        }
        CHECK(covered == alive);
        // uses-edges acyclic: a topological order exists
        std::vector<std::size_t> indeg(h.modules.size(), 0);
        for (const auto& [a, b] : h.uses) {
            CHECK(a != b);
            ++indeg[b];
        }
        std::vector<std::size_t> ready;
        for (std::size_t i = 0; i < indeg.size(); ++i)
            if (!indeg[i]) ready.push_back(i);
        std::size_t visited = 0;
        while (!ready.empty()) {
            const auto v = ready.back();
            ready.pop_back();
            ++visited;
            for (const auto& [a, b] : h.uses)
                if (a == v && --indeg[b] == 0) ready.push_back(b);
        }
        CHECK(visited == h.modules.size());
        CHECK(to_json(detect(mlp)) == to_json(h));
        const auto back = hierarchy_from_json(to_json(h));
        CHECK(back.modules == h.modules);
        CHECK(back.uses == h.uses);
    }
}

}  // TEST_SUITE

#include "nsculpt/module_detection.hpp"

#include "nsculpt/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

namespace nsculpt {

using nlohmann::json;

FeatureMatrix reachability_features(const MaskedMlp& mlp, std::size_t layer) {
    const std::size_t L = mlp.depth();
    if (layer >= L) throw DimensionError("features are defined for input and hidden layers only");
    FeatureMatrix fm;
    fm.layer = layer;
    std::vector<std::vector<std::size_t>> col_of(L + 1);
    for (std::size_t k = layer + 1; k <= L; ++k) {
        const std::size_t width = mlp.layers[k - 1].fan_out;
        col_of[k].assign(width, static_cast<std::size_t>(-1));
        for (auto u : mlp.alive_units(k)) {
            col_of[k][u] = fm.columns.size();
            fm.columns.push_back({k, u});
        }
    }
    const std::size_t g = fm.columns.size();
    // reach[u] for the current layer, built from the layer above.
    std::vector<std::vector<std::uint8_t>> above(mlp.layers[L - 1].fan_out, std::vector<std::uint8_t>(g, 0));
    for (std::size_t k = L; k-- > layer;) {
        const auto& W = mlp.layers[k];
        std::vector<std::vector<std::uint8_t>> here(W.fan_in, std::vector<std::uint8_t>(g, 0));
        const auto next_alive = mlp.alive_units(k + 1);
        for (auto u : mlp.alive_units(k)) {
            auto& row = here[u];
            for (auto v : next_alive) {
                if (!W.live(v, u)) continue;
                row[col_of[k + 1][v]] = 1;
                const auto& r2 = above[v];
                for (std::size_t c = 0; c < g; ++c) row[c] |= r2[c];
            }
        }
        above = std::move(here);
    }
    for (auto u : mlp.alive_units(layer)) {
        fm.units.push_back(u);
        fm.rows.push_back(above[u]);
    }
    return fm;
}

double cosine_distance(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    if (a.size() != b.size()) throw DimensionError("feature vectors differ in length");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        dot += a[c] * b[c];
        na += a[c] * a[c];
        nb += b[c] * b[c];
    }
    if (na == 0 && nb == 0) return 0.0;
    if (na == 0 || nb == 0) return 1.0;
    return std::max(0.0, 1.0 - dot / std::sqrt(na * nb));
}

Matrix cosine_distances(const std::vector<std::vector<std::uint8_t>>& rows) {
    Matrix d(rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = i + 1; j < rows.size(); ++j) d(i, j) = d(j, i) = cosine_distance(rows[i], rows[j]);
    }
    return d;
}

std::vector<std::size_t> Dendrogram::members(std::size_t cluster) const {
    if (cluster < n) return {cluster};
    const auto& m = merges.at(cluster - n);
    auto a = members(m.a);
    auto b = members(m.b);
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    return a;
}

std::vector<std::size_t> Dendrogram::cut(std::size_t k) const {
    if (n == 0) return {};
    if (k < 1 || k > n) throw ValidationError("cut size must lie in [1, n]");
    std::vector<std::size_t> root(n);
    std::iota(root.begin(), root.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (root[x] != x) x = root[x] = root[root[x]];
        return x;
    };
    for (std::size_t t = 0; t < n - k; ++t) {
        const auto a = members(merges[t].a).front();
        const auto b = members(merges[t].b).front();
        const auto ra = find(a), rb = find(b);
        root[std::max(ra, rb)] = std::min(ra, rb);
    }
    std::vector<std::size_t> label(n), id_of(n, static_cast<std::size_t>(-1));
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = find(i);
        if (id_of[r] == static_cast<std::size_t>(-1)) id_of[r] = next++;
        label[i] = id_of[r];
    }
    return label;
}

Dendrogram agglomerative(const Matrix& d) {
    if (d.rows != d.cols) throw DimensionError("distance matrix must be square");
    Dendrogram dg;
    dg.n = d.rows;
    const std::size_t n = d.rows;
    if (n == 0) return dg;
    const std::size_t total = 2 * n - 1;
    Matrix sum(total, total);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) sum(i, j) = d(i, j);
    }
    std::vector<std::size_t> size(total, 1), first(total);
    std::iota(first.begin(), first.begin() + static_cast<std::ptrdiff_t>(n), 0);
    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), 0);
    for (std::size_t t = 0; t + 1 < n; ++t) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t ba = 0, bb = 0;
        std::pair<std::size_t, std::size_t> best_key{n, n};
        for (std::size_t x = 0; x < active.size(); ++x) {
            for (std::size_t y = x + 1; y < active.size(); ++y) {
                const auto a = active[x], b = active[y];
                const double avg = sum(a, b) / static_cast<double>(size[a] * size[b]);
                const std::pair<std::size_t, std::size_t> key{std::min(first[a], first[b]),
                                                              std::max(first[a], first[b])};
                if (avg < best || (avg == best && key < best_key)) {
                    best = avg;
                    best_key = key;
                    ba = first[a] <= first[b] ? a : b;
                    bb = first[a] <= first[b] ? b : a;
                }
            }
        }
        const std::size_t c = n + t;
        size[c] = size[ba] + size[bb];
        first[c] = std::min(first[ba], first[bb]);
        for (auto o : active) {
            if (o == ba || o == bb) continue;
            sum(c, o) = sum(o, c) = sum(ba, o) + sum(bb, o);
        }
        dg.merges.push_back({ba, bb, best});
        active.erase(std::remove_if(active.begin(), active.end(), [&](auto v) { return v == ba || v == bb; }),
                     active.end());
        active.push_back(c);
    }
    return dg;
}

double modularity_metric(const Matrix& d, const std::vector<std::size_t>& labels) {
    if (d.rows != d.cols || labels.size() != d.rows) throw DimensionError("labels do not match distance matrix");
    double total = 0.0;
    for (std::size_t i = 0; i < d.rows; ++i) {
        for (std::size_t j = 0; j < d.cols; ++j) {
            if (i != j) total += d(i, j);
        }
    }
    const std::size_t k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    if (total == 0.0 || k <= 1) return 0.0;
    Matrix a(k, k);
    for (std::size_t i = 0; i < d.rows; ++i) {
        for (std::size_t j = 0; j < d.cols; ++j) {
            if (i != j) a(labels[i], labels[j]) += d(i, j) / total;
        }
    }
    double m = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double row = 0.0;
        for (std::size_t e = 0; e < k; ++e) row += a(c, e);
        m += a(c, c) - row * row;
    }
    return m;
}

SeparabilityOutcome separability(const std::vector<std::uint8_t>& fi, const std::vector<std::uint8_t>& fj) {
    if (fi.size() != fj.size()) throw DimensionError("feature vectors differ in length");
    SeparabilityOutcome s;
    s.g = fi.size();
    for (std::size_t c = 0; c < s.g; ++c) {
        s.o_i += fi[c] != 0;
        s.o_j += fj[c] != 0;
        s.o_ij += fi[c] != 0 && fj[c] != 0;
    }
    if (s.g == 0) return s;
    const double g = static_cast<double>(s.g);
    const double p = static_cast<double>(s.o_i) * static_cast<double>(s.o_j) / (g * g);
    s.expected = g * p;
    const double var = g * p * (1.0 - p);
    s.z = var > 0.0 ? (s.expected - static_cast<double>(s.o_ij)) / std::sqrt(var) : 0.0;
    s.separable = static_cast<double>(s.o_ij) < s.expected;
    return s;
}

ChooseKResult choose_k(const std::vector<std::vector<std::uint8_t>>& rows, double t_m) {
    ChooseKResult r;
    const std::size_t n = rows.size();
    if (n == 0) {
        r.k = 0;
        return r;
    }
    if (n == 1) {
        r.labels = {0};
        return r;
    }
    const Matrix d = cosine_distances(rows);
    const Dendrogram dg = agglomerative(d);
    r.metric.assign(n + 1, std::numeric_limits<double>::quiet_NaN());
    bool run_tests = n <= 2;
    if (n >= 3) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 2; k <= n - 1; ++k) {
            r.metric[k] = modularity_metric(d, dg.cut(k));
            // "<=" keeps the last of equal minima, so a flat metric defers to
            // the separability tests.
            if (r.metric[k] <= best) {
                best = r.metric[k];
                r.argmin = k;
            }
        }
        run_tests = r.argmin == 2 || r.argmin == n - 1 || best > t_m;
    }
    std::size_t k = r.argmin;
    if (run_tests) {
        r.tests_run = true;
        // Test 1: the two units joined first (the only pair at the N-1 cut).
        const auto& m0 = dg.merges.front();
        const auto t1 = separability(rows[m0.a], rows[m0.b]);
        r.test1_positive = t1.separable;
        r.z_sep = t1.z;
        // Test 2: the two groups of the 2-cut, each as the OR of its members.
        const auto lab = dg.cut(2);
        std::vector<std::uint8_t> g0(rows[0].size(), 0), g1(rows[0].size(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& g = lab[i] == 0 ? g0 : g1;
            for (std::size_t c = 0; c < g.size(); ++c) g[c] |= rows[i][c];
        }
        const auto t2 = separability(g0, g1);
        r.test2_positive = !t2.separable;
        r.z_sin = -t2.z;
        if (r.test1_positive && r.test2_positive) {
            k = r.z_sin >= r.z_sep ? 1 : n;
        } else if (r.test2_positive) {
            k = 1;
        } else if (r.test1_positive) {
            k = n;
        }
    }
    r.k = k;
    r.labels = dg.cut(k);
    return r;
}

// ---------------------------------------------------------------------------

std::size_t ModuleHierarchy::module_of(UnitRef u) const {
    for (const auto& m : modules) {
        if (std::binary_search(m.units.begin(), m.units.end(), u)) return m.id;
    }
    return npos;
}

namespace {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void join(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace

ModuleHierarchy merge_layers(const std::vector<LayerClusters>& clusters, const MaskedMlp& mlp, double delta_m) {
    const std::size_t L = mlp.depth();
    const auto widths = mlp.widths();
    constexpr auto none = static_cast<std::size_t>(-1);

    // Cluster nodes: one per (layer, label).
    std::vector<std::vector<std::size_t>> node_of(L + 1);  // per layer, per unit
    for (std::size_t l = 0; l <= L; ++l) node_of[l].assign(widths[l], none);
    std::size_t n_nodes = 0;
    std::vector<std::size_t> base(L, 0), count(L, 0);
    for (const auto& lc : clusters) {
        if (lc.layer >= L) throw ValidationError("clusters are given for input and hidden layers only");
        if (lc.units.size() != lc.labels.size()) throw DimensionError("cluster labels do not match units");
        base[lc.layer] = n_nodes;
        count[lc.layer] = lc.k;
        for (std::size_t q = 0; q < lc.units.size(); ++q) {
            if (!mlp.alive(lc.layer, lc.units[q])) throw ValidationError("a clustered unit is not alive");
            node_of[lc.layer][lc.units[q]] = n_nodes + lc.labels[q];
        }
        n_nodes += lc.k;
    }
    UnionFind uf(n_nodes);
    for (std::size_t l = 0; l + 1 < L; ++l) {
        if (count[l] == 0 || count[l + 1] == 0) continue;
        Matrix e(count[l], count[l + 1]);
        const auto& W = mlp.layers[l];
        for (std::size_t v = 0; v < W.fan_out; ++v) {
            const auto nv = node_of[l + 1][v];
            if (nv == none) continue;
            for (std::size_t u = 0; u < W.fan_in; ++u) {
                const auto nu = node_of[l][u];
                if (nu == none || !W.live(v, u)) continue;
                e(nu - base[l], nv - base[l + 1]) += 1.0;
            }
        }
        std::vector<double> row(e.rows, 0.0), col(e.cols, 0.0);
        for (std::size_t i = 0; i < e.rows; ++i) {
            for (std::size_t j = 0; j < e.cols; ++j) {
                row[i] += e(i, j);
                col[j] += e(i, j);
            }
        }
        for (std::size_t i = 0; i < e.rows; ++i) {
            for (std::size_t j = 0; j < e.cols; ++j) {
                if (e(i, j) > 0 && e(i, j) / row[i] >= delta_m && e(i, j) / col[j] >= delta_m) {
                    uf.join(base[l] + i, base[l + 1] + j);
                }
            }
        }
    }

    // Group id per alive unit.
    std::vector<std::vector<std::size_t>> group(L + 1);
    std::size_t n_groups = n_nodes;
    for (std::size_t l = 0; l <= L; ++l) {
        group[l].assign(widths[l], none);
        for (std::size_t u = 0; u < widths[l]; ++u) {
            if (node_of[l][u] != none) group[l][u] = uf.find(node_of[l][u]);
        }
    }
    // Units without features join the module sending them most in-edges;
    // outputs need a delta_m share. Everything else becomes a singleton.
    for (std::size_t l = 0; l <= L; ++l) {
        for (auto u : mlp.alive_units(l)) {
            if (group[l][u] != none) continue;
            std::map<std::size_t, std::size_t> votes;
            std::size_t in_total = 0;
            if (l > 0) {
                const auto& W = mlp.layers[l - 1];
                for (auto s : mlp.alive_units(l - 1)) {
                    if (!W.live(u, s) || group[l - 1][s] == none) continue;
                    ++votes[group[l - 1][s]];
                    ++in_total;
                }
            }
            std::size_t pick = none, best = 0;
            for (const auto& [gid, c] : votes) {
                if (c > best) {
                    best = c;
                    pick = gid;
                }
            }
            if (l == L && pick != none &&
                static_cast<double>(best) < delta_m * static_cast<double>(in_total)) {
                pick = none;
            }
            group[l][u] = pick != none ? pick : n_groups++;
        }
    }

    // Uses between groups, then merge groups on a common cycle.
    std::vector<std::set<std::size_t>> out(n_groups);
    for (std::size_t l = 0; l < L; ++l) {
        const auto& W = mlp.layers[l];
        for (auto u : mlp.alive_units(l)) {
            for (auto v : mlp.alive_units(l + 1)) {
                if (W.live(v, u) && group[l][u] != group[l + 1][v]) out[group[l][u]].insert(group[l + 1][v]);
            }
        }
    }
    std::vector<std::vector<std::uint8_t>> reach(n_groups, std::vector<std::uint8_t>(n_groups, 0));
    for (std::size_t s = 0; s < n_groups; ++s) {
        std::vector<std::size_t> stack(out[s].begin(), out[s].end());
        while (!stack.empty()) {
            const auto x = stack.back();
            stack.pop_back();
            if (reach[s][x]) continue;
            reach[s][x] = 1;
            for (auto y : out[x]) stack.push_back(y);
        }
    }
    UnionFind scc(n_groups);
    for (std::size_t a = 0; a < n_groups; ++a) {
        for (std::size_t b = a + 1; b < n_groups; ++b) {
            if (reach[a][b] && reach[b][a]) scc.join(a, b);
        }
    }

    // Canonical module numbering by first member (layer, unit).
    std::map<std::size_t, std::vector<UnitRef>> members;
    for (std::size_t l = 0; l <= L; ++l) {
        for (auto u : mlp.alive_units(l)) members[scc.find(group[l][u])].push_back({l, u});
    }
    std::vector<std::pair<UnitRef, std::size_t>> order;
    for (auto& [gid, us] : members) {
        std::sort(us.begin(), us.end());
        order.push_back({us.front(), gid});
    }
    std::sort(order.begin(), order.end());
    std::map<std::size_t, std::size_t> id_of;
    ModuleHierarchy h;
    h.depth = L;
    h.clusters = clusters;
    for (const auto& [first, gid] : order) {
        FoundModule m;
        m.id = h.modules.size();
        m.units = members[gid];
        m.level = m.units.front().layer;
        for (const auto& ur : m.units) {
            if (ur.layer == 0) m.inputs.insert(ur.unit);
            if (ur.layer == L) m.outputs.insert(ur.unit);
        }
        id_of[gid] = m.id;
        h.modules.push_back(std::move(m));
    }
    std::set<std::pair<std::size_t, std::size_t>> uses;
    for (std::size_t s = 0; s < n_groups; ++s) {
        for (auto t : out[s]) {
            const auto a = id_of.at(scc.find(s)), b = id_of.at(scc.find(t));
            if (a != b) uses.insert({a, b});
        }
    }
    h.uses.assign(uses.begin(), uses.end());
    return h;
}

ModuleHierarchy detect(const MaskedMlp& mlp, double t_m, double delta_m) {
    if (mlp.layers.empty()) throw DimensionError("network has no layers");
    std::vector<LayerClusters> clusters;
    for (std::size_t l = 0; l < mlp.depth(); ++l) {
        const auto fm = reachability_features(mlp, l);
        LayerClusters lc;
        lc.layer = l;
        std::vector<std::vector<std::uint8_t>> rows;
        for (std::size_t q = 0; q < fm.units.size(); ++q) {
            if (std::any_of(fm.rows[q].begin(), fm.rows[q].end(), [](auto b) { return b != 0; })) {
                lc.units.push_back(fm.units[q]);
                rows.push_back(fm.rows[q]);
            }
        }
        const auto ck = choose_k(rows, t_m);
        lc.k = ck.k;
        lc.labels = ck.labels;
        clusters.push_back(std::move(lc));
    }
    return merge_layers(clusters, mlp, delta_m);
}

json to_json(const ModuleHierarchy& h) {
    json mods = json::array();
    for (const auto& m : h.modules) {
        json units = json::array();
        for (const auto& u : m.units) units.push_back({u.layer, u.unit});
        mods.push_back({{"id", m.id},
                        {"level", m.level},
                        {"units", units},
                        {"inputs", std::vector<std::size_t>(m.inputs.begin(), m.inputs.end())},
                        {"outputs", std::vector<std::size_t>(m.outputs.begin(), m.outputs.end())}});
    }
    json uses = json::array();
    for (const auto& [a, b] : h.uses) uses.push_back({a, b});
    json clusters = json::array();
    for (const auto& c : h.clusters) {
        clusters.push_back({{"layer", c.layer}, {"units", c.units}, {"labels", c.labels}, {"k", c.k}});
    }
    return json{{"depth", h.depth}, {"modules", mods}, {"uses", uses}, {"clusters", clusters}};
}

ModuleHierarchy hierarchy_from_json(const json& j) {
    try {
        ModuleHierarchy h;
        h.depth = j.at("depth").get<std::size_t>();
        for (const auto& jm : j.at("modules")) {
            FoundModule m;
            m.id = jm.at("id").get<std::size_t>();
            m.level = jm.at("level").get<std::size_t>();
            for (const auto& u : jm.at("units")) m.units.push_back({u.at(0).get<std::size_t>(), u.at(1).get<std::size_t>()});
            std::sort(m.units.begin(), m.units.end());
            for (auto i : jm.at("inputs")) m.inputs.insert(i.get<std::size_t>());
            for (auto o : jm.at("outputs")) m.outputs.insert(o.get<std::size_t>());
            if (m.id != h.modules.size()) throw FormatError("module ids must be dense and ordered");
            h.modules.push_back(std::move(m));
        }
        for (const auto& u : j.at("uses")) {
            const auto a = u.at(0).get<std::size_t>(), b = u.at(1).get<std::size_t>();
            if (a >= h.modules.size() || b >= h.modules.size()) throw FormatError("uses edge names an unknown module");
            h.uses.push_back({a, b});
        }
        if (j.contains("clusters")) {
            for (const auto& c : j.at("clusters")) {
                LayerClusters lc;
                lc.layer = c.at("layer").get<std::size_t>();
                lc.units = c.at("units").get<std::vector<std::size_t>>();
                lc.labels = c.at("labels").get<std::vector<std::size_t>>();
                lc.k = c.at("k").get<std::size_t>();
                h.clusters.push_back(std::move(lc));
            }
        }
        return h;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed hierarchy: ") + e.what());
    }
}

}  // namespace nsculpt

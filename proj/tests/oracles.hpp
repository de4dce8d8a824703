#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance runner. None of these call the library kernels they check.

#include "nsculpt/matrix.hpp"
#include "nsculpt/mlp.hpp"
#include "nsculpt/module_detection.hpp"
#include "nsculpt/path_analysis.hpp"
#include "nsculpt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <set>
#include <vector>

namespace oracle {

using nsculpt::MaskedMlp;
using nsculpt::Matrix;

// Random masked net with 1..max_weight_layers weight layers and 1..max_width
// units per layer. About `mask_rate` of the edges are masked; hidden units
// are killed with probability `kill_rate`.
inline MaskedMlp random_net(std::uint64_t seed, std::size_t max_weight_layers = 4, std::size_t max_width = 5,
                            double mask_rate = 0.3, double kill_rate = 0.0) {
    nsculpt::Stream r(nsculpt::derive_key(seed, 0xACE));
    nsculpt::MlpConfig cfg;
    const std::size_t L = 1 + r.below(max_weight_layers);
    for (std::size_t l = 0; l <= L; ++l) cfg.layer_widths.push_back(1 + r.below(max_width));
    cfg.seed = seed;
    auto mlp = nsculpt::init(cfg);
    for (auto& layer : mlp.layers) {
        for (auto& b : layer.bias) b = 0.3 * r.normal();
    }
    for (std::size_t l = 0; l < mlp.depth(); ++l) {
        auto& W = mlp.layers[l];
        for (std::size_t o = 0; o < W.fan_out; ++o) {
            for (std::size_t i = 0; i < W.fan_in; ++i) {
                if (r.uniform() < mask_rate) mlp.mask_edge(l, o, i);
            }
        }
    }
    for (std::size_t layer = 1; layer <= mlp.hidden_layers(); ++layer) {
        for (std::size_t u = 0; u < mlp.unit_alive[layer - 1].size(); ++u) {
            if (r.uniform() < kill_rate) mlp.kill_unit(layer, u);
        }
    }
    return mlp;
}

// pi(j, i) by enumerating every input-to-output path one edge at a time.
inline Matrix enumerate_paths(const MaskedMlp& mlp) {
    const auto widths = mlp.widths();
    const std::size_t L = mlp.depth();
    Matrix pi(widths.back(), widths.front());
    std::function<void(std::size_t, std::size_t, std::size_t, double)> walk =
        [&](std::size_t start, std::size_t layer, std::size_t unit, double prod) {
            if (layer == L) {
                pi(unit, start) += prod;
                return;
            }
            const auto& W = mlp.layers[layer];
            for (std::size_t next = 0; next < W.fan_out; ++next) {
                if (!W.live(next, unit)) continue;
                walk(start, layer + 1, next, prod * std::abs(W.w(next, unit)));
            }
        };
    for (std::size_t i = 0; i < widths.front(); ++i) walk(i, 0, i, 1.0);
    return pi;
}

// Set of (layer, unit) reachable from `start` by depth-first search over
// live edges between alive units.
inline std::set<nsculpt::UnitRef> dfs_reach(const MaskedMlp& mlp, nsculpt::UnitRef start) {
    std::set<nsculpt::UnitRef> seen;
    std::vector<nsculpt::UnitRef> stack{start};
    while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        if (u.layer >= mlp.depth()) continue;
        const auto& W = mlp.layers[u.layer];
        for (std::size_t v = 0; v < W.fan_out; ++v) {
            if (!W.live(v, u.unit) || !mlp.alive(u.layer + 1, v)) continue;
            const nsculpt::UnitRef next{u.layer + 1, v};
            if (seen.insert(next).second) stack.push_back(next);
        }
    }
    return seen;
}

// Plain forward pass over every unit (dead units have zero weights and bias).
// Optionally multiplies the activation of one hidden unit by `scale`.
inline Matrix naive_logits(const MaskedMlp& mlp, const Matrix& x, std::size_t scale_layer = 0,
                           std::size_t scale_unit = 0, double scale = 1.0) {
    Matrix a = x;
    for (std::size_t l = 0; l < mlp.depth(); ++l) {
        const auto& W = mlp.layers[l];
        Matrix z(a.rows, W.fan_out);
        for (std::size_t b = 0; b < a.rows; ++b) {
            for (std::size_t o = 0; o < W.fan_out; ++o) {
                double s = W.bias[o];
                for (std::size_t i = 0; i < W.fan_in; ++i) {
                    if (W.live(o, i)) s += W.w(o, i) * a(b, i);
                }
                const bool hidden = l + 1 < mlp.depth();
                double v = hidden ? std::max(0.0, s) : s;
                if (hidden && l + 1 == scale_layer && o == scale_unit) v *= scale;
                z(b, o) = v;
            }
        }
        a = std::move(z);
    }
    return a;
}

// Mean over rows of the summed per-bit cross-entropy, computed from sigmoid
// probabilities directly.
inline double naive_loss(const Matrix& logits, const Matrix& y) {
    double s = 0.0;
    for (std::size_t k = 0; k < logits.data.size(); ++k) {
        const double z = logits.data[k];
        // log(sigmoid(z)) and log(1 - sigmoid(z)) without overflow
        const double log_p = z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
        const double log_q = z >= 0 ? -z - std::log1p(std::exp(-z)) : -std::log1p(std::exp(z));
        s -= y.data[k] * log_p + (1.0 - y.data[k]) * log_q;
    }
    return s / static_cast<double>(logits.rows);
}

// Eq. 2 straight from its definition on a label vector.
inline double modularity(const Matrix& d, const std::vector<std::size_t>& labels) {
    const std::size_t n = d.rows;
    std::size_t k = 0;
    for (auto l : labels) k = std::max(k, l + 1);
    double total = 0.0;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            if (a != b) total += d(a, b);
    if (total == 0.0) return 0.0;
    std::vector<std::vector<double>> A(k, std::vector<double>(k, 0.0));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            if (a != b) A[labels[a]][labels[b]] += d(a, b) / total;
    double m = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) row += A[i][j];
        m += A[i][i] - row * row;
    }
    return m;
}

struct PartitionMin {
    double value = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> labels;
};

// Visits every set partition of {0..n-1} (restricted growth strings) with a
// block count in [k_lo, k_hi] and keeps the smallest value of `metric`.
// Ties keep the first partition visited.
inline PartitionMin exhaustive_min(std::size_t n, std::size_t k_lo, std::size_t k_hi,
                                   const std::function<double(const std::vector<std::size_t>&)>& metric) {
    PartitionMin best;
    std::vector<std::size_t> lab(n, 0);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t blocks) {
        if (i == n) {
            if (blocks < k_lo || blocks > k_hi) return;
            const double v = metric(lab);
            if (v < best.value) {
                best.value = v;
                best.labels = lab;
            }
            return;
        }
        for (std::size_t c = 0; c <= blocks && c < k_hi; ++c) {
            lab[i] = c;
            rec(i + 1, std::max(blocks, c + 1));
        }
    };
    rec(0, 0);
    return best;
}

// Random symmetric distance matrix in [0, 1) with zero diagonal.
inline Matrix random_distances(std::uint64_t seed, std::size_t n) {
    nsculpt::Stream r(nsculpt::derive_key(seed, 0xD157));
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = r.uniform();
    return d;
}

struct WelchFixture {
    std::vector<double> a, b;
    nsculpt::Alternative alternative;
    double t, dof, p;
};

inline const std::vector<WelchFixture>& welch_fixtures() {
    using nsculpt::Alternative;
    static const std::vector<WelchFixture> fx{
#include "welch_fixtures.inc"
    };
    return fx;
}

}  // namespace oracle

#include "nsculpt/path_analysis.hpp"

#include "nsculpt/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nsculpt {

Matrix abs_weight_product(const MaskedMlp& mlp, std::size_t from, std::size_t to) {
    const auto w = mlp.widths();
    if (from > to || to >= w.size()) throw DimensionError("invalid layer range for weight product");
    Matrix r(w[from], w[from]);
    for (std::size_t i = 0; i < w[from]; ++i) r(i, i) = 1.0;
    for (std::size_t l = from; l < to; ++l) {
        const auto& L = mlp.layers[l];
        Matrix next(L.fan_out, r.cols);
        for (std::size_t j = 0; j < L.fan_out; ++j) {
            for (std::size_t k = 0; k < L.fan_in; ++k) {
                if (!L.live(j, k)) continue;
                const double a = std::abs(L.w(j, k));
                if (a == 0.0) continue;
                for (std::size_t c = 0; c < r.cols; ++c) next(j, c) += a * r(k, c);
            }
        }
        r = std::move(next);
    }
    return r;
}

Matrix path_product_matrix(const MaskedMlp& mlp) {
    if (mlp.layers.empty()) throw DimensionError("network has no layers");
    return abs_weight_product(mlp, 0, mlp.depth());
}

namespace {

// Continued fraction for I_x(a, b) (modified Lentz).
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 1000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
    if (!(dof > 0.0)) throw ValidationError("Student t needs positive degrees of freedom");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    // Lower tail mass for |t|, computed in whichever form avoids cancellation.
    const double t2 = t * t;
    double tail;
    if (t2 < dof) {
        // I_{t^2/(dof+t^2)}(1/2, dof/2) is the two-sided central mass.
        tail = 0.5 * (1.0 - incomplete_beta(0.5, 0.5 * dof, t2 / (dof + t2)));
    } else {
        tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, dof / (dof + t2));
    }
    return t < 0 ? tail : 1.0 - tail;
}

WelchResult welch_test(std::span<const double> x, std::span<const double> y, Alternative alternative) {
    if (x.size() < 2 || y.size() < 2) throw ArityError("Welch test needs at least two values per sample");
    auto moments = [](std::span<const double> s, double& mean, double& var) {
        mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
        double ss = 0.0;
        for (double v : s) ss += (v - mean) * (v - mean);
        var = ss / static_cast<double>(s.size() - 1);
    };
    WelchResult r;
    double v1, v2;
    moments(x, r.mean1, v1);
    moments(y, r.mean2, v2);
    r.s1 = std::sqrt(v1);
    r.s2 = std::sqrt(v2);
    const double n1 = static_cast<double>(x.size()), n2 = static_cast<double>(y.size());
    const double a = v1 / n1, b = v2 / n2;
    const double se2 = a + b;
    const double diff = r.mean1 - r.mean2;
    if (se2 == 0.0) {
        r.dof = 0.0;
        if (diff == 0.0) {
            r.t_stat = 0.0;
            r.p_value = alternative == Alternative::TwoSided ? 1.0 : 0.5;
            return r;
        }
        r.t_stat = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        switch (alternative) {
            case Alternative::Less: r.p_value = diff < 0 ? 0.0 : 1.0; break;
            case Alternative::Greater: r.p_value = diff > 0 ? 0.0 : 1.0; break;
            case Alternative::TwoSided: r.p_value = 0.0; break;
        }
        return r;
    }
    r.t_stat = diff / std::sqrt(se2);
    r.dof = se2 * se2 / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
    switch (alternative) {
        case Alternative::Less: r.p_value = student_t_cdf(r.t_stat, r.dof); break;
        case Alternative::Greater: r.p_value = student_t_cdf(-r.t_stat, r.dof); break;
        case Alternative::TwoSided: r.p_value = std::min(1.0, 2.0 * student_t_cdf(-std::abs(r.t_stat), r.dof)); break;
    }
    return r;
}

SeparabilityTest input_separability_test(const Matrix& pi, const std::vector<std::size_t>& inputs,
                                         const std::vector<std::size_t>& own, const std::vector<std::size_t>& other,
                                         double alpha) {
    if (inputs.empty() || own.empty() || other.empty()) throw ValidationError("index sets must be nonempty");
    for (auto j : own) {
        if (std::find(other.begin(), other.end(), j) != other.end()) {
            throw ValidationError("own and other output sets overlap");
        }
    }
    auto collect = [&](const std::vector<std::size_t>& outs) {
        std::vector<double> s;
        for (auto i : inputs) {
            for (auto j : outs) {
                if (i >= pi.cols || j >= pi.rows) throw DimensionError("index outside the path-product matrix");
                s.push_back(pi(j, i));
            }
        }
        return s;
    };
    const auto s1 = collect(other);
    const auto s2 = collect(own);
    SeparabilityTest t;
    t.result = welch_test(s1, s2, Alternative::Less);
    t.reject = t.result.p_value < alpha;
    return t;
}

SeparabilityTest input_separability_test(const MaskedMlp& mlp, const std::vector<std::size_t>& inputs,
                                         const std::vector<std::size_t>& own, const std::vector<std::size_t>& other,
                                         double alpha) {
    return input_separability_test(path_product_matrix(mlp), inputs, own, other, alpha);
}

CoverageResult layer_coverage(const MaskedMlp& mlp, std::size_t layer, double percent) {
    if (layer < 1 || layer > mlp.hidden_layers()) throw DimensionError("coverage needs a hidden layer");
    if (!(percent > 0.0 && percent <= 100.0)) throw ValidationError("coverage percent must lie in (0, 100]");
    CoverageResult r;
    r.layer = layer;
    r.percent = percent;
    const Matrix down = abs_weight_product(mlp, layer, mlp.depth());
    for (auto u : mlp.alive_units(layer)) {
        double c = 0.0;
        for (std::size_t j = 0; j < down.rows; ++j) c += down(j, u);
        r.units.push_back(u);
        r.contributions.push_back(c);
    }
    std::vector<std::size_t> order(r.units.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return r.contributions[a] > r.contributions[b]; });
    std::vector<std::size_t> units;
    std::vector<double> contrib;
    for (auto k : order) {
        units.push_back(r.units[k]);
        contrib.push_back(r.contributions[k]);
    }
    r.units = std::move(units);
    r.contributions = std::move(contrib);
    const double total = std::accumulate(r.contributions.begin(), r.contributions.end(), 0.0);
    if (total <= 0.0) return r;
    const double goal = percent / 100.0 * total * (1.0 - 1e-12);
    double run = 0.0;
    for (std::size_t k = 0; k < r.contributions.size(); ++k) {
        run += r.contributions[k];
        if (run >= goal) {
            r.n_units = k + 1;
            break;
        }
    }
    if (r.n_units == 0) r.n_units = r.contributions.size();
    return r;
}

CsvTable path_product_csv(const Matrix& pi) {
    CsvTable t({"input", "output", "value"});
    for (std::size_t i = 0; i < pi.cols; ++i) {
        for (std::size_t j = 0; j < pi.rows; ++j) {
            t.add({std::to_string(i), std::to_string(j), format_double(pi(j, i))});
        }
    }
    return t;
}

CsvTable coverage_csv(const std::vector<CoverageResult>& cs) {
    CsvTable t({"layer", "rank", "unit", "contribution"});
    for (const auto& c : cs) {
        for (std::size_t k = 0; k < c.units.size(); ++k) {
            t.add({std::to_string(c.layer), std::to_string(k + 1), std::to_string(c.units[k]),
                   format_double(c.contributions[k])});
        }
    }
    return t;
}

}  // namespace nsculpt

#include "nsculpt/mlp.hpp"

#include "nsculpt/error.hpp"
#include "nsculpt/rng.hpp"

#include <algorithm>
#include <cmath>

namespace nsculpt {

using nlohmann::json;

void MlpConfig::validate() const {
    if (layer_widths.size() < 2) throw ValidationError("an MLP needs at least input and output widths");
    for (auto w : layer_widths) {
        if (w < 1) throw ValidationError("layer widths must be >= 1");
    }
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
    if (!(l2 >= 0.0)) throw ValidationError("L2 coefficient must be non-negative");
    if (!(accuracy_threshold >= 0.0 && accuracy_threshold <= 1.0)) {
        throw ValidationError("accuracy threshold must lie in [0, 1]");
    }
}

std::vector<std::size_t> MaskedMlp::widths() const {
    std::vector<std::size_t> w;
    if (layers.empty()) return w;
    w.push_back(layers.front().fan_in);
    for (const auto& l : layers) w.push_back(l.fan_out);
    return w;
}

bool MaskedMlp::alive(std::size_t layer, std::size_t unit) const {
    if (layer == 0 || layer == layers.size()) return true;
    return unit_alive.at(layer - 1).at(unit) != 0;
}

std::vector<std::size_t> MaskedMlp::alive_units(std::size_t layer) const {
    const std::size_t width = layer == 0 ? layers.front().fan_in : layers.at(layer - 1).fan_out;
    std::vector<std::size_t> r;
    r.reserve(width);
    for (std::size_t u = 0; u < width; ++u) {
        if (alive(layer, u)) r.push_back(u);
    }
    return r;
}

void MaskedMlp::mask_edge(std::size_t l, std::size_t out, std::size_t in) {
    auto& L = layers.at(l);
    const auto k = out * L.fan_in + in;
    L.mask.at(k) = 0;
    L.weight[k] = 0.0;
    L.m_weight[k] = 0.0;
    L.v_weight[k] = 0.0;
}

void MaskedMlp::kill_unit(std::size_t layer, std::size_t unit) {
    if (layer == 0 || layer >= layers.size()) throw ValidationError("only hidden units can be pruned");
    unit_alive.at(layer - 1).at(unit) = 0;
    auto& in = layers[layer - 1];
    for (std::size_t i = 0; i < in.fan_in; ++i) mask_edge(layer - 1, unit, i);
    in.bias[unit] = 0.0;
    in.m_bias[unit] = 0.0;
    in.v_bias[unit] = 0.0;
    auto& out = layers[layer];
    for (std::size_t j = 0; j < out.fan_out; ++j) mask_edge(layer, j, unit);
}

std::size_t MaskedMlp::weight_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size();
    return n;
}

std::size_t MaskedMlp::unmasked_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(std::count(l.mask.begin(), l.mask.end(), 1));
    return n;
}

std::size_t MaskedMlp::hidden_unit_count() const noexcept {
    std::size_t n = 0;
    for (const auto& a : unit_alive) n += a.size();
    return n;
}

std::size_t MaskedMlp::alive_hidden_count() const noexcept {
    std::size_t n = 0;
    for (const auto& a : unit_alive) n += static_cast<std::size_t>(std::count(a.begin(), a.end(), 1));
    return n;
}

double MaskedMlp::edge_density() const noexcept {
    const auto a = weight_count();
    return a == 0 ? 0.0 : static_cast<double>(unmasked_count()) / static_cast<double>(a);
}

MaskedMlp init(const MlpConfig& cfg) {
    cfg.validate();
    MaskedMlp mlp;
    mlp.seed = cfg.seed;
    const auto& w = cfg.layer_widths;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        DenseLayer L;
        L.fan_in = w[l];
        L.fan_out = w[l + 1];
        const std::size_t n = L.fan_in * L.fan_out;
        L.weight.resize(n);
        Stream rng(derive_key(cfg.seed, 0x696E6974ULL, l));
        const double sd = std::sqrt(2.0 / static_cast<double>(L.fan_in));
        for (auto& x : L.weight) x = sd * rng.normal();
        L.bias.assign(L.fan_out, 0.0);
        L.mask.assign(n, 1);
        L.m_weight.assign(n, 0.0);
        L.v_weight.assign(n, 0.0);
        L.m_bias.assign(L.fan_out, 0.0);
        L.v_bias.assign(L.fan_out, 0.0);
        mlp.layers.push_back(std::move(L));
    }
    for (std::size_t l = 1; l + 1 < w.size(); ++l) mlp.unit_alive.emplace_back(w[l], 1);
    return mlp;
}

// ---------------------------------------------------------------------------
// Kernels. Loops run over alive units only; a dead unit's activation is
// exactly zero and all of its weights are masked, so skipping it changes no
// sum.

namespace {

struct Topology {
    std::vector<std::vector<std::size_t>> alive;  // per width-layer
};

Topology topology(const MaskedMlp& mlp) {
    Topology t;
    for (std::size_t l = 0; l <= mlp.depth(); ++l) t.alive.push_back(mlp.alive_units(l));
    return t;
}

void check_input(const MaskedMlp& mlp, const Matrix& x) {
    if (mlp.layers.empty()) throw DimensionError("empty network");
    if (x.cols != mlp.layers.front().fan_in) {
        throw DimensionError("input width " + std::to_string(x.cols) + " does not match network input " +
                             std::to_string(mlp.layers.front().fan_in));
    }
}

void forward_into(const MaskedMlp& mlp, const Topology& topo, const Matrix& x, ForwardPass& fp) {
    const std::size_t L = mlp.depth();
    const std::size_t B = x.rows;
    fp.pre.resize(L + 1);
    fp.post.resize(L + 1);
    fp.post[0] = x;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& layer = mlp.layers[l];
        auto& z = fp.pre[l + 1];
        auto& a = fp.post[l + 1];
        z.rows = B;
        z.cols = layer.fan_out;
        z.data.assign(B * layer.fan_out, 0.0);
        const auto& in = fp.post[l];
        const bool last = l + 1 == L;
        for (std::size_t b = 0; b < B; ++b) {
            const double* xr = in.data.data() + b * layer.fan_in;
            double* zr = z.data.data() + b * layer.fan_out;
            for (auto j : topo.alive[l + 1]) {
                const double* wr = layer.weight.data() + j * layer.fan_in;
                const std::uint8_t* mr = layer.mask.data() + j * layer.fan_in;
                double s = layer.bias[j];
                for (auto i : topo.alive[l]) {
                    if (mr[i]) s += wr[i] * xr[i];
                }
                zr[j] = s;
            }
        }
        a = z;
        if (!last) {
            // NaN passes through so divergence surfaces in the loss
            for (auto& v : a.data) v = v < 0.0 ? 0.0 : v;
        }
    }
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Backward pass of mean-over-rows BCE. Fills weight/bias gradients (masked
// positions stay 0) and, when `dpost` is non-null, the gradient with respect
// to each width-layer's post-activation.
void backward(const MaskedMlp& mlp, const Topology& topo, const ForwardPass& fp, const Matrix& targets,
              Gradients& g, std::vector<Matrix>* dpost) {
    const std::size_t L = mlp.depth();
    const std::size_t B = targets.rows;
    g.weight.resize(L);
    g.bias.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        g.weight[l].assign(mlp.layers[l].weight.size(), 0.0);
        g.bias[l].assign(mlp.layers[l].fan_out, 0.0);
    }
    if (dpost) dpost->assign(L + 1, Matrix());

    Matrix dz(B, mlp.layers.back().fan_out);
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t k = 0; k < dz.data.size(); ++k) {
        dz.data[k] = (sigmoid(fp.post[L].data[k]) - targets.data[k]) * inv_b;
    }
    for (std::size_t l = L; l-- > 0;) {
        const auto& layer = mlp.layers[l];
        const auto& a_in = fp.post[l];
        auto& gw = g.weight[l];
        auto& gb = g.bias[l];
        for (std::size_t b = 0; b < B; ++b) {
            const double* dr = dz.data.data() + b * layer.fan_out;
            const double* xr = a_in.data.data() + b * layer.fan_in;
            for (auto j : topo.alive[l + 1]) {
                const double d = dr[j];
                gb[j] += d;
                double* gr = gw.data() + j * layer.fan_in;
                const std::uint8_t* mr = layer.mask.data() + j * layer.fan_in;
                for (auto i : topo.alive[l]) {
                    if (mr[i]) gr[i] += d * xr[i];
                }
            }
        }
        if (l == 0 && !dpost) break;
        Matrix da(B, layer.fan_in);
        for (std::size_t b = 0; b < B; ++b) {
            const double* dr = dz.data.data() + b * layer.fan_out;
            double* ar = da.data.data() + b * layer.fan_in;
            for (auto j : topo.alive[l + 1]) {
                const double d = dr[j];
                const double* wr = layer.weight.data() + j * layer.fan_in;
                for (auto i : topo.alive[l]) ar[i] += wr[i] * d;
            }
        }
        if (l > 0) {
            Matrix dprev(B, layer.fan_in);
            const auto& zin = fp.pre[l];
            for (std::size_t k = 0; k < da.data.size(); ++k) dprev.data[k] = zin.data[k] > 0.0 ? da.data[k] : 0.0;
            dz = std::move(dprev);
        }
        if (dpost) (*dpost)[l] = std::move(da);
    }
}

void adam_step(MaskedMlp& mlp, const Gradients& g, const MlpConfig& cfg) {
    ++mlp.adam_step;
    const double t = static_cast<double>(mlp.adam_step);
    const double c1 = 1.0 - std::pow(kAdamBeta1, t);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t);
    for (std::size_t l = 0; l < mlp.depth(); ++l) {
        auto& L = mlp.layers[l];
        const auto& gw = g.weight[l];
        for (std::size_t k = 0; k < L.weight.size(); ++k) {
            if (!L.mask[k]) continue;
            const double grad = gw[k] + cfg.l2 * L.weight[k];
            L.m_weight[k] = kAdamBeta1 * L.m_weight[k] + (1.0 - kAdamBeta1) * grad;
            L.v_weight[k] = kAdamBeta2 * L.v_weight[k] + (1.0 - kAdamBeta2) * grad * grad;
            L.weight[k] -= cfg.lr * (L.m_weight[k] / c1) / (std::sqrt(L.v_weight[k] / c2) + kAdamEps);
        }
        const bool output_layer = l + 1 == mlp.depth();
        for (std::size_t j = 0; j < L.fan_out; ++j) {
            if (!output_layer && !mlp.unit_alive[l][j]) continue;
            const double grad = g.bias[l][j];
            L.m_bias[j] = kAdamBeta1 * L.m_bias[j] + (1.0 - kAdamBeta1) * grad;
            L.v_bias[j] = kAdamBeta2 * L.v_bias[j] + (1.0 - kAdamBeta2) * grad * grad;
            L.bias[j] -= cfg.lr * (L.m_bias[j] / c1) / (std::sqrt(L.v_bias[j] / c2) + kAdamEps);
        }
    }
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
    Matrix r(end - begin, m.cols);
    std::copy(m.data.begin() + static_cast<std::ptrdiff_t>(begin * m.cols),
              m.data.begin() + static_cast<std::ptrdiff_t>(end * m.cols), r.data.begin());
    return r;
}

void check_dims(const MaskedMlp& mlp, const TruthTable& table) {
    const auto w = mlp.widths();
    if (w.empty() || w.front() != table.n_inputs || w.back() != table.n_outputs) {
        throw DimensionError("network widths do not match the truth table");
    }
}

}  // namespace

ForwardPass forward(const MaskedMlp& mlp, const Matrix& inputs) {
    check_input(mlp, inputs);
    ForwardPass fp;
    forward_into(mlp, topology(mlp), inputs, fp);
    return fp;
}

double bce_loss(const Matrix& logits, const Matrix& targets) {
    if (logits.rows != targets.rows || logits.cols != targets.cols) throw DimensionError("logit/target shape mismatch");
    if (logits.rows == 0) return 0.0;
    double s = 0.0;
    for (std::size_t k = 0; k < logits.data.size(); ++k) {
        s += softplus(logits.data[k]) - targets.data[k] * logits.data[k];
    }
    return s / static_cast<double>(logits.rows);
}

double loss_and_gradients(const MaskedMlp& mlp, const DataView& data, Gradients& grads) {
    check_input(mlp, data.inputs);
    const auto topo = topology(mlp);
    ForwardPass fp;
    forward_into(mlp, topo, data.inputs, fp);
    backward(mlp, topo, fp, data.targets, grads, nullptr);
    return bce_loss(fp.logits(), data.targets);
}

TrainHistory train(MaskedMlp& mlp, const TruthTable& table, const NoiseConfig& noise, const MlpConfig& cfg) {
    cfg.validate();
    check_dims(mlp, table);
    TrainHistory hist;
    const auto topo = topology(mlp);
    const auto val = validation_view(table);
    ForwardPass fp;
    Gradients g;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto epoch = noisy_epoch(table, noise, mlp.epochs_seen);
        ++mlp.epochs_seen;
        double total = 0.0;
        for (std::size_t begin = 0; begin < epoch.rows(); begin += cfg.batch_size) {
            const std::size_t end = std::min(epoch.rows(), begin + cfg.batch_size);
            const auto xb = slice_rows(epoch.inputs, begin, end);
            const auto yb = slice_rows(epoch.targets, begin, end);
            forward_into(mlp, topo, xb, fp);
            const double loss = bce_loss(fp.logits(), yb);
            if (!std::isfinite(loss)) throw DivergenceError(e);
            total += loss * static_cast<double>(end - begin);
            backward(mlp, topo, fp, yb, g, nullptr);
            adam_step(mlp, g, cfg);
        }
        hist.loss.push_back(epoch.rows() ? total / static_cast<double>(epoch.rows()) : 0.0);
        forward_into(mlp, topo, val.inputs, fp);
        hist.accuracy.push_back(bitwise_accuracy(fp.logits(), val.targets));
    }
    return hist;
}

double bitwise_accuracy(const Matrix& logits, const Matrix& targets) {
    if (logits.rows != targets.rows || logits.cols != targets.cols) throw DimensionError("logit/target shape mismatch");
    if (logits.data.empty()) return 1.0;
    std::size_t hit = 0;
    for (std::size_t k = 0; k < logits.data.size(); ++k) {
        const bool pred = logits.data[k] > 0.0;  // sigmoid(z) > 0.5
        hit += pred == (targets.data[k] > 0.5);
    }
    return static_cast<double>(hit) / static_cast<double>(logits.data.size());
}

double bitwise_accuracy(const MaskedMlp& mlp, const DataView& validation) {
    return bitwise_accuracy(forward(mlp, validation.inputs).logits(), validation.targets);
}

std::vector<std::vector<double>> loss_sensitivity_scores(const MaskedMlp& mlp, const DataView& validation,
                                                         SensitivityAggregation aggregation) {
    check_input(mlp, validation.inputs);
    const auto topo = topology(mlp);
    ForwardPass fp;
    forward_into(mlp, topo, validation.inputs, fp);
    Gradients g;
    std::vector<Matrix> dpost;
    backward(mlp, topo, fp, validation.targets, g, &dpost);

    std::vector<std::vector<double>> scores;
    for (std::size_t h = 0; h < mlp.hidden_layers(); ++h) {
        const std::size_t layer = h + 1;
        const auto& a = fp.post[layer];
        const auto& da = dpost[layer];
        std::vector<double> s(mlp.unit_alive[h].size(), 0.0);
        for (auto u : topo.alive[layer]) {
            double acc = 0.0;
            for (std::size_t b = 0; b < a.rows; ++b) {
                const double prod = da(b, u) * a(b, u);
                acc += aggregation == SensitivityAggregation::MeanThenAbs ? prod : std::abs(prod);
            }
            // dpost already carries the 1/rows factor of the mean loss.
            s[u] = std::abs(acc);
        }
        scores.push_back(std::move(s));
    }
    return scores;
}

std::size_t remove_dead_ends(MaskedMlp& mlp) {
    std::size_t removed = 0;
    for (std::size_t layer = mlp.hidden_layers(); layer >= 1; --layer) {
        const auto& out = mlp.layers[layer];
        for (std::size_t u = 0; u < out.fan_in; ++u) {
            if (!mlp.alive(layer, u)) continue;
            bool has_out = false;
            for (std::size_t j = 0; j < out.fan_out && !has_out; ++j) has_out = out.live(j, u);
            if (!has_out) {
                mlp.kill_unit(layer, u);
                ++removed;
            }
        }
    }
    return removed;
}

// ---------------------------------------------------------------------------

json to_json(const MaskedMlp& mlp) {
    json layers = json::array();
    for (const auto& L : mlp.layers) {
        layers.push_back({{"fan_in", L.fan_in},
                          {"fan_out", L.fan_out},
                          {"weight", L.weight},
                          {"bias", L.bias},
                          {"mask", L.mask},
                          {"adam_m_weight", L.m_weight},
                          {"adam_v_weight", L.v_weight},
                          {"adam_m_bias", L.m_bias},
                          {"adam_v_bias", L.v_bias}});
    }
    return json{{"format", "nsculpt-checkpoint/1"},
                {"widths", mlp.widths()},
                {"seed", mlp.seed},
                {"adam_step", mlp.adam_step},
                {"epochs_seen", mlp.epochs_seen},
                {"unit_alive", mlp.unit_alive},
                {"layers", layers}};
}

MaskedMlp mlp_from_json(const json& j) {
    try {
        MaskedMlp mlp;
        mlp.seed = j.at("seed").get<std::uint64_t>();
        mlp.adam_step = j.at("adam_step").get<std::uint64_t>();
        mlp.epochs_seen = j.value("epochs_seen", std::uint64_t{0});
        mlp.unit_alive = j.at("unit_alive").get<std::vector<std::vector<std::uint8_t>>>();
        for (const auto& jl : j.at("layers")) {
            DenseLayer L;
            L.fan_in = jl.at("fan_in").get<std::size_t>();
            L.fan_out = jl.at("fan_out").get<std::size_t>();
            L.weight = jl.at("weight").get<std::vector<double>>();
            L.bias = jl.at("bias").get<std::vector<double>>();
            L.mask = jl.at("mask").get<std::vector<std::uint8_t>>();
            const std::size_t n = L.fan_in * L.fan_out;
            L.m_weight = jl.value("adam_m_weight", std::vector<double>(n, 0.0));
            L.v_weight = jl.value("adam_v_weight", std::vector<double>(n, 0.0));
            L.m_bias = jl.value("adam_m_bias", std::vector<double>(L.fan_out, 0.0));
            L.v_bias = jl.value("adam_v_bias", std::vector<double>(L.fan_out, 0.0));
            if (L.weight.size() != n || L.mask.size() != n || L.bias.size() != L.fan_out ||
                L.m_weight.size() != n || L.v_weight.size() != n) {
                throw FormatError("checkpoint layer arrays have inconsistent sizes");
            }
            mlp.layers.push_back(std::move(L));
        }
        const auto widths = j.at("widths").get<std::vector<std::size_t>>();
        if (widths != mlp.widths() || mlp.unit_alive.size() + 2 != widths.size()) {
            throw FormatError("checkpoint widths disagree with layer shapes");
        }
        for (std::size_t h = 0; h < mlp.unit_alive.size(); ++h) {
            if (mlp.unit_alive[h].size() != widths[h + 1]) throw FormatError("unit flags have the wrong width");
        }
        for (const auto& L : mlp.layers) {
            for (std::size_t k = 0; k < L.weight.size(); ++k) {
                if (!L.mask[k] && L.weight[k] != 0.0) throw FormatError("masked weight is not zero");
            }
        }
        return mlp;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed checkpoint: ") + e.what());
    }
}

}  // namespace nsculpt

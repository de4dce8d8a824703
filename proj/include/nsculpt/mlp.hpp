#pragma once

// Masked multilayer perceptron: ReLU hidden layers, sigmoid/bitwise
// cross-entropy head, Adam with L2, and hand-derived backpropagation.
// Pruning state lives in binary edge masks and per-unit alive flags.

#include "nsculpt/dataset.hpp"
#include "nsculpt/matrix.hpp"
#include "nsculpt/truth_table.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"

namespace nsculpt {

struct MlpConfig {
    std::vector<std::size_t> layer_widths;  // [n, h1, ..., hL, m]
    std::uint64_t seed = 0;
    double lr = 0.05;
    std::size_t batch_size = 16;
    std::size_t epochs = 120;
    double l2 = 1e-4;
    double accuracy_threshold = 1.0;

    void validate() const;  // throws ValidationError
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Weights connecting width-layer `l` to `l + 1`, stored fan_out x fan_in.
struct DenseLayer {
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    std::vector<double> weight;
    std::vector<double> bias;
    std::vector<std::uint8_t> mask;
    std::vector<double> m_weight, v_weight, m_bias, v_bias;

    double& w(std::size_t out, std::size_t in) { return weight[out * fan_in + in]; }
    double w(std::size_t out, std::size_t in) const { return weight[out * fan_in + in]; }
    bool live(std::size_t out, std::size_t in) const { return mask[out * fan_in + in] != 0; }

    bool operator==(const DenseLayer&) const = default;
};

// Invariants: a masked weight is exactly 0; a dead hidden unit has every
// incident edge masked and a zero bias. Width-layer 0 is the input layer and
// the last width-layer is the output layer; neither is ever pruned.
class MaskedMlp {
public:
    std::vector<DenseLayer> layers;
    std::vector<std::vector<std::uint8_t>> unit_alive;  // per hidden layer
    std::uint64_t seed = 0;
    std::uint64_t adam_step = 0;
    std::uint64_t epochs_seen = 0;  // offsets the noise stream across retrains

    std::vector<std::size_t> widths() const;
    std::size_t depth() const noexcept { return layers.size(); }  // weight layers
    std::size_t hidden_layers() const noexcept { return unit_alive.size(); }

    // `layer` indexes width-layers (0 = inputs).
    bool alive(std::size_t layer, std::size_t unit) const;
    std::vector<std::size_t> alive_units(std::size_t layer) const;

    // Masks one weight of weight-layer `l` and clears its Adam moments.
    void mask_edge(std::size_t l, std::size_t out, std::size_t in);
    // Kills a hidden unit (width-layer `layer`, 1 <= layer <= hidden_layers()).
    void kill_unit(std::size_t layer, std::size_t unit);

    std::size_t weight_count() const noexcept;    // original edge count
    std::size_t unmasked_count() const noexcept;
    std::size_t hidden_unit_count() const noexcept;  // original hidden units
    std::size_t alive_hidden_count() const noexcept;
    double edge_density() const noexcept;

    bool operator==(const MaskedMlp&) const = default;
};

MaskedMlp init(const MlpConfig& cfg);

struct ForwardPass {
    std::vector<Matrix> pre;   // pre[l] for width-layer l (pre[0] unused)
    std::vector<Matrix> post;  // post[0] = inputs; post.back() = logits
    const Matrix& logits() const { return post.back(); }
};

ForwardPass forward(const MaskedMlp& mlp, const Matrix& inputs);

// Mean over rows of the summed per-bit cross-entropy on sigmoid(logits).
double bce_loss(const Matrix& logits, const Matrix& targets);

struct Gradients {
    std::vector<std::vector<double>> weight;  // zero at masked positions
    std::vector<std::vector<double>> bias;
};

// Loss and gradients of bce_loss over all rows (no L2 term).
double loss_and_gradients(const MaskedMlp& mlp, const DataView& data, Gradients& grads);

struct TrainHistory {
    std::vector<double> loss;      // per-epoch mean training loss
    std::vector<double> accuracy;  // per-epoch validation bitwise accuracy

    bool operator==(const TrainHistory&) const = default;
};

// Trains in place for cfg.epochs epochs; throws DivergenceError on a
// non-finite loss.
TrainHistory train(MaskedMlp& mlp, const TruthTable& table, const NoiseConfig& noise, const MlpConfig& cfg);

// Fraction of output bits where 1[sigmoid(z) > 0.5] matches the target
// (a logit of exactly 0 predicts 0).
double bitwise_accuracy(const Matrix& logits, const Matrix& targets);
double bitwise_accuracy(const MaskedMlp& mlp, const DataView& validation);

enum class SensitivityAggregation { MeanThenAbs, AbsThenMean };

// Loss-sensitivity score |dL/da * a| of every hidden unit (per hidden layer).
// Dead units score 0.
std::vector<std::vector<double>> loss_sensitivity_scores(
    const MaskedMlp& mlp, const DataView& validation,
    SensitivityAggregation aggregation = SensitivityAggregation::MeanThenAbs);

// Masks every alive hidden unit without unmasked out-edges, repeating until
// none remain. Such units cannot influence the outputs, so the computed
// function is unchanged. Returns the number of units removed.
std::size_t remove_dead_ends(MaskedMlp& mlp);

// Checkpoint: widths, seed, counters, per-layer weights/biases/masks, Adam
// moments and unit flags. Doubles round-trip exactly.
nlohmann::json to_json(const MaskedMlp& mlp);
MaskedMlp mlp_from_json(const nlohmann::json& j);

}  // namespace nsculpt

#include "nsculpt/dataset.hpp"

#include "nsculpt/error.hpp"
#include "nsculpt/rng.hpp"

#include <numeric>

namespace nsculpt {

DataView validation_view(const TruthTable& table) {
    const std::size_t rows = table.rows();
    DataView v{Matrix(rows, table.n_inputs), Matrix(rows, table.n_outputs)};
    for (std::size_t i = 0; i < table.inputs.size(); ++i) v.inputs.data[i] = table.inputs[i];
    for (std::size_t i = 0; i < table.outputs.size(); ++i) v.targets.data[i] = table.outputs[i];
    return v;
}

DataView noisy_epoch(const TruthTable& table, const NoiseConfig& cfg, std::uint64_t epoch_index) {
    if (!(cfg.sigma >= 0.0)) throw ValidationError("noise sigma must be non-negative");
    const std::size_t rows = table.rows();
    Stream rng(derive_key(cfg.seed, 0x6E6F697365ULL, epoch_index));
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));

    DataView v{Matrix(rows, table.n_inputs), Matrix(rows, table.n_outputs)};
    for (std::size_t r = 0; r < rows; ++r) {
        const auto in = table.input_row(order[r]);
        const auto out = table.output_row(order[r]);
        for (std::size_t c = 0; c < table.n_inputs; ++c) {
            v.inputs(r, c) = static_cast<double>(in[c]) + cfg.sigma * rng.normal();
        }
        for (std::size_t c = 0; c < table.n_outputs; ++c) v.targets(r, c) = out[c];
    }
    return v;
}

}  // namespace nsculpt

#pragma once

#include "nsculpt/matrix.hpp"
#include "nsculpt/truth_table.hpp"

#include <cstdint>

namespace nsculpt {

struct NoiseConfig {
    double sigma = 0.1;
    std::uint64_t seed = 0;
};

// Real-valued inputs with bit targets, one row per sample.
struct DataView {
    Matrix inputs;
    Matrix targets;

    std::size_t rows() const noexcept { return inputs.rows; }
};

// Clean truth-table rows in table order.
DataView validation_view(const TruthTable& table);

// One epoch of training data: the table rows shuffled and perturbed with
// i.i.d. N(0, sigma^2) noise, drawn from a stream keyed by (seed, epoch).
DataView noisy_epoch(const TruthTable& table, const NoiseConfig& cfg, std::uint64_t epoch_index);

}  // namespace nsculpt

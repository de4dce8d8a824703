#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace nsculpt {

// Exhaustive input/output bit rows of a Boolean function. Row r's input bits
// are the binary encoding of r, most significant bit first (x1 is the MSB).
struct TruthTable {
    std::size_t n_inputs = 0;
    std::size_t n_outputs = 0;
    std::vector<std::uint8_t> inputs;   // rows x n_inputs
    std::vector<std::uint8_t> outputs;  // rows x n_outputs

    std::size_t rows() const noexcept { return n_inputs == 0 && inputs.empty() ? 0 : inputs.size() / n_inputs; }
    std::span<const std::uint8_t> input_row(std::size_t r) const { return {inputs.data() + r * n_inputs, n_inputs}; }
    std::span<const std::uint8_t> output_row(std::size_t r) const { return {outputs.data() + r * n_outputs, n_outputs}; }

    bool operator==(const TruthTable&) const = default;
};

}  // namespace nsculpt

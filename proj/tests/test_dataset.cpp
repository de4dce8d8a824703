#include "doctest.h"

#include "nsculpt/boolean_graph.hpp"
#include "nsculpt/dataset.hpp"
#include "nsculpt/error.hpp"

#include <algorithm>
#include <cmath>

using namespace nsculpt;

namespace {

TruthTable and_table() {
    TruthTable t;
    t.n_inputs = 2;
    t.n_outputs = 1;
    t.inputs = {0, 0, 0, 1, 1, 0, 1, 1};
    t.outputs = {0, 0, 0, 1};
    return t;
}

std::vector<std::vector<double>> sorted_rows(const Matrix& m) {
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < m.rows; ++r) rows.emplace_back(m.row(r).begin(), m.row(r).end());
    std::sort(rows.begin(), rows.end());
    return rows;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("validation view is the clean table in order") {
    const auto t = and_table();
    const auto v = validation_view(t);
    CHECK(v.rows() == 4);
    CHECK(v.inputs.data == std::vector<double>{0, 0, 0, 1, 1, 0, 1, 1});
    CHECK(v.targets.data == std::vector<double>{0, 0, 0, 1});
    CHECK(validation_view(t).inputs == v.inputs);
}

TEST_CASE("zero noise only shuffles") {
    const auto t = truth_table(generate(ModularitySpec::dense(), 1));
    const auto v = validation_view(t);
    const auto e = noisy_epoch(t, {0.0, 9}, 3);
    CHECK(sorted_rows(e.inputs) == sorted_rows(v.inputs));
    // targets travel with their inputs
    for (std::size_t r = 0; r < e.rows(); ++r) {
        std::size_t idx = 0;
        for (std::size_t c = 0; c < t.n_inputs; ++c) idx = idx * 2 + static_cast<std::size_t>(e.inputs(r, c));
        for (std::size_t c = 0; c < t.n_outputs; ++c) CHECK(e.targets(r, c) == t.output_row(idx)[c]);
    }
}

TEST_CASE("same key, same bits; different epoch, different draw") {
    const auto t = truth_table(generate(ModularitySpec::dense(), 1));
    const auto a = noisy_epoch(t, {0.1, 4}, 7);
    const auto b = noisy_epoch(t, {0.1, 4}, 7);
    const auto c = noisy_epoch(t, {0.1, 4}, 8);
    CHECK(a.inputs == b.inputs);
    CHECK(a.targets == b.targets);
    CHECK_FALSE(a.inputs == c.inputs);
}

TEST_CASE("noise moments over 1000 epochs") {
    const auto t = truth_table(generate(ModularitySpec::dense(), 1));
    const std::size_t rows = t.rows(), n = t.n_inputs;
    std::vector<double> sum(rows * n, 0.0), sq(rows * n, 0.0);
    const int epochs = 1000;
    for (int e = 0; e < epochs; ++e) {
        const auto d = noisy_epoch(t, {0.1, 21}, static_cast<std::uint64_t>(e));
        for (std::size_t r = 0; r < rows; ++r) {
            // recover the clean row from the targets' source row: nearest bits
            std::size_t idx = 0;
            for (std::size_t c = 0; c < n; ++c) idx = idx * 2 + (d.inputs(r, c) > 0.5 ? 1 : 0);
            for (std::size_t c = 0; c < n; ++c) {
                const double noise = d.inputs(r, c) - t.input_row(idx)[c];
                sum[idx * n + c] += noise;
                sq[idx * n + c] += noise * noise;
            }
        }
    }
    for (std::size_t k = 0; k < rows * n; ++k) {
        const double mean = sum[k] / epochs;
        const double sd = std::sqrt(sq[k] / epochs - mean * mean);
        CHECK(std::abs(mean) <= 0.02);
        CHECK(std::abs(sd - 0.1) <= 0.01);
    }
}

TEST_CASE("negative sigma is rejected") {
    CHECK_THROWS_AS(noisy_epoch(and_table(), {-0.1, 0}, 0), ValidationError);
}

}  // TEST_SUITE

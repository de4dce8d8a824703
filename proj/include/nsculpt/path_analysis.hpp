#pragma once

// Structural probes on masked networks: summed products of absolute edge
// weights over input-to-output paths, a one-sided Welch test on those
// products, and the number of units needed to cover a share of them.

#include "nsculpt/csv.hpp"
#include "nsculpt/matrix.hpp"
#include "nsculpt/mlp.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace nsculpt {

// pi(j, i) = sum over all paths from input i to output j of the product of
// |w| along the path (m x n). Biases are not part of any path.
Matrix path_product_matrix(const MaskedMlp& mlp);

// |W_to ⊙ M_to| ... |W_from+1 ⊙ M_from+1|: products from width-layer `from`
// to width-layer `to` (identity when from == to).
Matrix abs_weight_product(const MaskedMlp& mlp, std::size_t from, std::size_t to);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
// CDF of Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

enum class Alternative { Less, Greater, TwoSided };

struct WelchResult {
    double t_stat = 0.0;
    double dof = 0.0;
    double p_value = 0.5;
    double mean1 = 0.0, mean2 = 0.0;
    double s1 = 0.0, s2 = 0.0;  // sample standard deviations
};

// Welch two-sample t-test of H0: mu1 = mu2. With zero pooled variance the
// result is t = 0, p = 0.5 for equal means and t = -inf/+inf with p = 0/1
// otherwise (dof = 0 in both cases). Throws ArityError for samples < 2.
WelchResult welch_test(std::span<const double> sample1, std::span<const double> sample2,
                       Alternative alternative = Alternative::Less);

struct SeparabilityTest {
    bool reject = false;
    WelchResult result;
};

// sample1 = pi over (inputs x outputs_other), sample2 = pi over
// (inputs x outputs_own); rejects "mu_other = mu_own" in favour of
// mu_other < mu_own when p < alpha.
SeparabilityTest input_separability_test(const Matrix& pi, const std::vector<std::size_t>& inputs,
                                         const std::vector<std::size_t>& outputs_own,
                                         const std::vector<std::size_t>& outputs_other, double alpha = 0.05);
SeparabilityTest input_separability_test(const MaskedMlp& mlp, const std::vector<std::size_t>& inputs,
                                         const std::vector<std::size_t>& outputs_own,
                                         const std::vector<std::size_t>& outputs_other, double alpha = 0.05);

struct CoverageResult {
    std::size_t layer = 0;
    double percent = 0.0;
    std::size_t n_units = 0;
    std::vector<std::size_t> units;      // alive units, by descending contribution
    std::vector<double> contributions;   // matching `units`
};

// Contribution of hidden unit i in width-layer `layer` is the sum over
// outputs of the downstream weight product; N is the shortest prefix of the
// descending order (ties by unit index) reaching percent/100 of the total.
// A layer without alive units, or with zero total, yields n_units = 0.
CoverageResult layer_coverage(const MaskedMlp& mlp, std::size_t layer, double percent);

CsvTable path_product_csv(const Matrix& pi);                 // input,output,value
CsvTable coverage_csv(const std::vector<CoverageResult>& c);  // layer,rank,unit,contribution

}  // namespace nsculpt

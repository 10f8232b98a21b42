#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stmmot/attention.hpp"
#include "stmmot/params.hpp"
#include "stmmot/tensor.hpp"

namespace stmmot::checks {

/// Outcome of one verification suite.
struct CheckResult {
    std::string name;
    bool passed = false;
    std::size_t trials = 0;
    double worst = 0.0;      ///< largest observed error
    double tolerance = 0.0;
    double seconds = 0.0;
    std::string detail;
};

nlohmann::json to_json(const CheckResult& r);

// ---- reference implementations (plain loops, no library kernels) ----

Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& params);
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);

/// Minimum total cost over all matchings of size min(n, m), by enumeration.
double brute_force_min_cost(const Tensor& cost);

/// Maximum total weight over all injective partial mappings rows -> columns.
double brute_force_max_weight(const Tensor& weight);

double central_difference(const std::function<double(double)>& f, double x, double h = 1e-6);

/// |a - b| / max(|a|, |b|, floor). A central difference with h = 1e-6 on a
/// loss of size ~1 carries a few 1e-10 of round-off, so gradients below the
/// floor are compared in absolute terms (1e-4 * floor).
double relative_error(double analytic, double numeric, double floor = 1e-5);

// ---- suites ----

/// Every loss component's analytic gradient against central differences.
CheckResult loss_gradients(std::size_t points_per_component, Rng& rng, double tolerance = 1e-4);

/// attend and conv2d against the loop references on random instances.
CheckResult attention_conv_oracle(std::size_t instances, Rng& rng, double tolerance = 1e-12);

/// Zero offsets reduce the deformable stage to conv2d; zero residual weights make a PFTL the identity.
CheckResult deformable_degeneration(std::size_t instances, Rng& rng, double tolerance = 1e-9);

/// Random admit / append / remove / window sequences against a shadow model.
CheckResult buffer_invariants(std::size_t operations, Rng& rng);

/// hungarian against enumeration for n, m <= 6.
CheckResult hungarian_oracle(std::size_t trials, Rng& rng, double tolerance = 1e-9);

/// idf1's identity mapping against enumeration for <= 5 identities.
CheckResult idf1_oracle(std::size_t scenes, Rng& rng);

/// Worked MOTA and HOTA examples plus id-relabeling invariance.
CheckResult metric_arithmetic(std::size_t relabel_trials, Rng& rng);

/// Permutation equivariance of the proposal network and the tracker decoder.
CheckResult equivariance(std::size_t instances, Rng& rng, double tolerance = 1e-12);

}  // namespace stmmot::checks

#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "stmmot/params.hpp"
#include "stmmot/tensor.hpp"

namespace stmmot {

/// One progressive feature transfer layer. All kernels are 3x3, stride 1, pad 1.
struct PftlParams {
    static constexpr std::size_t kernel = 3;
    static constexpr std::size_t taps = kernel * kernel;

    Tensor offset_w, offset_b;      ///< [2*taps, 2C, 3, 3], [2*taps]
    Tensor mask_ref_w, mask_ref_b;  ///< applied to the reference feature x0: [C, C, 3, 3], [C]
    Tensor mask_cur_w, mask_cur_b;  ///< applied to the propagated feature: [C, C, 3, 3], [C]
    Tensor deform_w, deform_b;      ///< [C, C, 3, 3], [C]
    Tensor residual_w, residual_b;  ///< [C, 2C, 3, 3], [C]

    static PftlParams random(std::size_t channels, Rng& rng, double stddev = 0.02);
    std::size_t channels() const { return deform_w.dim(0); }
    void validate() const;

    void save(ParamStore& store, std::string_view prefix) const;
    static PftlParams load(const ParamStore& store, std::string_view prefix);
};

struct SvpParams {
    std::size_t levels = 1;          ///< M
    std::size_t pftls_per_level = 1; ///< N
    double upscale = 2.0;
    std::vector<Tensor> down_w, down_b;    ///< levels 1..M-1: [C, C, 3, 3] stride 2
    std::vector<Tensor> merge_w, merge_b;  ///< levels 0..M-2: [C, 2C, 3, 3]
    std::vector<std::vector<PftlParams>> pftl;  ///< [M][N]

    static SvpParams random(std::size_t channels, std::size_t levels, std::size_t pftls_per_level, Rng& rng,
                            double stddev = 0.02);
    std::size_t channels() const { return pftl.at(0).at(0).channels(); }
    void validate() const;

    void save(ParamStore& store, std::string_view prefix = "svp") const;
    static SvpParams load(const ParamStore& store, std::string_view prefix = "svp");
};

/// Offset field, [2*taps, H, W]; channel 2t holds dy and 2t+1 holds dx of tap t (row-major taps).
Tensor pftl_offsets(const Tensor& x0, const Tensor& xprev, const PftlParams& params);

/// Per-channel spatial softmax of conv(x0) - conv(xprev), [C, H, W].
Tensor pftl_mask(const Tensor& x0, const Tensor& xprev, const PftlParams& params);

/// 3x3 deformable convolution of x sampled at (tap + offset) positions.
Tensor deformable_conv(const Tensor& x, const Tensor& offsets, const Tensor& w, const Tensor& b);

Tensor pftl_forward(const Tensor& x0, const Tensor& xprev, const PftlParams& params);

/// Runs the pyramid. `inputs[0]` is the reference feature X_0; `inputs[1]`,
/// when given, is the feature to refine (defaults to X_0). Returns M maps,
/// level m at H/2^m x W/2^m.
std::vector<Tensor> svp_forward(const std::vector<Tensor>& inputs, const SvpParams& params);

}  // namespace stmmot

#pragma once

// Lightweight 2-D CNN decoder: student outputs and mask tokens are merged
// back into the full (T' x F') grid, run through 6 x [3x3 same-padding conv ->
// LayerNorm over channels -> GELU], then a per-cell linear projection.

#include <cmath>
#include <string>
#include <vector>

#include "eat/autodiff.hpp"
#include "eat/model.hpp"
#include "eat/tensor.hpp"

namespace eat {

struct DecoderConfig {
    int layers = 6;
    int embed_dim = 64;
    // 3x3 kernels, same padding, channel count == embed_dim throughout.
};

// Conv weights are stored matmul-ready as (9*E_in) x E_out, rows ordered
// offset-major to match im2col3's column layout. Conv init std is chosen so
// the per-cell LayerNorm that follows sees unit-scale inputs; the forward
// value is invariant to this scale, gradient conditioning is not.
inline void init_decoder_params(ModelState &ms, const std::string &prefix, const DecoderConfig &cfg, uint64_t seed) {
    const int e = cfg.embed_dim;
    const double conv_std = 1.0 / std::sqrt(9.0 * e);
    for (int i = 0; i < cfg.layers; ++i) {
        std::string b = prefix + ".conv" + std::to_string(i);
        ms.add(b + ".w", init_trunc_normal(b + ".w", {9 * e, e}, conv_std, seed));
        ms.add(b + ".b", init_const({e}, 0.0));
        ms.add(b + ".ln.gain", init_const({e}, 1.0));
        ms.add(b + ".ln.bias", init_const({e}, 0.0));
    }
    ms.add(prefix + ".proj.w", init_trunc_normal(prefix + ".proj.w", {e, e}, 0.02, seed));
    ms.add(prefix + ".proj.b", init_const({e}, 0.0));
}

// Scatter visible student outputs to their grid cells and broadcast the mask
// token everywhere else. The index lists must partition the grid.
inline Tensor merge_tokens(const Tensor &visible, const std::vector<int> &visible_idx,
                           const std::vector<int> &masked_idx, const Tensor &mask_token, int grid_t, int grid_f) {
    return merge_rows(visible, visible_idx, masked_idx, mask_token, grid_t * grid_f);
}

inline Tensor decode(const Tensor &grid, int grid_t, int grid_f, const ModelState &ms, const std::string &prefix,
                     const DecoderConfig &cfg) {
    if (grid.rank() != 2 || grid.shape[0] != grid_t * grid_f || grid.shape[1] != cfg.embed_dim) {
        throw std::invalid_argument("decode: grid shape " + shape_str(grid.shape) + " does not match " +
                                    std::to_string(grid_t) + "x" + std::to_string(grid_f) + "x" +
                                    std::to_string(cfg.embed_dim));
    }
    Tensor h = grid;
    for (int i = 0; i < cfg.layers; ++i) {
        std::string b = prefix + ".conv" + std::to_string(i);
        Tensor unfolded = im2col3(h, grid_t, grid_f);
        Tensor conv = add(matmul(unfolded, ms.at(b + ".w")), ms.at(b + ".b"));
        const Tensor &gain = ms.at(b + ".ln.gain");
        const Tensor &bias = ms.at(b + ".ln.bias");
        h = gelu(layer_norm(conv, 1, &gain, &bias));
    }
    return add(matmul(h, ms.at(prefix + ".proj.w")), ms.at(prefix + ".proj.b"));
}

// Predictions at masked cells only, canonical order. Empty index list gives
// an empty (0 x E) tensor.
inline Tensor select_masked(const Tensor &pred, const std::vector<int> &masked_idx) {
    return gather_rows(pred, masked_idx);
}

}  // namespace eat

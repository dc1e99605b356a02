#pragma once

// Spectrogram -> patch embeddings: non-overlapping SxS convolution (kernel ==
// stride), canonical time-major flattening of the (T', F') grid, fixed
// sinusoidal position table, and the learnable CLS token that heads the
// student sequence.

#include <cmath>
#include <vector>

#include "eat/autodiff.hpp"
#include "eat/frontend.hpp"
#include "eat/tensor.hpp"

namespace eat {

struct PatchConfig {
    int patch_size = 16;
    int embed_dim = 64;
    int grid_t = 0;
    int grid_f = 0;

    int patches() const { return grid_t * grid_f; }
};

inline PatchConfig make_patch_config(int frames, int bins, int patch_size, int embed_dim) {
    if (patch_size <= 0) throw std::invalid_argument("patch size must be positive");
    if (frames % patch_size != 0 || bins % patch_size != 0) {
        throw std::invalid_argument("patch size " + std::to_string(patch_size) + " does not divide spectrogram " +
                                    std::to_string(frames) + "x" + std::to_string(bins) +
                                    " (pad upstream first)");
    }
    PatchConfig cfg;
    cfg.patch_size = patch_size;
    cfg.embed_dim = embed_dim;
    cfg.grid_t = frames / patch_size;
    cfg.grid_f = bins / patch_size;
    return cfg;
}

// Canonical flatten order: time-major, index = t' * F' + f'.
inline int flatten_index(int t, int f, int grid_f) { return t * grid_f + f; }
inline std::pair<int, int> unflatten_index(int p, int grid_f) { return {p / grid_f, p % grid_f}; }

struct PatchGrid {
    Tensor embeddings;  // P x E
    int grid_t = 0;
    int grid_f = 0;
    bool positional_applied = false;

    int patches() const { return grid_t * grid_f; }
};

// Rearranges the spectrogram into a constant P x (S*S) matrix, one row per
// patch, taps row-major within the tile.
inline Tensor spectrogram_patches(const Spectrogram &spec, int patch_size) {
    const int gt = spec.frames / patch_size, gf = spec.bins / patch_size;
    const int taps = patch_size * patch_size;
    Tensor out({gt * gf, taps});
    for (int t = 0; t < gt; ++t) {
        for (int f = 0; f < gf; ++f) {
            double *row = out.ptr() + static_cast<int64_t>(flatten_index(t, f, gf)) * taps;
            for (int st = 0; st < patch_size; ++st) {
                for (int sf = 0; sf < patch_size; ++sf) {
                    row[st * patch_size + sf] = spec.at(t * patch_size + st, f * patch_size + sf);
                }
            }
        }
    }
    return out;
}

// kernel: E x 1 x S x S (kernel == stride, no overlap); bias: E.
inline PatchGrid patch_embed(const Spectrogram &spec, const Tensor &kernel, const Tensor &bias, int patch_size) {
    PatchConfig cfg = make_patch_config(spec.frames, spec.bins, patch_size, kernel.shape[0]);
    if (kernel.rank() != 4 || kernel.shape[1] != 1 || kernel.shape[2] != patch_size || kernel.shape[3] != patch_size) {
        throw std::invalid_argument("patch_embed: kernel shape " + shape_str(kernel.shape) + " does not match patch size " +
                                    std::to_string(patch_size));
    }
    Tensor patches = spectrogram_patches(spec, patch_size);
    Tensor taps_by_embed = transpose(reshape(kernel, {cfg.embed_dim, patch_size * patch_size}));
    PatchGrid pg;
    pg.grid_t = cfg.grid_t;
    pg.grid_f = cfg.grid_f;
    pg.embeddings = add(matmul(patches, taps_by_embed), bias);
    return pg;
}

// pe[p, 2i] = sin(p / 10000^(2i/E)), pe[p, 2i+1] = cos(p / 10000^(2i/E)).
inline Tensor sinusoidal_table(int positions, int embed_dim) {
    Tensor table({positions, embed_dim});
    for (int p = 0; p < positions; ++p) {
        for (int i = 0; 2 * i < embed_dim; ++i) {
            double rate = std::pow(10000.0, -2.0 * i / embed_dim);
            double angle = p * rate;
            table.at(p, 2 * i) = std::sin(angle);
            if (2 * i + 1 < embed_dim) table.at(p, 2 * i + 1) = std::cos(angle);
        }
    }
    return table;
}

inline PatchGrid add_positional(const PatchGrid &pg) {
    if (pg.positional_applied) throw std::invalid_argument("add_positional: positional encoding already applied");
    PatchGrid out = pg;
    out.embeddings = add(pg.embeddings, sinusoidal_table(pg.patches(), pg.embeddings.shape[1]));
    out.positional_applied = true;
    return out;
}

// CLS at index 0, patch order preserved. The CLS token carries no positional
// encoding.
inline Tensor prepend_cls(const Tensor &sequence, const Tensor &cls_token) {
    Tensor cls_row = cls_token.rank() == 2 ? cls_token : reshape(cls_token, {1, static_cast<int>(cls_token.numel())});
    return concat_rows<double>({cls_row, sequence});
}

}  // namespace eat

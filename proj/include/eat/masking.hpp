#pragma once

// Inverse block masking on the 2-D patch grid: start fully masked, place
// random rectangular blocks of "keep" until the kept count reaches the target,
// then trim random kept cells back so |keep| == round((1-ratio)*P) exactly.
// Clone sets draw each plan from an independent counter-RNG stream.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

#include "eat/autodiff.hpp"
#include "eat/patching.hpp"
#include "eat/rng.hpp"
#include "eat/tensor.hpp"

namespace eat {

struct BlockShape {
    int h = 5;
    int w = 5;
    bool operator==(const BlockShape &o) const { return h == o.h && w == o.w; }
};

struct MaskPlan {
    int grid_t = 0;
    int grid_f = 0;
    std::vector<uint8_t> keep;  // true = visible / unmasked
    double mask_ratio = 0.0;
    BlockShape block;
    uint64_t seed = 0;
    std::vector<std::pair<int, int>> placements;  // block top-lefts, for audits

    int cells() const { return grid_t * grid_f; }
    int keep_count() const {
        int n = 0;
        for (uint8_t k : keep) n += k ? 1 : 0;
        return n;
    }
    bool kept(int t, int f) const { return keep[static_cast<size_t>(flatten_index(t, f, grid_f))] != 0; }

    std::vector<int> visible_indices() const {
        std::vector<int> idx;
        for (int i = 0; i < cells(); ++i) {
            if (keep[static_cast<size_t>(i)]) idx.push_back(i);
        }
        return idx;
    }
    std::vector<int> masked_indices() const {
        std::vector<int> idx;
        for (int i = 0; i < cells(); ++i) {
            if (!keep[static_cast<size_t>(i)]) idx.push_back(i);
        }
        return idx;
    }
};

inline int mask_keep_target(int cells, double ratio) {
    return static_cast<int>(std::llround((1.0 - ratio) * cells));
}

inline MaskPlan inverse_block_mask_with_rng(int grid_t, int grid_f, double ratio, BlockShape block, CounterRng &rng,
                                            uint64_t seed_tag) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("mask ratio must lie in (0, 1)");
    if (block.h < 1 || block.w < 1 || block.h > grid_t || block.w > grid_f) {
        throw std::invalid_argument("block " + std::to_string(block.h) + "x" + std::to_string(block.w) +
                                    " does not fit grid " + std::to_string(grid_t) + "x" + std::to_string(grid_f));
    }
    MaskPlan plan;
    plan.grid_t = grid_t;
    plan.grid_f = grid_f;
    plan.mask_ratio = ratio;
    plan.block = block;
    plan.seed = seed_tag;
    plan.keep.assign(static_cast<size_t>(grid_t) * grid_f, 0);

    const int target = mask_keep_target(plan.cells(), ratio);
    int kept = 0;
    while (kept < target) {
        int t0 = rng.next_int(grid_t);
        int f0 = rng.next_int(grid_f);
        plan.placements.emplace_back(t0, f0);
        // blocks are clipped at the grid boundary, not re-drawn
        for (int t = t0; t < std::min(t0 + block.h, grid_t); ++t) {
            for (int f = f0; f < std::min(f0 + block.w, grid_f); ++f) {
                uint8_t &cell = plan.keep[static_cast<size_t>(flatten_index(t, f, grid_f))];
                if (!cell) {
                    cell = 1;
                    ++kept;
                }
            }
        }
    }
    // trim the overshoot: flip uniformly random kept cells back to masked
    if (kept > target) {
        std::vector<int> kept_cells;
        kept_cells.reserve(static_cast<size_t>(kept));
        for (int i = 0; i < plan.cells(); ++i) {
            if (plan.keep[static_cast<size_t>(i)]) kept_cells.push_back(i);
        }
        while (kept > target) {
            int pick = rng.next_int(static_cast<int>(kept_cells.size()));
            plan.keep[static_cast<size_t>(kept_cells[static_cast<size_t>(pick)])] = 0;
            kept_cells[static_cast<size_t>(pick)] = kept_cells.back();
            kept_cells.pop_back();
            --kept;
        }
    }
    return plan;
}

inline MaskPlan inverse_block_mask(int grid_t, int grid_f, double ratio, BlockShape block, uint64_t seed) {
    CounterRng rng(seed);
    return inverse_block_mask_with_rng(grid_t, grid_f, ratio, block, rng, seed);
}

inline BlockShape sample_block_shape(const std::vector<BlockShape> &shapes, CounterRng &rng) {
    if (shapes.empty()) throw std::invalid_argument("sample_block_shape: empty shape list");
    if (shapes.size() == 1) return shapes[0];
    return shapes[static_cast<size_t>(rng.next_int(static_cast<int>(shapes.size())))];
}

struct CloneSet {
    std::vector<MaskPlan> clones;
};

// clone_batch independent plans over the same grid; streams keyed by
// (seed, clip_id, clone_index) so generation order is irrelevant.
inline CloneSet make_clone_set(int grid_t, int grid_f, double ratio, const std::vector<BlockShape> &shapes,
                               int clone_batch, uint64_t seed, uint64_t clip_id = 0) {
    if (clone_batch < 1) throw std::invalid_argument("make_clone_set: clone_batch must be >= 1");
    CloneSet set;
    set.clones.reserve(static_cast<size_t>(clone_batch));
    for (int c = 0; c < clone_batch; ++c) {
        CounterRng rng(seed, clip_id, static_cast<uint64_t>(c));
        BlockShape block = sample_block_shape(shapes, rng);
        uint64_t tag = mix64(seed ^ mix64(clip_id) ^ static_cast<uint64_t>(c));
        set.clones.push_back(inverse_block_mask_with_rng(grid_t, grid_f, ratio, block, rng, tag));
    }
    return set;
}

// Gathers kept embeddings in canonical order; the index lists partition 0..P-1.
inline std::tuple<Tensor, std::vector<int>, std::vector<int>> apply_mask(const PatchGrid &pg, const MaskPlan &plan) {
    if (pg.grid_t != plan.grid_t || pg.grid_f != plan.grid_f) {
        throw std::invalid_argument("apply_mask: grid mismatch, embeddings " + std::to_string(pg.grid_t) + "x" +
                                    std::to_string(pg.grid_f) + " vs plan " + std::to_string(plan.grid_t) + "x" +
                                    std::to_string(plan.grid_f));
    }
    std::vector<int> visible = plan.visible_indices();
    std::vector<int> masked = plan.masked_indices();
    return {gather_rows(pg.embeddings, visible), visible, masked};
}

// Text rendering: frequency rows, time columns, '#' kept and '.' masked.
inline std::string mask_to_text(const MaskPlan &plan) {
    std::string out;
    out.reserve(static_cast<size_t>((plan.grid_t + 1) * plan.grid_f));
    for (int f = plan.grid_f - 1; f >= 0; --f) {
        for (int t = 0; t < plan.grid_t; ++t) out.push_back(plan.kept(t, f) ? '#' : '.');
        out.push_back('\n');
    }
    return out;
}

// 8-bit binary PGM, kept = 255, masked = 0, same orientation as the text art.
inline void write_mask_pgm(const MaskPlan &plan, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write pgm: " + path);
    out << "P5\n" << plan.grid_t << " " << plan.grid_f << "\n255\n";
    for (int f = plan.grid_f - 1; f >= 0; --f) {
        for (int t = 0; t < plan.grid_t; ++t) {
            out.put(plan.kept(t, f) ? static_cast<char>(255) : static_cast<char>(0));
        }
    }
}

}  // namespace eat

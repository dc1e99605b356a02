#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "eat/masking.hpp"
#include "eat/rng.hpp"
#include "testutil.hpp"

using eat::BlockShape;
using eat::MaskPlan;
using eat::Tensor;

TEST_CASE("keep count is exact for the default configuration") {
    MaskPlan plan = eat::inverse_block_mask(64, 8, 0.8, {5, 5}, 7);
    CHECK(plan.keep_count() == 102);  // round(0.2 * 512)
    CHECK(plan.cells() == 512);
}

TEST_CASE("keep count is exact across random configurations") {
    eat::CounterRng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        int gt = 2 + rng.next_int(40);
        int gf = 2 + rng.next_int(12);
        double ratio = 0.05 + 0.9 * rng.next_double();
        BlockShape block{1 + rng.next_int(gt), 1 + rng.next_int(gf)};
        uint64_t seed = rng.next_u64();
        MaskPlan plan = eat::inverse_block_mask(gt, gf, ratio, block, seed);
        CHECK(plan.keep_count() == eat::mask_keep_target(gt * gf, ratio));
    }
}

TEST_CASE("mask argument validation") {
    CHECK_THROWS_AS(eat::inverse_block_mask(8, 8, 0.0, {2, 2}, 1), std::invalid_argument);
    CHECK_THROWS_AS(eat::inverse_block_mask(8, 8, 1.0, {2, 2}, 1), std::invalid_argument);
    CHECK_THROWS_AS(eat::inverse_block_mask(8, 8, 0.8, {9, 2}, 1), std::invalid_argument);
    CHECK_THROWS_AS(eat::inverse_block_mask(8, 8, 0.8, {2, 0}, 1), std::invalid_argument);
}

TEST_CASE("plans are deterministic given identical arguments") {
    MaskPlan a = eat::inverse_block_mask(64, 8, 0.8, {5, 5}, 1234);
    MaskPlan b = eat::inverse_block_mask(64, 8, 0.8, {5, 5}, 1234);
    CHECK(a.keep == b.keep);
    CHECK(a.placements == b.placements);
    MaskPlan c = eat::inverse_block_mask(64, 8, 0.8, {5, 5}, 1235);
    CHECK(a.keep != c.keep);
}

TEST_CASE("kept cells lie inside recorded block placements") {
    // 5x5 blocks on a 64x8 grid clip at the frequency edge.
    MaskPlan plan = eat::inverse_block_mask(64, 8, 0.8, {5, 5}, 21);
    for (int t = 0; t < 64; ++t) {
        for (int f = 0; f < 8; ++f) {
            if (!plan.kept(t, f)) continue;
            bool covered = false;
            for (auto [t0, f0] : plan.placements) {
                if (t >= t0 && t < t0 + 5 && f >= f0 && f < f0 + 5) {
                    covered = true;
                    break;
                }
            }
            CHECK(covered);
        }
    }
}

TEST_CASE("1x1 blocks give per-cell keep frequency near 1 - ratio") {
    const int plans = 10000;
    const double ratio = 0.8;
    std::vector<int> keep_counts(512, 0);
    for (int i = 0; i < plans; ++i) {
        MaskPlan plan = eat::inverse_block_mask(64, 8, ratio, {1, 1}, 10000 + static_cast<uint64_t>(i));
        for (int c = 0; c < 512; ++c) keep_counts[static_cast<size_t>(c)] += plan.keep[static_cast<size_t>(c)];
    }
    for (int c = 0; c < 512; ++c) {
        double freq = keep_counts[static_cast<size_t>(c)] / static_cast<double>(plans);
        CHECK(std::fabs(freq - (1.0 - ratio)) < 0.02);
    }
}

TEST_CASE("hamming distance between independent clones concentrates at 2K(1 - K/P)") {
    const int pairs = 600;
    const int P = 512, K = 102;
    double sum = 0.0;
    for (int i = 0; i < pairs; ++i) {
        MaskPlan a = eat::inverse_block_mask(64, 8, 0.8, {1, 1}, 50000 + 2 * static_cast<uint64_t>(i));
        MaskPlan b = eat::inverse_block_mask(64, 8, 0.8, {1, 1}, 50001 + 2 * static_cast<uint64_t>(i));
        int ham = 0;
        for (int c = 0; c < P; ++c) ham += a.keep[static_cast<size_t>(c)] != b.keep[static_cast<size_t>(c)];
        sum += ham;
    }
    double expected = 2.0 * K * (1.0 - static_cast<double>(K) / P);  // 163.36
    CHECK(std::fabs(sum / pairs - expected) / expected < 0.03);
}

TEST_CASE("block shape sampling") {
    std::vector<BlockShape> shapes = {{5, 5}, {6, 4}, {8, 3}};
    eat::CounterRng rng(7);
    CHECK(eat::sample_block_shape({{4, 4}}, rng) == BlockShape{4, 4});

    int counts[3] = {0, 0, 0};
    const int draws = 30000;
    for (int i = 0; i < draws; ++i) {
        BlockShape s = eat::sample_block_shape(shapes, rng);
        for (int j = 0; j < 3; ++j) {
            if (s == shapes[static_cast<size_t>(j)]) ++counts[j];
        }
    }
    for (int j = 0; j < 3; ++j) {
        CHECK(std::fabs(counts[j] / static_cast<double>(draws) - 1.0 / 3.0) < 0.01);
    }

    eat::CounterRng r1(42), r2(42);
    for (int i = 0; i < 50; ++i) {
        CHECK(eat::sample_block_shape(shapes, r1) == eat::sample_block_shape(shapes, r2));
    }
    CHECK_THROWS_AS(eat::sample_block_shape({}, rng), std::invalid_argument);
}

TEST_CASE("clone sets share geometry and differ in content") {
    eat::CloneSet set = eat::make_clone_set(64, 8, 0.8, {{5, 5}}, 16, 3, 0);
    REQUIRE(set.clones.size() == 16);
    for (const auto &plan : set.clones) CHECK(plan.keep_count() == 102);

    std::set<std::vector<uint8_t>> distinct;
    for (const auto &plan : set.clones) distinct.insert(plan.keep);
    CHECK(distinct.size() >= 15);

    eat::CloneSet one = eat::make_clone_set(64, 8, 0.8, {{5, 5}}, 1, 3, 0);
    CHECK(one.clones.size() == 1);

    // deterministic per (seed, clip, clone); different clips differ
    eat::CloneSet again = eat::make_clone_set(64, 8, 0.8, {{5, 5}}, 16, 3, 0);
    for (size_t i = 0; i < 16; ++i) CHECK(again.clones[i].keep == set.clones[i].keep);
    eat::CloneSet other_clip = eat::make_clone_set(64, 8, 0.8, {{5, 5}}, 16, 3, 1);
    CHECK(other_clip.clones[0].keep != set.clones[0].keep);

    CHECK_THROWS_AS(eat::make_clone_set(64, 8, 0.8, {{5, 5}}, 0, 3, 0), std::invalid_argument);
}

TEST_CASE("apply_mask gathers kept rows in canonical order") {
    eat::CounterRng rng(11);
    eat::PatchGrid pg;
    pg.grid_t = 8;
    pg.grid_f = 4;
    pg.embeddings = Tensor({32, 3});
    for (int64_t i = 0; i < pg.embeddings.numel(); ++i) pg.embeddings[i] = rng.next_gaussian();

    MaskPlan plan = eat::inverse_block_mask(8, 4, 0.75, {2, 2}, 5);
    auto [visible, vis_idx, msk_idx] = eat::apply_mask(pg, plan);
    CHECK(static_cast<int>(vis_idx.size()) == plan.keep_count());
    CHECK(vis_idx.size() + msk_idx.size() == 32);
    for (size_t r = 0; r < vis_idx.size(); ++r) {
        for (int e = 0; e < 3; ++e) CHECK(visible.at(static_cast<int>(r), e) == pg.embeddings.at(vis_idx[r], e));
    }
    // canonical order and partition
    for (size_t r = 1; r < vis_idx.size(); ++r) CHECK(vis_idx[r] > vis_idx[r - 1]);
    std::set<int> all(vis_idx.begin(), vis_idx.end());
    all.insert(msk_idx.begin(), msk_idx.end());
    CHECK(all.size() == 32);

    // all-keep plan behaves as the identity
    MaskPlan keep_all = plan;
    std::fill(keep_all.keep.begin(), keep_all.keep.end(), 1);
    auto [same, vi, mi] = eat::apply_mask(pg, keep_all);
    CHECK(*same.data == *pg.embeddings.data);
    CHECK(mi.empty());

    // grid mismatch
    eat::PatchGrid wrong = pg;
    wrong.grid_t = 4;
    wrong.grid_f = 8;
    CHECK_THROWS_AS(eat::apply_mask(wrong, plan), std::invalid_argument);
}

TEST_CASE("scatter of visible plus mask tokens reconstructs a full sequence") {
    eat::CounterRng rng(13);
    eat::PatchGrid pg;
    pg.grid_t = 64;
    pg.grid_f = 8;
    pg.embeddings = Tensor({512, 4});
    for (int64_t i = 0; i < pg.embeddings.numel(); ++i) pg.embeddings[i] = rng.next_gaussian();
    MaskPlan plan = eat::inverse_block_mask(64, 8, 0.8, {5, 5}, 17);
    auto [visible, vis_idx, msk_idx] = eat::apply_mask(pg, plan);
    CHECK(visible.shape[0] == 102);
    CHECK(static_cast<int>(msk_idx.size()) == 410);

    Tensor token({4}, {9.0, 9.0, 9.0, 9.0});
    Tensor full = eat::merge_rows(visible, vis_idx, msk_idx, token, 512);
    for (int p = 0; p < 512; ++p) {
        bool is_masked = !plan.keep[static_cast<size_t>(p)];
        for (int e = 0; e < 4; ++e) {
            if (is_masked) {
                CHECK(full.at(p, e) == 9.0);
            } else {
                CHECK(full.at(p, e) == pg.embeddings.at(p, e));
            }
        }
    }
}

TEST_CASE("mask rendering is deterministic and counts correctly") {
    testutil::TempDir dir("pgm");
    MaskPlan plan = eat::inverse_block_mask(64, 8, 0.8, {5, 5}, 7);
    std::string art = eat::mask_to_text(plan);
    size_t hashes = 0;
    for (char c : art) hashes += c == '#';
    CHECK(hashes == 102);
    CHECK(art == eat::mask_to_text(plan));

    eat::write_mask_pgm(plan, dir.file("a.pgm"));
    eat::write_mask_pgm(plan, dir.file("b.pgm"));
    std::ifstream fa(dir.file("a.pgm"), std::ios::binary), fb(dir.file("b.pgm"), std::ios::binary);
    std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ca == cb);
    CHECK(ca.substr(0, 2) == "P5");
}

#pragma once

// Model assembly and the pre-training step: student = patch conv + CLS +
// encoder + mask token + CNN decoder; teacher = EMA copy of the patch conv
// and encoder only. The teacher runs once per clip in eval mode under
// stop-gradient; every clone of the clip reuses its targets.

#include <string>
#include <vector>

#include "eat/autodiff.hpp"
#include "eat/bootstrap.hpp"
#include "eat/decoder.hpp"
#include "eat/encoder.hpp"
#include "eat/frontend.hpp"
#include "eat/masking.hpp"
#include "eat/model.hpp"
#include "eat/objective.hpp"
#include "eat/patching.hpp"
#include "eat/rng.hpp"

namespace eat {

struct ModelConfig {
    EncoderConfig encoder;   // desk-scale defaults: 4 layers, E=64, 4 heads
    DecoderConfig decoder;   // 6 conv layers at embed width
    int patch_size = 16;
    int mel_bins = 128;
    int target_frames = 1024;

    int grid_t() const { return target_frames / patch_size; }
    int grid_f() const { return mel_bins / patch_size; }
    int patches() const { return grid_t() * grid_f(); }

    void validate() const {
        encoder.validate();
        if (decoder.embed_dim != encoder.embed_dim) {
            throw std::invalid_argument("decoder embed dim must match encoder embed dim");
        }
        if (target_frames % patch_size != 0 || mel_bins % patch_size != 0) {
            throw std::invalid_argument("patch size must divide target_frames and mel_bins");
        }
    }
};

inline ModelState init_student(const ModelConfig &cfg, uint64_t seed) {
    cfg.validate();
    const int e = cfg.encoder.embed_dim, s = cfg.patch_size;
    ModelState ms;
    ms.add("patch_embed.w", init_trunc_normal("patch_embed.w", {e, 1, s, s}, 0.02, seed));
    ms.add("patch_embed.b", init_const({e}, 0.0));
    ms.add("cls", init_trunc_normal("cls", {e}, 0.02, seed));
    // unit scale: the decoder's first LayerNorm needs healthy channel variance
    // at fully-masked cells
    ms.add("mask_token", init_trunc_normal("mask_token", {e}, 1.0, seed));
    init_encoder_params(ms, "encoder", cfg.encoder, seed);
    init_decoder_params(ms, "decoder", cfg.decoder, seed);
    return ms;
}

// The teacher mirrors the encoding path only: no CLS, no mask token, no
// decoder. Starts as an exact copy of the student.
inline ModelState make_teacher(const ModelState &student) {
    ModelState teacher;
    for (const auto &[name, t] : student.params) {
        if (name.rfind("encoder.", 0) == 0 || name.rfind("patch_embed.", 0) == 0) {
            Tensor copy = t.clone();
            copy.requires_grad = false;
            teacher.params.emplace(name, std::move(copy));
        }
    }
    return teacher;
}

inline PatchGrid embed_with_positions(const Spectrogram &spec, const ModelState &ms, int patch_size) {
    PatchGrid pg = patch_embed(spec, ms.at("patch_embed.w"), ms.at("patch_embed.b"), patch_size);
    return add_positional(pg);
}

// Full-grid teacher forward in eval mode; targets are constants.
inline TeacherTarget compute_teacher_targets(const ModelState &teacher, const Spectrogram &spec,
                                             const ModelConfig &cfg, long long *forward_counter = nullptr) {
    NoGradScope stop_gradient;
    PatchGrid pg = embed_with_positions(spec, teacher, cfg.patch_size);
    EncodeResult res = encode(pg.embeddings, teacher, "encoder", cfg.encoder, /*training=*/false);
    if (forward_counter) ++*forward_counter;
    return build_targets(res.layers);
}

// One clone: mask the embedded grid, encode CLS + visible patches, merge with
// mask tokens, decode, and score both objective parts.
inline UfoLoss pretrain_clone_loss(const ModelState &student, const PatchGrid &embedded, const MaskPlan &plan,
                                   const TeacherTarget &target, const ModelConfig &cfg, double utterance_weight) {
    auto [visible, visible_idx, masked_idx] = apply_mask(embedded, plan);
    Tensor seq = prepend_cls(visible, student.at("cls"));
    EncodeResult enc = encode(seq, student, "encoder", cfg.encoder, /*training=*/false);
    Tensor cls_out = slice_rows(enc.final, 0, 1);
    Tensor patch_out = slice_rows(enc.final, 1, enc.final.shape[0]);
    Tensor grid = merge_tokens(patch_out, visible_idx, masked_idx, student.at("mask_token"), embedded.grid_t,
                               embedded.grid_f);
    Tensor pred = decode(grid, embedded.grid_t, embedded.grid_f, student, "decoder", cfg.decoder);
    Tensor masked_pred = select_masked(pred, masked_idx);
    Tensor masked_target = gather_rows(target.target, masked_idx);
    return ufo(cls_out, target.target_mean, masked_pred, masked_target, utterance_weight);
}

struct PretrainStepConfig {
    double utterance_weight = 1.0;
    double mask_ratio = 0.8;
    std::vector<BlockShape> block_shapes = {{5, 5}};
    int clone_batch = 16;
    uint64_t seed = 0;
};

struct StepResult {
    double utterance = 0.0;
    double frame = 0.0;
    double combined = 0.0;
    double grad_norm = 0.0;
};

struct TrainerCounters {
    long long teacher_forwards = 0;
};

// One optimizer step over a batch of prepared spectrograms: clone-mean within
// each clip, then clip-mean across the batch, backward, AdamW, EMA.
inline StepResult pretrain_batch_step(ModelState &student, ModelState &teacher,
                                      const std::vector<Spectrogram> &batch, const std::vector<uint64_t> &clip_ids,
                                      const ModelConfig &cfg, const PretrainStepConfig &step_cfg,
                                      OptimizerState &opt, const AdamWConfig &adamw, double lr, double tau,
                                      TrainerCounters *counters = nullptr) {
    if (batch.empty()) throw std::invalid_argument("pretrain_batch_step: empty batch");
    if (batch.size() != clip_ids.size()) throw std::invalid_argument("pretrain_batch_step: clip id count mismatch");

    GradTape tape;
    StepResult result;
    Tensor batch_total;
    {
        TapeScope scope(tape);
        for (size_t c = 0; c < batch.size(); ++c) {
            const Spectrogram &spec = batch[c];
            TeacherTarget target =
                compute_teacher_targets(teacher, spec, cfg, counters ? &counters->teacher_forwards : nullptr);
            PatchGrid embedded = embed_with_positions(spec, student, cfg.patch_size);
            CloneSet clones = make_clone_set(embedded.grid_t, embedded.grid_f, step_cfg.mask_ratio,
                                             step_cfg.block_shapes, step_cfg.clone_batch, step_cfg.seed, clip_ids[c]);
            std::vector<UfoLoss> per_clone;
            per_clone.reserve(clones.clones.size());
            for (const MaskPlan &plan : clones.clones) {
                per_clone.push_back(pretrain_clone_loss(student, embedded, plan, target, cfg, step_cfg.utterance_weight));
            }
            UfoLoss clip_loss = multi_clone_loss(per_clone);
            result.utterance += clip_loss.utterance;
            result.frame += clip_loss.frame;
            batch_total = c == 0 ? clip_loss.total : add(batch_total, clip_loss.total);
        }
        if (batch.size() > 1) batch_total = mul_scalar(batch_total, 1.0 / static_cast<double>(batch.size()));
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    result.utterance *= inv;
    result.frame *= inv;
    result.combined = batch_total.value();
    if (!std::isfinite(result.combined)) throw NumericalError("non-finite training loss");

    GradMap gm = tape.backward(batch_total);
    GradsByName grads;
    for (auto &[name, p] : student.params) {
        if (p.requires_grad) grads.emplace(name, gm.get_or_zeros(p));
    }
    result.grad_norm = grad_global_norm(grads);
    adamw_step(student, grads, opt, adamw, lr);
    ema_update(teacher, student, tau);
    return result;
}

}  // namespace eat

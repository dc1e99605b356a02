#pragma once

// End-to-end loops: pre-training with the utterance-frame objective,
// fine-tuning with a linear head on the CLS output (or mean pooling),
// evaluation with mAP / accuracy reports, ablation sweeps, and the
// inspect-mask audit tool.

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <mutex>
#include <thread>
#include <vector>

#include "eat/augment.hpp"
#include "eat/checkpoint.hpp"
#include "eat/config.hpp"
#include "eat/manifest.hpp"
#include "eat/metrics.hpp"
#include "eat/trainer.hpp"

namespace eat {

// ---------------------------------------------------------------------------
// Train records (one JSON object per line, fixed field order)
// ---------------------------------------------------------------------------

struct TrainRecord {
    long long step = 0;
    double l_u = 0.0;
    double l_f = 0.0;
    double l_ufo = 0.0;
    double lr = 0.0;
    double tau = 0.0;
    double grad_norm = 0.0;
    long long wall_ms = 0;

    std::string json_line() const {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "{\"step\":%lld,\"l_u\":%.17g,\"l_f\":%.17g,\"l_ufo\":%.17g,\"lr\":%.17g,\"tau\":%.17g,"
                      "\"grad_norm\":%.17g,\"wall_ms\":%lld}",
                      step, l_u, l_f, l_ufo, lr, tau, grad_norm, wall_ms);
        return buf;
    }
};

struct FinetuneRecord {
    long long step = 0;
    double loss = 0.0;
    double lr = 0.0;
    long long wall_ms = 0;

    std::string json_line() const {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "{\"step\":%lld,\"loss\":%.17g,\"lr\":%.17g,\"wall_ms\":%lld}", step, loss,
                      lr, wall_ms);
        return buf;
    }
};

// ---------------------------------------------------------------------------
// Clip preparation
// ---------------------------------------------------------------------------

struct PreparedClip {
    Spectrogram spec;
    std::vector<double> targets;  // multi-hot / one-hot over the class vocabulary
    int label_index = -1;         // single-label index, -1 when unlabeled
};

// read -> resample to 16 kHz -> log-mel -> normalize -> crop -> pad. Clips
// longer than target_frames are truncated here, explicitly, before padding.
inline PreparedClip prepare_clip(const Manifest &manifest, size_t row, const Config &cfg,
                                 const std::vector<std::string> &vocab) {
    PreparedClip out;
    AudioClip clip = read_wav(manifest.full_path(row));
    clip = resample(clip, cfg.sample_rate);
    Spectrogram spec = mel_spectrogram(clip, cfg.mel());
    spec = normalize(spec, cfg.norm_mean, cfg.norm_std);
    if (spec.frames > cfg.target_frames) {
        Spectrogram cropped = spec;
        cropped.frames = cfg.target_frames;
        cropped.values.resize(static_cast<size_t>(cfg.target_frames) * spec.bins);
        spec = std::move(cropped);
    }
    out.spec = pad_to_length(spec, cfg.target_frames);

    if (!vocab.empty()) {
        out.targets.assign(vocab.size(), 0.0);
        for (const std::string &label : manifest.rows[row].labels) {
            auto it = std::lower_bound(vocab.begin(), vocab.end(), label);
            if (it == vocab.end() || *it != label) {
                throw DataError("label '" + label + "' not in the class vocabulary");
            }
            int idx = static_cast<int>(it - vocab.begin());
            out.targets[static_cast<size_t>(idx)] = 1.0;
            out.label_index = idx;
        }
        if (!cfg.multilabel && manifest.rows[row].labels.size() > 1) {
            throw DataError("row " + manifest.rows[row].path + " has multiple labels in a single-label task");
        }
    }
    return out;
}

// Ordered parallel map: slot i is always filled by item i, so the result does
// not depend on worker count or scheduling.
template <class Fn>
inline void parallel_indexed(int n, int workers, Fn &&fn) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    int count = std::min(workers, n);
    pool.reserve(static_cast<size_t>(count));
    for (int w = 0; w < count; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        });
    }
    for (auto &t : pool) t.join();
}

inline std::vector<PreparedClip> prepare_batch(const Manifest &manifest, const std::vector<size_t> &rows,
                                               const Config &cfg, const std::vector<std::string> &vocab) {
    std::vector<PreparedClip> out(rows.size());
    std::exception_ptr error;
    std::mutex error_mutex;
    parallel_indexed(static_cast<int>(rows.size()), cfg.workers, [&](int i) {
        try {
            out[static_cast<size_t>(i)] = prepare_clip(manifest, rows[static_cast<size_t>(i)], cfg, vocab);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    });
    if (error) std::rethrow_exception(error);
    return out;
}

inline void shuffle_indices(std::vector<size_t> &idx, CounterRng &rng) {
    for (size_t i = idx.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.next_int(static_cast<int>(i)));
        std::swap(idx[i - 1], idx[j]);
    }
}

// Clip visit order for a step range. Deterministic mode walks the manifest in
// order; otherwise each epoch is shuffled from a seed-keyed stream (also
// reproducible, just not manifest-ordered).
inline size_t clip_row_for(uint64_t draw_index, size_t corpus_size, const Config &cfg) {
    if (cfg.deterministic) return static_cast<size_t>(draw_index % corpus_size);
    uint64_t epoch = draw_index / corpus_size;
    uint64_t pos = draw_index % corpus_size;
    // a seed-keyed random permutation of this epoch, evaluated lazily
    CounterRng rng(cfg.seed, hash_name("order"), epoch);
    std::vector<size_t> idx(corpus_size);
    for (size_t i = 0; i < corpus_size; ++i) idx[i] = i;
    shuffle_indices(idx, rng);
    return idx[static_cast<size_t>(pos)];
}

// ---------------------------------------------------------------------------
// Pre-training
// ---------------------------------------------------------------------------

struct PretrainRun {
    std::vector<TrainRecord> records;
    std::string final_checkpoint;
    std::string log_path;
};

inline std::string checkpoint_name(long long step) { return "ckpt_step" + std::to_string(step) + ".bin"; }

inline PretrainRun pretrain(const Config &cfg, const Manifest &manifest, const std::string &out_dir,
                            const std::string &resume_from = "") {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    ModelConfig model_cfg = cfg.model();

    ModelState student;
    ModelState teacher;
    OptimizerState opt;
    long long start_step = 0;
    if (resume_from.empty()) {
        student = init_student(model_cfg, cfg.seed);
        teacher = make_teacher(student);
    } else {
        TrainState state = load_train_checkpoint(resume_from);
        if (state.kind != "pretrain") throw DataError("checkpoint " + resume_from + " is not a pre-training checkpoint");
        student = std::move(state.student);
        teacher = std::move(state.teacher);
        opt = std::move(state.opt);
        start_step = state.step;
    }

    LrSchedule lr_schedule = cfg.lr();
    EmaState ema = cfg.ema();
    AdamWConfig adamw = cfg.adamw();
    PretrainStepConfig step_cfg = cfg.pretrain_step();
    TrainerCounters counters;

    PretrainRun run;
    run.log_path = (std::filesystem::path(out_dir) / "train_log.jsonl").string();
    std::ofstream log(run.log_path, resume_from.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw DataError("cannot write log: " + run.log_path);

    std::string last_good;
    auto save_state = [&](long long step) {
        TrainState state;
        state.student = student;  // shares buffers; serialization copies bytes
        state.teacher = teacher;
        state.opt = opt;
        state.step = step;
        state.seed = cfg.seed;
        state.config_text = config_to_text(cfg);
        state.kind = "pretrain";
        std::string path = (std::filesystem::path(out_dir) / checkpoint_name(step)).string();
        save_train_checkpoint(path, state);
        last_good = path;
        return path;
    };

    try {
        for (long long step = start_step; step < cfg.steps; ++step) {
            auto t0 = std::chrono::steady_clock::now();
            std::vector<size_t> rows(static_cast<size_t>(cfg.batch_size));
            std::vector<uint64_t> clip_ids(static_cast<size_t>(cfg.batch_size));
            for (int i = 0; i < cfg.batch_size; ++i) {
                uint64_t draw = static_cast<uint64_t>(step) * cfg.batch_size + static_cast<uint64_t>(i);
                rows[static_cast<size_t>(i)] = clip_row_for(draw, manifest.rows.size(), cfg);
                clip_ids[static_cast<size_t>(i)] = draw;
            }
            std::vector<PreparedClip> clips = prepare_batch(manifest, rows, cfg, {});
            std::vector<Spectrogram> specs;
            specs.reserve(clips.size());
            for (auto &c : clips) specs.push_back(std::move(c.spec));

            double lr = lr_at(lr_schedule, step);
            double tau = tau_at(ema, step);
            StepResult res =
                pretrain_batch_step(student, teacher, specs, clip_ids, model_cfg, step_cfg, opt, adamw, lr, tau,
                                    &counters);
            auto t1 = std::chrono::steady_clock::now();

            TrainRecord rec;
            rec.step = step + 1;
            rec.l_u = res.utterance;
            rec.l_f = res.frame;
            rec.l_ufo = res.combined;
            rec.lr = lr;
            rec.tau = tau;
            rec.grad_norm = res.grad_norm;
            rec.wall_ms = cfg.deterministic
                              ? 0
                              : std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
            log << rec.json_line() << "\n";
            log.flush();
            run.records.push_back(rec);

            if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 && step + 1 < cfg.steps) {
                save_state(step + 1);
            }
        }
    } catch (const NumericalError &e) {
        throw NumericalError(std::string(e.what()) + "; last good checkpoint: " +
                             (last_good.empty() ? "(none)" : last_good));
    }
    run.final_checkpoint = save_state(cfg.steps);
    return run;
}

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

inline void check_model_compat(const Config &ours, const Config &ckpt) {
    auto mismatch = [](const std::string &key) {
        throw DataError("checkpoint model geometry differs from config (" + key + ")");
    };
    if (ours.embed_dim != ckpt.embed_dim) mismatch("embed_dim");
    if (ours.encoder_layers != ckpt.encoder_layers) mismatch("encoder_layers");
    if (ours.heads != ckpt.heads) mismatch("heads");
    if (ours.mlp_ratio != ckpt.mlp_ratio) mismatch("mlp_ratio");
    if (ours.patch_size != ckpt.patch_size) mismatch("patch_size");
    if (ours.mel_bins != ckpt.mel_bins) mismatch("mel_bins");
    if (ours.target_frames != ckpt.target_frames) mismatch("target_frames");
}

// Encoder + CLS + linear head; the pre-training decoder and mask token are
// dropped.
inline ModelState init_finetune_model(const ModelState &pretrained, int classes, int embed_dim, uint64_t seed) {
    ModelState model;
    for (const auto &[name, t] : pretrained.params) {
        if (name.rfind("decoder.", 0) == 0 || name == "mask_token") continue;
        Tensor copy = t.clone();
        copy.requires_grad = true;
        model.params.emplace(name, std::move(copy));
    }
    model.add("head.w", init_trunc_normal("head.w", {embed_dim, classes}, 0.02, seed));
    model.add("head.b", init_const({classes}, 0.0));
    return model;
}

inline Tensor finetune_logits(const ModelState &model, const Spectrogram &spec, const ModelConfig &cfg,
                              const std::string &prediction_mode, bool training, CounterRng *rng) {
    PatchGrid pg = embed_with_positions(spec, model, cfg.patch_size);
    Tensor seq = prepend_cls(pg.embeddings, model.at("cls"));
    EncodeResult enc = encode(seq, model, "encoder", cfg.encoder, training, rng);
    Tensor feature;
    if (prediction_mode == "cls") {
        feature = slice_rows(enc.final, 0, 1);
    } else if (prediction_mode == "mean_pool") {
        feature = mean_rows(slice_rows(enc.final, 1, enc.final.shape[0]));
    } else {
        throw std::invalid_argument("prediction_mode must be cls or mean_pool");
    }
    return add(matmul(feature, model.at("head.w")), model.at("head.b"));
}

struct FinetuneRun {
    std::vector<FinetuneRecord> records;
    std::string final_checkpoint;
    std::string log_path;
};

inline std::vector<double> class_sample_weights(const Manifest &manifest) {
    std::vector<long long> counts(manifest.class_names.size(), 0);
    for (const auto &row : manifest.rows) {
        for (const auto &label : row.labels) {
            int idx = manifest.class_index(label);
            if (idx >= 0) ++counts[static_cast<size_t>(idx)];
        }
    }
    std::vector<double> weights(manifest.rows.size(), 0.0);
    for (size_t r = 0; r < manifest.rows.size(); ++r) {
        const auto &labels = manifest.rows[r].labels;
        double w = 0.0;
        for (const auto &label : labels) {
            int idx = manifest.class_index(label);
            if (idx >= 0 && counts[static_cast<size_t>(idx)] > 0) w += 1.0 / counts[static_cast<size_t>(idx)];
        }
        weights[r] = labels.empty() ? 0.0 : w / static_cast<double>(labels.size());
    }
    return weights;
}

inline size_t weighted_draw(const std::vector<double> &cumulative, double total, CounterRng &rng) {
    double x = rng.next_double() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
    size_t i = static_cast<size_t>(it - cumulative.begin());
    return std::min(i, cumulative.size() - 1);
}

inline FinetuneRun finetune(const Config &cfg, const std::string &init_ckpt, const Manifest &manifest,
                            const std::string &out_dir, bool head_only = false) {
    cfg.validate();
    if (cfg.loss_function != "bce" && cfg.loss_function != "ce") {
        throw DataError("fine-tuning requires loss_function = bce or ce");
    }
    if (manifest.class_names.empty()) throw DataError("fine-tuning manifest has no labels");
    for (const auto &row : manifest.rows) {
        if (row.labels.empty()) throw DataError("fine-tuning manifest row '" + row.path + "' is unlabeled");
    }
    std::filesystem::create_directories(out_dir);

    TrainState init = load_train_checkpoint(init_ckpt);
    Config init_cfg = parse_config_text(init.config_text);
    check_model_compat(cfg, init_cfg);
    ModelConfig model_cfg = cfg.model();

    const int classes = static_cast<int>(manifest.class_names.size());
    ModelState model = init_finetune_model(init.student, classes, cfg.embed_dim, cfg.seed);
    if (head_only) {
        for (auto &[name, t] : model.params) t.requires_grad = name.rfind("head.", 0) == 0;
    }

    OptimizerState opt;
    LrSchedule lr_schedule = cfg.lr();
    AdamWConfig adamw = cfg.adamw();

    // precompute features of the sampling distribution when enabled
    std::vector<double> weights;
    std::vector<double> cumulative;
    double weight_total = 0.0;
    if (cfg.weighted_sampling) {
        weights = class_sample_weights(manifest);
        cumulative.resize(weights.size());
        for (size_t i = 0; i < weights.size(); ++i) {
            weight_total += weights[i];
            cumulative[i] = weight_total;
        }
        if (weight_total <= 0.0) throw DataError("weighted sampling: no labeled rows");
    }

    FinetuneRun run;
    run.log_path = (std::filesystem::path(out_dir) / "finetune_log.jsonl").string();
    std::ofstream log(run.log_path, std::ios::trunc);
    if (!log) throw DataError("cannot write log: " + run.log_path);

    std::string classes_joined;
    for (size_t i = 0; i < manifest.class_names.size(); ++i) {
        if (i) classes_joined += ";";
        classes_joined += manifest.class_names[i];
    }

    auto save_state = [&](long long step) {
        TrainState state;
        state.student = model;
        state.opt = opt;
        state.step = step;
        state.seed = cfg.seed;
        state.config_text = config_to_text(cfg);
        state.kind = "finetune";
        state.classes = classes_joined;
        std::string path = (std::filesystem::path(out_dir) / checkpoint_name(step)).string();
        save_train_checkpoint(path, state);
        return path;
    };

    const size_t corpus = manifest.rows.size();
    std::string last_good;
    try {
        for (long long step = 0; step < cfg.steps; ++step) {
            auto t0 = std::chrono::steady_clock::now();
            std::vector<size_t> rows(static_cast<size_t>(cfg.batch_size));
            for (int i = 0; i < cfg.batch_size; ++i) {
                uint64_t draw = static_cast<uint64_t>(step) * cfg.batch_size + static_cast<uint64_t>(i);
                if (cfg.weighted_sampling) {
                    CounterRng rng(cfg.seed, hash_name("sample"), draw);
                    rows[static_cast<size_t>(i)] = weighted_draw(cumulative, weight_total, rng);
                } else {
                    rows[static_cast<size_t>(i)] = clip_row_for(draw, corpus, cfg);
                }
            }
            std::vector<PreparedClip> clips = prepare_batch(manifest, rows, cfg, manifest.class_names);

            GradTape tape;
            Tensor batch_loss;
            {
                TapeScope scope(tape);
                for (int i = 0; i < cfg.batch_size; ++i) {
                    PreparedClip &clip = clips[static_cast<size_t>(i)];
                    uint64_t draw = static_cast<uint64_t>(step) * cfg.batch_size + static_cast<uint64_t>(i);
                    CounterRng aug_rng(cfg.seed, hash_name("augment"), draw);

                    Spectrogram spec = clip.spec;
                    std::vector<double> targets = clip.targets;
                    if (cfg.mixup > 0.0 && cfg.batch_size > 1) {
                        int other = aug_rng.next_int(cfg.batch_size);
                        MixedExample mixed = mixup(spec, clips[static_cast<size_t>(other)].spec, targets,
                                                   clips[static_cast<size_t>(other)].targets, cfg.mixup, aug_rng);
                        spec = std::move(mixed.spec);
                        targets = std::move(mixed.targets);
                    }
                    if (cfg.roll_augmentation) spec = roll(spec, aug_rng);
                    if (cfg.noise_augmentation) spec = add_noise(spec, cfg.noise_snr_min_db, cfg.noise_snr_max_db, aug_rng);
                    if (cfg.specaug > 0.0) spec = specaug(spec, cfg.specaug, cfg.specaug, aug_rng);

                    CounterRng path_rng(cfg.seed, hash_name("droppath"), draw);
                    Tensor logits = finetune_logits(model, spec, model_cfg, cfg.prediction_mode, true, &path_rng);
                    Tensor target_row({1, classes}, targets);
                    Tensor loss = cfg.loss_function == "bce" ? bce_with_logits(logits, target_row)
                                                             : softmax_cross_entropy(logits, target_row);
                    batch_loss = i == 0 ? loss : add(batch_loss, loss);
                }
                if (cfg.batch_size > 1) batch_loss = mul_scalar(batch_loss, 1.0 / cfg.batch_size);
            }
            double loss_value = batch_loss.value();
            if (!std::isfinite(loss_value)) throw NumericalError("non-finite fine-tuning loss");

            GradMap gm = tape.backward(batch_loss);
            GradsByName grads;
            for (auto &[name, p] : model.params) {
                if (p.requires_grad) grads.emplace(name, gm.get_or_zeros(p));
            }
            double lr = lr_at(lr_schedule, step);
            adamw_step(model, grads, opt, adamw, lr);
            auto t1 = std::chrono::steady_clock::now();

            FinetuneRecord rec;
            rec.step = step + 1;
            rec.loss = loss_value;
            rec.lr = lr;
            rec.wall_ms = cfg.deterministic
                              ? 0
                              : std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
            log << rec.json_line() << "\n";
            run.records.push_back(rec);

            if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 && step + 1 < cfg.steps) {
                last_good = save_state(step + 1);
            }
        }
    } catch (const NumericalError &e) {
        throw NumericalError(std::string(e.what()) + "; last good checkpoint: " +
                             (last_good.empty() ? "(none)" : last_good));
    }
    run.final_checkpoint = save_state(cfg.steps);
    return run;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
    nlohmann::ordered_json json;
    double primary_metric = 0.0;  // mAP or accuracy
};

inline std::vector<std::string> split_classes(const std::string &joined) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= joined.size() && !joined.empty()) {
        size_t semi = joined.find(';', start);
        std::string item = semi == std::string::npos ? joined.substr(start) : joined.substr(start, semi - start);
        if (!item.empty()) out.push_back(item);
        if (semi == std::string::npos) break;
        start = semi + 1;
    }
    return out;
}

// Eval mode: no augmentation, no droppath, no dropout. The task kind and
// class vocabulary come from the checkpoint.
inline EvalReport evaluate(const std::string &ckpt_path, const Manifest &manifest) {
    TrainState state = load_train_checkpoint(ckpt_path);
    if (state.kind != "finetune") {
        throw DataError("checkpoint " + ckpt_path + " has no classification head (run finetune first)");
    }
    Config cfg = parse_config_text(state.config_text);
    cfg.dropout = 0.0;
    cfg.drop_path = 0.0;
    ModelConfig model_cfg = cfg.model();
    std::vector<std::string> vocab = split_classes(state.classes);
    if (vocab.empty()) throw DataError("checkpoint has an empty class vocabulary");
    for (const auto &name : manifest.class_names) {
        if (!std::binary_search(vocab.begin(), vocab.end(), name)) {
            throw DataError("evaluation label '" + name + "' unknown to the checkpoint");
        }
    }
    for (const auto &row : manifest.rows) {
        if (row.labels.empty()) throw DataError("evaluation row '" + row.path + "' is unlabeled");
        if (!cfg.multilabel && row.labels.size() > 1) {
            throw DataError("single-label checkpoint but row '" + row.path + "' has several labels");
        }
    }

    const int classes = static_cast<int>(vocab.size());
    std::vector<std::vector<double>> scores(manifest.rows.size());
    std::vector<std::vector<int>> target_rows(manifest.rows.size());
    std::vector<int> predicted(manifest.rows.size()), truth(manifest.rows.size());

    Config prep_cfg = cfg;
    std::exception_ptr error;
    std::mutex error_mutex;
    parallel_indexed(static_cast<int>(manifest.rows.size()), cfg.workers, [&](int i) {
        try {
            PreparedClip clip = prepare_clip(manifest, static_cast<size_t>(i), prep_cfg, vocab);
            Tensor logits = finetune_logits(state.student, clip.spec, model_cfg, cfg.prediction_mode, false, nullptr);
            std::vector<double> row(static_cast<size_t>(classes));
            int argmax = 0;
            for (int c = 0; c < classes; ++c) {
                row[static_cast<size_t>(c)] = 1.0 / (1.0 + std::exp(-logits[c]));
                if (logits[c] > logits[argmax]) argmax = c;
            }
            scores[static_cast<size_t>(i)] = std::move(row);
            std::vector<int> trow(static_cast<size_t>(classes), 0);
            for (int c = 0; c < classes; ++c) trow[static_cast<size_t>(c)] = clip.targets[static_cast<size_t>(c)] > 0.5;
            target_rows[static_cast<size_t>(i)] = std::move(trow);
            predicted[static_cast<size_t>(i)] = argmax;
            truth[static_cast<size_t>(i)] = clip.label_index;
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    });
    if (error) std::rethrow_exception(error);

    EvalReport report;
    nlohmann::ordered_json j;
    j["checkpoint"] = ckpt_path;
    j["examples"] = manifest.rows.size();
    j["classes"] = vocab;
    if (cfg.multilabel) {
        MapResult res = map_multilabel(scores, target_rows);
        j["task"] = "multilabel";
        j["map"] = res.map;
        j["ap"] = res.per_class_ap;
        j["skipped_classes"] = res.skipped_classes;
        report.primary_metric = res.map;
    } else {
        double acc = accuracy(predicted, truth);
        j["task"] = "single_label";
        j["accuracy"] = acc;
        std::vector<long long> per_class_correct(static_cast<size_t>(classes), 0);
        std::vector<long long> per_class_total(static_cast<size_t>(classes), 0);
        for (size_t i = 0; i < truth.size(); ++i) {
            ++per_class_total[static_cast<size_t>(truth[i])];
            if (truth[i] == predicted[i]) ++per_class_correct[static_cast<size_t>(truth[i])];
        }
        std::vector<double> per_class(static_cast<size_t>(classes), 0.0);
        for (int c = 0; c < classes; ++c) {
            per_class[static_cast<size_t>(c)] =
                per_class_total[static_cast<size_t>(c)] > 0
                    ? static_cast<double>(per_class_correct[static_cast<size_t>(c)]) / per_class_total[static_cast<size_t>(c)]
                    : 0.0;
        }
        j["per_class_accuracy"] = per_class;
        report.primary_metric = acc;
    }
    report.json = std::move(j);
    return report;
}

// ---------------------------------------------------------------------------
// Ablation harness and mask inspection
// ---------------------------------------------------------------------------

struct AblationPoint {
    std::string axis;
    std::string value;
    double final_l_ufo = 0.0;
    double final_l_u = 0.0;
    double final_l_f = 0.0;
};

inline nlohmann::ordered_json ablation_json(const AblationPoint &p) {
    nlohmann::ordered_json j;
    j["axis"] = p.axis;
    j["value"] = p.value;
    j["final_l_ufo"] = p.final_l_ufo;
    j["final_l_u"] = p.final_l_u;
    j["final_l_f"] = p.final_l_f;
    return j;
}

inline std::vector<AblationPoint> run_lambda_sweep(Config base, const Manifest &manifest, const std::string &out_dir,
                                                   const std::vector<double> &lambdas) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out((std::filesystem::path(out_dir) / "lambda_sweep.jsonl").string());
    std::vector<AblationPoint> points;
    for (double lambda : lambdas) {
        Config cfg = base;
        cfg.utterance_weight = lambda;
        std::string tag = "lambda_" + config_detail::fmt_double(lambda);
        PretrainRun run = pretrain(cfg, manifest, (std::filesystem::path(out_dir) / tag).string());
        AblationPoint p;
        p.axis = "utterance_weight";
        p.value = config_detail::fmt_double(lambda);
        p.final_l_ufo = run.records.back().l_ufo;
        p.final_l_u = run.records.back().l_u;
        p.final_l_f = run.records.back().l_f;
        out << ablation_json(p).dump() << "\n";
        points.push_back(p);
    }
    return points;
}

inline std::vector<AblationPoint> run_block_sweep(Config base, const Manifest &manifest, const std::string &out_dir,
                                                  const std::vector<std::string> &block_configs) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out((std::filesystem::path(out_dir) / "block_sweep.jsonl").string());
    std::vector<AblationPoint> points;
    for (const std::string &blocks : block_configs) {
        Config cfg = base;
        cfg.block_shapes = blocks;
        std::string tag = "block_" + blocks;
        for (auto &ch : tag) {
            if (ch == ',' ) ch = '_';
        }
        PretrainRun run = pretrain(cfg, manifest, (std::filesystem::path(out_dir) / tag).string());
        AblationPoint p;
        p.axis = "block_shapes";
        p.value = blocks;
        p.final_l_ufo = run.records.back().l_ufo;
        p.final_l_u = run.records.back().l_u;
        p.final_l_f = run.records.back().l_f;
        out << ablation_json(p).dump() << "\n";
        points.push_back(p);
    }
    return points;
}

// Text art plus exact keep count; optionally writes the PGM.
inline std::string inspect_mask(int grid_t, int grid_f, double ratio, const std::vector<BlockShape> &shapes,
                                uint64_t seed, const std::string &pgm_path = "") {
    CounterRng rng(seed, 0, 0);
    BlockShape block = sample_block_shape(shapes, rng);
    MaskPlan plan = inverse_block_mask_with_rng(grid_t, grid_f, ratio, block, rng, seed);
    std::string out = mask_to_text(plan);
    out += "kept " + std::to_string(plan.keep_count()) + " / " + std::to_string(plan.cells()) + "\n";
    if (!pgm_path.empty()) write_mask_pgm(plan, pgm_path);
    return out;
}

}  // namespace eat

#pragma once

// Flat key = value configuration ('#' comments). Every pre-training /
// fine-tuning hyperparameter has a key here, including the ones that only
// matter for bookkeeping. Unknown keys are rejected.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eat/bootstrap.hpp"
#include "eat/frontend.hpp"
#include "eat/masking.hpp"
#include "eat/trainer.hpp"

namespace eat {

struct Config {
    // model geometry
    int embed_dim = 64;
    int encoder_layers = 4;
    int heads = 4;
    double mlp_ratio = 4.0;
    int decoder_layers = 6;
    int patch_size = 16;
    int mel_bins = 128;
    int target_frames = 1024;

    // frontend
    int sample_rate = 16000;
    double norm_mean = -4.268;  // dataset mean for normalization
    double norm_std = 4.569;    // dataset std for normalization

    // optimizer and schedule
    std::string optimizer = "adamw";
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.05;
    std::string lr_schedule = "cosine";
    double peak_lr = 0.0005;
    double min_lr = 0.000001;
    long long steps = 1000;
    long long warmup_steps = 100;
    int batch_size = 12;
    int clone_batch = 16;
    int gpus = 1;  // accepted for completeness; this build is single-process

    // regularization and augmentation
    double dropout = 0.0;
    double drop_path = 0.0;
    bool weighted_sampling = false;
    long long weighted_sampling_size = 0;
    bool roll_augmentation = false;
    bool noise_augmentation = false;
    double specaug = 0.0;  // max masked fraction per axis, one span per axis
    double mixup = 0.0;    // Beta(mixup, mixup) concentration; 0 disables
    double noise_snr_min_db = 20.0;
    double noise_snr_max_db = 40.0;

    // task
    bool multilabel = false;
    std::string loss_function = "mse";  // mse (pre-training), bce, ce
    std::string prediction_mode = "cls";  // cls | mean_pool

    // masking and objective
    double mask_ratio = 0.8;
    std::string block_shapes = "5x5";  // e.g. "5x5,6x4,8x3"
    double utterance_weight = 1.0;

    // ema teacher
    double tau_start = 0.999;
    double tau_end = 0.99999;

    // run control
    uint64_t seed = 0;
    bool deterministic = false;
    long long checkpoint_interval = 100;
    int workers = 1;
    double clip_norm = 0.0;

    ModelConfig model() const {
        ModelConfig m;
        m.encoder.layers = encoder_layers;
        m.encoder.embed_dim = embed_dim;
        m.encoder.heads = heads;
        m.encoder.mlp_ratio = mlp_ratio;
        m.encoder.droppath_rate = drop_path;
        m.encoder.dropout = dropout;
        m.decoder.layers = decoder_layers;
        m.decoder.embed_dim = embed_dim;
        m.patch_size = patch_size;
        m.mel_bins = mel_bins;
        m.target_frames = target_frames;
        m.validate();
        return m;
    }

    MelConfig mel() const {
        MelConfig c;
        c.sample_rate = sample_rate;
        c.n_mels = mel_bins;
        return c;
    }

    AdamWConfig adamw() const {
        AdamWConfig c;
        c.beta1 = beta1;
        c.beta2 = beta2;
        c.weight_decay = weight_decay;
        c.clip_norm = clip_norm;
        return c;
    }

    LrSchedule lr() const {
        LrSchedule s;
        s.peak = peak_lr;
        s.min_lr = min_lr;
        s.warmup_steps = warmup_steps;
        s.total_steps = steps;
        return s;
    }

    EmaState ema() const {
        EmaState e;
        e.tau_start = tau_start;
        e.tau_end = tau_end;
        e.total_steps = steps;
        e.validate();
        return e;
    }

    std::vector<BlockShape> parsed_block_shapes() const {
        std::vector<BlockShape> shapes;
        std::stringstream ss(block_shapes);
        std::string item;
        while (std::getline(ss, item, ',')) {
            auto x = item.find('x');
            if (x == std::string::npos) throw DataError("bad block shape '" + item + "', expected HxW");
            BlockShape b;
            b.h = std::stoi(item.substr(0, x));
            b.w = std::stoi(item.substr(x + 1));
            shapes.push_back(b);
        }
        if (shapes.empty()) throw DataError("block_shapes is empty");
        return shapes;
    }

    PretrainStepConfig pretrain_step() const {
        PretrainStepConfig s;
        s.utterance_weight = utterance_weight;
        s.mask_ratio = mask_ratio;
        s.block_shapes = parsed_block_shapes();
        s.clone_batch = clone_batch;
        s.seed = seed;
        return s;
    }

    void validate() const {
        model();
        if (optimizer != "adamw") throw DataError("unsupported optimizer '" + optimizer + "'");
        if (lr_schedule != "cosine") throw DataError("unsupported lr schedule '" + lr_schedule + "'");
        if (loss_function != "mse" && loss_function != "bce" && loss_function != "ce") {
            throw DataError("unsupported loss function '" + loss_function + "'");
        }
        if (prediction_mode != "cls" && prediction_mode != "mean_pool") {
            throw DataError("prediction_mode must be cls or mean_pool");
        }
        if (batch_size < 1 || clone_batch < 1 || steps < 1) throw DataError("batch_size, clone_batch, steps must be >= 1");
        if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw DataError("mask_ratio must lie in (0, 1)");
        if (specaug < 0.0 || specaug >= 1.0) throw DataError("specaug fraction must lie in [0, 1)");
        if (mixup < 0.0) throw DataError("mixup must be >= 0");
        if (workers < 1) throw DataError("workers must be >= 1");
        parsed_block_shapes();
        ema();
    }
};

namespace config_detail {

inline std::string trim(const std::string &s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string &v, const std::string &key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw DataError("config: bad boolean '" + v + "' for " + key);
}

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace config_detail

inline void apply_config_entry(Config &c, const std::string &key, const std::string &value) {
    using config_detail::parse_bool;
    try {
        if (key == "embed_dim") c.embed_dim = std::stoi(value);
        else if (key == "encoder_layers") c.encoder_layers = std::stoi(value);
        else if (key == "heads") c.heads = std::stoi(value);
        else if (key == "mlp_ratio") c.mlp_ratio = std::stod(value);
        else if (key == "decoder_layers") c.decoder_layers = std::stoi(value);
        else if (key == "patch_size") c.patch_size = std::stoi(value);
        else if (key == "mel_bins") c.mel_bins = std::stoi(value);
        else if (key == "target_frames") c.target_frames = std::stoi(value);
        else if (key == "sample_rate") c.sample_rate = std::stoi(value);
        else if (key == "norm_mean") c.norm_mean = std::stod(value);
        else if (key == "norm_std") c.norm_std = std::stod(value);
        else if (key == "optimizer") c.optimizer = value;
        else if (key == "beta1") c.beta1 = std::stod(value);
        else if (key == "beta2") c.beta2 = std::stod(value);
        else if (key == "weight_decay") c.weight_decay = std::stod(value);
        else if (key == "lr_schedule") c.lr_schedule = value;
        else if (key == "peak_lr") c.peak_lr = std::stod(value);
        else if (key == "min_lr") c.min_lr = std::stod(value);
        else if (key == "steps") c.steps = std::stoll(value);
        else if (key == "warmup_steps") c.warmup_steps = std::stoll(value);
        else if (key == "batch_size") c.batch_size = std::stoi(value);
        else if (key == "clone_batch") c.clone_batch = std::stoi(value);
        else if (key == "gpus") c.gpus = std::stoi(value);
        else if (key == "dropout") c.dropout = std::stod(value);
        else if (key == "drop_path") c.drop_path = std::stod(value);
        else if (key == "weighted_sampling") c.weighted_sampling = parse_bool(value, key);
        else if (key == "weighted_sampling_size") c.weighted_sampling_size = std::stoll(value);
        else if (key == "roll_augmentation") c.roll_augmentation = parse_bool(value, key);
        else if (key == "noise_augmentation") c.noise_augmentation = parse_bool(value, key);
        else if (key == "specaug") c.specaug = std::stod(value);
        else if (key == "mixup") c.mixup = std::stod(value);
        else if (key == "noise_snr_min_db") c.noise_snr_min_db = std::stod(value);
        else if (key == "noise_snr_max_db") c.noise_snr_max_db = std::stod(value);
        else if (key == "multilabel") c.multilabel = parse_bool(value, key);
        else if (key == "loss_function") c.loss_function = value;
        else if (key == "prediction_mode") c.prediction_mode = value;
        else if (key == "mask_ratio") c.mask_ratio = std::stod(value);
        else if (key == "block_shapes") c.block_shapes = value;
        else if (key == "utterance_weight") c.utterance_weight = std::stod(value);
        else if (key == "tau_start") c.tau_start = std::stod(value);
        else if (key == "tau_end") c.tau_end = std::stod(value);
        else if (key == "seed") c.seed = static_cast<uint64_t>(std::stoull(value));
        else if (key == "deterministic") c.deterministic = parse_bool(value, key);
        else if (key == "checkpoint_interval") c.checkpoint_interval = std::stoll(value);
        else if (key == "workers") c.workers = std::stoi(value);
        else if (key == "clip_norm") c.clip_norm = std::stod(value);
        else throw DataError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument &) {
        throw DataError("config: bad value '" + value + "' for " + key);
    } catch (const std::out_of_range &) {
        throw DataError("config: value out of range '" + value + "' for " + key);
    }
}

inline Config parse_config_text(const std::string &text) {
    Config c;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = config_detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = config_detail::trim(line.substr(0, eq));
        std::string value = config_detail::trim(line.substr(eq + 1));
        apply_config_entry(c, key, value);
    }
    c.validate();
    return c;
}

inline Config load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// Round-trippable snapshot, fixed key order.
inline std::string config_to_text(const Config &c) {
    using config_detail::fmt_double;
    std::ostringstream o;
    o << "embed_dim = " << c.embed_dim << "\n";
    o << "encoder_layers = " << c.encoder_layers << "\n";
    o << "heads = " << c.heads << "\n";
    o << "mlp_ratio = " << fmt_double(c.mlp_ratio) << "\n";
    o << "decoder_layers = " << c.decoder_layers << "\n";
    o << "patch_size = " << c.patch_size << "\n";
    o << "mel_bins = " << c.mel_bins << "\n";
    o << "target_frames = " << c.target_frames << "\n";
    o << "sample_rate = " << c.sample_rate << "\n";
    o << "norm_mean = " << fmt_double(c.norm_mean) << "\n";
    o << "norm_std = " << fmt_double(c.norm_std) << "\n";
    o << "optimizer = " << c.optimizer << "\n";
    o << "beta1 = " << fmt_double(c.beta1) << "\n";
    o << "beta2 = " << fmt_double(c.beta2) << "\n";
    o << "weight_decay = " << fmt_double(c.weight_decay) << "\n";
    o << "lr_schedule = " << c.lr_schedule << "\n";
    o << "peak_lr = " << fmt_double(c.peak_lr) << "\n";
    o << "min_lr = " << fmt_double(c.min_lr) << "\n";
    o << "steps = " << c.steps << "\n";
    o << "warmup_steps = " << c.warmup_steps << "\n";
    o << "batch_size = " << c.batch_size << "\n";
    o << "clone_batch = " << c.clone_batch << "\n";
    o << "gpus = " << c.gpus << "\n";
    o << "dropout = " << fmt_double(c.dropout) << "\n";
    o << "drop_path = " << fmt_double(c.drop_path) << "\n";
    o << "weighted_sampling = " << (c.weighted_sampling ? "true" : "false") << "\n";
    o << "weighted_sampling_size = " << c.weighted_sampling_size << "\n";
    o << "roll_augmentation = " << (c.roll_augmentation ? "true" : "false") << "\n";
    o << "noise_augmentation = " << (c.noise_augmentation ? "true" : "false") << "\n";
    o << "specaug = " << fmt_double(c.specaug) << "\n";
    o << "mixup = " << fmt_double(c.mixup) << "\n";
    o << "noise_snr_min_db = " << fmt_double(c.noise_snr_min_db) << "\n";
    o << "noise_snr_max_db = " << fmt_double(c.noise_snr_max_db) << "\n";
    o << "multilabel = " << (c.multilabel ? "true" : "false") << "\n";
    o << "loss_function = " << c.loss_function << "\n";
    o << "prediction_mode = " << c.prediction_mode << "\n";
    o << "mask_ratio = " << fmt_double(c.mask_ratio) << "\n";
    o << "block_shapes = " << c.block_shapes << "\n";
    o << "utterance_weight = " << fmt_double(c.utterance_weight) << "\n";
    o << "tau_start = " << fmt_double(c.tau_start) << "\n";
    o << "tau_end = " << fmt_double(c.tau_end) << "\n";
    o << "seed = " << c.seed << "\n";
    o << "deterministic = " << (c.deterministic ? "true" : "false") << "\n";
    o << "checkpoint_interval = " << c.checkpoint_interval << "\n";
    o << "workers = " << c.workers << "\n";
    o << "clip_norm = " << fmt_double(c.clip_norm) << "\n";
    return o.str();
}

}  // namespace eat

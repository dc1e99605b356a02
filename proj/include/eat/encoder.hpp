#pragma once

// Pre-norm transformer encoder shared by the student (visible patches + CLS)
// and the teacher (full grid). Captures every block's output so the teacher
// can average across layers.

#include <cmath>
#include <string>
#include <vector>

#include "eat/autodiff.hpp"
#include "eat/model.hpp"
#include "eat/rng.hpp"
#include "eat/tensor.hpp"

namespace eat {

struct EncoderConfig {
    int layers = 4;
    int embed_dim = 64;
    int heads = 4;
    double mlp_ratio = 4.0;
    double droppath_rate = 0.0;
    double dropout = 0.0;

    int mlp_hidden() const { return static_cast<int>(embed_dim * mlp_ratio); }

    void validate() const {
        if (embed_dim % heads != 0) {
            throw std::invalid_argument("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                                        std::to_string(heads));
        }
        if (layers < 0) throw std::invalid_argument("negative layer count");
    }
};

struct LayerOutputs {
    std::vector<Tensor> layers;  // one (seq_len x E) tensor per block, post-residual
};

struct EncodeResult {
    Tensor final;
    LayerOutputs layers;
};

inline void init_encoder_params(ModelState &ms, const std::string &prefix, const EncoderConfig &cfg, uint64_t seed) {
    cfg.validate();
    const int e = cfg.embed_dim, hid = cfg.mlp_hidden();
    for (int i = 0; i < cfg.layers; ++i) {
        std::string b = prefix + ".block" + std::to_string(i);
        ms.add(b + ".ln1.gain", init_const({e}, 1.0));
        ms.add(b + ".ln1.bias", init_const({e}, 0.0));
        for (const char *proj : {"wq", "wk", "wv", "wo"}) {
            ms.add(b + ".attn." + proj, init_trunc_normal(b + ".attn." + proj, {e, e}, 0.02, seed));
        }
        // no key bias: a shared shift on every key moves each softmax row's
        // logits uniformly, so the loss is exactly invariant to it
        for (const char *bias : {"bq", "bv", "bo"}) {
            ms.add(b + ".attn." + bias, init_const({e}, 0.0));
        }
        ms.add(b + ".ln2.gain", init_const({e}, 1.0));
        ms.add(b + ".ln2.bias", init_const({e}, 0.0));
        ms.add(b + ".mlp.fc1.w", init_trunc_normal(b + ".mlp.fc1.w", {e, hid}, 0.02, seed));
        ms.add(b + ".mlp.fc1.b", init_const({hid}, 0.0));
        ms.add(b + ".mlp.fc2.w", init_trunc_normal(b + ".mlp.fc2.w", {hid, e}, 0.02, seed));
        ms.add(b + ".mlp.fc2.b", init_const({e}, 0.0));
    }
}

// Scaled dot-product attention over already-projected q/k/v, heads split by
// column range, concatenated and passed through the output projection.
inline Tensor attention(const Tensor &q, const Tensor &k, const Tensor &v, int heads, const Tensor &wo,
                        const Tensor &bo) {
    const int e = q.shape[1];
    if (e % heads != 0) throw std::invalid_argument("attention: head count does not divide embed dim");
    const int dh = e / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> mixed;
    mixed.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = mul_scalar(matmul(qh, transpose(kh)), scale);
        Tensor weights = softmax(scores, 1);
        mixed.push_back(matmul(weights, vh));
    }
    return add(matmul(concat_cols(mixed), wo), bo);
}

// Stochastic depth on a residual branch: per-sample Bernoulli keep scaled by
// 1/(1-rate) in training mode, identity in eval mode. One clip's sequence is
// one sample here.
inline Tensor droppath(const Tensor &branch, double rate, bool training, CounterRng *rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("droppath: rate must lie in [0, 1)");
    if (!training || rate == 0.0) return branch;
    if (!rng) throw std::invalid_argument("droppath: rng required in training mode");
    bool keep = rng->next_double() >= rate;
    return mul_scalar(branch, keep ? 1.0 / (1.0 - rate) : 0.0);
}

inline Tensor dropout(const Tensor &x, double rate, bool training, CounterRng *rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
    if (!training || rate == 0.0) return x;
    if (!rng) throw std::invalid_argument("dropout: rng required in training mode");
    Tensor mask(x.shape);
    const double scale = 1.0 / (1.0 - rate);
    for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = rng->next_double() >= rate ? scale : 0.0;
    return mul(x, mask);
}

inline EncodeResult encode(const Tensor &seq, const ModelState &ms, const std::string &prefix,
                           const EncoderConfig &cfg, bool training = false, CounterRng *rng = nullptr) {
    cfg.validate();
    if (seq.rank() != 2 || seq.shape[0] < 1) {
        throw std::invalid_argument("encode: expected a non-empty (seq_len x E) input, got " + shape_str(seq.shape));
    }
    EncodeResult out;
    Tensor h = seq;
    for (int i = 0; i < cfg.layers; ++i) {
        std::string b = prefix + ".block" + std::to_string(i);
        const Tensor &ln1g = ms.at(b + ".ln1.gain");
        const Tensor &ln1b = ms.at(b + ".ln1.bias");
        Tensor normed = layer_norm(h, 1, &ln1g, &ln1b);
        Tensor q = add(matmul(normed, ms.at(b + ".attn.wq")), ms.at(b + ".attn.bq"));
        Tensor k = matmul(normed, ms.at(b + ".attn.wk"));
        Tensor v = add(matmul(normed, ms.at(b + ".attn.wv")), ms.at(b + ".attn.bv"));
        Tensor attn = attention(q, k, v, cfg.heads, ms.at(b + ".attn.wo"), ms.at(b + ".attn.bo"));
        attn = dropout(attn, cfg.dropout, training, rng);
        h = add(h, droppath(attn, cfg.droppath_rate, training, rng));

        const Tensor &ln2g = ms.at(b + ".ln2.gain");
        const Tensor &ln2b = ms.at(b + ".ln2.bias");
        Tensor normed2 = layer_norm(h, 1, &ln2g, &ln2b);
        Tensor mid = gelu(add(matmul(normed2, ms.at(b + ".mlp.fc1.w")), ms.at(b + ".mlp.fc1.b")));
        Tensor mlp_out = add(matmul(mid, ms.at(b + ".mlp.fc2.w")), ms.at(b + ".mlp.fc2.b"));
        mlp_out = dropout(mlp_out, cfg.dropout, training, rng);
        h = add(h, droppath(mlp_out, cfg.droppath_rate, training, rng));

        out.layers.layers.push_back(h);
    }
    out.final = h;
    return out;
}

}  // namespace eat

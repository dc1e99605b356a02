#pragma once

// The utterance-frame objective. Teacher targets are the per-position
// standardized layer outputs averaged across all transformer layers, produced
// under stop-gradient; the utterance loss regresses the student CLS output
// onto the patch-dimension mean of that target, the frame loss regresses
// decoder predictions onto the target at masked positions.

#include <vector>

#include "eat/autodiff.hpp"
#include "eat/encoder.hpp"
#include "eat/tensor.hpp"

namespace eat {

struct TeacherTarget {
    Tensor target;        // P x E, layer-averaged
    Tensor target_mean;   // 1 x E, mean over the patch dimension
};

// Standardize each layer per position over channels (no affine), then average
// across layers. The tiny epsilon only guards exactly-constant rows.
inline TeacherTarget build_targets(const LayerOutputs &outputs, double eps = 1e-12) {
    if (outputs.layers.empty()) throw std::invalid_argument("build_targets: no layer outputs");
    NoGradScope stop_gradient;
    Tensor acc;
    for (size_t i = 0; i < outputs.layers.size(); ++i) {
        Tensor standardized = layer_norm<double>(outputs.layers[i], 1, nullptr, nullptr, eps);
        acc = i == 0 ? standardized : add(acc, standardized);
    }
    TeacherTarget t;
    t.target = mul_scalar(acc, 1.0 / static_cast<double>(outputs.layers.size()));
    t.target_mean = mean_rows(t.target);
    return t;
}

// MSE over the embedding channels between the student CLS output and the
// utterance-level target.
inline Tensor utterance_loss(const Tensor &cls_out, const Tensor &target_mean) {
    if (cls_out.numel() != target_mean.numel()) {
        throw std::invalid_argument("utterance_loss: shape mismatch " + shape_str(cls_out.shape) + " vs " +
                                    shape_str(target_mean.shape));
    }
    Tensor flat_target = target_mean.shape == cls_out.shape ? target_mean : reshape(target_mean, cls_out.shape);
    return mse(cls_out, flat_target);
}

// MSE over all masked-position entries; zero when nothing is masked.
inline Tensor frame_loss(const Tensor &masked_pred, const Tensor &masked_target) {
    check_same_shape(masked_pred, masked_target, "frame_loss");
    return mse(masked_pred, masked_target);
}

struct UfoLoss {
    Tensor total;        // tracked scalar: frame + weight * utterance
    double utterance = 0.0;
    double frame = 0.0;
    double weight = 1.0;

    double combined() const { return total.value(); }
};

inline UfoLoss ufo(const Tensor &cls_out, const Tensor &target_mean, const Tensor &masked_pred,
                   const Tensor &masked_target, double weight) {
    if (weight < 0.0) throw std::invalid_argument("ufo: utterance weight must be non-negative");
    UfoLoss loss;
    Tensor lu = utterance_loss(cls_out, target_mean);
    Tensor lf = frame_loss(masked_pred, masked_target);
    loss.utterance = lu.value();
    loss.frame = lf.value();
    loss.weight = weight;
    loss.total = add(lf, mul_scalar(lu, weight));
    return loss;
}

// Arithmetic mean of per-clone losses, reduced in clone-index order.
inline UfoLoss multi_clone_loss(const std::vector<UfoLoss> &clones) {
    if (clones.empty()) throw std::invalid_argument("multi_clone_loss: no clones");
    UfoLoss out;
    out.weight = clones[0].weight;
    Tensor acc = clones[0].total;
    out.utterance = clones[0].utterance;
    out.frame = clones[0].frame;
    for (size_t i = 1; i < clones.size(); ++i) {
        acc = add(acc, clones[i].total);
        out.utterance += clones[i].utterance;
        out.frame += clones[i].frame;
    }
    const double inv = 1.0 / static_cast<double>(clones.size());
    out.total = clones.size() == 1 ? acc : mul_scalar(acc, inv);
    out.utterance *= inv;
    out.frame *= inv;
    return out;
}

}  // namespace eat

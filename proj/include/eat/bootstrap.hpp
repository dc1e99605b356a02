#pragma once

// Bootstrap machinery: the EMA teacher update with its linear tau schedule,
// decoupled-weight-decay Adam, and the warmup + cosine learning-rate schedule.

#include <cmath>
#include <cstdio>
#include <map>
#include <string>

#include "eat/model.hpp"
#include "eat/tensor.hpp"

namespace eat {

struct EmaState {
    double tau_start = 0.999;
    double tau_end = 0.99999;
    long long total_steps = 1;
    long long current_step = 0;

    void validate() const {
        if (!(tau_start >= 0.0 && tau_start <= tau_end && tau_end <= 1.0)) {
            throw std::invalid_argument("ema: need 0 <= tau_start <= tau_end <= 1");
        }
        if (total_steps < 1) throw std::invalid_argument("ema: total_steps must be >= 1");
    }
};

// Linear in optimizer steps, clamped (with a warning) outside [0, total].
inline double tau_at(const EmaState &state, long long step) {
    state.validate();
    if (step < 0 || step > state.total_steps) {
        std::fprintf(stderr, "warning: tau_at step %lld outside [0, %lld], clamping\n", step, state.total_steps);
        step = step < 0 ? 0 : state.total_steps;
    }
    return state.tau_start + (state.tau_end - state.tau_start) * static_cast<double>(step) / static_cast<double>(state.total_steps);
}

// teacher <- tau * teacher + (1 - tau) * student, elementwise over the shared
// parameter names. Runs in place, never on a tape.
inline void ema_update(ModelState &teacher, const ModelState &student, double tau) {
    for (auto &[name, t] : teacher.params) {
        auto it = student.params.find(name);
        if (it == student.params.end()) {
            throw std::invalid_argument("ema_update: student missing parameter '" + name + "'");
        }
        const Tensor &s = it->second;
        if (s.shape != t.shape) {
            throw std::invalid_argument("ema_update: shape mismatch for '" + name + "': " + shape_str(t.shape) +
                                        " vs " + shape_str(s.shape));
        }
        double *pt = t.ptr();
        const double *ps = s.ptr();
        for (int64_t i = 0; i < t.numel(); ++i) pt[i] = tau * pt[i] + (1.0 - tau) * ps[i];
    }
}

struct LrSchedule {
    double peak = 0.0005;
    double min_lr = 0.000001;
    long long warmup_steps = 0;
    long long total_steps = 1;
};

// Linear 0 -> peak over warmup, then cosine peak -> min to total_steps.
inline double lr_at(const LrSchedule &s, long long step) {
    if (step < 0) throw std::invalid_argument("lr_at: negative step");
    if (s.warmup_steps > 0 && step < s.warmup_steps) {
        return s.peak * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    }
    if (step >= s.total_steps) return s.min_lr;
    double span = static_cast<double>(s.total_steps - s.warmup_steps);
    double progress = span <= 0.0 ? 1.0 : static_cast<double>(step - s.warmup_steps) / span;
    return s.min_lr + 0.5 * (s.peak - s.min_lr) * (1.0 + std::cos(M_PI * progress));
}

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.05;
    double clip_norm = 0.0;  // 0 disables clipping
};

struct OptimizerState {
    std::map<std::string, Tensor> first_moment;
    std::map<std::string, Tensor> second_moment;
    long long step = 0;
};

using GradsByName = std::map<std::string, Tensor>;

inline double grad_global_norm(const GradsByName &grads) {
    double sq = 0.0;
    for (const auto &[name, g] : grads) {
        for (int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
    }
    return std::sqrt(sq);
}

// Decoupled weight decay: p *= (1 - lr*wd) separately from the adaptive step.
// Updates every requires_grad parameter that has a gradient entry; a
// non-finite gradient aborts the step naming the parameter.
inline void adamw_step(ModelState &params, const GradsByName &grads, OptimizerState &opt, const AdamWConfig &cfg,
                       double lr) {
    for (const auto &[name, g] : grads) {
        if (!g.all_finite()) throw NumericalError("non-finite gradient for parameter '" + name + "'");
    }
    double scale = 1.0;
    if (cfg.clip_norm > 0.0) {
        double norm = grad_global_norm(grads);
        if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
    }
    ++opt.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
    for (auto &[name, p] : params.params) {
        if (!p.requires_grad) continue;
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor &g = git->second;
        if (g.shape != p.shape) {
            throw std::invalid_argument("adamw_step: gradient shape mismatch for '" + name + "'");
        }
        Tensor &m = opt.first_moment.try_emplace(name, Tensor(p.shape)).first->second;
        Tensor &v = opt.second_moment.try_emplace(name, Tensor(p.shape)).first->second;
        double *pp = p.ptr();
        double *pm = m.ptr();
        double *pv = v.ptr();
        const double *pg = g.ptr();
        for (int64_t i = 0; i < p.numel(); ++i) {
            double gi = pg[i] * scale;
            pm[i] = cfg.beta1 * pm[i] + (1.0 - cfg.beta1) * gi;
            pv[i] = cfg.beta2 * pv[i] + (1.0 - cfg.beta2) * gi * gi;
            double mhat = pm[i] / bc1;
            double vhat = pv[i] / bc2;
            pp[i] *= 1.0 - lr * cfg.weight_decay;
            pp[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace eat

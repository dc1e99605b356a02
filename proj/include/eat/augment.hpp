#pragma once

// Fine-tuning augmentations on normalized spectrograms: mixup, SpecAug-style
// span masking, circular time roll, and SNR-scaled gaussian noise.

#include <cmath>
#include <utility>
#include <vector>

#include "eat/frontend.hpp"
#include "eat/rng.hpp"

namespace eat {

struct MixedExample {
    Spectrogram spec;
    std::vector<double> targets;
    double mix = 1.0;
};

// spec = m*a + (1-m)*b, targets mixed identically.
inline MixedExample mixup_at(const Spectrogram &spec_a, const Spectrogram &spec_b,
                             const std::vector<double> &targets_a, const std::vector<double> &targets_b, double m) {
    if (targets_a.size() != targets_b.size()) throw std::invalid_argument("mixup: target lengths differ");
    if (spec_a.frames != spec_b.frames || spec_a.bins != spec_b.bins) {
        throw std::invalid_argument("mixup: spectrogram shapes differ");
    }
    MixedExample out;
    out.mix = m;
    out.spec = spec_a;
    for (size_t i = 0; i < out.spec.values.size(); ++i) {
        out.spec.values[i] = m * spec_a.values[i] + (1.0 - m) * spec_b.values[i];
    }
    out.targets.resize(targets_a.size());
    for (size_t i = 0; i < targets_a.size(); ++i) out.targets[i] = m * targets_a[i] + (1.0 - m) * targets_b[i];
    return out;
}

// m ~ Beta(alpha, alpha); alpha = 0 disables mixing and returns the first
// example untouched.
inline MixedExample mixup(const Spectrogram &spec_a, const Spectrogram &spec_b, const std::vector<double> &targets_a,
                          const std::vector<double> &targets_b, double alpha, CounterRng &rng) {
    if (alpha < 0.0) throw std::invalid_argument("mixup: alpha must be >= 0");
    if (alpha == 0.0) {
        if (targets_a.size() != targets_b.size()) throw std::invalid_argument("mixup: target lengths differ");
        MixedExample out;
        out.spec = spec_a;
        out.targets = targets_a;
        return out;
    }
    return mixup_at(spec_a, spec_b, targets_a, targets_b, rng.next_beta(alpha));
}

// One contiguous span per axis, width uniform in [0, frac * extent], filled
// with the normalized-domain zero.
inline Spectrogram specaug(const Spectrogram &spec, double time_frac, double freq_frac, CounterRng &rng) {
    if (time_frac < 0.0 || time_frac >= 1.0 || freq_frac < 0.0 || freq_frac >= 1.0) {
        throw std::invalid_argument("specaug: fractions must lie in [0, 1)");
    }
    Spectrogram out = spec;
    const double fill = spec.pad_value();
    int max_t = static_cast<int>(time_frac * spec.frames);
    int wt = max_t > 0 ? rng.next_int(max_t + 1) : 0;
    int t0 = wt < spec.frames ? rng.next_int(spec.frames - wt + 1) : 0;
    for (int t = t0; t < t0 + wt; ++t) {
        for (int f = 0; f < spec.bins; ++f) out.at(t, f) = fill;
    }
    int max_f = static_cast<int>(freq_frac * spec.bins);
    int wf = max_f > 0 ? rng.next_int(max_f + 1) : 0;
    int f0 = wf < spec.bins ? rng.next_int(spec.bins - wf + 1) : 0;
    for (int t = 0; t < spec.frames; ++t) {
        for (int f = f0; f < f0 + wf; ++f) out.at(t, f) = fill;
    }
    return out;
}

inline Spectrogram roll_by(const Spectrogram &spec, int offset) {
    int t_len = spec.frames;
    offset = ((offset % t_len) + t_len) % t_len;
    if (offset == 0) return spec;
    Spectrogram out = spec;
    for (int t = 0; t < t_len; ++t) {
        int src = (t - offset + t_len) % t_len;
        for (int f = 0; f < spec.bins; ++f) out.at(t, f) = spec.at(src, f);
    }
    return out;
}

// Circular shift along time by a uniform offset in [0, T).
inline Spectrogram roll(const Spectrogram &spec, CounterRng &rng) { return roll_by(spec, rng.next_int(spec.frames)); }

// Gaussian noise scaled to a uniform SNR (dB) drawn from [snr_min, snr_max],
// relative to the spectrogram's RMS.
inline Spectrogram add_noise(const Spectrogram &spec, double snr_min_db, double snr_max_db, CounterRng &rng) {
    if (snr_min_db > snr_max_db) throw std::invalid_argument("add_noise: empty SNR range");
    double snr_db = snr_min_db + (snr_max_db - snr_min_db) * rng.next_double();
    double power = 0.0;
    for (double v : spec.values) power += v * v;
    double rms = std::sqrt(power / static_cast<double>(spec.values.size()));
    double sigma = rms * std::pow(10.0, -snr_db / 20.0);
    Spectrogram out = spec;
    for (double &v : out.values) v += sigma * rng.next_gaussian();
    return out;
}

}  // namespace eat

#pragma once

// Waveform-to-feature frontend: band-limited resampling, log-mel spectrogram
// extraction (400-sample Hann window, 160-sample hop, 128 HTK-mel filters over
// 0-8 kHz, natural log with a 1e-10 floor), normalization to mean 0 / std
// 0.5, and corpus statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "eat/manifest.hpp"
#include "eat/tensor.hpp"
#include "eat/wav.hpp"

namespace eat {

struct MelConfig {
    int sample_rate = 16000;
    int n_mels = 128;
    int win_length = 400;  // 25 ms
    int hop_length = 160;  // 10 ms
    int n_fft = 512;
    double fmin = 0.0;
    double fmax = 8000.0;
    double log_floor = 1e-10;
};

struct Spectrogram {
    int frames = 0;
    int bins = 0;
    std::vector<double> values;  // row-major [frame][bin]
    double frame_shift_ms = 10.0;
    double window_ms = 25.0;
    double norm_mean = 0.0;
    double norm_std = 0.0;
    bool normalized = false;

    double &at(int t, int f) { return values[static_cast<size_t>(t) * bins + f]; }
    double at(int t, int f) const { return values[static_cast<size_t>(t) * bins + f]; }

    // The statistically neutral fill: zero once normalized, the corpus mean
    // before that.
    double pad_value() const { return normalized ? 0.0 : norm_mean; }
};

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

namespace dsp {

inline double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    double half = x * 0.5;
    for (int k = 1; k < 64; ++k) {
        term *= (half / k) * (half / k);
        sum += term;
        if (term < 1e-14 * sum) break;
    }
    return sum;
}

inline double sinc(double x) {
    if (std::fabs(x) < 1e-12) return 1.0;
    double px = M_PI * x;
    return std::sin(px) / px;
}

constexpr int kResampleHalfTaps = 32;  // 64-tap windowed sinc
constexpr double kKaiserBeta = 8.0;

// In-place iterative radix-2 FFT; n must be a power of two.
inline void fft_radix2(std::vector<double> &re, std::vector<double> &im) {
    const size_t n = re.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * M_PI / static_cast<double>(len);
        double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t k = 0; k < len / 2; ++k) {
                size_t a = i + k, b = i + k + len / 2;
                double tr = re[b] * cr - im[b] * ci;
                double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

}  // namespace dsp

inline AudioClip resample(const AudioClip &clip, int target_rate) {
    if (target_rate <= 0) throw std::invalid_argument("resample: target rate must be positive");
    if (clip.sample_rate <= 0 || clip.samples.empty()) throw std::invalid_argument("resample: empty clip");
    if (clip.sample_rate == target_rate) return clip;

    const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
    const double cutoff = std::min(1.0, ratio);  // anti-alias when downsampling
    const int64_t in_len = static_cast<int64_t>(clip.samples.size());
    const int64_t out_len = std::llround(static_cast<double>(in_len) * ratio);
    const double i0_beta = dsp::bessel_i0(dsp::kKaiserBeta);

    AudioClip out;
    out.sample_rate = target_rate;
    out.samples.resize(static_cast<size_t>(out_len));
    for (int64_t i = 0; i < out_len; ++i) {
        double center = static_cast<double>(i) / ratio;
        int64_t j0 = static_cast<int64_t>(std::ceil(center)) - dsp::kResampleHalfTaps;
        int64_t j1 = j0 + 2 * dsp::kResampleHalfTaps - 1;
        double acc = 0.0;
        for (int64_t j = std::max<int64_t>(0, j0); j <= std::min(in_len - 1, j1); ++j) {
            double u = center - static_cast<double>(j);
            double t = u / dsp::kResampleHalfTaps;
            if (t <= -1.0 || t >= 1.0) continue;
            double window = dsp::bessel_i0(dsp::kKaiserBeta * std::sqrt(1.0 - t * t)) / i0_beta;
            acc += clip.samples[static_cast<size_t>(j)] * cutoff * dsp::sinc(cutoff * u) * window;
        }
        out.samples[static_cast<size_t>(i)] = acc;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mel spectrogram
// ---------------------------------------------------------------------------

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters with unit peak, rows [n_mels][n_fft/2 + 1].
inline std::vector<std::vector<double>> mel_filterbank(const MelConfig &cfg) {
    const int n_bins = cfg.n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.fmin);
    const double mel_hi = hz_to_mel(cfg.fmax);
    std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
    for (int i = 0; i < cfg.n_mels + 2; ++i) {
        edges[static_cast<size_t>(i)] = mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1);
    }
    std::vector<std::vector<double>> bank(static_cast<size_t>(cfg.n_mels), std::vector<double>(static_cast<size_t>(n_bins), 0.0));
    const double hz_per_bin = static_cast<double>(cfg.sample_rate) / cfg.n_fft;
    for (int m = 0; m < cfg.n_mels; ++m) {
        double left = edges[static_cast<size_t>(m)];
        double center = edges[static_cast<size_t>(m) + 1];
        double right = edges[static_cast<size_t>(m) + 2];
        for (int k = 0; k < n_bins; ++k) {
            double mel_k = hz_to_mel(k * hz_per_bin);
            double w = 0.0;
            if (mel_k > left && mel_k < right) {
                w = mel_k <= center ? (mel_k - left) / (center - left) : (right - mel_k) / (right - center);
            }
            bank[static_cast<size_t>(m)][static_cast<size_t>(k)] = w;
        }
    }
    return bank;
}

// Center frequency (Hz) of each mel filter, for peak-bin checks.
inline std::vector<double> mel_filter_centers_hz(const MelConfig &cfg) {
    const double mel_lo = hz_to_mel(cfg.fmin);
    const double mel_hi = hz_to_mel(cfg.fmax);
    std::vector<double> centers(static_cast<size_t>(cfg.n_mels));
    for (int m = 0; m < cfg.n_mels; ++m) {
        centers[static_cast<size_t>(m)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1));
    }
    return centers;
}

inline int frame_count(int64_t n_samples, const MelConfig &cfg) {
    if (n_samples < cfg.win_length) return 0;
    return static_cast<int>((n_samples - cfg.win_length) / cfg.hop_length) + 1;
}

inline Spectrogram mel_spectrogram(const AudioClip &clip, const MelConfig &cfg) {
    if (clip.sample_rate != cfg.sample_rate) {
        throw std::invalid_argument("mel_spectrogram: clip at " + std::to_string(clip.sample_rate) +
                                    " Hz, expected " + std::to_string(cfg.sample_rate));
    }
    const int frames = frame_count(static_cast<int64_t>(clip.samples.size()), cfg);
    if (frames <= 0) throw DataError("mel_spectrogram: clip shorter than one analysis window");

    std::vector<double> hann(static_cast<size_t>(cfg.win_length));
    for (int n = 0; n < cfg.win_length; ++n) {
        hann[static_cast<size_t>(n)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / cfg.win_length);
    }
    auto bank = mel_filterbank(cfg);
    const int n_bins = cfg.n_fft / 2 + 1;

    Spectrogram spec;
    spec.frames = frames;
    spec.bins = cfg.n_mels;
    spec.values.assign(static_cast<size_t>(frames) * cfg.n_mels, 0.0);

    std::vector<double> re(static_cast<size_t>(cfg.n_fft)), im(static_cast<size_t>(cfg.n_fft));
    std::vector<double> power(static_cast<size_t>(n_bins));
    for (int t = 0; t < frames; ++t) {
        std::fill(re.begin(), re.end(), 0.0);
        std::fill(im.begin(), im.end(), 0.0);
        const double *src = clip.samples.data() + static_cast<size_t>(t) * cfg.hop_length;
        for (int n = 0; n < cfg.win_length; ++n) re[static_cast<size_t>(n)] = src[n] * hann[static_cast<size_t>(n)];
        dsp::fft_radix2(re, im);
        for (int k = 0; k < n_bins; ++k) {
            power[static_cast<size_t>(k)] = re[static_cast<size_t>(k)] * re[static_cast<size_t>(k)] +
                                            im[static_cast<size_t>(k)] * im[static_cast<size_t>(k)];
        }
        for (int m = 0; m < cfg.n_mels; ++m) {
            const auto &row = bank[static_cast<size_t>(m)];
            double acc = 0.0;
            for (int k = 0; k < n_bins; ++k) acc += row[static_cast<size_t>(k)] * power[static_cast<size_t>(k)];
            spec.at(t, m) = std::log(std::max(acc, cfg.log_floor));
        }
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Padding and normalization
// ---------------------------------------------------------------------------

inline Spectrogram pad_to_length(const Spectrogram &spec, int target_frames) {
    if (target_frames < spec.frames) {
        throw std::invalid_argument("pad_to_length: target " + std::to_string(target_frames) + " < current " +
                                    std::to_string(spec.frames) + " frames (truncation is not padding)");
    }
    if (target_frames == spec.frames) return spec;
    Spectrogram out = spec;
    out.frames = target_frames;
    out.values.resize(static_cast<size_t>(target_frames) * spec.bins, spec.pad_value());
    return out;
}

// (x - mean) / (2 std): a corpus with these statistics maps to mean 0, std 0.5.
inline Spectrogram normalize(const Spectrogram &spec, double mean, double std_dev) {
    if (std_dev <= 0.0) throw std::invalid_argument("normalize: std must be positive");
    Spectrogram out = spec;
    const double inv = 1.0 / (2.0 * std_dev);
    for (double &v : out.values) v = (v - mean) * inv;
    out.norm_mean = mean;
    out.norm_std = std_dev;
    out.normalized = true;
    return out;
}

inline Spectrogram denormalize(const Spectrogram &spec) {
    if (!spec.normalized) throw std::invalid_argument("denormalize: spectrogram is not normalized");
    Spectrogram out = spec;
    for (double &v : out.values) v = v * 2.0 * spec.norm_std + spec.norm_mean;
    out.normalized = false;
    return out;
}

// ---------------------------------------------------------------------------
// Corpus statistics (streaming, mergeable)
// ---------------------------------------------------------------------------

struct Welford {
    long long count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++count;
        double d = x - mean;
        mean += d / static_cast<double>(count);
        m2 += d * (x - mean);
    }

    void merge(const Welford &o) {
        if (o.count == 0) return;
        if (count == 0) {
            *this = o;
            return;
        }
        double d = o.mean - mean;
        long long n = count + o.count;
        m2 += o.m2 + d * d * (static_cast<double>(count) * o.count / n);
        mean += d * o.count / static_cast<double>(n);
        count = n;
    }

    double variance() const { return count > 0 ? m2 / static_cast<double>(count) : 0.0; }
    double stddev() const { return std::sqrt(variance()); }
};

// Streaming mean/std over every un-normalized spectrogram cell in the manifest.
inline std::pair<double, double> compute_corpus_stats(const Manifest &manifest, const MelConfig &cfg) {
    if (manifest.rows.empty()) throw DataError("compute_corpus_stats: empty manifest");
    Welford acc;
    for (size_t r = 0; r < manifest.rows.size(); ++r) {
        AudioClip clip = read_wav(manifest.full_path(r));
        clip = resample(clip, cfg.sample_rate);
        Spectrogram spec = mel_spectrogram(clip, cfg);
        for (double v : spec.values) acc.add(v);
    }
    return {acc.mean, acc.stddev()};
}

}  // namespace eat

#pragma once

// Independent reference implementations used only to verify library output.
// Nothing in here calls into the code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

namespace oracle {

// Plain triple-loop matrix product.
inline std::vector<double> matmul(const std::vector<double> &a, const std::vector<double> &b, int m, int k, int n) {
    std::vector<double> c(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int kk = 0; kk < k; ++kk) {
                s += a[static_cast<size_t>(i) * k + kk] * b[static_cast<size_t>(kk) * n + j];
            }
            c[static_cast<size_t>(i) * n + j] = s;
        }
    }
    return c;
}

// Standard normal CDF via erf.
inline double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Magnitude of DFT bin k, direct O(N) evaluation.
inline double dft_bin_magnitude(const std::vector<double> &x, int k) {
    double re = 0.0, im = 0.0;
    const double w = -2.0 * M_PI * k / static_cast<double>(x.size());
    for (size_t n = 0; n < x.size(); ++n) {
        re += x[n] * std::cos(w * static_cast<double>(n));
        im += x[n] * std::sin(w * static_cast<double>(n));
    }
    return std::sqrt(re * re + im * im);
}

// argmax over bins [0, half) of the DFT magnitude.
inline int dft_peak_bin(const std::vector<double> &x, int half) {
    int best = 0;
    double best_mag = -1.0;
    for (int k = 0; k < half; ++k) {
        double mag = dft_bin_magnitude(x, k);
        if (mag > best_mag) {
            best_mag = mag;
            best = k;
        }
    }
    return best;
}

// Two-pass mean / population std.
inline std::pair<double, double> mean_std(const std::vector<double> &v) {
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double m2 = 0.0;
    for (double x : v) m2 += (x - mean) * (x - mean);
    return {mean, std::sqrt(m2 / static_cast<double>(v.size()))};
}

// Average precision: mean of precision at each positive, scores sorted
// descending with index tie-break.
inline double average_precision(const std::vector<double> &scores, const std::vector<int> &targets) {
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    double hits = 0.0, ap = 0.0;
    int positives = 0;
    for (size_t rank = 0; rank < order.size(); ++rank) {
        if (targets[order[rank]] == 1) {
            hits += 1.0;
            ap += hits / static_cast<double>(rank + 1);
            ++positives;
        }
    }
    return positives == 0 ? 0.0 : ap / positives;
}

// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace oracle

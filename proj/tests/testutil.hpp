#pragma once

// Shared helpers for tests: temp directories, synthetic clips, manifests.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eat/frontend.hpp"
#include "eat/rng.hpp"
#include "eat/wav.hpp"

namespace testutil {

class TempDir {
public:
    explicit TempDir(const std::string &tag) {
        base_ = std::filesystem::temp_directory_path() / ("eat_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(base_);
        std::filesystem::create_directories(base_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(base_, ec);
    }
    std::string path() const { return base_.string(); }
    std::string file(const std::string &name) const { return (base_ / name).string(); }

private:
    std::filesystem::path base_;
};

inline eat::AudioClip make_sine(double freq_hz, double seconds, int rate, double amplitude = 0.5, double phase = 0.0) {
    eat::AudioClip clip;
    clip.sample_rate = rate;
    size_t n = static_cast<size_t>(seconds * rate);
    clip.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        clip.samples[i] = amplitude * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) / rate + phase);
    }
    return clip;
}

inline eat::AudioClip make_noise(double seconds, int rate, eat::CounterRng &rng, double amplitude = 0.3) {
    eat::AudioClip clip;
    clip.sample_rate = rate;
    size_t n = static_cast<size_t>(seconds * rate);
    clip.samples.resize(n);
    for (size_t i = 0; i < n; ++i) clip.samples[i] = amplitude * rng.next_gaussian() * 0.33;
    return clip;
}

inline void write_manifest(const std::string &path, const std::vector<std::pair<std::string, std::string>> &rows,
                           bool header = true) {
    std::ofstream out(path);
    if (header) out << "path,labels\n";
    for (const auto &[p, labels] : rows) out << p << "," << labels << "\n";
}

}  // namespace testutil

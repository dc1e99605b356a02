#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "eat/frontend.hpp"
#include "eat/manifest.hpp"
#include "eat/wav.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using testutil::make_sine;

TEST_CASE("wav round trip preserves samples to 16-bit precision") {
    testutil::TempDir dir("wav");
    eat::AudioClip clip = make_sine(500.0, 0.05, 16000, 0.7);
    eat::write_wav(dir.file("tone.wav"), clip);
    eat::AudioClip back = eat::read_wav(dir.file("tone.wav"));
    REQUIRE(back.sample_rate == 16000);
    REQUIRE(back.samples.size() == clip.samples.size());
    for (size_t i = 0; i < clip.samples.size(); ++i) {
        CHECK(std::fabs(back.samples[i] - clip.samples[i]) < 1.0 / 32768.0 + 1e-9);
    }
    CHECK_THROWS_AS(eat::read_wav(dir.file("missing.wav")), eat::DataError);
}

TEST_CASE("resample is an identity at the target rate") {
    eat::AudioClip clip = make_sine(440.0, 0.1, 16000);
    eat::AudioClip out = eat::resample(clip, 16000);
    CHECK(out.samples == clip.samples);
}

TEST_CASE("resample scales length by the rate ratio") {
    eat::AudioClip clip = make_sine(440.0, 1.0, 32000);
    REQUIRE(clip.samples.size() == 32000);
    eat::AudioClip out = eat::resample(clip, 16000);
    CHECK(out.samples.size() == 16000);
    CHECK(out.sample_rate == 16000);
}

TEST_CASE("resampled tone keeps its dominant DFT bin") {
    // 0.5 s at 48 kHz -> 8000 samples at 16 kHz, 2 Hz per DFT bin.
    eat::AudioClip clip = make_sine(440.0, 0.5, 48000);
    eat::AudioClip out = eat::resample(clip, 16000);
    REQUIRE(out.samples.size() == 8000);
    int peak = oracle::dft_peak_bin(out.samples, 4000);
    CHECK(std::abs(peak - 220) <= 1);  // 440 Hz at 2 Hz/bin
}

TEST_CASE("mel frame count and shape") {
    eat::MelConfig cfg;
    eat::AudioClip clip = make_sine(440.0, 10.0, 16000);
    REQUIRE(clip.samples.size() == 160000);
    eat::Spectrogram spec = eat::mel_spectrogram(clip, cfg);
    CHECK(spec.frames == 998);  // floor((160000 - 400) / 160) + 1
    CHECK(spec.bins == 128);

    for (int64_t n : {400LL, 401LL, 559LL, 560LL, 16000LL, 160000LL}) {
        CHECK(eat::frame_count(n, cfg) == static_cast<int>((n - 400) / 160) + 1);
    }

    eat::AudioClip tiny = make_sine(440.0, 0.01, 16000);  // 160 samples < one window
    CHECK_THROWS_AS(eat::mel_spectrogram(tiny, cfg), eat::DataError);
}

TEST_CASE("silence maps to the log floor everywhere") {
    eat::MelConfig cfg;
    eat::AudioClip clip;
    clip.sample_rate = 16000;
    clip.samples.assign(16000, 0.0);
    eat::Spectrogram spec = eat::mel_spectrogram(clip, cfg);
    const double floor_val = std::log(1e-10);
    for (double v : spec.values) CHECK(v == floor_val);
}

TEST_CASE("mel filterbank is non-negative and covers the passband") {
    eat::MelConfig cfg;
    auto bank = eat::mel_filterbank(cfg);
    REQUIRE(bank.size() == 128);
    const int n_bins = cfg.n_fft / 2 + 1;
    std::vector<double> bin_total(static_cast<size_t>(n_bins), 0.0);
    for (const auto &row : bank) {
        for (int k = 0; k < n_bins; ++k) {
            CHECK(row[static_cast<size_t>(k)] >= 0.0);
            bin_total[static_cast<size_t>(k)] += row[static_cast<size_t>(k)];
        }
    }
    const double hz_per_bin = 16000.0 / cfg.n_fft;
    for (int k = 1; k < n_bins; ++k) {
        double f = k * hz_per_bin;
        if (f > cfg.fmin + hz_per_bin && f < cfg.fmax - hz_per_bin) {
            CHECK(bin_total[static_cast<size_t>(k)] > 0.0);
        }
    }
}

TEST_CASE("pure tones peak at the mel filter nearest their frequency") {
    eat::MelConfig cfg;
    for (double freq : {250.0, 1000.0, 4000.0}) {
        eat::Spectrogram spec = eat::mel_spectrogram(make_sine(freq, 0.5, 16000), cfg);
        // average over frames, then locate the strongest mel bin
        std::vector<double> profile(128, 0.0);
        for (int t = 0; t < spec.frames; ++t) {
            for (int m = 0; m < 128; ++m) profile[static_cast<size_t>(m)] += spec.at(t, m);
        }
        int argmax = static_cast<int>(std::max_element(profile.begin(), profile.end()) - profile.begin());

        // independent center-frequency computation
        double mel_lo = oracle::hz_to_mel(0.0), mel_hi = oracle::hz_to_mel(8000.0);
        int nearest = 0;
        double best = 1e18;
        for (int m = 0; m < 128; ++m) {
            double center = oracle::mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / 129.0);
            if (std::fabs(center - freq) < best) {
                best = std::fabs(center - freq);
                nearest = m;
            }
        }
        INFO("frequency " << freq);
        CHECK(argmax == nearest);
    }
}

TEST_CASE("pad_to_length appends the pad constant") {
    eat::MelConfig cfg;
    eat::Spectrogram spec = eat::mel_spectrogram(make_sine(440.0, 10.0, 16000), cfg);
    spec = eat::normalize(spec, -4.268, 4.569);
    eat::Spectrogram padded = eat::pad_to_length(spec, 1024);
    CHECK(padded.frames == 1024);
    for (int t = 998; t < 1024; ++t) {
        for (int f = 0; f < 128; ++f) CHECK(padded.at(t, f) == 0.0);
    }

    eat::Spectrogram same = eat::pad_to_length(spec, spec.frames);
    CHECK(same.values == spec.values);

    CHECK_THROWS_AS(eat::pad_to_length(spec, 997), std::invalid_argument);
}

TEST_CASE("normalize maps corpus statistics to mean 0 std 0.5") {
    eat::Spectrogram spec;
    spec.frames = 1;
    spec.bins = 2;
    spec.values = {-4.268, -4.268 + 4.569};
    eat::Spectrogram out = eat::normalize(spec, -4.268, 4.569);
    CHECK(out.values[0] == Catch::Approx(0.0).margin(1e-12));
    CHECK(out.values[1] == Catch::Approx(0.5).margin(1e-12));

    CHECK_THROWS_AS(eat::normalize(spec, 0.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(eat::normalize(spec, 0.0, -1.0), std::invalid_argument);
}

TEST_CASE("normalizing by a corpus' own statistics yields mean 0 std 0.5") {
    eat::CounterRng rng(41);
    eat::Spectrogram spec;
    spec.frames = 50;
    spec.bins = 16;
    spec.values.resize(800);
    for (auto &v : spec.values) v = -4.0 + 2.0 * rng.next_gaussian();
    auto [m, s] = oracle::mean_std(spec.values);
    eat::Spectrogram out = eat::normalize(spec, m, s);
    auto [m2, s2] = oracle::mean_std(out.values);
    CHECK(std::fabs(m2) < 1e-9);
    CHECK(std::fabs(s2 - 0.5) < 1e-9);
}

TEST_CASE("denormalize inverts normalize") {
    eat::CounterRng rng(43);
    eat::Spectrogram spec;
    spec.frames = 10;
    spec.bins = 8;
    spec.values.resize(80);
    for (auto &v : spec.values) v = rng.next_gaussian() * 3.0 - 5.0;
    eat::Spectrogram back = eat::denormalize(eat::normalize(spec, -5.1, 2.7));
    for (size_t i = 0; i < spec.values.size(); ++i) {
        CHECK(std::fabs(back.values[i] - spec.values[i]) < 1e-12);
    }
}

TEST_CASE("welford matches two-pass statistics and merges associatively") {
    eat::CounterRng rng(47);
    std::vector<double> xs(1000);
    for (auto &x : xs) x = rng.next_gaussian() * 2.5 - 1.0;

    eat::Welford w;
    for (double x : xs) w.add(x);
    auto [m, s] = oracle::mean_std(xs);
    CHECK(w.mean == Catch::Approx(m).margin(1e-10));
    CHECK(w.stddev() == Catch::Approx(s).margin(1e-10));

    eat::Welford a, b, c;
    for (size_t i = 0; i < 300; ++i) a.add(xs[i]);
    for (size_t i = 300; i < 700; ++i) b.add(xs[i]);
    for (size_t i = 700; i < 1000; ++i) c.add(xs[i]);
    eat::Welford left = a;
    left.merge(b);
    left.merge(c);
    eat::Welford right = b;
    right.merge(c);
    eat::Welford total = a;
    total.merge(right);
    CHECK(left.mean == Catch::Approx(total.mean).margin(1e-10));
    CHECK(left.stddev() == Catch::Approx(total.stddev()).margin(1e-10));
    CHECK(left.mean == Catch::Approx(m).margin(1e-10));
}

TEST_CASE("corpus statistics over a two-clip manifest match a direct two-pass computation") {
    testutil::TempDir dir("stats");
    eat::write_wav(dir.file("a.wav"), make_sine(700.0, 0.2, 16000, 0.5));
    eat::write_wav(dir.file("b.wav"), make_sine(1800.0, 0.3, 16000, 0.2));
    testutil::write_manifest(dir.file("m.csv"), {{"a.wav", ""}, {"b.wav", ""}});

    eat::Manifest manifest = eat::load_manifest(dir.file("m.csv"));
    eat::MelConfig cfg;
    auto [mean, stddev] = eat::compute_corpus_stats(manifest, cfg);

    std::vector<double> all;
    for (const char *name : {"a.wav", "b.wav"}) {
        eat::Spectrogram spec = eat::mel_spectrogram(eat::read_wav(dir.file(name)), cfg);
        all.insert(all.end(), spec.values.begin(), spec.values.end());
    }
    auto [m, s] = oracle::mean_std(all);
    CHECK(mean == Catch::Approx(m).margin(1e-10));
    CHECK(stddev == Catch::Approx(s).margin(1e-10));
}

TEST_CASE("constant corpus yields its constant as mean and zero std") {
    eat::Welford w;
    for (int i = 0; i < 100; ++i) w.add(3.25);
    CHECK(w.mean == 3.25);
    CHECK(w.stddev() == 0.0);
}

TEST_CASE("manifest parsing") {
    testutil::TempDir dir("manifest");
    {
        std::ofstream out(dir.file("m.csv"));
        out << "path,labels\n";
        out << "x.wav,dog;cat\n";
        out << "y.wav,\n";
        out << "z.wav,cat\n";
    }
    eat::Manifest m = eat::load_manifest(dir.file("m.csv"));
    REQUIRE(m.rows.size() == 3);
    CHECK(m.rows[0].labels == std::vector<std::string>{"dog", "cat"});
    CHECK(m.rows[1].labels.empty());
    CHECK(m.class_names == std::vector<std::string>{"cat", "dog"});
    CHECK(m.class_index("dog") == 1);
    CHECK(m.class_index("bird") == -1);
    CHECK(!m.all_unlabeled());
    CHECK(m.full_path(0) == dir.file("x.wav"));

    CHECK_THROWS_AS(eat::load_manifest(dir.file("nope.csv")), eat::DataError);
    {
        std::ofstream out(dir.file("empty.csv"));
        out << "path,labels\n";
    }
    CHECK_THROWS_AS(eat::load_manifest(dir.file("empty.csv")), eat::DataError);
}

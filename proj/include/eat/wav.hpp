#pragma once

// Minimal RIFF/WAVE reader and writer. Reading accepts 16-bit PCM and 32-bit
// IEEE float, mono or multi-channel (first channel kept). Writing emits
// 16-bit PCM mono, which is all the tests and synthetic corpora need.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "eat/tensor.hpp"

namespace eat {

struct AudioClip {
    std::vector<double> samples;  // in [-1, 1]
    int sample_rate = 0;
};

namespace wav_detail {

inline uint32_t read_u32(const unsigned char *p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) | (static_cast<uint32_t>(p[2]) << 16) |
           (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t read_u16(const unsigned char *p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace wav_detail

inline AudioClip read_wav(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open wav file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw DataError("not a RIFF/WAVE file: " + path);
    }

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const unsigned char *data = nullptr;
    size_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char *hdr = bytes.data() + pos;
        uint32_t chunk_len = wav_detail::read_u32(hdr + 4);
        const unsigned char *body = hdr + 8;
        if (pos + 8 + chunk_len > bytes.size()) chunk_len = static_cast<uint32_t>(bytes.size() - pos - 8);
        if (std::memcmp(hdr, "fmt ", 4) == 0 && chunk_len >= 16) {
            format = wav_detail::read_u16(body);
            channels = wav_detail::read_u16(body + 2);
            rate = wav_detail::read_u32(body + 4);
            bits = wav_detail::read_u16(body + 14);
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            data = body;
            data_len = chunk_len;
        }
        pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
    }

    if (!data || channels == 0 || rate == 0) throw DataError("wav missing fmt/data chunk: " + path);

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    if (format == 1 && bits == 16) {
        size_t frames = data_len / (2 * channels);
        clip.samples.resize(frames);
        for (size_t i = 0; i < frames; ++i) {
            const unsigned char *s = data + i * 2 * channels;
            int16_t v = static_cast<int16_t>(s[0] | (s[1] << 8));
            clip.samples[i] = static_cast<double>(v) / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        size_t frames = data_len / (4 * channels);
        clip.samples.resize(frames);
        for (size_t i = 0; i < frames; ++i) {
            uint32_t raw = wav_detail::read_u32(data + i * 4 * channels);
            float f;
            std::memcpy(&f, &raw, 4);
            clip.samples[i] = static_cast<double>(f);
        }
    } else {
        throw DataError("unsupported wav encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
                        " bits): " + path);
    }
    if (clip.samples.empty()) throw DataError("wav has no samples: " + path);
    return clip;
}

inline void write_wav(const std::string &path, const AudioClip &clip) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write wav file: " + path);
    auto put_u32 = [&](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<char *>(b), 4);
    };
    auto put_u16 = [&](uint16_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        out.write(reinterpret_cast<char *>(b), 2);
    };
    uint32_t data_len = static_cast<uint32_t>(clip.samples.size() * 2);
    out.write("RIFF", 4);
    put_u32(36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(static_cast<uint32_t>(clip.sample_rate));
    put_u32(static_cast<uint32_t>(clip.sample_rate) * 2);
    put_u16(2);
    put_u16(16);
    out.write("data", 4);
    put_u32(data_len);
    for (double s : clip.samples) {
        double clamped = std::max(-1.0, std::min(1.0, s));
        int16_t v = static_cast<int16_t>(std::lround(clamped * 32767.0));
        put_u16(static_cast<uint16_t>(v));
    }
}

}  // namespace eat

#pragma once

// Single-file checkpoint container: little-endian payload addressed by a
// table of contents of named arrays (name, dtype, shape, byte offset).
// Holds model parameters, optimizer moments, EMA/schedule state, RNG seed,
// step count, and the config snapshot.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "eat/bootstrap.hpp"
#include "eat/model.hpp"
#include "eat/tensor.hpp"

namespace eat {

namespace ckpt_detail {

constexpr char kMagic[8] = {'E', 'A', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

enum Dtype : uint8_t { F64 = 0, I64 = 1, U8 = 2 };

struct TocEntry {
    std::string name;
    uint8_t dtype = F64;
    std::vector<uint64_t> dims;
    uint64_t offset = 0;  // into the payload
    uint64_t count = 0;   // element count
};

template <class T>
void put_le(std::string &out, T v) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    out.append(reinterpret_cast<char *>(bytes), sizeof(T));
}

template <class T>
T get_le(const unsigned char *p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

}  // namespace ckpt_detail

class CheckpointWriter {
public:
    void add_f64(const std::string &name, const double *data, std::vector<uint64_t> dims) {
        uint64_t count = 1;
        for (uint64_t d : dims) count *= d;
        add(name, ckpt_detail::F64, std::move(dims), count,
            reinterpret_cast<const char *>(data), count * sizeof(double));
    }

    void add_tensor(const std::string &name, const Tensor &t) {
        std::vector<uint64_t> dims(t.shape.begin(), t.shape.end());
        add_f64(name, t.ptr(), std::move(dims));
    }

    void add_i64(const std::string &name, int64_t v) {
        add(name, ckpt_detail::I64, {1}, 1, reinterpret_cast<const char *>(&v), sizeof(int64_t));
    }

    void add_bytes(const std::string &name, const std::string &bytes) {
        add(name, ckpt_detail::U8, {bytes.size()}, bytes.size(), bytes.data(), bytes.size());
    }

    void write(const std::string &path) const {
        std::string toc;
        using ckpt_detail::put_le;
        put_le<uint64_t>(toc, entries_.size());
        for (const auto &e : entries_) {
            put_le<uint32_t>(toc, static_cast<uint32_t>(e.name.size()));
            toc.append(e.name);
            toc.push_back(static_cast<char>(e.dtype));
            put_le<uint32_t>(toc, static_cast<uint32_t>(e.dims.size()));
            for (uint64_t d : e.dims) put_le<uint64_t>(toc, d);
            put_le<uint64_t>(toc, e.offset);
            put_le<uint64_t>(toc, e.count);
        }
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write checkpoint: " + path);
        out.write(ckpt_detail::kMagic, 8);
        uint32_t version = ckpt_detail::kVersion;
        out.write(reinterpret_cast<const char *>(&version), 4);
        uint64_t toc_size = toc.size(), payload_size = payload_.size();
        out.write(reinterpret_cast<const char *>(&toc_size), 8);
        out.write(reinterpret_cast<const char *>(&payload_size), 8);
        out.write(toc.data(), static_cast<std::streamsize>(toc.size()));
        out.write(payload_.data(), static_cast<std::streamsize>(payload_.size()));
        if (!out) throw DataError("short write for checkpoint: " + path);
    }

private:
    void add(const std::string &name, uint8_t dtype, std::vector<uint64_t> dims, uint64_t count, const char *bytes,
             size_t nbytes) {
        ckpt_detail::TocEntry e;
        e.name = name;
        e.dtype = dtype;
        e.dims = std::move(dims);
        e.offset = payload_.size();
        e.count = count;
        entries_.push_back(std::move(e));
        payload_.append(bytes, nbytes);
    }

    std::vector<ckpt_detail::TocEntry> entries_;
    std::string payload_;
};

struct CheckpointData {
    std::map<std::string, Tensor> arrays;        // f64 entries
    std::map<std::string, int64_t> scalars;      // i64 entries
    std::map<std::string, std::string> blobs;    // u8 entries

    const Tensor &array(const std::string &name) const {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw DataError("checkpoint missing array '" + name + "'");
        return it->second;
    }
    int64_t scalar(const std::string &name) const {
        auto it = scalars.find(name);
        if (it == scalars.end()) throw DataError("checkpoint missing scalar '" + name + "'");
        return it->second;
    }
    const std::string &blob(const std::string &name) const {
        auto it = blobs.find(name);
        if (it == blobs.end()) throw DataError("checkpoint missing blob '" + name + "'");
        return it->second;
    }
    bool has_array(const std::string &name) const { return arrays.count(name) != 0; }
};

inline CheckpointData load_checkpoint_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    using ckpt_detail::get_le;
    if (bytes.size() < 28 || std::memcmp(bytes.data(), ckpt_detail::kMagic, 8) != 0) {
        throw DataError("not a checkpoint file: " + path);
    }
    uint32_t version = get_le<uint32_t>(bytes.data() + 8);
    if (version != ckpt_detail::kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    uint64_t toc_size = get_le<uint64_t>(bytes.data() + 12);
    uint64_t payload_size = get_le<uint64_t>(bytes.data() + 20);
    if (bytes.size() < 28 + toc_size + payload_size) throw DataError("truncated checkpoint: " + path);
    const unsigned char *toc = bytes.data() + 28;
    const unsigned char *payload = toc + toc_size;

    CheckpointData data;
    size_t pos = 0;
    auto need = [&](size_t n) {
        if (pos + n > toc_size) throw DataError("corrupt checkpoint toc: " + path);
    };
    need(8);
    uint64_t count = get_le<uint64_t>(toc + pos);
    pos += 8;
    for (uint64_t i = 0; i < count; ++i) {
        need(4);
        uint32_t name_len = get_le<uint32_t>(toc + pos);
        pos += 4;
        need(name_len);
        std::string name(reinterpret_cast<const char *>(toc + pos), name_len);
        pos += name_len;
        need(5);
        uint8_t dtype = toc[pos];
        ++pos;
        uint32_t rank = get_le<uint32_t>(toc + pos);
        pos += 4;
        need(static_cast<size_t>(rank) * 8 + 16);
        std::vector<uint64_t> dims(rank);
        for (uint32_t d = 0; d < rank; ++d) {
            dims[d] = get_le<uint64_t>(toc + pos);
            pos += 8;
        }
        uint64_t offset = get_le<uint64_t>(toc + pos);
        pos += 8;
        uint64_t nelem = get_le<uint64_t>(toc + pos);
        pos += 8;

        if (dtype == ckpt_detail::F64) {
            if (offset + nelem * 8 > payload_size) throw DataError("corrupt checkpoint payload: " + path);
            std::vector<int> shape(dims.begin(), dims.end());
            Tensor t(shape);
            std::memcpy(t.ptr(), payload + offset, nelem * 8);
            data.arrays.emplace(name, std::move(t));
        } else if (dtype == ckpt_detail::I64) {
            if (offset + 8 > payload_size) throw DataError("corrupt checkpoint payload: " + path);
            data.scalars.emplace(name, get_le<int64_t>(payload + offset));
        } else if (dtype == ckpt_detail::U8) {
            if (offset + nelem > payload_size) throw DataError("corrupt checkpoint payload: " + path);
            data.blobs.emplace(name, std::string(reinterpret_cast<const char *>(payload + offset), nelem));
        } else {
            throw DataError("unknown dtype in checkpoint: " + path);
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Training-state checkpoints
// ---------------------------------------------------------------------------

struct TrainState {
    ModelState student;
    ModelState teacher;        // empty for fine-tune checkpoints
    OptimizerState opt;
    long long step = 0;
    uint64_t seed = 0;
    std::string config_text;
    std::string kind;          // "pretrain" | "finetune"
    std::string classes;       // ';'-joined class names (fine-tune only)
};

inline void save_train_checkpoint(const std::string &path, const TrainState &state) {
    CheckpointWriter w;
    for (const auto &[name, t] : state.student.params) w.add_tensor("student." + name, t);
    for (const auto &[name, t] : state.teacher.params) w.add_tensor("teacher." + name, t);
    for (const auto &[name, t] : state.opt.first_moment) w.add_tensor("opt.m." + name, t);
    for (const auto &[name, t] : state.opt.second_moment) w.add_tensor("opt.v." + name, t);
    w.add_i64("meta.step", state.step);
    w.add_i64("meta.opt_step", state.opt.step);
    w.add_i64("meta.seed", static_cast<int64_t>(state.seed));
    w.add_bytes("meta.config", state.config_text);
    w.add_bytes("meta.kind", state.kind);
    w.add_bytes("meta.classes", state.classes);
    w.write(path);
}

inline TrainState load_train_checkpoint(const std::string &path) {
    CheckpointData data = load_checkpoint_file(path);
    TrainState state;
    for (auto &[name, t] : data.arrays) {
        if (name.rfind("student.", 0) == 0) {
            t.requires_grad = true;
            state.student.params.emplace(name.substr(8), t);
        } else if (name.rfind("teacher.", 0) == 0) {
            t.requires_grad = false;
            state.teacher.params.emplace(name.substr(8), t);
        } else if (name.rfind("opt.m.", 0) == 0) {
            state.opt.first_moment.emplace(name.substr(6), t);
        } else if (name.rfind("opt.v.", 0) == 0) {
            state.opt.second_moment.emplace(name.substr(6), t);
        }
    }
    state.step = data.scalar("meta.step");
    state.opt.step = data.scalar("meta.opt_step");
    state.seed = static_cast<uint64_t>(data.scalar("meta.seed"));
    state.config_text = data.blob("meta.config");
    state.kind = data.blob("meta.kind");
    state.classes = data.blob("meta.classes");
    return state;
}

}  // namespace eat

#pragma once

// Named parameter collections. Iteration order is the (sorted) name order,
// which keeps optimizer and EMA sweeps deterministic.

#include <map>
#include <string>
#include <vector>

#include "eat/rng.hpp"
#include "eat/tensor.hpp"

namespace eat {

struct ModelState {
    std::map<std::string, Tensor> params;

    Tensor &at(const std::string &name) {
        auto it = params.find(name);
        if (it == params.end()) throw std::invalid_argument("no parameter named '" + name + "'");
        return it->second;
    }
    const Tensor &at(const std::string &name) const {
        auto it = params.find(name);
        if (it == params.end()) throw std::invalid_argument("no parameter named '" + name + "'");
        return it->second;
    }

    void add(const std::string &name, Tensor t) {
        if (params.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
        params.emplace(name, std::move(t));
    }

    bool has(const std::string &name) const { return params.count(name) != 0; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(params.size());
        for (const auto &[k, v] : params) out.push_back(k);
        return out;
    }

    int64_t total_values() const {
        int64_t n = 0;
        for (const auto &[k, v] : params) n += v.numel();
        return n;
    }

    void set_requires_grad(bool flag) {
        for (auto &[k, v] : params) v.requires_grad = flag;
    }

    // Deep copy: fresh buffers, same names and shapes.
    ModelState clone() const {
        ModelState out;
        for (const auto &[k, v] : params) out.params.emplace(k, v.clone());
        return out;
    }
};

// Parameter init streams are keyed by (seed, name hash), so values do not
// depend on creation order.
inline Tensor init_trunc_normal(const std::string &name, std::vector<int> shape, double std_dev, uint64_t seed) {
    Tensor t(std::move(shape));
    CounterRng rng(seed, hash_name(name));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.truncated_normal(std_dev);
    t.requires_grad = true;
    return t;
}

inline Tensor init_const(std::vector<int> shape, double value) {
    Tensor t(std::move(shape), value);
    t.requires_grad = true;
    return t;
}

}  // namespace eat

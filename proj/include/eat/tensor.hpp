#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eat {

// Thrown for unreadable / malformed input data (maps to CLI exit code 2).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when training hits a non-finite value (maps to CLI exit code 3).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string shape_str(const std::vector<int> &shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

inline int64_t shape_numel(const std::vector<int> &shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

// Dense row-major tensor. Data is a shared buffer: copies of a Tensor are
// views of the same values, and values are treated as immutable once an op
// has produced them (the optimizer and EMA update are the two sanctioned
// in-place writers). Scalars use an empty shape.
template <class T = double>
struct TensorT {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> data;
    bool requires_grad = false;

    TensorT() : data(std::make_shared<std::vector<T>>(1, T(0))) {}

    explicit TensorT(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_str(shape));
        }
        data = std::make_shared<std::vector<T>>(static_cast<size_t>(shape_numel(shape)), fill);
    }

    TensorT(std::vector<int> s, std::vector<T> values) : shape(std::move(s)) {
        if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
            throw std::invalid_argument("shape " + shape_str(shape) + " does not match " +
                                        std::to_string(values.size()) + " values");
        }
        data = std::make_shared<std::vector<T>>(std::move(values));
    }

    static TensorT scalar(T v) { return TensorT({}, std::vector<T>{v}); }

    int64_t numel() const { return static_cast<int64_t>(data->size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int extent(int axis) const { return shape[static_cast<size_t>(axis)]; }

    T *ptr() { return data->data(); }
    const T *ptr() const { return data->data(); }

    T &operator[](int64_t i) { return (*data)[static_cast<size_t>(i)]; }
    const T &operator[](int64_t i) const { return (*data)[static_cast<size_t>(i)]; }

    // 2-D accessors (row, col).
    T &at(int r, int c) { return (*data)[static_cast<size_t>(r) * shape[1] + c]; }
    const T &at(int r, int c) const { return (*data)[static_cast<size_t>(r) * shape[1] + c]; }

    T value() const {
        if (numel() != 1) throw std::invalid_argument("value() on non-scalar tensor " + shape_str(shape));
        return (*data)[0];
    }

    // Identity of the underlying buffer; used as the gradient-map key.
    const void *id() const { return static_cast<const void *>(data.get()); }

    bool all_finite() const {
        for (T v : *data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    TensorT clone() const {
        TensorT out;
        out.shape = shape;
        out.data = std::make_shared<std::vector<T>>(*data);
        out.requires_grad = requires_grad;
        return out;
    }
};

using Tensor = TensorT<double>;

template <class T>
inline TensorT<T> zeros_like(const TensorT<T> &t) {
    return TensorT<T>(t.shape, T(0));
}

template <class T>
inline void check_same_shape(const TensorT<T> &a, const TensorT<T> &b, const char *op) {
    if (a.shape != b.shape) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
    }
}

}  // namespace eat

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_map>
#include <utility>

#include "eat/tensor.hpp"

namespace eat {

template <class T>
struct GradMapT {
    std::unordered_map<const void *, TensorT<T>> grads;

    bool contains(const TensorT<T> &p) const { return grads.count(p.id()) != 0; }

    TensorT<T> at(const TensorT<T> &p) const {
        auto it = grads.find(p.id());
        if (it == grads.end()) throw std::invalid_argument("gradient map: tensor not present");
        return it->second;
    }

    TensorT<T> get_or_zeros(const TensorT<T> &p) const {
        auto it = grads.find(p.id());
        return it == grads.end() ? zeros_like(p) : it->second;
    }

    size_t size() const { return grads.size(); }
};

using GradMap = GradMapT<double>;

// Records one tape node per differentiable op, in execution order (which is a
// topological order of the step's computation). Confined to one training step
// and one thread of control.
template <class T>
class GradTapeT {
public:
    using Tensor = TensorT<T>;
    using BackwardFn = std::function<void(const std::vector<T> &, GradTapeT &, const std::vector<int> &)>;

    struct Node {
        Tensor out;  // keeps the output buffer (and identity) alive
        std::vector<int> inputs;
        BackwardFn backward;
        bool is_leaf = false;
    };

    int node_of(const Tensor &t) const {
        auto it = index_.find(t.id());
        return it == index_.end() ? -1 : it->second;
    }

    bool tracked(const Tensor &t) const { return t.requires_grad || node_of(t) >= 0; }

    // Returns the node id for an op input: existing node, a fresh leaf for a
    // requires_grad tensor, or -1 for a constant.
    int ensure_node(const Tensor &t) {
        int n = node_of(t);
        if (n >= 0) return n;
        if (!t.requires_grad) return -1;
        Node leaf;
        leaf.out = t;
        leaf.is_leaf = true;
        nodes_.push_back(std::move(leaf));
        int id = static_cast<int>(nodes_.size()) - 1;
        index_.emplace(t.id(), id);
        return id;
    }

    int record(const Tensor &out, std::vector<int> inputs, BackwardFn fn) {
        Node node;
        node.out = out;
        node.inputs = std::move(inputs);
        node.backward = std::move(fn);
        nodes_.push_back(std::move(node));
        int id = static_cast<int>(nodes_.size()) - 1;
        index_.emplace(out.id(), id);
        return id;
    }

    size_t size() const { return nodes_.size(); }

    std::vector<T> &grad_buf(int node) {
        auto &g = grads_[static_cast<size_t>(node)];
        if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].out.numel()), T(0));
        return g;
    }

    // Reverse sweep over the recorded order: each node visited exactly once,
    // forward buffers untouched. Returns gradients for every leaf seen by the
    // tape (zeros for leaves the loss does not reach).
    GradMapT<T> backward(const Tensor &loss) {
        if (loss.numel() != 1) {
            throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape));
        }
        grads_.assign(nodes_.size(), {});
        int ln = node_of(loss);
        if (ln >= 0) {
            grads_[static_cast<size_t>(ln)].assign(1, T(1));
            for (int i = ln; i >= 0; --i) {
                auto &nd = nodes_[static_cast<size_t>(i)];
                if (grads_[static_cast<size_t>(i)].empty() || !nd.backward) continue;
                nd.backward(grads_[static_cast<size_t>(i)], *this, nd.inputs);
            }
        }
        GradMapT<T> out;
        for (size_t i = 0; i < nodes_.size(); ++i) {
            if (!nodes_[i].is_leaf) continue;
            TensorT<T> g(nodes_[i].out.shape);
            if (!grads_[i].empty()) std::copy(grads_[i].begin(), grads_[i].end(), g.ptr());
            out.grads.emplace(nodes_[i].out.id(), std::move(g));
        }
        grads_.clear();
        grads_.shrink_to_fit();
        return out;
    }

private:
    std::vector<Node> nodes_;
    std::unordered_map<const void *, int> index_;
    std::vector<std::vector<T>> grads_;
};

using GradTape = GradTapeT<double>;

template <class T>
inline GradTapeT<T> *&current_tape() {
    thread_local GradTapeT<T> *tape = nullptr;
    return tape;
}

// RAII activation of a tape for the enclosing step.
template <class T = double>
class TapeScopeT {
public:
    explicit TapeScopeT(GradTapeT<T> &tape) : prev_(current_tape<T>()) { current_tape<T>() = &tape; }
    ~TapeScopeT() { current_tape<T>() = prev_; }
    TapeScopeT(const TapeScopeT &) = delete;
    TapeScopeT &operator=(const TapeScopeT &) = delete;

private:
    GradTapeT<T> *prev_;
};

using TapeScope = TapeScopeT<double>;

// Suspends recording: ops inside run as plain value computations even if a
// tape is active (the stop-gradient path).
template <class T = double>
class NoGradScopeT {
public:
    NoGradScopeT() : prev_(current_tape<T>()) { current_tape<T>() = nullptr; }
    ~NoGradScopeT() { current_tape<T>() = prev_; }
    NoGradScopeT(const NoGradScopeT &) = delete;
    NoGradScopeT &operator=(const NoGradScopeT &) = delete;

private:
    GradTapeT<T> *prev_;
};

using NoGradScope = NoGradScopeT<double>;

template <class T>
inline GradMapT<T> backward(const TensorT<T> &loss, GradTapeT<T> &tape) {
    return tape.backward(loss);
}

namespace detail {

template <class T>
bool should_record(GradTapeT<T> *tape, std::initializer_list<const TensorT<T> *> ins) {
    if (!tape) return false;
    for (const auto *t : ins) {
        if (tape->tracked(*t)) return true;
    }
    return false;
}

// Line iteration along `axis`: element k of line (outer, inner) lives at
// outer*extent*stride + k*stride + inner.
struct AxisView {
    int64_t lines = 0;
    int64_t extent = 0;
    int64_t stride = 0;
};

template <class T>
AxisView axis_view(const TensorT<T> &x, int axis, const char *op) {
    int r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) {
        throw std::invalid_argument(std::string(op) + ": axis out of range for shape " + shape_str(x.shape));
    }
    AxisView v;
    v.extent = x.shape[static_cast<size_t>(axis)];
    v.stride = 1;
    for (int i = axis + 1; i < r; ++i) v.stride *= x.shape[static_cast<size_t>(i)];
    v.lines = v.extent == 0 ? 0 : x.numel() / v.extent;
    return v;
}

inline int64_t line_base(const AxisView &v, int64_t line) {
    int64_t outer = line / v.stride;
    int64_t inner = line % v.stride;
    return outer * v.extent * v.stride + inner;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcast arithmetic
// ---------------------------------------------------------------------------

// a + b. b may equal a's shape, be a scalar, or (for 2-D a) a row of width
// a.shape[1] broadcast over rows.
template <class T>
TensorT<T> add(const TensorT<T> &a, const TensorT<T> &b) {
    enum class Mode { Same, Scalar, Row };
    Mode mode;
    if (a.shape == b.shape) {
        mode = Mode::Same;
    } else if (b.numel() == 1) {
        mode = Mode::Scalar;
    } else if (a.rank() == 2 && b.numel() == a.shape[1]) {
        mode = Mode::Row;
    } else {
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }

    TensorT<T> out(a.shape);
    const T *pa = a.ptr();
    const T *pb = b.ptr();
    T *po = out.ptr();
    int64_t n = a.numel();
    if (mode == Mode::Same) {
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    } else if (mode == Mode::Scalar) {
        T s = pb[0];
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + s;
    } else {
        int cols = a.shape[1];
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i % cols];
    }

    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&a, &b})) {
        int na = tape->ensure_node(a), nb = tape->ensure_node(b);
        int cols = a.rank() == 2 ? a.shape[1] : 0;
        tape->record(out, {na, nb},
                     [mode, cols, n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
                         if (in[0] >= 0) {
                             auto &ga = t.grad_buf(in[0]);
                             for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
                         }
                         if (in[1] >= 0) {
                             auto &gb = t.grad_buf(in[1]);
                             if (mode == Mode::Same) {
                                 for (int64_t i = 0; i < n; ++i) gb[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
                             } else if (mode == Mode::Scalar) {
                                 T s = T(0);
                                 for (int64_t i = 0; i < n; ++i) s += g[static_cast<size_t>(i)];
                                 gb[0] += s;
                             } else {
                                 for (int64_t i = 0; i < n; ++i) gb[static_cast<size_t>(i % cols)] += g[static_cast<size_t>(i)];
                             }
                         }
                     });
    }
    return out;
}

template <class T>
TensorT<T> sub(const TensorT<T> &a, const TensorT<T> &b) {
    check_same_shape(a, b, "sub");
    TensorT<T> out(a.shape);
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];

    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&a, &b})) {
        int na = tape->ensure_node(a), nb = tape->ensure_node(b);
        tape->record(out, {na, nb}, [n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &ga = t.grad_buf(in[0]);
                for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
            }
            if (in[1] >= 0) {
                auto &gb = t.grad_buf(in[1]);
                for (int64_t i = 0; i < n; ++i) gb[static_cast<size_t>(i)] -= g[static_cast<size_t>(i)];
            }
        });
    }
    return out;
}

template <class T>
TensorT<T> mul(const TensorT<T> &a, const TensorT<T> &b) {
    check_same_shape(a, b, "mul");
    TensorT<T> out(a.shape);
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];

    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&a, &b})) {
        int na = tape->ensure_node(a), nb = tape->ensure_node(b);
        tape->record(out, {na, nb}, [a, b, n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &ga = t.grad_buf(in[0]);
                for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * b[i];
            }
            if (in[1] >= 0) {
                auto &gb = t.grad_buf(in[1]);
                for (int64_t i = 0; i < n; ++i) gb[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * a[i];
            }
        });
    }
    return out;
}

template <class T>
TensorT<T> mul_scalar(const TensorT<T> &a, double s) {
    TensorT<T> out(a.shape);
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * static_cast<T>(s);

    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&a})) {
        int na = tape->ensure_node(a);
        tape->record(out, {na}, [s, n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &ga = t.grad_buf(in[0]);
                for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * static_cast<T>(s);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> matmul(const TensorT<T> &a, const TensorT<T> &b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw std::invalid_argument("matmul: expected rank-2 operands, got " + shape_str(a.shape) + " and " +
                                    shape_str(b.shape));
    }
    if (a.shape[1] != b.shape[0]) {
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape) + " x " +
                                    shape_str(b.shape));
    }
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    TensorT<T> out({m, n});
    const T *pa = a.ptr();
    const T *pb = b.ptr();
    T *po = out.ptr();
    for (int i = 0; i < m; ++i) {
        T *orow = po + static_cast<int64_t>(i) * n;
        const T *arow = pa + static_cast<int64_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            T aik = arow[kk];
            if (aik == T(0)) continue;
            const T *brow = pb + static_cast<int64_t>(kk) * n;
            for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }

    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&a, &b})) {
        int na = tape->ensure_node(a), nb = tape->ensure_node(b);
        tape->record(out, {na, nb},
                     [a, b, m, k, n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
                         const T *pa = a.ptr();
                         const T *pb = b.ptr();
                         if (in[0] >= 0) {
                             auto &ga = t.grad_buf(in[0]);
                             // dA = g . B^T
                             for (int i = 0; i < m; ++i) {
                                 const T *grow = g.data() + static_cast<size_t>(i) * n;
                                 T *garow = ga.data() + static_cast<size_t>(i) * k;
                                 for (int kk = 0; kk < k; ++kk) {
                                     const T *brow = pb + static_cast<int64_t>(kk) * n;
                                     T s = T(0);
                                     for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                                     garow[kk] += s;
                                 }
                             }
                         }
                         if (in[1] >= 0) {
                             auto &gb = t.grad_buf(in[1]);
                             // dB = A^T . g
                             for (int i = 0; i < m; ++i) {
                                 const T *arow = pa + static_cast<int64_t>(i) * k;
                                 const T *grow = g.data() + static_cast<size_t>(i) * n;
                                 for (int kk = 0; kk < k; ++kk) {
                                     T aik = arow[kk];
                                     if (aik == T(0)) continue;
                                     T *gbrow = gb.data() + static_cast<size_t>(kk) * n;
                                     for (int j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
                                 }
                             }
                         }
                     });
    }
    return out;
}

template <class T>
TensorT<T> transpose(const TensorT<T> &a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: expected rank-2, got " + shape_str(a.shape));
    const int m = a.shape[0], n = a.shape[1];
    TensorT<T> out({n, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out[static_cast<int64_t>(j) * m + i] = a[static_cast<int64_t>(i) * n + j];
    }
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&a})) {
        int na = tape->ensure_node(a);
        tape->record(out, {na}, [m, n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &ga = t.grad_buf(in[0]);
                for (int j = 0; j < n; ++j) {
                    for (int i = 0; i < m; ++i) {
                        ga[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
                    }
                }
            }
        });
    }
    return out;
}

template <class T>
TensorT<T> reshape(const TensorT<T> &a, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != a.numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape) + " as " + shape_str(new_shape));
    }
    TensorT<T> out(std::move(new_shape));
    std::copy(a.ptr(), a.ptr() + a.numel(), out.ptr());
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&a})) {
        int na = tape->ensure_node(a);
        int64_t n = a.numel();
        tape->record(out, {na}, [n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &ga = t.grad_buf(in[0]);
                for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Row / column selection and concatenation
// ---------------------------------------------------------------------------

namespace detail {
template <class T>
std::pair<int64_t, int64_t> rows_cols(const TensorT<T> &a, const char *op) {
    if (a.rank() < 1) throw std::invalid_argument(std::string(op) + ": expected rank >= 1");
    int64_t rows = a.shape[0];
    int64_t cols = rows == 0 ? 0 : a.numel() / rows;
    return {rows, cols};
}
}  // namespace detail

template <class T>
TensorT<T> gather_rows(const TensorT<T> &a, const std::vector<int> &idx) {
    auto [rows, cols] = detail::rows_cols(a, "gather_rows");
    for (int i : idx) {
        if (i < 0 || i >= rows) throw std::invalid_argument("gather_rows: index " + std::to_string(i) + " out of range");
    }
    std::vector<int> out_shape = a.shape;
    out_shape[0] = static_cast<int>(idx.size());
    TensorT<T> out(out_shape);
    for (size_t r = 0; r < idx.size(); ++r) {
        std::copy(a.ptr() + idx[r] * cols, a.ptr() + (idx[r] + 1) * cols, out.ptr() + static_cast<int64_t>(r) * cols);
    }
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&a})) {
        int na = tape->ensure_node(a);
        tape->record(out, {na}, [idx, cols](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &ga = t.grad_buf(in[0]);
                for (size_t r = 0; r < idx.size(); ++r) {
                    for (int64_t c = 0; c < cols; ++c) {
                        ga[static_cast<size_t>(idx[r] * cols + c)] += g[r * static_cast<size_t>(cols) + static_cast<size_t>(c)];
                    }
                }
            }
        });
    }
    return out;
}

template <class T>
TensorT<T> slice_rows(const TensorT<T> &a, int r0, int r1) {
    auto [rows, cols] = detail::rows_cols(a, "slice_rows");
    (void)cols;
    if (r0 < 0 || r1 > rows || r0 > r1) throw std::invalid_argument("slice_rows: bad range");
    std::vector<int> idx(static_cast<size_t>(r1 - r0));
    for (int i = r0; i < r1; ++i) idx[static_cast<size_t>(i - r0)] = i;
    return gather_rows(a, idx);
}

template <class T>
TensorT<T> slice_cols(const TensorT<T> &a, int c0, int c1) {
    if (a.rank() != 2) throw std::invalid_argument("slice_cols: expected rank-2");
    const int m = a.shape[0], n = a.shape[1];
    if (c0 < 0 || c1 > n || c0 > c1) throw std::invalid_argument("slice_cols: bad range");
    const int w = c1 - c0;
    TensorT<T> out({m, w});
    for (int i = 0; i < m; ++i) {
        std::copy(a.ptr() + static_cast<int64_t>(i) * n + c0, a.ptr() + static_cast<int64_t>(i) * n + c1,
                  out.ptr() + static_cast<int64_t>(i) * w);
    }
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&a})) {
        int na = tape->ensure_node(a);
        tape->record(out, {na}, [m, n, c0, w](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &ga = t.grad_buf(in[0]);
                for (int i = 0; i < m; ++i) {
                    for (int c = 0; c < w; ++c) {
                        ga[static_cast<size_t>(i) * n + static_cast<size_t>(c0 + c)] += g[static_cast<size_t>(i) * w + static_cast<size_t>(c)];
                    }
                }
            }
        });
    }
    return out;
}

template <class T>
TensorT<T> concat_rows(const std::vector<TensorT<T>> &parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    int64_t cols = detail::rows_cols(parts[0], "concat_rows").second;
    int total = 0;
    for (const auto &p : parts) {
        auto [r, c] = detail::rows_cols(p, "concat_rows");
        if (c != cols) throw std::invalid_argument("concat_rows: column widths differ");
        total += static_cast<int>(r);
    }
    std::vector<int> out_shape = parts[0].shape;
    out_shape[0] = total;
    TensorT<T> out(out_shape);
    int64_t off = 0;
    for (const auto &p : parts) {
        std::copy(p.ptr(), p.ptr() + p.numel(), out.ptr() + off);
        off += p.numel();
    }
    auto *tape = current_tape<T>();
    bool any = false;
    if (tape) {
        for (const auto &p : parts) any = any || tape->tracked(p);
    }
    if (any) {
        std::vector<int> ins;
        std::vector<int64_t> sizes;
        for (const auto &p : parts) {
            ins.push_back(tape->ensure_node(p));
            sizes.push_back(p.numel());
        }
        tape->record(out, ins, [sizes](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            size_t off = 0;
            for (size_t p = 0; p < in.size(); ++p) {
                if (in[p] >= 0) {
                    auto &gp = t.grad_buf(in[p]);
                    for (int64_t i = 0; i < sizes[p]; ++i) gp[static_cast<size_t>(i)] += g[off + static_cast<size_t>(i)];
                }
                off += static_cast<size_t>(sizes[p]);
            }
        });
    }
    return out;
}

template <class T>
TensorT<T> concat_cols(const std::vector<TensorT<T>> &parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    const int m = parts[0].shape[0];
    int total = 0;
    for (const auto &p : parts) {
        if (p.rank() != 2 || p.shape[0] != m) throw std::invalid_argument("concat_cols: row counts differ");
        total += p.shape[1];
    }
    TensorT<T> out({m, total});
    int off = 0;
    for (const auto &p : parts) {
        const int w = p.shape[1];
        for (int i = 0; i < m; ++i) {
            std::copy(p.ptr() + static_cast<int64_t>(i) * w, p.ptr() + static_cast<int64_t>(i + 1) * w,
                      out.ptr() + static_cast<int64_t>(i) * total + off);
        }
        off += w;
    }
    auto *tape = current_tape<T>();
    bool any = false;
    if (tape) {
        for (const auto &p : parts) any = any || tape->tracked(p);
    }
    if (any) {
        std::vector<int> ins;
        std::vector<int> widths;
        for (const auto &p : parts) {
            ins.push_back(tape->ensure_node(p));
            widths.push_back(p.shape[1]);
        }
        tape->record(out, ins, [m, total, widths](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            int off = 0;
            for (size_t p = 0; p < in.size(); ++p) {
                const int w = widths[p];
                if (in[p] >= 0) {
                    auto &gp = t.grad_buf(in[p]);
                    for (int i = 0; i < m; ++i) {
                        for (int c = 0; c < w; ++c) {
                            gp[static_cast<size_t>(i) * w + static_cast<size_t>(c)] +=
                                g[static_cast<size_t>(i) * total + static_cast<size_t>(off + c)];
                        }
                    }
                }
                off += w;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Normalization and activations
// ---------------------------------------------------------------------------

// Zero mean, unit variance along `axis` (population variance + eps inside the
// sqrt), then optional per-channel affine. gain/bias extent must equal the
// normalized extent.
template <class T>
TensorT<T> layer_norm(const TensorT<T> &x, int axis, const TensorT<T> *gain = nullptr,
                      const TensorT<T> *bias = nullptr, double eps = 1e-6) {
    auto v = detail::axis_view(x, axis, "layer_norm");
    if (v.extent == 0) throw std::invalid_argument("layer_norm: zero-length axis");
    if (gain && gain->numel() != v.extent) throw std::invalid_argument("layer_norm: gain extent mismatch");
    if (bias && bias->numel() != v.extent) throw std::invalid_argument("layer_norm: bias extent mismatch");

    TensorT<T> out(x.shape);
    const T *px = x.ptr();
    T *po = out.ptr();
    const T *pg = gain ? gain->ptr() : nullptr;
    const T *pb = bias ? bias->ptr() : nullptr;
    for (int64_t line = 0; line < v.lines; ++line) {
        int64_t base = detail::line_base(v, line);
        T mean = T(0);
        for (int64_t k = 0; k < v.extent; ++k) mean += px[base + k * v.stride];
        mean /= static_cast<T>(v.extent);
        T var = T(0);
        for (int64_t k = 0; k < v.extent; ++k) {
            T d = px[base + k * v.stride] - mean;
            var += d * d;
        }
        var /= static_cast<T>(v.extent);
        T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
        for (int64_t k = 0; k < v.extent; ++k) {
            T xhat = (px[base + k * v.stride] - mean) * inv;
            T y = xhat;
            if (pg) y = y * pg[k];
            if (pb) y = y + pb[k];
            po[base + k * v.stride] = y;
        }
    }

    auto *tape = current_tape<T>();
    bool track_gain = gain && tape && tape->tracked(*gain);
    bool track_bias = bias && tape && tape->tracked(*bias);
    if (tape && (tape->tracked(x) || track_gain || track_bias)) {
        int nx = tape->ensure_node(x);
        int ng = gain ? tape->ensure_node(*gain) : -1;
        int nb = bias ? tape->ensure_node(*bias) : -1;
        TensorT<T> gain_copy = gain ? *gain : TensorT<T>();
        bool has_gain = gain != nullptr;
        tape->record(out, {nx, ng, nb},
                     [x, gain_copy, has_gain, v, eps](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
                         const T *px = x.ptr();
                         const T *pg = has_gain ? gain_copy.ptr() : nullptr;
                         std::vector<T> xhat(static_cast<size_t>(v.extent));
                         std::vector<T> dxhat(static_cast<size_t>(v.extent));
                         for (int64_t line = 0; line < v.lines; ++line) {
                             int64_t base = detail::line_base(v, line);
                             T mean = T(0);
                             for (int64_t k = 0; k < v.extent; ++k) mean += px[base + k * v.stride];
                             mean /= static_cast<T>(v.extent);
                             T var = T(0);
                             for (int64_t k = 0; k < v.extent; ++k) {
                                 T d = px[base + k * v.stride] - mean;
                                 var += d * d;
                             }
                             var /= static_cast<T>(v.extent);
                             T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
                             for (int64_t k = 0; k < v.extent; ++k) {
                                 xhat[static_cast<size_t>(k)] = (px[base + k * v.stride] - mean) * inv;
                             }
                             if (in[1] >= 0) {
                                 auto &gg = t.grad_buf(in[1]);
                                 for (int64_t k = 0; k < v.extent; ++k) {
                                     gg[static_cast<size_t>(k)] += g[static_cast<size_t>(base + k * v.stride)] * xhat[static_cast<size_t>(k)];
                                 }
                             }
                             if (in[2] >= 0) {
                                 auto &gb = t.grad_buf(in[2]);
                                 for (int64_t k = 0; k < v.extent; ++k) {
                                     gb[static_cast<size_t>(k)] += g[static_cast<size_t>(base + k * v.stride)];
                                 }
                             }
                             if (in[0] >= 0) {
                                 T mean_d = T(0), mean_dx = T(0);
                                 for (int64_t k = 0; k < v.extent; ++k) {
                                     T dy = g[static_cast<size_t>(base + k * v.stride)];
                                     if (pg) dy *= pg[k];
                                     dxhat[static_cast<size_t>(k)] = dy;
                                     mean_d += dy;
                                     mean_dx += dy * xhat[static_cast<size_t>(k)];
                                 }
                                 mean_d /= static_cast<T>(v.extent);
                                 mean_dx /= static_cast<T>(v.extent);
                                 auto &gx = t.grad_buf(in[0]);
                                 for (int64_t k = 0; k < v.extent; ++k) {
                                     gx[static_cast<size_t>(base + k * v.stride)] +=
                                         inv * (dxhat[static_cast<size_t>(k)] - mean_d - xhat[static_cast<size_t>(k)] * mean_dx);
                                 }
                             }
                         }
                     });
    }
    return out;
}

// Exact-CDF GELU: x * Phi(x) with Phi from erfc (no tanh approximation).
template <class T>
TensorT<T> gelu(const TensorT<T> &x) {
    TensorT<T> out(x.shape);
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
        double v = static_cast<double>(x[i]);
        out[i] = static_cast<T>(v * 0.5 * std::erfc(-v * M_SQRT1_2));
    }
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&x})) {
        int nx = tape->ensure_node(x);
        tape->record(out, {nx}, [x, n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &gx = t.grad_buf(in[0]);
                constexpr double inv_sqrt_2pi = 0.3989422804014327;
                for (int64_t i = 0; i < n; ++i) {
                    double v = static_cast<double>(x[i]);
                    double cdf = 0.5 * std::erfc(-v * M_SQRT1_2);
                    double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                    gx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * static_cast<T>(cdf + v * pdf);
                }
            }
        });
    }
    return out;
}

// Max-subtracted softmax along `axis`.
template <class T>
TensorT<T> softmax(const TensorT<T> &x, int axis) {
    auto v = detail::axis_view(x, axis, "softmax");
    if (v.extent == 0) throw std::invalid_argument("softmax: zero-length axis");
    TensorT<T> out(x.shape);
    const T *px = x.ptr();
    T *po = out.ptr();
    for (int64_t line = 0; line < v.lines; ++line) {
        int64_t base = detail::line_base(v, line);
        T mx = px[base];
        for (int64_t k = 1; k < v.extent; ++k) mx = std::max(mx, px[base + k * v.stride]);
        T denom = T(0);
        for (int64_t k = 0; k < v.extent; ++k) {
            T e = std::exp(px[base + k * v.stride] - mx);
            po[base + k * v.stride] = e;
            denom += e;
        }
        for (int64_t k = 0; k < v.extent; ++k) po[base + k * v.stride] /= denom;
    }
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&x})) {
        int nx = tape->ensure_node(x);
        tape->record(out, {nx}, [out, v](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &gx = t.grad_buf(in[0]);
                const T *py = out.ptr();
                for (int64_t line = 0; line < v.lines; ++line) {
                    int64_t base = detail::line_base(v, line);
                    T dot = T(0);
                    for (int64_t k = 0; k < v.extent; ++k) {
                        dot += g[static_cast<size_t>(base + k * v.stride)] * py[base + k * v.stride];
                    }
                    for (int64_t k = 0; k < v.extent; ++k) {
                        gx[static_cast<size_t>(base + k * v.stride)] +=
                            py[base + k * v.stride] * (g[static_cast<size_t>(base + k * v.stride)] - dot);
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> sum_all(const TensorT<T> &x) {
    T s = T(0);
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) s += x[i];
    TensorT<T> out = TensorT<T>::scalar(s);
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&x})) {
        int nx = tape->ensure_node(x);
        tape->record(out, {nx}, [n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &gx = t.grad_buf(in[0]);
                for (int64_t i = 0; i < n; ++i) gx[static_cast<size_t>(i)] += g[0];
            }
        });
    }
    return out;
}

template <class T>
TensorT<T> mean_all(const TensorT<T> &x) {
    if (x.numel() == 0) throw std::invalid_argument("mean_all: empty tensor");
    return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// Mean over rows of a 2-D tensor -> 1 x n.
template <class T>
TensorT<T> mean_rows(const TensorT<T> &x) {
    if (x.rank() != 2 || x.shape[0] == 0) throw std::invalid_argument("mean_rows: expected non-empty rank-2");
    const int m = x.shape[0], n = x.shape[1];
    TensorT<T> out({1, n});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out[j] += x[static_cast<int64_t>(i) * n + j];
    }
    for (int j = 0; j < n; ++j) out[j] /= static_cast<T>(m);
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&x})) {
        int nx = tape->ensure_node(x);
        tape->record(out, {nx}, [m, n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &gx = t.grad_buf(in[0]);
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) {
                        gx[static_cast<size_t>(i) * n + static_cast<size_t>(j)] += g[static_cast<size_t>(j)] / static_cast<T>(m);
                    }
                }
            }
        });
    }
    return out;
}

// Mean squared error over all entries; empty inputs give 0.
template <class T>
TensorT<T> mse(const TensorT<T> &a, const TensorT<T> &b) {
    check_same_shape(a, b, "mse");
    int64_t n = a.numel();
    if (n == 0) return TensorT<T>::scalar(T(0));
    T s = T(0);
    for (int64_t i = 0; i < n; ++i) {
        T d = a[i] - b[i];
        s += d * d;
    }
    TensorT<T> out = TensorT<T>::scalar(s / static_cast<T>(n));
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&a, &b})) {
        int na = tape->ensure_node(a), nb = tape->ensure_node(b);
        tape->record(out, {na, nb}, [a, b, n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            T scale = g[0] * T(2) / static_cast<T>(n);
            for (int side = 0; side < 2; ++side) {
                if (in[side] < 0) continue;
                auto &gr = t.grad_buf(in[side]);
                T sign = side == 0 ? T(1) : T(-1);
                for (int64_t i = 0; i < n; ++i) {
                    gr[static_cast<size_t>(i)] += sign * scale * (a[i] - b[i]);
                }
            }
        });
    }
    return out;
}

// Mean binary cross entropy from logits; targets are constants in [0, 1].
template <class T>
TensorT<T> bce_with_logits(const TensorT<T> &logits, const TensorT<T> &targets) {
    check_same_shape(logits, targets, "bce_with_logits");
    int64_t n = logits.numel();
    if (n == 0) throw std::invalid_argument("bce_with_logits: empty input");
    T s = T(0);
    for (int64_t i = 0; i < n; ++i) {
        double z = static_cast<double>(logits[i]);
        double t = static_cast<double>(targets[i]);
        s += static_cast<T>(std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::fabs(z))));
    }
    TensorT<T> out = TensorT<T>::scalar(s / static_cast<T>(n));
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&logits})) {
        int nl = tape->ensure_node(logits);
        tape->record(out, {nl}, [logits, targets, n](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &gl = t.grad_buf(in[0]);
                T scale = g[0] / static_cast<T>(n);
                for (int64_t i = 0; i < n; ++i) {
                    double z = static_cast<double>(logits[i]);
                    double sig = 1.0 / (1.0 + std::exp(-z));
                    gl[static_cast<size_t>(i)] += scale * static_cast<T>(sig - static_cast<double>(targets[i]));
                }
            }
        });
    }
    return out;
}

// Mean (over rows) cross entropy between softmax(logits) and constant target
// distributions; rows of `targets` sum to 1.
template <class T>
TensorT<T> softmax_cross_entropy(const TensorT<T> &logits, const TensorT<T> &targets) {
    check_same_shape(logits, targets, "softmax_cross_entropy");
    if (logits.rank() != 2 || logits.shape[0] == 0) {
        throw std::invalid_argument("softmax_cross_entropy: expected non-empty rank-2 logits");
    }
    const int m = logits.shape[0], c = logits.shape[1];
    T s = T(0);
    for (int i = 0; i < m; ++i) {
        const T *row = logits.ptr() + static_cast<int64_t>(i) * c;
        T mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T lse = T(0);
        for (int j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
        lse = std::log(lse) + mx;
        for (int j = 0; j < c; ++j) s += targets[static_cast<int64_t>(i) * c + j] * (lse - row[j]);
    }
    TensorT<T> out = TensorT<T>::scalar(s / static_cast<T>(m));
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&logits})) {
        int nl = tape->ensure_node(logits);
        tape->record(out, {nl}, [logits, targets, m, c](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &gl = t.grad_buf(in[0]);
                T scale = g[0] / static_cast<T>(m);
                for (int i = 0; i < m; ++i) {
                    const T *row = logits.ptr() + static_cast<int64_t>(i) * c;
                    T mx = row[0];
                    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
                    T denom = T(0);
                    for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
                    for (int j = 0; j < c; ++j) {
                        T soft = std::exp(row[j] - mx) / denom;
                        gl[static_cast<size_t>(i) * c + static_cast<size_t>(j)] +=
                            scale * (soft - targets[static_cast<int64_t>(i) * c + j]);
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structured data movement used by the decoder path
// ---------------------------------------------------------------------------

// 3x3 neighborhood unfold of a (gt*gf) x ch grid into (gt*gf) x 9*ch with
// zero padding outside the grid. Offset order is row-major over (dt, df).
template <class T>
TensorT<T> im2col3(const TensorT<T> &x, int gt, int gf) {
    if (x.rank() != 2 || x.shape[0] != gt * gf) {
        throw std::invalid_argument("im2col3: grid mismatch, " + shape_str(x.shape) + " vs " + std::to_string(gt) +
                                    "x" + std::to_string(gf));
    }
    const int ch = x.shape[1];
    TensorT<T> out({gt * gf, 9 * ch});
    for (int t = 0; t < gt; ++t) {
        for (int f = 0; f < gf; ++f) {
            T *orow = out.ptr() + static_cast<int64_t>(t * gf + f) * 9 * ch;
            for (int dt = -1; dt <= 1; ++dt) {
                for (int df = -1; df <= 1; ++df) {
                    int o = (dt + 1) * 3 + (df + 1);
                    int tt = t + dt, ff = f + df;
                    if (tt < 0 || tt >= gt || ff < 0 || ff >= gf) continue;
                    const T *src = x.ptr() + static_cast<int64_t>(tt * gf + ff) * ch;
                    std::copy(src, src + ch, orow + static_cast<int64_t>(o) * ch);
                }
            }
        }
    }
    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&x})) {
        int nx = tape->ensure_node(x);
        tape->record(out, {nx}, [gt, gf, ch](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &gx = t.grad_buf(in[0]);
                for (int tt = 0; tt < gt; ++tt) {
                    for (int ff = 0; ff < gf; ++ff) {
                        const size_t grow = static_cast<size_t>(tt * gf + ff) * 9 * ch;
                        for (int dt = -1; dt <= 1; ++dt) {
                            for (int df = -1; df <= 1; ++df) {
                                int o = (dt + 1) * 3 + (df + 1);
                                int st = tt + dt, sf = ff + df;
                                if (st < 0 || st >= gt || sf < 0 || sf >= gf) continue;
                                size_t srow = static_cast<size_t>(st * gf + sf) * ch;
                                for (int cidx = 0; cidx < ch; ++cidx) {
                                    gx[srow + static_cast<size_t>(cidx)] += g[grow + static_cast<size_t>(o) * ch + static_cast<size_t>(cidx)];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

// Scatter `visible` rows to their grid positions and broadcast `mask_token`
// to the masked positions. The two index lists must partition 0..total-1.
template <class T>
TensorT<T> merge_rows(const TensorT<T> &visible, const std::vector<int> &visible_idx,
                      const std::vector<int> &masked_idx, const TensorT<T> &mask_token, int total) {
    auto [vrows, cols] = detail::rows_cols(visible, "merge_rows");
    if (static_cast<int64_t>(visible_idx.size()) != vrows) {
        throw std::invalid_argument("merge_rows: visible rows and index count differ");
    }
    if (vrows > 0 && mask_token.numel() != cols) {
        throw std::invalid_argument("merge_rows: mask token width mismatch");
    }
    std::vector<uint8_t> seen(static_cast<size_t>(total), 0);
    auto mark = [&](int i) {
        if (i < 0 || i >= total) throw std::invalid_argument("merge_rows: index out of range");
        if (seen[static_cast<size_t>(i)]) throw std::invalid_argument("merge_rows: index lists overlap");
        seen[static_cast<size_t>(i)] = 1;
    };
    for (int i : visible_idx) mark(i);
    for (int i : masked_idx) mark(i);
    if (visible_idx.size() + masked_idx.size() != static_cast<size_t>(total)) {
        throw std::invalid_argument("merge_rows: index lists leave gaps");
    }

    int width = static_cast<int>(mask_token.numel());
    TensorT<T> out({total, width});
    for (size_t r = 0; r < visible_idx.size(); ++r) {
        std::copy(visible.ptr() + static_cast<int64_t>(r) * width, visible.ptr() + static_cast<int64_t>(r + 1) * width,
                  out.ptr() + static_cast<int64_t>(visible_idx[r]) * width);
    }
    for (int i : masked_idx) {
        std::copy(mask_token.ptr(), mask_token.ptr() + width, out.ptr() + static_cast<int64_t>(i) * width);
    }

    auto *tape = current_tape<T>();
    if (detail::should_record<T>(tape, {&visible, &mask_token})) {
        int nv = tape->ensure_node(visible);
        int nm = tape->ensure_node(mask_token);
        std::vector<int> vis = visible_idx, msk = masked_idx;
        tape->record(out, {nv, nm}, [vis, msk, width](const std::vector<T> &g, GradTapeT<T> &t, const std::vector<int> &in) {
            if (in[0] >= 0) {
                auto &gv = t.grad_buf(in[0]);
                for (size_t r = 0; r < vis.size(); ++r) {
                    for (int c = 0; c < width; ++c) {
                        gv[r * static_cast<size_t>(width) + static_cast<size_t>(c)] +=
                            g[static_cast<size_t>(vis[r]) * width + static_cast<size_t>(c)];
                    }
                }
            }
            if (in[1] >= 0) {
                auto &gm = t.grad_buf(in[1]);
                for (int i : msk) {
                    for (int c = 0; c < width; ++c) {
                        gm[static_cast<size_t>(c)] += g[static_cast<size_t>(i) * width + static_cast<size_t>(c)];
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient verification oracle
// ---------------------------------------------------------------------------

// Central finite differences per coordinate against the tape gradient.
// Returns max over coordinates of |analytic - numeric| / max(1e-12, |a|+|n|).
template <class T>
double finite_difference_check(const std::function<TensorT<T>()> &f, std::vector<TensorT<T> *> params, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_difference_check: h must be positive");
    GradMapT<T> gm;
    {
        GradTapeT<T> tape;
        TapeScopeT<T> scope(tape);
        TensorT<T> loss = f();
        gm = tape.backward(loss);
    }
    double max_rel = 0.0;
    for (auto *p : params) {
        TensorT<T> g = gm.get_or_zeros(*p);
        for (int64_t i = 0; i < p->numel(); ++i) {
            T orig = (*p)[i];
            (*p)[i] = orig + static_cast<T>(h);
            double fp = static_cast<double>(f().value());
            (*p)[i] = orig - static_cast<T>(h);
            double fm = static_cast<double>(f().value());
            (*p)[i] = orig;
            double numeric = (fp - fm) / (2.0 * h);
            double analytic = static_cast<double>(g[i]);
            double denom = std::max(1e-12, std::fabs(analytic) + std::fabs(numeric));
            max_rel = std::max(max_rel, std::fabs(analytic - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace eat

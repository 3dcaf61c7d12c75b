#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sinc/error.hpp"

// Minimal reverse-mode differentiation over dense double tensors. Values live
// on a Tape; each primitive appends one entry whose closure knows how to turn
// the output gradient into input gradients. Broadcasting is limited to a
// scalar operand.
namespace sinc::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

/// Dense tensor. `grad` is sized like `data` once anything is accumulated.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d, bool rg = false) : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        require(data.size() == numel(shape), ErrorKind::invalid_shape,
                "tensor data length " + std::to_string(data.size()) + " != numel " + shape_str(shape));
    }

    static Tensor zeros(Shape s, bool rg = false) {
        const std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0), rg);
    }

    std::size_t size() const noexcept { return data.size(); }
    void zero_grad() { grad.assign(data.size(), 0.0); }
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }

    const Shape& shape() const;
    std::span<const double> value() const;
    std::span<const double> grad() const;
    std::size_t size() const { return value().size(); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::span<const double> gout)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Bind a tensor as a leaf. If it requires grad, backward() accumulates
    /// into `t.grad`, so `t` must outlive the backward call.
    Var leaf(Tensor& t) {
        Node n{t.shape, t.data, {}, t.requires_grad, t.requires_grad ? &t : nullptr};
        nodes_.push_back(std::move(n));
        return {this, nodes_.size() - 1};
    }

    Var constant(Shape shape, std::vector<double> data) {
        require(data.size() == numel(shape), ErrorKind::invalid_shape, "constant data does not match shape");
        nodes_.push_back(Node{std::move(shape), std::move(data), {}, false, nullptr});
        return {this, nodes_.size() - 1};
    }

    /// Append the result of a primitive. `inputs` decide whether the output
    /// needs a gradient; non-finite outputs are rejected here, naming `op`.
    Var record(const char* op, Shape shape, std::vector<double> value, std::initializer_list<Var> inputs,
               BackwardFn backward) {
        return record(op, std::move(shape), std::move(value), std::vector<Var>(inputs), std::move(backward));
    }

    Var record(const char* op, Shape shape, std::vector<double> value, const std::vector<Var>& inputs,
               BackwardFn backward) {
        for (double v : value) {
            if (!std::isfinite(v)) fail(ErrorKind::numeric_failure, std::string("non-finite value produced by ") + op);
        }
        bool rg = false;
        for (const Var& v : inputs) {
            require(v.tape() == this, ErrorKind::invalid_input, std::string(op) + ": operand from another tape");
            rg = rg || nodes_[v.id()].requires_grad;
        }
        nodes_.push_back(Node{std::move(shape), std::move(value), {}, rg, nullptr});
        const std::size_t id = nodes_.size() - 1;
        if (rg) ops_.push_back(Entry{op, id, std::move(backward)});
        return {this, id};
    }

    const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
    std::span<const double> value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient buffer for a node, allocated on first use.
    std::vector<double>& grad(std::size_t id) {
        Node& n = nodes_[id];
        if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
        return n.grad;
    }

    std::span<const double> grad_view(std::size_t id) const { return nodes_[id].grad; }

    std::size_t op_count() const noexcept { return ops_.size(); }

    /// Replace the backward closure of the entry that produced `out`.
    void set_backward(Var out, BackwardFn fn) {
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
            if (it->out == out.id()) {
                it->backward = std::move(fn);
                return;
            }
        }
        fail(ErrorKind::invalid_input, "set_backward: no entry for node");
    }

    /// Reverse sweep from a scalar. Node gradients are reset first; bound leaf
    /// tensors accumulate, so repeated calls add up.
    void backward(Var loss) {
        require(loss.tape() == this, ErrorKind::invalid_input, "loss belongs to another tape");
        require(nodes_[loss.id()].value.size() == 1, ErrorKind::invalid_input,
                "backward requires a scalar loss, got shape " + shape_str(nodes_[loss.id()].shape));
        for (Node& n : nodes_) n.grad.clear();
        grad(loss.id())[0] = 1.0;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
            if (it->out > loss.id()) continue;
            if (nodes_[it->out].grad.empty()) continue;
            const std::vector<double> gout = nodes_[it->out].grad;
            it->backward(*this, gout);
        }
        for (Node& n : nodes_) {
            if (!n.leaf || n.grad.empty()) continue;
            if (n.leaf->grad.size() != n.leaf->data.size()) n.leaf->grad.assign(n.leaf->data.size(), 0.0);
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.leaf->grad[i] += n.grad[i];
        }
    }

private:
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;
        bool requires_grad = false;
        Tensor* leaf = nullptr;
    };
    struct Entry {
        const char* op;
        std::size_t out;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::vector<Entry> ops_;
};

inline const Shape& Var::shape() const { return tape_->shape(id_); }
inline std::span<const double> Var::value() const { return tape_->value(id_); }
inline std::span<const double> Var::grad() const { return tape_->grad_view(id_); }

namespace detail {

inline void accumulate(Tape& t, Var v, std::size_t i, double g) {
    if (t.requires_grad(v.id())) t.grad(v.id())[i] += g;
}

// View a tensor as [outer, axis, inner] around `axis`.
struct AxisView {
    std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisView axis_view(const Shape& s, std::size_t axis) {
    require(axis < s.size(), ErrorKind::invalid_shape, "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
    v.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
    return v;
}

}  // namespace detail

inline std::vector<double>* grad_if(Tape& t, Var v) {
    return t.requires_grad(v.id()) ? &t.grad(v.id()) : nullptr;
}

/// Elementwise a + b; b may hold a single element.
inline Var add(Var a, Var b) {
    Tape& t = *a.tape();
    const bool scalar_b = b.size() == 1 && a.size() != 1;
    require(scalar_b || a.shape() == b.shape(), ErrorKind::invalid_shape,
            "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto av = a.value(), bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[scalar_b ? 0 : i];
    return t.record("add", a.shape(), std::move(out), {a, b}, [a, b, scalar_b](Tape& tp, std::span<const double> g) {
        if (auto* ga = grad_if(tp, a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        }
        if (auto* gb = grad_if(tp, b)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[scalar_b ? 0 : i] += g[i];
        }
    });
}

/// Elementwise a - b; b may hold a single element.
inline Var sub(Var a, Var b) {
    Tape& t = *a.tape();
    const bool scalar_b = b.size() == 1 && a.size() != 1;
    require(scalar_b || a.shape() == b.shape(), ErrorKind::invalid_shape,
            "sub: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto av = a.value(), bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[scalar_b ? 0 : i];
    return t.record("sub", a.shape(), std::move(out), {a, b}, [a, b, scalar_b](Tape& tp, std::span<const double> g) {
        if (auto* ga = grad_if(tp, a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        }
        if (auto* gb = grad_if(tp, b)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[scalar_b ? 0 : i] -= g[i];
        }
    });
}

/// Elementwise a * b; b may hold a single element.
inline Var multiply(Var a, Var b) {
    Tape& t = *a.tape();
    const bool scalar_b = b.size() == 1 && a.size() != 1;
    require(scalar_b || a.shape() == b.shape(), ErrorKind::invalid_shape,
            "multiply: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto av = a.value(), bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[scalar_b ? 0 : i];
    return t.record("multiply", a.shape(), std::move(out), {a, b},
                    [a, b, scalar_b](Tape& tp, std::span<const double> g) {
                        auto av = a.value(), bv = b.value();
                        if (auto* ga = grad_if(tp, a)) {
                            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[scalar_b ? 0 : i];
                        }
                        if (auto* gb = grad_if(tp, b)) {
                            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[scalar_b ? 0 : i] += g[i] * av[i];
                        }
                    });
}

inline Var scale(Var a, double c) {
    Tape& t = *a.tape();
    auto av = a.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = c * av[i];
    return t.record("scale", a.shape(), std::move(out), {a}, [a, c](Tape& tp, std::span<const double> g) {
        if (auto* ga = grad_if(tp, a)) {
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += c * g[i];
        }
    });
}

/// [m,k] x [k,n] -> [m,n]
inline Var matmul(Var a, Var b) {
    Tape& t = *a.tape();
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    require(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0], ErrorKind::invalid_shape,
            "matmul: " + shape_str(sa) + " x " + shape_str(sb));
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    auto av = a.value(), bv = b.value();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
        }
    }
    return t.record("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, k, n](Tape& tp, std::span<const double> g) {
        auto av = a.value(), bv = b.value();
        if (auto* ga = grad_if(tp, a)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
                    (*ga)[i * k + p] += s;
                }
        }
        if (auto* gb = grad_if(tp, b)) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double x = av[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += x * g[i * n + j];
                }
        }
    });
}

inline Var tanh(Var a) {
    Tape& t = *a.tape();
    auto av = a.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::tanh(av[i]);
    Var o = t.record("tanh", a.shape(), std::move(out), {a}, nullptr);
    // The closure reads the output value, so it is attached after recording.
    if (t.requires_grad(o.id())) {
        t.set_backward(o, [a, o](Tape& tp, std::span<const double> g) {
            auto y = o.value();
            if (auto* ga = grad_if(tp, a)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
            }
        });
    }
    return o;
}

/// Sum of all elements, as a single-element tensor of shape [1].
inline Var sum(Var a) {
    Tape& t = *a.tape();
    double s = 0.0;
    for (double v : a.value()) s += v;
    return t.record("sum", {1}, {s}, {a}, [a](Tape& tp, std::span<const double> g) {
        if (auto* ga = grad_if(tp, a)) {
            for (double& v : *ga) v += g[0];
        }
    });
}

/// Mean over the listed axes; those axes are removed from the shape (a full
/// reduction yields shape [1]).
inline Var mean_over_axes(Var a, std::vector<std::size_t> axes) {
    Tape& t = *a.tape();
    const Shape& s = a.shape();
    std::vector<bool> reduce(s.size(), false);
    for (std::size_t ax : axes) {
        require(ax < s.size(), ErrorKind::invalid_shape, "mean_over_axes: axis out of range for " + shape_str(s));
        reduce[ax] = true;
    }
    Shape out_shape;
    std::size_t count = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (reduce[i]) count *= s[i];
        else out_shape.push_back(s[i]);
    }
    if (out_shape.empty()) out_shape = {1};
    // Map every input element to its output slot.
    const std::size_t n = a.size();
    std::vector<std::size_t> target(n);
    {
        std::vector<std::size_t> idx(s.size(), 0);
        for (std::size_t flat = 0; flat < n; ++flat) {
            std::size_t o = 0;
            for (std::size_t d = 0; d < s.size(); ++d) {
                if (!reduce[d]) o = o * s[d] + idx[d];
            }
            target[flat] = o;
            for (std::size_t d = s.size(); d-- > 0;) {
                if (++idx[d] < s[d]) break;
                idx[d] = 0;
            }
        }
    }
    std::vector<double> out(numel(out_shape), 0.0);
    auto av = a.value();
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < n; ++i) out[target[i]] += av[i] * inv;
    return t.record("mean_over_axes", out_shape, std::move(out), {a},
                    [a, target = std::move(target), inv](Tape& tp, std::span<const double> g) {
                        if (auto* ga = grad_if(tp, a)) {
                            for (std::size_t i = 0; i < target.size(); ++i) (*ga)[i] += g[target[i]] * inv;
                        }
                    });
}

/// Elements [start, start+len) along `axis`.
inline Var slice(Var a, std::size_t axis, std::size_t start, std::size_t len) {
    Tape& t = *a.tape();
    const auto v = detail::axis_view(a.shape(), axis);
    require(start + len <= v.len && len > 0, ErrorKind::invalid_shape, "slice out of range");
    Shape os = a.shape();
    os[axis] = len;
    auto av = a.value();
    std::vector<double> out(v.outer * len * v.inner);
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t k = 0; k < v.inner; ++k)
                out[(o * len + i) * v.inner + k] = av[(o * v.len + start + i) * v.inner + k];
    return t.record("slice", os, std::move(out), {a}, [a, v, start, len](Tape& tp, std::span<const double> g) {
        if (auto* ga = grad_if(tp, a)) {
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t i = 0; i < len; ++i)
                    for (std::size_t k = 0; k < v.inner; ++k)
                        (*ga)[(o * v.len + start + i) * v.inner + k] += g[(o * len + i) * v.inner + k];
        }
    });
}

/// Join tensors along `axis`; all other dimensions must agree.
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
    require(!parts.empty(), ErrorKind::invalid_shape, "concat of nothing");
    Tape& t = *parts[0].tape();
    const Shape& s0 = parts[0].shape();
    Shape os = s0;
    os.at(axis) = 0;
    std::vector<std::size_t> offsets;
    for (const Var& p : parts) {
        const Shape& s = p.shape();
        require(s.size() == s0.size(), ErrorKind::invalid_shape, "concat rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
            require(d == axis || s[d] == s0[d], ErrorKind::invalid_shape,
                    "concat: " + shape_str(s) + " vs " + shape_str(s0));
        }
        offsets.push_back(os[axis]);
        os[axis] += s[axis];
    }
    const auto ov = detail::axis_view(os, axis);
    std::vector<double> out(numel(os));
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto pv = detail::axis_view(parts[p].shape(), axis);
        auto av = parts[p].value();
        for (std::size_t o = 0; o < pv.outer; ++o)
            for (std::size_t i = 0; i < pv.len; ++i)
                for (std::size_t k = 0; k < pv.inner; ++k)
                    out[(o * ov.len + offsets[p] + i) * ov.inner + k] = av[(o * pv.len + i) * pv.inner + k];
    }
    return t.record("concat", os, std::move(out), parts,
                    [parts, offsets, axis, ov](Tape& tp, std::span<const double> g) {
                        for (std::size_t p = 0; p < parts.size(); ++p) {
                            auto* ga = grad_if(tp, parts[p]);
                            if (!ga) continue;
                            const auto pv = detail::axis_view(parts[p].shape(), axis);
                            for (std::size_t o = 0; o < pv.outer; ++o)
                                for (std::size_t i = 0; i < pv.len; ++i)
                                    for (std::size_t k = 0; k < pv.inner; ++k)
                                        (*ga)[(o * pv.len + i) * pv.inner + k] +=
                                            g[(o * ov.len + offsets[p] + i) * ov.inner + k];
                        }
                    });
}

/// Pad `axis` by repeating its first and last entries.
inline Var replicate_pad(Var a, std::size_t axis, std::size_t left, std::size_t right) {
    Tape& t = *a.tape();
    const auto v = detail::axis_view(a.shape(), axis);
    require(v.len >= 1, ErrorKind::invalid_shape, "replicate_pad on empty axis");
    const std::size_t out_len = v.len + left + right;
    Shape os = a.shape();
    os[axis] = out_len;
    auto src = [=](std::size_t i) {
        if (i < left) return std::size_t{0};
        if (i >= left + v.len) return v.len - 1;
        return i - left;
    };
    auto av = a.value();
    std::vector<double> out(v.outer * out_len * v.inner);
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < out_len; ++i)
            for (std::size_t k = 0; k < v.inner; ++k)
                out[(o * out_len + i) * v.inner + k] = av[(o * v.len + src(i)) * v.inner + k];
    return t.record("replicate_pad", os, std::move(out), {a}, [a, v, out_len, src](Tape& tp, std::span<const double> g) {
        if (auto* ga = grad_if(tp, a)) {
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t i = 0; i < out_len; ++i)
                    for (std::size_t k = 0; k < v.inner; ++k)
                        (*ga)[(o * v.len + src(i)) * v.inner + k] += g[(o * out_len + i) * v.inner + k];
        }
    });
}

/// Valid 1-D convolution (cross-correlation) along time.
/// x: [Cin, T], w: [Cout, Cin, K], bias: [Cout] -> [Cout, T-K+1]
inline Var temporal_conv(Var x, Var w, Var bias) {
    Tape& t = *x.tape();
    const Shape& sx = x.shape();
    const Shape& sw = w.shape();
    require(sx.size() == 2 && sw.size() == 3 && sw[1] == sx[0] && bias.shape() == Shape{sw[0]},
            ErrorKind::invalid_shape,
            "temporal_conv: x " + shape_str(sx) + " w " + shape_str(sw) + " b " + shape_str(bias.shape()));
    const std::size_t cin = sx[0], len = sx[1], cout = sw[0], k = sw[2];
    require(len >= k, ErrorKind::invalid_shape, "temporal_conv: input shorter than kernel");
    const std::size_t olen = len - k + 1;
    auto xv = x.value(), wv = w.value(), bv = bias.value();
    std::vector<double> out(cout * olen);
    for (std::size_t co = 0; co < cout; ++co) {
        double* dst = out.data() + co * olen;
        std::fill(dst, dst + olen, bv[co]);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* src = xv.data() + ci * len;
            for (std::size_t j = 0; j < k; ++j) {
                const double wt = wv[(co * cin + ci) * k + j];
                for (std::size_t i = 0; i < olen; ++i) dst[i] += wt * src[i + j];
            }
        }
    }
    return t.record("temporal_conv", {cout, olen}, std::move(out), {x, w, bias},
                    [x, w, bias, cin, len, cout, k, olen](Tape& tp, std::span<const double> g) {
                        auto xv = x.value(), wv = w.value();
                        auto* gx = grad_if(tp, x);
                        auto* gw = grad_if(tp, w);
                        auto* gb = grad_if(tp, bias);
                        for (std::size_t co = 0; co < cout; ++co) {
                            const double* go = g.data() + co * olen;
                            if (gb) {
                                double s = 0.0;
                                for (std::size_t i = 0; i < olen; ++i) s += go[i];
                                (*gb)[co] += s;
                            }
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                                const double* src = xv.data() + ci * len;
                                for (std::size_t j = 0; j < k; ++j) {
                                    const std::size_t widx = (co * cin + ci) * k + j;
                                    if (gw) {
                                        double s = 0.0;
                                        for (std::size_t i = 0; i < olen; ++i) s += go[i] * src[i + j];
                                        (*gw)[widx] += s;
                                    }
                                    if (gx) {
                                        const double wt = wv[widx];
                                        double* dx = gx->data() + ci * len;
                                        for (std::size_t i = 0; i < olen; ++i) dx[i + j] += wt * go[i];
                                    }
                                }
                            }
                        }
                    });
}

/// Valid 3-D convolution over (time, height, width).
/// x: [Cin, T, H, W], w: [Cout, Cin, KT, KH, KW], bias: [Cout]
inline Var conv3d(Var x, Var w, Var bias) {
    Tape& t = *x.tape();
    const Shape& sx = x.shape();
    const Shape& sw = w.shape();
    require(sx.size() == 4 && sw.size() == 5 && sw[1] == sx[0] && bias.shape() == Shape{sw[0]},
            ErrorKind::invalid_shape, "conv3d: x " + shape_str(sx) + " w " + shape_str(sw));
    const std::size_t cin = sx[0], tl = sx[1], hl = sx[2], wl = sx[3];
    const std::size_t cout = sw[0], kt = sw[2], kh = sw[3], kw = sw[4];
    require(tl >= kt && hl >= kh && wl >= kw, ErrorKind::invalid_shape, "conv3d: input smaller than kernel");
    const std::size_t ot = tl - kt + 1, oh = hl - kh + 1, ow = wl - kw + 1;
    auto xv = x.value(), wv = w.value(), bv = bias.value();
    auto xi = [=](std::size_t c, std::size_t a, std::size_t b, std::size_t d) { return ((c * tl + a) * hl + b) * wl + d; };
    auto wi = [=](std::size_t o, std::size_t c, std::size_t a, std::size_t b, std::size_t d) {
        return (((o * cin + c) * kt + a) * kh + b) * kw + d;
    };
    auto oi = [=](std::size_t o, std::size_t a, std::size_t b, std::size_t d) { return ((o * ot + a) * oh + b) * ow + d; };
    std::vector<double> out(cout * ot * oh * ow);
    for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t a = 0; a < ot; ++a)
            for (std::size_t b = 0; b < oh; ++b)
                for (std::size_t d = 0; d < ow; ++d) {
                    double s = bv[co];
                    for (std::size_t ci = 0; ci < cin; ++ci)
                        for (std::size_t p = 0; p < kt; ++p)
                            for (std::size_t q = 0; q < kh; ++q)
                                for (std::size_t r = 0; r < kw; ++r)
                                    s += wv[wi(co, ci, p, q, r)] * xv[xi(ci, a + p, b + q, d + r)];
                    out[oi(co, a, b, d)] = s;
                }
    return t.record("conv3d", {cout, ot, oh, ow}, std::move(out), {x, w, bias},
                    [=](Tape& tp, std::span<const double> g) {
                        auto xv = x.value(), wv = w.value();
                        auto* gx = grad_if(tp, x);
                        auto* gw = grad_if(tp, w);
                        auto* gb = grad_if(tp, bias);
                        for (std::size_t co = 0; co < cout; ++co)
                            for (std::size_t a = 0; a < ot; ++a)
                                for (std::size_t b = 0; b < oh; ++b)
                                    for (std::size_t d = 0; d < ow; ++d) {
                                        const double go = g[oi(co, a, b, d)];
                                        if (gb) (*gb)[co] += go;
                                        for (std::size_t ci = 0; ci < cin; ++ci)
                                            for (std::size_t p = 0; p < kt; ++p)
                                                for (std::size_t q = 0; q < kh; ++q)
                                                    for (std::size_t r = 0; r < kw; ++r) {
                                                        const std::size_t wix = wi(co, ci, p, q, r);
                                                        const std::size_t xix = xi(ci, a + p, b + q, d + r);
                                                        if (gw) (*gw)[wix] += go * xv[xix];
                                                        if (gx) (*gx)[xix] += go * wv[wix];
                                                    }
                                    }
                    });
}

/// Linear interpolation along `axis` at positions offset + i * step for
/// i = 0 .. out_len-1. Every position must lie inside [0, len-1].
inline Var linear_resample(Var a, std::size_t axis, double offset, double step, std::size_t out_len) {
    Tape& t = *a.tape();
    const auto v = detail::axis_view(a.shape(), axis);
    require(out_len >= 1 && step > 0.0 && offset >= 0.0, ErrorKind::invalid_shape, "linear_resample: bad grid");
    const double last = offset + step * static_cast<double>(out_len - 1);
    require(last <= static_cast<double>(v.len - 1) + 1e-9, ErrorKind::invalid_shape,
            "linear_resample: grid runs past the end of the axis");
    std::vector<std::size_t> lo(out_len);
    std::vector<double> frac(out_len);
    for (std::size_t i = 0; i < out_len; ++i) {
        const double pos = std::min(offset + step * static_cast<double>(i), static_cast<double>(v.len - 1));
        auto l = static_cast<std::size_t>(std::floor(pos));
        if (l >= v.len - 1) l = v.len >= 2 ? v.len - 2 : 0;
        lo[i] = l;
        frac[i] = v.len >= 2 ? pos - static_cast<double>(l) : 0.0;
    }
    const std::size_t hi_off = v.len >= 2 ? 1 : 0;
    Shape os = a.shape();
    os[axis] = out_len;
    auto av = a.value();
    std::vector<double> out(v.outer * out_len * v.inner);
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < out_len; ++i)
            for (std::size_t k = 0; k < v.inner; ++k) {
                const double x0 = av[(o * v.len + lo[i]) * v.inner + k];
                const double x1 = av[(o * v.len + lo[i] + hi_off) * v.inner + k];
                out[(o * out_len + i) * v.inner + k] = x0 + frac[i] * (x1 - x0);
            }
    return t.record("linear_resample", os, std::move(out), {a},
                    [a, v, out_len, lo, frac, hi_off](Tape& tp, std::span<const double> g) {
                        if (auto* ga = grad_if(tp, a)) {
                            for (std::size_t o = 0; o < v.outer; ++o)
                                for (std::size_t i = 0; i < out_len; ++i)
                                    for (std::size_t k = 0; k < v.inner; ++k) {
                                        const double gi = g[(o * out_len + i) * v.inner + k];
                                        (*ga)[(o * v.len + lo[i]) * v.inner + k] += gi * (1.0 - frac[i]);
                                        (*ga)[(o * v.len + lo[i] + hi_off) * v.inner + k] += gi * frac[i];
                                    }
                        }
                    });
}

/// Scalar node whose value and input gradient were computed outside the tape
/// (the spectral losses). `grad` has one entry per element of `input`.
inline Var external_loss(Var input, double value, std::vector<double> grad) {
    Tape& t = *input.tape();
    require(grad.size() == input.size(), ErrorKind::invalid_shape, "external_loss gradient does not match input");
    return t.record("external_loss", {1}, {value}, {input},
                    [input, grad = std::move(grad)](Tape& tp, std::span<const double> g) {
                        if (auto* gi = grad_if(tp, input)) {
                            for (std::size_t i = 0; i < grad.size(); ++i) (*gi)[i] += g[0] * grad[i];
                        }
                    });
}

/// Multi-input form: one gradient vector per input.
inline Var external_loss(const std::vector<Var>& inputs, double value, std::vector<std::vector<double>> grads) {
    require(!inputs.empty() && grads.size() == inputs.size(), ErrorKind::invalid_shape,
            "external_loss needs one gradient per input");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        require(grads[i].size() == inputs[i].size(), ErrorKind::invalid_shape, "external_loss gradient does not match input");
    }
    Tape& t = *inputs[0].tape();
    return t.record("external_loss", {1}, {value}, inputs,
                    [inputs, grads = std::move(grads)](Tape& tp, std::span<const double> g) {
                        for (std::size_t k = 0; k < inputs.size(); ++k) {
                            if (auto* gi = grad_if(tp, inputs[k])) {
                                for (std::size_t i = 0; i < grads[k].size(); ++i) (*gi)[i] += g[0] * grads[k][i];
                            }
                        }
                    });
}

}  // namespace sinc::ad

// SPDX-License-Identifier: Apache-2.0
#include "wmgm/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "wmgm/error.hpp"

namespace wmgm::nn {

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}});
    return Var{nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, true, {}});
    return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Pullback pullback) {
    bool needs = false;
    for (Var in : inputs) needs = needs || node(in).requires_grad;
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(pullback) : Pullback{}});
    return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
    require(v.valid() && v.id < nodes_.size(), "invalid tape variable ", v.id);
    return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor Tape::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty()) return Tensor(n.value.shape());
    return n.grad;
}

Tensor& Tape::grad_buffer(Var v) {
    node(v);
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Tape::backward(Var root, const Tensor& seed) {
    const Node& r = node(root);
    require(seed.shape() == r.value.shape(), "backward seed shape ", to_string(seed.shape()),
            " does not match root shape ", to_string(r.value.shape()));
    for (auto& n : nodes_) n.grad = Tensor();
    grad_buffer(root) = seed;
    for (std::size_t i = root.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.pullback || n.grad.empty()) continue;
        n.pullback(*this, n.grad);
    }
}

void Tape::backward(Var root) {
    require(value(root).size() == 1, "backward without seed needs a one-element root, got ",
            to_string(value(root).shape()));
    backward(root, Tensor(value(root).shape(), 1.0));
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

void same_shape(const Tape& t, Var a, Var b, const char* op) {
    require(t.value(a).shape() == t.value(b).shape(), op, ": shape mismatch ", to_string(t.value(a).shape()),
            " vs ", to_string(t.value(b).shape()));
}

template <typename F>
Tensor map(const Tensor& a, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

void accumulate_scaled(Tape& t, Var v, const Tensor& g, double s) {
    if (!t.requires_grad(v)) return;
    Tensor& buf = t.grad_buffer(v);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += s * g[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Var add(Tape& t, Var a, Var b) {
    same_shape(t, a, b, "add");
    return t.record(t.value(a) + t.value(b), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        accumulate_scaled(tp, a, g, 1.0);
        accumulate_scaled(tp, b, g, 1.0);
    });
}

Var sub(Tape& t, Var a, Var b) {
    same_shape(t, a, b, "sub");
    return t.record(t.value(a) - t.value(b), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        accumulate_scaled(tp, a, g, 1.0);
        accumulate_scaled(tp, b, g, -1.0);
    });
}

Var mul(Tape& t, Var a, Var b) {
    same_shape(t, a, b, "mul");
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(a);
        const Tensor& bv = tp.value(b);
        if (tp.requires_grad(a)) {
            Tensor& ga = tp.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (tp.requires_grad(b)) {
            Tensor& gb = tp.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var div(Tape& t, Var a, Var b) {
    same_shape(t, a, b, "div");
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(a);
        const Tensor& bv = tp.value(b);
        if (tp.requires_grad(a)) {
            Tensor& ga = tp.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
        }
        if (tp.requires_grad(b)) {
            Tensor& gb = tp.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

Var square(Tape& t, Var a) {
    return t.record(map(t.value(a), [](double v) { return v * v; }), {a}, [a](Tape& tp, const Tensor& g) {
        const Tensor& av = tp.value(a);
        Tensor& ga = tp.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * av[i] * g[i];
    });
}

Var neg(Tape& t, Var a) { return scale(t, a, -1.0); }

Var scale(Tape& t, Var a, double s) {
    return t.record(t.value(a) * s, {a}, [a, s](Tape& tp, const Tensor& g) { accumulate_scaled(tp, a, g, s); });
}

Var add_scalar(Tape& t, Var a, double s) {
    return t.record(map(t.value(a), [s](double v) { return v + s; }), {a},
                    [a](Tape& tp, const Tensor& g) { accumulate_scaled(tp, a, g, 1.0); });
}

Var mul_const(Tape& t, Var a, const Tensor& c) {
    require(t.value(a).shape() == c.shape(), "mul_const: shape mismatch ", to_string(t.value(a).shape()), " vs ",
            to_string(c.shape()));
    Tensor out(c.shape());
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = t.value(a)[i] * c[i];
    return t.record(std::move(out), {a}, [a, c](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c[i];
    });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Tape& t, Var a) {
    return t.record(Tensor::scalar(t.value(a).sum()), {a}, [a](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buffer(a);
        for (double& v : ga.data()) v += g[0];
    });
}

Var mean(Tape& t, Var a) {
    const double n = static_cast<double>(t.value(a).size());
    return t.record(Tensor::scalar(t.value(a).sum() / n), {a}, [a, n](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buffer(a);
        for (double& v : ga.data()) v += g[0] / n;
    });
}

// ---------------------------------------------------------------------------
// Activations

Var relu(Tape& t, Var a) { return leaky_relu(t, a, 0.0); }

Var leaky_relu(Tape& t, Var a, double slope) {
    return t.record(map(t.value(a), [slope](double v) { return v > 0.0 ? v : slope * v; }), {a},
                    [a, slope](Tape& tp, const Tensor& g) {
                        const Tensor& av = tp.value(a);
                        Tensor& ga = tp.grad_buffer(a);
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += av[i] > 0.0 ? g[i] : slope * g[i];
                    });
}

Var sigmoid(Tape& t, Var a) {
    Tensor out = map(t.value(a), [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    Tensor saved = out;
    return t.record(std::move(out), {a}, [a, saved = std::move(saved)](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * saved[i] * (1.0 - saved[i]);
    });
}

// ---------------------------------------------------------------------------
// Layers

Var dense(Tape& t, Var x, Var weight, Var bias) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(weight);
    const Tensor& bv = t.value(bias);
    require(xv.rank() == 2 && wv.rank() == 2 && bv.rank() == 1, "dense: expected x[B,in], W[out,in], b[out], got ",
            to_string(xv.shape()), ", ", to_string(wv.shape()), ", ", to_string(bv.shape()));
    const std::size_t B = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
    require(wv.dim(1) == in && bv.dim(0) == out, "dense: input features ", in, " vs weight ",
            to_string(wv.shape()), " and bias ", to_string(bv.shape()));
    Tensor y({B, out});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < out; ++o) {
            double s = bv[o];
            for (std::size_t i = 0; i < in; ++i) s += wv[o * in + i] * xv[b * in + i];
            y[b * out + o] = s;
        }
    return t.record(std::move(y), {x, weight, bias}, [x, weight, bias, B, in, out](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value(x);
        const Tensor& wv = tp.value(weight);
        if (tp.requires_grad(x)) {
            Tensor& gx = tp.grad_buffer(x);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t o = 0; o < out; ++o) {
                    const double go = g[b * out + o];
                    for (std::size_t i = 0; i < in; ++i) gx[b * in + i] += go * wv[o * in + i];
                }
        }
        if (tp.requires_grad(weight)) {
            Tensor& gw = tp.grad_buffer(weight);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t o = 0; o < out; ++o) {
                    const double go = g[b * out + o];
                    for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += go * xv[b * in + i];
                }
        }
        if (tp.requires_grad(bias)) {
            Tensor& gb = tp.grad_buffer(bias);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t o = 0; o < out; ++o) gb[o] += g[b * out + o];
        }
    });
}

namespace {

struct ConvDims {
    std::size_t N, C, H, W, O, K, pad;
};

// Valid output range [lo, hi) along one axis for kernel offset k.
inline void valid_range(std::size_t extent, std::size_t k, std::size_t pad, std::size_t& lo, std::size_t& hi) {
    // output index y reads input y + k - pad, which must lie in [0, extent).
    lo = k < pad ? pad - k : 0;
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(extent) + static_cast<std::ptrdiff_t>(pad) -
                             static_cast<std::ptrdiff_t>(k);
    hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(h, 0, static_cast<std::ptrdiff_t>(extent)));
}

}  // namespace

Var conv2d(Tape& t, Var x, Var weight, Var bias) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(weight);
    const Tensor& bv = t.value(bias);
    require(xv.rank() == 4 && wv.rank() == 4 && bv.rank() == 1, "conv2d: expected x[N,C,H,W], W[O,C,K,K], b[O], got ",
            to_string(xv.shape()), ", ", to_string(wv.shape()), ", ", to_string(bv.shape()));
    const ConvDims d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(2) / 2};
    require(wv.dim(1) == d.C && wv.dim(3) == d.K && d.K % 2 == 1 && bv.dim(0) == d.O, "conv2d: input channels ", d.C,
            " incompatible with weight ", to_string(wv.shape()), " / bias ", to_string(bv.shape()));
    const std::size_t HW = d.H * d.W;
    Tensor y({d.N, d.O, d.H, d.W});
    for (std::size_t n = 0; n < d.N; ++n)
        for (std::size_t o = 0; o < d.O; ++o) {
            double* out = &y[(n * d.O + o) * HW];
            std::fill(out, out + HW, bv[o]);
            for (std::size_t c = 0; c < d.C; ++c) {
                const double* in = &xv[(n * d.C + c) * HW];
                for (std::size_t ky = 0; ky < d.K; ++ky) {
                    std::size_t ylo, yhi;
                    valid_range(d.H, ky, d.pad, ylo, yhi);
                    for (std::size_t kx = 0; kx < d.K; ++kx) {
                        std::size_t xlo, xhi;
                        valid_range(d.W, kx, d.pad, xlo, xhi);
                        const double w = wv[((o * d.C + c) * d.K + ky) * d.K + kx];
                        for (std::size_t yy = ylo; yy < yhi; ++yy) {
                            const double* row = in + (yy + ky - d.pad) * d.W + (kx - d.pad);
                            double* orow = out + yy * d.W;
                            for (std::size_t xx = xlo; xx < xhi; ++xx) orow[xx] += w * row[xx];
                        }
                    }
                }
            }
        }
    return t.record(std::move(y), {x, weight, bias}, [x, weight, bias, d, HW](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value(x);
        const Tensor& wv = tp.value(weight);
        const bool gx_on = tp.requires_grad(x), gw_on = tp.requires_grad(weight);
        Tensor* gx = gx_on ? &tp.grad_buffer(x) : nullptr;
        Tensor* gw = gw_on ? &tp.grad_buffer(weight) : nullptr;
        if (tp.requires_grad(bias)) {
            Tensor& gb = tp.grad_buffer(bias);
            for (std::size_t n = 0; n < d.N; ++n)
                for (std::size_t o = 0; o < d.O; ++o) {
                    const double* go = &g[(n * d.O + o) * HW];
                    double s = 0.0;
                    for (std::size_t i = 0; i < HW; ++i) s += go[i];
                    gb[o] += s;
                }
        }
        if (!gx_on && !gw_on) return;
        for (std::size_t n = 0; n < d.N; ++n)
            for (std::size_t o = 0; o < d.O; ++o) {
                const double* go = &g[(n * d.O + o) * HW];
                for (std::size_t c = 0; c < d.C; ++c) {
                    const double* in = &xv[(n * d.C + c) * HW];
                    double* gin = gx_on ? &(*gx)[(n * d.C + c) * HW] : nullptr;
                    for (std::size_t ky = 0; ky < d.K; ++ky) {
                        std::size_t ylo, yhi;
                        valid_range(d.H, ky, d.pad, ylo, yhi);
                        for (std::size_t kx = 0; kx < d.K; ++kx) {
                            std::size_t xlo, xhi;
                            valid_range(d.W, kx, d.pad, xlo, xhi);
                            const std::size_t widx = ((o * d.C + c) * d.K + ky) * d.K + kx;
                            const double w = wv[widx];
                            double acc = 0.0;
                            for (std::size_t yy = ylo; yy < yhi; ++yy) {
                                const std::size_t off = (yy + ky - d.pad) * d.W + (kx - d.pad);
                                const double* grow = go + yy * d.W;
                                if (gw_on) {
                                    const double* row = in + off;
                                    for (std::size_t xx = xlo; xx < xhi; ++xx) acc += grow[xx] * row[xx];
                                }
                                if (gx_on) {
                                    double* grow_in = gin + off;
                                    for (std::size_t xx = xlo; xx < xhi; ++xx) grow_in[xx] += w * grow[xx];
                                }
                            }
                            if (gw_on) (*gw)[widx] += acc;
                        }
                    }
                }
            }
    });
}

Var avgpool2(Tape& t, Var x) {
    const Tensor& xv = t.value(x);
    require(xv.rank() == 4 && xv.dim(2) % 2 == 0 && xv.dim(3) % 2 == 0,
            "avgpool2: expected [N,C,H,W] with even H and W, got ", to_string(xv.shape()));
    const std::size_t NC = xv.dim(0) * xv.dim(1), H = xv.dim(2), W = xv.dim(3), h = H / 2, w = W / 2;
    Tensor y({xv.dim(0), xv.dim(1), h, w});
    for (std::size_t p = 0; p < NC; ++p)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const double* r0 = &xv[p * H * W + (2 * i) * W + 2 * j];
                const double* r1 = r0 + W;
                y[p * h * w + i * w + j] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
            }
    return t.record(std::move(y), {x}, [x, NC, H, W, h, w](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad_buffer(x);
        for (std::size_t p = 0; p < NC; ++p)
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const double v = 0.25 * g[p * h * w + i * w + j];
                    double* r0 = &gx[p * H * W + (2 * i) * W + 2 * j];
                    double* r1 = r0 + W;
                    r0[0] += v;
                    r0[1] += v;
                    r1[0] += v;
                    r1[1] += v;
                }
    });
}

Var upsample2(Tape& t, Var x) {
    const Tensor& xv = t.value(x);
    require(xv.rank() == 4, "upsample2: expected [N,C,H,W], got ", to_string(xv.shape()));
    const std::size_t NC = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3), H = 2 * h, W = 2 * w;
    Tensor y({xv.dim(0), xv.dim(1), H, W});
    for (std::size_t p = 0; p < NC; ++p)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) y[p * H * W + i * W + j] = xv[p * h * w + (i / 2) * w + j / 2];
    return t.record(std::move(y), {x}, [x, NC, H, W, h, w](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad_buffer(x);
        for (std::size_t p = 0; p < NC; ++p)
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j) gx[p * h * w + (i / 2) * w + j / 2] += g[p * H * W + i * W + j];
    });
}

Var global_avgpool(Tape& t, Var x) {
    const Tensor& xv = t.value(x);
    require(xv.rank() == 4, "global_avgpool: expected [N,C,H,W], got ", to_string(xv.shape()));
    const std::size_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor y({N, C});
    for (std::size_t p = 0; p < N * C; ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < HW; ++i) s += xv[p * HW + i];
        y[p] = s / static_cast<double>(HW);
    }
    return t.record(std::move(y), {x}, [x, N, C, HW](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad_buffer(x);
        for (std::size_t p = 0; p < N * C; ++p) {
            const double v = g[p] / static_cast<double>(HW);
            for (std::size_t i = 0; i < HW; ++i) gx[p * HW + i] += v;
        }
    });
}

Var concat(Tape& t, std::span<const Var> parts) {
    std::vector<Tensor> values;
    values.reserve(parts.size());
    for (Var p : parts) values.push_back(t.value(p));
    Tensor y = concat_axis1(values);
    std::vector<Var> ins(parts.begin(), parts.end());
    return t.record(std::move(y), parts, [ins](Tape& tp, const Tensor& g) {
        std::size_t offset = 0;
        for (Var p : ins) {
            const std::size_t ch = tp.value(p).dim(1);
            if (tp.requires_grad(p)) tp.grad_buffer(p) += slice_axis1(g, offset, ch);
            offset += ch;
        }
    });
}

Var mul_channel_broadcast(Tape& t, Var x, Var gate) {
    const Tensor& xv = t.value(x);
    const Tensor& gv = t.value(gate);
    require(xv.rank() == 4 && gv.rank() == 4 && gv.dim(1) == 1 && gv.dim(0) == xv.dim(0) && gv.dim(2) == xv.dim(2) &&
                gv.dim(3) == xv.dim(3),
            "mul_channel_broadcast: x ", to_string(xv.shape()), " incompatible with gate ", to_string(gv.shape()));
    const std::size_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor y(xv.shape());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < HW; ++i) y[(n * C + c) * HW + i] = xv[(n * C + c) * HW + i] * gv[n * HW + i];
    return t.record(std::move(y), {x, gate}, [x, gate, N, C, HW](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value(x);
        const Tensor& gv = tp.value(gate);
        if (tp.requires_grad(x)) {
            Tensor& gx = tp.grad_buffer(x);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < HW; ++i)
                        gx[(n * C + c) * HW + i] += g[(n * C + c) * HW + i] * gv[n * HW + i];
        }
        if (tp.requires_grad(gate)) {
            Tensor& gg = tp.grad_buffer(gate);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t i = 0; i < HW; ++i)
                        gg[n * HW + i] += g[(n * C + c) * HW + i] * xv[(n * C + c) * HW + i];
        }
    });
}

std::vector<double> local_mean_matrix(std::size_t n, std::span<const double> window) {
    require(window.size() % 2 == 1, "local_mean window length must be odd");
    const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(window.size() / 2);
    std::vector<double> m(n * n, 0.0);
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        double mass = 0.0;
        for (std::ptrdiff_t k = -r; k <= r; ++k) {
            const std::ptrdiff_t j = i + k;
            if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) continue;
            m[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)] = window[static_cast<std::size_t>(k + r)];
            mass += window[static_cast<std::size_t>(k + r)];
        }
        for (std::size_t j = 0; j < n; ++j) m[static_cast<std::size_t>(i) * n + j] /= mass;
    }
    return m;
}

namespace {

// out = Bh * in * Bw^T (or the transpose map) for every trailing 2D slice.
Tensor apply_separable(const Tensor& in, const std::vector<double>& bh, const std::vector<double>& bw,
                       bool transpose) {
    const std::size_t H = in.dim(in.rank() - 2), W = in.dim(in.rank() - 1), slices = in.size() / (H * W);
    Tensor out(in.shape());
    std::vector<double> tmp(H * W);
    for (std::size_t s = 0; s < slices; ++s) {
        const double* a = &in[s * H * W];
        double* o = &out[s * H * W];
        // rows: tmp[i][j] = sum_k a[i][k] * Bw(j,k)   (or Bw(k,j) when transposed)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < W; ++k)
                    acc += a[i * W + k] * (transpose ? bw[k * W + j] : bw[j * W + k]);
                tmp[i * W + j] = acc;
            }
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < H; ++k)
                    acc += (transpose ? bh[k * H + i] : bh[i * H + k]) * tmp[k * W + j];
                o[i * W + j] = acc;
            }
    }
    return out;
}

}  // namespace

Var local_mean(Tape& t, Var x, std::span<const double> window) {
    const Tensor& xv = t.value(x);
    require(xv.rank() >= 2, "local_mean: expected rank >= 2, got ", to_string(xv.shape()));
    auto bh = local_mean_matrix(xv.dim(xv.rank() - 2), window);
    auto bw = local_mean_matrix(xv.dim(xv.rank() - 1), window);
    Tensor y = apply_separable(xv, bh, bw, false);
    return t.record(std::move(y), {x}, [x, bh = std::move(bh), bw = std::move(bw)](Tape& tp, const Tensor& g) {
        tp.grad_buffer(x) += apply_separable(g, bh, bw, true);
    });
}

Var reshape(Tape& t, Var x, Shape shape) {
    Shape original = t.value(x).shape();
    return t.record(t.value(x).reshaped(std::move(shape)), {x}, [x, original](Tape& tp, const Tensor& g) {
        tp.grad_buffer(x) += g.reshaped(original);
    });
}

}  // namespace wmgm::nn

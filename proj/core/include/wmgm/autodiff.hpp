// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

#include "wmgm/tensor.hpp"

namespace wmgm::nn {

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
    bool valid() const noexcept { return id != std::numeric_limits<std::size_t>::max(); }
};

/// Reverse-mode tape. Values are appended in evaluation order; backward walks
/// the tape in reverse and calls each node's pullback with its accumulated
/// output gradient. Nodes that depend on no variable carry no pullback.
class Tape {
public:
    using Pullback = std::function<void(Tape&, const Tensor& out_grad)>;

    Var constant(Tensor value);
    Var variable(Tensor value);
    Var record(Tensor value, std::span<const Var> inputs, Pullback pullback);
    Var record(Tensor value, std::initializer_list<Var> inputs, Pullback pullback) {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(pullback));
    }

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;
    /// Accumulated gradient; zeros if nothing flowed into `v`.
    Tensor grad(Var v) const;
    /// Mutable gradient buffer for pullbacks, zero-initialized on first use.
    Tensor& grad_buffer(Var v);

    void backward(Var root, const Tensor& seed);
    /// Backward from a one-element root with seed 1.
    void backward(Var root);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Pullback pullback;
    };
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
};

// Elementwise (shapes must match exactly).
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);
Var square(Tape& t, Var a);
Var neg(Tape& t, Var a);
Var scale(Tape& t, Var a, double s);
Var add_scalar(Tape& t, Var a, double s);
/// a * c with a constant tensor c of the same shape.
Var mul_const(Tape& t, Var a, const Tensor& c);

// Reductions to a one-element tensor.
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);

// Activations.
Var relu(Tape& t, Var a);
Var leaky_relu(Tape& t, Var a, double slope = 0.2);
Var sigmoid(Tape& t, Var a);

/// x[B, in], weight[out, in], bias[out] -> [B, out].
Var dense(Tape& t, Var x, Var weight, Var bias);
/// x[N, C, H, W], weight[O, C, K, K] (K odd), bias[O]; stride 1, zero padding K/2.
Var conv2d(Tape& t, Var x, Var weight, Var bias);
/// 2x2 mean pooling, stride 2, on the last two axes of a rank-4 tensor.
Var avgpool2(Tape& t, Var x);
/// Nearest-neighbour 2x upsampling on the last two axes of a rank-4 tensor.
Var upsample2(Tape& t, Var x);
/// [N, C, H, W] -> [N, C].
Var global_avgpool(Tape& t, Var x);
/// Concatenation along axis 1.
Var concat(Tape& t, std::span<const Var> parts);
/// x[N, C, H, W] * g[N, 1, H, W] broadcast over channels.
Var mul_channel_broadcast(Tape& t, Var x, Var g);
/// Separable smoothing of the last two axes with a symmetric 1D window. The
/// window is truncated at the borders and renormalized to unit mass at every
/// output position, so each output is a proper weighted local mean.
Var local_mean(Tape& t, Var x, std::span<const double> window);
Var reshape(Tape& t, Var x, Shape shape);

/// Dense matrix of the truncated-renormalized 1D smoothing used by local_mean.
std::vector<double> local_mean_matrix(std::size_t n, std::span<const double> window);

}  // namespace wmgm::nn

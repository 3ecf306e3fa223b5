// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wmgm/autodiff.hpp"
#include "wmgm/tensor.hpp"

namespace wmgm::nn {

enum class LayerKind {
    input,
    dense,
    conv3x3,
    avgpool2,
    upsample2,
    relu,
    leaky_relu,
    concat,
    attention_gate,
    global_avgpool,
};

std::string_view kind_name(LayerKind kind);

/// One node of a network graph.
///
/// Field use by kind:
///   input           `in` = declared features (rank 2) or channels (rank 4), `input_rank`
///   dense           `in` -> `out` features
///   conv3x3         `in` -> `out` channels, stride 1, padding 1
///   attention_gate  inputs {skip, gate}; `in` = skip channels, `gate_channels`,
///                   `out` = intermediate channels. Output = skip * sigmoid(psi(relu(Wx skip + Wg gate)))
///   others          parameter-free, channel counts inferred
struct LayerSpec {
    LayerKind kind = LayerKind::input;
    std::string name;
    std::vector<std::size_t> inputs;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t gate_channels = 0;
    std::size_t input_rank = 0;
};

struct NetworkSpec {
    std::vector<LayerSpec> nodes;
    std::vector<std::size_t> inputs;
    std::size_t output = 0;

    std::size_t add(LayerSpec layer);
    std::size_t add_input(std::string name, std::size_t channels, std::size_t rank);
    std::size_t add_layer(LayerKind kind, std::string name, std::vector<std::size_t> inputs, std::size_t in = 0,
                          std::size_t out = 0);
};

/// Structural checks: unique names, inputs refer to earlier nodes, arities match.
void validate(const NetworkSpec& spec);

/// Shape of every node for concrete input shapes; fails naming the first inconsistent node.
std::vector<Shape> infer_shapes(const NetworkSpec& spec, std::span<const Shape> input_shapes);

using ParameterSet = std::map<std::string, Tensor>;

std::size_t parameter_count(const ParameterSet& params);

/// Declared parameter shapes (name -> shape) of a spec.
std::map<std::string, Shape> parameter_shapes(const NetworkSpec& spec);

/// Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) for every weight and bias, drawn
/// from a stream derived from (seed, parameter name).
ParameterSet init_parameters(const NetworkSpec& spec, std::uint64_t seed);

class Network;

/// A network's parameters registered as variables on one tape. Forward may be
/// called several times (e.g. a critic on fake and real batches); gradients
/// from all uses accumulate into the same parameter variables.
class BoundNetwork {
public:
    /// With `trainable` false the parameters enter the tape as constants.
    BoundNetwork(const Network& net, Tape& tape, bool trainable = true);

    Var forward(std::span<const Var> inputs) const;
    Var forward(std::initializer_list<Var> inputs) const {
        return forward(std::span<const Var>(inputs.begin(), inputs.size()));
    }
    /// Parameter gradients after tape.backward; zeros for parameters the loss does not touch.
    ParameterSet gradients() const;

private:
    const Network* net_;
    Tape* tape_;
    std::map<std::string, Var> params_;
};

struct Gradients {
    ParameterSet parameters;
    std::vector<Tensor> inputs;
};

class Network {
public:
    Network(NetworkSpec spec, std::uint64_t seed);
    Network(NetworkSpec spec, ParameterSet params);

    Network(const Network& other);
    Network& operator=(const Network& other);
    Network(Network&&) noexcept;
    Network& operator=(Network&&) noexcept;
    ~Network();

    const NetworkSpec& spec() const noexcept { return spec_; }
    const ParameterSet& parameters() const noexcept { return params_; }
    ParameterSet& parameters() noexcept { return params_; }
    std::size_t parameter_count() const { return nn::parameter_count(params_); }

    BoundNetwork bind(Tape& tape, bool trainable = true) const { return BoundNetwork(*this, tape, trainable); }

    /// Forward pass that retains its tape for a subsequent backward().
    Tensor forward(std::span<const Tensor> inputs);
    Tensor forward(std::initializer_list<Tensor> inputs) {
        return forward(std::span<const Tensor>(inputs.begin(), inputs.size()));
    }
    /// Gradients of <output_grad, output> w.r.t. parameters and inputs of the last forward().
    Gradients backward(const Tensor& output_grad);

    /// Forward pass without retaining anything.
    Tensor evaluate(std::span<const Tensor> inputs) const;
    Tensor evaluate(std::initializer_list<Tensor> inputs) const {
        return evaluate(std::span<const Tensor>(inputs.begin(), inputs.size()));
    }

private:
    struct Session;

    NetworkSpec spec_;
    ParameterSet params_;
    std::unique_ptr<Session> session_;
};

inline Network init_network(NetworkSpec spec, std::uint64_t seed) { return Network(std::move(spec), seed); }

// ---------------------------------------------------------------------------
// Builders

/// Fully-connected net. Multiple rank-2 inputs are concatenated first; hidden
/// layers use leaky-relu(0.2); the output layer is linear.
NetworkSpec mlp_spec(std::vector<std::size_t> input_features, std::vector<std::size_t> hidden, std::size_t out);

struct EncoderDecoderConfig {
    std::vector<std::size_t> input_channels;
    std::size_t out_channels = 1;
    std::size_t width = 16;
    std::size_t depth = 2;
    bool attention = true;
};

/// Fully convolutional encoder-decoder: `depth` avgpool2 downsamplings with
/// channel doubling, nearest upsampling back, skip connections gated by
/// attention gates. Accepts any spatial size divisible by 2^depth.
NetworkSpec encoder_decoder_spec(const EncoderDecoderConfig& cfg);

struct CriticConfig {
    std::size_t in_channels = 3;
    std::size_t width = 16;
    std::size_t depth = 2;
};

/// Convolutional critic ending in global average pooling and a scalar dense head.
NetworkSpec critic_spec(const CriticConfig& cfg);

}  // namespace wmgm::nn

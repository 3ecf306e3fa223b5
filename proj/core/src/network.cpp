// SPDX-License-Identifier: Apache-2.0
#include "wmgm/network.hpp"

#include <cmath>
#include <set>

#include "wmgm/error.hpp"
#include "wmgm/rng.hpp"

namespace wmgm::nn {

std::string_view kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::input: return "input";
        case LayerKind::dense: return "dense";
        case LayerKind::conv3x3: return "conv3x3";
        case LayerKind::avgpool2: return "avgpool2";
        case LayerKind::upsample2: return "upsample-nearest2";
        case LayerKind::relu: return "relu";
        case LayerKind::leaky_relu: return "leaky-relu";
        case LayerKind::concat: return "concat";
        case LayerKind::attention_gate: return "attention-gate";
        case LayerKind::global_avgpool: return "global-avgpool";
    }
    return "?";
}

std::size_t NetworkSpec::add(LayerSpec layer) {
    nodes.push_back(std::move(layer));
    return nodes.size() - 1;
}

std::size_t NetworkSpec::add_input(std::string name, std::size_t channels, std::size_t rank) {
    LayerSpec l;
    l.kind = LayerKind::input;
    l.name = std::move(name);
    l.in = channels;
    l.input_rank = rank;
    inputs.push_back(add(std::move(l)));
    return inputs.back();
}

std::size_t NetworkSpec::add_layer(LayerKind kind, std::string name, std::vector<std::size_t> ins, std::size_t in,
                                   std::size_t out) {
    LayerSpec l;
    l.kind = kind;
    l.name = std::move(name);
    l.inputs = std::move(ins);
    l.in = in;
    l.out = out;
    return add(std::move(l));
}

namespace {

std::size_t expected_arity(LayerKind kind) {
    switch (kind) {
        case LayerKind::input: return 0;
        case LayerKind::attention_gate: return 2;
        case LayerKind::concat: return static_cast<std::size_t>(-1);
        default: return 1;
    }
}

std::string node_label(const LayerSpec& l) { return detail::concat("node '", l.name, "' (", kind_name(l.kind), ")"); }

}  // namespace

void validate(const NetworkSpec& spec) {
    require(!spec.nodes.empty(), "network spec has no nodes");
    std::set<std::string> names;
    for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
        const auto& l = spec.nodes[i];
        require(!l.name.empty(), "node ", i, " has no name");
        require(names.insert(l.name).second, "duplicate node name '", l.name, "'");
        for (auto in : l.inputs) require(in < i, node_label(l), " consumes node ", in, " which is not earlier");
        const auto arity = expected_arity(l.kind);
        if (arity == static_cast<std::size_t>(-1))
            require(l.inputs.size() >= 2, node_label(l), " needs at least two inputs");
        else
            require(l.inputs.size() == arity, node_label(l), " expects ", arity, " inputs, got ", l.inputs.size());
        if (l.kind == LayerKind::input) require(l.input_rank == 2 || l.input_rank == 4, node_label(l), " rank must be 2 or 4");
        if (l.kind == LayerKind::dense || l.kind == LayerKind::conv3x3 || l.kind == LayerKind::attention_gate)
            require(l.in > 0 && l.out > 0, node_label(l), " needs positive dimensions");
    }
    require(spec.output < spec.nodes.size(), "network output index out of range");
    for (auto in : spec.inputs)
        require(in < spec.nodes.size() && spec.nodes[in].kind == LayerKind::input, "declared input ", in,
                " is not an input node");
}

std::vector<Shape> infer_shapes(const NetworkSpec& spec, std::span<const Shape> input_shapes) {
    validate(spec);
    require(input_shapes.size() == spec.inputs.size(), "network expects ", spec.inputs.size(), " inputs, got ",
            input_shapes.size());
    std::vector<Shape> shapes(spec.nodes.size());
    for (std::size_t k = 0; k < spec.inputs.size(); ++k) shapes[spec.inputs[k]] = input_shapes[k];
    for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
        const auto& l = spec.nodes[i];
        auto in_shape = [&](std::size_t j) -> const Shape& { return shapes[l.inputs[j]]; };
        const std::string who = node_label(l);
        switch (l.kind) {
            case LayerKind::input: {
                const Shape& s = shapes[i];
                require(s.size() == l.input_rank && s[1] == l.in, who, " declared ", l.in, " channels at rank ",
                        l.input_rank, ", got ", to_string(s));
                break;
            }
            case LayerKind::dense: {
                const Shape& s = in_shape(0);
                require(s.size() == 2 && s[1] == l.in, who, " expects [B,", l.in, "], got ", to_string(s));
                shapes[i] = {s[0], l.out};
                break;
            }
            case LayerKind::conv3x3: {
                const Shape& s = in_shape(0);
                require(s.size() == 4 && s[1] == l.in, who, " expects [N,", l.in, ",H,W], got ", to_string(s));
                shapes[i] = {s[0], l.out, s[2], s[3]};
                break;
            }
            case LayerKind::avgpool2: {
                const Shape& s = in_shape(0);
                require(s.size() == 4 && s[2] % 2 == 0 && s[3] % 2 == 0, who, " needs even spatial sides, got ",
                        to_string(s));
                shapes[i] = {s[0], s[1], s[2] / 2, s[3] / 2};
                break;
            }
            case LayerKind::upsample2: {
                const Shape& s = in_shape(0);
                require(s.size() == 4, who, " expects rank 4, got ", to_string(s));
                shapes[i] = {s[0], s[1], s[2] * 2, s[3] * 2};
                break;
            }
            case LayerKind::relu:
            case LayerKind::leaky_relu: shapes[i] = in_shape(0); break;
            case LayerKind::concat: {
                Shape s = in_shape(0);
                for (std::size_t j = 1; j < l.inputs.size(); ++j) {
                    const Shape& o = in_shape(j);
                    require(o.size() == s.size() && o[0] == s[0], who, " cannot join ", to_string(s), " and ",
                            to_string(o));
                    for (std::size_t a = 2; a < s.size(); ++a)
                        require(o[a] == s[a], who, " cannot join ", to_string(s), " and ", to_string(o));
                    s[1] += o[1];
                }
                shapes[i] = s;
                break;
            }
            case LayerKind::attention_gate: {
                const Shape& x = in_shape(0);
                const Shape& g = in_shape(1);
                require(x.size() == 4 && x[1] == l.in, who, " skip input expects ", l.in, " channels, got ",
                        to_string(x));
                require(g.size() == 4 && g[1] == l.gate_channels && g[0] == x[0] && g[2] == x[2] && g[3] == x[3], who,
                        " gate ", to_string(g), " incompatible with skip ", to_string(x));
                shapes[i] = x;
                break;
            }
            case LayerKind::global_avgpool: {
                const Shape& s = in_shape(0);
                require(s.size() == 4, who, " expects rank 4, got ", to_string(s));
                shapes[i] = {s[0], s[1]};
                break;
            }
        }
    }
    return shapes;
}

std::size_t parameter_count(const ParameterSet& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

std::map<std::string, Shape> parameter_shapes(const NetworkSpec& spec) {
    validate(spec);
    std::map<std::string, Shape> out;
    for (const auto& l : spec.nodes) {
        switch (l.kind) {
            case LayerKind::dense:
                out[l.name + ".weight"] = {l.out, l.in};
                out[l.name + ".bias"] = {l.out};
                break;
            case LayerKind::conv3x3:
                out[l.name + ".weight"] = {l.out, l.in, 3, 3};
                out[l.name + ".bias"] = {l.out};
                break;
            case LayerKind::attention_gate:
                out[l.name + ".wx.weight"] = {l.out, l.in, 1, 1};
                out[l.name + ".wx.bias"] = {l.out};
                out[l.name + ".wg.weight"] = {l.out, l.gate_channels, 1, 1};
                out[l.name + ".wg.bias"] = {l.out};
                out[l.name + ".psi.weight"] = {1, l.out, 1, 1};
                out[l.name + ".psi.bias"] = {1};
                break;
            default: break;
        }
    }
    return out;
}

ParameterSet init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
    const auto shapes = parameter_shapes(spec);
    ParameterSet params;
    const RngStream root(seed, "init");
    for (const auto& [name, shape] : shapes) {
        // Biases share the fan-in of their weight.
        const std::string stem = name.substr(0, name.rfind('.'));
        const Shape& w = shapes.at(stem + ".weight");
        std::size_t fan_in = 1;
        for (std::size_t a = 1; a < w.size(); ++a) fan_in *= w[a];
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        RngStream rng = root.derive(name);
        Tensor t(shape);
        for (double& v : t.data()) v = rng.uniform(-bound, bound);
        params.emplace(name, std::move(t));
    }
    return params;
}

// ---------------------------------------------------------------------------
// BoundNetwork

BoundNetwork::BoundNetwork(const Network& net, Tape& tape, bool trainable) : net_(&net), tape_(&tape) {
    for (const auto& [name, value] : net.parameters())
        params_.emplace(name, trainable ? tape.variable(value) : tape.constant(value));
}

Var BoundNetwork::forward(std::span<const Var> inputs) const {
    const NetworkSpec& spec = net_->spec();
    require(inputs.size() == spec.inputs.size(), "network expects ", spec.inputs.size(), " inputs, got ",
            inputs.size());
    Tape& t = *tape_;
    std::vector<Var> vals(spec.nodes.size());
    for (std::size_t k = 0; k < spec.inputs.size(); ++k) vals[spec.inputs[k]] = inputs[k];
    auto param = [&](const std::string& n) { return params_.at(n); };
    for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
        const auto& l = spec.nodes[i];
        auto in = [&](std::size_t j) { return vals[l.inputs[j]]; };
        try {
            switch (l.kind) {
                case LayerKind::input: {
                    const Shape& s = t.value(vals[i]).shape();
                    require(s.size() == l.input_rank && s[1] == l.in, "declared ", l.in, " channels at rank ",
                            l.input_rank, ", got ", to_string(s));
                    break;
                }
                case LayerKind::dense:
                    vals[i] = dense(t, in(0), param(l.name + ".weight"), param(l.name + ".bias"));
                    break;
                case LayerKind::conv3x3:
                    vals[i] = conv2d(t, in(0), param(l.name + ".weight"), param(l.name + ".bias"));
                    break;
                case LayerKind::avgpool2: vals[i] = avgpool2(t, in(0)); break;
                case LayerKind::upsample2: vals[i] = upsample2(t, in(0)); break;
                case LayerKind::relu: vals[i] = relu(t, in(0)); break;
                case LayerKind::leaky_relu: vals[i] = leaky_relu(t, in(0), 0.2); break;
                case LayerKind::concat: {
                    std::vector<Var> parts;
                    for (std::size_t j = 0; j < l.inputs.size(); ++j) parts.push_back(in(j));
                    vals[i] = concat(t, parts);
                    break;
                }
                case LayerKind::attention_gate: {
                    Var qx = conv2d(t, in(0), param(l.name + ".wx.weight"), param(l.name + ".wx.bias"));
                    Var qg = conv2d(t, in(1), param(l.name + ".wg.weight"), param(l.name + ".wg.bias"));
                    Var q = relu(t, add(t, qx, qg));
                    Var a = sigmoid(t, conv2d(t, q, param(l.name + ".psi.weight"), param(l.name + ".psi.bias")));
                    vals[i] = mul_channel_broadcast(t, in(0), a);
                    break;
                }
                case LayerKind::global_avgpool: vals[i] = global_avgpool(t, in(0)); break;
            }
        } catch (const Error& e) {
            fail(node_label(l), ": ", e.what());
        }
    }
    return vals[spec.output];
}

ParameterSet BoundNetwork::gradients() const {
    ParameterSet g;
    for (const auto& [name, v] : params_) g.emplace(name, tape_->grad(v));
    return g;
}

// ---------------------------------------------------------------------------
// Network

struct Network::Session {
    Tape tape;
    std::vector<Var> inputs;
    Var output;
    std::unique_ptr<BoundNetwork> bound;
};

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    params_ = init_parameters(spec_, seed);
}

Network::Network(NetworkSpec spec, ParameterSet params) : spec_(std::move(spec)), params_(std::move(params)) {
    const auto shapes = parameter_shapes(spec_);
    require(shapes.size() == params_.size(), "parameter set has ", params_.size(), " tensors, spec declares ",
            shapes.size());
    for (const auto& [name, shape] : shapes) {
        auto it = params_.find(name);
        require(it != params_.end(), "missing parameter '", name, "'");
        require(it->second.shape() == shape, "parameter '", name, "' has shape ", to_string(it->second.shape()),
                ", expected ", to_string(shape));
    }
}

Network::Network(const Network& other) : spec_(other.spec_), params_(other.params_) {}

Network& Network::operator=(const Network& other) {
    if (this != &other) {
        spec_ = other.spec_;
        params_ = other.params_;
        session_.reset();
    }
    return *this;
}

Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;
Network::~Network() = default;

Tensor Network::forward(std::span<const Tensor> inputs) {
    auto s = std::make_unique<Session>();
    for (const auto& in : inputs) s->inputs.push_back(s->tape.variable(in));
    s->bound = std::make_unique<BoundNetwork>(*this, s->tape);
    s->output = s->bound->forward(s->inputs);
    Tensor out = s->tape.value(s->output);
    out.require_finite("network forward output");
    session_ = std::move(s);
    return out;
}

Gradients Network::backward(const Tensor& output_grad) {
    require(session_ != nullptr, "backward called without a prior forward");
    Session& s = *session_;
    s.tape.backward(s.output, output_grad);
    Gradients g;
    g.parameters = s.bound->gradients();
    for (Var v : s.inputs) g.inputs.push_back(s.tape.grad(v));
    return g;
}

Tensor Network::evaluate(std::span<const Tensor> inputs) const {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& in : inputs) vars.push_back(tape.constant(in));
    BoundNetwork b(*this, tape, false);
    Tensor out = tape.value(b.forward(vars));
    out.require_finite("network output");
    return out;
}

// ---------------------------------------------------------------------------
// Builders

NetworkSpec mlp_spec(std::vector<std::size_t> input_features, std::vector<std::size_t> hidden, std::size_t out) {
    require(!input_features.empty(), "mlp needs at least one input");
    NetworkSpec spec;
    std::vector<std::size_t> ins;
    std::size_t features = 0;
    for (std::size_t k = 0; k < input_features.size(); ++k) {
        ins.push_back(spec.add_input("in" + std::to_string(k), input_features[k], 2));
        features += input_features[k];
    }
    std::size_t h = ins.size() == 1 ? ins[0] : spec.add_layer(LayerKind::concat, "cat", ins);
    for (std::size_t k = 0; k < hidden.size(); ++k) {
        h = spec.add_layer(LayerKind::dense, "fc" + std::to_string(k), {h}, features, hidden[k]);
        h = spec.add_layer(LayerKind::leaky_relu, "act" + std::to_string(k), {h});
        features = hidden[k];
    }
    spec.output = spec.add_layer(LayerKind::dense, "head", {h}, features, out);
    validate(spec);
    return spec;
}

NetworkSpec encoder_decoder_spec(const EncoderDecoderConfig& cfg) {
    require(!cfg.input_channels.empty() && cfg.width > 0 && cfg.out_channels > 0, "invalid encoder-decoder config");
    NetworkSpec spec;
    std::vector<std::size_t> ins;
    std::size_t channels = 0;
    for (std::size_t k = 0; k < cfg.input_channels.size(); ++k) {
        ins.push_back(spec.add_input("in" + std::to_string(k), cfg.input_channels[k], 4));
        channels += cfg.input_channels[k];
    }
    std::size_t h = ins.size() == 1 ? ins[0] : spec.add_layer(LayerKind::concat, "cat", ins);

    auto conv_act = [&](std::size_t from, const std::string& name, std::size_t in, std::size_t out) {
        std::size_t c = spec.add_layer(LayerKind::conv3x3, name, {from}, in, out);
        return spec.add_layer(LayerKind::leaky_relu, name + ".act", {c});
    };

    std::vector<std::size_t> widths{cfg.width};
    for (std::size_t l = 1; l <= cfg.depth; ++l) widths.push_back(widths.back() * 2);

    std::vector<std::size_t> skips;
    h = conv_act(h, "enc0.a", channels, widths[0]);
    h = conv_act(h, "enc0.b", widths[0], widths[0]);
    skips.push_back(h);
    for (std::size_t l = 1; l <= cfg.depth; ++l) {
        h = spec.add_layer(LayerKind::avgpool2, "down" + std::to_string(l), {h});
        h = conv_act(h, "enc" + std::to_string(l), widths[l - 1], widths[l]);
        skips.push_back(h);
    }
    for (std::size_t l = cfg.depth; l-- > 0;) {
        const std::string tag = std::to_string(l);
        std::size_t up = spec.add_layer(LayerKind::upsample2, "up" + tag, {h});
        std::size_t skip = skips[l];
        if (cfg.attention) {
            LayerSpec gate;
            gate.kind = LayerKind::attention_gate;
            gate.name = "gate" + tag;
            gate.inputs = {skip, up};
            gate.in = widths[l];
            gate.gate_channels = widths[l + 1];
            gate.out = std::max<std::size_t>(1, widths[l] / 2);
            skip = spec.add(std::move(gate));
        }
        std::size_t cat = spec.add_layer(LayerKind::concat, "join" + tag, {up, skip});
        h = conv_act(cat, "dec" + tag, widths[l + 1] + widths[l], widths[l]);
    }
    spec.output = spec.add_layer(LayerKind::conv3x3, "head", {h}, widths[0], cfg.out_channels);
    validate(spec);
    return spec;
}

NetworkSpec critic_spec(const CriticConfig& cfg) {
    require(cfg.in_channels > 0 && cfg.width > 0, "invalid critic config");
    NetworkSpec spec;
    std::size_t h = spec.add_input("in", cfg.in_channels, 4);
    std::size_t channels = cfg.in_channels;
    std::size_t width = cfg.width;
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        const std::string tag = std::to_string(l);
        h = spec.add_layer(LayerKind::conv3x3, "conv" + tag, {h}, channels, width);
        h = spec.add_layer(LayerKind::leaky_relu, "act" + tag, {h});
        h = spec.add_layer(LayerKind::avgpool2, "pool" + tag, {h});
        channels = width;
        width *= 2;
    }
    h = spec.add_layer(LayerKind::conv3x3, "conv_out", {h}, channels, channels);
    h = spec.add_layer(LayerKind::leaky_relu, "act_out", {h});
    h = spec.add_layer(LayerKind::global_avgpool, "gap", {h});
    spec.output = spec.add_layer(LayerKind::dense, "head", {h}, channels, 1);
    validate(spec);
    return spec;
}

}  // namespace wmgm::nn

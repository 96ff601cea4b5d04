#include "resobj/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "resobj/errors.hpp"
#include "resobj/synthetic.hpp"

namespace resobj {

AnchorLayout default_anchor_layout(std::size_t grid_h, std::size_t grid_w) {
    return AnchorLayout{grid_h, grid_w, {{3.0, 1.0}, {4.5, 1.0}, {6.0, 1.0}}};
}

void validate(const ModelConfig& c) {
    if (c.num_classes < 1) throw ContractViolation("model config: num_classes must be >= 1");
    if (!(c.init_prior > 0.0 && c.init_prior < 1.0)) {
        throw ContractViolation("model config: init_prior must lie in (0, 1)");
    }
    if (!(c.init_std >= 0.0)) throw ContractViolation("model config: init_std must be >= 0");
    if (c.layout.grid_h == 0 || c.layout.grid_w == 0 || c.layout.templates.empty()) {
        throw ContractViolation("model config: empty anchor layout");
    }
    if (c.input_channels == 0 || c.trunk_channels == 0) {
        throw ContractViolation("model config: channel counts must be >= 1");
    }
    if (!c.objectness && c.residual_steps > 0) {
        throw ContractViolation("model config: residual steps require the objectness subnet");
    }
}

std::size_t ModelParameters::index(std::string_view name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ContractViolation("no parameter named " + std::string(name));
    return static_cast<std::size_t>(it - names.begin());
}

std::vector<std::size_t> subnet_parameters(const ModelParameters& params, std::string_view subnet) {
    const std::string prefix = std::string(subnet) + ".";
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params.names[i].starts_with(prefix)) ids.push_back(i);
    }
    return ids;
}

ModelParameters without_residual_subnets(const ModelParameters& params) {
    ModelParameters out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& n = params.names[i];
        const bool residual = n.starts_with("res") && n.size() > 3 && std::isdigit(static_cast<unsigned char>(n[3]));
        if (residual) continue;
        out.names.push_back(n);
        out.tensors.push_back(params.tensors[i]);
    }
    return out;
}

namespace {

std::string residual_name(std::size_t t) { return "res" + std::to_string(t); }

// `depth` 3x3 conv layers, then a 1x1 projection when out_channels > 0.
void add_subnet(ModelParameters& p, const std::string& name, std::size_t in_channels,
                std::size_t channels, std::size_t depth, std::size_t out_channels) {
    std::size_t cin = in_channels;
    for (std::size_t l = 0; l < depth; ++l) {
        p.names.push_back(name + "." + std::to_string(l) + ".weight");
        p.tensors.emplace_back(Shape{channels, 3, 3, cin});
        p.names.push_back(name + "." + std::to_string(l) + ".bias");
        p.tensors.emplace_back(Shape{channels});
        cin = channels;
    }
    if (out_channels > 0) {
        p.names.push_back(name + ".out.weight");
        p.tensors.emplace_back(Shape{cin, out_channels});
        p.names.push_back(name + ".out.bias");
        p.tensors.emplace_back(Shape{out_channels});
    }
}

double logit(double p) { return -std::log((1.0 - p) / p); }

}  // namespace

ModelParameters init_model(const ModelConfig& config) {
    validate(config);
    const std::size_t a = config.layout.per_cell();
    const std::size_t k = static_cast<std::size_t>(config.num_classes);
    const std::size_t ch = config.trunk_channels;
    ModelParameters p;
    add_subnet(p, "trunk", config.input_channels, ch, 2, 0);
    add_subnet(p, "class", ch, ch, config.head_depth, a * k);
    add_subnet(p, "box", ch, ch, config.head_depth, a * 4);
    if (config.objectness) add_subnet(p, "obj", ch, ch, config.head_depth, a);
    for (std::size_t t = 1; t <= config.residual_steps; ++t) {
        add_subnet(p, residual_name(t), ch, ch, config.head_depth, a);
    }

    CounterRng rng(config.seed, 0x5eed);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!p.names[i].ends_with(".weight")) continue;
        Tensor& w = p.tensors[i];
        double std = config.init_std;
        if (config.fan_in_init && !p.names[i].ends_with(".out.weight")) {
            const std::size_t fan_in = w.shape[1] * w.shape[2] * w.shape[3];
            std = std::sqrt(2.0 / static_cast<double>(fan_in));
        }
        for (double& v : w.data) v = std * rng.normal();
    }

    p.at("class.out.bias").data.assign(a * k, logit(config.init_prior));
    if (config.objectness) {
        // ~1/K; a single class has no background share, so fall back to 1/2.
        const double obj_prior = config.num_classes >= 2 ? 1.0 / config.num_classes : 0.5;
        p.at("obj.out.bias").data.assign(a, logit(obj_prior));
    }
    for (std::size_t t = 1; t <= config.residual_steps; ++t) {
        auto& w = p.at(residual_name(t) + ".out.weight").data;
        std::fill(w.begin(), w.end(), 0.0);
    }
    return p;
}

std::vector<Var> bind_parameters(Tape& tape, const ModelParameters& params) {
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.parameter(i, params.tensors[i]));
    return vars;
}

namespace {

struct SubnetRunner {
    const ModelParameters& params;
    std::span<const Var> bound;

    Var var(const std::string& name) const { return bound[params.index(name)]; }

    Var conv_stack(Var x, const std::string& name, std::size_t depth) const {
        for (std::size_t l = 0; l < depth; ++l) {
            const std::string prefix = name + "." + std::to_string(l);
            Var y = conv2d(x, var(prefix + ".weight"));
            x = relu(add(y, broadcast(var(prefix + ".bias"), y.shape())));
        }
        return x;
    }

    Var project(Var x, const std::string& name) const {
        const std::size_t h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
        Var weight = var(name + ".out.weight");
        const std::size_t out = weight.shape()[1];
        Var flat = matmul(reshape(x, {h * w, c}), weight);
        flat = add(flat, broadcast(var(name + ".out.bias"), flat.shape()));
        return reshape(flat, {h, w, out});
    }
};

}  // namespace

HeadOutputs forward(const ModelConfig& config, const ModelParameters& params,
                    std::span<const Var> bound, const Tensor& scene_input) {
    const std::size_t h = config.layout.grid_h, w = config.layout.grid_w, c = config.input_channels;
    if (scene_input.shape != Shape{c, h, w}) {
        throw ContractViolation("forward: scene shape " + shape_string(scene_input.shape) +
                                " does not match model input " + shape_string(Shape{c, h, w}));
    }
    if (bound.size() != params.size()) {
        throw ContractViolation("forward: bound parameter count does not match the model");
    }
    if (bound.empty()) throw ContractViolation("forward: no parameters bound");

    // [C,H,W] -> [H,W,C]
    Tensor hwc(Shape{h, w, c});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) hwc[(y * w + x) * c + ch] = scene_input[(ch * h + y) * w + x];

    Tape& tape = bound.front().tape();
    const SubnetRunner run{params, bound};
    const std::size_t depth = config.head_depth;

    Var features = run.conv_stack(tape.constant(std::move(hwc)), "trunk", 2);
    Var class_features = run.conv_stack(features, "class", depth);

    HeadOutputs out;
    out.class_logits = run.project(class_features, "class");
    out.box_deltas = run.project(run.conv_stack(features, "box", depth), "box");
    if (!config.objectness) return out;

    Var obj_features = run.conv_stack(class_features, "obj", depth);
    out.obj_logits = run.project(obj_features, "obj");

    Var source = config.residual_source == ResidualSource::objectness_head ? obj_features : class_features;
    if (config.gradient_flow == GradientFlow::isolated && config.residual_steps > 0) {
        source = stop_gradient(source);
    }
    for (std::size_t t = 1; t <= config.residual_steps; ++t) {
        const std::string name = residual_name(t);
        out.residual_logits.push_back(run.project(run.conv_stack(source, name, depth), name));
    }
    return out;
}

Refinement refine_objectness_train(Var obj_logits, std::span<const Var> residual_logits,
                                   const std::vector<bool>& positive_mask, bool detach_previous) {
    const std::size_t n = obj_logits.value().numel();
    if (positive_mask.size() != n) {
        throw ContractViolation("refine_objectness_train: positive mask size does not match the logits");
    }
    for (const Var& r : residual_logits) {
        if (r.shape() != obj_logits.shape()) {
            throw ContractViolation("refine_objectness_train: residual shape " + shape_string(r.shape()) +
                                    " does not match objectness shape " + shape_string(obj_logits.shape()));
        }
    }
    Refinement result;
    result.logits.push_back(obj_logits);
    result.degenerate = std::none_of(positive_mask.begin(), positive_mask.end(), [](bool b) { return b; });
    Tape& tape = obj_logits.tape();

    for (const Var& r : residual_logits) {
        const Var prev = result.logits.back();
        std::vector<bool> mask(n, false);
        if (result.degenerate) {
            result.masks.push_back(std::move(mask));
            result.logits.push_back(prev);
            continue;
        }
        // sigma is monotone, so comparing logits selects the same anchors as
        // comparing scores without saturation ties.
        const Tensor& values = prev.value();
        double min_positive = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (positive_mask[i]) min_positive = std::min(min_positive, values[i]);
        }
        Tensor gate(values.shape);
        for (std::size_t i = 0; i < n; ++i) {
            mask[i] = values[i] >= min_positive;
            gate[i] = mask[i] ? 1.0 : 0.0;
        }
        const Var base = detach_previous ? stop_gradient(prev) : prev;
        result.logits.push_back(add(base, multiply(r, tape.constant(std::move(gate)))));
        result.masks.push_back(std::move(mask));
    }
    return result;
}

Tensor refine_objectness_infer(const Tensor& obj_logits, std::span<const Tensor> residual_logits) {
    Tensor out = obj_logits;
    for (const Tensor& r : residual_logits) {
        if (r.shape != obj_logits.shape) {
            throw ContractViolation("refine_objectness_infer: residual shape mismatch");
        }
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += r[i];
    }
    return out;
}

}  // namespace resobj

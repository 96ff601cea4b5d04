#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "resobj/anchors.hpp"
#include "resobj/autograd.hpp"

namespace resobj {

/// Which head's penultimate features feed the residual subnets.
enum class ResidualSource { objectness_head, class_head };

/// isolated: residual subnets see their input through stop_gradient and each
/// step adds r_t to a detached o_{t-1}; coupled: gradients flow everywhere.
enum class GradientFlow { isolated, coupled };

AnchorLayout default_anchor_layout(std::size_t grid_h = 32, std::size_t grid_w = 32);

struct ModelConfig {
    int num_classes = 3;
    AnchorLayout layout = default_anchor_layout();
    std::size_t input_channels = 3;
    std::size_t residual_steps = 0;
    std::size_t trunk_channels = 16;
    std::size_t head_depth = 2;
    double init_prior = 0.01;
    double init_std = 0.01;
    /// Hidden 3x3 convs use std sqrt(2 / fan_in) instead of init_std; output
    /// projections always use init_std.
    bool fan_in_init = true;
    /// false for the CE / focal baselines, which have no objectness subnet.
    bool objectness = true;
    ResidualSource residual_source = ResidualSource::objectness_head;
    GradientFlow gradient_flow = GradientFlow::isolated;
    std::uint64_t seed = 0;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void validate(const ModelConfig& config);

/// Named trainable tensors in a fixed creation order; ParamId is the position.
struct ModelParameters {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    std::size_t size() const { return tensors.size(); }
    std::size_t index(std::string_view name) const;
    const Tensor& at(std::string_view name) const { return tensors[index(name)]; }
    Tensor& at(std::string_view name) { return tensors[index(name)]; }

    friend bool operator==(const ModelParameters&, const ModelParameters&) = default;
};

/// Parameter tensors of the named subnet ("trunk", "class", "box", "obj", "res1", ...).
std::vector<std::size_t> subnet_parameters(const ModelParameters& params, std::string_view subnet);

/// The same parameters with every residual subnet removed (the T = 0 twin).
ModelParameters without_residual_subnets(const ModelParameters& params);

/// Gaussian weights (see fan_in_init), biased class and objectness outputs so the
/// initial scores are ~init_prior and ~1/K, zero residual output layers.
ModelParameters init_model(const ModelConfig& config);

std::vector<Var> bind_parameters(Tape& tape, const ModelParameters& params);

struct HeadOutputs {
    Var class_logits;  // [H, W, A*K]
    Var box_deltas;    // [H, W, A*4]
    Var obj_logits;    // [H, W, A]; invalid when the model has no objectness subnet
    std::vector<Var> residual_logits;  // r_1..r_T, each [H, W, A]
};

/// scene_input is [C, H, W]; H and W must match the anchor grid.
HeadOutputs forward(const ModelConfig& config, const ModelParameters& params,
                    std::span<const Var> bound, const Tensor& scene_input);

struct Refinement {
    std::vector<Var> logits;               // o_0 .. o_T
    std::vector<std::vector<bool>> masks;  // mask_1 .. mask_T
    bool degenerate = false;               // no positive anchors
};

/// Training-time cascade: at step t the anchors whose o_{t-1} is at least the
/// smallest positive o_{t-1} receive r_t; the rest keep o_{t-1}. With
/// detach_previous, o_{t-1} enters the sum through stop_gradient.
Refinement refine_objectness_train(Var obj_logits, std::span<const Var> residual_logits,
                                   const std::vector<bool>& positive_mask, bool detach_previous);

/// Inference-time objectness: o_0 + sum_t r_t on every anchor.
Tensor refine_objectness_infer(const Tensor& obj_logits, std::span<const Tensor> residual_logits);

}  // namespace resobj

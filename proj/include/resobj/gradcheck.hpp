#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace resobj {

enum class GradCheckLoss { ce, focal, obj, resobj, box };

const char* to_string(GradCheckLoss loss);
GradCheckLoss gradcheck_loss_from_string(const std::string& s);

struct GradCheckSummary {
    GradCheckLoss loss = GradCheckLoss::ce;
    std::size_t instances = 0;
    std::size_t elements_checked = 0;
    double max_relative_error = 0.0;
};

/// Central-difference check of a loss against backward() on random small
/// instances: 4x3 anchor grid, two templates, K = 3, labels from real anchor
/// assignment, head tensors as the free parameters. ResObj uses T = 2 and is
/// checked in both gradient-flow modes; in isolated mode only the tensors whose
/// analytic gradient is the full derivative (class, box, r_T) are compared.
GradCheckSummary run_loss_gradcheck(GradCheckLoss loss, std::size_t instances = 20, std::uint64_t seed = 1,
                                    double epsilon = 1e-5);

}  // namespace resobj

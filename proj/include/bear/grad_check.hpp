#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "bear/autodiff.hpp"

namespace bear::ad {

struct GradCheckOptions {
    double step = 1e-4;
    /// Coordinates to probe, spread evenly over parameter tensors. Every tensor
    /// gets at least one; small tensors are probed exhaustively.
    std::size_t samples = 200;
    std::uint64_t seed = 0;
    TapeOptions tape_options;
};

struct GradCheckReport {
    /// max |analytic - numeric| / max(1, |analytic|)
    double max_relative_error = 0.0;
    /// max |analytic - numeric| / max(|analytic|, |numeric|, 1e-6); sensitive
    /// to errors in small gradients that the measure above forgives.
    double max_scaled_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    std::size_t coordinates = 0;
};

using LossFn = std::function<Var<double>(Tape<double>&, const ParameterSet<double>&)>;

/// Compares tape gradients of `loss` against central differences. `params`
/// values are restored on return; their gradient slots are overwritten.
GradCheckReport grad_check(const LossFn& loss, ParameterSet<double>& params, const GradCheckOptions& options = {});

}  // namespace bear::ad

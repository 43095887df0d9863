#include "bear/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "bear/rng.hpp"

namespace bear::ad {

namespace {

double evaluate(const LossFn& loss, const ParameterSet<double>& params) {
    Tape<double> tape;
    return loss(tape, params).value().item();
}

}  // namespace

GradCheckReport grad_check(const LossFn& loss, ParameterSet<double>& params, const GradCheckOptions& options) {
    params.zero_grad();
    {
        Tape<double> tape(options.tape_options);
        backward(loss(tape, params), params);
    }

    GradCheckReport report;
    if (params.empty()) {
        return report;
    }
    Rng rng(options.seed);
    const std::size_t per_tensor = std::max<std::size_t>(1, (options.samples + params.size() - 1) / params.size());
    const double h = options.step;

    for (auto& entry : params) {
        std::vector<std::size_t> coords(entry.value.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > per_tensor) {
            rng.shuffle(std::span(coords));
            coords.resize(per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t idx : coords) {
            double& slot = entry.value[idx];
            const double saved = slot;
            slot = saved + h;
            const double up = evaluate(loss, params);
            slot = saved - h;
            const double down = evaluate(loss, params);
            slot = saved;

            const double numeric = (up - down) / (2.0 * h);
            const double analytic = entry.grad[idx];
            const double diff = std::abs(analytic - numeric);
            const double rel = diff / std::max(1.0, std::abs(analytic));
            const double scaled = diff / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            ++report.coordinates;
            if (rel > report.max_relative_error || report.coordinates == 1) {
                report.max_relative_error = std::max(report.max_relative_error, rel);
                report.worst_parameter = entry.name;
                report.worst_index = idx;
            }
            report.max_scaled_error = std::max(report.max_scaled_error, scaled);
        }
    }
    return report;
}

}  // namespace bear::ad

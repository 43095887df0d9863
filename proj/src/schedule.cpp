#include "bear/schedule.hpp"

#include <cmath>
#include <string>

#include "bear/errors.hpp"

namespace bear::train {

void ScheduleConfig::validate() const {
    if (plateau_patience == 0) {
        throw ConfigError("plateau_patience must be positive");
    }
    if (stop_patience < plateau_patience) {
        throw ConfigError("stop_patience (" + std::to_string(stop_patience) + ") must be at least plateau_patience (" +
                          std::to_string(plateau_patience) + ")");
    }
    if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
        throw ConfigError("decay_factor must lie in (0, 1)");
    }
    if (!(min_improvement >= 0.0)) {
        throw ConfigError("min_improvement must be non-negative");
    }
}

ValidationMonitor::ValidationMonitor(ScheduleConfig cfg, std::optional<double> baseline)
    : cfg_(cfg), best_(baseline) {
    cfg_.validate();
}

ValidationMonitor::Outcome ValidationMonitor::observe(double val_loss) {
    Outcome out;
    if (!best_) {
        best_ = val_loss;
        ++since_best_;
        ++plateau_;
    } else if (val_loss < *best_ - cfg_.min_improvement) {
        best_ = val_loss;
        since_best_ = 0;
        plateau_ = 0;
        out.improved = true;
    } else {
        ++since_best_;
        ++plateau_;
    }
    if (plateau_ >= cfg_.plateau_patience) {
        out.decay = true;
        plateau_ = 0;
    }
    out.stop = since_best_ >= cfg_.stop_patience;
    return out;
}

double plateau_decay(std::span<const double> history, double lr, const ScheduleConfig& cfg) {
    if (history.empty()) {
        throw ConfigError("plateau_decay needs a non-empty history");
    }
    ValidationMonitor monitor(cfg);
    for (double v : history) {
        if (monitor.observe(v).decay) {
            lr *= cfg.decay_factor;
        }
    }
    return lr;
}

bool early_stop(std::span<const double> history, const ScheduleConfig& cfg) {
    ValidationMonitor monitor(cfg);
    bool stop = false;
    for (double v : history) {
        stop = monitor.observe(v).stop;
    }
    return stop;
}

}  // namespace bear::train

#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>

namespace bear::train {

struct ScheduleConfig {
    std::size_t plateau_patience = 5;
    double decay_factor = 0.5;
    std::size_t stop_patience = 10;
    /// A validation loss counts as an improvement only if it beats the best by more than this.
    double min_improvement = 1e-6;

    void validate() const;
};

/// Tracks validation losses for plateau decay and early stopping.
///
/// Without a baseline, the first observation sets the best loss but counts as
/// a non-improving epoch, so a flat trace of length P triggers a decay with
/// patience P. fit() supplies the untrained model's validation loss as the
/// baseline instead.
class ValidationMonitor {
public:
    explicit ValidationMonitor(ScheduleConfig cfg, std::optional<double> baseline = std::nullopt);

    struct Outcome {
        bool improved = false;
        bool decay = false;  // multiply lr by decay_factor now
        bool stop = false;
    };

    Outcome observe(double val_loss);

    double best() const noexcept { return best_.value_or(std::numeric_limits<double>::infinity()); }
    std::size_t epochs_since_improvement() const noexcept { return since_best_; }
    std::size_t plateau_counter() const noexcept { return plateau_; }
    const ScheduleConfig& config() const noexcept { return cfg_; }

private:
    ScheduleConfig cfg_;
    std::optional<double> best_;
    std::size_t since_best_ = 0;
    std::size_t plateau_ = 0;
};

/// Replays `history` through a fresh monitor and returns the learning rate
/// in effect after the last epoch.
double plateau_decay(std::span<const double> history, double lr, const ScheduleConfig& cfg);

/// True iff replaying `history` ends with the best loss unimproved for
/// stop_patience consecutive epochs.
bool early_stop(std::span<const double> history, const ScheduleConfig& cfg);

}  // namespace bear::train

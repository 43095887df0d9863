#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bear/checkpoint.hpp"
#include "bear/schedule.hpp"

namespace bear::train {

enum class LossKind { bce, mse };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view text);

struct TrainConfig {
    LossKind loss = LossKind::bce;
    double lr0 = 1e-4;
    std::size_t plateau_patience = 5;
    double decay_factor = 0.5;
    std::size_t stop_patience = 10;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 100;
    double val_fraction = 0.1;
    double lambda = 1e-4;  // L2 on ConvLSTM recurrent kernels
    std::uint64_t seed = 1;
    /// Worker threads for per-sample gradients. Results do not depend on it.
    std::size_t threads = 1;

    void validate() const;
    ScheduleConfig schedule() const;

    void write(io::KeyValues& kv) const;
    static TrainConfig read(io::KeyValues& kv, TrainConfig base);
    static TrainConfig read(io::KeyValues& kv) { return read(kv, TrainConfig{}); }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // reconstruction loss only, mean over training images
    double val_loss = 0.0;
    double lr = 0.0;          // rate used during this epoch
    double seconds = 0.0;
};

struct FitResult {
    /// Parameters with the best validation loss (the initial ones if no epoch improved).
    Checkpoint checkpoint;
    std::vector<EpochRecord> log;
    double initial_train_loss = 0.0;
    double initial_val_loss = 0.0;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

/// Seeded shuffle, then the first max(1, round(count * val_fraction)) indices
/// become validation. Needs count >= 2.
Split split_dataset(std::size_t count, double val_fraction, std::uint64_t seed);

/// Reconstruction loss of one image, without gradients.
template <class T>
double reconstruction_loss(const ParameterSet<T>& params, const model::BearConfig& cfg, LossKind kind,
                           const Tensor<T>& image);

/// Mean reconstruction loss over `indices`, summed in index order.
double mean_loss(const ParameterSet<float>& params, const model::BearConfig& cfg, LossKind kind,
                 const std::vector<Tensor<float>>& images, const std::vector<std::size_t>& indices,
                 std::size_t threads = 1);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on loss + L2 penalty with plateau decay and early stopping
/// on validation loss. Images must be n x n x d with values in [0, 1].
FitResult fit(const std::vector<Tensor<float>>& images, const TrainConfig& cfg, const model::BearConfig& bcfg,
              const EpochCallback& on_epoch = {});

/// Header `epoch,train_loss,val_loss,lr,seconds`, one row per record.
std::string epoch_log_csv(const std::vector<EpochRecord>& log);

}  // namespace bear::train

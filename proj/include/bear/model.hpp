#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bear/kv_config.hpp"
#include "bear/nn.hpp"

namespace bear::model {

using ad::Var;

/// Architecture hyperparameters. Defaults are the full-size configuration:
/// 128 x 128 x 3 inputs, 256-dimensional latent, residual downsampling by 4.
struct BearConfig {
    std::size_t n = 128;           // input extent (square)
    std::size_t d = 3;             // input depth
    std::size_t r = 4;             // residual downsample factor
    std::size_t m = 256;           // latent dimension
    std::size_t f_pfe = 16;        // PFE ConvLSTM filters (RFE preserves this width)
    std::size_t f_bfe = 8;         // BFE ConvLSTM filters
    std::size_t f_dec = 32;        // decoder channel width
    std::size_t pf_branches = 3;   // PF parallel branches, kernel sizes 1, 3, 5, ...
    std::size_t lstm_kernel = 3;   // ConvLSTM kernel extent
    std::size_t rfe_kernel = 3;    // RFE mixing convolution extent
    std::uint64_t seed = 1;

    /// 32 x 32 x 3 inputs, 32-dimensional latent, narrow stages.
    static BearConfig desk();

    void validate() const;

    std::size_t latent_extent() const { return n / 4; }    // PFE/RFE spatial extent
    std::size_t bottleneck_extent() const { return n / 8; }  // after the BFE pool

    /// Writes architecture keys (and seed) in a fixed order.
    void write(io::KeyValues& kv) const;
    /// Reads known keys, leaving others for the caller to consume or reject.
    static BearConfig read(io::KeyValues& kv, BearConfig base);
    static BearConfig read(io::KeyValues& kv) { return read(kv, BearConfig{}); }

    /// Architecture keys only (no seed) as canonical key=value lines.
    std::string architecture_text() const;
    /// FNV-1a of architecture_text(); two configs with equal hashes accept the
    /// same parameter tensors.
    std::uint64_t hash() const;

    bool operator==(const BearConfig&) const = default;
};

/// (name, shape) of every parameter in creation order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const BearConfig& cfg);

/// Seeded Glorot-uniform weights, zero biases, +1 forget-gate bias.
template <class T>
ParameterSet<T> init_parameters(const BearConfig& cfg);

/// Throws ConfigError naming the first parameter that is missing, extra or
/// misshapen relative to `cfg`.
template <class T>
void check_parameters(const ParameterSet<T>& params, const BearConfig& cfg);

/// Input image average-downsampled by cfg.r; depth unchanged.
template <class T>
Tensor<T> residual_input(const Tensor<T>& x, const BearConfig& cfg);

/// The encoder/decoder graph bound to one tape and one parameter set.
template <class T>
class Bear {
public:
    Bear(ad::Tape<T>& tape, const ParameterSet<T>& params, BearConfig cfg);

    const BearConfig& config() const noexcept { return cfg_; }
    ad::Tape<T>& tape() noexcept { return tape_; }

    /// n x n x d -> n/4 x n/4 x f_pfe: two ConvLSTM-over-channels blocks, each
    /// followed by a 2 x 2 average pool.
    Var<T> pfe(Var<T> x);
    /// concat(z, x~) -> conv back to z's width -> tanh; shape preserving.
    Var<T> rfe(Var<T> z, Var<T> x_tilde, const std::string& stage);
    /// concat(z, x~) -> ConvLSTM over the maps -> pool 2 -> flatten -> dense m -> tanh.
    Var<T> bfe(Var<T> z, Var<T> x_tilde);
    /// dense m -> (n/4)^2 f_dec -> reshape -> tanh.
    Var<T> dd(Var<T> z);
    /// parallel conv (1, 3, 5; mean) -> tanh -> nearest upsample x2.
    Var<T> pd(Var<T> z, const std::string& stage);
    /// sigmoid(mean of pf_branches convolutions emitting d channels).
    Var<T> pf_reconstruct(Var<T> z);

    Var<T> encode(Var<T> x);
    Var<T> decode(Var<T> z);
    Var<T> forward(Var<T> x);

private:
    void check_input(const Tensor<T>& x) const;

    ad::Tape<T>& tape_;
    const ParameterSet<T>& params_;
    BearConfig cfg_;
};

// Inference without gradients.
template <class T>
Tensor<T> encode(const ParameterSet<T>& params, const BearConfig& cfg, const Tensor<T>& x);
template <class T>
Tensor<T> reconstruct(const ParameterSet<T>& params, const BearConfig& cfg, const Tensor<T>& x);

struct ParamCount {
    std::vector<std::pair<std::string, std::size_t>> per_tensor;
    std::vector<std::pair<std::string, std::size_t>> per_block;  // "<stage>/<block>"
    std::vector<std::pair<std::string, std::size_t>> per_stage;  // "<stage>"
    std::size_t total = 0;
};

template <class T>
ParamCount param_count(const ParameterSet<T>& params);

}  // namespace bear::model

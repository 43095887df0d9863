#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bear/model.hpp"

namespace bear::train {

/// Trained parameters plus the architecture that produced them.
struct Checkpoint {
    model::BearConfig config;
    ParameterSet<float> params;
    /// Flat training metadata (epochs, best epoch, best validation loss, ...).
    std::vector<std::pair<std::string, std::string>> metadata;

    const std::string* find_metadata(std::string_view key) const;
};

// BC1 layout: "BEARC1", u32-LE header length, UTF-8 header of key=value lines
// (architecture, config_hash, metadata), then per parameter in order:
// u32-LE name length, name bytes, BT1 tensor block.
inline constexpr std::string_view bc1_magic{"BEARC1"};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Atomic: writes a temporary then renames.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Also rejects a checkpoint whose architecture differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const model::BearConfig& expected);

}  // namespace bear::train

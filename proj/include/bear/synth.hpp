#pragma once

#include <cstdint>
#include <vector>

#include "bear/image.hpp"

namespace bear::synth {

/// Seeded toy scenes in a saturated palette: a two-colour linear gradient background with one to
/// three flat-coloured rectangles or discs. Same seed, same bytes.
std::vector<io::RgbImage> scenes(std::size_t count, std::size_t size, std::uint64_t seed);

/// scenes() converted to n x n x 3 tensors in [0, 1].
std::vector<Tensor<float>> scene_tensors(std::size_t count, std::size_t size, std::uint64_t seed);

}  // namespace bear::synth

#include "bear/synth.hpp"

#include <array>
#include <cmath>

#include "bear/rng.hpp"

namespace bear::synth {

namespace {

using Color = std::array<double, 3>;

// Saturated palette: each channel near 0 or near 1.
double channel(Rng& rng) { return rng.below(2) == 0 ? rng.uniform(0.0, 0.2) : rng.uniform(0.8, 1.0); }

Color random_color(Rng& rng) { return {channel(rng), channel(rng), channel(rng)}; }

io::RgbImage scene(std::size_t size, Rng& rng) {
    const Color a = random_color(rng), b = random_color(rng);
    const bool vertical = rng.below(2) == 0;
    std::vector<double> px(size * size * 3);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double t = static_cast<double>(vertical ? y : x) / static_cast<double>(size - 1 > 0 ? size - 1 : 1);
            for (std::size_t c = 0; c < 3; ++c) {
                px[(y * size + x) * 3 + c] = (1.0 - t) * a[c] + t * b[c];
            }
        }
    }
    const std::size_t shapes = 1 + static_cast<std::size_t>(rng.below(3));
    for (std::size_t s = 0; s < shapes; ++s) {
        const Color col = random_color(rng);
        const double cx = rng.uniform(0.15, 0.85) * static_cast<double>(size);
        const double cy = rng.uniform(0.15, 0.85) * static_cast<double>(size);
        const double rx = rng.uniform(0.1, 0.3) * static_cast<double>(size);
        const double ry = rng.uniform(0.1, 0.3) * static_cast<double>(size);
        const bool disc = rng.below(2) == 0;
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
                const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
                const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                if (inside) {
                    for (std::size_t c = 0; c < 3; ++c) {
                        px[(y * size + x) * 3 + c] = col[c];
                    }
                }
            }
        }
    }
    io::RgbImage img;
    img.width = size;
    img.height = size;
    img.pixels.resize(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        img.pixels[i] = static_cast<std::uint8_t>(std::floor(px[i] * 255.0 + 0.5));
    }
    return img;
}

}  // namespace

std::vector<io::RgbImage> scenes(std::size_t count, std::size_t size, std::uint64_t seed) {
    std::vector<io::RgbImage> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, i));
        out.push_back(scene(size, rng));
    }
    return out;
}

std::vector<Tensor<float>> scene_tensors(std::size_t count, std::size_t size, std::uint64_t seed) {
    std::vector<Tensor<float>> out;
    out.reserve(count);
    for (const auto& img : scenes(count, size, seed)) {
        out.push_back(io::to_unit_tensor(img, size));
    }
    return out;
}

}  // namespace bear::synth

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bear/tensor.hpp"

namespace bear::io {

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    bool operator==(const RgbImage&) const = default;
};

/// Binary PPM: "P6", whitespace-separated ASCII width, height and maxval 255
/// ('#' comments allowed between tokens), one whitespace byte, raw RGB.
/// Errors are FormatError with the byte offset.
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

/// Resizes each axis independently to `n`: area averaging when shrinking,
/// nearest neighbour when enlarging. Values scaled to [0, 1]. Output n x n x 3.
Tensor<float> to_unit_tensor(const RgbImage& image, std::size_t n);

/// (0, 1) values -> 0..255 with round-half-up, clamped. Input H x W x 3.
RgbImage from_unit_tensor(const Tensor<float>& t);

struct LoadedImages {
    std::vector<std::string> ids;  // file stems
    std::vector<Tensor<float>> images;
    std::vector<std::string> skipped;  // "<file>: <reason>"
};

/// Every *.ppm file in `dir` in lexicographic filename order, resized to n.
/// Unreadable files are skipped and reported.
LoadedImages load_image_dir(const std::filesystem::path& dir, std::size_t n);

}  // namespace bear::io

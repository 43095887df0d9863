#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bear/tensor.hpp"

namespace bear::io {

// BT1 layout: "BEAR" "T" "1", u32-LE rank, rank x u32-LE extents, row-major
// little-endian IEEE-754 binary32 elements.
inline constexpr std::string_view bt1_magic{"BEART1"};

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void append_f32(std::vector<std::uint8_t>& out, float v);

/// Bounds-checked little-endian reader over a byte buffer. Errors carry the
/// absolute offset (base + position) so nested formats report file offsets.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes, std::size_t base_offset = 0)
        : bytes_(bytes), base_(base_offset) {}

    std::uint32_t u32(const char* what);
    float f32(const char* what);
    std::span<const std::uint8_t> take(std::size_t n, const char* what);
    std::size_t position() const noexcept { return pos_; }
    std::size_t offset() const noexcept { return base_ + pos_; }
    bool at_end() const noexcept { return pos_ == bytes_.size(); }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t base_;
    std::size_t pos_ = 0;
};

void encode_bt1(const Tensor<float>& t, std::vector<std::uint8_t>& out);
Tensor<float> decode_bt1(ByteReader& reader);

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> load_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace bear::io

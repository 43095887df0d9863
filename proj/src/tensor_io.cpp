#include "bear/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bear::io {

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
    }
}

void append_f32(std::vector<std::uint8_t>& out, float v) { append_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::span<const std::uint8_t> ByteReader::take(std::size_t n, const char* what) {
    if (n > remaining()) {
        throw FormatError(std::string("truncated input while reading ") + what, offset());
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
}

std::uint32_t ByteReader::u32(const char* what) {
    const auto b = take(4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float ByteReader::f32(const char* what) { return std::bit_cast<float>(u32(what)); }

void encode_bt1(const Tensor<float>& t, std::vector<std::uint8_t>& out) {
    out.insert(out.end(), bt1_magic.begin(), bt1_magic.end());
    append_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t extent : t.shape()) {
        append_u32(out, static_cast<std::uint32_t>(extent));
    }
    out.reserve(out.size() + 4 * t.size());
    for (float v : t.data()) {
        append_f32(out, v);
    }
}

Tensor<float> decode_bt1(ByteReader& reader) {
    const std::size_t start = reader.offset();
    const auto magic = reader.take(bt1_magic.size(), "BT1 magic");
    for (std::size_t i = 0; i < magic.size(); ++i) {
        if (magic[i] != static_cast<std::uint8_t>(bt1_magic[i])) {
            throw FormatError("bad BT1 magic", start + i);
        }
    }
    const std::size_t rank_offset = reader.offset();
    const std::uint32_t rank = reader.u32("BT1 rank");
    if (rank > 8) {
        throw FormatError("BT1 rank " + std::to_string(rank) + " exceeds 8", rank_offset);
    }
    Shape shape;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::size_t at = reader.offset();
        const std::uint32_t extent = reader.u32("BT1 extent");
        if (extent == 0) {
            throw FormatError("BT1 extent is zero", at);
        }
        shape.push_back(extent);
        count *= extent;
    }
    if (count > reader.remaining() / 4) {
        throw FormatError("truncated BT1 payload: need " + std::to_string(count * 4) + " bytes", reader.offset());
    }
    std::vector<float> data(count);
    for (auto& v : data) {
        v = reader.f32("BT1 element");
    }
    return Tensor<float>(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "' for reading");
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw DataError("write failed for '" + tmp.string() + "'");
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t) {
    std::vector<std::uint8_t> bytes;
    encode_bt1(t, bytes);
    write_file_atomic(path, bytes);
}

Tensor<float> load_tensor(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    ByteReader reader(bytes);
    auto t = decode_bt1(reader);
    if (!reader.at_end()) {
        throw FormatError("trailing bytes after BT1 tensor", reader.offset());
    }
    return t;
}

}  // namespace bear::io

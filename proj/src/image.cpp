#include "bear/image.hpp"

#include <algorithm>
#include <cmath>

#include "bear/tensor_io.hpp"

namespace bear::io {

namespace {

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderScanner {
public:
    explicit HeaderScanner(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t number(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        token_ = start;
        std::size_t value = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000) {
                throw FormatError(std::string("PPM ") + what + " too large", start);
            }
            ++pos_;
        }
        if (pos_ == start) {
            throw FormatError(std::string("expected PPM ") + what, pos_);
        }
        return value;
    }

    void single_space() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
            throw FormatError("expected one whitespace byte before PPM raster", pos_);
        }
        ++pos_;
    }

    std::size_t pos() const { return pos_; }
    /// Start of the most recent numeric token.
    std::size_t token() const { return token_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::size_t token_ = 0;
};

// Resamples one axis of a row-major float buffer with `channels` values per
// sample. `outer` counts independent lines, `stride` is the distance between
// consecutive samples along the axis.
std::vector<double> resample_axis(const std::vector<double>& src, std::size_t outer, std::size_t in_len,
                                  std::size_t out_len, std::size_t inner) {
    std::vector<double> dst(outer * out_len * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
        const double* s = src.data() + o * in_len * inner;
        double* d = dst.data() + o * out_len * inner;
        if (out_len >= in_len) {
            for (std::size_t i = 0; i < out_len; ++i) {
                const std::size_t j = i * in_len / out_len;
                std::copy(s + j * inner, s + (j + 1) * inner, d + i * inner);
            }
            continue;
        }
        // Output cell i covers [i * in_len, (i + 1) * in_len) and source cell j
        // covers [j * out_len, (j + 1) * out_len) on a common integer grid.
        for (std::size_t i = 0; i < out_len; ++i) {
            const std::size_t lo = i * in_len, hi = (i + 1) * in_len;
            for (std::size_t j = lo / out_len; j * out_len < hi; ++j) {
                const std::size_t a = std::max(lo, j * out_len), b = std::min(hi, (j + 1) * out_len);
                const double weight = static_cast<double>(b - a) / static_cast<double>(in_len);
                for (std::size_t c = 0; c < inner; ++c) {
                    d[i * inner + c] += weight * s[j * inner + c];
                }
            }
        }
    }
    return dst;
}

}  // namespace

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P') {
        throw FormatError("not a PPM file (expected magic P6)", 0);
    }
    if (bytes[1] != '6') {
        throw FormatError("unsupported PPM variant (only binary P6)", 1);
    }
    HeaderScanner scan(bytes.subspan(0));
    scan.advance(2);
    RgbImage img;
    img.width = scan.number("width");
    const std::size_t width_at = scan.token();
    img.height = scan.number("height");
    const std::size_t height_at = scan.token();
    const std::size_t maxval = scan.number("maxval");
    const std::size_t maxval_at = scan.token();
    if (img.width == 0 || img.height == 0) {
        throw FormatError("PPM has a zero dimension", img.width == 0 ? width_at : height_at);
    }
    if (maxval != 255) {
        throw FormatError("PPM maxval must be 255, got " + std::to_string(maxval), maxval_at);
    }
    scan.single_space();
    const std::size_t need = img.width * img.height * 3;
    if (bytes.size() - scan.pos() < need) {
        throw FormatError("truncated PPM raster: need " + std::to_string(need) + " bytes, have " +
                              std::to_string(bytes.size() - scan.pos()),
                          bytes.size());
    }
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(scan.pos()),
                      bytes.begin() + static_cast<std::ptrdiff_t>(scan.pos() + need));
    return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
    if (image.pixels.size() != image.width * image.height * 3) {
        throw DataError("RGB image buffer does not match its dimensions");
    }
    const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

RgbImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

void write_ppm(const std::filesystem::path& path, const RgbImage& image) { write_file_atomic(path, encode_ppm(image)); }

Tensor<float> to_unit_tensor(const RgbImage& image, std::size_t n) {
    if (n == 0) {
        throw DataError("target size must be positive");
    }
    std::vector<double> buf(image.pixels.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        buf[i] = image.pixels[i];
    }
    // Width first (lines are rows), then height (one line spanning all rows).
    buf = resample_axis(buf, image.height, image.width, n, 3);
    buf = resample_axis(buf, 1, image.height, n, n * 3);
    Tensor<float> out({n, n, 3});
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out[i] = static_cast<float>(std::clamp(buf[i] / 255.0, 0.0, 1.0));
    }
    return out;
}

RgbImage from_unit_tensor(const Tensor<float>& t) {
    require_hwc(t, "image tensor");
    if (t.dim(2) != 3) {
        throw ShapeError("image tensor must have 3 channels, got " + std::to_string(t.dim(2)));
    }
    RgbImage img;
    img.height = t.dim(0);
    img.width = t.dim(1);
    img.pixels.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = std::floor(static_cast<double>(t[i]) * 255.0 + 0.5);
        img.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    return img;
}

LoadedImages load_image_dir(const std::filesystem::path& dir, std::size_t n) {
    if (!std::filesystem::is_directory(dir)) {
        throw DataError("'" + dir.string() + "' is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    LoadedImages out;
    for (const auto& f : files) {
        try {
            out.images.push_back(to_unit_tensor(read_ppm(f), n));
            out.ids.push_back(f.stem().string());
        } catch (const DataError& e) {
            out.skipped.push_back(f.filename().string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace bear::io

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>

#include "bear/autodiff.hpp"
#include "bear/ops.hpp"
#include "bear/parameter_set.hpp"
#include "bear/rng.hpp"
#include "bear/tensor.hpp"

namespace bear::test {

template <class T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) {
        v = static_cast<T>(rng.uniform(lo, hi));
    }
    return t;
}

/// Scalar readout sum(w * y) with fixed random w, so every output element
/// carries a distinct gradient.
inline ad::Var<double> weighted_sum(ad::Var<double> y, std::uint64_t seed) {
    auto w = y.tape().constant(random_tensor(y.shape(), seed));
    return ad::sum(ad::mul(y, w));
}

// Direct nested-loop convolution with TF-style same padding.
inline Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b,
                                 std::size_t stride, ad::Padding padding) {
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    const std::size_t kh = k.dim(0), kw = k.dim(1), f = k.dim(3);
    std::size_t oh, ow, pad_top = 0, pad_left = 0;
    if (padding == ad::Padding::same) {
        oh = (h + stride - 1) / stride;
        ow = (w + stride - 1) / stride;
        const std::size_t ph = std::max<long>(0, long((oh - 1) * stride + kh) - long(h));
        const std::size_t pw = std::max<long>(0, long((ow - 1) * stride + kw) - long(w));
        pad_top = ph / 2;
        pad_left = pw / 2;
    } else {
        oh = (h - kh) / stride + 1;
        ow = (w - kw) / stride + 1;
    }
    Tensor<double> out({oh, ow, f});
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
            for (std::size_t of = 0; of < f; ++of) {
                double acc = b[of];
                for (std::size_t ky = 0; ky < kh; ++ky)
                    for (std::size_t kx = 0; kx < kw; ++kx)
                        for (std::size_t ic = 0; ic < c; ++ic) {
                            const long iy = long(oy * stride + ky) - long(pad_top);
                            const long ix = long(ox * stride + kx) - long(pad_left);
                            if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
                            acc += x.at(iy, ix, ic) * k[((ky * kw + kx) * c + ic) * f + of];
                        }
                out.at(oy, ox, of) = acc;
            }
    return out;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("bear_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace bear::test

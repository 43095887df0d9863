#include "bear/tensor.hpp"

namespace bear {

std::string shape_to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            s += "x";
        }
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <class T>
Tensor<T> downsample_avg(const Tensor<T>& x, std::size_t r) {
    require_hwc(x, "downsample_avg input");
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (r == 0) {
        throw ShapeError("downsample factor must be positive");
    }
    if (h % r != 0) {
        throw ShapeError("downsample factor " + std::to_string(r) + " does not divide height " + std::to_string(h));
    }
    if (w % r != 0) {
        throw ShapeError("downsample factor " + std::to_string(r) + " does not divide width " + std::to_string(w));
    }
    const std::size_t oh = h / r, ow = w / r;
    Tensor<T> out({oh, ow, c});
    const T inv = T{1} / static_cast<T>(r * r);
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            T* o = &out.at(oy, ox, 0);
            for (std::size_t dy = 0; dy < r; ++dy) {
                for (std::size_t dx = 0; dx < r; ++dx) {
                    const T* in = &x.at(oy * r + dy, ox * r + dx, 0);
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        o[ch] += in[ch];
                    }
                }
            }
            for (std::size_t ch = 0; ch < c; ++ch) {
                o[ch] *= inv;
            }
        }
    }
    return out;
}

template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& x, std::size_t factor) {
    require_hwc(x, "upsample_nearest input");
    if (factor == 0) {
        throw ShapeError("upsample factor must be positive");
    }
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor<T> out({h * factor, w * factor, c});
    for (std::size_t y = 0; y < h * factor; ++y) {
        for (std::size_t xx = 0; xx < w * factor; ++xx) {
            const T* in = &x.at(y / factor, xx / factor, 0);
            std::copy(in, in + c, &out.at(y, xx, 0));
        }
    }
    return out;
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
    require_hwc(x, "slice_channels input");
    const std::size_t c = x.dim(2);
    if (count == 0 || begin + count > c) {
        throw ShapeError("channel slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + std::to_string(c) + " channels");
    }
    const std::size_t pixels = x.dim(0) * x.dim(1);
    Tensor<T> out({x.dim(0), x.dim(1), count});
    const T* src = x.raw();
    T* dst = out.raw();
    for (std::size_t p = 0; p < pixels; ++p) {
        std::copy(src + p * c + begin, src + p * c + begin + count, dst + p * count);
    }
    return out;
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    require_hwc(a, "concat_channels first operand");
    require_hwc(b, "concat_channels second operand");
    if (a.dim(0) != b.dim(0)) {
        throw ShapeError("concat_channels height mismatch: " + std::to_string(a.dim(0)) + " vs " +
                         std::to_string(b.dim(0)));
    }
    if (a.dim(1) != b.dim(1)) {
        throw ShapeError("concat_channels width mismatch: " + std::to_string(a.dim(1)) + " vs " +
                         std::to_string(b.dim(1)));
    }
    const std::size_t ca = a.dim(2), cb = b.dim(2), pixels = a.dim(0) * a.dim(1);
    Tensor<T> out({a.dim(0), a.dim(1), ca + cb});
    T* dst = out.raw();
    for (std::size_t p = 0; p < pixels; ++p) {
        std::copy(a.raw() + p * ca, a.raw() + (p + 1) * ca, dst + p * (ca + cb));
        std::copy(b.raw() + p * cb, b.raw() + (p + 1) * cb, dst + p * (ca + cb) + ca);
    }
    return out;
}

#define BEAR_INSTANTIATE(T)                                                               \
    template Tensor<T> downsample_avg<T>(const Tensor<T>&, std::size_t);                  \
    template Tensor<T> upsample_nearest<T>(const Tensor<T>&, std::size_t);                \
    template Tensor<T> slice_channels<T>(const Tensor<T>&, std::size_t, std::size_t);     \
    template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);

BEAR_INSTANTIATE(float)
BEAR_INSTANTIATE(double)
#undef BEAR_INSTANTIATE

}  // namespace bear

#include "bear/ops.hpp"

#include <cmath>
#include <vector>

namespace bear::ad {

namespace {

struct ConvGeometry {
    std::size_t h, w, c;    // input
    std::size_t kh, kw, f;  // kernel
    std::size_t stride;
    std::size_t oh, ow;
    std::size_t pad_top, pad_left;
};

std::size_t leading_pad(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, Padding padding) {
    if (padding == Padding::valid) {
        return 0;
    }
    const std::size_t needed = (out - 1) * stride + k;
    return needed > in ? (needed - in) / 2 : 0;
}

template <class T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias, std::size_t stride,
                           Padding padding) {
    require_hwc(input, "conv2d input");
    if (kernel.rank() != 4) {
        throw ShapeError("conv2d kernel must be kh x kw x C x F, got " + shape_to_string(kernel.shape()));
    }
    if (stride == 0) {
        throw ShapeError("conv2d stride must be positive");
    }
    ConvGeometry g{};
    g.h = input.dim(0);
    g.w = input.dim(1);
    g.c = input.dim(2);
    g.kh = kernel.dim(0);
    g.kw = kernel.dim(1);
    g.f = kernel.dim(3);
    g.stride = stride;
    if (kernel.dim(2) != g.c) {
        throw ShapeError("conv2d channel axis mismatch: input has " + std::to_string(g.c) + " channels, kernel expects " +
                         std::to_string(kernel.dim(2)));
    }
    if (padding == Padding::same && (g.kh % 2 == 0 || g.kw % 2 == 0)) {
        throw ShapeError("conv2d same padding needs odd kernel extents, got " + std::to_string(g.kh) + "x" +
                         std::to_string(g.kw));
    }
    if (bias != nullptr && (bias->rank() != 1 || bias->dim(0) != g.f)) {
        throw ShapeError("conv2d bias must have " + std::to_string(g.f) + " elements (filter axis), got " +
                         shape_to_string(bias->shape()));
    }
    if (padding == Padding::valid && (g.kh > g.h || g.kw > g.w)) {
        throw ShapeError("conv2d valid padding: kernel larger than input on the " +
                         std::string(g.kh > g.h ? "height" : "width") + " axis");
    }
    g.oh = conv_output_extent(g.h, g.kh, stride, padding);
    g.ow = conv_output_extent(g.w, g.kw, stride, padding);
    g.pad_top = leading_pad(g.h, g.oh, g.kh, stride, padding);
    g.pad_left = leading_pad(g.w, g.ow, g.kw, stride, padding);
    return g;
}

// Visits every (output pixel, kernel offset) pair that lands inside the input.
template <class Fn>
void for_each_tap(const ConvGeometry& g, Fn&& fn) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                continue;
            }
            for (std::size_t ox = 0; ox < g.ow; ++ox) {
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) {
                        continue;
                    }
                    fn((oy * g.ow + ox), (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)),
                       (ky * g.kw + kx));
                }
            }
        }
    }
}

template <class T>
Tensor<T> conv_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias, const ConvGeometry& g) {
    Tensor<T> out({g.oh, g.ow, g.f});
    T* o = out.raw();
    if (bias != nullptr) {
        for (std::size_t p = 0; p < g.oh * g.ow; ++p) {
            std::copy(bias->raw(), bias->raw() + g.f, o + p * g.f);
        }
    }
    const T* in = input.raw();
    const T* k = kernel.raw();
    const std::size_t c_n = g.c, f_n = g.f;
    for_each_tap(g, [&](std::size_t op, std::size_t ip, std::size_t tap) {
        T* __restrict dst = o + op * f_n;
        const T* src = in + ip * c_n;
        const T* kt = k + tap * c_n * f_n;
        for (std::size_t c = 0; c < c_n; ++c) {
            const T v = src[c];
            const T* __restrict kr = kt + c * f_n;
            for (std::size_t f = 0; f < f_n; ++f) {
                dst[f] += v * kr[f];
            }
        }
    });
    return out;
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + " operand shapes differ: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
}

template <class T>
void add_into(Tape<T>& tape, Var<T> target, const Tensor<T>& g) {
    if (!target.valid() || !target.requires_grad()) {
        return;
    }
    auto dst = tape.grad_buffer(target.id()).data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, Padding padding) {
    if (padding == Padding::same) {
        return (in + stride - 1) / stride;
    }
    return in >= k ? (in - k) / stride + 1 : 0;
}

template <class T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, std::size_t stride, Padding padding) {
    const Tensor<T>* b = bias.valid() ? &bias.value() : nullptr;
    const ConvGeometry g = conv_geometry(input.value(), kernel.value(), b, stride, padding);
    Tensor<T> out = conv_forward(input.value(), kernel.value(), b, g);
    auto& tape = input.tape();
    return tape.record(OpKind::conv2d, std::move(out), {input, kernel, bias},
                       [input, kernel, bias, g](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
                           const T* gout = go.raw();
                           const std::size_t c_n = g.c, f_n = g.f;
                           if (bias.valid() && bias.requires_grad()) {
                               T* gb = t.grad_buffer(bias.id()).raw();
                               for (std::size_t p = 0; p < g.oh * g.ow; ++p) {
                                   for (std::size_t f = 0; f < f_n; ++f) {
                                       gb[f] += gout[p * f_n + f];
                                   }
                               }
                           }
                           if (kernel.requires_grad()) {
                               T* gk = t.grad_buffer(kernel.id()).raw();
                               const T* in = input.value().raw();
                               for_each_tap(g, [&](std::size_t op, std::size_t ip, std::size_t tap) {
                                   const T* src = in + ip * c_n;
                                   const T* __restrict gr = gout + op * f_n;
                                   T* kt = gk + tap * c_n * f_n;
                                   for (std::size_t c = 0; c < c_n; ++c) {
                                       const T v = src[c];
                                       T* __restrict dst = kt + c * f_n;
                                       for (std::size_t f = 0; f < f_n; ++f) {
                                           dst[f] += v * gr[f];
                                       }
                                   }
                               });
                           }
                           if (input.requires_grad()) {
                               // Transposed kernel (tap x F x C) keeps the inner loop an axpy over C.
                               const Tensor<T>& k = kernel.value();
                               const std::size_t taps = g.kh * g.kw;
                               std::vector<T> kt(k.size());
                               for (std::size_t tap = 0; tap < taps; ++tap) {
                                   for (std::size_t c = 0; c < c_n; ++c) {
                                       for (std::size_t f = 0; f < f_n; ++f) {
                                           kt[(tap * f_n + f) * c_n + c] = k[(tap * c_n + c) * f_n + f];
                                       }
                                   }
                               }
                               T* gi = t.grad_buffer(input.id()).raw();
                               for_each_tap(g, [&](std::size_t op, std::size_t ip, std::size_t tap) {
                                   const T* gr = gout + op * f_n;
                                   T* __restrict dst = gi + ip * c_n;
                                   const T* ktap = kt.data() + tap * f_n * c_n;
                                   for (std::size_t f = 0; f < f_n; ++f) {
                                       const T v = gr[f];
                                       const T* __restrict kr = ktap + f * c_n;
                                       for (std::size_t c = 0; c < c_n; ++c) {
                                           dst[c] += v * kr[c];
                                       }
                                   }
                               });
                           }
                       });
}

template <class T>
Var<T> dense(Var<T> input, Var<T> weights, Var<T> bias) {
    const auto& x = input.value();
    const auto& w = weights.value();
    const auto& b = bias.value();
    if (x.rank() != 1) {
        throw ShapeError("dense input must be rank 1 (flatten first), got " + shape_to_string(x.shape()));
    }
    if (w.rank() != 2 || w.dim(0) != x.dim(0)) {
        throw ShapeError("dense weights must be " + std::to_string(x.dim(0)) + " x q on the input axis, got " +
                         shape_to_string(w.shape()));
    }
    const std::size_t p = w.dim(0), q = w.dim(1);
    if (b.rank() != 1 || b.dim(0) != q) {
        throw ShapeError("dense bias must have " + std::to_string(q) + " elements (output axis), got " +
                         shape_to_string(b.shape()));
    }
    Tensor<T> out = b.reshape({q});
    T* o = out.raw();
    for (std::size_t i = 0; i < p; ++i) {
        const T v = x[i];
        const T* __restrict row = w.raw() + i * q;
        for (std::size_t j = 0; j < q; ++j) {
            o[j] += v * row[j];
        }
    }
    return input.tape().record(OpKind::dense, std::move(out), {input, weights, bias},
                               [input, weights, bias, p, q](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
                                   const T* g = go.raw();
                                   if (bias.requires_grad()) {
                                       T* gb = t.grad_buffer(bias.id()).raw();
                                       for (std::size_t j = 0; j < q; ++j) {
                                           gb[j] += g[j];
                                       }
                                   }
                                   if (weights.requires_grad()) {
                                       T* gw = t.grad_buffer(weights.id()).raw();
                                       const auto& xv = input.value();
                                       for (std::size_t i = 0; i < p; ++i) {
                                           const T v = xv[i];
                                           T* __restrict row = gw + i * q;
                                           for (std::size_t j = 0; j < q; ++j) {
                                               row[j] += v * g[j];
                                           }
                                       }
                                   }
                                   if (input.requires_grad()) {
                                       T* gi = t.grad_buffer(input.id()).raw();
                                       const T* wv = weights.value().raw();
                                       for (std::size_t i = 0; i < p; ++i) {
                                           T acc{0};
                                           const T* row = wv + i * q;
                                           for (std::size_t j = 0; j < q; ++j) {
                                               acc += row[j] * g[j];
                                           }
                                           gi[i] += acc;
                                       }
                                   }
                               });
}

template <class T>
Var<T> activation(Var<T> x, Activation kind) {
    Tensor<T> out = x.value();
    const bool is_sigmoid = kind == Activation::sigmoid;
    for (auto& v : out.data()) {
        v = is_sigmoid ? T{1} / (T{1} + std::exp(-v)) : std::tanh(v);
    }
    return x.tape().record(is_sigmoid ? OpKind::sigmoid : OpKind::tanh, std::move(out), {x},
                           [x, is_sigmoid](Tape<T>& t, const Tensor<T>& y, const Tensor<T>& go) {
                               T* gi = t.grad_buffer(x.id()).raw();
                               const T* yv = y.raw();
                               const T* g = go.raw();
                               const std::size_t n = y.size();
                               if (is_sigmoid) {
                                   for (std::size_t i = 0; i < n; ++i) {
                                       gi[i] += g[i] * yv[i] * (T{1} - yv[i]);
                                   }
                               } else {
                                   for (std::size_t i = 0; i < n; ++i) {
                                       gi[i] += g[i] * (T{1} - yv[i] * yv[i]);
                                   }
                               }
                           });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor<T> out = a.value();
    auto dst = out.data();
    auto src = b.value().data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
    return a.tape().record(OpKind::add, std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
        add_into(t, a, go);
        add_into(t, b, go);
    });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor<T> out = a.value();
    auto dst = out.data();
    auto src = b.value().data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] *= src[i];
    }
    return a.tape().record(OpKind::mul, std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
        const std::size_t n = go.size();
        if (a.requires_grad()) {
            T* ga = t.grad_buffer(a.id()).raw();
            const T* bv = b.value().raw();
            for (std::size_t i = 0; i < n; ++i) {
                ga[i] += go[i] * bv[i];
            }
        }
        if (b.requires_grad()) {
            T* gb = t.grad_buffer(b.id()).raw();
            const T* av = a.value().raw();
            for (std::size_t i = 0; i < n; ++i) {
                gb[i] += go[i] * av[i];
            }
        }
    });
}

template <class T>
Var<T> scale(Var<T> x, T factor) {
    Tensor<T> out = x.value();
    for (auto& v : out.data()) {
        v *= factor;
    }
    return x.tape().record(OpKind::scale, std::move(out), {x}, [x, factor](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
        T* gi = t.grad_buffer(x.id()).raw();
        for (std::size_t i = 0; i < go.size(); ++i) {
            gi[i] += go[i] * factor;
        }
    });
}

template <class T>
Var<T> average(std::span<const Var<T>> xs) {
    if (xs.empty()) {
        throw ShapeError("average of an empty operand list");
    }
    Tensor<T> out = xs[0].value();
    for (std::size_t k = 1; k < xs.size(); ++k) {
        check_same_shape(out, xs[k].value(), "average");
        auto dst = out.data();
        auto src = xs[k].value().data();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
    }
    const T inv = T{1} / static_cast<T>(xs.size());
    for (auto& v : out.data()) {
        v *= inv;
    }
    std::vector<Var<T>> inputs(xs.begin(), xs.end());
    return xs[0].tape().record(OpKind::average, std::move(out), inputs,
                               [inputs, inv](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
                                   for (const auto& in : inputs) {
                                       if (!in.requires_grad()) {
                                           continue;
                                       }
                                       T* gi = t.grad_buffer(in.id()).raw();
                                       for (std::size_t i = 0; i < go.size(); ++i) {
                                           gi[i] += go[i] * inv;
                                       }
                                   }
                               });
}

template <class T>
Var<T> sum(Var<T> x) {
    T acc{0};
    for (T v : x.value().data()) {
        acc += v;
    }
    return x.tape().record(OpKind::sum, Tensor<T>::scalar(acc), {x}, [x](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
        const T g = go[0];
        for (auto& v : t.grad_buffer(x.id()).data()) {
            v += g;
        }
    });
}

template <class T>
Var<T> mean(Var<T> x) {
    T acc{0};
    for (T v : x.value().data()) {
        acc += v;
    }
    const T inv = T{1} / static_cast<T>(x.value().size());
    return x.tape().record(OpKind::mean, Tensor<T>::scalar(acc * inv), {x},
                           [x, inv](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
                               const T g = go[0] * inv;
                               for (auto& v : t.grad_buffer(x.id()).data()) {
                                   v += g;
                               }
                           });
}

template <class T>
Var<T> sum_squares(Var<T> x) {
    T acc{0};
    for (T v : x.value().data()) {
        acc += v * v;
    }
    return x.tape().record(OpKind::sum_squares, Tensor<T>::scalar(acc), {x},
                           [x](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
                               const T g = go[0] * T{2};
                               T* gi = t.grad_buffer(x.id()).raw();
                               const T* xv = x.value().raw();
                               for (std::size_t i = 0; i < x.value().size(); ++i) {
                                   gi[i] += g * xv[i];
                               }
                           });
}

template <class T>
Var<T> downsample_avg(Var<T> x, std::size_t r) {
    Tensor<T> out = bear::downsample_avg(x.value(), r);
    return x.tape().record(OpKind::downsample_avg, std::move(out), {x}, [x, r](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
        auto& gi = t.grad_buffer(x.id());
        const std::size_t h = gi.dim(0), w = gi.dim(1), c = gi.dim(2);
        const T inv = T{1} / static_cast<T>(r * r);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                T* dst = &gi.at(y, xx, 0);
                const T* src = &go.at(y / r, xx / r, 0);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    dst[ch] += src[ch] * inv;
                }
            }
        }
    });
}

template <class T>
Var<T> upsample_nearest(Var<T> x, std::size_t factor) {
    Tensor<T> out = bear::upsample_nearest(x.value(), factor);
    return x.tape().record(OpKind::upsample_nearest, std::move(out), {x},
                           [x, factor](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
                               auto& gi = t.grad_buffer(x.id());
                               const std::size_t c = gi.dim(2);
                               for (std::size_t y = 0; y < go.dim(0); ++y) {
                                   for (std::size_t xx = 0; xx < go.dim(1); ++xx) {
                                       T* dst = &gi.at(y / factor, xx / factor, 0);
                                       const T* src = &go.at(y, xx, 0);
                                       for (std::size_t ch = 0; ch < c; ++ch) {
                                           dst[ch] += src[ch];
                                       }
                                   }
                               }
                           });
}

template <class T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
    Tensor<T> out = bear::concat_channels(a.value(), b.value());
    const std::size_t ca = a.value().dim(2), cb = b.value().dim(2);
    return a.tape().record(OpKind::concat_channels, std::move(out), {a, b},
                           [a, b, ca, cb](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
                               const std::size_t pixels = go.dim(0) * go.dim(1);
                               const T* g = go.raw();
                               if (a.requires_grad()) {
                                   T* ga = t.grad_buffer(a.id()).raw();
                                   for (std::size_t p = 0; p < pixels; ++p) {
                                       for (std::size_t ch = 0; ch < ca; ++ch) {
                                           ga[p * ca + ch] += g[p * (ca + cb) + ch];
                                       }
                                   }
                               }
                               if (b.requires_grad()) {
                                   T* gb = t.grad_buffer(b.id()).raw();
                                   for (std::size_t p = 0; p < pixels; ++p) {
                                       for (std::size_t ch = 0; ch < cb; ++ch) {
                                           gb[p * cb + ch] += g[p * (ca + cb) + ca + ch];
                                       }
                                   }
                               }
                           });
}

template <class T>
Var<T> slice_channels(Var<T> x, std::size_t begin, std::size_t count) {
    Tensor<T> out = bear::slice_channels(x.value(), begin, count);
    const std::size_t c = x.value().dim(2);
    return x.tape().record(OpKind::slice_channels, std::move(out), {x},
                           [x, begin, count, c](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
                               const std::size_t pixels = go.dim(0) * go.dim(1);
                               T* gi = t.grad_buffer(x.id()).raw();
                               const T* g = go.raw();
                               for (std::size_t p = 0; p < pixels; ++p) {
                                   for (std::size_t ch = 0; ch < count; ++ch) {
                                       gi[p * c + begin + ch] += g[p * count + ch];
                                   }
                               }
                           });
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
    Tensor<T> out = x.value().reshape(std::move(shape));
    return x.tape().record(OpKind::reshape, std::move(out), {x}, [x](Tape<T>& t, const Tensor<T>&, const Tensor<T>& go) {
        auto dst = t.grad_buffer(x.id()).data();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += go[i];
        }
    });
}

#define BEAR_INSTANTIATE(T)                                                              \
    template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, std::size_t, Padding);             \
    template Var<T> dense<T>(Var<T>, Var<T>, Var<T>);                                    \
    template Var<T> activation<T>(Var<T>, Activation);                                   \
    template Var<T> add<T>(Var<T>, Var<T>);                                              \
    template Var<T> mul<T>(Var<T>, Var<T>);                                              \
    template Var<T> scale<T>(Var<T>, T);                                                 \
    template Var<T> average<T>(std::span<const Var<T>>);                                 \
    template Var<T> sum<T>(Var<T>);                                                      \
    template Var<T> mean<T>(Var<T>);                                                     \
    template Var<T> sum_squares<T>(Var<T>);                                              \
    template Var<T> downsample_avg<T>(Var<T>, std::size_t);                              \
    template Var<T> upsample_nearest<T>(Var<T>, std::size_t);                            \
    template Var<T> concat_channels<T>(Var<T>, Var<T>);                                  \
    template Var<T> slice_channels<T>(Var<T>, std::size_t, std::size_t);                 \
    template Var<T> reshape<T>(Var<T>, Shape);

BEAR_INSTANTIATE(float)
BEAR_INSTANTIATE(double)
#undef BEAR_INSTANTIATE

}  // namespace bear::ad

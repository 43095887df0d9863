#include "bear/model.hpp"

#include <map>

namespace bear::model {

namespace {

std::string branch_name(const std::string& stage, std::size_t kernel) {
    return stage + "/branch" + std::to_string(kernel);
}

// Branch b of a parallel block uses a (2b + 1) x (2b + 1) kernel.
std::size_t branch_kernel(std::size_t b) { return 2 * b + 1; }

constexpr std::size_t pd_branches = 3;

}  // namespace

BearConfig BearConfig::desk() {
    BearConfig c;
    c.n = 32;
    c.m = 32;
    c.f_pfe = 8;
    c.f_bfe = 8;
    c.f_dec = 16;
    return c;
}

void BearConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid BEAR config: " + msg); };
    if (n == 0 || d == 0 || m == 0) {
        fail("n, d and m must be positive");
    }
    if (r != 4) {
        fail("residual factor r must be 4 to align x~ with the PFE output (got " + std::to_string(r) + ")");
    }
    if (n % r != 0) {
        fail("n=" + std::to_string(n) + " is not divisible by r=" + std::to_string(r));
    }
    if (n % 8 != 0) {
        fail("n=" + std::to_string(n) + " must be divisible by 8 (PFE halves twice, BFE pools once more)");
    }
    if (f_pfe == 0 || f_bfe == 0 || f_dec == 0 || pf_branches == 0) {
        fail("channel widths and pf_branches must be positive");
    }
    if (lstm_kernel % 2 == 0 || rfe_kernel % 2 == 0) {
        fail("kernel extents must be odd");
    }
}

void BearConfig::write(io::KeyValues& kv) const {
    kv.set("n", std::to_string(n));
    kv.set("d", std::to_string(d));
    kv.set("r", std::to_string(r));
    kv.set("m", std::to_string(m));
    kv.set("f_pfe", std::to_string(f_pfe));
    kv.set("f_bfe", std::to_string(f_bfe));
    kv.set("f_dec", std::to_string(f_dec));
    kv.set("pf_branches", std::to_string(pf_branches));
    kv.set("lstm_kernel", std::to_string(lstm_kernel));
    kv.set("rfe_kernel", std::to_string(rfe_kernel));
    kv.set("seed", std::to_string(seed));
}

std::string BearConfig::architecture_text() const {
    io::KeyValues kv;
    write(kv);
    std::string text;
    for (const auto& [k, v] : kv.items()) {
        if (k != "seed") {
            text += k + "=" + v + "\n";
        }
    }
    return text;
}

BearConfig BearConfig::read(io::KeyValues& kv, BearConfig c) {
    kv.take_size("n", c.n);
    kv.take_size("d", c.d);
    kv.take_size("r", c.r);
    kv.take_size("m", c.m);
    kv.take_size("f_pfe", c.f_pfe);
    kv.take_size("f_bfe", c.f_bfe);
    kv.take_size("f_dec", c.f_dec);
    kv.take_size("pf_branches", c.pf_branches);
    kv.take_size("lstm_kernel", c.lstm_kernel);
    kv.take_size("rfe_kernel", c.rfe_kernel);
    kv.take_u64("seed", c.seed);
    return c;
}

std::uint64_t BearConfig::hash() const {
    return io::fnv1a64(architecture_text());
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const BearConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, Shape>> layout;
    const std::size_t k = cfg.lstm_kernel;
    auto convlstm = [&](const std::string& prefix, std::size_t filters) {
        layout.emplace_back(prefix + "/input-kernels", Shape{k, k, 1, 4 * filters});
        layout.emplace_back(prefix + "/recurrent-kernels", Shape{k, k, filters, 4 * filters});
        layout.emplace_back(prefix + "/biases", Shape{4 * filters});
    };
    auto conv = [&](const std::string& prefix, std::size_t kernel, std::size_t in, std::size_t out) {
        layout.emplace_back(prefix + "/kernel", Shape{kernel, kernel, in, out});
        layout.emplace_back(prefix + "/bias", Shape{out});
    };
    auto dense = [&](const std::string& prefix, std::size_t in, std::size_t out) {
        layout.emplace_back(prefix + "/weights", Shape{in, out});
        layout.emplace_back(prefix + "/bias", Shape{out});
    };

    convlstm("pfe/convlstm1", cfg.f_pfe);
    convlstm("pfe/convlstm2", cfg.f_pfe);
    conv("rfe1/conv", cfg.rfe_kernel, cfg.f_pfe + cfg.d, cfg.f_pfe);
    conv("rfe2/conv", cfg.rfe_kernel, cfg.f_pfe + cfg.d, cfg.f_pfe);
    convlstm("bfe/convlstm", cfg.f_bfe);
    const std::size_t b = cfg.bottleneck_extent(), s = cfg.latent_extent();
    dense("bfe/dense", b * b * cfg.f_bfe, cfg.m);
    dense("dd/dense", cfg.m, s * s * cfg.f_dec);
    for (const char* stage : {"pd1", "pd2"}) {
        for (std::size_t i = 0; i < pd_branches; ++i) {
            conv(branch_name(stage, branch_kernel(i)), branch_kernel(i), cfg.f_dec, cfg.f_dec);
        }
    }
    for (std::size_t i = 0; i < cfg.pf_branches; ++i) {
        conv(branch_name("pf", branch_kernel(i)), branch_kernel(i), cfg.f_dec, cfg.d);
    }
    return layout;
}

template <class T>
ParameterSet<T> init_parameters(const BearConfig& cfg) {
    Rng rng(cfg.seed);
    ParameterSet<T> params;
    for (auto& [name, shape] : parameter_layout(cfg)) {
        if (shape.size() == 4) {
            const std::size_t k2 = shape[0] * shape[1];
            params.add(name, nn::glorot_uniform<T>(shape, k2 * shape[2], k2 * shape[3], rng));
        } else if (shape.size() == 2) {
            params.add(name, nn::glorot_uniform<T>(shape, shape[0], shape[1], rng));
        } else {
            Tensor<T> bias(shape);
            if (name.ends_with("/biases")) {
                const std::size_t f = shape[0] / 4;
                for (std::size_t j = f; j < 2 * f; ++j) {
                    bias[j] = T{1};
                }
            }
            params.add(name, std::move(bias));
        }
    }
    return params;
}

template <class T>
void check_parameters(const ParameterSet<T>& params, const BearConfig& cfg) {
    const auto layout = parameter_layout(cfg);
    for (const auto& [name, shape] : layout) {
        if (!params.contains(name)) {
            throw ConfigError("parameter '" + name + "' missing for this configuration");
        }
        if (params.value(name).shape() != shape) {
            throw ConfigError("parameter '" + name + "' has shape " + shape_to_string(params.value(name).shape()) +
                              ", configuration expects " + shape_to_string(shape));
        }
    }
    if (params.size() != layout.size()) {
        for (const auto& e : params) {
            bool known = false;
            for (const auto& [name, shape] : layout) {
                known = known || name == e.name;
            }
            if (!known) {
                throw ConfigError("unknown parameter '" + e.name + "' for this configuration");
            }
        }
    }
}

template <class T>
Tensor<T> residual_input(const Tensor<T>& x, const BearConfig& cfg) {
    const Shape expected{cfg.n, cfg.n, cfg.d};
    if (x.shape() != expected) {
        throw ShapeError("input must be " + shape_to_string(expected) + ", got " + shape_to_string(x.shape()));
    }
    return downsample_avg(x, cfg.r);
}

template <class T>
Bear<T>::Bear(ad::Tape<T>& tape, const ParameterSet<T>& params, BearConfig cfg)
    : tape_(tape), params_(params), cfg_(cfg) {
    cfg_.validate();
}

template <class T>
void Bear<T>::check_input(const Tensor<T>& x) const {
    const Shape expected{cfg_.n, cfg_.n, cfg_.d};
    if (x.shape() != expected) {
        throw ShapeError("BEAR input must be " + shape_to_string(expected) + ", got " + shape_to_string(x.shape()));
    }
}

template <class T>
Var<T> Bear<T>::pfe(Var<T> x) {
    check_input(x.value());
    const auto block1 = nn::bind_convlstm(tape_, params_, "pfe/convlstm1");
    const auto block2 = nn::bind_convlstm(tape_, params_, "pfe/convlstm2");
    Var<T> z = ad::downsample_avg(nn::convlstm_over_channels(x, block1), 2);
    return ad::downsample_avg(nn::convlstm_over_channels(z, block2), 2);
}

template <class T>
Var<T> Bear<T>::rfe(Var<T> z, Var<T> x_tilde, const std::string& stage) {
    const auto& zs = z.shape();
    const auto& xs = x_tilde.shape();
    if (zs.size() != 3 || xs.size() != 3 || zs[0] != xs[0] || zs[1] != xs[1]) {
        throw ShapeError("rfe: feature map " + shape_to_string(zs) + " and residual " + shape_to_string(xs) +
                         " differ in spatial extent");
    }
    const auto conv = nn::bind_conv(tape_, params_, stage + "/conv");
    if (conv.kernel.value().dim(3) != zs[2]) {
        throw ShapeError("rfe: convolution emits " + std::to_string(conv.kernel.value().dim(3)) +
                         " channels but the feature map has " + std::to_string(zs[2]));
    }
    return ad::tanh(ad::conv2d(ad::concat_channels(z, x_tilde), conv.kernel, conv.bias));
}

template <class T>
Var<T> Bear<T>::bfe(Var<T> z, Var<T> x_tilde) {
    const auto& zs = z.shape();
    const auto& xs = x_tilde.shape();
    if (zs.size() != 3 || xs.size() != 3 || zs[0] != xs[0] || zs[1] != xs[1]) {
        throw ShapeError("bfe: feature map " + shape_to_string(zs) + " and residual " + shape_to_string(xs) +
                         " differ in spatial extent");
    }
    const auto cell = nn::bind_convlstm(tape_, params_, "bfe/convlstm");
    Var<T> h = ad::downsample_avg(nn::convlstm_over_channels(ad::concat_channels(z, x_tilde), cell), 2);
    Var<T> flat = ad::reshape(h, Shape{h.value().size()});
    return ad::tanh(ad::dense(flat, tape_.parameter(params_, "bfe/dense/weights"),
                              tape_.parameter(params_, "bfe/dense/bias")));
}

template <class T>
Var<T> Bear<T>::dd(Var<T> z) {
    if (z.shape() != Shape{cfg_.m}) {
        throw ShapeError("dd: latent must have " + std::to_string(cfg_.m) + " elements, got " +
                         shape_to_string(z.shape()));
    }
    Var<T> y = ad::dense(z, tape_.parameter(params_, "dd/dense/weights"), tape_.parameter(params_, "dd/dense/bias"));
    const std::size_t s = cfg_.latent_extent();
    return ad::tanh(ad::reshape(y, Shape{s, s, cfg_.f_dec}));
}

template <class T>
Var<T> Bear<T>::pd(Var<T> z, const std::string& stage) {
    nn::ParallelConvParams<T> p;
    p.merge = nn::Merge::mean;
    for (std::size_t i = 0; i < pd_branches; ++i) {
        p.branches.push_back(nn::bind_conv(tape_, params_, branch_name(stage, branch_kernel(i))));
    }
    return ad::upsample_nearest(ad::tanh(nn::parallel_conv(z, p)), 2);
}

template <class T>
Var<T> Bear<T>::pf_reconstruct(Var<T> z) {
    nn::ParallelConvParams<T> p;
    p.merge = nn::Merge::mean;
    for (std::size_t i = 0; i < cfg_.pf_branches; ++i) {
        p.branches.push_back(nn::bind_conv(tape_, params_, branch_name("pf", branch_kernel(i))));
    }
    return ad::sigmoid(nn::parallel_conv(z, p));
}

template <class T>
Var<T> Bear<T>::encode(Var<T> x) {
    check_input(x.value());
    const Var<T> x_tilde = tape_.constant(residual_input(x.value(), cfg_));
    Var<T> z = pfe(x);
    z = rfe(z, x_tilde, "rfe1");
    z = rfe(z, x_tilde, "rfe2");
    return bfe(z, x_tilde);
}

template <class T>
Var<T> Bear<T>::decode(Var<T> z) {
    return pf_reconstruct(pd(pd(dd(z), "pd1"), "pd2"));
}

template <class T>
Var<T> Bear<T>::forward(Var<T> x) {
    return decode(encode(x));
}

template <class T>
Tensor<T> encode(const ParameterSet<T>& params, const BearConfig& cfg, const Tensor<T>& x) {
    ad::Tape<T> tape;
    Bear<T> net(tape, params, cfg);
    return net.encode(tape.constant(x)).value();
}

template <class T>
Tensor<T> reconstruct(const ParameterSet<T>& params, const BearConfig& cfg, const Tensor<T>& x) {
    ad::Tape<T> tape;
    Bear<T> net(tape, params, cfg);
    return net.forward(tape.constant(x)).value();
}

template <class T>
ParamCount param_count(const ParameterSet<T>& params) {
    ParamCount out;
    auto bump = [](std::vector<std::pair<std::string, std::size_t>>& list, const std::string& key, std::size_t n) {
        for (auto& [k, v] : list) {
            if (k == key) {
                v += n;
                return;
            }
        }
        list.emplace_back(key, n);
    };
    for (const auto& e : params) {
        const std::size_t n = e.value.size();
        out.per_tensor.emplace_back(e.name, n);
        const auto last = e.name.rfind('/');
        bump(out.per_block, last == std::string::npos ? e.name : e.name.substr(0, last), n);
        bump(out.per_stage, e.name.substr(0, e.name.find('/')), n);
        out.total += n;
    }
    return out;
}

#define BEAR_INSTANTIATE(T)                                                                           \
    template ParameterSet<T> init_parameters<T>(const BearConfig&);                                   \
    template void check_parameters<T>(const ParameterSet<T>&, const BearConfig&);                     \
    template Tensor<T> residual_input<T>(const Tensor<T>&, const BearConfig&);                        \
    template class Bear<T>;                                                                           \
    template Tensor<T> encode<T>(const ParameterSet<T>&, const BearConfig&, const Tensor<T>&);        \
    template Tensor<T> reconstruct<T>(const ParameterSet<T>&, const BearConfig&, const Tensor<T>&);   \
    template ParamCount param_count<T>(const ParameterSet<T>&);

BEAR_INSTANTIATE(float)
BEAR_INSTANTIATE(double)
#undef BEAR_INSTANTIATE

}  // namespace bear::model

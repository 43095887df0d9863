#include <gtest/gtest.h>

#include <cmath>

#include "bear/grad_check.hpp"
#include "bear/nn.hpp"
#include "test_util.hpp"

using namespace bear;
using namespace bear::ad;
using bear::test::naive_conv;
using bear::test::random_tensor;
using bear::test::weighted_sum;

namespace {

struct LstmWeights {
    Tensor<double> wx;  // k x k x 1 x 4F
    Tensor<double> wh;  // k x k x F x 4F
    Tensor<double> b;   // 4F
    std::size_t f;
    std::size_t k;
};

LstmWeights random_weights(std::size_t f, std::size_t k, std::uint64_t seed, double spread = 0.5) {
    return {random_tensor({k, k, 1, 4 * f}, seed, -spread, spread),
            random_tensor({k, k, f, 4 * f}, seed + 1, -spread, spread), random_tensor({4 * f}, seed + 2, -spread, spread),
            f, k};
}

nn::ConvLstmParams<double> bind(Tape<double>& tape, const LstmWeights& w) {
    return {tape.constant(w.wx), tape.constant(w.wh), tape.constant(w.b), w.f, w.k};
}

// Filters [q*F, (q+1)*F) of a stacked kernel or bias.
Tensor<double> gate_slice(const Tensor<double>& t, std::size_t q, std::size_t f) {
    const std::size_t stacked = t.shape().back();
    const std::size_t outer = t.size() / stacked;
    Shape shape = t.shape();
    shape.back() = f;
    Tensor<double> out(shape);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < f; ++j) out[o * f + j] = t[o * stacked + q * f + j];
    return out;
}

double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// One step computed gate by gate with separate convolutions.
std::pair<Tensor<double>, Tensor<double>> reference_step(const Tensor<double>& x, const Tensor<double>& h,
                                                         const Tensor<double>& c, const LstmWeights& w) {
    std::vector<Tensor<double>> pre;
    const Tensor<double> no_bias({w.f});
    for (std::size_t q = 0; q < 4; ++q) {
        auto a = naive_conv(x, gate_slice(w.wx, q, w.f), gate_slice(w.b, q, w.f), 1, Padding::same);
        const auto r = naive_conv(h, gate_slice(w.wh, q, w.f), no_bias, 1, Padding::same);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += r[i];
        pre.push_back(std::move(a));
    }
    Tensor<double> c_next(c.shape()), h_next(c.shape());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double ig = sigm(pre[0][i]), fg = sigm(pre[1][i]), g = std::tanh(pre[2][i]), og = sigm(pre[3][i]);
        c_next[i] = fg * c[i] + ig * g;
        h_next[i] = og * std::tanh(c_next[i]);
    }
    return {h_next, c_next};
}

}  // namespace

TEST(ConvLstm, ZeroWeightsGiveZeroHidden) {
    Tape<double> tape;
    LstmWeights w{Tensor<double>({3, 3, 1, 8}), Tensor<double>({3, 3, 2, 8}), Tensor<double>({8}), 2, 3};
    const auto s = nn::convlstm_step(tape.constant(random_tensor({5, 5, 1}, 1)), {}, bind(tape, w));
    for (double v : s.h.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(ConvLstm, DeadInputPathIgnoresInput) {
    auto w = random_weights(3, 3, 10);
    w.wx.fill(0.0);
    Tape<double> tape;
    const auto p = bind(tape, w);
    const auto a = nn::convlstm_step(tape.constant(random_tensor({6, 6, 1}, 1)), {}, p).h.value();
    const auto b = nn::convlstm_step(tape.constant(random_tensor({6, 6, 1}, 2)), {}, p).h.value();
    EXPECT_EQ(a, b);
}

TEST(ConvLstm, MatchesUnfusedGateReference) {
    const auto w = random_weights(3, 3, 20);
    const auto x = random_tensor({8, 8, 1}, 21);
    const auto h = random_tensor({8, 8, 3}, 22, -0.9, 0.9);
    const auto c = random_tensor({8, 8, 3}, 23, -2.0, 2.0);
    Tape<double> tape;
    const auto s = nn::convlstm_step(tape.constant(x), {tape.constant(h), tape.constant(c)}, bind(tape, w));
    const auto [h_ref, c_ref] = reference_step(x, h, c, w);
    for (std::size_t i = 0; i < h_ref.size(); ++i) {
        EXPECT_NEAR(s.h.value()[i], h_ref[i], 1e-6);
        EXPECT_NEAR(s.c.value()[i], c_ref[i], 1e-6);
    }
    // A zero state is the same as explicit zero tensors.
    const Tensor<double> zeros({8, 8, 3});
    const auto from_zero = nn::convlstm_step(tape.constant(x), {}, bind(tape, w));
    const auto [h0, c0] = reference_step(x, zeros, zeros, w);
    for (std::size_t i = 0; i < h0.size(); ++i) EXPECT_NEAR(from_zero.h.value()[i], h0[i], 1e-12);
}

TEST(ConvLstm, ShapeMismatchRejected) {
    const auto w = random_weights(2, 3, 30);
    Tape<double> tape;
    EXPECT_THROW(nn::convlstm_step(tape.constant(random_tensor({4, 4, 2}, 1)), {}, bind(tape, w)), ShapeError);
    EXPECT_THROW(nn::convlstm_step(tape.constant(random_tensor({4, 4, 1}, 1)),
                                   {tape.constant(Tensor<double>({4, 4, 3})), tape.constant(Tensor<double>({4, 4, 3}))},
                                   bind(tape, w)),
                 ShapeError);
}

TEST(ConvLstm, PreservesExtentForEveryKernel) {
    for (std::size_t k : {1, 3, 5, 7}) {
        Tape<double> tape;
        const auto y = nn::convlstm_over_channels(tape.constant(random_tensor({7, 9, 2}, k)),
                                                  bind(tape, random_weights(4, k, 40 + k)));
        EXPECT_EQ(y.shape(), (Shape{7, 9, 4}));
    }
}

TEST(ConvLstm, ForgetSaturationKeepsCell) {
    LstmWeights w{Tensor<double>({3, 3, 1, 8}), Tensor<double>({3, 3, 2, 8}), Tensor<double>({8}), 2, 3};
    for (std::size_t j = 2; j < 4; ++j) w.b[j] = 20.0;
    Tape<double> tape;
    const auto c = random_tensor({5, 5, 2}, 50, -3.0, 3.0);
    const auto s = nn::convlstm_step(tape.constant(random_tensor({5, 5, 1}, 51)),
                                     {tape.constant(random_tensor({5, 5, 2}, 52)), tape.constant(c)}, bind(tape, w));
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(s.c.value()[i], c[i], 1e-6);
}

TEST(ConvLstm, HiddenStaysInsideUnitInterval) {
    const auto w = random_weights(4, 3, 60, 5.0);
    Tape<double> tape;
    const auto h = nn::convlstm_over_channels(tape.constant(random_tensor({8, 8, 6}, 61, -10.0, 10.0)), bind(tape, w));
    for (double v : h.value().data()) EXPECT_LT(std::abs(v), 1.0);
}

TEST(ConvLstm, SingleChannelIsOneStep) {
    const auto w = random_weights(3, 3, 70);
    const auto x = random_tensor({6, 6, 1}, 71);
    Tape<double> tape;
    const auto p = bind(tape, w);
    EXPECT_EQ(nn::convlstm_over_channels(tape.constant(x), p).value(), nn::convlstm_step(tape.constant(x), {}, p).h.value());
}

TEST(ConvLstm, ChannelOrderMatters) {
    const auto w = random_weights(3, 3, 80);
    const auto x = random_tensor({6, 6, 3}, 81);
    Tensor<double> reversed(x.shape());
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t xx = 0; xx < 6; ++xx)
            for (std::size_t c = 0; c < 3; ++c) reversed.at(y, xx, c) = x.at(y, xx, 2 - c);
    Tape<double> tape;
    const auto p = bind(tape, w);
    const auto a = nn::convlstm_over_channels(tape.constant(x), p).value();
    const auto b = nn::convlstm_over_channels(tape.constant(reversed), p).value();
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    EXPECT_GT(diff, 1e-3);
}

TEST(ConvLstm, ShapeContract) {
    Rng rng(1);
    ParameterSet<float> ps;
    nn::add_convlstm(ps, "cell", 16, 3, rng);
    Tape<float> tape;
    const auto y = nn::convlstm_over_channels(tape.constant(Tensor<float>({32, 32, 3}, 0.5f)),
                                              nn::bind_convlstm(tape, ps, "cell"));
    EXPECT_EQ(y.shape(), (Shape{32, 32, 16}));
    EXPECT_EQ(ps.value("cell/recurrent-kernels").shape(), (Shape{3, 3, 16, 64}));
    // Forget gate bias starts at one, the rest at zero.
    const auto& b = ps.value("cell/biases");
    for (std::size_t j = 0; j < 64; ++j) EXPECT_EQ(b[j], (j >= 16 && j < 32) ? 1.0f : 0.0f);
}

TEST(ConvLstm, EveryParameterGetsGradientAndPassesFiniteDifferences) {
    Rng rng(90);
    ParameterSet<double> ps;
    nn::add_convlstm(ps, "cell", 3, 3, rng);
    const auto x = random_tensor({5, 5, 3}, 91);
    const LossFn loss = [&x](Tape<double>& t, const ParameterSet<double>& p) {
        return weighted_sum(nn::convlstm_over_channels(t.constant(x), nn::bind_convlstm(t, p, "cell")), 92);
    };
    {
        Tape<double> tape;
        backward(loss(tape, ps), ps);
        for (const auto& e : ps) {
            double mag = 0.0;
            for (double g : e.grad.data()) mag += std::abs(g);
            EXPECT_GT(mag, 0.0) << e.name;
        }
    }
    const auto report = grad_check(loss, ps, {.samples = 300});
    EXPECT_LT(report.max_relative_error, 1e-3) << report.worst_parameter;
}

TEST(ParallelConv, SingleBranchMeanIsPlainConv) {
    const auto x = random_tensor({6, 6, 2}, 100);
    const auto k = random_tensor({3, 3, 2, 4}, 101);
    const auto b = random_tensor({4}, 102);
    Tape<double> tape;
    nn::ParallelConvParams<double> p{{{tape.constant(k), tape.constant(b)}}, nn::Merge::mean};
    EXPECT_EQ(nn::parallel_conv(tape.constant(x), p).value(),
              conv2d(tape.constant(x), tape.constant(k), tape.constant(b)).value());
}

TEST(ParallelConv, IdenticalBranchesMeanEqualsOne) {
    const auto x = random_tensor({6, 6, 2}, 110);
    Tape<double> tape;
    const nn::ConvBranch<double> br{tape.constant(random_tensor({3, 3, 2, 4}, 111)), tape.constant(random_tensor({4}, 112))};
    const auto one = nn::parallel_conv(tape.constant(x), {{br}, nn::Merge::mean}).value();
    const auto three = nn::parallel_conv(tape.constant(x), {{br, br, br}, nn::Merge::mean}).value();
    for (std::size_t i = 0; i < one.size(); ++i) EXPECT_NEAR(three[i], one[i], 1e-12);
}

TEST(ParallelConv, ConcatSlicesMatchPerBranchOracle) {
    const auto x = random_tensor({8, 8, 2}, 120);
    const std::size_t f = 3;
    std::vector<Tensor<double>> ks, bs;
    Tape<double> tape;
    nn::ParallelConvParams<double> p;
    p.merge = nn::Merge::concat;
    for (std::size_t b = 0; b < 3; ++b) {
        const std::size_t k = 2 * b + 1;
        ks.push_back(random_tensor({k, k, 2, f}, 121 + b));
        bs.push_back(random_tensor({f}, 131 + b));
        p.branches.push_back({tape.constant(ks.back()), tape.constant(bs.back())});
    }
    const auto y = nn::parallel_conv(tape.constant(x), p).value();
    ASSERT_EQ(y.shape(), (Shape{8, 8, 3 * f}));
    for (std::size_t b = 0; b < 3; ++b) {
        const auto ref = naive_conv(x, ks[b], bs[b], 1, Padding::same);
        const auto got = slice_channels(y, b * f, f);
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-6);
    }
}

TEST(ParallelConv, EmptyBranchListRejected) {
    Tape<double> tape;
    EXPECT_THROW(nn::parallel_conv(tape.constant(Tensor<double>({2, 2, 1})), nn::ParallelConvParams<double>{}), ShapeError);
}

TEST(L2Penalty, Values) {
    Tape<double> tape;
    const std::vector<Var<double>> ws{tape.constant(Tensor<double>({1}, {2.0}))};
    EXPECT_EQ(nn::l2_penalty<double>(tape, ws, 0.0).value().item(), 0.0);
    EXPECT_EQ(nn::l2_penalty<double>(tape, ws, 0.5).value().item(), 2.0);
}

TEST(L2Penalty, OnlyRecurrentKernelsAndGradientIsTwoLambdaW) {
    Rng rng(140);
    ParameterSet<double> ps;
    nn::add_convlstm(ps, "cell", 2, 3, rng);
    nn::add_conv(ps, "conv", 3, 2, 2, rng);
    double expected = 0.0;
    for (double v : ps.value("cell/recurrent-kernels").data()) expected += v * v;
    {
        Tape<double> tape;
        const auto pen = nn::recurrent_l2_penalty(tape, ps, 0.25);
        EXPECT_NEAR(pen.value().item(), 0.25 * expected, 1e-12);
        backward(pen, ps);
    }
    const auto& w = ps.value("cell/recurrent-kernels");
    const auto& g = ps.grad("cell/recurrent-kernels");
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(g[i], 2.0 * 0.25 * w[i], 1e-12);
    for (double v : ps.grad("conv/kernel").data()) EXPECT_EQ(v, 0.0);
    for (double v : ps.grad("cell/input-kernels").data()) EXPECT_EQ(v, 0.0);

    const auto report = grad_check(
        [](Tape<double>& t, const ParameterSet<double>& p) { return nn::recurrent_l2_penalty(t, p, 0.25); }, ps);
    EXPECT_LT(report.max_relative_error, 1e-6);
}

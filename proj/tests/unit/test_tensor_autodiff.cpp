#include <gtest/gtest.h>

#include <cmath>

#include "bear/autodiff.hpp"
#include "bear/errors.hpp"
#include "bear/grad_check.hpp"
#include "bear/ops.hpp"
#include "test_util.hpp"

using namespace bear;
using namespace bear::ad;
using bear::test::naive_conv;
using bear::test::random_tensor;
using bear::test::weighted_sum;

namespace {

Tensor<double> run_conv(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b,
                        std::size_t stride = 1, Padding padding = Padding::same) {
    Tape<double> tape;
    return conv2d(tape.constant(x), tape.constant(k), tape.constant(b), stride, padding).value();
}

void expect_near_all(const Tensor<double>& a, const Tensor<double>& b, double tol) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a[i], b[i], tol) << "element " << i;
    }
}

std::string shape_error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ShapeError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Tensor, ElementCountIsProductOfExtents) {
    Tensor<float> t({2, 3, 4});
    EXPECT_EQ(t.size(), 24u);
    EXPECT_EQ(t.rank(), 3u);
    EXPECT_THROW(Tensor<float>({2, 0, 4}), ShapeError);
    EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), ShapeError);
}

TEST(Tensor, ReshapeKeepsDataAndRejectsCountChange) {
    Tensor<double> t({2, 3}, {1, 2, 3, 4, 5, 6});
    const auto r = t.reshape({3, 2});
    EXPECT_EQ(r.shape(), (Shape{3, 2}));
    EXPECT_EQ(t.shape(), (Shape{2, 3}));
    EXPECT_EQ(r[5], 6.0);
    EXPECT_THROW(t.reshape({4, 2}), ShapeError);
}

TEST(Conv2d, ZeroKernelGivesZeros) {
    const auto y = run_conv(Tensor<double>({4, 4, 1}, 1.0), Tensor<double>({3, 3, 1, 1}), Tensor<double>({1}));
    EXPECT_EQ(y.shape(), (Shape{4, 4, 1}));
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, ScalarMultiplyAdd) {
    const auto y = run_conv(Tensor<double>({1, 1, 1}, {2.0}), Tensor<double>({1, 1, 1, 1}, {3.0}),
                            Tensor<double>({1}, {1.0}));
    EXPECT_EQ(y.item(), 7.0);
}

TEST(Conv2d, MatchesNestedLoopReference) {
    const auto x = random_tensor({5, 5, 2}, 1);
    const auto k = random_tensor({3, 3, 2, 3}, 2);
    const auto b = random_tensor({3}, 3);
    expect_near_all(run_conv(x, k, b), naive_conv(x, k, b, 1, Padding::same), 1e-6);
    expect_near_all(run_conv(x, k, b, 1, Padding::valid), naive_conv(x, k, b, 1, Padding::valid), 1e-6);
    expect_near_all(run_conv(x, k, b, 2, Padding::same), naive_conv(x, k, b, 2, Padding::same), 1e-6);
    expect_near_all(run_conv(x, k, b, 2, Padding::valid), naive_conv(x, k, b, 2, Padding::valid), 1e-6);
}

TEST(Conv2d, SamePaddingPreservesExtentForOddKernels) {
    for (std::size_t k = 1; k <= 7; k += 2) {
        const auto y = run_conv(random_tensor({9, 7, 2}, k), random_tensor({k, k, 2, 3}, k + 1), Tensor<double>({3}));
        EXPECT_EQ(y.shape(), (Shape{9, 7, 3})) << "kernel " << k;
    }
}

TEST(Conv2d, MismatchNamesTheAxis) {
    EXPECT_NE(shape_error_of([] { run_conv(Tensor<double>({4, 4, 2}), Tensor<double>({3, 3, 3, 1}), Tensor<double>({1})); })
                  .find("channel"),
              std::string::npos);
    EXPECT_NE(shape_error_of([] { run_conv(Tensor<double>({4, 4, 1}), Tensor<double>({3, 3, 1, 2}), Tensor<double>({3})); })
                  .find("filter"),
              std::string::npos);
    EXPECT_NE(shape_error_of([] {
                  run_conv(Tensor<double>({2, 5, 1}), Tensor<double>({3, 3, 1, 1}), Tensor<double>({1}), 1, Padding::valid);
              }).find("height"),
              std::string::npos);
    EXPECT_THROW(run_conv(Tensor<double>({4, 4, 1}), Tensor<double>({2, 2, 1, 1}), Tensor<double>({1})), ShapeError);
}

TEST(Dense, HandExamples) {
    Tape<double> tape;
    auto y = dense(tape.constant(Tensor<double>({2}, {1, 2})), tape.constant(Tensor<double>({2, 2}, {1, 0, 0, 1})),
                   tape.constant(Tensor<double>({2}, {0, 0})));
    EXPECT_EQ(y.value()[0], 1.0);
    EXPECT_EQ(y.value()[1], 2.0);
    auto z = dense(tape.constant(Tensor<double>({2}, {1, 1})), tape.constant(Tensor<double>({2, 1}, {2, 3})),
                   tape.constant(Tensor<double>({1}, {-5})));
    EXPECT_EQ(z.value().item(), 0.0);
}

TEST(Dense, MatchesMatrixVectorLoop) {
    const auto x = random_tensor({6}, 4);
    const auto w = random_tensor({6, 4}, 5);
    const auto b = random_tensor({4}, 6);
    Tape<double> tape;
    const auto y = dense(tape.constant(x), tape.constant(w), tape.constant(b)).value();
    for (std::size_t j = 0; j < 4; ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < 6; ++i) acc += x[i] * w[i * 4 + j];
        EXPECT_NEAR(y[j], acc, 1e-6);
    }
    EXPECT_THROW(dense(tape.constant(random_tensor({5}, 1)), tape.constant(w), tape.constant(b)), ShapeError);
}

TEST(Activation, Values) {
    Tape<double> tape;
    const auto s = sigmoid(tape.constant(Tensor<double>({2}))).value();
    EXPECT_EQ(s[0], 0.5);
    EXPECT_EQ(s[1], 0.5);
    EXPECT_EQ(ad::tanh(tape.constant(Tensor<double>::scalar(0.0))).value().item(), 0.0);
    const auto x = random_tensor({50}, 7, -8.0, 8.0);
    const auto pos = sigmoid(tape.constant(x)).value();
    const auto neg = sigmoid(scale(tape.constant(x), -1.0)).value();
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(pos[i] + neg[i], 1.0, 1e-6);
}

TEST(Resample, DownsampleExamples) {
    EXPECT_EQ(downsample_avg(Tensor<float>({128, 128, 3}), 4).shape(), (Shape{32, 32, 3}));
    const auto c = downsample_avg(Tensor<double>({8, 8, 2}, 0.25), 4);
    for (double v : c.data()) EXPECT_EQ(v, 0.25);
    std::vector<double> vals(16);
    for (std::size_t i = 0; i < 16; ++i) vals[i] = double(i + 1);
    const auto d = downsample_avg(Tensor<double>({4, 4, 1}, vals), 2);
    EXPECT_EQ(d.data()[0], 3.5);
    EXPECT_EQ(d.data()[1], 5.5);
    EXPECT_EQ(d.data()[2], 11.5);
    EXPECT_EQ(d.data()[3], 13.5);
    EXPECT_THROW(downsample_avg(Tensor<double>({6, 6, 1}), 4), ShapeError);
}

TEST(Resample, UpsampleExamples) {
    const auto u = upsample_nearest(Tensor<double>({1, 1, 1}, {5.0}), 2);
    EXPECT_EQ(u.shape(), (Shape{2, 2, 1}));
    for (double v : u.data()) EXPECT_EQ(v, 5.0);
    EXPECT_EQ(upsample_nearest(Tensor<float>({16, 16, 8}), 2).shape(), (Shape{32, 32, 8}));
    const auto x = random_tensor({5, 3, 4}, 8);
    EXPECT_EQ(downsample_avg(upsample_nearest(x, 2), 2), x);
}

TEST(Channels, ConcatThenSliceRecoversOperands) {
    EXPECT_EQ(concat_channels(Tensor<float>({32, 32, 16}), Tensor<float>({32, 32, 3})).shape(), (Shape{32, 32, 19}));
    const auto a = random_tensor({3, 4, 2}, 9);
    const auto b = random_tensor({3, 4, 5}, 10);
    const auto ab = concat_channels(a, b);
    EXPECT_EQ(slice_channels(ab, 0, 2), a);
    EXPECT_EQ(slice_channels(ab, 2, 5), b);
    EXPECT_THROW(concat_channels(a, random_tensor({3, 3, 5}, 1)), ShapeError);
}

TEST(Backward, SumOverConcatRoutesOnes) {
    Tape<double> tape;
    auto a = tape.leaf(random_tensor({2, 2, 2}, 1));
    auto b = tape.leaf(random_tensor({2, 2, 3}, 2));
    tape.backward(sum(concat_channels(a, b)));
    for (double g : tape.grad(a.id())->data()) EXPECT_EQ(g, 1.0);
    for (double g : tape.grad(b.id())->data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SumOfParameterGivesOnes) {
    ParameterSet<double> p;
    p.add("w", random_tensor({5}, 3));
    Tape<double> tape;
    backward(sum(tape.parameter(p, "w")), p);
    for (double g : p.grad("w").data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SumOfSquares) {
    ParameterSet<double> p;
    p.add("w", Tensor<double>({2}, {1.0, -2.0}));
    Tape<double> tape;
    backward(sum_squares(tape.parameter(p, "w")), p);
    EXPECT_EQ(p.grad("w")[0], 2.0);
    EXPECT_EQ(p.grad("w")[1], -4.0);
}

TEST(Backward, NonScalarLossRejected) {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({3}));
    EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Backward, TapeSweepsOnce) {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>::scalar(1.0));
    auto y = scale(x, 2.0);
    tape.backward(y);
    EXPECT_THROW(tape.backward(y), std::logic_error);
}

TEST(Backward, FanOutAccumulatesLikeDoubling) {
    // y = tanh(x) + tanh(x) must have the gradient of 2 * tanh(x).
    const auto x0 = random_tensor({4}, 11);
    Tape<double> t1;
    auto x1 = t1.leaf(x0);
    t1.backward(sum(add(ad::tanh(x1), ad::tanh(x1))));
    Tape<double> t2;
    auto x2 = t2.leaf(x0);
    t2.backward(sum(scale(ad::tanh(x2), 2.0)));
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(t1.grad(x1.id())->data()[i], t2.grad(x2.id())->data()[i], 1e-15);
    }
}

TEST(Backward, SharedParameterIsOneNode) {
    ParameterSet<double> p;
    p.add("w", Tensor<double>({1}, {3.0}));
    Tape<double> tape;
    auto a = tape.parameter(p, "w");
    auto b = tape.parameter(p, "w");
    EXPECT_EQ(a.id(), b.id());
    backward(sum(mul(a, b)), p);
    EXPECT_EQ(p.grad("w")[0], 6.0);
}

TEST(Backward, GradientsAccumulateAcrossCallsUntilZeroed) {
    ParameterSet<double> p;
    p.add("w", Tensor<double>({2}, {1.0, 1.0}));
    for (int i = 0; i < 2; ++i) {
        Tape<double> tape;
        backward(sum(tape.parameter(p, "w")), p);
    }
    EXPECT_EQ(p.grad("w")[0], 2.0);
    p.zero_grad();
    EXPECT_EQ(p.grad("w")[0], 0.0);
}

TEST(Backward, DeterministicAcrossRuns) {
    auto run = [] {
        ParameterSet<double> p;
        p.add("k", random_tensor({3, 3, 2, 2}, 1));
        p.add("b", random_tensor({2}, 2));
        Tape<double> tape;
        auto y = conv2d(tape.constant(random_tensor({6, 6, 2}, 3)), tape.parameter(p, "k"), tape.parameter(p, "b"));
        backward(weighted_sum(ad::tanh(y), 4), p);
        return std::make_pair(p.grad("k"), p.grad("b"));
    };
    EXPECT_EQ(run(), run());
}

// Finite-difference checks for every differentiable op.
class OpGradient : public ::testing::TestWithParam<std::string> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
    const std::string op = GetParam();
    ParameterSet<double> p;
    p.add("a", random_tensor({4, 4, 3}, 21));
    p.add("b", random_tensor({4, 4, 3}, 22));
    p.add("k", random_tensor({3, 3, 3, 2}, 23));
    p.add("kb", random_tensor({2}, 24));
    p.add("v", random_tensor({6}, 25));
    p.add("w", random_tensor({6, 5}, 26));
    p.add("wb", random_tensor({5}, 27));

    const auto loss = [op](Tape<double>& t, const ParameterSet<double>& ps) -> Var<double> {
        auto a = t.parameter(ps, "a");
        auto b = t.parameter(ps, "b");
        Var<double> y;
        if (op == "conv_same") y = conv2d(a, t.parameter(ps, "k"), t.parameter(ps, "kb"));
        else if (op == "conv_valid_stride2") y = conv2d(a, t.parameter(ps, "k"), t.parameter(ps, "kb"), 2, Padding::valid);
        else if (op == "conv_same_stride2") y = conv2d(a, t.parameter(ps, "k"), t.parameter(ps, "kb"), 2);
        else if (op == "dense") y = dense(t.parameter(ps, "v"), t.parameter(ps, "w"), t.parameter(ps, "wb"));
        else if (op == "sigmoid") y = sigmoid(a);
        else if (op == "tanh") y = ad::tanh(a);
        else if (op == "add") y = add(a, b);
        else if (op == "mul") y = mul(a, b);
        else if (op == "scale") y = scale(a, -1.5);
        else if (op == "average") {
            const std::vector<Var<double>> xs{a, b, a};
            y = average<double>(xs);
        } else if (op == "sum") y = sum(a);
        else if (op == "mean") y = mean(a);
        else if (op == "sum_squares") y = sum_squares(a);
        else if (op == "downsample") y = downsample_avg(a, 2);
        else if (op == "upsample") y = upsample_nearest(a, 2);
        else if (op == "concat") y = concat_channels(a, b);
        else if (op == "slice") y = slice_channels(a, 1, 2);
        else if (op == "reshape") y = reshape(a, {48});
        return weighted_sum(y, 99);
    };
    const auto report = grad_check(loss, p, {.step = 1e-4, .samples = 400, .seed = 5});
    EXPECT_LT(report.max_relative_error, 1e-3) << op << " worst " << report.worst_parameter;
    EXPECT_LT(report.max_scaled_error, 1e-3) << op << " worst " << report.worst_parameter;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient,
                         ::testing::Values("conv_same", "conv_valid_stride2", "conv_same_stride2", "dense", "sigmoid",
                                           "tanh", "add", "mul", "scale", "average", "sum", "mean", "sum_squares",
                                           "downsample", "upsample", "concat", "slice", "reshape"));

TEST(GradCheck, QuadraticIsExactToRoundoff) {
    ParameterSet<double> p;
    p.add("w", random_tensor({10}, 31));
    const auto report = grad_check(
        [](Tape<double>& t, const ParameterSet<double>& ps) { return scale(sum_squares(t.parameter(ps, "w")), 0.5); }, p);
    EXPECT_LT(report.max_relative_error, 1e-9);
    EXPECT_EQ(report.coordinates, 10u);
}

TEST(GradCheck, RestoresParameterValues) {
    ParameterSet<double> p;
    p.add("w", random_tensor({10}, 31));
    const auto before = p.value("w");
    grad_check([](Tape<double>& t, const ParameterSet<double>& ps) { return sum_squares(t.parameter(ps, "w")); }, p);
    EXPECT_EQ(p.value("w"), before);
}

TEST(GradCheck, DetectsCorruptedRule) {
    ParameterSet<double> p;
    p.add("w", random_tensor({3, 3, 1, 2}, 41));
    p.add("x", random_tensor({5, 5, 1}, 42));
    const LossFn loss = [](Tape<double>& t, const ParameterSet<double>& ps) {
        return sum(ad::tanh(conv2d(t.parameter(ps, "x"), t.parameter(ps, "w"), Var<double>{})));
    };
    EXPECT_LT(grad_check(loss, p).max_relative_error, 1e-3);
    GradCheckOptions faulty;
    faulty.tape_options.faulty_op = OpKind::tanh;
    faulty.tape_options.fault_scale = 2.0;
    EXPECT_GT(grad_check(loss, p, faulty).max_relative_error, 0.1);
}

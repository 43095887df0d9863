#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bear/adam.hpp"
#include "bear/grad_check.hpp"
#include "bear/losses.hpp"
#include "bear/schedule.hpp"
#include "bear/synth.hpp"
#include "bear/trainer.hpp"
#include "test_util.hpp"

using namespace bear;
using namespace bear::ad;
using namespace bear::train;
using bear::test::random_tensor;

namespace {

double bce_oracle(const Tensor<double>& x, const Tensor<double>& xh) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = std::max(xh[i], 1e-7);
        const double q = std::max(1.0 - xh[i], 1e-7);
        total += x[i] * std::log(p) + (1.0 - x[i]) * std::log(q);
    }
    return -total / double(x.size());
}

double bce_value(const Tensor<double>& x, const Tensor<double>& xh) {
    Tape<double> tape;
    return bce_loss(x, tape.constant(xh)).value().item();
}

double mse_value(const Tensor<double>& x, const Tensor<double>& xh) {
    Tape<double> tape;
    return mse_loss(x, tape.constant(xh)).value().item();
}

model::BearConfig tiny() {
    model::BearConfig c;
    c.n = 16;
    c.m = 4;
    c.f_pfe = 2;
    c.f_bfe = 2;
    c.f_dec = 2;
    return c;
}

TrainConfig quick(std::size_t epochs) {
    TrainConfig t;
    t.max_epochs = epochs;
    t.batch_size = 4;
    t.val_fraction = 0.25;
    t.lr0 = 1e-3;
    return t;
}

}  // namespace

TEST(Bce, PerfectBinaryReconstructionIsZero) {
    const Tensor<double> zeros({4, 4, 3});
    EXPECT_NEAR(bce_value(zeros, zeros), 0.0, 1e-6);
    const Tensor<double> ones({4, 4, 3}, 1.0);
    EXPECT_NEAR(bce_value(ones, ones), 0.0, 1e-6);
}

TEST(Bce, HalfIsLn2) {
    const Tensor<double> half({4, 4, 3}, 0.5);
    EXPECT_NEAR(bce_value(half, half), std::log(2.0), 1e-6);
    const Tensor<float> halff({4, 4, 3}, 0.5f);
    Tape<float> tape;
    EXPECT_NEAR(bce_loss(halff, tape.constant(halff)).value().item(), std::log(2.0), 1e-6);
}

TEST(Bce, MatchesScalarLoop) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto x = random_tensor({3, 5, 2}, 100 + s, 0.0, 1.0);
        const auto xh = random_tensor({3, 5, 2}, 200 + s, 0.0, 1.0);
        EXPECT_NEAR(bce_value(x, xh), bce_oracle(x, xh), 1e-6);
    }
    // Clamped extremes.
    const Tensor<double> x({2}, {1.0, 0.0});
    const Tensor<double> xh({2}, {0.0, 1.0});
    EXPECT_NEAR(bce_value(x, xh), -std::log(1e-7), 1e-9);
}

TEST(Bce, ShapeMismatchRejected) {
    Tape<double> tape;
    EXPECT_THROW(bce_loss(Tensor<double>({2, 2, 1}), tape.constant(Tensor<double>({2, 2, 2}))), ShapeError);
    EXPECT_THROW(mse_loss(Tensor<double>({3}), tape.constant(Tensor<double>({2}))), ShapeError);
}

TEST(Bce, MinimizedAtTarget) {
    // Interior targets: zero gradient at xh = x.
    const auto x = random_tensor({12}, 7, 0.05, 0.95);
    Tape<double> tape;
    auto xh = tape.leaf(x);
    tape.backward(bce_loss(x, xh));
    for (double g : tape.grad(xh.id())->data()) EXPECT_NEAR(g, 0.0, 1e-12);
    // Binary targets: any other prediction costs more.
    Rng rng(8);
    Tensor<double> bin({12});
    for (auto& v : bin.data()) v = double(rng.below(2));
    const double best = bce_value(bin, bin);
    for (std::uint64_t s = 0; s < 10; ++s) {
        EXPECT_LT(best, bce_value(bin, random_tensor({12}, 300 + s, 0.0, 1.0)));
    }
}

TEST(Bce, GradientCheck) {
    ParameterSet<double> p;
    p.add("xh", random_tensor({4, 4, 3}, 9, 0.05, 0.95));
    const auto x = random_tensor({4, 4, 3}, 10, 0.0, 1.0);
    const auto report =
        grad_check([&](Tape<double>& t, const ParameterSet<double>& ps) { return bce_loss(x, t.parameter(ps, "xh")); }, p);
    EXPECT_LT(report.max_scaled_error, 1e-4);
}

TEST(Mse, Examples) {
    const auto x = random_tensor({5}, 11);
    EXPECT_EQ(mse_value(x, x), 0.0);
    EXPECT_EQ(mse_value(Tensor<double>({1}, {0.0}), Tensor<double>({1}, {1.0})), 1.0);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto a = random_tensor({2, 3, 4}, 400 + s);
        const auto b = random_tensor({2, 3, 4}, 500 + s);
        double total = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) total += (b[i] - a[i]) * (b[i] - a[i]);
        EXPECT_NEAR(mse_value(a, b), total / double(a.size()), 1e-6);
        EXPECT_GE(mse_value(a, b), 0.0);
        EXPECT_GE(bce_value(random_tensor({2, 3, 4}, 600 + s, 0.0, 1.0), random_tensor({2, 3, 4}, 700 + s, 0.0, 1.0)), 0.0);
    }
}

TEST(Mse, GradientIsTwoDiffOverN) {
    const auto x = random_tensor({6}, 12);
    const auto xh0 = random_tensor({6}, 13);
    Tape<double> tape;
    auto xh = tape.leaf(xh0);
    tape.backward(mse_loss(x, xh));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(tape.grad(xh.id())->data()[i], 2.0 * (xh0[i] - x[i]) / 6.0, 1e-15);
    ParameterSet<double> p;
    p.add("xh", xh0);
    EXPECT_LT(grad_check([&](Tape<double>& t, const ParameterSet<double>& ps) { return mse_loss(x, t.parameter(ps, "xh")); }, p)
                  .max_relative_error,
              1e-8);
}

TEST(Adam, ThreeStepScalarOracle) {
    // f(w) = (w - 3)^2 from w = 0, lr = 0.1.
    ParameterSet<double> p;
    p.add("w", Tensor<double>({1}, {0.0}));
    AdamState<double> state(p);
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double w = 0.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
        const double g = 2.0 * (w - 3.0);
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        w -= lr * mh / (std::sqrt(vh) + eps);

        p.grad("w")[0] = 2.0 * (p.value("w")[0] - 3.0);
        adam_step(p, state, lr);
        EXPECT_NEAR(p.value("w")[0], w, 1e-10) << "step " << t;
    }
    EXPECT_EQ(state.steps(), 3u);
}

TEST(Adam, FirstStepMagnitudeIsLr) {
    for (double g : {1e-3, 0.5, -7.0, 1234.0}) {
        ParameterSet<double> p;
        p.add("w", Tensor<double>({1}, {1.0}));
        AdamState<double> state(p);
        p.grad("w")[0] = g;
        state.step(p, 1e-4);
        EXPECT_NEAR(std::abs(p.value("w")[0] - 1.0), 1e-4, 1e-9) << g;
    }
}

TEST(Adam, ZeroGradientAndZeroRateLeaveParameters) {
    ParameterSet<double> p;
    p.add("w", random_tensor({4}, 14));
    const auto before = p.value("w");
    AdamState<double> state(p);
    state.step(p, 1e-3);
    EXPECT_EQ(p.value("w"), before);
    EXPECT_EQ(state.steps(), 1u);
    p.grad("w").fill(0.7);
    state.step(p, 0.0);
    EXPECT_EQ(p.value("w"), before);
    EXPECT_EQ(p.grad("w")[0], 0.0);
}

TEST(Adam, NonFiniteGradientAborts) {
    ParameterSet<double> p;
    p.add("w", random_tensor({4}, 15));
    const auto before = p.value("w");
    AdamState<double> state(p);
    p.grad("w")[2] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(state.step(p, 1e-3), NumericError);
    EXPECT_EQ(p.value("w"), before);
}

TEST(Schedule, DecreasingHistoryKeepsRate) {
    const std::vector<double> h{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01};
    EXPECT_EQ(plateau_decay(h, 1e-4, {}), 1e-4);
    EXPECT_FALSE(early_stop(h, {}));
}

TEST(Schedule, FlatFiveHalvesRate) {
    const std::vector<double> h(5, 1.0);
    EXPECT_EQ(plateau_decay(h, 1e-4, {}), 0.5e-4);
    EXPECT_EQ(plateau_decay(std::vector<double>(4, 1.0), 1e-4, {}), 1e-4);
    EXPECT_EQ(plateau_decay(std::vector<double>(10, 1.0), 1e-4, {}), 0.25e-4);
}

TEST(Schedule, ImprovementResetsPlateauCounter) {
    // Improvement at epoch 4, then three flat epochs: no decay.
    const std::vector<double> reset{1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5};
    EXPECT_EQ(plateau_decay(reset, 1e-4, {}), 1e-4);
    // Without the improvement the same length decays once.
    EXPECT_EQ(plateau_decay(std::vector<double>(7, 1.0), 1e-4, {}), 0.5e-4);

    ValidationMonitor mon({});
    const std::vector<bool> decays{false, false, false, false, false, false, false, false, true};
    const std::vector<double> trace{1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto out = mon.observe(trace[i]);
        EXPECT_EQ(out.improved, i == 3) << i;
        EXPECT_EQ(out.decay, decays[i]) << i;
        EXPECT_FALSE(out.stop);
    }
}

TEST(Schedule, SubThresholdChangeIsNotImprovement) {
    ValidationMonitor mon({}, 1.0);
    EXPECT_FALSE(mon.observe(1.0 - 5e-7).improved);
    EXPECT_TRUE(mon.observe(1.0 - 2e-6).improved);
}

TEST(Schedule, EarlyStopExamples) {
    EXPECT_TRUE(early_stop(std::vector<double>(10, 1.0), {}));
    EXPECT_FALSE(early_stop(std::vector<double>(9, 1.0), {}));
    std::vector<double> nine_then_better(9, 1.0);
    nine_then_better.push_back(0.5);
    EXPECT_FALSE(early_stop(nine_then_better, {}));
    std::vector<double> after_best{1.0, 0.5};
    for (int i = 0; i < 10; ++i) after_best.push_back(0.6);
    EXPECT_TRUE(early_stop(after_best, {}));
    after_best.pop_back();
    EXPECT_FALSE(early_stop(after_best, {}));
}

TEST(Schedule, MonitorStopsAtPatienceWithTwoDecays) {
    ValidationMonitor mon({}, 1.0);
    std::size_t decays = 0;
    for (std::size_t e = 1; e <= 10; ++e) {
        const auto out = mon.observe(1.0);
        decays += out.decay;
        EXPECT_EQ(out.stop, e == 10) << e;
    }
    EXPECT_EQ(decays, 2u);
}

TEST(Schedule, InvalidConfigRejected) {
    ScheduleConfig c;
    c.stop_patience = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.decay_factor = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Split, DeterministicAndDisjoint) {
    const auto a = split_dataset(200, 0.1, 1);
    EXPECT_EQ(a.val.size(), 20u);
    EXPECT_EQ(a.train.size(), 180u);
    const auto b = split_dataset(200, 0.1, 1);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.val, b.val);
    std::vector<bool> seen(200, false);
    for (auto i : a.train) seen[i] = true;
    for (auto i : a.val) {
        EXPECT_FALSE(seen[i]);
        seen[i] = true;
    }
    EXPECT_EQ(std::count(seen.begin(), seen.end(), true), 200);
    EXPECT_EQ(split_dataset(2, 0.1, 1).val.size(), 1u);
    EXPECT_THROW(split_dataset(1, 0.1, 1), DataError);
}

TEST(TrainConfig, ReadWriteRoundTrip) {
    TrainConfig t;
    t.loss = LossKind::mse;
    t.lr0 = 3e-4;
    t.seed = 7;
    io::KeyValues kv;
    t.write(kv);
    auto parsed = io::KeyValues::parse(kv.to_text());
    const auto back = TrainConfig::read(parsed);
    EXPECT_EQ(back.loss, LossKind::mse);
    EXPECT_EQ(back.lr0, 3e-4);
    EXPECT_EQ(back.seed, 7u);
    auto bad = io::KeyValues::parse("loss = hinge\n");
    EXPECT_THROW(TrainConfig::read(bad), ConfigError);
}

TEST(Fit, ZeroEpochsReturnsInitialParameters) {
    const auto cfg = tiny();
    const auto images = synth::scene_tensors(4, 16, 1);
    const auto r = fit(images, quick(0), cfg);
    EXPECT_TRUE(r.log.empty());
    EXPECT_TRUE(r.checkpoint.params.same_values(model::init_parameters<float>(cfg)));
    EXPECT_EQ(r.checkpoint.config, cfg);
}

TEST(Fit, RejectsBadDatasets) {
    const auto cfg = tiny();
    EXPECT_THROW(fit({}, quick(1), cfg), DataError);
    EXPECT_THROW(fit(synth::scene_tensors(3, 32, 1), quick(1), cfg), DataError);
    auto imgs = synth::scene_tensors(3, 16, 1);
    imgs[1][5] = 1.5f;
    EXPECT_THROW(fit(imgs, quick(1), cfg), DataError);
}

TEST(Fit, DeterministicAndThreadInvariant) {
    const auto cfg = tiny();
    const auto images = synth::scene_tensors(12, 16, 2);
    auto tc = quick(3);
    const auto a = fit(images, tc, cfg);
    const auto b = fit(images, tc, cfg);
    tc.threads = 3;
    const auto c = fit(images, tc, cfg);
    ASSERT_EQ(a.log.size(), 3u);
    for (const auto* other : {&b, &c}) {
        ASSERT_EQ(other->log.size(), a.log.size());
        for (std::size_t i = 0; i < a.log.size(); ++i) {
            EXPECT_EQ(a.log[i].train_loss, other->log[i].train_loss);
            EXPECT_EQ(a.log[i].val_loss, other->log[i].val_loss);
            EXPECT_EQ(a.log[i].lr, other->log[i].lr);
        }
        EXPECT_TRUE(a.checkpoint.params.same_values(other->checkpoint.params));
    }
}

TEST(Fit, ReducesTrainingLoss) {
    const auto cfg = tiny();
    const auto images = synth::scene_tensors(16, 16, 3);
    auto tc = quick(8);
    tc.lr0 = 3e-3;
    const auto r = fit(images, tc, cfg);
    ASSERT_FALSE(r.log.empty());
    EXPECT_LT(r.log.back().train_loss, r.initial_train_loss);
    for (std::size_t i = 1; i < r.log.size(); ++i) EXPECT_LE(r.log[i].lr, r.log[i - 1].lr);
}

TEST(Fit, FlatValidationDecaysThenStops) {
    // A rate far below float resolution leaves the weights unchanged.
    const auto cfg = tiny();
    const auto images = synth::scene_tensors(8, 16, 4);
    auto tc = quick(30);
    tc.lr0 = 1e-30;
    tc.lambda = 0.0;
    const auto r = fit(images, tc, cfg);
    ASSERT_EQ(r.log.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(r.log[i].lr, i < 5 ? 1e-30 : 0.5e-30) << i;
    EXPECT_EQ(*r.checkpoint.find_metadata("best_epoch"), "0");
    EXPECT_EQ(*r.checkpoint.find_metadata("epochs"), "10");
}

TEST(Fit, EpochLogCsv) {
    std::vector<EpochRecord> log{{1, 0.5, 0.25, 1e-4, 1.5}};
    EXPECT_EQ(epoch_log_csv(log), "epoch,train_loss,val_loss,lr,seconds\n1,0.5,0.25,1e-04,1.500\n");
}

#include "bear/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

#include "bear/adam.hpp"
#include "bear/losses.hpp"
#include "bear/rng.hpp"

namespace bear::train {

std::string_view to_string(LossKind kind) { return kind == LossKind::bce ? "bce" : "mse"; }

LossKind parse_loss_kind(std::string_view text) {
    if (text == "bce") {
        return LossKind::bce;
    }
    if (text == "mse") {
        return LossKind::mse;
    }
    throw ConfigError("loss must be 'bce' or 'mse', got '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
    schedule().validate();
    if (!(lr0 > 0.0) || !std::isfinite(lr0)) {
        throw ConfigError("lr0 must be positive");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ConfigError("val_fraction must lie in (0, 1)");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ConfigError("lambda must be non-negative");
    }
    if (threads == 0) {
        throw ConfigError("threads must be positive");
    }
}

ScheduleConfig TrainConfig::schedule() const {
    ScheduleConfig s;
    s.plateau_patience = plateau_patience;
    s.decay_factor = decay_factor;
    s.stop_patience = stop_patience;
    return s;
}

void TrainConfig::write(io::KeyValues& kv) const {
    kv.set("loss", std::string(to_string(loss)));
    kv.set("lr0", io::format_double(lr0));
    kv.set("plateau_patience", std::to_string(plateau_patience));
    kv.set("decay_factor", io::format_double(decay_factor));
    kv.set("stop_patience", std::to_string(stop_patience));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("max_epochs", std::to_string(max_epochs));
    kv.set("val_fraction", io::format_double(val_fraction));
    kv.set("lambda", io::format_double(lambda));
    kv.set("seed", std::to_string(seed));
}

TrainConfig TrainConfig::read(io::KeyValues& kv, TrainConfig c) {
    std::string loss;
    if (kv.take("loss", loss)) {
        c.loss = parse_loss_kind(loss);
    }
    kv.take_double("lr0", c.lr0);
    kv.take_size("plateau_patience", c.plateau_patience);
    kv.take_double("decay_factor", c.decay_factor);
    kv.take_size("stop_patience", c.stop_patience);
    kv.take_size("batch_size", c.batch_size);
    kv.take_size("max_epochs", c.max_epochs);
    kv.take_double("val_fraction", c.val_fraction);
    kv.take_double("lambda", c.lambda);
    kv.take_u64("seed", c.seed);
    kv.take_size("threads", c.threads);
    return c;
}

Split split_dataset(std::size_t count, double val_fraction, std::uint64_t seed) {
    if (count < 2) {
        throw DataError("need at least 2 images to form training and validation sets, got " + std::to_string(count));
    }
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) {
        order[i] = i;
    }
    Rng rng(derive_seed(seed, 0));
    rng.shuffle(std::span(order));
    std::size_t n_val = static_cast<std::size_t>(std::llround(static_cast<double>(count) * val_fraction));
    n_val = std::clamp<std::size_t>(n_val, 1, count - 1);
    Split s;
    s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    return s;
}

namespace {

template <class T>
ad::Var<T> loss_of(LossKind kind, const Tensor<T>& target, ad::Var<T> prediction) {
    return kind == LossKind::bce ? bce_loss(target, prediction) : mse_loss(target, prediction);
}

// Loss and per-parameter gradients (aligned with `params` order) of one image.
struct SampleGrad {
    double loss = 0.0;
    std::vector<Tensor<float>> grads;
};

void sample_gradient(const ParameterSet<float>& params, const model::BearConfig& cfg, LossKind kind,
                     const Tensor<float>& image, SampleGrad& out) {
    ad::Tape<float> tape;
    model::Bear<float> net(tape, params, cfg);
    const ad::Var<float> loss = loss_of(kind, image, net.forward(tape.constant(image)));
    out.loss = loss.value().item();
    tape.backward(loss);
    out.grads.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        out.grads[k] = Tensor<float>(params[k].value.shape());
    }
    for (const auto& [name, id] : tape.bindings()) {
        if (const auto* g = tape.grad(id)) {
            out.grads[params.index_of(name)] = *g;
        }
    }
}

// Runs job(i) for i in [0, count) on up to `threads` workers. Each index is
// handled by exactly one worker; callers combine results in index order.
template <class Job>
void run_indexed(std::size_t count, std::size_t threads, Job&& job) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            job(i);
        }
        return;
    }
    const std::size_t workers = std::min(threads, count);
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < count; i += workers) {
                        job(i);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

void check_images(const std::vector<Tensor<float>>& images, const model::BearConfig& cfg) {
    if (images.empty()) {
        throw DataError("training set is empty");
    }
    const Shape expected{cfg.n, cfg.n, cfg.d};
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape() != expected) {
            throw DataError("image " + std::to_string(i) + " has shape " + shape_to_string(images[i].shape()) +
                            ", expected " + shape_to_string(expected));
        }
        for (float v : images[i].data()) {
            if (!(v >= 0.0f && v <= 1.0f)) {
                throw DataError("image " + std::to_string(i) + " has values outside [0, 1]");
            }
        }
    }
}

void require_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) {
        throw NumericError(what + " is not finite");
    }
}

}  // namespace

template <class T>
double reconstruction_loss(const ParameterSet<T>& params, const model::BearConfig& cfg, LossKind kind,
                           const Tensor<T>& image) {
    ad::Tape<T> tape;
    model::Bear<T> net(tape, params, cfg);
    return static_cast<double>(loss_of(kind, image, net.forward(tape.constant(image))).value().item());
}

template double reconstruction_loss<float>(const ParameterSet<float>&, const model::BearConfig&, LossKind,
                                           const Tensor<float>&);
template double reconstruction_loss<double>(const ParameterSet<double>&, const model::BearConfig&, LossKind,
                                            const Tensor<double>&);

double mean_loss(const ParameterSet<float>& params, const model::BearConfig& cfg, LossKind kind,
                 const std::vector<Tensor<float>>& images, const std::vector<std::size_t>& indices,
                 std::size_t threads) {
    if (indices.empty()) {
        throw DataError("mean_loss over an empty index set");
    }
    std::vector<double> losses(indices.size());
    run_indexed(indices.size(), threads,
                [&](std::size_t i) { losses[i] = reconstruction_loss(params, cfg, kind, images[indices[i]]); });
    double total = 0.0;
    for (double l : losses) {
        total += l;
    }
    return total / static_cast<double>(indices.size());
}

FitResult fit(const std::vector<Tensor<float>>& images, const TrainConfig& cfg, const model::BearConfig& bcfg,
              const EpochCallback& on_epoch) {
    cfg.validate();
    bcfg.validate();
    check_images(images, bcfg);

    FitResult result;
    result.checkpoint.config = bcfg;
    ParameterSet<float> params = model::init_parameters<float>(bcfg);
    if (cfg.max_epochs == 0) {
        result.checkpoint.params = std::move(params);
        result.checkpoint.metadata = {{"epochs", "0"}, {"best_epoch", "0"}};
        return result;
    }

    const Split split = split_dataset(images.size(), cfg.val_fraction, cfg.seed);
    result.train_indices = split.train;
    result.val_indices = split.val;
    result.initial_train_loss = mean_loss(params, bcfg, cfg.loss, images, split.train, cfg.threads);
    result.initial_val_loss = mean_loss(params, bcfg, cfg.loss, images, split.val, cfg.threads);
    require_finite(result.initial_train_loss, "initial training loss");
    require_finite(result.initial_val_loss, "initial validation loss");

    ValidationMonitor monitor(cfg.schedule(), result.initial_val_loss);
    AdamState<float> adam(params);
    ParameterSet<float> best = params;
    std::size_t best_epoch = 0;
    double lr = cfg.lr0;
    std::size_t epochs_run = 0;

    const std::size_t wave = std::max<std::size_t>(1, cfg.threads);
    std::vector<SampleGrad> slots(wave);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        std::vector<std::size_t> order = split.train;
        Rng rng(derive_seed(cfg.seed, epoch));
        rng.shuffle(std::span(order));

        double train_total = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            params.zero_grad();
            for (std::size_t w0 = begin; w0 < end; w0 += wave) {
                const std::size_t count = std::min(wave, end - w0);
                run_indexed(count, cfg.threads,
                            [&](std::size_t i) { sample_gradient(params, bcfg, cfg.loss, images[order[w0 + i]], slots[i]); });
                for (std::size_t i = 0; i < count; ++i) {
                    require_finite(slots[i].loss, "training loss of image " + std::to_string(order[w0 + i]));
                    train_total += slots[i].loss;
                    for (std::size_t k = 0; k < params.size(); ++k) {
                        auto dst = params[k].grad.data();
                        auto src = slots[i].grads[k].data();
                        for (std::size_t j = 0; j < dst.size(); ++j) {
                            dst[j] += src[j];
                        }
                    }
                }
            }
            const float inv = 1.0f / static_cast<float>(end - begin);
            for (auto& e : params) {
                for (auto& g : e.grad.data()) {
                    g *= inv;
                }
            }
            if (cfg.lambda > 0.0) {
                ad::Tape<float> tape;
                ad::backward(nn::recurrent_l2_penalty(tape, params, static_cast<float>(cfg.lambda)), params);
            }
            adam.step(params, lr);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_total / static_cast<double>(order.size());
        rec.val_loss = mean_loss(params, bcfg, cfg.loss, images, split.val, cfg.threads);
        rec.lr = lr;
        require_finite(rec.val_loss, "validation loss at epoch " + std::to_string(epoch));
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back(rec);
        epochs_run = epoch;
        if (on_epoch) {
            on_epoch(rec);
        }

        const auto outcome = monitor.observe(rec.val_loss);
        if (outcome.improved) {
            best = params;
            best_epoch = epoch;
        }
        if (outcome.decay) {
            lr *= cfg.decay_factor;
        }
        if (outcome.stop) {
            break;
        }
    }

    result.checkpoint.params = std::move(best);
    result.checkpoint.metadata = {
        {"epochs", std::to_string(epochs_run)},
        {"best_epoch", std::to_string(best_epoch)},
        {"best_val_loss", io::format_double(monitor.best())},
        {"initial_val_loss", io::format_double(result.initial_val_loss)},
        {"loss", std::string(to_string(cfg.loss))},
        {"final_lr", io::format_double(lr)},
    };
    return result;
}

std::string epoch_log_csv(const std::vector<EpochRecord>& log) {
    std::string out = "epoch,train_loss,val_loss,lr,seconds\n";
    for (const auto& r : log) {
        char secs[32];
        std::snprintf(secs, sizeof secs, "%.3f", r.seconds);
        out += std::to_string(r.epoch) + "," + io::format_double(r.train_loss) + "," + io::format_double(r.val_loss) +
               "," + io::format_double(r.lr) + "," + secs + "\n";
    }
    return out;
}

}  // namespace bear::train

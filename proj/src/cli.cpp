#include "bear/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>

#include "bear/checkpoint.hpp"
#include "bear/errors.hpp"
#include "bear/image.hpp"
#include "bear/kv_config.hpp"
#include "bear/latent.hpp"
#include "bear/model.hpp"
#include "bear/synth.hpp"
#include "bear/tensor_io.hpp"
#include "bear/trainer.hpp"

namespace bear::cli {

namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Written beside the primary output as `<out>.manifest`.
void write_manifest(const fs::path& out, const io::KeyValues& kv) {
    fs::path p = out;
    p += ".manifest";
    io::write_text_atomic(p, kv.to_text());
}

struct TrainArgs {
    std::string data, config, out, log;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    io::KeyValues kv = io::KeyValues::load(a.config);
    model::BearConfig bcfg = model::BearConfig::read(kv);
    train::TrainConfig tcfg = train::TrainConfig::read(kv);
    kv.check_consumed();
    if (a.seed) {
        bcfg.seed = *a.seed;
        tcfg.seed = *a.seed;
    }
    if (a.threads) {
        tcfg.threads = *a.threads;
    }
    bcfg.validate();
    tcfg.validate();
    if (bcfg.d != 3) {
        throw ConfigError("d must be 3 for RGB input, got " + std::to_string(bcfg.d));
    }

    const io::LoadedImages loaded = io::load_image_dir(a.data, bcfg.n);
    for (const auto& s : loaded.skipped) {
        err << "warning: skipped " << s << '\n';
    }
    if (loaded.images.size() < 2) {
        throw DataError("need at least 2 readable images in " + a.data + ", found " +
                        std::to_string(loaded.images.size()));
    }

    const fs::path log_path = a.log.empty() ? fs::path(a.out + ".epochs.csv") : fs::path(a.log);
    const train::FitResult result = train::fit(loaded.images, tcfg, bcfg, [&](const train::EpochRecord& r) {
        out << "epoch " << r.epoch << " train " << io::format_double(r.train_loss) << " val "
            << io::format_double(r.val_loss) << " lr " << io::format_double(r.lr) << '\n';
    });
    train::save_checkpoint(a.out, result.checkpoint);
    io::write_text_atomic(log_path, train::epoch_log_csv(result.log));

    io::KeyValues m;
    m.set("command", "train");
    m.set("config", a.config);
    m.set("seed", std::to_string(tcfg.seed));
    m.set("data", a.data);
    m.set("out", a.out);
    m.set("log", log_path.string());
    m.set("config_hash", hex64(bcfg.hash()));
    m.set("images", std::to_string(loaded.images.size()));
    m.set("skipped", std::to_string(loaded.skipped.size()));
    write_manifest(a.out, m);

    out << "trained on " << loaded.images.size() << " images (" << loaded.skipped.size() << " skipped), "
        << result.log.size() << " epochs, checkpoint " << a.out << '\n';
    return ok;
}

int cmd_encode(const std::string& ckpt_path, const std::string& dir, const std::string& out_path, std::ostream& out,
               std::ostream& err) {
    const train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
    const model::BearConfig& cfg = ckpt.config;
    if (cfg.d != 3) {
        throw ShapeError("checkpoint expects depth " + std::to_string(cfg.d) + ", images have 3 channels");
    }
    const io::LoadedImages loaded = io::load_image_dir(dir, cfg.n);
    for (const auto& s : loaded.skipped) {
        err << "warning: skipped " << s << '\n';
    }
    if (loaded.images.empty()) {
        throw DataError("no readable images in " + dir);
    }
    latent::EmbeddingSet e;
    for (std::size_t i = 0; i < loaded.images.size(); ++i) {
        const Tensor<float> z = model::encode(ckpt.params, cfg, loaded.images[i]);
        const auto zs = z.data();
        std::vector<double> row(zs.begin(), zs.end());
        e.add(loaded.ids[i], row);
    }
    io::write_text_atomic(out_path, latent::embeddings_csv(e));

    io::KeyValues m;
    m.set("command", "encode");
    m.set("ckpt", ckpt_path);
    m.set("data", dir);
    m.set("out", out_path);
    m.set("config_hash", hex64(cfg.hash()));
    m.set("images", std::to_string(e.rows()));
    m.set("skipped", std::to_string(loaded.skipped.size()));
    write_manifest(out_path, m);
    out << "encoded " << e.rows() << " images into " << e.dim() << "-dimensional vectors\n";
    return ok;
}

int cmd_reconstruct(const std::string& ckpt_path, const std::string& in_path, const std::string& out_path,
                    std::ostream& out) {
    const train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
    const model::BearConfig& cfg = ckpt.config;
    if (cfg.d != 3) {
        throw ShapeError("checkpoint expects depth " + std::to_string(cfg.d) + ", images have 3 channels");
    }
    const io::RgbImage img = io::read_ppm(in_path);
    const Tensor<float> x = io::to_unit_tensor(img, cfg.n);
    const io::RgbImage rec = io::from_unit_tensor(model::reconstruct(ckpt.params, cfg, x));
    io::write_ppm(out_path, rec);

    io::KeyValues m;
    m.set("command", "reconstruct");
    m.set("ckpt", ckpt_path);
    m.set("in", in_path);
    m.set("out", out_path);
    m.set("config_hash", hex64(cfg.hash()));
    write_manifest(out_path, m);
    out << "wrote " << rec.width << "x" << rec.height << " reconstruction to " << out_path << '\n';
    return ok;
}

latent::EmbeddingSet read_embeddings(const std::string& path) {
    const auto bytes = io::read_file(path);
    return latent::parse_embeddings_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

struct ClusterArgs {
    std::string embeddings, out, curve;
    std::optional<std::size_t> k;
    std::vector<std::size_t> elbow;
    std::size_t rank = 0;
    std::uint64_t seed = 1;
    std::size_t restarts = 5;
    std::size_t max_iter = 300;
};

int cmd_cluster(const ClusterArgs& a, std::ostream& out) {
    latent::EmbeddingSet e = read_embeddings(a.embeddings);
    if (a.rank > 0) {
        e = latent::reduce(e, a.rank);
    }
    io::KeyValues m;
    m.set("command", "cluster");
    m.set("embeddings", a.embeddings);
    m.set("out", a.out);
    m.set("seed", std::to_string(a.seed));
    m.set("restarts", std::to_string(a.restarts));
    m.set("rank", std::to_string(a.rank));

    std::size_t k = 0;
    if (a.k) {
        k = *a.k;
    } else {
        if (a.elbow[0] == 0 || a.elbow[0] >= a.elbow[1]) {
            throw ConfigError("--elbow needs 1 <= KMIN < KMAX");
        }
        const latent::ElbowCurve curve = latent::elbow(e, a.elbow[0], a.elbow[1], a.seed, a.restarts);
        const fs::path curve_path = a.curve.empty() ? fs::path(a.out + ".elbow.csv") : fs::path(a.curve);
        io::write_text_atomic(curve_path, latent::elbow_csv(curve));
        k = curve.selected_k;
        m.set("elbow", std::to_string(a.elbow[0]) + "," + std::to_string(a.elbow[1]));
        m.set("curve", curve_path.string());
        out << "elbow selected k=" << k << (curve.has_elbow ? "" : " (no distinct elbow)") << '\n';
        for (std::size_t bad : curve.non_monotone) {
            out << "warning: inertia rose at k=" << bad << '\n';
        }
    }
    latent::KMeansOptions opt;
    opt.k = k;
    opt.seed = a.seed;
    opt.restarts = a.restarts;
    opt.max_iter = a.max_iter;
    const latent::KMeansResult r = latent::kmeans(e, opt);
    io::write_text_atomic(a.out, latent::clusters_csv(e, r));
    m.set("k", std::to_string(k));
    write_manifest(a.out, m);
    out << "k=" << k << " inertia " << io::format_double(r.inertia) << " iterations " << r.iterations
        << (r.converged ? "" : " (not converged)") << '\n';
    return ok;
}

int cmd_project(const std::string& embeddings, const std::string& out_path, std::ostream& out) {
    const latent::EmbeddingSet e = read_embeddings(embeddings);
    const latent::Projection p = latent::project2d(e);
    io::write_text_atomic(out_path, latent::projection_csv(e, p));
    io::KeyValues m;
    m.set("command", "project");
    m.set("embeddings", embeddings);
    m.set("out", out_path);
    write_manifest(out_path, m);
    out << "projected " << e.rows() << " vectors; explained variance " << io::format_double(p.eigenvalues[0])
        << ", " << io::format_double(p.eigenvalues[1]) << '\n';
    return ok;
}

void print_counts(const model::ParamCount& c, std::ostream& out) {
    out << "stage counts\n";
    for (const auto& [name, n] : c.per_stage) {
        out << "  " << name << ' ' << n << '\n';
    }
    out << "block counts\n";
    for (const auto& [name, n] : c.per_block) {
        out << "  " << name << ' ' << n << '\n';
    }
    out << "total " << c.total << '\n';
}

int cmd_info(const std::string& ckpt_path, const std::string& config_path, std::ostream& out) {
    if (!ckpt_path.empty()) {
        const train::Checkpoint ckpt = train::load_checkpoint(ckpt_path);
        out << ckpt.config.architecture_text();
        out << "config_hash=" << hex64(ckpt.config.hash()) << '\n';
        for (const auto& [k, v] : ckpt.metadata) {
            out << k << '=' << v << '\n';
        }
        print_counts(model::param_count(ckpt.params), out);
        return ok;
    }
    io::KeyValues kv = io::KeyValues::load(config_path);
    const model::BearConfig cfg = model::BearConfig::read(kv);
    train::TrainConfig::read(kv);
    kv.check_consumed();
    cfg.validate();
    ParameterSet<float> shapes;
    for (const auto& [name, shape] : model::parameter_layout(cfg)) {
        shapes.add(name, Tensor<float>(shape));
    }
    out << cfg.architecture_text();
    out << "config_hash=" << hex64(cfg.hash()) << '\n';
    print_counts(model::param_count(shapes), out);
    return ok;
}

int cmd_synth(const std::string& dir, std::size_t count, std::size_t size, std::uint64_t seed, std::ostream& out) {
    if (count == 0 || size == 0) {
        throw ConfigError("--count and --size must be positive");
    }
    fs::create_directories(dir);
    const auto images = synth::scenes(count, size, seed);
    for (std::size_t i = 0; i < images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "scene_%05zu.ppm", i);
        io::write_ppm(fs::path(dir) / name, images[i]);
    }
    out << "wrote " << count << " scenes to " << dir << '\n';
    return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Residual ConvLSTM autoencoder: training, encoding and latent analysis", "bear"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Fit a model on a directory of PPM images");
    train->add_option("--data", train_args.data, "Image directory")->required();
    train->add_option("--config", train_args.config, "key=value config file")->required();
    train->add_option("--out", train_args.out, "Checkpoint path")->required();
    train->add_option("--log", train_args.log, "Epoch CSV (default <out>.epochs.csv)");
    train->add_option("--seed", train_args.seed, "Overrides the config seed");
    train->add_option("--threads", train_args.threads, "Worker threads; does not change results");

    std::string ckpt, data, in, out_path;
    auto* encode = app.add_subcommand("encode", "Write one latent vector per image");
    encode->add_option("--ckpt", ckpt)->required();
    encode->add_option("--data", data)->required();
    encode->add_option("--out", out_path)->required();

    auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct one PPM image");
    reconstruct->add_option("--ckpt", ckpt)->required();
    reconstruct->add_option("--in", in)->required();
    reconstruct->add_option("--out", out_path)->required();

    ClusterArgs cluster_args;
    auto* cluster = app.add_subcommand("cluster", "k-means over an embeddings CSV");
    cluster->add_option("--embeddings", cluster_args.embeddings)->required();
    auto* k_opt = cluster->add_option("--k", cluster_args.k, "Number of clusters");
    auto* elbow_opt = cluster->add_option("--elbow", cluster_args.elbow, "KMIN KMAX scan")->expected(2);
    k_opt->excludes(elbow_opt);
    cluster->add_option("--rank", cluster_args.rank, "Cluster in the top-R PCA subspace (0 = raw)");
    cluster->add_option("--seed", cluster_args.seed);
    cluster->add_option("--restarts", cluster_args.restarts);
    cluster->add_option("--max-iter", cluster_args.max_iter);
    cluster->add_option("--curve", cluster_args.curve, "Elbow CSV (default <out>.elbow.csv)");
    cluster->add_option("--out", cluster_args.out, "Assignments CSV")->required();

    std::string embeddings;
    auto* project = app.add_subcommand("project", "2D PCA projection with norms");
    project->add_option("--embeddings", embeddings)->required();
    project->add_option("--out", out_path)->required();

    std::string config;
    auto* info = app.add_subcommand("info", "Parameter counts per stage");
    auto* info_ckpt = info->add_option("--ckpt", ckpt);
    auto* info_config = info->add_option("--config", config);
    info_ckpt->excludes(info_config);

    std::string synth_dir;
    std::size_t count = 200, size = 32;
    std::uint64_t seed = 1;
    auto* synth_cmd = app.add_subcommand("synth", "Write seeded synthetic PPM scenes");
    synth_cmd->add_option("--out", synth_dir)->required();
    synth_cmd->add_option("--count", count);
    synth_cmd->add_option("--size", size);
    synth_cmd->add_option("--seed", seed);

    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (cluster->parsed() && !cluster_args.k && cluster_args.elbow.empty()) {
            throw CLI::ValidationError("cluster needs --k or --elbow");
        }
        if (info->parsed() && ckpt.empty() && config.empty()) {
            throw CLI::ValidationError("info needs --ckpt or --config");
        }
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    }

    try {
        if (train->parsed()) return cmd_train(train_args, out, err);
        if (encode->parsed()) return cmd_encode(ckpt, data, out_path, out, err);
        if (reconstruct->parsed()) return cmd_reconstruct(ckpt, in, out_path, out);
        if (cluster->parsed()) return cmd_cluster(cluster_args, out);
        if (project->parsed()) return cmd_project(embeddings, out_path, out);
        if (info->parsed()) return cmd_info(ckpt, config, out);
        return cmd_synth(synth_dir, count, size, seed, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << '\n';
        return numeric;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return ExitCode::data;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return ExitCode::data;
    }
}

}  // namespace bear::cli

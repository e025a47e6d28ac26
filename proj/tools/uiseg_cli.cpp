#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "uiseg/datagen.hpp"
#include "uiseg/experiments.hpp"
#include "uiseg/growcut.hpp"
#include "uiseg/io.hpp"
#include "uiseg/net/checkpoint.hpp"
#include "uiseg/net/train.hpp"
#include "uiseg/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uiseg;

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    return json::parse(in);
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream out(p);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("cannot write " + p.string());
}

// Accepts [{"p", "label"}] or [{"x", "y", "label"}].
SeedSet read_seeds(const fs::path& p, Shape2D shape) {
    const json j = read_json(p);
    const json& arr = j.is_object() ? j.at("seeds") : j;
    SeedSet seeds;
    for (const auto& e : arr) {
        const auto label = e.at("label").get<std::string>();
        if (label != "fg" && label != "bg") throw InvalidArgument("seed label must be fg or bg");
        std::int64_t pos = 0;
        if (e.contains("p")) {
            pos = e["p"].get<std::int64_t>();
        } else {
            const int x = e.at("x").get<int>();
            const int y = e.at("y").get<int>();
            if (x < 0 || y < 0 || x >= shape.width || y >= shape.height) {
                throw BoundsError("seed (" + std::to_string(x) + ", " + std::to_string(y) + ") outside the image");
            }
            pos = std::int64_t(y) * shape.width + x;
        }
        seeds.insert({pos, label == "fg" ? Label::foreground : Label::background});
    }
    return seeds;
}

struct NetOptions {
    int depth = 3;
    int filters = 8;
    int input = 140;
};

struct TrainOptions {
    int epochs = 30;
    int batch = 10;
    double lr = 1e-4;
    double momentum = 0.9;
    int b = 10;
    double n = 0.05;
    std::uint64_t seed = 7;
    int augment = 1;
    std::string reduction = "sum";
    double max_grad_norm = 1000.0;
};

void add_net_options(CLI::App* app, NetOptions& o) {
    app->add_option("--depth", o.depth, "network depth (pooling steps)");
    app->add_option("--filters", o.filters, "filters at the first level");
    app->add_option("--input", o.input, "input tile side");
}

void add_train_options(CLI::App* app, TrainOptions& o) {
    app->add_option("--epochs", o.epochs);
    app->add_option("--batch", o.batch);
    app->add_option("--lr", o.lr);
    app->add_option("--momentum", o.momentum);
    app->add_option("--b", o.b, "contour width of the initial band seeds");
    app->add_option("--n", o.n, "user-model seed fraction");
    app->add_option("--seed", o.seed);
    app->add_option("--augment", o.augment, "elastic augmentation factor (1 = off)");
    app->add_option("--loss-reduction", o.reduction)->check(CLI::IsMember({"sum", "mean"}));
    app->add_option("--max-grad-norm", o.max_grad_norm, "gradient norm clip, 0 = off");
}

net::NetworkConfig network_config(const NetOptions& o) {
    net::NetworkConfig c;
    c.depth = o.depth;
    c.base_filters = o.filters;
    c.input_side = o.input;
    c.validate();
    return c;
}

net::TrainConfig train_config(const TrainOptions& o, bool verbose) {
    net::TrainConfig c;
    c.epochs = o.epochs;
    c.batch_size = o.batch;
    c.learning_rate = o.lr;
    c.momentum = o.momentum;
    c.user_model.b = o.b;
    c.user_model.n = o.n;
    c.rng_seed = o.seed;
    c.reduction = o.reduction == "mean" ? net::LossReduction::mean : net::LossReduction::sum;
    c.max_grad_norm = o.max_grad_norm;
    c.verbose = verbose;
    return c;
}

void check_geometry(const datagen::LoadedDataset& data, const net::NetworkConfig& nc) {
    const auto& g = data.config.geometry;
    if (g.side() != nc.input_side || g.core != nc.output_side()) {
        throw GeometryError("dataset tiles are " + std::to_string(g.side()) + " -> " + std::to_string(g.core) +
                            " but the network maps " + std::to_string(nc.input_side) + " -> " +
                            std::to_string(nc.output_side()));
    }
}

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> v;
    std::stringstream ss(s);
    std::string t;
    while (std::getline(ss, t, ',')) v.push_back(std::stoi(t));
    return v;
}

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string t;
    while (std::getline(ss, t, ',')) v.push_back(std::stod(t));
    return v;
}

void save_models(const experiments::ExperimentOutput& out, const fs::path& dir, const json& cfg) {
    fs::create_directories(dir / "models");
    for (const auto& m : out.models) {
        net::save(m.model, dir / "models" / (m.name + ".uisn"), {{"experiment", cfg}, {"name", m.name}});
        if (!m.history.empty()) net::write_history_csv(dir / "models" / (m.name + "_history.csv"), m.history);
    }
}

service::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interactive lesion segmentation with a seed-channel U-net"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "progress output on stderr");

    // datagen
    auto* datagen_cmd = app.add_subcommand("datagen", "generate the synthetic lesion dataset");
    fs::path spec_path;
    fs::path data_out = "data";
    datagen::DatagenConfig dcfg;
    datagen_cmd->add_option("--spec", spec_path, "lesion spec JSON")->check(CLI::ExistingFile);
    datagen_cmd->add_option("--volumes", dcfg.volumes);
    datagen_cmd->add_option("--core", dcfg.geometry.core);
    datagen_cmd->add_option("--pad", dcfg.geometry.pad);
    datagen_cmd->add_option("--seed", dcfg.seed);
    datagen_cmd->add_option("--out", data_out);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a UI-net");
    fs::path manifest;
    fs::path ckpt_out = "ckpt";
    std::string mode = "static";
    NetOptions net_opts;
    TrainOptions train_opts;
    train_cmd->add_option("--data", manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--mode", mode)->check(CLI::IsMember({"static", "interactive"}));
    train_cmd->add_option("--out", ckpt_out);
    add_net_options(train_cmd, net_opts);
    add_train_options(train_cmd, train_opts);

    // growcut
    auto* growcut_cmd = app.add_subcommand("growcut", "segment an image with GrowCut");
    fs::path gc_image, gc_seeds, gc_out;
    int gc_iters = 0;
    int gc_threads = 1;
    growcut_cmd->add_option("--image", gc_image)->required()->check(CLI::ExistingFile);
    growcut_cmd->add_option("--seeds", gc_seeds)->required()->check(CLI::ExistingFile);
    growcut_cmd->add_option("--out", gc_out)->required();
    growcut_cmd->add_option("--max-iters", gc_iters, "0 = 2 (width + height)");
    growcut_cmd->add_option("--threads", gc_threads);

    // experiments
    auto* exp_cmd = app.add_subcommand("experiments", "run the experiments or plot their results");
    exp_cmd->require_subcommand(1);
    auto* run_cmd = exp_cmd->add_subcommand("run", "train and evaluate one experiment");
    std::string which;
    fs::path exp_out = "results";
    std::string b_values = "5,10,15";
    std::string n_values = "0.05,0.3,0.9";
    int iterations = 5;
    fs::path static_ckpt;
    NetOptions exp_net;
    TrainOptions exp_train;
    run_cmd->add_option("--which", which)->required()->check(CLI::IsMember({"contour", "random", "interactive"}));
    run_cmd->add_option("--data", manifest)->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--out", exp_out);
    run_cmd->add_option("--b-values", b_values, "contour widths for --which contour");
    run_cmd->add_option("--n-values", n_values, "seed fractions for --which random");
    run_cmd->add_option("--iterations", iterations, "interactive evaluation steps");
    run_cmd->add_option("--static-checkpoint", static_ckpt, "reuse a static model for --which interactive")
        ->check(CLI::ExistingFile);
    add_net_options(run_cmd, exp_net);
    add_train_options(run_cmd, exp_train);
    auto* plot_cmd = exp_cmd->add_subcommand("plot", "render box plots from emitted CSVs");
    fs::path plot_in = "results";
    fs::path plot_out = "figs";
    plot_cmd->add_option("--in", plot_in)->check(CLI::ExistingDirectory);
    plot_cmd->add_option("--out", plot_out);

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "HTTP session service");
    service::ServerConfig scfg;
    std::optional<fs::path> checkpoints;
    int ttl = 3600;
    int serve_threads = 1;
    serve_cmd->add_option("--host", scfg.host);
    serve_cmd->add_option("--port", scfg.port);
    serve_cmd->add_option("--checkpoints", checkpoints, "directory of *.uisn checkpoints");
    serve_cmd->add_option("--static", scfg.static_dir, "directory served at /");
    serve_cmd->add_option("--ttl", ttl, "idle session lifetime, seconds");
    serve_cmd->add_option("--growcut-threads", serve_threads);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*datagen_cmd) {
            if (!spec_path.empty()) dcfg.spec = read_json(spec_path).get<datagen::LesionSpec>();
            const auto path = datagen::write_dataset(dcfg, data_out);
            std::cout << path.string() << '\n';
        } else if (*train_cmd) {
            const auto data = datagen::load_dataset(manifest);
            const auto nc = network_config(net_opts);
            check_geometry(data, nc);
            auto tc = train_config(train_opts, verbose);
            tc.mode = net::train_mode_from_string(mode);
            tc.validate();
            net::TrainingSet set;
            set.train = experiments::augment(experiments::with_band_seeds(data.dataset.train, tc.user_model.b),
                                             augment::ElasticParams{4.0, 68.0, tc.rng_seed}, train_opts.augment);
            set.validation = experiments::with_band_seeds(data.dataset.validation, tc.user_model.b);
            Rng init(tc.rng_seed);
            net::UNet<float> model(nc, init);
            const auto history = tc.mode == net::TrainMode::interactive ? net::train_interactive(model, set, tc)
                                                                        : net::train_static(model, set, tc);
            fs::create_directories(ckpt_out);
            json meta = {{"train", tc}, {"data", fs::absolute(manifest).string()}, {"epochs_run", history.size()}};
            if (!history.empty()) meta["final_val_dice"] = history.back().val_dice;
            net::save(model, ckpt_out / "model.uisn", meta);
            net::write_history_csv(ckpt_out / "history.csv", history);
            std::cout << (ckpt_out / "model.uisn").string() << '\n';
        } else if (*growcut_cmd) {
            const Image2D image = io::decode_png_image(io::read_file(gc_image));
            const SeedSet seeds = read_seeds(gc_seeds, image.shape());
            const auto seg = growcut::segment(image, seeds, gc_iters, gc_threads);
            io::write_file(gc_out, io::encode_png(seg.mask));
            std::cout << "iterations=" << seg.iterations << " truncated=" << (seg.truncated ? "yes" : "no")
                      << " undecided=" << seg.undecided_pixels << '\n';
        } else if (*run_cmd) {
            const auto data = datagen::load_dataset(manifest);
            experiments::ExperimentConfig ec;
            ec.network = network_config(exp_net);
            check_geometry(data, ec.network);
            ec.train = train_config(exp_train, verbose);
            ec.augmentation_factor = exp_train.augment;
            ec.elastic.rng_seed = exp_train.seed;
            ec.iterations = iterations;
            ec.seed = exp_train.seed;
            if (verbose) ec.log = [](const std::string& m) { std::clog << m << '\n'; };
            const json cfg_json = ec;
            experiments::ExperimentOutput out;
            if (which == "contour") {
                out = experiments::experiment_contour_width(parse_ints(b_values), data.dataset, ec);
            } else if (which == "random") {
                out = experiments::experiment_random_seeds(parse_doubles(n_values), data.dataset, ec);
            } else {
                std::optional<net::UNet<float>> static_model;
                if (!static_ckpt.empty()) static_model = net::load(static_ckpt, ec.network).model();
                out = experiments::experiment_interactive(data.dataset, ec, static_model);
            }
            const fs::path dir = exp_out / which;
            experiments::emit_boxplot_data(out.results, dir);
            save_models(out, dir, cfg_json);
            write_json(dir / "config.json", cfg_json);
            if (!out.comparison.empty()) write_json(dir / "comparison.json", out.comparison);
            std::cout << (dir / "boxplot_summary.csv").string() << '\n';
        } else if (*plot_cmd) {
            fs::create_directories(plot_out);
            std::vector<std::pair<fs::path, std::string>> inputs;
            if (fs::exists(plot_in / "boxplot_raw.csv")) inputs.emplace_back(plot_in / "boxplot_raw.csv", "results");
            for (const auto& e : fs::directory_iterator(plot_in)) {
                if (e.is_directory() && fs::exists(e.path() / "boxplot_raw.csv")) {
                    inputs.emplace_back(e.path() / "boxplot_raw.csv", e.path().filename().string());
                }
            }
            if (inputs.empty()) throw IoError("no boxplot_raw.csv under " + plot_in.string());
            std::sort(inputs.begin(), inputs.end());
            for (const auto& [csv, name] : inputs) {
                const fs::path svg = plot_out / (name + ".svg");
                experiments::render_boxplot_svg(csv, svg, name);
                std::cout << svg.string() << '\n';
            }
        } else if (*serve_cmd) {
            service::SessionStore store{std::chrono::seconds(ttl)};
            service::register_engines(store, checkpoints, serve_threads);
            service::Server server(store, scfg);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::clog << "listening on " << scfg.host << ':' << scfg.port << '\n';
            if (!server.listen()) throw IoError("cannot bind " + scfg.host + ":" + std::to_string(scfg.port));
            g_server = nullptr;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

#include "uiseg/net/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

namespace uiseg::net {

const char* to_string(TrainMode m) { return m == TrainMode::interactive ? "interactive" : "static"; }

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "static") return TrainMode::static_seeds;
    if (s == "interactive") return TrainMode::interactive;
    throw InvalidArgument("unknown training mode '" + s + "' (expected static|interactive)");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
    if (!(max_grad_norm >= 0.0)) throw InvalidArgument("max gradient norm must be >= 0");
    if (mode == TrainMode::interactive) user_model.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"learning_rate", c.learning_rate},
         {"momentum", c.momentum},
         {"mode", to_string(c.mode)},
         {"loss_reduction", c.reduction == LossReduction::sum ? "sum" : "mean"},
         {"max_grad_norm", c.max_grad_norm},
         {"user_model", {{"b", c.user_model.b}, {"n", c.user_model.n}, {"rng_seed", c.user_model.rng_seed}}},
         {"rng_seed", c.rng_seed}};
}

void write_history_csv(const std::filesystem::path& path, const TrainingHistory& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << "epoch,train_loss,val_loss,val_dice,mean_seeds\n";
    out.precision(9);
    for (const auto& r : history) {
        out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_dice << ',' << r.mean_seeds << '\n';
    }
}

LabelMask gt_on_tile(const LabelMask& gt, Shape2D tile) {
    return embed_center(gt, tile.width, tile.height, std::uint8_t{0});
}

LabelMask prediction_on_tile(const LabelMask& prediction, const LabelMask& gt_tile) {
    LabelMask out = gt_tile;
    const int off_x = (gt_tile.width() - prediction.width()) / 2;
    const int off_y = (gt_tile.height() - prediction.height()) / 2;
    for (int y = 0; y < prediction.height(); ++y) {
        for (int x = 0; x < prediction.width(); ++x) out(x + off_x, y + off_y) = prediction(x, y);
    }
    return out;
}

LabelMask segment(const UNet<float>& model, const Image2D& image, const SeedSet& seeds) {
    return predict_mask(forward(model, image, rasterize_seeds(seeds, image.shape())));
}

Evaluation evaluate(const UNet<float>& model, const std::vector<TrainingSample>& samples) {
    Evaluation e;
    if (samples.empty()) return e;
    for (const auto& s : samples) {
        const Probabilities p = forward(model, s.image, rasterize_seeds(s.seeds, s.image.shape()));
        e.loss += loss(p, s.gt);
        e.dice += dice(predict_mask(p), s.gt);
    }
    e.loss /= double(samples.size());
    e.dice /= double(samples.size());
    return e;
}

namespace {

void check_geometry(const UNet<float>& model, const TrainingSet& data) {
    const int in = model.input_side();
    const int out = model.output_side();
    auto check = [&](const std::vector<TrainingSample>& v, const char* which) {
        for (const auto& s : v) {
            if (s.image.width() != in || s.image.height() != in || s.gt.width() != out || s.gt.height() != out) {
                throw GeometryError(std::string(which) + " sample geometry (" + to_string(s.image.shape()) + " -> " +
                                    to_string(s.gt.shape()) + ") does not match the network (" + std::to_string(in) +
                                    " -> " + std::to_string(out) + ")");
            }
        }
    };
    check(data.train, "training");
    check(data.validation, "validation");
    if (data.train.empty()) throw InvalidArgument("training set is empty");
}

// One pass over the training samples in shuffled mini-batches.
double run_epoch(UNet<float>& model, const std::vector<TrainingSample>& samples, const TrainConfig& cfg, int epoch,
                 std::vector<float>& velocity) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = Rng::stream(cfg.rng_seed, std::uint64_t(epoch));
    shuffle_rng.shuffle(order);

    const std::size_t output_pixels = std::size_t(model.output_side()) * std::size_t(model.output_side());
    const double pixel_scale = cfg.reduction == LossReduction::sum ? double(output_pixels) : 1.0;
    AlignedVector<float> grad(model.parameter_count());
    double total_loss = 0.0;
    UNet<float>::Cache cache;
    Tensor<float> dlogits;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
        const std::size_t stop = std::min(order.size(), start + std::size_t(cfg.batch_size));
        const double scale = pixel_scale / double(stop - start);
        std::fill(grad.begin(), grad.end(), 0.0f);
        for (std::size_t k = start; k < stop; ++k) {
            const TrainingSample& s = samples[order[k]];
            const Tensor<float> logits =
                model.forward(make_input<float>(s.image, rasterize_seeds(s.seeds, s.image.shape())), &cache);
            total_loss += softmax_cross_entropy(logits, s.gt, &dlogits, scale);
            model.backward(cache, dlogits, grad);
        }
        float clip = 1.0f;
        if (cfg.max_grad_norm > 0.0) {
            double sq = 0.0;
            for (float g : grad) sq += double(g) * g;
            const double norm = std::sqrt(sq);
            if (norm > cfg.max_grad_norm) clip = float(cfg.max_grad_norm / norm);
        }
        auto params = model.parameters();
        const auto lr = float(cfg.learning_rate) * clip;
        const auto mu = float(cfg.momentum);
        for (std::size_t i = 0; i < params.size(); ++i) {
            velocity[i] = mu * velocity[i] - lr * grad[i];
            params[i] += velocity[i];
        }
    }
    return total_loss / double(samples.size());
}

double mean_seed_count(const std::vector<TrainingSample>& samples) {
    double total = 0.0;
    for (const auto& s : samples) total += double(s.seeds.size());
    return samples.empty() ? 0.0 : total / double(samples.size());
}

void report(const TrainConfig& cfg, const EpochRecord& r) {
    if (!cfg.verbose) return;
    std::clog << "epoch " << r.epoch << "/" << cfg.epochs << " train_loss=" << r.train_loss << " val_loss=" << r.val_loss
              << " val_dice=" << r.val_dice << " mean_seeds=" << r.mean_seeds << '\n';
}

}  // namespace

TrainingHistory train_static(UNet<float>& model, const TrainingSet& data, const TrainConfig& cfg,
                             const EpochCallback& on_epoch) {
    cfg.validate();
    check_geometry(model, data);
    std::vector<float> velocity(model.parameter_count(), 0.0f);
    TrainingHistory history;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochRecord r;
        r.epoch = epoch;
        r.mean_seeds = mean_seed_count(data.train);
        r.train_loss = run_epoch(model, data.train, cfg, epoch, velocity);
        const Evaluation v = evaluate(model, data.validation);
        r.val_loss = v.loss;
        r.val_dice = v.dice;
        history.push_back(r);
        report(cfg, r);
        if (on_epoch) on_epoch(r);
    }
    return history;
}

TrainingHistory train_interactive(UNet<float>& model, TrainingSet data, const TrainConfig& cfg,
                                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (cfg.mode != TrainMode::interactive) throw InvalidArgument("train_interactive requires interactive mode");
    check_geometry(model, data);
    std::vector<float> velocity(model.parameter_count(), 0.0f);
    std::vector<user_model::InteractionState> states(data.train.size());
    for (std::size_t i = 0; i < data.train.size(); ++i) states[i].seeds = data.train[i].seeds;

    TrainingHistory history;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochRecord r;
        r.epoch = epoch;
        if (epoch > 1) {
            double errors = 0.0;
            double dice_sum = 0.0;
            for (std::size_t i = 0; i < data.train.size(); ++i) {
                TrainingSample& s = data.train[i];
                const LabelMask gt_tile = gt_on_tile(s.gt, s.image.shape());
                const LabelMask prediction = segment(model, s.image, states[i].seeds);
                Rng rng = Rng::stream(Rng::mix(cfg.user_model.rng_seed) ^ std::uint64_t(epoch), i);
                states[i] = user_model::advance(states[i], gt_tile, prediction_on_tile(prediction, gt_tile),
                                                cfg.user_model, rng);
                s.seeds = states[i].seeds;
                errors += double(states[i].history.back().error_count);
                dice_sum += dice(prediction, s.gt);
            }
            r.mean_errors = errors / double(data.train.size());
            r.train_dice = dice_sum / double(data.train.size());
        }
        r.mean_seeds = mean_seed_count(data.train);
        r.train_loss = run_epoch(model, data.train, cfg, epoch, velocity);
        const Evaluation v = evaluate(model, data.validation);
        r.val_loss = v.loss;
        r.val_dice = v.dice;
        history.push_back(r);
        report(cfg, r);
        if (on_epoch) on_epoch(r);
    }
    return history;
}

}  // namespace uiseg::net

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uiseg/core.hpp"
#include "uiseg/net/unet.hpp"
#include "uiseg/user_model.hpp"

namespace uiseg::net {

enum class TrainMode { static_seeds, interactive };

[[nodiscard]] const char* to_string(TrainMode m);
[[nodiscard]] TrainMode train_mode_from_string(const std::string& s);

// How the per-pixel cross-entropy of one sample enters the training objective.
// `mean` averages over output pixels; `sum` adds them up, which keeps the step
// size independent of the output geometry at a fixed learning rate.
enum class LossReduction { mean, sum };

struct TrainConfig {
    int batch_size = 10;
    int epochs = 30;
    double learning_rate = 1e-4;
    double momentum = 0.9;
    TrainMode mode = TrainMode::static_seeds;
    LossReduction reduction = LossReduction::sum;
    double max_grad_norm = 1000.0;  // batch gradient rescaled to this global L2 norm when above it; 0 = off
    user_model::Config user_model;
    std::uint64_t rng_seed = 7;
    bool verbose = false;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);

// One training or validation example. The image and seeds cover the input
// tile; the gt covers the centered output region.
struct TrainingSample {
    Image2D image;
    LabelMask gt;
    SeedSet seeds;  // positions in input-tile coordinates
};

struct TrainingSet {
    std::vector<TrainingSample> train;
    std::vector<TrainingSample> validation;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_dice = 0.0;
    double train_dice = 0.0;   // mean Dice of the predictions the user model reacted to (interactive)
    double mean_seeds = 0.0;   // mean |S^t| over training samples during the epoch
    double mean_errors = 0.0;  // mean |E^t| (interactive only)
};

using TrainingHistory = std::vector<EpochRecord>;

// CSV columns: epoch,train_loss,val_loss,val_dice,mean_seeds
void write_history_csv(const std::filesystem::path& path, const TrainingHistory& history);

// Ground truth of the output region, placed on the input tile (background
// outside the output region).
[[nodiscard]] LabelMask gt_on_tile(const LabelMask& gt, Shape2D tile);

// Network prediction placed on the input tile. Outside the output region the
// tile copy of the gt is used, so the user model only reacts to errors inside
// the predicted region.
[[nodiscard]] LabelMask prediction_on_tile(const LabelMask& prediction, const LabelMask& gt_tile);

// Segmentation of one sample given its current seeds.
[[nodiscard]] LabelMask segment(const UNet<float>& model, const Image2D& image, const SeedSet& seeds);

// Mean loss and Dice of the model on fixed-seed samples.
struct Evaluation {
    double loss = 0.0;
    double dice = 0.0;
};
[[nodiscard]] Evaluation evaluate(const UNet<float>& model, const std::vector<TrainingSample>& samples);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Seeds stay fixed across epochs. Momentum SGD over shuffled mini-batches.
TrainingHistory train_static(UNet<float>& model, const TrainingSet& data, const TrainConfig& cfg,
                             const EpochCallback& on_epoch = {});

// Before every epoch after the first, each training sample's seeds are
// advanced by the user model from the current network's prediction.
// Validation seeds stay at their initial values.
TrainingHistory train_interactive(UNet<float>& model, TrainingSet data, const TrainConfig& cfg,
                                  const EpochCallback& on_epoch = {});

}  // namespace uiseg::net

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uiseg/augmentation.hpp"
#include "uiseg/core.hpp"
#include "uiseg/datagen.hpp"
#include "uiseg/net/train.hpp"
#include "uiseg/net/unet.hpp"
#include "uiseg/user_model.hpp"

namespace uiseg::experiments {

struct Summary {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double mean = 0.0;
};

// Quartiles by linear interpolation between order statistics.
[[nodiscard]] Summary summarize(std::vector<double> values);
[[nodiscard]] double quantile(std::vector<double> values, double q);

// Dice distribution of one (method, setting, iteration) condition.
struct ExperimentResult {
    std::string method;   // uinet-static, uinet-interactive, growcut
    std::string setting;  // e.g. "b=10", "n=0.3"
    int iteration = 1;
    std::vector<double> dice;  // one entry per test sample
    bool degenerate = false;   // condition could not be run (see note)
    std::string note;

    [[nodiscard]] std::string condition() const { return method + ":" + setting; }
    [[nodiscard]] Summary summary() const { return summarize(dice); }
};

struct ExperimentConfig {
    net::NetworkConfig network;
    net::TrainConfig train;
    int augmentation_factor = 1;  // 1 = no elastic copies
    augment::ElasticParams elastic;
    int iterations = 5;           // interactive evaluation steps
    std::uint64_t seed = 7;       // random initial seeds of experiment 2
    int growcut_threads = 1;
    std::function<void(const std::string&)> log;  // progress messages, optional

    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);

struct TrainedModel {
    std::string name;
    net::UNet<float> model;
    net::TrainingHistory history;
};

struct ExperimentOutput {
    std::vector<ExperimentResult> results;
    std::vector<TrainedModel> models;
    nlohmann::json comparison = nlohmann::json::object();
};

// Training and evaluation samples with band seeds S^0_b / random seeds of
// fraction n. Seeds live on the input tile.
[[nodiscard]] std::vector<net::TrainingSample> with_band_seeds(const std::vector<datagen::Sample>& samples, int b);
[[nodiscard]] std::vector<net::TrainingSample> with_random_seeds(const std::vector<datagen::Sample>& samples, double n,
                                                                 std::uint64_t seed);

// Elastic copies of every sample (seeds deformed with the image).
[[nodiscard]] std::vector<net::TrainingSample> augment(const std::vector<net::TrainingSample>& samples,
                                                       const augment::ElasticParams& params, int factor);

// Maps (input tile, tile seeds) to a mask of the output region.
using Segmenter = std::function<LabelMask(const Image2D&, const SeedSet&)>;

[[nodiscard]] Segmenter uinet_segmenter(const net::UNet<float>& model);

// GrowCut on the whole tile, cropped to the output region. When only one label
// is seeded the result is that label everywhere.
[[nodiscard]] Segmenter growcut_segmenter(int output_side, int threads = 1);

struct InteractiveEvaluation {
    std::vector<ExperimentResult> per_iteration;  // iterations 1..k
    std::vector<SeedSet> initial_seeds;           // seeds used at iteration 1
    std::vector<std::vector<user_model::IterationRecord>> histories;
};

// Iteration 1 uses each sample's own seeds; later iterations add seeds from the
// user model reacting to the previous prediction of the same segmenter.
[[nodiscard]] InteractiveEvaluation evaluate_interactive(const Segmenter& segmenter,
                                                         const std::vector<net::TrainingSample>& test_set,
                                                         const user_model::Config& user_cfg, int iterations,
                                                         const std::string& method, const std::string& setting);

// Experiment 1: one static model per contour width b, tested with S^0_b.
[[nodiscard]] ExperimentOutput experiment_contour_width(const std::vector<int>& b_values,
                                                        const datagen::Dataset& data, const ExperimentConfig& cfg);

// Experiment 2: one static model per random seed fraction n.
[[nodiscard]] ExperimentOutput experiment_random_seeds(const std::vector<double>& n_values,
                                                       const datagen::Dataset& data, const ExperimentConfig& cfg);

// Experiment 3: interactive UI-net, static UI-net and GrowCut, all starting
// from S^0_{b} and evaluated interactively. A static model trained with the
// same band can be passed in to skip retraining it.
[[nodiscard]] ExperimentOutput experiment_interactive(const datagen::Dataset& data, const ExperimentConfig& cfg,
                                                      const std::optional<net::UNet<float>>& static_model = {});

// Fraction of samples whose predicted mask changes when the seed channel is
// replaced by all zeros.
[[nodiscard]] double seed_channel_sensitivity(const net::UNet<float>& model,
                                              const std::vector<net::TrainingSample>& samples);

// Writes boxplot_raw.csv (condition,iteration,sample_id,dice) and
// boxplot_summary.csv (condition,iteration,median,q1,q3,mean) into `dir`.
// Degenerate conditions are skipped. Throws InvalidArgument when there is
// nothing to write and IoError on write failure.
void emit_boxplot_data(const std::vector<ExperimentResult>& results, const std::filesystem::path& dir);

// Renders one box plot per condition/iteration from a boxplot_raw.csv file.
void render_boxplot_svg(const std::filesystem::path& raw_csv, const std::filesystem::path& svg,
                        const std::string& title);

}  // namespace uiseg::experiments

#include "uiseg/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "uiseg/growcut.hpp"

namespace uiseg::experiments {

namespace {

constexpr std::uint64_t kTrainSeedTag = 0x7472;
constexpr std::uint64_t kValidationSeedTag = 0x76616c;
constexpr std::uint64_t kTestSeedTag = 0x74657374;

void log(const ExperimentConfig& cfg, const std::string& msg) {
    if (cfg.log) cfg.log(msg);
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", v);
    return buf;
}

std::string format_setting(const char* key, double v) {
    std::ostringstream s;
    s << key << '=' << v;
    return s.str();
}

TrainedModel train_model(const std::string& name, const net::TrainingSet& data, net::TrainConfig tc,
                         const ExperimentConfig& cfg) {
    log(cfg, "training " + name + " on " + std::to_string(data.train.size()) + " samples");
    Rng init(tc.rng_seed);
    net::UNet<float> model(cfg.network, init);
    net::TrainingHistory history = tc.mode == net::TrainMode::interactive
                                       ? net::train_interactive(model, data, tc)
                                       : net::train_static(model, data, tc);
    return TrainedModel{name, std::move(model), std::move(history)};
}

net::TrainingSet band_training_set(const datagen::Dataset& data, const ExperimentConfig& cfg, int b) {
    net::TrainingSet set;
    set.train = augment(with_band_seeds(data.train, b), cfg.elastic, cfg.augmentation_factor);
    set.validation = with_band_seeds(data.validation, b);
    return set;
}

ExperimentResult single_shot(const std::string& method, const std::string& setting, const Segmenter& seg,
                             const std::vector<net::TrainingSample>& test) {
    ExperimentResult r;
    r.method = method;
    r.setting = setting;
    r.iteration = 1;
    r.dice.reserve(test.size());
    for (const auto& s : test) r.dice.push_back(dice(seg(s.image, s.seeds), s.gt));
    return r;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double t = 0.0;
    for (double x : v) t += x;
    return t / double(v.size());
}

}  // namespace

double quantile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = q * double(values.size() - 1);
    const auto lo = std::size_t(std::floor(pos));
    const auto hi = std::min(values.size() - 1, lo + 1);
    const double frac = pos - double(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

Summary summarize(std::vector<double> values) {
    Summary s;
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    s.median = quantile(values, 0.5);
    s.q1 = quantile(values, 0.25);
    s.q3 = quantile(values, 0.75);
    s.mean = mean_of(values);
    return s;
}

void ExperimentConfig::validate() const {
    network.validate();
    train.validate();
    elastic.validate();
    if (augmentation_factor < 1) throw InvalidArgument("augmentation factor must be >= 1");
    if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
    if (growcut_threads < 1) throw InvalidArgument("growcut threads must be >= 1");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = {{"network", c.network},
         {"train", c.train},
         {"augmentation_factor", c.augmentation_factor},
         {"elastic", {{"sigma", c.elastic.sigma}, {"alpha", c.elastic.alpha}, {"rng_seed", c.elastic.rng_seed}}},
         {"iterations", c.iterations},
         {"seed", c.seed}};
}

std::vector<net::TrainingSample> with_band_seeds(const std::vector<datagen::Sample>& samples, int b) {
    std::vector<net::TrainingSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        const LabelMask gt_tile = net::gt_on_tile(s.gt, s.image.shape());
        out.push_back({s.image, s.gt, user_model::initial_seeds_band(gt_tile, b).seeds});
    }
    return out;
}

std::vector<net::TrainingSample> with_random_seeds(const std::vector<datagen::Sample>& samples, double n,
                                                   std::uint64_t seed) {
    std::vector<net::TrainingSample> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        Rng rng = Rng::stream(seed, i);
        const LabelMask gt_tile = net::gt_on_tile(s.gt, s.image.shape());
        out.push_back({s.image, s.gt, user_model::initial_seeds_random(gt_tile, n, rng)});
    }
    return out;
}

std::vector<net::TrainingSample> augment(const std::vector<net::TrainingSample>& samples,
                                         const augment::ElasticParams& params, int factor) {
    if (factor == 1) return samples;
    std::vector<augment::Triplet> triplets;
    triplets.reserve(samples.size());
    for (const auto& s : samples) triplets.push_back({s.image, s.gt, rasterize_seeds(s.seeds, s.image.shape())});
    const auto deformed = augment::augment_dataset(triplets, params, factor);
    std::vector<net::TrainingSample> out;
    out.reserve(deformed.size());
    for (const auto& t : deformed) out.push_back({t.image, t.gt, seeds_from_channel(*t.seeds)});
    return out;
}

Segmenter uinet_segmenter(const net::UNet<float>& model) {
    return [&model](const Image2D& image, const SeedSet& seeds) { return net::segment(model, image, seeds); };
}

Segmenter growcut_segmenter(int output_side, int threads) {
    return [output_side, threads](const Image2D& image, const SeedSet& seeds) {
        const bool has_fg = seeds.count(Label::foreground) > 0;
        const bool has_bg = seeds.count(Label::background) > 0;
        if (!has_fg || !has_bg) {
            return LabelMask(output_side, output_side, std::uint8_t(has_fg ? 1 : 0));
        }
        const auto seg = growcut::segment(image, seeds, 0, threads);
        return crop_center(seg.mask, output_side, output_side);
    };
}

InteractiveEvaluation evaluate_interactive(const Segmenter& segmenter, const std::vector<net::TrainingSample>& test_set,
                                           const user_model::Config& user_cfg, int iterations,
                                           const std::string& method, const std::string& setting) {
    if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
    user_cfg.validate();
    InteractiveEvaluation ev;
    ev.per_iteration.resize(std::size_t(iterations));
    for (int k = 0; k < iterations; ++k) {
        auto& r = ev.per_iteration[std::size_t(k)];
        r.method = method;
        r.setting = setting;
        r.iteration = k + 1;
        r.dice.reserve(test_set.size());
    }
    ev.initial_seeds.reserve(test_set.size());
    ev.histories.reserve(test_set.size());
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const auto& s = test_set[i];
        const LabelMask gt_tile = net::gt_on_tile(s.gt, s.image.shape());
        user_model::InteractionState state;
        state.seeds = s.seeds;
        ev.initial_seeds.push_back(s.seeds);
        for (int k = 1; k <= iterations; ++k) {
            const LabelMask prediction = segmenter(s.image, state.seeds);
            ev.per_iteration[std::size_t(k - 1)].dice.push_back(dice(prediction, s.gt));
            if (k == iterations) break;
            Rng rng = Rng::stream(Rng::mix(user_cfg.rng_seed) ^ std::uint64_t(k), i);
            state = user_model::advance(state, gt_tile, net::prediction_on_tile(prediction, gt_tile), user_cfg, rng);
        }
        ev.histories.push_back(std::move(state.history));
    }
    return ev;
}

ExperimentOutput experiment_contour_width(const std::vector<int>& b_values, const datagen::Dataset& data,
                                          const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentOutput out;
    for (int b : b_values) {
        const std::string setting = "b=" + std::to_string(b);
        std::size_t empty = 0;
        std::size_t total = 0;
        for (const auto* split : {&data.train, &data.validation, &data.test}) {
            for (const auto& s : *split) {
                ++total;
                if (user_model::initial_seeds_band(net::gt_on_tile(s.gt, s.image.shape()), b).foreground_empty) ++empty;
            }
        }
        if (empty > 0) {
            log(cfg, setting + ": " + std::to_string(empty) + " of " + std::to_string(total) +
                         " samples keep only background seeds");
        }
        net::TrainConfig tc = cfg.train;
        tc.mode = net::TrainMode::static_seeds;
        tc.user_model.b = b;
        TrainedModel tm = train_model("static_" + setting, band_training_set(data, cfg, b), tc, cfg);
        auto r = single_shot("uinet-static", setting, uinet_segmenter(tm.model), with_band_seeds(data.test, b));
        if (empty > 0) r.note = std::to_string(empty) + " of " + std::to_string(total) + " samples without eroded foreground";
        log(cfg, setting + ": median dice " + format_number(r.summary().median));
        out.results.push_back(std::move(r));
        out.models.push_back(std::move(tm));
    }
    return out;
}

ExperimentOutput experiment_random_seeds(const std::vector<double>& n_values, const datagen::Dataset& data,
                                         const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentOutput out;
    for (double n : n_values) {
        if (!(n > 0.0 && n < 1.0)) throw InvalidArgument("seed fraction n must be in (0, 1)");
        const std::string setting = format_setting("n", n);
        net::TrainingSet set;
        set.train = augment(with_random_seeds(data.train, n, Rng::mix(cfg.seed) ^ kTrainSeedTag), cfg.elastic,
                            cfg.augmentation_factor);
        set.validation = with_random_seeds(data.validation, n, Rng::mix(cfg.seed) ^ kValidationSeedTag);
        net::TrainConfig tc = cfg.train;
        tc.mode = net::TrainMode::static_seeds;
        TrainedModel tm = train_model("random_" + setting, set, tc, cfg);
        auto r = single_shot("uinet-static", setting, uinet_segmenter(tm.model),
                             with_random_seeds(data.test, n, Rng::mix(cfg.seed) ^ kTestSeedTag));
        log(cfg, setting + ": median dice " + format_number(r.summary().median));
        out.results.push_back(std::move(r));
        out.models.push_back(std::move(tm));
    }
    return out;
}

ExperimentOutput experiment_interactive(const datagen::Dataset& data, const ExperimentConfig& cfg,
                                        const std::optional<net::UNet<float>>& static_model) {
    cfg.validate();
    const int b = cfg.train.user_model.b;
    const std::string setting = "b=" + std::to_string(b);
    const net::TrainingSet set = band_training_set(data, cfg, b);

    ExperimentOutput out;
    net::TrainConfig tc = cfg.train;
    tc.mode = net::TrainMode::interactive;
    out.models.push_back(train_model("interactive_" + setting, set, tc, cfg));
    if (static_model) {
        if (!(static_model->config() == cfg.network)) {
            throw GeometryError("static model configuration does not match the experiment network");
        }
        out.models.push_back(TrainedModel{"static_" + setting, *static_model, {}});
    } else {
        tc.mode = net::TrainMode::static_seeds;
        out.models.push_back(train_model("static_" + setting, set, tc, cfg));
    }

    const auto test = with_band_seeds(data.test, b);
    struct Method {
        std::string name;
        Segmenter segmenter;
    };
    const std::vector<Method> methods{
        {"uinet-interactive", uinet_segmenter(out.models[0].model)},
        {"uinet-static", uinet_segmenter(out.models[1].model)},
        {"growcut", growcut_segmenter(out.models[0].model.output_side(), cfg.growcut_threads)},
    };

    std::vector<InteractiveEvaluation> evals;
    for (const auto& m : methods) {
        log(cfg, "evaluating " + m.name + " for " + std::to_string(cfg.iterations) + " iterations");
        evals.push_back(evaluate_interactive(m.segmenter, test, cfg.train.user_model, cfg.iterations, m.name, setting));
        for (const auto& r : evals.back().per_iteration) out.results.push_back(r);
    }

    bool identical = true;
    for (const auto& e : evals) identical = identical && e.initial_seeds == evals.front().initial_seeds;

    nlohmann::json methods_json = nlohmann::json::object();
    for (const auto& e : evals) {
        nlohmann::json per_iter = nlohmann::json::array();
        for (const auto& r : e.per_iteration) {
            const Summary s = r.summary();
            per_iter.push_back({{"iteration", r.iteration}, {"median", s.median}, {"q1", s.q1}, {"q3", s.q3},
                                {"mean", s.mean}});
        }
        methods_json[e.per_iteration.front().method] = per_iter;
    }
    auto mean_at = [&](std::size_t m, std::size_t k) { return mean_of(evals[m].per_iteration[k].dice); };
    auto median_at = [&](std::size_t m, std::size_t k) { return summarize(evals[m].per_iteration[k].dice).median; };
    const std::size_t last = std::size_t(cfg.iterations - 1);
    double avg_ui = 0.0;
    double avg_gc = 0.0;
    for (std::size_t k = 0; k <= last; ++k) {
        avg_ui += mean_at(0, k);
        avg_gc += mean_at(2, k);
    }
    avg_ui /= double(last + 1);
    avg_gc /= double(last + 1);
    auto relative = [](double a, double base) { return base > 0.0 ? (a - base) / base : 0.0; };
    out.comparison = {
        {"setting", setting},
        {"test_samples", test.size()},
        {"iterations", cfg.iterations},
        {"identical_initial_seeds", identical},
        {"methods", methods_json},
        {"uinet_vs_growcut",
         {{"final_iteration_mean_delta", mean_at(0, last) - mean_at(2, last)},
          {"final_iteration_median_delta", median_at(0, last) - median_at(2, last)},
          {"final_iteration_relative_mean_delta", relative(mean_at(0, last), mean_at(2, last))},
          {"all_iterations_mean_delta", avg_ui - avg_gc},
          {"all_iterations_relative_mean_delta", relative(avg_ui, avg_gc)},
          {"reported_reference_delta", 0.06}}},
    };
    return out;
}

double seed_channel_sensitivity(const net::UNet<float>& model, const std::vector<net::TrainingSample>& samples) {
    if (samples.empty()) return 0.0;
    std::size_t changed = 0;
    for (const auto& s : samples) {
        const SeedChannel zero(s.image.shape(), std::int8_t{0});
        const LabelMask without = net::predict_mask(net::forward(model, s.image, zero));
        const LabelMask with = net::predict_mask(net::forward(model, s.image, rasterize_seeds(s.seeds, s.image.shape())));
        if (!(without == with)) ++changed;
    }
    return double(changed) / double(samples.size());
}

void emit_boxplot_data(const std::vector<ExperimentResult>& results, const std::filesystem::path& dir) {
    std::size_t rows = 0;
    for (const auto& r : results) {
        if (r.degenerate) continue;
        for (double d : r.dice) {
            if (!(d >= 0.0 && d <= 1.0)) throw InvalidArgument("dice value outside [0, 1] in " + r.condition());
        }
        rows += r.dice.size();
    }
    if (rows == 0) throw InvalidArgument("no experiment results to emit");
    std::filesystem::create_directories(dir);
    std::ofstream raw(dir / "boxplot_raw.csv");
    std::ofstream summary(dir / "boxplot_summary.csv");
    if (!raw || !summary) throw IoError("cannot write box plot data into " + dir.string());
    raw << "condition,iteration,sample_id,dice\n";
    summary << "condition,iteration,median,q1,q3,mean\n";
    for (const auto& r : results) {
        if (r.degenerate) continue;
        for (std::size_t i = 0; i < r.dice.size(); ++i) {
            raw << r.condition() << ',' << r.iteration << ',' << i << ',' << format_number(r.dice[i]) << '\n';
        }
        const Summary s = r.summary();
        summary << r.condition() << ',' << r.iteration << ',' << format_number(s.median) << ','
                << format_number(s.q1) << ',' << format_number(s.q3) << ',' << format_number(s.mean) << '\n';
    }
    raw.flush();
    summary.flush();
    if (!raw || !summary) throw IoError("write failed in " + dir.string());
}

void render_boxplot_svg(const std::filesystem::path& raw_csv, const std::filesystem::path& svg,
                        const std::string& title) {
    std::ifstream in(raw_csv);
    if (!in) throw IoError("cannot open " + raw_csv.string());
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> groups;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
        if (cols.size() != 4) throw IoError("malformed row in " + raw_csv.string() + ": " + line);
        const std::string key = cols[0] + " #" + cols[1];
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(std::stod(cols[3]));
    }
    if (order.empty()) throw InvalidArgument(raw_csv.string() + " has no rows");

    const double box_w = 28.0;
    const double gap = 22.0;
    const double left = 60.0;
    const double top = 40.0;
    const double plot_h = 320.0;
    const double width = left + double(order.size()) * (box_w + gap) + 20.0;
    const double height = top + plot_h + 190.0;
    auto y_of = [&](double v) { return top + (1.0 - v) * plot_h; };

    std::ofstream out(svg);
    if (!out) throw IoError("cannot write " + svg.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
    for (int t = 0; t <= 10; t += 2) {
        const double v = t / 10.0;
        out << "<line x1=\"" << left - 5 << "\" x2=\"" << width - 10 << "\" y1=\"" << y_of(v) << "\" y2=\"" << y_of(v)
            << "\" stroke=\"#ddd\"/>\n";
        out << "<text x=\"" << left - 10 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
    }
    out << "<text x=\"15\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 15 " << top + plot_h / 2
        << ")\" text-anchor=\"middle\">Dice</text>\n";
    for (std::size_t i = 0; i < order.size(); ++i) {
        auto v = groups[order[i]];
        std::sort(v.begin(), v.end());
        const double q1 = quantile(v, 0.25);
        const double med = quantile(v, 0.5);
        const double q3 = quantile(v, 0.75);
        const double iqr = q3 - q1;
        double lo = q1;
        double hi = q3;
        for (double d : v) {
            if (d >= q1 - 1.5 * iqr) lo = std::min(lo, d);
            if (d <= q3 + 1.5 * iqr) hi = std::max(hi, d);
        }
        const double x = left + double(i) * (box_w + gap) + gap / 2;
        const double cx = x + box_w / 2;
        out << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << y_of(hi) << "\" y2=\"" << y_of(lo)
            << "\" stroke=\"black\"/>\n";
        out << "<rect x=\"" << x << "\" y=\"" << y_of(q3) << "\" width=\"" << box_w << "\" height=\""
            << std::max(0.5, y_of(q1) - y_of(q3)) << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
        out << "<line x1=\"" << x << "\" x2=\"" << x + box_w << "\" y1=\"" << y_of(med) << "\" y2=\"" << y_of(med)
            << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
        for (double d : v) {
            if (d < lo || d > hi) {
                out << "<circle cx=\"" << cx << "\" cy=\"" << y_of(d) << "\" r=\"1.5\" fill=\"none\" stroke=\"#555\"/>\n";
            }
        }
        const double ly = top + plot_h + 10;
        out << "<text x=\"" << cx << "\" y=\"" << ly << "\" transform=\"rotate(60 " << cx << ' ' << ly << ")\">"
            << order[i] << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("write failed for " + svg.string());
}

}  // namespace uiseg::experiments

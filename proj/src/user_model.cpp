#include "uiseg/user_model.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

namespace uiseg {

namespace {

// One pass of the 3x3 box as two separable 1x3 passes. `take_all` selects
// erosion (all neighbours set) versus dilation (any neighbour set).
LabelMask box_pass(const LabelMask& in, bool take_all, std::uint8_t pad) {
    const int w = in.width();
    const int h = in.height();
    auto at = [&](const LabelMask& g, int x, int y) -> std::uint8_t {
        return g.in_bounds(x, y) ? g(x, y) : pad;
    };
    LabelMask rows(in.shape());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool l = at(in, x - 1, y), c = at(in, x, y), r = at(in, x + 1, y);
            rows(x, y) = take_all ? (l && c && r) : (l || c || r);
        }
    }
    LabelMask out(in.shape());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool u = at(rows, x, y - 1), c = rows(x, y), d = at(rows, x, y + 1);
            out(x, y) = take_all ? (u && c && d) : (u || c || d);
        }
    }
    return out;
}

LabelMask morph(const LabelMask& mask, int iterations, Border border, bool erosion) {
    if (iterations < 0) throw InvalidArgument("morphology iterations must be >= 0");
    // A row pass over padded cells reads the pad; the column pass then sees the
    // row result of out-of-range rows, which equals the pad itself.
    const std::uint8_t pad = border == Border::foreground ? 1 : 0;
    LabelMask out = mask;
    for (int i = 0; i < iterations; ++i) out = box_pass(out, erosion, pad);
    return out;
}

}  // namespace

LabelMask erode(const LabelMask& mask, int iterations, Border border) {
    return morph(mask, iterations, border, true);
}

LabelMask dilate(const LabelMask& mask, int iterations, Border border) {
    return morph(mask, iterations, border, false);
}

}  // namespace uiseg

namespace uiseg::user_model {

void Config::validate() const {
    if (b < 0) throw InvalidArgument("user model b must be >= 0");
    if (!(n > 0.0 && n < 1.0)) throw InvalidArgument("user model n must satisfy 0 < n < 1");
}

BandSeeds initial_seeds_band(const LabelMask& gt, int b) {
    if (b < 0) throw InvalidArgument("band width b must be >= 0");
    const LabelMask inner = erode(gt, b);
    const LabelMask outer = dilate(gt, b);
    std::vector<Seed> seeds;
    bool any_fg = false;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        if (inner[p]) {
            seeds.push_back({std::int64_t(p), Label::foreground});
            any_fg = true;
        } else if (!outer[p]) {
            seeds.push_back({std::int64_t(p), Label::background});
        }
    }
    return {SeedSet(std::move(seeds)), !any_fg};
}

SeedSet initial_seeds_random(const LabelMask& gt, double n, Rng& rng) {
    if (!(n > 0.0 && n < 1.0)) throw InvalidArgument("n must satisfy 0 < n < 1");
    const std::size_t count = update_size(gt.size(), n);
    std::vector<Seed> seeds;
    seeds.reserve(count);
    for (std::size_t p : rng.sample_indices(gt.size(), count)) {
        seeds.push_back({std::int64_t(p), label_of(gt[p])});
    }
    return SeedSet(std::move(seeds));
}

SeedSet error_set(const LabelMask& gt, const LabelMask& prediction, const SeedSet& seeds) {
    require_same_shape(gt, prediction, "error_set");
    std::vector<Seed> errors;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        if ((gt[p] != 0) != (prediction[p] != 0) && !seeds.contains(std::int64_t(p))) {
            errors.push_back({std::int64_t(p), label_of(gt[p])});
        }
    }
    return SeedSet(std::move(errors));
}

std::size_t update_size(std::size_t error_count, double n) {
    // ceil in floating point can overshoot by one when count * n is an exact
    // integer that is not exactly representable (e.g. 100 * 0.05); snap first.
    const double raw = double(error_count) * n;
    const double snapped = std::round(raw);
    const double value = std::abs(raw - snapped) < 1e-9 * std::max(1.0, raw) ? snapped : std::ceil(raw);
    return std::min(error_count, std::size_t(value));
}

SeedSet sample_update(const SeedSet& errors, double n, Rng& rng) {
    if (!(n > 0.0 && n < 1.0)) throw InvalidArgument("n must satisfy 0 < n < 1");
    if (errors.empty()) return {};
    const auto& all = errors.seeds();
    std::vector<Seed> picked;
    for (std::size_t i : rng.sample_indices(all.size(), update_size(all.size(), n))) {
        picked.push_back(all[i]);
    }
    return SeedSet(std::move(picked));
}

InteractionState advance(const InteractionState& state, const LabelMask& gt, const LabelMask& prediction,
                         const Config& cfg, Rng& rng) {
    cfg.validate();
    const SeedSet errors = error_set(gt, prediction, state.seeds);
    InteractionState next = state;
    next.history.push_back({state.t, state.seeds.size(), errors.size(), dice(gt, prediction)});
    if (errors.empty()) {
        next.converged = true;
        return next;
    }
    next.seeds.merge(sample_update(errors, cfg.n, rng));
    next.t = state.t + 1;
    next.converged = false;
    return next;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<IterationRecord>& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << "t,seed_count,error_count,dice\n";
    for (const auto& r : history) {
        out << r.t << ',' << r.seed_count << ',' << r.error_count << ',' << r.dice << '\n';
    }
}

}  // namespace uiseg::user_model

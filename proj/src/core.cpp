#include "uiseg/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace uiseg {

Image2D::Image2D(Grid<float> values) : grid_(std::move(values)) {
    for (float v : grid_) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
            throw InvalidArgument("image value " + std::to_string(v) + " outside [0, 1]");
        }
    }
}

Image2D::Image2D(int width, int height, float fill) : Image2D(Grid<float>(width, height, fill)) {}

namespace {

auto lower_bound_pos(const std::vector<Seed>& seeds, std::int64_t p) {
    return std::lower_bound(seeds.begin(), seeds.end(), p,
                            [](const Seed& s, std::int64_t q) { return s.position < q; });
}

}  // namespace

SeedSet::SeedSet(std::vector<Seed> seeds) {
    std::sort(seeds.begin(), seeds.end(),
              [](const Seed& a, const Seed& b) { return a.position < b.position; });
    for (std::size_t i = 1; i < seeds.size(); ++i) {
        if (seeds[i].position == seeds[i - 1].position && seeds[i].label != seeds[i - 1].label) {
            throw SeedConflict("contradictory labels at position " +
                               std::to_string(seeds[i].position));
        }
    }
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
    seeds_ = std::move(seeds);
}

void SeedSet::insert(Seed s) {
    auto it = lower_bound_pos(seeds_, s.position);
    if (it != seeds_.end() && it->position == s.position) {
        if (it->label != s.label) {
            throw SeedConflict("position " + std::to_string(s.position) + " already seeded with the other label");
        }
        return;
    }
    seeds_.insert(it, s);
}

void SeedSet::merge(const SeedSet& other) {
    std::vector<Seed> out;
    out.reserve(seeds_.size() + other.seeds_.size());
    auto a = seeds_.begin();
    auto b = other.seeds_.begin();
    while (a != seeds_.end() || b != other.seeds_.end()) {
        if (b == other.seeds_.end() || (a != seeds_.end() && a->position < b->position)) {
            out.push_back(*a++);
        } else if (a == seeds_.end() || b->position < a->position) {
            out.push_back(*b++);
        } else {
            if (a->label != b->label) {
                throw SeedConflict("position " + std::to_string(a->position) + " already seeded with the other label");
            }
            out.push_back(*a++);
            ++b;
        }
    }
    seeds_ = std::move(out);
}

bool SeedSet::contains(std::int64_t position) const {
    auto it = lower_bound_pos(seeds_, position);
    return it != seeds_.end() && it->position == position;
}

std::optional<Label> SeedSet::label_at(std::int64_t position) const {
    auto it = lower_bound_pos(seeds_, position);
    if (it != seeds_.end() && it->position == position) return it->label;
    return std::nullopt;
}

std::size_t SeedSet::count(Label l) const {
    return std::size_t(std::count_if(seeds_.begin(), seeds_.end(),
                                     [l](const Seed& s) { return s.label == l; }));
}

bool SeedSet::is_superset_of(const SeedSet& other) const {
    return std::includes(seeds_.begin(), seeds_.end(), other.seeds_.begin(), other.seeds_.end(),
                         [](const Seed& a, const Seed& b) {
                             return a.position < b.position ||
                                    (a.position == b.position && a.label < b.label);
                         });
}

Image2D normalize_image(const Grid<float>& raw, double lo, double hi) {
    if (!(hi > lo)) {
        throw InvalidArgument("normalization range requires hi > lo (lo=" + std::to_string(lo) +
                              ", hi=" + std::to_string(hi) + ")");
    }
    Grid<float> out(raw.shape());
    const double scale = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = raw[i];
        if (!std::isfinite(v)) throw InvalidArgument("non-finite raw intensity");
        out[i] = float(std::clamp((v - lo) * scale, 0.0, 1.0));
    }
    return Image2D(std::move(out));
}

SeedChannel rasterize_seeds(const SeedSet& seeds, Shape2D shape) {
    SeedChannel channel(shape);
    const std::int64_t n = shape.size();
    for (const Seed& s : seeds) {
        if (s.position < 0 || s.position >= n) {
            throw BoundsError("seed position " + std::to_string(s.position) + " outside " +
                              to_string(shape));
        }
        channel[std::size_t(s.position)] = s.label == Label::foreground ? 1 : -1;
    }
    return channel;
}

SeedSet seeds_from_channel(const SeedChannel& channel) {
    std::vector<Seed> seeds;
    for (std::size_t p = 0; p < channel.size(); ++p) {
        if (channel[p] > 0) seeds.push_back({std::int64_t(p), Label::foreground});
        else if (channel[p] < 0) seeds.push_back({std::int64_t(p), Label::background});
    }
    return SeedSet(std::move(seeds));
}

SeedSet full_seed_set(const LabelMask& mask) {
    std::vector<Seed> seeds;
    seeds.reserve(mask.size());
    for (std::size_t p = 0; p < mask.size(); ++p) seeds.push_back({std::int64_t(p), label_of(mask[p])});
    return SeedSet(std::move(seeds));
}

LabelMask mask_from_full_seed_set(const SeedSet& seeds, Shape2D shape) {
    if (std::int64_t(seeds.size()) != shape.size()) {
        throw InvalidArgument("seed set does not cover every pixel of " + to_string(shape));
    }
    LabelMask mask(shape);
    for (const Seed& s : seeds) {
        if (s.position < 0 || s.position >= shape.size()) throw BoundsError("seed outside mask");
        mask[std::size_t(s.position)] = s.label == Label::foreground ? 1 : 0;
    }
    return mask;
}

LabelMask complement(const LabelMask& mask) {
    LabelMask out(mask.shape());
    for (std::size_t p = 0; p < mask.size(); ++p) out[p] = mask[p] ? 0 : 1;
    return out;
}

std::int64_t foreground_count(const LabelMask& mask) {
    return std::count_if(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; });
}

double dice(const LabelMask& a, const LabelMask& b) {
    require_same_shape(a, b, "dice");
    std::int64_t na = 0, nb = 0, both = 0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        const bool fa = a[p] != 0;
        const bool fb = b[p] != 0;
        na += fa;
        nb += fb;
        both += fa && fb;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * double(both) / double(na + nb);
}

}  // namespace uiseg

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uiseg/grid.hpp"

namespace uiseg {

enum class Label : std::uint8_t { background = 0, foreground = 1 };

[[nodiscard]] constexpr Label opposite(Label l) {
    return l == Label::foreground ? Label::background : Label::foreground;
}

// Gray-value image with every value in [0, 1].
class Image2D {
public:
    Image2D() = default;
    // Throws InvalidArgument if any value is outside [0, 1] or not finite.
    explicit Image2D(Grid<float> values);
    Image2D(int width, int height, float fill = 0.0f);

    [[nodiscard]] int width() const { return grid_.width(); }
    [[nodiscard]] int height() const { return grid_.height(); }
    [[nodiscard]] Shape2D shape() const { return grid_.shape(); }
    [[nodiscard]] std::size_t size() const { return grid_.size(); }
    [[nodiscard]] float operator()(int x, int y) const { return grid_(x, y); }
    [[nodiscard]] float operator[](std::size_t p) const { return grid_[p]; }
    [[nodiscard]] const Grid<float>& grid() const { return grid_; }
    [[nodiscard]] std::span<const float> values() const { return grid_.values(); }

    bool operator==(const Image2D&) const = default;

private:
    Grid<float> grid_;
};

using Volume3D = Volume<float>;
using LabelVolume = Volume<std::uint8_t>;

// Binary per-pixel labels: 1 = foreground, 0 = background.
using LabelMask = Grid<std::uint8_t>;

// Dense seed encoding: -1 background seed, 0 unseeded, +1 foreground seed.
using SeedChannel = Grid<std::int8_t>;

struct Seed {
    std::int64_t position = 0;
    Label label = Label::background;

    bool operator==(const Seed&) const = default;
};

// Set of (position, label) tuples, at most one label per position.
// Kept sorted by position so iteration order is deterministic.
class SeedSet {
public:
    SeedSet() = default;
    explicit SeedSet(std::vector<Seed> seeds);

    // Adds a seed. Re-adding an identical tuple is a no-op; a different label at
    // an already seeded position throws SeedConflict.
    void insert(Seed s);
    // Set union; throws SeedConflict on contradictory tuples.
    void merge(const SeedSet& other);

    [[nodiscard]] bool contains(std::int64_t position) const;
    [[nodiscard]] std::optional<Label> label_at(std::int64_t position) const;
    [[nodiscard]] std::size_t size() const { return seeds_.size(); }
    [[nodiscard]] bool empty() const { return seeds_.empty(); }
    [[nodiscard]] std::size_t count(Label l) const;
    [[nodiscard]] bool is_superset_of(const SeedSet& other) const;

    [[nodiscard]] const std::vector<Seed>& seeds() const { return seeds_; }
    auto begin() const { return seeds_.begin(); }
    auto end() const { return seeds_.end(); }

    bool operator==(const SeedSet&) const = default;

private:
    std::vector<Seed> seeds_;
};

// Affine map of raw intensities to [0, 1] with clamping. Throws InvalidArgument
// when hi <= lo or a value is not finite.
[[nodiscard]] Image2D normalize_image(const Grid<float>& raw, double lo, double hi);

// Rasterizes seeds into a SeedChannel. Throws BoundsError for positions outside
// the shape.
[[nodiscard]] SeedChannel rasterize_seeds(const SeedSet& seeds, Shape2D shape);

// Reads back the nonzero entries of a channel.
[[nodiscard]] SeedSet seeds_from_channel(const SeedChannel& channel);

// The full ground-truth tuple set G, one seed per pixel.
[[nodiscard]] SeedSet full_seed_set(const LabelMask& mask);

// Inverse of full_seed_set. Throws InvalidArgument unless every pixel is seeded.
[[nodiscard]] LabelMask mask_from_full_seed_set(const SeedSet& seeds, Shape2D shape);

[[nodiscard]] LabelMask complement(const LabelMask& mask);
[[nodiscard]] std::int64_t foreground_count(const LabelMask& mask);

// Sorensen-Dice overlap of the foreground sets. Two empty foregrounds give 1.
[[nodiscard]] double dice(const LabelMask& a, const LabelMask& b);

[[nodiscard]] inline Label label_of(std::uint8_t mask_value) {
    return mask_value != 0 ? Label::foreground : Label::background;
}

}  // namespace uiseg

#pragma once

#include <cstdint>
#include <vector>

#include "uiseg/core.hpp"

namespace uiseg::growcut {

enum class CellLabel : std::uint8_t { undecided = 0, foreground = 1, background = 2 };

// Automaton state: label and strength per pixel plus the intensities that
// modulate attacks.
struct CellGrid {
    Image2D image;
    Grid<CellLabel> labels;
    Grid<float> strength;
};

// Seeded cells start at strength 1 with their label, the rest at 0 undecided.
// Throws InsufficientSeeds unless both labels are present and BoundsError for
// out-of-range positions.
[[nodiscard]] CellGrid init(const Image2D& image, const SeedSet& seeds);

struct StepResult {
    CellGrid grid;
    std::int64_t changed = 0;
};

// One synchronous update. Pixel p is conquered by neighbour q when
// g(|c_q - c_p|) * theta_q > theta_p with g(x) = 1 - x (intensities in [0,1]).
// Among equally strong attackers the smallest (dy, dx) offset wins.
// `threads` > 1 splits rows across worker threads; output is identical.
[[nodiscard]] StepResult step(const CellGrid& grid, int threads = 1);

struct Segmentation {
    LabelMask mask;
    int iterations = 0;
    bool truncated = false;              // max_iters reached before a fixed point
    std::int64_t undecided_pixels = 0;   // mapped to background
};

// Default iteration cap: 2 * (width + height).
[[nodiscard]] int default_max_iters(Shape2D shape);

[[nodiscard]] Segmentation segment(const Image2D& image, const SeedSet& seeds, int max_iters = 0, int threads = 1);

}  // namespace uiseg::growcut

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "uiseg/core.hpp"
#include "uiseg/rng.hpp"

namespace uiseg::augment {

struct ElasticParams {
    double sigma = 4.0;   // Gaussian smoothing std, pixels
    double alpha = 68.0;  // displacement scale
    std::uint64_t rng_seed = 7;

    void validate() const;
};

struct DisplacementField {
    Grid<float> dx;
    Grid<float> dy;
};

// Gaussian smoothing with a truncated kernel of radius ceil(3 sigma); weights
// are renormalized where the kernel leaves the grid.
[[nodiscard]] Grid<float> gaussian_smooth(const Grid<float>& g, double sigma);

// alpha * smooth(uniform(-1, 1), sigma), independently per axis.
[[nodiscard]] DisplacementField displacement_field(Shape2D shape, const ElasticParams& params, Rng& rng);

// Backward warp: out(p) = bilinear sample of img at p + d(p), edge-clamped.
[[nodiscard]] Image2D warp_image(const Image2D& img, const DisplacementField& field);

// Nearest-neighbour backward warp; keeps the value set of the input.
[[nodiscard]] LabelMask warp_mask(const LabelMask& mask, const DisplacementField& field);
[[nodiscard]] SeedChannel warp_mask(const SeedChannel& channel, const DisplacementField& field);

// An (image, ground truth, optional seed channel) triplet. The image and seed
// channel span the full input tile; the ground truth covers the centered
// output region.
struct Triplet {
    Image2D image;
    LabelMask gt;
    std::optional<SeedChannel> seeds;
};

// Returns factor * |samples| entries: for each input, the original followed by
// factor - 1 deformed copies, each using one field shared by image, gt and seeds.
// Copy k of sample i draws its field from Rng::stream(rng_seed, i * factor + k).
[[nodiscard]] std::vector<Triplet> augment_dataset(const std::vector<Triplet>& samples, const ElasticParams& params,
                                                   int factor);

// Single deformed copy; used by augment_dataset.
[[nodiscard]] Triplet deform(const Triplet& t, const DisplacementField& field);

}  // namespace uiseg::augment

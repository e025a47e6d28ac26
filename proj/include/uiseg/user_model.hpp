#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "uiseg/core.hpp"
#include "uiseg/rng.hpp"

namespace uiseg {

// How pixels beyond the grid edge are treated by the 3x3 box element.
enum class Border { background, foreground };

// Binary morphology with the 8-connected 3x3 box, applied `iterations` times.
// Throws InvalidArgument for negative iterations.
[[nodiscard]] LabelMask erode(const LabelMask& mask, int iterations, Border border = Border::background);
[[nodiscard]] LabelMask dilate(const LabelMask& mask, int iterations, Border border = Border::background);

}  // namespace uiseg

namespace uiseg::user_model {

struct Config {
    int b = 10;           // erosion / dilation iterations for the initial band
    double n = 0.05;      // fraction of erroneous pixels turned into new seeds
    std::uint64_t rng_seed = 7;

    void validate() const;
};

struct IterationRecord {
    int t = 0;
    std::size_t seed_count = 0;
    std::size_t error_count = 0;
    double dice = 0.0;
};

// S^t together with its history. Seeds only grow across advance().
struct InteractionState {
    int t = 0;
    SeedSet seeds;
    std::vector<IterationRecord> history;
    bool converged = false;
};

// Dense region seeds: foreground at every pixel of the b-fold eroded ground
// truth, background at every pixel outside the b-fold dilated ground truth.
struct BandSeeds {
    SeedSet seeds;
    bool foreground_empty = false;  // erosion removed the whole foreground
};
[[nodiscard]] BandSeeds initial_seeds_band(const LabelMask& gt, int b);

// ceil(N * n) distinct positions drawn uniformly, labeled from gt.
[[nodiscard]] SeedSet initial_seeds_random(const LabelMask& gt, double n, Rng& rng);

// E = {(p, gt(p)) : prediction(p) != gt(p), p not seeded}.
[[nodiscard]] SeedSet error_set(const LabelMask& gt, const LabelMask& prediction, const SeedSet& seeds);

// Number of seeds drawn from an error set of the given size: ceil(size * n).
[[nodiscard]] std::size_t update_size(std::size_t error_count, double n);

// Uniform subset of size ceil(|errors| * n). An empty error set yields an
// empty result, which callers treat as convergence.
[[nodiscard]] SeedSet sample_update(const SeedSet& errors, double n, Rng& rng);

// S^{t+1} = S^t u U^t. Records (t, |S^t|, |E^t|, dice) for the prediction being
// corrected. When E^t is empty the seeds stay unchanged and `converged` is set.
[[nodiscard]] InteractionState advance(const InteractionState& state, const LabelMask& gt,
                                       const LabelMask& prediction, const Config& cfg, Rng& rng);

// CSV with columns t,seed_count,error_count,dice.
void write_history_csv(const std::filesystem::path& path, const std::vector<IterationRecord>& history);

}  // namespace uiseg::user_model

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "uiseg/core.hpp"
#include "uiseg/rng.hpp"

namespace uiseg::datagen {

// Synthetic lesion parameters. A lesion is a union of randomly rotated and
// perturbed superellipsoids with a soft (Gaussian-smoothed) boundary in the
// image, optionally with a darker necrotic core.
struct LesionSpec {
    int blob_count_min = 1;
    int blob_count_max = 3;
    double radius_min = 6.0;   // semi-axis range, voxels
    double radius_max = 16.0;
    double exponent_min = 1.6;  // superellipsoid exponent range (2 = ellipsoid)
    double exponent_max = 3.0;
    double blob_offset = 0.5;   // max blob-center offset as a fraction of the first blob's radius
    double center_jitter = 4.0;  // max lesion-center shift from the core center, voxels
    double irregularity = 0.15;  // relative amplitude of the radial perturbation
    double boundary_softness = 1.2;  // voxels
    std::array<double, 2> background_intensity{0.30, 0.45};
    std::array<double, 2> lesion_intensity{0.55, 0.75};
    std::array<double, 2> necrotic_intensity{0.20, 0.35};
    double necrotic_probability = 0.4;
    double necrotic_fraction = 0.45;  // core radius relative to the blob
    double overlap = 0.3;  // 0: lesion range as given, 1: lesion drawn from the background range
    double texture_amplitude = 0.06;  // low-frequency background variation
    double noise_std = 0.05;

    void validate() const;
};

void to_json(nlohmann::json& j, const LesionSpec& s);
void from_json(const nlohmann::json& j, LesionSpec& s);

// Volumes are cubes of side core + 2 * pad with the core cube centered.
struct Geometry {
    int core = 52;
    int pad = 44;

    [[nodiscard]] int side() const { return core + 2 * pad; }
};

struct GeneratedVolume {
    Volume3D image;
    LabelVolume gt;
};

// Throws InvalidArgument for a degenerate spec (no blobs, bad ranges).
[[nodiscard]] GeneratedVolume generate_volume(const LesionSpec& spec, const Geometry& geometry, Rng& rng);

struct Voi {
    Volume3D image;   // (core + 2 pad)^3
    LabelVolume gt;   // core^3
};

// Crops the (core + 2 pad)^3 VOI around `center`; the core cube spans
// [center - core/2, center - core/2 + core) per axis. Throws InvalidArgument if
// the crop leaves the volume and Error if any gt voxel lies outside the core.
[[nodiscard]] Voi extract_voi(const Volume3D& volume, const LabelVolume& gt, std::array<int, 3> center, int core,
                              int pad);

enum class Orientation { transverse = 0, coronal = 1, sagittal = 2 };
[[nodiscard]] const char* to_string(Orientation o);

struct Sample {
    Image2D image;  // input tile, (core + 2 pad)^2
    LabelMask gt;   // centered core^2 output region
    int volume_id = 0;
    Orientation orientation = Orientation::transverse;
    int plane_index = 0;
};

// One sample per core plane and orientation; planes with empty gt are dropped.
[[nodiscard]] std::vector<Sample> slice_voi(const Voi& voi, int volume_id);

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> validation;
    std::vector<Sample> test;
};

// Split ratios reported for the clinical data (6375 / 1875 / 1800 slices).
inline constexpr std::array<double, 3> kPaperSplitRatios{6375.0 / 10050.0, 1875.0 / 10050.0, 1800.0 / 10050.0};

// Assigns whole volumes to train / validation / test. Throws InvalidArgument
// when the ratios do not sum to 1 or there are fewer volumes than nonempty splits.
[[nodiscard]] Dataset split(const std::vector<Sample>& samples, std::array<double, 3> ratios, Rng& rng);

// Number of volumes per split for `volume_count` volumes (largest remainder,
// at least one volume for every split with a positive ratio).
[[nodiscard]] std::array<int, 3> split_counts(int volume_count, std::array<double, 3> ratios);

struct DatagenConfig {
    LesionSpec spec;
    Geometry geometry;
    int volumes = 12;
    std::uint64_t seed = 7;
    std::array<double, 3> ratios = kPaperSplitRatios;
};

// Writes vol_XXX.bin / gt_XXX.bin volumes, preview PNGs and manifest.json into
// `out_dir`; returns the manifest path.
std::filesystem::path write_dataset(const DatagenConfig& cfg, const std::filesystem::path& out_dir);

struct LoadedDataset {
    DatagenConfig config;
    Dataset dataset;
};

// Reads a manifest and re-slices its volumes into the recorded splits.
[[nodiscard]] LoadedDataset load_dataset(const std::filesystem::path& manifest);

// In-memory equivalent of write_dataset + load_dataset.
[[nodiscard]] Dataset build_dataset(const DatagenConfig& cfg);

}  // namespace uiseg::datagen

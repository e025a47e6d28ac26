#include "uiseg/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include "uiseg/io.hpp"

namespace uiseg::datagen {

namespace {

void check_range(const std::array<double, 2>& r, const char* name) {
    if (!(r[0] >= 0.0 && r[1] <= 1.0 && r[0] <= r[1])) {
        throw InvalidArgument(std::string("intensity range ") + name + " must lie within [0, 1]");
    }
}

struct Blob {
    double center[3];
    double axes[3];
    double rot[3][3];  // rows: local axes in world coordinates
    double exponent;
    double mean_radius;
    bool necrotic;
    double wave[3][4];  // perturbation: unit direction (3) + frequency, per term
    double phase[3];
};

void random_rotation(Rng& rng, double r[3][3]) {
    // Uniform unit quaternion (Shoemake).
    const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
    const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
    const double qx = a * std::sin(2 * std::numbers::pi * u2), qy = a * std::cos(2 * std::numbers::pi * u2);
    const double qz = b * std::sin(2 * std::numbers::pi * u3), qw = b * std::cos(2 * std::numbers::pi * u3);
    r[0][0] = 1 - 2 * (qy * qy + qz * qz);
    r[0][1] = 2 * (qx * qy - qz * qw);
    r[0][2] = 2 * (qx * qz + qy * qw);
    r[1][0] = 2 * (qx * qy + qz * qw);
    r[1][1] = 1 - 2 * (qx * qx + qz * qz);
    r[1][2] = 2 * (qy * qz - qx * qw);
    r[2][0] = 2 * (qx * qz - qy * qw);
    r[2][1] = 2 * (qy * qz + qx * qw);
    r[2][2] = 1 - 2 * (qx * qx + qy * qy);
}

// Normalized superellipsoid radius of point (x, y, z); <= 1 inside the blob.
double blob_radius(const Blob& b, double x, double y, double z, double irregularity) {
    const double d[3] = {x - b.center[0], y - b.center[1], z - b.center[2]};
    double sum = 0.0;
    double local[3];
    for (int k = 0; k < 3; ++k) {
        local[k] = b.rot[k][0] * d[0] + b.rot[k][1] * d[1] + b.rot[k][2] * d[2];
        sum += std::pow(std::abs(local[k]) / b.axes[k], b.exponent);
    }
    double r = std::pow(sum, 1.0 / b.exponent);
    if (irregularity > 0.0) {
        const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        if (len > 1e-9) {
            double perturb = 0.0;
            for (int t = 0; t < 3; ++t) {
                const double proj = (b.wave[t][0] * d[0] + b.wave[t][1] * d[1] + b.wave[t][2] * d[2]) / len;
                perturb += std::sin(b.wave[t][3] * proj + b.phase[t]) / 3.0;
            }
            r /= 1.0 + irregularity * perturb;
        }
    }
    return r;
}

double smooth_step(double signed_distance, double softness) {
    if (softness <= 0.0) return signed_distance >= 0.0 ? 1.0 : 0.0;
    return 0.5 * (1.0 + std::erf(signed_distance / (std::numbers::sqrt2 * softness)));
}

std::vector<Blob> draw_blobs(const LesionSpec& spec, const Geometry& g, Rng& rng) {
    const double mid = (g.side() - 1) / 2.0;
    const int count = spec.blob_count_min + int(rng.below(std::uint64_t(spec.blob_count_max - spec.blob_count_min + 1)));
    double lesion_center[3];
    for (double& c : lesion_center) c = mid + rng.uniform(-spec.center_jitter, spec.center_jitter);
    std::vector<Blob> blobs;
    for (int i = 0; i < count; ++i) {
        Blob b{};
        for (double& a : b.axes) a = rng.uniform(spec.radius_min, spec.radius_max);
        b.mean_radius = (b.axes[0] + b.axes[1] + b.axes[2]) / 3.0;
        b.exponent = rng.uniform(spec.exponent_min, spec.exponent_max);
        random_rotation(rng, b.rot);
        for (int k = 0; k < 3; ++k) {
            b.center[k] = lesion_center[k];
            if (i > 0) b.center[k] += rng.uniform(-1.0, 1.0) * spec.blob_offset * blobs.front().mean_radius;
        }
        b.necrotic = rng.uniform() < spec.necrotic_probability;
        for (int t = 0; t < 3; ++t) {
            double v[3] = {rng.normal(), rng.normal(), rng.normal()};
            const double n = std::max(1e-12, std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
            for (int k = 0; k < 3; ++k) b.wave[t][k] = v[k] / n;
            b.wave[t][3] = rng.uniform(2.0, 5.0);
            b.phase[t] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }
        blobs.push_back(b);
    }
    return blobs;
}

bool gt_inside_core(const LabelVolume& gt, const Geometry& g) {
    const int lo = g.pad;
    const int hi = g.pad + g.core;
    for (int z = 0; z < gt.dim_z(); ++z) {
        for (int y = 0; y < gt.dim_y(); ++y) {
            for (int x = 0; x < gt.dim_x(); ++x) {
                if (gt(x, y, z) && (x < lo || y < lo || z < lo || x >= hi || y >= hi || z >= hi)) return false;
            }
        }
    }
    return true;
}

std::array<double, 2> lerp(const std::array<double, 2>& a, const std::array<double, 2>& b, double t) {
    return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t};
}

}  // namespace

void LesionSpec::validate() const {
    if (blob_count_min < 1 || blob_count_max < blob_count_min) throw InvalidArgument("lesion needs at least one blob");
    if (radius_min < 1.0 || radius_max < radius_min) throw InvalidArgument("blob radii must be >= 1 voxel");
    if (exponent_min <= 0.0 || exponent_max < exponent_min) throw InvalidArgument("invalid superellipsoid exponent");
    if (irregularity < 0.0 || irregularity >= 1.0) throw InvalidArgument("irregularity must be in [0, 1)");
    if (overlap < 0.0 || overlap > 1.0) throw InvalidArgument("overlap must be in [0, 1]");
    if (noise_std < 0.0 || boundary_softness < 0.0 || texture_amplitude < 0.0 || center_jitter < 0.0) {
        throw InvalidArgument("noise, softness, texture and jitter must be non-negative");
    }
    check_range(background_intensity, "background");
    check_range(lesion_intensity, "lesion");
    check_range(necrotic_intensity, "necrotic");
}

void to_json(nlohmann::json& j, const LesionSpec& s) {
    j = {{"blob_count_min", s.blob_count_min},
         {"blob_count_max", s.blob_count_max},
         {"radius_min", s.radius_min},
         {"radius_max", s.radius_max},
         {"exponent_min", s.exponent_min},
         {"exponent_max", s.exponent_max},
         {"blob_offset", s.blob_offset},
         {"center_jitter", s.center_jitter},
         {"irregularity", s.irregularity},
         {"boundary_softness", s.boundary_softness},
         {"background_intensity", s.background_intensity},
         {"lesion_intensity", s.lesion_intensity},
         {"necrotic_intensity", s.necrotic_intensity},
         {"necrotic_probability", s.necrotic_probability},
         {"necrotic_fraction", s.necrotic_fraction},
         {"overlap", s.overlap},
         {"texture_amplitude", s.texture_amplitude},
         {"noise_std", s.noise_std}};
}

void from_json(const nlohmann::json& j, LesionSpec& s) {
    const LesionSpec d;
    s.blob_count_min = j.value("blob_count_min", d.blob_count_min);
    s.blob_count_max = j.value("blob_count_max", d.blob_count_max);
    s.radius_min = j.value("radius_min", d.radius_min);
    s.radius_max = j.value("radius_max", d.radius_max);
    s.exponent_min = j.value("exponent_min", d.exponent_min);
    s.exponent_max = j.value("exponent_max", d.exponent_max);
    s.blob_offset = j.value("blob_offset", d.blob_offset);
    s.center_jitter = j.value("center_jitter", d.center_jitter);
    s.irregularity = j.value("irregularity", d.irregularity);
    s.boundary_softness = j.value("boundary_softness", d.boundary_softness);
    s.background_intensity = j.value("background_intensity", d.background_intensity);
    s.lesion_intensity = j.value("lesion_intensity", d.lesion_intensity);
    s.necrotic_intensity = j.value("necrotic_intensity", d.necrotic_intensity);
    s.necrotic_probability = j.value("necrotic_probability", d.necrotic_probability);
    s.necrotic_fraction = j.value("necrotic_fraction", d.necrotic_fraction);
    s.overlap = j.value("overlap", d.overlap);
    s.texture_amplitude = j.value("texture_amplitude", d.texture_amplitude);
    s.noise_std = j.value("noise_std", d.noise_std);
}

GeneratedVolume generate_volume(const LesionSpec& spec, const Geometry& geometry, Rng& rng) {
    spec.validate();
    if (geometry.core < 1 || geometry.pad < 0) throw InvalidArgument("invalid volume geometry");
    const int side = geometry.side();

    constexpr int kMaxAttempts = 64;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const std::vector<Blob> blobs = draw_blobs(spec, geometry, rng);
        const double bg_mean = rng.uniform(spec.background_intensity[0], spec.background_intensity[1]);
        const auto lesion_range = lerp(spec.lesion_intensity, spec.background_intensity, spec.overlap);
        const double lesion_mean = rng.uniform(lesion_range[0], lesion_range[1]);
        const double necrotic_mean = rng.uniform(spec.necrotic_intensity[0], spec.necrotic_intensity[1]);

        double texture[4][5];  // wave vector (3), amplitude, phase
        for (auto& t : texture) {
            double v[3] = {rng.normal(), rng.normal(), rng.normal()};
            const double n = std::max(1e-12, std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
            const double k = rng.uniform(0.04, 0.2);
            for (int i = 0; i < 3; ++i) t[i] = k * v[i] / n;
            t[3] = spec.texture_amplitude * rng.uniform(0.5, 1.0) / 2.0;
            t[4] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }

        // Bounding box of all blobs, grown by the perturbation and the soft edge.
        double reach = 0.0;
        for (const Blob& b : blobs) {
            reach = std::max(reach, std::max({b.axes[0], b.axes[1], b.axes[2]}) * std::sqrt(3.0) /
                                        (1.0 - spec.irregularity));
        }
        reach += 4.0 * spec.boundary_softness + 2.0;

        GeneratedVolume out{Volume3D(side, side, side), LabelVolume(side, side, side)};
        for (int z = 0; z < side; ++z) {
            for (int y = 0; y < side; ++y) {
                for (int x = 0; x < side; ++x) {
                    double value = bg_mean;
                    for (const auto& t : texture) value += t[3] * std::sin(t[0] * x + t[1] * y + t[2] * z + t[4]);

                    double lesion_weight = 0.0;
                    double necrotic_weight = 0.0;
                    bool inside = false;
                    for (const Blob& b : blobs) {
                        if (std::abs(x - b.center[0]) > reach || std::abs(y - b.center[1]) > reach ||
                            std::abs(z - b.center[2]) > reach) {
                            continue;
                        }
                        const double r = blob_radius(b, x, y, z, spec.irregularity);
                        inside = inside || r <= 1.0;
                        lesion_weight = std::max(lesion_weight, smooth_step((1.0 - r) * b.mean_radius, spec.boundary_softness));
                        if (b.necrotic) {
                            necrotic_weight = std::max(
                                necrotic_weight,
                                smooth_step((spec.necrotic_fraction - r) * b.mean_radius, spec.boundary_softness));
                        }
                    }
                    const double lesion_value = lesion_mean + (necrotic_mean - lesion_mean) * necrotic_weight;
                    value += (lesion_value - bg_mean) * lesion_weight;
                    if (spec.noise_std > 0.0) value += spec.noise_std * rng.normal();
                    out.image(x, y, z) = float(std::clamp(value, 0.0, 1.0));
                    out.gt(x, y, z) = inside ? 1 : 0;
                }
            }
        }
        if (gt_inside_core(out.gt, geometry)) return out;
    }
    throw InvalidArgument("lesion spec does not fit the core cube; reduce radii or jitter");
}

Voi extract_voi(const Volume3D& volume, const LabelVolume& gt, std::array<int, 3> center, int core, int pad) {
    if (core < 1 || pad < 0) throw InvalidArgument("core must be >= 1 and pad >= 0");
    const int side = core + 2 * pad;
    int start[3];
    const int dims[3] = {volume.dim_x(), volume.dim_y(), volume.dim_z()};
    if (gt.dim_x() != dims[0] || gt.dim_y() != dims[1] || gt.dim_z() != dims[2]) {
        throw ShapeMismatch("volume and gt dimensions differ");
    }
    for (int k = 0; k < 3; ++k) {
        start[k] = center[k] - core / 2 - pad;
        if (start[k] < 0 || start[k] + side > dims[k]) {
            throw InvalidArgument("VOI of side " + std::to_string(side) + " does not fit the volume");
        }
    }
    const int core_lo[3] = {start[0] + pad, start[1] + pad, start[2] + pad};
    for (int z = 0; z < dims[2]; ++z) {
        for (int y = 0; y < dims[1]; ++y) {
            for (int x = 0; x < dims[0]; ++x) {
                if (!gt(x, y, z)) continue;
                if (x < core_lo[0] || y < core_lo[1] || z < core_lo[2] || x >= core_lo[0] + core ||
                    y >= core_lo[1] + core || z >= core_lo[2] + core) {
                    throw Error("lesion extends beyond the core cube");
                }
            }
        }
    }
    Voi voi{Volume3D(side, side, side), LabelVolume(core, core, core)};
    for (int z = 0; z < side; ++z) {
        for (int y = 0; y < side; ++y) {
            for (int x = 0; x < side; ++x) voi.image(x, y, z) = volume(start[0] + x, start[1] + y, start[2] + z);
        }
    }
    for (int z = 0; z < core; ++z) {
        for (int y = 0; y < core; ++y) {
            for (int x = 0; x < core; ++x) voi.gt(x, y, z) = gt(core_lo[0] + x, core_lo[1] + y, core_lo[2] + z);
        }
    }
    return voi;
}

const char* to_string(Orientation o) {
    switch (o) {
        case Orientation::transverse: return "transverse";
        case Orientation::coronal: return "coronal";
        case Orientation::sagittal: return "sagittal";
    }
    return "?";
}

std::vector<Sample> slice_voi(const Voi& voi, int volume_id) {
    const int side = voi.image.dim_x();
    const int core = voi.gt.dim_x();
    const int pad = (side - core) / 2;
    if (side - core != 2 * pad) throw ShapeMismatch("VOI and core sides differ by an odd amount");

    // (u, v, plane) -> (x, y, z) per orientation.
    auto voxel = [](Orientation o, int u, int v, int w) -> std::array<int, 3> {
        switch (o) {
            case Orientation::transverse: return {u, v, w};
            case Orientation::coronal: return {u, w, v};
            case Orientation::sagittal: return {w, u, v};
        }
        return {u, v, w};
    };

    std::vector<Sample> samples;
    for (Orientation o : {Orientation::transverse, Orientation::coronal, Orientation::sagittal}) {
        for (int plane = 0; plane < core; ++plane) {
            LabelMask gt(core, core);
            bool any = false;
            for (int v = 0; v < core; ++v) {
                for (int u = 0; u < core; ++u) {
                    const auto p = voxel(o, u, v, plane);
                    gt(u, v) = voi.gt(p[0], p[1], p[2]) ? 1 : 0;
                    any = any || gt(u, v);
                }
            }
            if (!any) continue;
            Grid<float> image(side, side);
            for (int v = 0; v < side; ++v) {
                for (int u = 0; u < side; ++u) {
                    const auto p = voxel(o, u, v, plane + pad);
                    image(u, v) = voi.image(p[0], p[1], p[2]);
                }
            }
            samples.push_back({Image2D(std::move(image)), std::move(gt), volume_id, o, plane});
        }
    }
    return samples;
}

std::array<int, 3> split_counts(int volume_count, std::array<double, 3> ratios) {
    double total = 0.0;
    for (double r : ratios) {
        if (r < 0.0) throw InvalidArgument("split ratios must be non-negative");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-6) throw InvalidArgument("split ratios must sum to 1");
    const int nonempty = int(std::count_if(ratios.begin(), ratios.end(), [](double r) { return r > 0.0; }));
    if (volume_count < nonempty) {
        throw InvalidArgument("need at least " + std::to_string(nonempty) + " volumes for the requested splits");
    }
    std::array<int, 3> counts{};
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (int k = 0; k < 3; ++k) {
        const double exact = ratios[std::size_t(k)] * volume_count;
        counts[std::size_t(k)] = int(std::floor(exact));
        remainder[std::size_t(k)] = exact - counts[std::size_t(k)];
        assigned += counts[std::size_t(k)];
    }
    while (assigned < volume_count) {
        const auto k = std::size_t(std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
        ++counts[k];
        remainder[k] = -1.0;
        ++assigned;
    }
    // Every split with a positive ratio receives at least one volume.
    for (std::size_t k = 0; k < 3; ++k) {
        if (ratios[k] > 0.0 && counts[k] == 0) {
            const auto donor = std::size_t(std::max_element(counts.begin(), counts.end()) - counts.begin());
            --counts[donor];
            ++counts[k];
        }
    }
    return counts;
}

namespace {

std::map<int, int> assign_volumes(const std::vector<int>& volume_ids, std::array<double, 3> ratios, Rng& rng) {
    std::vector<int> ids = volume_ids;
    const auto counts = split_counts(int(ids.size()), ratios);
    rng.shuffle(ids);
    std::map<int, int> assignment;
    std::size_t next = 0;
    for (int k = 0; k < 3; ++k) {
        for (int i = 0; i < counts[std::size_t(k)]; ++i) assignment[ids[next++]] = k;
    }
    return assignment;
}

Dataset distribute(std::vector<Sample> samples, const std::map<int, int>& assignment) {
    Dataset ds;
    for (Sample& s : samples) {
        switch (assignment.at(s.volume_id)) {
            case 0: ds.train.push_back(std::move(s)); break;
            case 1: ds.validation.push_back(std::move(s)); break;
            default: ds.test.push_back(std::move(s)); break;
        }
    }
    return ds;
}

constexpr std::uint64_t kSplitStream = 0xFFFF'FFFFULL;

Voi generate_voi(const DatagenConfig& cfg, int volume_id) {
    Rng rng = Rng::stream(cfg.seed, std::uint64_t(volume_id));
    const GeneratedVolume vol = generate_volume(cfg.spec, cfg.geometry, rng);
    const int c = cfg.geometry.pad + cfg.geometry.core / 2;
    return extract_voi(vol.image, vol.gt, {c, c, c}, cfg.geometry.core, cfg.geometry.pad);
}

const char* split_name(int k) {
    static const char* names[] = {"train", "validation", "test"};
    return names[k];
}

}  // namespace

Dataset split(const std::vector<Sample>& samples, std::array<double, 3> ratios, Rng& rng) {
    std::set<int> ids;
    for (const Sample& s : samples) ids.insert(s.volume_id);
    return distribute(samples, assign_volumes(std::vector<int>(ids.begin(), ids.end()), ratios, rng));
}

Dataset build_dataset(const DatagenConfig& cfg) {
    std::vector<Sample> all;
    std::vector<int> ids;
    for (int v = 0; v < cfg.volumes; ++v) {
        auto s = slice_voi(generate_voi(cfg, v), v);
        all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
        ids.push_back(v);
    }
    Rng rng = Rng::stream(cfg.seed, kSplitStream);
    return distribute(std::move(all), assign_volumes(ids, cfg.ratios, rng));
}

std::filesystem::path write_dataset(const DatagenConfig& cfg, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir / "preview");
    std::vector<int> ids;
    for (int v = 0; v < cfg.volumes; ++v) ids.push_back(v);
    Rng rng = Rng::stream(cfg.seed, kSplitStream);
    const auto assignment = assign_volumes(ids, cfg.ratios, rng);

    nlohmann::json volumes = nlohmann::json::array();
    for (int v = 0; v < cfg.volumes; ++v) {
        const Voi voi = generate_voi(cfg, v);
        char name[32];
        std::snprintf(name, sizeof(name), "%03d", v);
        const std::string image_file = std::string("vol_") + name + ".bin";
        const std::string gt_file = std::string("gt_") + name + ".bin";
        io::write_volume(out_dir / image_file, voi.image);
        io::write_volume(out_dir / gt_file, voi.gt);

        // Middle transverse plane of the VOI and of the core gt.
        const int side = voi.image.dim_x();
        const int core = voi.gt.dim_x();
        Grid<float> plane(side, side);
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) plane(x, y) = voi.image(x, y, side / 2);
        LabelMask gt_plane(core, core);
        for (int y = 0; y < core; ++y)
            for (int x = 0; x < core; ++x) gt_plane(x, y) = voi.gt(x, y, core / 2);
        io::write_file(out_dir / "preview" / (std::string("vol_") + name + ".png"), io::encode_png(Image2D(plane)));
        io::write_file(out_dir / "preview" / (std::string("gt_") + name + ".png"), io::encode_png(gt_plane));

        volumes.push_back({{"id", v},
                           {"image", image_file},
                           {"gt", gt_file},
                           {"split", split_name(assignment.at(v))},
                           {"slices", slice_voi(voi, v).size()}});
    }
    nlohmann::json manifest = {{"format", "uiseg-dataset"},
                               {"version", 1},
                               {"seed", cfg.seed},
                               {"core", cfg.geometry.core},
                               {"pad", cfg.geometry.pad},
                               {"ratios", cfg.ratios},
                               {"spec", cfg.spec},
                               {"volumes", volumes}};
    const auto path = out_dir / "manifest.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << manifest.dump(2) << '\n';
    return path;
}

LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open " + manifest_path.string());
    const nlohmann::json m = nlohmann::json::parse(in);
    if (m.value("format", "") != "uiseg-dataset") throw IoError(manifest_path.string() + ": not a dataset manifest");
    LoadedDataset out;
    out.config.seed = m.at("seed").get<std::uint64_t>();
    out.config.geometry = {m.at("core").get<int>(), m.at("pad").get<int>()};
    out.config.ratios = m.at("ratios").get<std::array<double, 3>>();
    out.config.spec = m.at("spec").get<LesionSpec>();
    out.config.volumes = int(m.at("volumes").size());
    const auto dir = manifest_path.parent_path();
    std::vector<Sample> all;
    std::map<int, int> assignment;
    for (const auto& v : m.at("volumes")) {
        const int id = v.at("id").get<int>();
        const std::string split = v.at("split").get<std::string>();
        assignment[id] = split == "train" ? 0 : (split == "validation" ? 1 : 2);
        Voi voi{io::read_volume_f32(dir / v.at("image").get<std::string>()),
                io::read_volume_u8(dir / v.at("gt").get<std::string>())};
        auto s = slice_voi(voi, id);
        all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
    }
    out.dataset = distribute(std::move(all), assignment);
    return out;
}

}  // namespace uiseg::datagen

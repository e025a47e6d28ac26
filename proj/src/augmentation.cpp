#include "uiseg/augmentation.hpp"

#include <algorithm>
#include <cmath>

namespace uiseg::augment {

void ElasticParams::validate() const {
    if (!(sigma > 0.0)) throw InvalidArgument("elastic sigma must be > 0");
    if (!(alpha >= 0.0)) throw InvalidArgument("elastic alpha must be >= 0");
}

Grid<float> gaussian_smooth(const Grid<float>& g, double sigma) {
    if (!(sigma > 0.0)) throw InvalidArgument("gaussian sigma must be > 0");
    const int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> kernel(std::size_t(2 * radius + 1));
    for (int i = -radius; i <= radius; ++i) {
        kernel[std::size_t(i + radius)] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
    }
    const int w = g.width();
    const int h = g.height();
    auto pass = [&](const Grid<float>& in, bool horizontal) {
        Grid<float> out(in.shape());
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0, norm = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int sx = horizontal ? x + i : x;
                    const int sy = horizontal ? y : y + i;
                    if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
                    const double k = kernel[std::size_t(i + radius)];
                    acc += k * in(sx, sy);
                    norm += k;
                }
                out(x, y) = float(acc / norm);
            }
        }
        return out;
    };
    return pass(pass(g, true), false);
}

DisplacementField displacement_field(Shape2D shape, const ElasticParams& params, Rng& rng) {
    params.validate();
    Grid<float> ux(shape), uy(shape);
    for (auto& v : ux) v = float(rng.uniform(-1.0, 1.0));
    for (auto& v : uy) v = float(rng.uniform(-1.0, 1.0));
    DisplacementField field{gaussian_smooth(ux, params.sigma), gaussian_smooth(uy, params.sigma)};
    for (auto& v : field.dx) v = float(v * params.alpha);
    for (auto& v : field.dy) v = float(v * params.alpha);
    return field;
}

namespace {

void check_field(Shape2D shape, const DisplacementField& field) {
    if (field.dx.shape() != shape || field.dy.shape() != shape) {
        throw ShapeMismatch("displacement field " + to_string(field.dx.shape()) + " does not match " +
                            to_string(shape));
    }
}

template <typename T>
Grid<T> warp_nearest(const Grid<T>& in, const DisplacementField& field) {
    check_field(in.shape(), field);
    const int w = in.width();
    const int h = in.height();
    Grid<T> out(in.shape());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int sx = std::clamp(int(std::floor(x + field.dx(x, y) + 0.5f)), 0, w - 1);
            const int sy = std::clamp(int(std::floor(y + field.dy(x, y) + 0.5f)), 0, h - 1);
            out(x, y) = in(sx, sy);
        }
    }
    return out;
}

}  // namespace

Image2D warp_image(const Image2D& img, const DisplacementField& field) {
    check_field(img.shape(), field);
    const int w = img.width();
    const int h = img.height();
    Grid<float> out(img.shape());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = std::clamp(double(x) + field.dx(x, y), 0.0, double(w - 1));
            const double sy = std::clamp(double(y) + field.dy(x, y), 0.0, double(h - 1));
            const int x0 = int(std::floor(sx));
            const int y0 = int(std::floor(sy));
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double fx = sx - x0;
            const double fy = sy - y0;
            const double top = (1 - fx) * img(x0, y0) + fx * img(x1, y0);
            const double bottom = (1 - fx) * img(x0, y1) + fx * img(x1, y1);
            out(x, y) = float(std::clamp((1 - fy) * top + fy * bottom, 0.0, 1.0));
        }
    }
    return Image2D(std::move(out));
}

LabelMask warp_mask(const LabelMask& mask, const DisplacementField& field) { return warp_nearest(mask, field); }

SeedChannel warp_mask(const SeedChannel& channel, const DisplacementField& field) {
    return warp_nearest(channel, field);
}

Triplet deform(const Triplet& t, const DisplacementField& field) {
    const Shape2D tile = t.image.shape();
    Triplet out{warp_image(t.image, field), {}, std::nullopt};
    // The gt lives on the output region; warp it on the tile so the same field
    // moves it together with the image.
    const LabelMask gt_tile = embed_center(t.gt, tile.width, tile.height, std::uint8_t{0});
    out.gt = crop_center(warp_mask(gt_tile, field), t.gt.width(), t.gt.height());
    if (t.seeds) out.seeds = warp_mask(*t.seeds, field);
    return out;
}

std::vector<Triplet> augment_dataset(const std::vector<Triplet>& samples, const ElasticParams& params, int factor) {
    if (factor < 1) throw InvalidArgument("augmentation factor must be >= 1");
    params.validate();
    std::vector<Triplet> out;
    out.reserve(samples.size() * std::size_t(factor));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out.push_back(samples[i]);
        for (int k = 1; k < factor; ++k) {
            Rng rng = Rng::stream(params.rng_seed, std::uint64_t(i) * std::uint64_t(factor) + std::uint64_t(k));
            Triplet copy = deform(samples[i], displacement_field(samples[i].image.shape(), params, rng));
            // A deformation can squeeze a tiny cross-section away entirely;
            // redraw so every sample keeps a nonempty ground truth.
            for (int attempt = 0; attempt < 8 && foreground_count(copy.gt) == 0; ++attempt) {
                copy = deform(samples[i], displacement_field(samples[i].image.shape(), params, rng));
            }
            if (foreground_count(copy.gt) == 0) copy = samples[i];
            out.push_back(std::move(copy));
        }
    }
    return out;
}

}  // namespace uiseg::augment

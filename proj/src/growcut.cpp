#include "uiseg/growcut.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <thread>

namespace uiseg::growcut {

CellGrid init(const Image2D& image, const SeedSet& seeds) {
    if (seeds.count(Label::foreground) == 0 || seeds.count(Label::background) == 0) {
        throw InsufficientSeeds("growcut needs at least one foreground and one background seed");
    }
    CellGrid grid{image, Grid<CellLabel>(image.shape(), CellLabel::undecided), Grid<float>(image.shape(), 0.0f)};
    const auto n = std::int64_t(image.size());
    for (const Seed& s : seeds) {
        if (s.position < 0 || s.position >= n) {
            throw BoundsError("seed position " + std::to_string(s.position) + " outside image");
        }
        grid.labels[std::size_t(s.position)] =
            s.label == Label::foreground ? CellLabel::foreground : CellLabel::background;
        grid.strength[std::size_t(s.position)] = 1.0f;
    }
    return grid;
}

namespace {

// Neighbour offsets in lexicographic (dy, dx) order; iteration order is the
// tie-break rule.
constexpr int kOffsets[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};

std::int64_t update_rows(const CellGrid& in, CellGrid& out, int y0, int y1) {
    const int w = in.image.width();
    const int h = in.image.height();
    std::int64_t changed = 0;
    for (int y = y0; y < y1; ++y) {
        for (int x = 0; x < w; ++x) {
            const float cp = in.image(x, y);
            float best = in.strength(x, y);
            CellLabel label = in.labels(x, y);
            for (const auto& off : kOffsets) {
                const int qx = x + off[1];
                const int qy = y + off[0];
                if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
                const float attack = (1.0f - std::abs(in.image(qx, qy) - cp)) * in.strength(qx, qy);
                if (attack > best) {
                    best = attack;
                    label = in.labels(qx, qy);
                }
            }
            out.labels(x, y) = label;
            out.strength(x, y) = best;
            if (label != in.labels(x, y) || best != in.strength(x, y)) ++changed;
        }
    }
    return changed;
}

}  // namespace

StepResult step(const CellGrid& grid, int threads) {
    StepResult result{grid, 0};
    const int h = grid.image.height();
    threads = std::clamp(threads, 1, h);
    if (threads == 1) {
        result.changed = update_rows(grid, result.grid, 0, h);
        return result;
    }
    std::vector<std::int64_t> counts(std::size_t(threads), 0);
    std::vector<std::jthread> workers;
    for (int t = 0; t < threads; ++t) {
        const int y0 = h * t / threads;
        const int y1 = h * (t + 1) / threads;
        workers.emplace_back([&, t, y0, y1] { counts[std::size_t(t)] = update_rows(grid, result.grid, y0, y1); });
    }
    workers.clear();
    for (auto c : counts) result.changed += c;
    return result;
}

int default_max_iters(Shape2D shape) { return 2 * (shape.width + shape.height); }

Segmentation segment(const Image2D& image, const SeedSet& seeds, int max_iters, int threads) {
    if (max_iters <= 0) max_iters = default_max_iters(image.shape());
    CellGrid grid = init(image, seeds);
    Segmentation seg;
    bool fixed_point = false;
    while (seg.iterations < max_iters) {
        auto r = step(grid, threads);
        grid = std::move(r.grid);
        ++seg.iterations;
        if (r.changed == 0) {
            fixed_point = true;
            break;
        }
    }
    seg.truncated = !fixed_point;
    seg.mask = LabelMask(image.shape());
    for (std::size_t p = 0; p < seg.mask.size(); ++p) {
        seg.mask[p] = grid.labels[p] == CellLabel::foreground ? 1 : 0;
        if (grid.labels[p] == CellLabel::undecided) ++seg.undecided_pixels;
    }
    if (seg.truncated && seg.undecided_pixels > 0) {
        std::clog << "growcut: truncated after " << seg.iterations << " steps, " << seg.undecided_pixels
                  << " undecided pixels labeled background\n";
    }
    return seg;
}

}  // namespace uiseg::growcut

#include <doctest.h>

#include "uiseg/growcut.hpp"
#include "uiseg/rng.hpp"

using namespace uiseg;

namespace {

Image2D random_image(Rng& rng, int w, int h) {
    Grid<float> g(w, h);
    for (auto& v : g) v = float(rng.uniform());
    return Image2D(g);
}

SeedSet random_seeds(Rng& rng, std::size_t size, std::size_t count) {
    SeedSet s;
    s.insert({std::int64_t(rng.below(size)), Label::foreground});
    while (s.size() < 2) s.insert({std::int64_t(rng.below(size)), Label::background});
    while (s.size() < count) {
        const auto p = std::int64_t(rng.below(size));
        if (!s.contains(p)) s.insert({p, rng.below(2) ? Label::foreground : Label::background});
    }
    return s;
}

}  // namespace

TEST_CASE("hand-simulated 3x3 uniform image") {
    const Image2D img(3, 3, 0.5f);
    const SeedSet seeds({{0, Label::foreground}, {8, Label::background}});
    const auto seg = growcut::segment(img, seeds);
    const LabelMask expected(3, 3, std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0, 1, 0, 0});
    CHECK(seg.mask == expected);
    CHECK_FALSE(seg.truncated);
    CHECK(seg.undecided_pixels == 0);
}

TEST_CASE("first synchronous step of the hand example") {
    const Image2D img(3, 3, 0.5f);
    const auto grid = growcut::init(img, SeedSet({{0, Label::foreground}, {8, Label::background}}));
    const auto r = growcut::step(grid);
    CHECK(r.changed == 5);
    CHECK(r.grid.labels(1, 1) == growcut::CellLabel::foreground);
    CHECK(r.grid.labels(2, 1) == growcut::CellLabel::background);
    CHECK(r.grid.labels(0, 2) == growcut::CellLabel::undecided);
    CHECK(r.grid.strength(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("step edge intensity step separates regions") {
    Grid<float> g(10, 6, 0.1f);
    for (int y = 0; y < 6; ++y) {
        for (int x = 5; x < 10; ++x) g(x, y) = 0.9f;
    }
    const auto seg = growcut::segment(Image2D(g), SeedSet({{0, Label::foreground}, {59, Label::background}}));
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 10; ++x) CHECK(seg.mask(x, y) == (x < 5 ? 1 : 0));
    }
}

TEST_CASE("random images reach a fixed point; seeds keep labels; threads agree") {
    Rng rng(31);
    for (int trial = 0; trial < 12; ++trial) {
        const Image2D img = random_image(rng, 32, 32);
        const SeedSet seeds = random_seeds(rng, img.size(), 2 + rng.below(20));
        const auto seg = growcut::segment(img, seeds);
        CHECK_FALSE(seg.truncated);
        CHECK(seg.iterations <= growcut::default_max_iters(img.shape()));
        for (const Seed& s : seeds) CHECK(seg.mask[std::size_t(s.position)] == (s.label == Label::foreground));
        CHECK(growcut::segment(img, seeds, 0, 3).mask == seg.mask);

        auto grid = growcut::init(img, seeds);
        for (int i = 0; i < seg.iterations; ++i) grid = growcut::step(grid).grid;
        const auto again = growcut::step(grid);
        CHECK(again.changed == 0);
        const auto threaded = growcut::step(growcut::init(img, seeds), 4);
        const auto single = growcut::step(growcut::init(img, seeds), 1);
        CHECK(threaded.grid.labels == single.grid.labels);
        CHECK(threaded.grid.strength == single.grid.strength);
    }
}

TEST_CASE("growcut preconditions and truncation") {
    const Image2D img(4, 4, 0.2f);
    CHECK_THROWS_AS((void)growcut::segment(img, SeedSet({{0, Label::foreground}})), InsufficientSeeds);
    CHECK_THROWS_AS((void)growcut::segment(img, SeedSet({{0, Label::foreground}, {16, Label::background}})),
                    BoundsError);
    CHECK(growcut::default_max_iters(img.shape()) == 16);
    const auto cut = growcut::segment(Image2D(32, 1, 0.0f), SeedSet({{0, Label::foreground}, {1, Label::background}}), 2);
    CHECK(cut.truncated);
    CHECK(cut.iterations == 2);
}

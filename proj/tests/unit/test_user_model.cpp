#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "uiseg/user_model.hpp"

using namespace uiseg;
namespace um = uiseg::user_model;

namespace {

LabelMask random_mask(Rng& rng, int w, int h, double p) {
    LabelMask m(w, h);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < p ? 1 : 0;
    return m;
}

// Min / max over the (2k+1)^2 window, cells outside the grid take `pad`.
LabelMask window_filter(const LabelMask& m, int k, bool take_min, std::uint8_t pad) {
    LabelMask out(m.shape());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            std::uint8_t v = take_min ? 1 : 0;
            for (int dy = -k; dy <= k; ++dy) {
                for (int dx = -k; dx <= k; ++dx) {
                    const std::uint8_t c = m.in_bounds(x + dx, y + dy) ? m(x + dx, y + dy) : pad;
                    v = take_min ? std::min(v, c) : std::max(v, c);
                }
            }
            out(x, y) = v;
        }
    }
    return out;
}

LabelMask disk(int w, int h, double cx, double cy, double r) {
    LabelMask m(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) m(x, y) = std::hypot(x - cx, y - cy) <= r ? 1 : 0;
    }
    return m;
}

}  // namespace

TEST_CASE("erosion and dilation match the window oracle") {
    Rng rng(21);
    for (int trial = 0; trial < 40; ++trial) {
        const LabelMask m = random_mask(rng, 32, 32, 0.3 + 0.6 * rng.uniform());
        const int k = int(rng.below(4));
        CHECK(erode(m, k) == window_filter(m, k, true, 0));
        CHECK(dilate(m, k) == window_filter(m, k, false, 0));
        CHECK(erode(m, k, Border::foreground) == window_filter(m, k, true, 1));
        CHECK(dilate(m, k, Border::foreground) == window_filter(m, k, false, 1));
    }
}

TEST_CASE("morphology duality and composition") {
    Rng rng(22);
    for (int trial = 0; trial < 30; ++trial) {
        const LabelMask m = random_mask(rng, 20, 17, 0.5);
        const int a = 1 + int(rng.below(3));
        const int b = 1 + int(rng.below(3));
        CHECK(erode(m, a) == complement(dilate(complement(m), a, Border::foreground)));
        CHECK(dilate(m, a) == complement(erode(complement(m), a, Border::foreground)));
        CHECK(erode(erode(m, a), b) == erode(m, a + b));
        CHECK(dilate(dilate(m, a), b) == dilate(m, a + b));
        CHECK(erode(m, 0) == m);
        const LabelMask e = erode(m, a);
        const LabelMask d = dilate(m, a);
        for (std::size_t p = 0; p < m.size(); ++p) {
            CHECK(e[p] <= m[p]);
            CHECK(m[p] <= d[p]);
        }
    }
    CHECK_THROWS_AS((void)erode(LabelMask(3, 3), -1), InvalidArgument);
}

TEST_CASE("band seeds follow the eroded and dilated ground truth") {
    const LabelMask gt = disk(40, 40, 20, 20, 9);
    const auto band = um::initial_seeds_band(gt, 3);
    CHECK_FALSE(band.foreground_empty);
    const LabelMask inner = erode(gt, 3);
    const LabelMask outer = dilate(gt, 3);
    std::size_t expected = 0;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        const auto l = band.seeds.label_at(std::int64_t(p));
        if (inner[p]) {
            CHECK(l == Label::foreground);
            ++expected;
        } else if (!outer[p]) {
            CHECK(l == Label::background);
            ++expected;
        } else {
            CHECK_FALSE(l.has_value());
        }
    }
    CHECK(band.seeds.size() == expected);
    CHECK(um::initial_seeds_band(gt, 5).seeds.size() < band.seeds.size());
    CHECK(um::initial_seeds_band(gt, 0).seeds == full_seed_set(gt));

    const auto gone = um::initial_seeds_band(gt, 12);
    CHECK(gone.foreground_empty);
    CHECK(gone.seeds.count(Label::foreground) == 0);
    CHECK(gone.seeds.count(Label::background) > 0);
}

TEST_CASE("random initial seeds") {
    Rng rng(4);
    const LabelMask gt = disk(30, 20, 15, 10, 6);
    const SeedSet s = um::initial_seeds_random(gt, 0.3, rng);
    CHECK(s.size() == 180);
    for (const Seed& seed : s) CHECK(seed.label == label_of(gt[std::size_t(seed.position)]));
    Rng again(4);
    CHECK(um::initial_seeds_random(gt, 0.3, again) == s);
    CHECK_THROWS_AS((void)um::initial_seeds_random(gt, 1.0, rng), InvalidArgument);
}

TEST_CASE("update size is the ceiling of |E| n") {
    CHECK(um::update_size(100, 0.05) == 5);
    CHECK(um::update_size(101, 0.05) == 6);
    CHECK(um::update_size(1, 0.05) == 1);
    CHECK(um::update_size(0, 0.05) == 0);
    CHECK(um::update_size(20, 0.3) == 6);
    CHECK(um::update_size(7, 0.9) == 7);
    for (std::size_t e = 0; e < 3000; e += 7) {
        for (int num : {1, 3, 5, 30, 90}) {
            // Exact rational ceiling of e * num / 100.
            const std::size_t exact = (e * std::size_t(num) + 99) / 100;
            CHECK(um::update_size(e, num / 100.0) == exact);
        }
    }
}

TEST_CASE("error set excludes seeded pixels") {
    LabelMask gt(4, 1), pred(4, 1);
    gt[0] = 1;
    gt[1] = 1;
    pred[1] = 1;
    pred[2] = 1;
    const SeedSet seeds({{2, Label::background}});
    const SeedSet e = um::error_set(gt, pred, seeds);
    CHECK(e == SeedSet({{0, Label::foreground}}));
    CHECK(um::error_set(gt, pred, {}).size() == 2);
}

TEST_CASE("advance samples a labeled subset of the errors") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const LabelMask gt = random_mask(rng, 16, 16, 0.4);
        const LabelMask pred = random_mask(rng, 16, 16, 0.4);
        const double n = 0.01 + 0.9 * rng.uniform();
        um::InteractionState st;
        Rng seed_rng = Rng::stream(1, std::uint64_t(trial));
        st.seeds = um::initial_seeds_random(gt, 0.1, seed_rng);
        const SeedSet errors = um::error_set(gt, pred, st.seeds);
        um::Config cfg;
        cfg.n = n;
        const auto next = um::advance(st, gt, pred, cfg, rng);
        CHECK(next.seeds.is_superset_of(st.seeds));
        CHECK(next.seeds.size() - st.seeds.size() == um::update_size(errors.size(), n));
        for (const Seed& s : next.seeds) {
            if (st.seeds.contains(s.position)) continue;
            CHECK(errors.label_at(s.position) == s.label);
            CHECK(s.label == label_of(gt[std::size_t(s.position)]));
        }
        REQUIRE(next.history.size() == 1);
        CHECK(next.history[0].error_count == errors.size());
        CHECK(next.history[0].dice == dice(gt, pred));
    }
}

TEST_CASE("advance converges when the prediction is correct") {
    const LabelMask gt = disk(10, 10, 5, 5, 3);
    um::InteractionState st;
    st.seeds = SeedSet({{0, Label::background}});
    Rng rng(1);
    const auto next = um::advance(st, gt, gt, {}, rng);
    CHECK(next.converged);
    CHECK(next.seeds == st.seeds);
    CHECK(next.t == st.t);
    CHECK(next.history.back().error_count == 0);
    Rng empty_rng(1);
    CHECK(um::sample_update({}, 0.5, empty_rng).empty());
}

TEST_CASE("history csv") {
    const auto path = std::filesystem::temp_directory_path() / "uiseg_history.csv";
    um::write_history_csv(path, {{0, 10, 4, 0.5}, {1, 11, 2, 0.75}});
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "t,seed_count,error_count,dice");
    CHECK(row.rfind("0,10,4,", 0) == 0);
}

#include <doctest.h>

#include <set>

#include "uiseg/core.hpp"
#include "uiseg/rng.hpp"

using namespace uiseg;

namespace {

LabelMask random_mask(Rng& rng, int w, int h, double p) {
    LabelMask m(w, h);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < p ? 1 : 0;
    return m;
}

double dice_by_sets(const LabelMask& a, const LabelMask& b) {
    std::set<std::size_t> sa, sb, both;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i]) sa.insert(i);
        if (b[i]) sb.insert(i);
    }
    for (auto i : sa) {
        if (sb.count(i)) both.insert(i);
    }
    if (sa.empty() && sb.empty()) return 1.0;
    return 2.0 * double(both.size()) / double(sa.size() + sb.size());
}

}  // namespace

TEST_CASE("image values must lie in the unit interval") {
    CHECK_NOTHROW(Image2D(Grid<float>(3, 2, 0.5f)));
    CHECK_THROWS_AS(Image2D(Grid<float>(3, 2, 1.5f)), InvalidArgument);
    CHECK_THROWS_AS(Image2D(Grid<float>(3, 2, -0.1f)), InvalidArgument);
}

TEST_CASE("normalize maps the range endpoints and midpoint") {
    Grid<float> raw(3, 1);
    raw[0] = -100.0f;
    raw[1] = 450.0f;
    raw[2] = 1000.0f;
    const Image2D img = normalize_image(raw, -100.0, 1000.0);
    CHECK(img[0] == doctest::Approx(0.0));
    CHECK(img[1] == doctest::Approx(0.5));
    CHECK(img[2] == doctest::Approx(1.0));
    raw[0] = -500.0f;
    CHECK(normalize_image(raw, -100.0, 1000.0)[0] == 0.0f);
    CHECK_THROWS_AS((void)normalize_image(raw, 5.0, 5.0), InvalidArgument);
}

TEST_CASE("seed set insertion, conflicts and merge") {
    SeedSet s;
    s.insert({4, Label::foreground});
    s.insert({1, Label::background});
    s.insert({4, Label::foreground});
    CHECK(s.size() == 2);
    CHECK(s.seeds().front().position == 1);
    CHECK(s.label_at(4) == Label::foreground);
    CHECK_FALSE(s.label_at(2).has_value());
    CHECK_THROWS_AS(s.insert({4, Label::background}), SeedConflict);
    CHECK(s.size() == 2);

    SeedSet t;
    t.insert({7, Label::foreground});
    t.insert({1, Label::background});
    SeedSet u = s;
    u.merge(t);
    CHECK(u.size() == 3);
    CHECK(u.is_superset_of(s));
    CHECK(u.is_superset_of(t));
    CHECK_FALSE(s.is_superset_of(u));
    CHECK(u.count(Label::foreground) == 2);

    SeedSet bad;
    bad.insert({7, Label::background});
    CHECK_THROWS_AS(u.merge(bad), SeedConflict);
    CHECK_THROWS_AS(SeedSet({{3, Label::foreground}, {3, Label::background}}), SeedConflict);
}

TEST_CASE("seed rasterization round trip and bounds") {
    SeedSet s({{0, Label::foreground}, {5, Label::background}, {11, Label::foreground}});
    const SeedChannel c = rasterize_seeds(s, {4, 3});
    CHECK(c[0] == 1);
    CHECK(c[5] == -1);
    CHECK(c[11] == 1);
    CHECK(c[3] == 0);
    CHECK(seeds_from_channel(c) == s);
    CHECK_THROWS_AS((void)rasterize_seeds(SeedSet({{12, Label::foreground}}), {4, 3}), BoundsError);
    CHECK_THROWS_AS((void)rasterize_seeds(SeedSet({{-1, Label::foreground}}), {4, 3}), BoundsError);
}

TEST_CASE("full seed set reproduces the mask") {
    Rng rng(3);
    const LabelMask m = random_mask(rng, 9, 7, 0.4);
    const SeedSet g = full_seed_set(m);
    CHECK(g.size() == m.size());
    CHECK(mask_from_full_seed_set(g, m.shape()) == m);
    CHECK_THROWS_AS((void)mask_from_full_seed_set(SeedSet({{0, Label::foreground}}), m.shape()), InvalidArgument);
}

TEST_CASE("dice matches set counting on random pairs") {
    Rng rng(11);
    for (int k = 0; k < 100; ++k) {
        const double pa = rng.uniform();
        const double pb = rng.uniform();
        const LabelMask a = random_mask(rng, 24, 24, pa * pa);
        const LabelMask b = random_mask(rng, 24, 24, pb * pb);
        const double d = dice(a, b);
        CHECK(d == doctest::Approx(dice_by_sets(a, b)).epsilon(1e-12));
        CHECK(d == dice(b, a));
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        CHECK(dice(a, a) == 1.0);
    }
    const LabelMask empty(5, 5);
    CHECK(dice(empty, empty) == 1.0);
    LabelMask one(5, 5);
    one[3] = 1;
    CHECK(dice(empty, one) == 0.0);
    CHECK(dice(one, complement(one)) == 0.0);
    CHECK_THROWS_AS((void)dice(empty, LabelMask(4, 5)), ShapeMismatch);
}

TEST_CASE("crop and embed are inverse on the center") {
    Grid<int> g(6, 4);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = int(i);
    const Grid<int> c = crop_center(g, 2, 2);
    CHECK(c(0, 0) == g(2, 1));
    CHECK(c(1, 1) == g(3, 2));
    const Grid<int> e = embed_center(c, 6, 4, -1);
    CHECK(e(2, 1) == g(2, 1));
    CHECK(e(0, 0) == -1);
    CHECK(crop_center(e, 2, 2) == c);
    CHECK_THROWS((void)crop_center(g, 3, 2));
    CHECK_THROWS((void)crop_center(g, 8, 2));
}

TEST_CASE("rng is deterministic and bounded") {
    Rng a(42), b(42), c(43);
    std::vector<std::uint64_t> va, vb, vc;
    for (int i = 0; i < 20; ++i) {
        va.push_back(a.next());
        vb.push_back(b.next());
        vc.push_back(c.next());
    }
    CHECK(va == vb);
    CHECK(va != vc);
    Rng r(1);
    for (int i = 0; i < 1000; ++i) {
        CHECK(r.below(7) < 7);
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    const auto idx = r.sample_indices(50, 20);
    CHECK(idx.size() == 20);
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 20);
    for (auto i : idx) CHECK(i < 50);
    CHECK(Rng::stream(5, 1).next() == Rng::stream(5, 1).next());
    CHECK(Rng::stream(5, 1).next() != Rng::stream(5, 2).next());

    Rng n(9);
    double sum = 0.0, sq = 0.0;
    const int count = 20000;
    for (int i = 0; i < count; ++i) {
        const double x = n.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / count) < 0.05);
    CHECK(std::abs(sq / count - 1.0) < 0.05);
}

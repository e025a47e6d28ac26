#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "uiseg/net/checkpoint.hpp"
#include "uiseg/net/shapes.hpp"
#include "uiseg/net/unet.hpp"

using namespace uiseg;
using namespace uiseg::net;

namespace {

// Reference side arithmetic written out level by level.
int reference_output(int depth, int in) {
    std::vector<int> skips;
    int s = in;
    for (int l = 0; l < depth; ++l) {
        s -= 4;
        skips.push_back(s);
        if (s <= 0 || s % 2) return -1;
        s /= 2;
    }
    s -= 4;
    for (int l = depth - 1; l >= 0; --l) {
        if (s <= 0) return -1;
        s *= 2;
        if ((skips[std::size_t(l)] - s) % 2 || skips[std::size_t(l)] < s) return -1;
        s -= 4;
    }
    return s > 0 ? s : -1;
}

// conv3x3 in->out: out * (9 in + 1); up 2x2 in->out: out * (4 in + 1); head: classes * (base + 1).
std::size_t reference_parameter_count(const NetworkConfig& c) {
    auto conv = [](int in, int out) { return std::size_t(out) * (9 * std::size_t(in) + 1); };
    auto up = [](int in, int out) { return std::size_t(out) * (4 * std::size_t(in) + 1); };
    std::size_t total = 0;
    int in = c.in_channels;
    for (int l = 0; l <= c.depth; ++l) {
        const int f = c.base_filters << l;
        total += conv(in, f) + conv(f, f);
        in = f;
    }
    for (int l = c.depth - 1; l >= 0; --l) {
        const int f = c.base_filters << l;
        total += up(2 * f, f) + conv(2 * f, f) + conv(f, f);
    }
    return total + std::size_t(c.out_classes) * (std::size_t(c.base_filters) + 1);
}

template <typename S>
Tensor<S> random_input(Rng& rng, int side) {
    Tensor<S> t(2, side, side);
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            t.at(0, y, x) = S(rng.uniform());
            t.at(1, y, x) = S(int(rng.below(3)) - 1);
        }
    }
    return t;
}

}  // namespace

TEST_CASE("io shape arithmetic") {
    CHECK(compute_io_shapes(4, 284).output_side == 100);
    CHECK(compute_io_shapes(3, 140).output_side == 52);
    CHECK(compute_io_shapes(2, 76).output_side == 36);
    CHECK(compute_io_shapes(4, 572).output_side == 388);
    CHECK(compute_io_shapes(1, 20).output_side == 4);
    CHECK(compute_io_shapes(1, 18).output_side == 2);
    CHECK_FALSE(compute_io_shapes(1, 16).feasible);
    CHECK_FALSE(compute_io_shapes(4, 283).feasible);
    CHECK_FALSE(compute_io_shapes(3, 141).reason.empty());
    CHECK_THROWS_AS((void)compute_io_shapes(0, 100), InvalidArgument);
    for (int depth = 1; depth <= 4; ++depth) {
        for (int in = 1; in <= 300; ++in) {
            const auto s = compute_io_shapes(depth, in);
            const int ref = reference_output(depth, in);
            CHECK(s.feasible == (ref > 0));
            if (s.feasible) CHECK(s.output_side == ref);
        }
    }
    const auto s = compute_io_shapes(3, 140);
    CHECK(s.encoder_sides == std::vector<int>{136, 64, 28});
    CHECK(s.bottleneck_side == 10);
}

TEST_CASE("network configuration") {
    NetworkConfig c;
    CHECK(c.filter_ladder() == std::vector<int>{8, 16, 32, 64});
    CHECK(c.output_side() == 52);
    NetworkConfig bad = c;
    bad.input_side = 141;
    CHECK_THROWS_AS(bad.validate(), GeometryError);
    const nlohmann::json j = c;
    CHECK(j.get<NetworkConfig>() == c);
}

TEST_CASE("parameter counts") {
    Rng rng(1);
    NetworkConfig toy{1, 1, 2, 2, 20};
    CHECK(UNet<double>(toy, rng).parameter_count() == 129);
    CHECK(reference_parameter_count(toy) == 129);
    NetworkConfig desk;
    CHECK(UNet<float>(desk, rng).parameter_count() == reference_parameter_count(desk));
    CHECK(UNet<float>(desk, rng).parameter_count() == 120762);
    CHECK_THROWS_AS(UNet<float>(desk, std::vector<float>(10)), CheckpointError);
}

TEST_CASE("initialization statistics") {
    Rng rng(2);
    NetworkConfig c{2, 16, 2, 2, 76};
    const UNet<float> m(c, rng);
    // First conv: 16 x 18 weights with std sqrt(2/18), then 16 zero biases.
    const auto p = m.parameters();
    double sq = 0.0;
    for (int i = 0; i < 16 * 18; ++i) sq += double(p[std::size_t(i)]) * p[std::size_t(i)];
    CHECK(std::sqrt(sq / (16 * 18)) == doctest::Approx(std::sqrt(2.0 / 18)).epsilon(0.15));
    for (int i = 16 * 18; i < 16 * 19; ++i) CHECK(p[std::size_t(i)] == 0.0f);
}

TEST_CASE("forward shapes and probabilities") {
    Rng rng(3);
    const UNet<float> m(NetworkConfig{2, 4, 2, 2, 76}, rng);
    const auto logits = m.forward(random_input<float>(rng, 76));
    CHECK(logits.channels == 2);
    CHECK(logits.height == 36);
    CHECK(logits.width == 36);
    const auto p = softmax(logits);
    for (std::size_t i = 0; i < p.plane(); ++i) CHECK(p.data[i] + p.data[i + p.plane()] == doctest::Approx(1.0f));
    CHECK_THROWS((void)m.forward(Tensor<float>(2, 70, 70)));
}

TEST_CASE("prediction ties go to background; loss oracle") {
    Probabilities p{Grid<float>(2, 1, 0.5f), Grid<float>(2, 1, 0.5f)};
    p.background[1] = 0.2f;
    p.foreground[1] = 0.8f;
    const LabelMask m = predict_mask(p);
    CHECK(m[0] == 0);
    CHECK(m[1] == 1);
    LabelMask gt(2, 1);
    gt[1] = 1;
    CHECK(loss(p, gt) == doctest::Approx((-std::log(0.5) - std::log(0.8)) / 2));

    Tensor<double> logits(2, 1, 2);
    logits.at(0, 0, 0) = 1.0;
    logits.at(1, 0, 0) = 3.0;
    Tensor<double> d;
    const double ce = softmax_cross_entropy(logits, gt, &d, 2.0);
    const double p_fg0 = 1.0 / (1.0 + std::exp(-2.0));
    CHECK(ce == doctest::Approx((-std::log(1.0 - p_fg0) - std::log(0.5)) / 2));
    CHECK(d.at(1, 0, 0) == doctest::Approx(2.0 * p_fg0 / 2));
    CHECK(d.at(1, 0, 1) == doctest::Approx(2.0 * (0.5 - 1.0) / 2));
}

TEST_CASE("analytic gradient matches central differences") {
    Rng rng(4);
    for (const NetworkConfig& cfg : {NetworkConfig{1, 2, 2, 2, 20}, NetworkConfig{2, 2, 2, 2, 44}}) {
        UNet<double> m(cfg, rng);
        for (auto& v : m.parameters()) v += 0.05 * rng.normal();
        const auto input = random_input<double>(rng, cfg.input_side);
        const int out = m.output_side();
        LabelMask gt(out, out);
        for (auto& v : gt) v = std::uint8_t(rng.below(2));

        typename UNet<double>::Cache cache;
        Tensor<double> dlogits;
        softmax_cross_entropy(m.forward(input, &cache), gt, &dlogits);
        AlignedVector<double> grad(m.parameter_count(), 0.0);
        m.backward(cache, dlogits, grad);

        const double h = 1e-6;
        double diff = 0.0, norm = 0.0;
        auto params = m.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double keep = params[i];
            params[i] = keep + h;
            const double up = softmax_cross_entropy(m.forward(input), gt, static_cast<Tensor<double>*>(nullptr));
            params[i] = keep - h;
            const double down = softmax_cross_entropy(m.forward(input), gt, static_cast<Tensor<double>*>(nullptr));
            params[i] = keep;
            const double numeric = (up - down) / (2 * h);
            diff += (numeric - grad[i]) * (numeric - grad[i]);
            norm += std::max(numeric * numeric, grad[i] * grad[i]);
        }
        CHECK(std::sqrt(diff / norm) <= 1e-4);
    }
}

TEST_CASE("checkpoint round trip and configuration mismatch") {
    Rng rng(5);
    const NetworkConfig cfg{2, 4, 2, 2, 76};
    const UNet<float> m(cfg, rng);
    const auto path = std::filesystem::temp_directory_path() / "uiseg_ckpt_test.uisn";
    save(m, path, {{"epochs", 3}});
    const auto ck = load(path, cfg);
    CHECK(ck.config == cfg);
    CHECK(ck.metadata["epochs"] == 3);
    CHECK(ck.metadata.contains("init"));
    CHECK(std::equal(ck.parameters.begin(), ck.parameters.end(), m.parameters().begin()));
    Tensor<float> in = random_input<float>(rng, 76);
    CHECK(ck.model().forward(in).data == m.forward(in).data);

    NetworkConfig other = cfg;
    other.base_filters = 8;
    CHECK_THROWS_AS((void)load(path, other), CheckpointError);

    const auto bytes = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, bytes - 10);
    CHECK_THROWS_AS((void)load(path), CheckpointError);
    std::ofstream(path) << "nonsense";
    CHECK_THROWS_AS((void)load(path), CheckpointError);
}

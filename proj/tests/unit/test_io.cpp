#include <doctest.h>

#include <filesystem>

#include "uiseg/io.hpp"
#include "uiseg/rng.hpp"

using namespace uiseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path p = fs::temp_directory_path() / "uiseg_io_test";
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("png round trips") {
    Rng rng(5);
    LabelMask m(13, 7);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.below(2);
    CHECK(io::decode_png_mask(io::encode_png(m)) == m);

    SeedChannel c(6, 5);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::int8_t(int(rng.below(3)) - 1);
    CHECK(io::decode_png_seed_channel(io::encode_png(c)) == c);

    Grid<float> g(8, 8);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = float(rng.below(256)) / 255.0f;
    const Image2D img(g);
    const Image2D back = io::decode_png_image(io::encode_png(img));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(back[i] == doctest::Approx(img[i]).epsilon(1e-6));

    const io::Bytes junk{1, 2, 3, 4};
    CHECK_THROWS_AS((void)io::decode_png_mask(junk), IoError);
}

TEST_CASE("binary grids and volumes round trip") {
    const fs::path dir = temp_dir();
    Grid<float> f(5, 3);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = float(i) * 0.25f - 1.0f;
    io::write_grid(dir / "f.bin", f);
    CHECK(io::read_grid_f32(dir / "f.bin") == f);

    Grid<std::int8_t> s(2, 2);
    s[1] = -1;
    s[2] = 1;
    io::write_grid(dir / "s.bin", s);
    CHECK(io::read_grid_i8(dir / "s.bin") == s);
    CHECK_THROWS_AS((void)io::read_grid_u8(dir / "s.bin"), IoError);

    const auto bytes = io::encode_grid(s);
    CHECK(bytes.size() == 4 + 4 + 4 + 4 + 1 + 4);
    CHECK(bytes[0] == 'U');

    Volume<std::uint8_t> v(3, 4, 2);
    v(1, 2, 1) = 7;
    io::write_volume(dir / "v.bin", v);
    const auto w = io::read_volume_u8(dir / "v.bin");
    CHECK(w.dim_x() == 3);
    CHECK(w.dim_z() == 2);
    CHECK(w(1, 2, 1) == 7);
    CHECK_THROWS_AS((void)io::read_volume_f32(dir / "missing.bin"), IoError);
}

TEST_CASE("seed json round trip") {
    const SeedSet s({{3, Label::foreground}, {10, Label::background}});
    const auto j = io::seeds_to_json(s);
    CHECK(j.size() == 2);
    CHECK(j[0]["label"] == "fg");
    CHECK(io::seeds_from_json(j) == s);
    CHECK_THROWS_AS((void)io::seeds_from_json(nlohmann::json::parse(R"([{"p":1,"label":"x"}])")), InvalidArgument);
}

TEST_CASE("base64 matches reference encodings") {
    auto enc = [](std::string s) {
        return io::base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    };
    CHECK(enc("") == "");
    CHECK(enc("f") == "Zg==");
    CHECK(enc("fo") == "Zm8=");
    CHECK(enc("foo") == "Zm9v");
    CHECK(enc("foobar") == "Zm9vYmFy");
    const auto d = io::base64_decode("Zm9vYmE=");
    CHECK(std::string(d.begin(), d.end()) == "fooba");
    Rng rng(2);
    io::Bytes raw(257);
    for (auto& b : raw) b = std::uint8_t(rng.below(256));
    CHECK(io::base64_decode(io::base64_encode(raw)) == raw);
}

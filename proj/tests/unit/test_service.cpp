#include <doctest.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "uiseg/io.hpp"
#include "uiseg/service.hpp"

using namespace uiseg;
using namespace uiseg::service;
using nlohmann::json;

namespace {

Image2D two_tone(int w, int h) {
    Grid<float> g(w, h, 0.2f);
    for (int y = 0; y < h; ++y) {
        for (int x = w / 2; x < w; ++x) g(x, y) = 0.8f;
    }
    return Image2D(g);
}

std::string png_b64(const Image2D& img) { return io::base64_encode(io::encode_png(img)); }

}  // namespace

TEST_CASE("mirror indexing") {
    const std::vector<int> expected{2, 1, 0, 1, 2, 3, 2, 1, 0, 1};
    for (int i = -2; i < 8; ++i) CHECK(mirror_index(i, 4) == expected[std::size_t(i + 2)]);
    CHECK(mirror_index(-7, 1) == 0);
    CHECK(mirror_index(11, 3) == 1);
    const Image2D img = two_tone(4, 3);
    const Image2D p = mirror_pad(img, 2, 1, 8, 5);
    CHECK(p(2, 1) == img(0, 0));
    CHECK(p(0, 1) == img(2, 0));
    CHECK(p(7, 0) == img(mirror_index(5, 4), 1));
}

TEST_CASE("uinet engine stitches mirror-padded tiles") {
    Rng rng(3);
    const net::NetworkConfig cfg{1, 4, 2, 2, 28};  // 28 -> 12, margin 8
    const UinetEngine engine(net::UNet<float>(cfg, rng));
    const net::UNet<float> model(cfg, *std::make_unique<Rng>(3));
    const Image2D img = two_tone(30, 20);
    const SeedSet seeds({{5, Label::foreground}, {599, Label::background}});
    const LabelMask mask = engine.segment(img, seeds);
    CHECK(mask.shape() == img.shape());
    CHECK(engine.segment(img, seeds) == mask);

    // Tile (1, 0) covers output pixels x in [12, 24), y in [0, 12).
    const Image2D padded = mirror_pad(img, 8, 8, 3 * 12 + 16, 2 * 12 + 16);
    Grid<float> crop(28, 28);
    SeedChannel ch(28, 28);
    const SeedChannel full = rasterize_seeds(seeds, img.shape());
    for (int y = 0; y < 28; ++y) {
        for (int x = 0; x < 28; ++x) {
            crop(x, y) = padded(12 + x, y);
            const int ix = 12 + x - 8;
            const int iy = y - 8;
            ch(x, y) = full.in_bounds(ix, iy) ? full(ix, iy) : std::int8_t{0};
        }
    }
    const LabelMask part = net::predict_mask(net::forward(model, Image2D(crop), ch));
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 12; ++x) CHECK(mask(12 + x, y) == part(x, y));
    }
}

TEST_CASE("session store semantics") {
    SessionStore store;
    register_engines(store, std::nullopt);
    CHECK(store.engines() == std::vector<std::string>{"growcut"});
    const Image2D img = two_tone(10, 6);
    LabelMask gt(10, 6);
    for (int y = 0; y < 6; ++y) {
        for (int x = 5; x < 10; ++x) gt(x, y) = 1;
    }
    const auto a = store.create(img, "growcut", gt);
    const auto b = store.create(img, "growcut");
    CHECK(a != b);
    CHECK_THROWS_AS((void)store.create(img, "uinet:none"), NotFound);
    CHECK_THROWS_AS((void)store.create(img, "growcut", LabelMask(3, 3)), InvalidArgument);
    CHECK_THROWS_AS((void)store.segmentation(a), StateConflict);

    CHECK_THROWS_AS((void)store.add_scribbles(a, {{9, 0, Label::foreground}}), InsufficientSeeds);
    CHECK(store.seeds(a).size() == 1);
    const auto r = store.add_scribbles(a, {{0, 0, Label::background}});
    CHECK(r.iteration == 1);
    CHECK(r.seed_count == 2);
    REQUIRE(r.dice.has_value());
    CHECK(*r.dice == 1.0);
    CHECK(r.mask == gt);
    CHECK(store.segmentation(a).mask == gt);

    CHECK_THROWS_AS((void)store.add_scribbles(a, {{0, 0, Label::foreground}}), SeedConflict);
    CHECK_THROWS_AS((void)store.add_scribbles(a, {{10, 0, Label::foreground}}), BoundsError);
    CHECK_THROWS_AS((void)store.add_scribbles(a, {{1, 1, Label::foreground}, {1, 1, Label::background}}),
                    SeedConflict);
    CHECK(store.seeds(a).size() == 2);

    store.remove(a);
    CHECK_THROWS_AS((void)store.segmentation(a), NotFound);
    CHECK_THROWS_AS(store.remove(a), NotFound);
    CHECK(store.size() == 1);
}

TEST_CASE("sessions expire after the ttl") {
    SessionStore store(std::chrono::seconds(0));
    register_engines(store, std::nullopt);
    const auto id = store.create(two_tone(4, 4), "growcut");
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    store.expire();
    CHECK(store.size() == 0);
    CHECK_THROWS_AS((void)store.seeds(id), NotFound);
}

TEST_CASE("concurrent sessions stay isolated") {
    SessionStore store;
    register_engines(store, std::nullopt);
    const Image2D img = two_tone(16, 16);
    std::vector<std::string> ids;
    for (int i = 0; i < 4; ++i) ids.push_back(store.create(img, "growcut"));
    std::vector<std::thread> workers;
    for (int i = 0; i < 4; ++i) {
        workers.emplace_back([&, i] {
            for (int k = 0; k <= i; ++k) {
                (void)store.add_scribbles(ids[std::size_t(i)], {{k, 0, Label::background}, {15 - k, 15, Label::foreground}});
            }
        });
    }
    for (auto& w : workers) w.join();
    for (int i = 0; i < 4; ++i) {
        CHECK(store.seeds(ids[std::size_t(i)]).size() == std::size_t(2 * (i + 1)));
        CHECK(store.segmentation(ids[std::size_t(i)]).iteration == i + 1);
    }
}

TEST_CASE("http api") {
    SessionStore store;
    register_engines(store, std::nullopt);
    Server server(store, ServerConfig{"127.0.0.1", 0, std::nullopt});
    const int port = server.start();
    httplib::Client cli("127.0.0.1", port);

    auto models = cli.Get("/models");
    REQUIRE(models);
    CHECK(models->status == 200);
    CHECK(json::parse(models->body)["engines"] == json::array({"growcut"}));

    const Image2D img = two_tone(12, 8);
    LabelMask gt(12, 8);
    for (int y = 0; y < 8; ++y) {
        for (int x = 6; x < 12; ++x) gt(x, y) = 1;
    }
    const json create = {{"image_png_b64", png_b64(img)},
                         {"engine", "growcut"},
                         {"gt_png_b64", io::base64_encode(io::encode_png(gt))}};
    auto res = cli.Post("/sessions", create.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 201);
    const std::string id = json::parse(res->body)["session_id"];
    const std::string id2 = json::parse(cli.Post("/sessions", create.dump(), "application/json")->body)["session_id"];
    CHECK(id != id2);

    CHECK(cli.Get("/sessions/" + id + "/segmentation")->status == 409);

    const json scribbles = {{"seeds", {{{"x", 0}, {"y", 0}, {"label", "bg"}}, {{"x", 11}, {"y", 7}, {"label", "fg"}}}}};
    res = cli.Post("/sessions/" + id + "/scribbles", scribbles.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const json body = json::parse(res->body);
    CHECK(body["iteration"] == 1);
    CHECK(body["seed_count"] == 2);
    CHECK(body["dice"] == 1.0);
    CHECK(io::decode_png_mask(io::base64_decode(body["mask_png_b64"].get<std::string>())) == gt);

    const json replay = json::parse(cli.Post("/sessions/" + id2 + "/scribbles", scribbles.dump(), "application/json")->body);
    CHECK(replay["mask_png_b64"] == body["mask_png_b64"]);

    res = cli.Get("/sessions/" + id + "/segmentation");
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["mask_png_b64"] == body["mask_png_b64"]);
    res = cli.Get("/sessions/" + id + "/segmentation.bin");
    CHECK(res->status == 200);
    CHECK(res->body.size() == 17 + 12 * 8);

    const json conflict = {{"seeds", {{{"x", 0}, {"y", 0}, {"label", "fg"}}}}};
    CHECK(cli.Post("/sessions/" + id + "/scribbles", conflict.dump(), "application/json")->status == 409);
    const json outside = {{"seeds", {{{"x", 12}, {"y", 0}, {"label", "fg"}}}}};
    CHECK(cli.Post("/sessions/" + id + "/scribbles", outside.dump(), "application/json")->status == 400);
    CHECK(cli.Post("/sessions/" + id + "/scribbles", "{not json", "application/json")->status == 400);

    const std::string id3 = json::parse(cli.Post("/sessions", create.dump(), "application/json")->body)["session_id"];
    const json fg_only = {{"seeds", {{{"x", 11}, {"y", 7}, {"label", "fg"}}}}};
    CHECK(cli.Post("/sessions/" + id3 + "/scribbles", fg_only.dump(), "application/json")->status == 422);

    const json bad_engine = {{"image_png_b64", png_b64(img)}, {"engine", "uinet:missing"}};
    CHECK(cli.Post("/sessions", bad_engine.dump(), "application/json")->status == 404);
    const json bad_image = {{"image_png_b64", "AAAA"}, {"engine", "growcut"}};
    CHECK(cli.Post("/sessions", bad_image.dump(), "application/json")->status == 400);

    CHECK(cli.Delete("/sessions/" + id)->status == 200);
    CHECK(cli.Get("/sessions/" + id + "/segmentation")->status == 404);
    CHECK(cli.Delete("/sessions/" + id)->status == 404);
    CHECK(cli.Post("/sessions/nope/scribbles", scribbles.dump(), "application/json")->status == 404);
    server.stop();
}

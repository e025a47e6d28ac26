#include "uiseg/service.hpp"

#include <cstdio>
#include <random>

#include <httplib.h>
#include <json.hpp>

#include "uiseg/growcut.hpp"
#include "uiseg/io.hpp"
#include "uiseg/net/checkpoint.hpp"
#include "uiseg/rng.hpp"

namespace uiseg::service {

using nlohmann::json;

LabelMask GrowCutEngine::segment(const Image2D& image, const SeedSet& seeds) const {
    return growcut::segment(image, seeds, 0, threads_).mask;
}

int mirror_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

Image2D mirror_pad(const Image2D& image, int left, int top, int width, int height) {
    Grid<float> out(width, height);
    for (int y = 0; y < height; ++y) {
        const int sy = mirror_index(y - top, image.height());
        for (int x = 0; x < width; ++x) out(x, y) = image(mirror_index(x - left, image.width()), sy);
    }
    return Image2D(std::move(out));
}

LabelMask UinetEngine::segment(const Image2D& image, const SeedSet& seeds) const {
    const int in = model_.input_side();
    const int out = model_.output_side();
    const int margin = (in - out) / 2;
    const int tiles_x = (image.width() + out - 1) / out;
    const int tiles_y = (image.height() + out - 1) / out;
    const int padded_w = tiles_x * out + 2 * margin;
    const int padded_h = tiles_y * out + 2 * margin;
    const Image2D padded = mirror_pad(image, margin, margin, padded_w, padded_h);
    const SeedChannel channel = embed_center(rasterize_seeds(seeds, image.shape()), image.width() + 2 * margin,
                                             image.height() + 2 * margin, std::int8_t{0});

    LabelMask mask(image.shape());
    Grid<float> tile(in, in);
    SeedChannel tile_seeds(in, in);
    for (int ty = 0; ty < tiles_y; ++ty) {
        for (int tx = 0; tx < tiles_x; ++tx) {
            const int x0 = tx * out;
            const int y0 = ty * out;
            for (int y = 0; y < in; ++y) {
                for (int x = 0; x < in; ++x) {
                    tile(x, y) = padded(x0 + x, y0 + y);
                    const bool inside = channel.in_bounds(x0 + x, y0 + y);
                    tile_seeds(x, y) = inside ? channel(x0 + x, y0 + y) : std::int8_t{0};
                }
            }
            const LabelMask part = net::predict_mask(net::forward(model_, Image2D(tile), tile_seeds));
            for (int y = 0; y < out && y0 + y < image.height(); ++y) {
                for (int x = 0; x < out && x0 + x < image.width(); ++x) mask(x0 + x, y0 + y) = part(x, y);
            }
        }
    }
    return mask;
}

SessionStore::SessionStore(std::chrono::seconds ttl) : ttl_(ttl), salt_(std::random_device{}()) {}

void SessionStore::add_engine(const std::string& name, std::shared_ptr<const Engine> engine) {
    std::lock_guard lock(mutex_);
    engines_[name] = std::move(engine);
}

std::vector<std::string> SessionStore::engines() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> names;
    for (const auto& [name, _] : engines_) names.push_back(name);
    return names;
}

std::shared_ptr<const Engine> SessionStore::engine(const std::string& name) const {
    std::lock_guard lock(mutex_);
    const auto it = engines_.find(name);
    if (it == engines_.end()) throw NotFound("unknown engine '" + name + "'");
    return it->second;
}

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
    return it->second;
}

std::string SessionStore::create(const Image2D& image, const std::string& engine_name, std::optional<LabelMask> gt) {
    if (image.size() == 0) throw InvalidArgument("image is empty");
    if (gt && gt->shape() != image.shape()) {
        throw InvalidArgument("gt shape " + to_string(gt->shape()) + " differs from image shape " +
                              to_string(image.shape()));
    }
    (void)engine(engine_name);
    expire();
    auto s = std::make_shared<Session>();
    s->image = image;
    s->engine = engine_name;
    s->gt = std::move(gt);
    s->last_used = std::chrono::steady_clock::now();
    std::lock_guard lock(mutex_);
    const std::uint64_t n = ++counter_;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%08llx%08llx", static_cast<unsigned long long>(n),
                  static_cast<unsigned long long>(Rng::mix(salt_ ^ n) & 0xffffffffULL));
    sessions_.emplace(buf, std::move(s));
    return buf;
}

SegmentationResponse SessionStore::add_scribbles(const std::string& id, const std::vector<PixelSeed>& seeds) {
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    s->last_used = std::chrono::steady_clock::now();
    SeedSet merged = s->seeds;
    for (const auto& p : seeds) {
        if (p.x < 0 || p.y < 0 || p.x >= s->image.width() || p.y >= s->image.height()) {
            throw BoundsError("seed (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside image " +
                              to_string(s->image.shape()));
        }
        const std::int64_t pos = std::int64_t(p.y) * s->image.width() + p.x;
        if (const auto existing = merged.label_at(pos); existing && *existing != p.label) {
            throw SeedConflict("seed (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                               ") already carries the opposite label");
        }
        merged.insert({pos, p.label});
    }
    s->seeds = std::move(merged);
    const auto eng = engine(s->engine);
    s->mask = eng->segment(s->image, s->seeds);
    ++s->iteration;
    SegmentationResponse r{*s->mask, s->iteration, s->seeds.size(), std::nullopt};
    if (s->gt) r.dice = dice(*s->mask, *s->gt);
    return r;
}

SegmentationResponse SessionStore::segmentation(const std::string& id) const {
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    s->last_used = std::chrono::steady_clock::now();
    if (!s->mask) throw StateConflict("no segmentation yet for session '" + id + "'");
    SegmentationResponse r{*s->mask, s->iteration, s->seeds.size(), std::nullopt};
    if (s->gt) r.dice = dice(*s->mask, *s->gt);
    return r;
}

SeedSet SessionStore::seeds(const std::string& id) const {
    const auto s = find(id);
    std::lock_guard lock(s->mutex);
    return s->seeds;
}

void SessionStore::remove(const std::string& id) {
    std::lock_guard lock(mutex_);
    if (sessions_.erase(id) == 0) throw NotFound("unknown session '" + id + "'");
}

std::size_t SessionStore::size() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

void SessionStore::expire() {
    const auto now = std::chrono::steady_clock::now();
    std::lock_guard lock(mutex_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        std::unique_lock session_lock(it->second->mutex, std::try_to_lock);
        if (session_lock.owns_lock() && now - it->second->last_used > ttl_) {
            session_lock.unlock();
            it = sessions_.erase(it);
        } else {
            ++it;
        }
    }
}

void register_engines(SessionStore& store, const std::optional<std::filesystem::path>& checkpoint_dir,
                      int growcut_threads) {
    store.add_engine("growcut", std::make_shared<GrowCutEngine>(growcut_threads));
    if (!checkpoint_dir) return;
    if (!std::filesystem::is_directory(*checkpoint_dir)) {
        throw IoError("checkpoint directory " + checkpoint_dir->string() + " does not exist");
    }
    for (const auto& entry : std::filesystem::directory_iterator(*checkpoint_dir)) {
        if (entry.path().extension() != ".uisn") continue;
        const auto ckpt = net::load(entry.path());
        store.add_engine("uinet:" + entry.path().stem().string(), std::make_shared<UinetEngine>(ckpt.model()));
    }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json payload(const SegmentationResponse& r) {
    json j = {{"mask_png_b64", io::base64_encode(io::encode_png(r.mask))},
              {"iteration", r.iteration},
              {"seed_count", r.seed_count}};
    if (r.dice) j["dice"] = *r.dice;
    return j;
}

Label parse_label(const json& j) {
    const auto s = j.get<std::string>();
    if (s == "fg" || s == "foreground") return Label::foreground;
    if (s == "bg" || s == "background") return Label::background;
    throw InvalidArgument("seed label must be fg or bg, got '" + s + "'");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const NotFound& e) {
        send_json(res, 404, {{"error", e.what()}});
    } catch (const SeedConflict& e) {
        send_json(res, 409, {{"error", e.what()}});
    } catch (const StateConflict& e) {
        send_json(res, 409, {{"error", e.what()}});
    } catch (const InsufficientSeeds& e) {
        send_json(res, 422, {{"error", e.what()}});
    } catch (const json::exception& e) {
        send_json(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
    } catch (const Error& e) {
        send_json(res, 400, {{"error", e.what()}});
    }
}

}  // namespace

Server::Server(SessionStore& store, ServerConfig cfg)
    : store_(store), cfg_(std::move(cfg)), http_(std::make_unique<httplib::Server>()) {
    routes();
}

Server::~Server() { stop(); }

void Server::routes() {
    auto& http = *http_;
    if (cfg_.static_dir && !http.set_mount_point("/", cfg_.static_dir->string())) {
        throw IoError("cannot serve static files from " + cfg_.static_dir->string());
    }
    http.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body);
            const auto png = io::base64_decode(body.at("image_png_b64").get<std::string>());
            const Image2D image = io::decode_png_image(png);
            std::optional<LabelMask> gt;
            if (body.contains("gt_png_b64") && !body["gt_png_b64"].is_null()) {
                gt = io::decode_png_mask(io::base64_decode(body["gt_png_b64"].get<std::string>()));
            }
            const std::string engine = body.value("engine", std::string("growcut"));
            send_json(res, 201, {{"session_id", store_.create(image, engine, std::move(gt))}});
        });
    });
    http.Post(R"(/sessions/([^/]+)/scribbles)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const json body = json::parse(req.body);
            std::vector<PixelSeed> seeds;
            for (const auto& s : body.at("seeds")) {
                seeds.push_back({s.at("x").get<int>(), s.at("y").get<int>(), parse_label(s.at("label"))});
            }
            send_json(res, 200, payload(store_.add_scribbles(req.matches[1], seeds)));
        });
    });
    http.Get(R"(/sessions/([^/]+)/segmentation)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, payload(store_.segmentation(req.matches[1]))); });
    });
    http.Get(R"(/sessions/([^/]+)/segmentation\.bin)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto bytes = io::encode_grid(store_.segmentation(req.matches[1]).mask);
            res.status = 200;
            res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
        });
    });
    http.Get("/models", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"engines", store_.engines()}});
    });
    http.Delete(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            store_.remove(req.matches[1]);
            send_json(res, 200, json::object());
        });
    });
}

bool Server::listen() { return http_->listen(cfg_.host, cfg_.port); }

int Server::start() {
    int port = cfg_.port;
    if (port == 0) {
        port = http_->bind_to_any_port(cfg_.host);
    } else if (!http_->bind_to_port(cfg_.host, port)) {
        port = -1;
    }
    if (port < 0) throw IoError("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
    worker_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
    return port;
}

void Server::stop() {
    if (http_) http_->stop();
    if (worker_.joinable()) worker_.join();
}

}  // namespace uiseg::service

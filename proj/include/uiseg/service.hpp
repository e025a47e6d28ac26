#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "uiseg/core.hpp"
#include "uiseg/error.hpp"
#include "uiseg/net/unet.hpp"

namespace httplib {
class Server;
}

namespace uiseg::service {

class NotFound : public Error {
public:
    using Error::Error;
};

// Request is valid but cannot be served in the session's current state.
class StateConflict : public Error {
public:
    using Error::Error;
};

// Stateless segmentation backend; must be safe to call concurrently.
class Engine {
public:
    virtual ~Engine() = default;
    [[nodiscard]] virtual LabelMask segment(const Image2D& image, const SeedSet& seeds) const = 0;
};

class GrowCutEngine : public Engine {
public:
    explicit GrowCutEngine(int threads = 1) : threads_(threads) {}
    [[nodiscard]] LabelMask segment(const Image2D& image, const SeedSet& seeds) const override;

private:
    int threads_;
};

// Runs the network over an image of any size: the image is mirror-padded,
// cut into input tiles whose output regions cover the image, and the outputs
// are stitched. The seed channel is zero outside the image.
class UinetEngine : public Engine {
public:
    explicit UinetEngine(net::UNet<float> model) : model_(std::move(model)) {}
    [[nodiscard]] LabelMask segment(const Image2D& image, const SeedSet& seeds) const override;

private:
    net::UNet<float> model_;
};

// Index into [0, n) reflecting at the borders without repeating the edge
// sample (..., 2, 1, 0, 1, 2, ...).
[[nodiscard]] int mirror_index(int i, int n);
[[nodiscard]] Image2D mirror_pad(const Image2D& image, int left, int top, int width, int height);

// Seed given in pixel coordinates.
struct PixelSeed {
    int x = 0;
    int y = 0;
    Label label = Label::foreground;
};

struct SegmentationResponse {
    LabelMask mask;
    int iteration = 0;  // number of scribble requests applied
    std::size_t seed_count = 0;
    std::optional<double> dice;
};

// Transport-independent session store. Requests for one session serialize on
// its own mutex; distinct sessions proceed in parallel.
class SessionStore {
public:
    explicit SessionStore(std::chrono::seconds ttl = std::chrono::hours(1));

    void add_engine(const std::string& name, std::shared_ptr<const Engine> engine);
    [[nodiscard]] std::vector<std::string> engines() const;

    // Throws NotFound for an unknown engine, InvalidArgument for an empty image
    // or a gt of different shape.
    [[nodiscard]] std::string create(const Image2D& image, const std::string& engine,
                                     std::optional<LabelMask> gt = std::nullopt);

    // Merges the seeds and re-runs the engine on the full seed set. Throws
    // NotFound, BoundsError (nothing merged) or SeedConflict (nothing merged).
    // Engine failures such as InsufficientSeeds leave the merged seeds in place.
    SegmentationResponse add_scribbles(const std::string& id, const std::vector<PixelSeed>& seeds);

    // Throws NotFound, or StateConflict before the first segmentation.
    [[nodiscard]] SegmentationResponse segmentation(const std::string& id) const;

    [[nodiscard]] SeedSet seeds(const std::string& id) const;

    // Throws NotFound.
    void remove(const std::string& id);

    [[nodiscard]] std::size_t size() const;

    // Drops sessions idle for longer than the TTL.
    void expire();

private:
    struct Session {
        mutable std::mutex mutex;
        Image2D image;
        std::string engine;
        std::optional<LabelMask> gt;
        SeedSet seeds;
        int iteration = 0;
        std::optional<LabelMask> mask;
        std::chrono::steady_clock::time_point last_used;
    };

    [[nodiscard]] std::shared_ptr<Session> find(const std::string& id) const;
    [[nodiscard]] std::shared_ptr<const Engine> engine(const std::string& name) const;

    std::chrono::seconds ttl_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const Engine>> engines_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t counter_ = 0;
    std::uint64_t salt_;
};

// Registers "growcut" plus one "uinet:<stem>" engine per *.uisn checkpoint in
// `dir` (if given).
void register_engines(SessionStore& store, const std::optional<std::filesystem::path>& checkpoint_dir,
                      int growcut_threads = 1);

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 binds an ephemeral port
    std::optional<std::filesystem::path> static_dir;
};

// HTTP/JSON front end:
//   POST   /sessions                      {image_png_b64, engine, gt_png_b64?} -> 201 {session_id}
//   POST   /sessions/{id}/scribbles       {seeds:[{x,y,label}]} -> {mask_png_b64, iteration, seed_count, dice?}
//   GET    /sessions/{id}/segmentation    same payload
//   GET    /sessions/{id}/segmentation.bin  mask as a binary grid
//   GET    /models                        {engines:[...]}
//   DELETE /sessions/{id}                 {}
// Errors are {"error": message} with 400, 404, 409 or 422.
class Server {
public:
    Server(SessionStore& store, ServerConfig cfg);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and serves until stop(); returns false when binding failed.
    bool listen();
    // Binds, then serves on a background thread. Returns the bound port.
    int start();
    void stop();

private:
    SessionStore& store_;
    ServerConfig cfg_;
    std::unique_ptr<httplib::Server> http_;
    std::thread worker_;

    void routes();
};

}  // namespace uiseg::service

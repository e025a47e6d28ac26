#include "uiseg/net/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace uiseg::net {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_u64(std::ofstream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw CheckpointError("truncated checkpoint");
    return v;
}

void put_string(std::ofstream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), std::streamsize(s.size()));
}

std::string get_string(std::ifstream& in) {
    const auto n = get_u64(in);
    if (n > (std::uint64_t(1) << 30)) throw CheckpointError("implausible string length in checkpoint");
    std::string s(n, '\0');
    in.read(s.data(), std::streamsize(n));
    if (!in) throw CheckpointError("truncated checkpoint");
    return s;
}

}  // namespace

void save(const UNet<float>& model, const std::filesystem::path& path, const nlohmann::json& metadata) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write("UISN", 4);
    out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
    nlohmann::json meta = metadata;
    if (!meta.contains("init")) meta["init"] = "normal(0, sqrt(2/fan_in)), zero bias";
    put_string(out, nlohmann::json(model.config()).dump());
    put_string(out, meta.dump());
    const auto params = model.parameters();
    put_u64(out, params.size());
    out.write(reinterpret_cast<const char*>(params.data()), std::streamsize(params.size() * sizeof(float)));
    if (!out) throw IoError("write failed for " + path.string());
}

ModelCheckpoint load(const std::filesystem::path& path, const std::optional<NetworkConfig>& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::memcmp(magic.data(), "UISN", 4) != 0) throw CheckpointError(path.string() + ": not a checkpoint");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    if (!in || version != kCheckpointVersion) throw CheckpointError(path.string() + ": unsupported checkpoint version");

    ModelCheckpoint ckpt;
    try {
        ckpt.config = nlohmann::json::parse(get_string(in)).get<NetworkConfig>();
        ckpt.metadata = nlohmann::json::parse(get_string(in));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": corrupt header (" + e.what() + ")");
    }
    if (expected && !(*expected == ckpt.config)) {
        throw CheckpointError(path.string() + ": stored configuration " + nlohmann::json(ckpt.config).dump() +
                              " does not match the requested " + nlohmann::json(*expected).dump());
    }
    const auto count = get_u64(in);
    ckpt.parameters.resize(count);
    in.read(reinterpret_cast<char*>(ckpt.parameters.data()), std::streamsize(count * sizeof(float)));
    if (!in) throw CheckpointError(path.string() + ": truncated parameters");
    // Validates geometry and parameter count.
    try {
        (void)UNet<float>(ckpt.config, ckpt.parameters);
    } catch (const Error& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
    return ckpt;
}

}  // namespace uiseg::net

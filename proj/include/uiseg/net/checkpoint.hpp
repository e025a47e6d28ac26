#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "uiseg/net/unet.hpp"

namespace uiseg::net {

// Weights, the network configuration, and free-form training metadata
// (epoch count, losses, seeds, initialization scheme).
struct ModelCheckpoint {
    NetworkConfig config;
    std::vector<float> parameters;
    nlohmann::json metadata = nlohmann::json::object();

    [[nodiscard]] UNet<float> model() const { return UNet<float>(config, parameters); }
};

// Binary layout: "UISN" magic, u32 version, u64 config-json length + bytes,
// u64 metadata-json length + bytes, u64 parameter count, float32 parameters.
void save(const UNet<float>& model, const std::filesystem::path& path,
          const nlohmann::json& metadata = nlohmann::json::object());

// Throws CheckpointError for a corrupt file, or when `expected` is given and
// the stored configuration differs from it.
[[nodiscard]] ModelCheckpoint load(const std::filesystem::path& path,
                                   const std::optional<NetworkConfig>& expected = std::nullopt);

}  // namespace uiseg::net

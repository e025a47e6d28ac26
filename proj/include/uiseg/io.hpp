#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "uiseg/core.hpp"

namespace uiseg::io {

using Bytes = std::vector<std::uint8_t>;

// Lossless 8-bit grayscale PNG. Masks map {0,1} -> {0,255}; seed channels map
// {-1,0,+1} -> {0,128,255}; images map [0,1] -> round(255 v).
Bytes encode_png(const LabelMask& mask);
Bytes encode_png(const SeedChannel& channel);
Bytes encode_png(const Image2D& image);
Bytes encode_png_gray(const Grid<std::uint8_t>& gray);

// Decodes any PNG to 8-bit grayscale.
Grid<std::uint8_t> decode_png_gray(std::span<const std::uint8_t> png);
LabelMask decode_png_mask(std::span<const std::uint8_t> png);          // nonzero -> 1
SeedChannel decode_png_seed_channel(std::span<const std::uint8_t> png);  // 0/128/255
Image2D decode_png_image(std::span<const std::uint8_t> png);            // gray / 255

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
Bytes read_file(const std::filesystem::path& path);

// Portable binary grid: "UISG" magic, u32 version, u32 width, u32 height,
// u8 element type, then row-major little-endian values. Volumes use the
// "UISV" magic with an extra u32 depth.
enum class ElementType : std::uint8_t { u8 = 1, i8 = 2, f32 = 3 };

Bytes encode_grid(const Grid<std::uint8_t>& g);
Bytes encode_grid(const Grid<std::int8_t>& g);
Bytes encode_grid(const Grid<float>& g);
void write_grid(const std::filesystem::path& path, const Grid<std::uint8_t>& g);
void write_grid(const std::filesystem::path& path, const Grid<std::int8_t>& g);
void write_grid(const std::filesystem::path& path, const Grid<float>& g);
Grid<std::uint8_t> read_grid_u8(const std::filesystem::path& path);
Grid<std::int8_t> read_grid_i8(const std::filesystem::path& path);
Grid<float> read_grid_f32(const std::filesystem::path& path);

void write_volume(const std::filesystem::path& path, const Volume<float>& v);
void write_volume(const std::filesystem::path& path, const Volume<std::uint8_t>& v);
Volume<float> read_volume_f32(const std::filesystem::path& path);
Volume<std::uint8_t> read_volume_u8(const std::filesystem::path& path);

// SeedSet <-> [{"p": int, "label": "fg"|"bg"}]
nlohmann::json seeds_to_json(const SeedSet& seeds);
SeedSet seeds_from_json(const nlohmann::json& j);

std::string base64_encode(std::span<const std::uint8_t> bytes);
Bytes base64_decode(std::string_view text);

}  // namespace uiseg::io

#include "uiseg/io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace uiseg::io {

static_assert(std::endian::native == std::endian::little,
              "binary grid I/O assumes a little-endian host");

namespace {

constexpr std::uint32_t kFormatVersion = 1;

Bytes encode_gray(int width, int height, const std::uint8_t* data) {
    cv::Mat mat(height, width, CV_8UC1, const_cast<std::uint8_t*>(data));
    std::vector<uchar> buf;
    if (!cv::imencode(".png", mat, buf, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
        throw IoError("PNG encoding failed");
    }
    return Bytes(buf.begin(), buf.end());
}

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated binary grid header");
    return v;
}

template <typename T>
constexpr ElementType element_type_of() {
    if constexpr (std::is_same_v<T, std::uint8_t>) return ElementType::u8;
    else if constexpr (std::is_same_v<T, std::int8_t>) return ElementType::i8;
    else return ElementType::f32;
}

template <typename T>
void append(Bytes& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
Bytes encode_grid_impl(const Grid<T>& g) {
    Bytes out{'U', 'I', 'S', 'G'};
    append(out, kFormatVersion);
    append(out, std::uint32_t(g.width()));
    append(out, std::uint32_t(g.height()));
    append(out, std::uint8_t(element_type_of<T>()));
    const auto* p = reinterpret_cast<const std::uint8_t*>(g.values().data());
    out.insert(out.end(), p, p + g.size() * sizeof(T));
    return out;
}

template <typename T>
Grid<T> read_grid_impl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::memcmp(magic.data(), "UISG", 4) != 0) throw IoError(path.string() + ": not a binary grid");
    if (get<std::uint32_t>(in) != kFormatVersion) throw IoError(path.string() + ": unsupported version");
    const auto w = get<std::uint32_t>(in);
    const auto h = get<std::uint32_t>(in);
    if (get<std::uint8_t>(in) != std::uint8_t(element_type_of<T>())) {
        throw IoError(path.string() + ": element type mismatch");
    }
    Grid<T> g(static_cast<int>(w), static_cast<int>(h));
    in.read(reinterpret_cast<char*>(g.values().data()), std::streamsize(g.size() * sizeof(T)));
    if (!in) throw IoError(path.string() + ": truncated body");
    return g;
}

template <typename T>
void write_volume_impl(const std::filesystem::path& path, const Volume<T>& v) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write("UISV", 4);
    put(out, kFormatVersion);
    put(out, std::uint32_t(v.dim_x()));
    put(out, std::uint32_t(v.dim_y()));
    put(out, std::uint32_t(v.dim_z()));
    put(out, std::uint8_t(element_type_of<T>()));
    out.write(reinterpret_cast<const char*>(v.values().data()),
              std::streamsize(v.values().size() * sizeof(T)));
    if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
Volume<T> read_volume_impl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::memcmp(magic.data(), "UISV", 4) != 0) throw IoError(path.string() + ": not a binary volume");
    if (get<std::uint32_t>(in) != kFormatVersion) throw IoError(path.string() + ": unsupported version");
    const auto x = get<std::uint32_t>(in);
    const auto y = get<std::uint32_t>(in);
    const auto z = get<std::uint32_t>(in);
    if (get<std::uint8_t>(in) != std::uint8_t(element_type_of<T>())) {
        throw IoError(path.string() + ": element type mismatch");
    }
    Volume<T> v(static_cast<int>(x), static_cast<int>(y), static_cast<int>(z));
    in.read(reinterpret_cast<char*>(v.values().data()), std::streamsize(v.values().size() * sizeof(T)));
    if (!in) throw IoError(path.string() + ": truncated body");
    return v;
}

}  // namespace

Bytes encode_png_gray(const Grid<std::uint8_t>& gray) {
    return encode_gray(gray.width(), gray.height(), gray.values().data());
}

Bytes encode_png(const LabelMask& mask) {
    Grid<std::uint8_t> gray(mask.shape());
    for (std::size_t p = 0; p < mask.size(); ++p) gray[p] = mask[p] ? 255 : 0;
    return encode_png_gray(gray);
}

Bytes encode_png(const SeedChannel& channel) {
    Grid<std::uint8_t> gray(channel.shape());
    for (std::size_t p = 0; p < channel.size(); ++p) {
        gray[p] = channel[p] > 0 ? 255 : (channel[p] < 0 ? 0 : 128);
    }
    return encode_png_gray(gray);
}

Bytes encode_png(const Image2D& image) {
    Grid<std::uint8_t> gray(image.shape());
    for (std::size_t p = 0; p < image.size(); ++p) {
        gray[p] = std::uint8_t(std::lround(image[p] * 255.0f));
    }
    return encode_png_gray(gray);
}

Grid<std::uint8_t> decode_png_gray(std::span<const std::uint8_t> png) {
    if (png.empty()) throw IoError("empty PNG payload");
    cv::Mat buf(1, int(png.size()), CV_8UC1, const_cast<std::uint8_t*>(png.data()));
    cv::Mat img = cv::imdecode(buf, cv::IMREAD_GRAYSCALE);
    if (img.empty()) throw IoError("PNG decoding failed");
    Grid<std::uint8_t> g(img.cols, img.rows);
    for (int y = 0; y < img.rows; ++y) {
        std::memcpy(&g(0, y), img.ptr<std::uint8_t>(y), std::size_t(img.cols));
    }
    return g;
}

LabelMask decode_png_mask(std::span<const std::uint8_t> png) {
    auto g = decode_png_gray(png);
    for (auto& v : g) v = v ? 1 : 0;
    return g;
}

SeedChannel decode_png_seed_channel(std::span<const std::uint8_t> png) {
    auto g = decode_png_gray(png);
    SeedChannel c(g.shape());
    for (std::size_t p = 0; p < g.size(); ++p) {
        switch (g[p]) {
            case 0: c[p] = -1; break;
            case 128: c[p] = 0; break;
            case 255: c[p] = 1; break;
            default: throw IoError("seed channel PNG value " + std::to_string(g[p]) + " not in {0,128,255}");
        }
    }
    return c;
}

Image2D decode_png_image(std::span<const std::uint8_t> png) {
    auto g = decode_png_gray(png);
    Grid<float> raw(g.shape());
    for (std::size_t p = 0; p < g.size(); ++p) raw[p] = float(g[p]);
    return normalize_image(raw, 0.0, 255.0);
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Bytes encode_grid(const Grid<std::uint8_t>& g) { return encode_grid_impl(g); }
Bytes encode_grid(const Grid<std::int8_t>& g) { return encode_grid_impl(g); }
Bytes encode_grid(const Grid<float>& g) { return encode_grid_impl(g); }
void write_grid(const std::filesystem::path& path, const Grid<std::uint8_t>& g) { write_file(path, encode_grid(g)); }
void write_grid(const std::filesystem::path& path, const Grid<std::int8_t>& g) { write_file(path, encode_grid(g)); }
void write_grid(const std::filesystem::path& path, const Grid<float>& g) { write_file(path, encode_grid(g)); }
Grid<std::uint8_t> read_grid_u8(const std::filesystem::path& path) { return read_grid_impl<std::uint8_t>(path); }
Grid<std::int8_t> read_grid_i8(const std::filesystem::path& path) { return read_grid_impl<std::int8_t>(path); }
Grid<float> read_grid_f32(const std::filesystem::path& path) { return read_grid_impl<float>(path); }

void write_volume(const std::filesystem::path& path, const Volume<float>& v) { write_volume_impl(path, v); }
void write_volume(const std::filesystem::path& path, const Volume<std::uint8_t>& v) { write_volume_impl(path, v); }
Volume<float> read_volume_f32(const std::filesystem::path& path) { return read_volume_impl<float>(path); }
Volume<std::uint8_t> read_volume_u8(const std::filesystem::path& path) { return read_volume_impl<std::uint8_t>(path); }

nlohmann::json seeds_to_json(const SeedSet& seeds) {
    auto arr = nlohmann::json::array();
    for (const Seed& s : seeds) {
        arr.push_back({{"p", s.position}, {"label", s.label == Label::foreground ? "fg" : "bg"}});
    }
    return arr;
}

SeedSet seeds_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw InvalidArgument("seed JSON must be an array");
    std::vector<Seed> seeds;
    seeds.reserve(j.size());
    for (const auto& e : j) {
        const auto label = e.at("label").get<std::string>();
        if (label != "fg" && label != "bg") throw InvalidArgument("seed label must be \"fg\" or \"bg\"");
        seeds.push_back({e.at("p").get<std::int64_t>(), label == "fg" ? Label::foreground : Label::background});
    }
    return SeedSet(std::move(seeds));
}

namespace {
constexpr std::string_view kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (std::uint32_t(bytes[i]) << 16) | (std::uint32_t(bytes[i + 1]) << 8) | bytes[i + 2];
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += kB64[v & 63];
    }
    if (const std::size_t rest = bytes.size() - i; rest > 0) {
        std::uint32_t v = std::uint32_t(bytes[i]) << 16;
        if (rest == 2) v |= std::uint32_t(bytes[i + 1]) << 8;
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += rest == 2 ? kB64[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

Bytes base64_decode(std::string_view text) {
    std::array<int, 256> table{};
    table.fill(-1);
    for (std::size_t i = 0; i < kB64.size(); ++i) table[std::uint8_t(kB64[i])] = int(i);
    Bytes out;
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=') break;
        if (c == '\n' || c == '\r' || c == ' ') continue;
        const int v = table[std::uint8_t(c)];
        if (v < 0) throw InvalidArgument("invalid base64 character");
        acc = (acc << 6) | std::uint32_t(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(std::uint8_t((acc >> bits) & 0xff));
        }
    }
    return out;
}

}  // namespace uiseg::io

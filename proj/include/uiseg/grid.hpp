#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uiseg/error.hpp"

namespace uiseg {

struct Shape2D {
    int width = 0;
    int height = 0;

    [[nodiscard]] std::int64_t size() const { return std::int64_t(width) * height; }
    auto operator<=>(const Shape2D&) const = default;
};

inline std::string to_string(Shape2D s) {
    return std::to_string(s.width) + "x" + std::to_string(s.height);
}

// Dense row-major 2-D grid. Position p = y * width + x.
template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;

    Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
        if (width <= 0 || height <= 0) {
            throw InvalidArgument("grid dimensions must be positive, got " +
                                  std::to_string(width) + "x" + std::to_string(height));
        }
        data_.assign(std::size_t(width) * std::size_t(height), fill);
    }

    explicit Grid(Shape2D shape, T fill = T{}) : Grid(shape.width, shape.height, fill) {}

    Grid(int width, int height, std::vector<T> values) : Grid(width, height) {
        if (values.size() != data_.size()) {
            throw ShapeMismatch("grid value count " + std::to_string(values.size()) +
                                " does not match " + std::to_string(width) + "x" +
                                std::to_string(height));
        }
        data_ = std::move(values);
    }

    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] int height() const { return height_; }
    [[nodiscard]] Shape2D shape() const { return {width_, height_}; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] bool in_bounds(int x, int y) const {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    T& operator()(int x, int y) { return data_[std::size_t(y) * width_ + x]; }
    const T& operator()(int x, int y) const { return data_[std::size_t(y) * width_ + x]; }

    T& operator[](std::size_t p) { return data_[p]; }
    const T& operator[](std::size_t p) const { return data_[p]; }

    [[nodiscard]] std::span<T> values() { return data_; }
    [[nodiscard]] std::span<const T> values() const { return data_; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    bool operator==(const Grid&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeMismatch(std::string(what) + ": shape " + to_string(a.shape()) + " vs " +
                            to_string(b.shape()));
    }
}

// Centered crop to (width, height). Offsets must be integral.
template <typename T>
Grid<T> crop_center(const Grid<T>& g, int width, int height) {
    const int dx = g.width() - width;
    const int dy = g.height() - height;
    if (dx < 0 || dy < 0 || dx % 2 != 0 || dy % 2 != 0) {
        throw ShapeMismatch("cannot center-crop " + to_string(g.shape()) + " to " +
                            std::to_string(width) + "x" + std::to_string(height));
    }
    Grid<T> out(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) out(x, y) = g(x + dx / 2, y + dy / 2);
    }
    return out;
}

// Inverse of crop_center: places g in the middle of a (width, height) grid.
template <typename T>
Grid<T> embed_center(const Grid<T>& g, int width, int height, T fill = T{}) {
    const int dx = width - g.width();
    const int dy = height - g.height();
    if (dx < 0 || dy < 0 || dx % 2 != 0 || dy % 2 != 0) {
        throw ShapeMismatch("cannot center-embed " + to_string(g.shape()) + " into " +
                            std::to_string(width) + "x" + std::to_string(height));
    }
    Grid<T> out(width, height, fill);
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) out(x + dx / 2, y + dy / 2) = g(x, y);
    }
    return out;
}

// Dense 3-D grid, index = (z * dim_y + y) * dim_x + x.
template <typename T>
class Volume {
public:
    Volume() = default;
    Volume(int dim_x, int dim_y, int dim_z, T fill = T{})
        : dims_{dim_x, dim_y, dim_z} {
        if (dim_x <= 0 || dim_y <= 0 || dim_z <= 0) {
            throw InvalidArgument("volume dimensions must be positive");
        }
        data_.assign(std::size_t(dim_x) * dim_y * dim_z, fill);
    }

    [[nodiscard]] int dim_x() const { return dims_[0]; }
    [[nodiscard]] int dim_y() const { return dims_[1]; }
    [[nodiscard]] int dim_z() const { return dims_[2]; }
    // Number of elements N = D1 * D2 * D3.
    [[nodiscard]] std::int64_t element_count() const {
        return std::int64_t(dims_[0]) * dims_[1] * dims_[2];
    }

    T& operator()(int x, int y, int z) {
        return data_[(std::size_t(z) * dims_[1] + y) * dims_[0] + x];
    }
    const T& operator()(int x, int y, int z) const {
        return data_[(std::size_t(z) * dims_[1] + y) * dims_[0] + x];
    }

    [[nodiscard]] std::span<T> values() { return data_; }
    [[nodiscard]] std::span<const T> values() const { return data_; }

    bool operator==(const Volume&) const = default;

private:
    int dims_[3] = {0, 0, 0};
    std::vector<T> data_;
};

}  // namespace uiseg

#pragma once

#include <cstdint>
#include <cstdlib>
#include <new>
#include <span>
#include <vector>

#include <json.hpp>

#include "uiseg/core.hpp"
#include "uiseg/net/shapes.hpp"
#include "uiseg/rng.hpp"

namespace uiseg::net {

struct NetworkConfig {
    int depth = 3;
    int base_filters = 8;
    int in_channels = 2;  // image + seed channel
    int out_classes = 2;
    int input_side = 140;

    void validate() const;
    [[nodiscard]] std::vector<int> filter_ladder() const;  // base * 2^level, level = 0..depth
    [[nodiscard]] IoShapes shapes() const { return compute_io_shapes(depth, input_side); }
    [[nodiscard]] int output_side() const;

    bool operator==(const NetworkConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

// Cache-line aligned storage so vectorized kernels see the same alignment on every run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::size_t alignment = 64;

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) {
        const std::size_t bytes = (n * sizeof(T) + alignment - 1) / alignment * alignment;
        if (void* p = std::aligned_alloc(alignment, bytes)) return static_cast<T*>(p);
        throw std::bad_alloc();
    }
    void deallocate(T* p, std::size_t) { std::free(p); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Channel-major activation tensor: index (c * height + y) * width + x.
template <typename S>
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    AlignedVector<S> data;

    Tensor() = default;
    Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(std::size_t(c) * h * w, S(0)) {}

    S& at(int c, int y, int x) { return data[(std::size_t(c) * height + y) * width + x]; }
    const S& at(int c, int y, int x) const { return data[(std::size_t(c) * height + y) * width + x]; }
    [[nodiscard]] std::size_t plane() const { return std::size_t(height) * width; }
};

// Valid-convolution U-net with a two-channel input and per-pixel class logits.
// Parameters live in one flat vector; layers address it by offset.
template <typename S>
class UNet {
public:
    struct ConvLayer {
        int in = 0;
        int out = 0;
        int kernel = 3;
        std::size_t weight_offset = 0;  // out x (in * kernel * kernel), row-major
        std::size_t bias_offset = 0;
    };
    struct UpLayer {
        int in = 0;
        int out = 0;
        std::size_t weight_offset = 0;  // 4 blocks (dy, dx) of out x in
        std::size_t bias_offset = 0;
    };

    struct Cache;

    // Fan-in scaled normal initialization (std = sqrt(2 / fan_in)), zero biases.
    UNet(const NetworkConfig& cfg, Rng& rng);
    UNet(const NetworkConfig& cfg, std::vector<S> parameters);

    [[nodiscard]] const NetworkConfig& config() const { return cfg_; }
    [[nodiscard]] int input_side() const { return cfg_.input_side; }
    [[nodiscard]] int output_side() const { return shapes_.output_side; }
    [[nodiscard]] std::size_t parameter_count() const { return params_.size(); }
    [[nodiscard]] std::span<const S> parameters() const { return params_; }
    [[nodiscard]] std::span<S> parameters() { return params_; }

    // Logits of shape (out_classes, output_side, output_side). When `cache` is
    // given, intermediate activations needed by backward() are stored in it.
    [[nodiscard]] Tensor<S> forward(const Tensor<S>& input, Cache* cache = nullptr) const;

    // Accumulates d(objective)/d(parameters) into `gradient` given the gradient
    // of the objective w.r.t. the logits.
    void backward(const Cache& cache, const Tensor<S>& dlogits, std::span<S> gradient) const;

private:
    NetworkConfig cfg_;
    IoShapes shapes_;
    std::vector<ConvLayer> encoder_;  // 2 per level
    std::vector<ConvLayer> bottleneck_;
    std::vector<UpLayer> up_;         // deepest first
    std::vector<ConvLayer> decoder_;  // 2 per level, deepest first
    ConvLayer head_;
    AlignedVector<S> params_;

    void layout();
};

template <typename S>
struct UNet<S>::Cache {
    struct Conv {
        AlignedVector<S> columns;  // im2col of the input
        Tensor<S> output;        // after ReLU (or raw logits for the head)
        int in_h = 0, in_w = 0;
    };
    std::vector<Conv> encoder, bottleneck, decoder;
    std::vector<Tensor<S>> pooled;  // pooled[l] is the input of level l + 1
    std::vector<std::vector<std::uint32_t>> pool_argmax;
    std::vector<Tensor<S>> up_output;  // after ReLU, deepest level first
    Conv head;
};

extern template class UNet<float>;
extern template class UNet<double>;

// Per-pixel class probabilities over the output region.
struct Probabilities {
    Grid<float> background;
    Grid<float> foreground;
};

// Stacks the normalized image and the seed channel into the network input.
template <typename S>
[[nodiscard]] Tensor<S> make_input(const Image2D& image, const SeedChannel& seeds);

// Softmax over classes per pixel.
template <typename S>
[[nodiscard]] Tensor<S> softmax(const Tensor<S>& logits);

[[nodiscard]] Probabilities forward(const UNet<float>& model, const Image2D& image, const SeedChannel& seeds);

// Argmax; an exact tie goes to background.
[[nodiscard]] LabelMask predict_mask(const Probabilities& probs);

// Mean per-pixel negative log-likelihood of the true class.
[[nodiscard]] double loss(const Probabilities& probs, const LabelMask& gt);

// Mean cross-entropy of softmax(logits) against gt and its gradient w.r.t. the
// logits (written to `dlogits`, scaled by `scale`).
template <typename S>
double softmax_cross_entropy(const Tensor<S>& logits, const LabelMask& gt, Tensor<S>* dlogits, double scale = 1.0);

}  // namespace uiseg::net

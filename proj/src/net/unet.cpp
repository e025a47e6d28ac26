#include "uiseg/net/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

namespace uiseg::net {

void NetworkConfig::validate() const {
    if (depth < 1) throw InvalidArgument("network depth must be >= 1");
    if (base_filters < 1) throw InvalidArgument("base_filters must be >= 1");
    if (in_channels != 2) throw InvalidArgument("the network takes exactly two input channels");
    if (out_classes != 2) throw InvalidArgument("the network is binary (two output classes)");
    const IoShapes s = shapes();
    if (!s.feasible) {
        throw GeometryError("input side " + std::to_string(input_side) + " infeasible at depth " +
                            std::to_string(depth) + ": " + s.reason);
    }
}

std::vector<int> NetworkConfig::filter_ladder() const {
    std::vector<int> f;
    for (int level = 0; level <= depth; ++level) f.push_back(base_filters << level);
    return f;
}

int NetworkConfig::output_side() const {
    const IoShapes s = shapes();
    if (!s.feasible) throw GeometryError(s.reason);
    return s.output_side;
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
    j = {{"depth", c.depth},
         {"base_filters", c.base_filters},
         {"in_channels", c.in_channels},
         {"out_classes", c.out_classes},
         {"input_side", c.input_side}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
    c.depth = j.at("depth").get<int>();
    c.base_filters = j.at("base_filters").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    c.out_classes = j.at("out_classes").get<int>();
    c.input_side = j.at("input_side").get<int>();
}

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapMat = Eigen::Map<RowMat<S>>;
template <typename S>
using MapConstMat = Eigen::Map<const RowMat<S>>;

template <typename S>
void im2col(const Tensor<S>& in, int k, AlignedVector<S>& cols) {
    const int oh = in.height - k + 1;
    const int ow = in.width - k + 1;
    cols.resize(std::size_t(in.channels) * k * k * oh * ow);
    S* dst = cols.data();
    for (int c = 0; c < in.channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                for (int y = 0; y < oh; ++y) {
                    std::memcpy(dst, &in.at(c, y + ky, kx), sizeof(S) * std::size_t(ow));
                    dst += ow;
                }
            }
        }
    }
}

template <typename S>
void col2im_add(const S* cols, int k, Tensor<S>& din) {
    const int oh = din.height - k + 1;
    const int ow = din.width - k + 1;
    const S* src = cols;
    for (int c = 0; c < din.channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                for (int y = 0; y < oh; ++y) {
                    S* row = &din.at(c, y + ky, kx);
                    for (int x = 0; x < ow; ++x) row[x] += src[x];
                    src += ow;
                }
            }
        }
    }
}

template <typename S>
void relu_inplace(Tensor<S>& t) {
    for (S& v : t.data) v = v > S(0) ? v : S(0);
}

// Zeroes gradient entries whose forward ReLU output was clamped.
template <typename S>
void relu_backward(const Tensor<S>& output, Tensor<S>& grad) {
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
        if (!(output.data[i] > S(0))) grad.data[i] = S(0);
    }
}

template <typename S, typename Layer, typename ConvCache>
Tensor<S> conv_forward(const Layer& L, const AlignedVector<S>& params, const Tensor<S>& in, ConvCache& cache,
                       bool relu) {
    const int oh = in.height - L.kernel + 1;
    const int ow = in.width - L.kernel + 1;
    const int K = L.in * L.kernel * L.kernel;
    const int P = oh * ow;
    im2col(in, L.kernel, cache.columns);
    cache.in_h = in.height;
    cache.in_w = in.width;
    Tensor<S> out(L.out, oh, ow);
    MapConstMat<S> W(params.data() + L.weight_offset, L.out, K);
    MapConstMat<S> C(cache.columns.data(), K, P);
    MapMat<S> O(out.data.data(), L.out, P);
    O.noalias() = W * C;
    for (int o = 0; o < L.out; ++o) O.row(o).array() += params[L.bias_offset + std::size_t(o)];
    if (relu) relu_inplace(out);
    return out;
}

// dout must already be masked by the ReLU derivative. Returns the input
// gradient when `want_input` is set.
template <typename S, typename Layer, typename ConvCache>
Tensor<S> conv_backward(const Layer& L, const AlignedVector<S>& params, const ConvCache& cache, const Tensor<S>& dout,
                        std::span<S> grad, bool want_input) {
    const int K = L.in * L.kernel * L.kernel;
    const int P = dout.height * dout.width;
    MapConstMat<S> C(cache.columns.data(), K, P);
    MapConstMat<S> dO(dout.data.data(), L.out, P);
    MapMat<S> dW(grad.data() + L.weight_offset, L.out, K);
    dW.noalias() += dO * C.transpose();
    for (int o = 0; o < L.out; ++o) grad[L.bias_offset + std::size_t(o)] += dO.row(o).sum();
    Tensor<S> din;
    if (want_input) {
        din = Tensor<S>(L.in, cache.in_h, cache.in_w);
        MapConstMat<S> W(params.data() + L.weight_offset, L.out, K);
        RowMat<S> dcols = W.transpose() * dO;
        col2im_add(dcols.data(), L.kernel, din);
    }
    return din;
}

template <typename S>
Tensor<S> maxpool_forward(const Tensor<S>& in, std::vector<std::uint32_t>& argmax) {
    Tensor<S> out(in.channels, in.height / 2, in.width / 2);
    argmax.resize(out.data.size());
    std::size_t i = 0;
    for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < out.height; ++y) {
            for (int x = 0; x < out.width; ++x, ++i) {
                std::uint32_t best_idx = 0;
                S best = S(0);
                bool first = true;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const auto idx = std::uint32_t((std::size_t(c) * in.height + 2 * y + dy) * in.width + 2 * x + dx);
                        if (first || in.data[idx] > best) {
                            best = in.data[idx];
                            best_idx = idx;
                            first = false;
                        }
                    }
                }
                out.data[i] = best;
                argmax[i] = best_idx;
            }
        }
    }
    return out;
}

template <typename S>
Tensor<S> upconv_forward(const typename UNet<S>::UpLayer& L, const AlignedVector<S>& params, const Tensor<S>& in) {
    const int hw = in.height * in.width;
    Tensor<S> out(L.out, in.height * 2, in.width * 2);
    MapConstMat<S> X(in.data.data(), L.in, hw);
    RowMat<S> T(L.out, hw);
    for (int d = 0; d < 4; ++d) {
        const int dy = d / 2, dx = d % 2;
        MapConstMat<S> W(params.data() + L.weight_offset + std::size_t(d) * L.out * L.in, L.out, L.in);
        T.noalias() = W * X;
        for (int o = 0; o < L.out; ++o) {
            const S b = params[L.bias_offset + std::size_t(o)];
            for (int y = 0; y < in.height; ++y) {
                for (int x = 0; x < in.width; ++x) out.at(o, 2 * y + dy, 2 * x + dx) = T(o, y * in.width + x) + b;
            }
        }
    }
    relu_inplace(out);
    return out;
}

template <typename S>
Tensor<S> upconv_backward(const typename UNet<S>::UpLayer& L, const AlignedVector<S>& params, const Tensor<S>& in,
                          const Tensor<S>& dout, std::span<S> grad) {
    const int hw = in.height * in.width;
    MapConstMat<S> X(in.data.data(), L.in, hw);
    Tensor<S> din(L.in, in.height, in.width);
    MapMat<S> dX(din.data.data(), L.in, hw);
    RowMat<S> G(L.out, hw);
    for (int d = 0; d < 4; ++d) {
        const int dy = d / 2, dx = d % 2;
        for (int o = 0; o < L.out; ++o) {
            for (int y = 0; y < in.height; ++y) {
                for (int x = 0; x < in.width; ++x) G(o, y * in.width + x) = dout.at(o, 2 * y + dy, 2 * x + dx);
            }
        }
        const std::size_t off = L.weight_offset + std::size_t(d) * L.out * L.in;
        MapMat<S> dW(grad.data() + off, L.out, L.in);
        dW.noalias() += G * X.transpose();
        MapConstMat<S> W(params.data() + off, L.out, L.in);
        dX.noalias() += W.transpose() * G;
        for (int o = 0; o < L.out; ++o) grad[L.bias_offset + std::size_t(o)] += G.row(o).sum();
    }
    return din;
}

template <typename S>
Tensor<S> crop_concat(const Tensor<S>& skip, const Tensor<S>& up) {
    const int off = (skip.height - up.height) / 2;
    Tensor<S> out(skip.channels + up.channels, up.height, up.width);
    for (int c = 0; c < skip.channels; ++c) {
        for (int y = 0; y < up.height; ++y) {
            std::memcpy(&out.at(c, y, 0), &skip.at(c, y + off, off), sizeof(S) * std::size_t(up.width));
        }
    }
    std::memcpy(&out.at(skip.channels, 0, 0), up.data.data(), sizeof(S) * up.data.size());
    return out;
}

}  // namespace

template <typename S>
void UNet<S>::layout() {
    cfg_.validate();
    shapes_ = cfg_.shapes();
    const auto f = cfg_.filter_ladder();
    std::size_t offset = 0;
    auto conv = [&](int in, int out, int k) {
        ConvLayer L{in, out, k, offset, 0};
        offset += std::size_t(in) * k * k * out;
        L.bias_offset = offset;
        offset += std::size_t(out);
        return L;
    };
    encoder_.clear();
    for (int l = 0; l < cfg_.depth; ++l) {
        const int in = l == 0 ? cfg_.in_channels : f[std::size_t(l - 1)];
        encoder_.push_back(conv(in, f[std::size_t(l)], 3));
        encoder_.push_back(conv(f[std::size_t(l)], f[std::size_t(l)], 3));
    }
    bottleneck_ = {conv(f[std::size_t(cfg_.depth - 1)], f[std::size_t(cfg_.depth)], 3)};
    bottleneck_.push_back(conv(f[std::size_t(cfg_.depth)], f[std::size_t(cfg_.depth)], 3));
    up_.clear();
    decoder_.clear();
    for (int l = cfg_.depth - 1; l >= 0; --l) {
        UpLayer U{f[std::size_t(l + 1)], f[std::size_t(l)], offset, 0};
        offset += std::size_t(4) * U.in * U.out;
        U.bias_offset = offset;
        offset += std::size_t(U.out);
        up_.push_back(U);
        decoder_.push_back(conv(2 * f[std::size_t(l)], f[std::size_t(l)], 3));
        decoder_.push_back(conv(f[std::size_t(l)], f[std::size_t(l)], 3));
    }
    head_ = conv(f[0], cfg_.out_classes, 1);
    params_.assign(offset, S(0));
}

template <typename S>
UNet<S>::UNet(const NetworkConfig& cfg, Rng& rng) : cfg_(cfg) {
    layout();
    auto fill = [&](std::size_t offset, std::size_t count, int fan_in) {
        const double std_dev = std::sqrt(2.0 / fan_in);
        for (std::size_t i = 0; i < count; ++i) params_[offset + i] = S(std_dev * rng.normal());
    };
    auto fill_conv = [&](const ConvLayer& L) {
        fill(L.weight_offset, std::size_t(L.out) * L.in * L.kernel * L.kernel, L.in * L.kernel * L.kernel);
    };
    for (const auto& L : encoder_) fill_conv(L);
    for (const auto& L : bottleneck_) fill_conv(L);
    for (std::size_t i = 0; i < up_.size(); ++i) {
        fill(up_[i].weight_offset, std::size_t(4) * up_[i].in * up_[i].out, up_[i].in);
        fill_conv(decoder_[2 * i]);
        fill_conv(decoder_[2 * i + 1]);
    }
    fill_conv(head_);
}

template <typename S>
UNet<S>::UNet(const NetworkConfig& cfg, std::vector<S> parameters) : cfg_(cfg) {
    layout();
    if (parameters.size() != params_.size()) {
        throw CheckpointError("parameter count " + std::to_string(parameters.size()) + " does not match the " +
                              std::to_string(params_.size()) + " required by the configuration");
    }
    params_.assign(parameters.begin(), parameters.end());
}

template <typename S>
Tensor<S> UNet<S>::forward(const Tensor<S>& input, Cache* cache) const {
    if (input.channels != cfg_.in_channels || input.height != cfg_.input_side || input.width != cfg_.input_side) {
        throw ShapeMismatch("network expects input " + std::to_string(cfg_.in_channels) + "x" +
                            std::to_string(cfg_.input_side) + "x" + std::to_string(cfg_.input_side));
    }
    Cache local;
    Cache& c = cache ? *cache : local;
    const int depth = cfg_.depth;
    c.encoder.assign(std::size_t(2 * depth), {});
    c.bottleneck.assign(2, {});
    c.decoder.assign(std::size_t(2 * depth), {});
    c.pooled.assign(std::size_t(depth), {});
    c.pool_argmax.assign(std::size_t(depth), {});
    c.up_output.assign(std::size_t(depth), {});

    for (int l = 0; l < depth; ++l) {
        const Tensor<S>& in = l == 0 ? input : c.pooled[std::size_t(l - 1)];
        auto& c1 = c.encoder[std::size_t(2 * l)];
        auto& c2 = c.encoder[std::size_t(2 * l + 1)];
        c1.output = conv_forward(encoder_[std::size_t(2 * l)], params_, in, c1, true);
        c2.output = conv_forward(encoder_[std::size_t(2 * l + 1)], params_, c1.output, c2, true);
        c.pooled[std::size_t(l)] = maxpool_forward(c2.output, c.pool_argmax[std::size_t(l)]);
    }
    c.bottleneck[0].output = conv_forward(bottleneck_[0], params_, c.pooled.back(), c.bottleneck[0], true);
    c.bottleneck[1].output = conv_forward(bottleneck_[1], params_, c.bottleneck[0].output, c.bottleneck[1], true);

    for (int i = 0; i < depth; ++i) {
        const int level = depth - 1 - i;
        const Tensor<S>& below = i == 0 ? c.bottleneck[1].output : c.decoder[std::size_t(2 * i - 1)].output;
        c.up_output[std::size_t(i)] = upconv_forward<S>(up_[std::size_t(i)], params_, below);
        const Tensor<S> merged = crop_concat(c.encoder[std::size_t(2 * level + 1)].output, c.up_output[std::size_t(i)]);
        auto& d1 = c.decoder[std::size_t(2 * i)];
        auto& d2 = c.decoder[std::size_t(2 * i + 1)];
        d1.output = conv_forward(decoder_[std::size_t(2 * i)], params_, merged, d1, true);
        d2.output = conv_forward(decoder_[std::size_t(2 * i + 1)], params_, d1.output, d2, true);
    }
    c.head.output = conv_forward(head_, params_, c.decoder.back().output, c.head, false);
    return c.head.output;
}

template <typename S>
void UNet<S>::backward(const Cache& c, const Tensor<S>& dlogits, std::span<S> grad) const {
    if (grad.size() != params_.size()) throw ShapeMismatch("gradient buffer size mismatch");
    const int depth = cfg_.depth;

    // Gradients flowing into each encoder level's second convolution output
    // from the skip connections.
    std::vector<Tensor<S>> skip_grad(static_cast<std::size_t>(depth));
    for (int l = 0; l < depth; ++l) {
        const auto& out = c.encoder[std::size_t(2 * l + 1)].output;
        skip_grad[std::size_t(l)] = Tensor<S>(out.channels, out.height, out.width);
    }

    Tensor<S> g = conv_backward(head_, params_, c.head, dlogits, grad, true);
    for (int i = depth - 1; i >= 0; --i) {
        const int level = depth - 1 - i;
        relu_backward(c.decoder[std::size_t(2 * i + 1)].output, g);
        g = conv_backward(decoder_[std::size_t(2 * i + 1)], params_, c.decoder[std::size_t(2 * i + 1)], g, grad, true);
        relu_backward(c.decoder[std::size_t(2 * i)].output, g);
        Tensor<S> dmerged = conv_backward(decoder_[std::size_t(2 * i)], params_, c.decoder[std::size_t(2 * i)], g, grad, true);

        // Split the concatenation: [cropped skip | up-convolution output].
        Tensor<S>& ds = skip_grad[std::size_t(level)];
        const int skip_channels = ds.channels;
        const int off = (ds.height - dmerged.height) / 2;
        for (int ch = 0; ch < skip_channels; ++ch) {
            for (int y = 0; y < dmerged.height; ++y) {
                for (int x = 0; x < dmerged.width; ++x) ds.at(ch, y + off, x + off) += dmerged.at(ch, y, x);
            }
        }
        const Tensor<S>& up_out = c.up_output[std::size_t(i)];
        Tensor<S> dup(up_out.channels, up_out.height, up_out.width);
        std::memcpy(dup.data.data(), &dmerged.at(skip_channels, 0, 0), sizeof(S) * dup.data.size());
        relu_backward(up_out, dup);
        const Tensor<S>& below = i == 0 ? c.bottleneck[1].output : c.decoder[std::size_t(2 * i - 1)].output;
        g = upconv_backward<S>(up_[std::size_t(i)], params_, below, dup, grad);
    }

    relu_backward(c.bottleneck[1].output, g);
    g = conv_backward(bottleneck_[1], params_, c.bottleneck[1], g, grad, true);
    relu_backward(c.bottleneck[0].output, g);
    g = conv_backward(bottleneck_[0], params_, c.bottleneck[0], g, grad, true);

    for (int l = depth - 1; l >= 0; --l) {
        // g is the gradient w.r.t. pooled[l]; route it back through max pooling.
        Tensor<S>& dconv = skip_grad[std::size_t(l)];
        const auto& argmax = c.pool_argmax[std::size_t(l)];
        for (std::size_t k = 0; k < argmax.size(); ++k) dconv.data[argmax[k]] += g.data[k];
        relu_backward(c.encoder[std::size_t(2 * l + 1)].output, dconv);
        g = conv_backward(encoder_[std::size_t(2 * l + 1)], params_, c.encoder[std::size_t(2 * l + 1)], dconv, grad, true);
        relu_backward(c.encoder[std::size_t(2 * l)].output, g);
        g = conv_backward(encoder_[std::size_t(2 * l)], params_, c.encoder[std::size_t(2 * l)], g, grad, l > 0);
    }
}

template class UNet<float>;
template class UNet<double>;

template <typename S>
Tensor<S> make_input(const Image2D& image, const SeedChannel& seeds) {
    if (image.shape() != seeds.shape()) {
        throw ShapeMismatch("image " + to_string(image.shape()) + " and seed channel " + to_string(seeds.shape()) +
                            " differ");
    }
    Tensor<S> t(2, image.height(), image.width());
    const std::size_t n = image.size();
    for (std::size_t p = 0; p < n; ++p) {
        t.data[p] = S(image[p]);
        t.data[n + p] = S(seeds[p]);
    }
    return t;
}

template Tensor<float> make_input<float>(const Image2D&, const SeedChannel&);
template Tensor<double> make_input<double>(const Image2D&, const SeedChannel&);

template <typename S>
Tensor<S> softmax(const Tensor<S>& logits) {
    Tensor<S> p(logits.channels, logits.height, logits.width);
    const std::size_t n = logits.plane();
    for (std::size_t i = 0; i < n; ++i) {
        S m = logits.data[i];
        for (int c = 1; c < logits.channels; ++c) m = std::max(m, logits.data[std::size_t(c) * n + i]);
        S sum = 0;
        for (int c = 0; c < logits.channels; ++c) {
            const S e = std::exp(logits.data[std::size_t(c) * n + i] - m);
            p.data[std::size_t(c) * n + i] = e;
            sum += e;
        }
        for (int c = 0; c < logits.channels; ++c) p.data[std::size_t(c) * n + i] /= sum;
    }
    return p;
}

template Tensor<float> softmax<float>(const Tensor<float>&);
template Tensor<double> softmax<double>(const Tensor<double>&);

template <typename S>
double softmax_cross_entropy(const Tensor<S>& logits, const LabelMask& gt, Tensor<S>* dlogits, double scale) {
    if (logits.channels != 2 || gt.width() != logits.width || gt.height() != logits.height) {
        throw ShapeMismatch("logits and ground truth shapes differ");
    }
    const std::size_t n = logits.plane();
    if (dlogits) *dlogits = Tensor<S>(logits.channels, logits.height, logits.width);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z0 = logits.data[i];
        const double z1 = logits.data[n + i];
        const double m = std::max(z0, z1);
        const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
        const int truth = gt[i] ? 1 : 0;
        total += lse - (truth ? z1 : z0);
        if (dlogits) {
            const double p1 = std::exp(z1 - lse);
            const double p0 = std::exp(z0 - lse);
            const double w = scale / double(n);
            dlogits->data[i] = S(w * (p0 - (truth == 0 ? 1.0 : 0.0)));
            dlogits->data[n + i] = S(w * (p1 - (truth == 1 ? 1.0 : 0.0)));
        }
    }
    return total / double(n);
}

template double softmax_cross_entropy<float>(const Tensor<float>&, const LabelMask&, Tensor<float>*, double);
template double softmax_cross_entropy<double>(const Tensor<double>&, const LabelMask&, Tensor<double>*, double);

Probabilities forward(const UNet<float>& model, const Image2D& image, const SeedChannel& seeds) {
    const Tensor<float> p = softmax(model.forward(make_input<float>(image, seeds)));
    const int side = p.width;
    Probabilities out{Grid<float>(side, side), Grid<float>(side, side)};
    const std::size_t n = p.plane();
    std::copy(p.data.begin(), p.data.begin() + std::ptrdiff_t(n), out.background.begin());
    std::copy(p.data.begin() + std::ptrdiff_t(n), p.data.end(), out.foreground.begin());
    return out;
}

LabelMask predict_mask(const Probabilities& probs) {
    require_same_shape(probs.background, probs.foreground, "predict_mask");
    LabelMask mask(probs.foreground.shape());
    for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = probs.foreground[p] > probs.background[p] ? 1 : 0;
    return mask;
}

double loss(const Probabilities& probs, const LabelMask& gt) {
    require_same_shape(probs.foreground, gt, "loss");
    require_same_shape(probs.background, gt, "loss");
    constexpr double kFloor = 1e-12;
    double total = 0.0;
    for (std::size_t p = 0; p < gt.size(); ++p) {
        total -= std::log(std::max(kFloor, double(gt[p] ? probs.foreground[p] : probs.background[p])));
    }
    return total / double(gt.size());
}

}  // namespace uiseg::net

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "spn/error.hpp"
#include "spn/tensor.hpp"

namespace spn {

// Dense 2-D convolution layer (cross-correlation). Filters connect every
// input channel to every output channel; weights are stored row-major as
// out_channels x (in_channels * kh * kw).
struct ConvLayer {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    Matrix weights;
    Vec bias;

    void validate() const {
        if (out_channels < 1 || in_channels < 1 || kernel_h < 1 || kernel_w < 1 || stride < 1)
            throw ConfigError("conv layer: non-positive dimension");
        if (weights.rows != out_channels || weights.cols != in_channels * kernel_h * kernel_w)
            throw ConfigError("conv layer: weight shape mismatch");
        if (bias.size() != out_channels) throw ConfigError("conv layer: bias shape mismatch");
    }
};

inline std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride,
                                      std::size_t padding, const char* axis) {
    const std::size_t padded = in + 2 * padding;
    if (padded < k) throw ConfigError(std::string("conv2d: kernel larger than padded input on ") + axis);
    if ((padded - k) % stride != 0)
        throw ConfigError(std::string("conv2d: stride does not divide the padded extent on ") + axis);
    return (padded - k) / stride + 1;
}

// Patch matrix: rows = in_channels*kh*kw, cols = out_h*out_w. Out-of-bounds
// positions contribute zeros.
inline Matrix im2col(const Tensor3& in, std::size_t kh, std::size_t kw, std::size_t stride,
                     std::size_t padding) {
    const std::size_t oh = conv_output_extent(in.height, kh, stride, padding, "height");
    const std::size_t ow = conv_output_extent(in.width, kw, stride, padding, "width");
    Matrix cols(in.channels * kh * kw, oh * ow, 0.0);
    std::size_t row = 0;
    for (std::size_t c = 0; c < in.channels; ++c) {
        for (std::size_t u = 0; u < kh; ++u) {
            for (std::size_t v = 0; v < kw; ++v, ++row) {
                double* dst = &cols.v[row * cols.cols];
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * stride + u) - static_cast<std::ptrdiff_t>(padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.height)) continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * stride + v) - static_cast<std::ptrdiff_t>(padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.width)) continue;
                        dst[oy * ow + ox] = in(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                    }
                }
            }
        }
    }
    return cols;
}

// Adjoint of im2col: scatter-add patch gradients back onto the input grid.
inline Tensor3 col2im(const Matrix& cols, std::size_t channels, std::size_t height, std::size_t width,
                      std::size_t kh, std::size_t kw, std::size_t stride, std::size_t padding) {
    const std::size_t oh = conv_output_extent(height, kh, stride, padding, "height");
    const std::size_t ow = conv_output_extent(width, kw, stride, padding, "width");
    if (cols.rows != channels * kh * kw || cols.cols != oh * ow)
        throw InputError("col2im: column matrix shape mismatch");
    Tensor3 out(channels, height, width, 0.0);
    std::size_t row = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t u = 0; u < kh; ++u) {
            for (std::size_t v = 0; v < kw; ++v, ++row) {
                const double* src = &cols.v[row * cols.cols];
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(oy * stride + u) - static_cast<std::ptrdiff_t>(padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * stride + v) - static_cast<std::ptrdiff_t>(padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
                        out(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) += src[oy * ow + ox];
                    }
                }
            }
        }
    }
    return out;
}

inline Tensor3 conv2d(const Tensor3& in, const ConvLayer& layer) {
    layer.validate();
    if (in.channels != layer.in_channels) throw ConfigError("conv2d: input channel mismatch");
    const std::size_t oh = conv_output_extent(in.height, layer.kernel_h, layer.stride, layer.padding, "height");
    const std::size_t ow = conv_output_extent(in.width, layer.kernel_w, layer.stride, layer.padding, "width");
    const Matrix cols = im2col(in, layer.kernel_h, layer.kernel_w, layer.stride, layer.padding);
    Matrix out = matmul(layer.weights, cols);
    Tensor3 result(layer.out_channels, oh, ow);
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        const double b = layer.bias[o];
        for (std::size_t p = 0; p < oh * ow; ++p) result.v[o * oh * ow + p] = out.v[o * oh * ow + p] + b;
    }
    return result;
}

struct ConvGrads {
    Tensor3 d_input;
    Matrix d_weights;
    Vec d_bias;
};

inline ConvGrads conv2d_backward(const Tensor3& in, const ConvLayer& layer, const Tensor3& d_out) {
    layer.validate();
    const std::size_t oh = conv_output_extent(in.height, layer.kernel_h, layer.stride, layer.padding, "height");
    const std::size_t ow = conv_output_extent(in.width, layer.kernel_w, layer.stride, layer.padding, "width");
    if (d_out.channels != layer.out_channels || d_out.height != oh || d_out.width != ow)
        throw InputError("conv2d_backward: output gradient shape mismatch");

    const Matrix cols = im2col(in, layer.kernel_h, layer.kernel_w, layer.stride, layer.padding);
    Matrix d_out_m(layer.out_channels, oh * ow);
    d_out_m.v = d_out.v;

    ConvGrads g;
    g.d_weights = matmul_a_bt(d_out_m, cols);
    g.d_bias.assign(layer.out_channels, 0.0);
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        double s = 0.0;
        for (std::size_t p = 0; p < oh * ow; ++p) s += d_out_m.v[o * oh * ow + p];
        g.d_bias[o] = s;
    }
    const Matrix d_cols = matmul_at_b(layer.weights, d_out_m);
    g.d_input = col2im(d_cols, in.channels, in.height, in.width, layer.kernel_h, layer.kernel_w,
                       layer.stride, layer.padding);
    return g;
}

inline Tensor3 relu(const Tensor3& in) {
    Tensor3 out = in;
    for (double& x : out.v) x = x > 0.0 ? x : 0.0;
    return out;
}

// Subgradient 0 at exactly 0.
inline Tensor3 relu_backward(const Tensor3& in, const Tensor3& d_out) {
    if (!in.same_shape(d_out)) throw InputError("relu_backward: shape mismatch");
    Tensor3 d_in = d_out;
    for (std::size_t i = 0; i < in.v.size(); ++i)
        if (!(in.v[i] > 0.0)) d_in.v[i] = 0.0;
    return d_in;
}

struct MaxPool2Result {
    Tensor3 output;
    std::vector<std::uint32_t> argmax; // flat input index per output cell
};

// 2x2 non-overlapping max pooling; ties resolve to the first position in
// row-major window scan order.
inline MaxPool2Result maxpool2(const Tensor3& in) {
    if (in.height % 2 != 0 || in.width % 2 != 0)
        throw ConfigError("maxpool2: spatial dimensions must be even");
    const std::size_t oh = in.height / 2, ow = in.width / 2;
    MaxPool2Result res;
    res.output = Tensor3(in.channels, oh, ow);
    res.argmax.resize(in.channels * oh * ow);
    for (std::size_t c = 0; c < in.channels; ++c) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t iy = 2 * oy + dy, ix = 2 * ox + dx;
                        const double val = in(c, iy, ix);
                        if (val > best) {
                            best = val;
                            best_idx = (c * in.height + iy) * in.width + ix;
                        }
                    }
                }
                res.output(c, oy, ox) = best;
                res.argmax[(c * oh + oy) * ow + ox] = static_cast<std::uint32_t>(best_idx);
            }
        }
    }
    return res;
}

inline Tensor3 maxpool2_backward(const std::vector<std::uint32_t>& argmax, std::size_t channels,
                                 std::size_t in_height, std::size_t in_width, const Tensor3& d_out) {
    if (argmax.size() != d_out.size()) throw InputError("maxpool2_backward: argmax size mismatch");
    Tensor3 d_in(channels, in_height, in_width, 0.0);
    for (std::size_t i = 0; i < argmax.size(); ++i) d_in.v[argmax[i]] += d_out.v[i];
    return d_in;
}

inline Vec global_avg_pool(const Tensor3& in) {
    Vec out(in.channels, 0.0);
    const std::size_t hw = in.height * in.width;
    for (std::size_t c = 0; c < in.channels; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < hw; ++p) s += in.v[c * hw + p];
        out[c] = s / static_cast<double>(hw);
    }
    return out;
}

inline Tensor3 global_avg_pool_backward(std::size_t channels, std::size_t height, std::size_t width,
                                        const Vec& d_out) {
    if (d_out.size() != channels) throw InputError("global_avg_pool_backward: channel mismatch");
    Tensor3 d_in(channels, height, width);
    const double inv = 1.0 / static_cast<double>(height * width);
    const std::size_t hw = height * width;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t p = 0; p < hw; ++p) d_in.v[c * hw + p] = d_out[c] * inv;
    return d_in;
}

struct FcLayer {
    Matrix weights; // out x in
    Vec bias;       // out

    void validate() const {
        if (weights.rows != bias.size()) throw ConfigError("fc layer: bias shape mismatch");
    }
};

inline Vec fully_connected(const Vec& features, const FcLayer& layer) {
    layer.validate();
    if (features.size() != layer.weights.cols) throw InputError("fully_connected: feature size mismatch");
    Vec out(layer.weights.rows);
    for (std::size_t r = 0; r < layer.weights.rows; ++r) {
        double s = layer.bias[r];
        const double* row = &layer.weights.v[r * layer.weights.cols];
        for (std::size_t c = 0; c < layer.weights.cols; ++c) s += row[c] * features[c];
        out[r] = s;
    }
    return out;
}

struct FcGrads {
    Vec d_input;
    Matrix d_weights;
    Vec d_bias;
};

inline FcGrads fully_connected_backward(const Vec& features, const FcLayer& layer, const Vec& d_out) {
    layer.validate();
    if (features.size() != layer.weights.cols) throw InputError("fully_connected_backward: feature size mismatch");
    if (d_out.size() != layer.weights.rows) throw InputError("fully_connected_backward: gradient size mismatch");
    FcGrads g;
    g.d_weights = Matrix(layer.weights.rows, layer.weights.cols);
    g.d_bias = d_out;
    g.d_input.assign(features.size(), 0.0);
    for (std::size_t r = 0; r < layer.weights.rows; ++r) {
        const double dy = d_out[r];
        const double* wrow = &layer.weights.v[r * layer.weights.cols];
        double* gwrow = &g.d_weights.v[r * layer.weights.cols];
        for (std::size_t c = 0; c < layer.weights.cols; ++c) {
            gwrow[c] = dy * features[c];
            g.d_input[c] += dy * wrow[c];
        }
    }
    return g;
}

enum class LossMode {
    softmax_cross_entropy, // single label
    per_class_sigmoid,     // summed per-class sigmoid cross-entropy
};

struct LossResult {
    double value = 0.0;
    Vec d_logits;
};

// labels: the set of positive class ids. Softmax mode requires exactly one.
inline LossResult loss(const Vec& logits, const std::vector<int>& labels, LossMode mode) {
    const std::size_t c = logits.size();
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= c) throw InputError("loss: label out of range");

    LossResult res;
    res.d_logits.assign(c, 0.0);
    if (mode == LossMode::softmax_cross_entropy) {
        if (labels.size() != 1) throw InputError("loss: softmax mode requires exactly one target class");
        const int target = labels[0];
        double zmax = logits[0];
        for (double z : logits) zmax = std::max(zmax, z);
        double sum = 0.0;
        for (double z : logits) sum += std::exp(z - zmax);
        const double log_sum = std::log(sum) + zmax;
        res.value = log_sum - logits[static_cast<std::size_t>(target)];
        for (std::size_t i = 0; i < c; ++i)
            res.d_logits[i] = std::exp(logits[i] - log_sum) - (static_cast<int>(i) == target ? 1.0 : 0.0);
    } else {
        std::vector<char> pos(c, 0);
        for (int l : labels) pos[static_cast<std::size_t>(l)] = 1;
        double total = 0.0;
        for (std::size_t i = 0; i < c; ++i) {
            const double z = logits[i];
            const double t = pos[i] ? 1.0 : 0.0;
            // log(1 + exp(z)) - t*z, evaluated stably
            total += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - t * z;
            res.d_logits[i] = 1.0 / (1.0 + std::exp(-z)) - t;
        }
        res.value = total;
    }
    return res;
}

} // namespace spn

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spn/error.hpp"
#include "spn/layers.hpp"
#include "spn/rng.hpp"
#include "spn/soft_proposal.hpp"

namespace spn {

enum class LayerKind {
    conv,
    relu,
    maxpool2,
    soft_proposal,
    global_avg_pool,
    fully_connected,
};

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    // conv only:
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
};

inline LayerSpec conv_spec(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                           std::size_t padding = 0) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.out_channels = out_channels;
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    return l;
}

struct NetworkSpec {
    std::size_t in_channels = 0;
    std::size_t in_height = 0;
    std::size_t in_width = 0;
    std::size_t class_count = 0;
    LossMode loss_mode = LossMode::softmax_cross_entropy;
    SpConfig sp_config;
    bool sp_force_uniform = false; // ablation: skip the walk, couple with the uniform map
    std::vector<LayerSpec> layers;

    bool has_sp() const {
        for (const auto& l : layers)
            if (l.kind == LayerKind::soft_proposal) return true;
        return false;
    }

    // Structural rules: at most one soft-proposal layer, placed right after the
    // last conv (or its relu) and right before global average pooling; exactly
    // one global pool followed by exactly one fully-connected head.
    void validate() const {
        if (in_channels < 1 || in_height < 1 || in_width < 1)
            throw ConfigError("network spec: empty input shape");
        if (class_count < 1) throw ConfigError("network spec: class_count must be >= 1");
        sp_config.validate();
        if (layers.empty()) throw ConfigError("network spec: no layers");

        int sp_count = 0, gap_count = 0, fc_count = 0;
        std::ptrdiff_t sp_at = -1, gap_at = -1, last_conv_at = -1;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            switch (layers[i].kind) {
            case LayerKind::conv:
                if (gap_count || sp_count) throw ConfigError("network spec: conv after the SP/pooling stage");
                last_conv_at = static_cast<std::ptrdiff_t>(i);
                break;
            case LayerKind::relu:
                if (gap_count) throw ConfigError("network spec: relu after global pooling");
                break;
            case LayerKind::maxpool2:
                if (gap_count || sp_count) throw ConfigError("network spec: maxpool after the SP/pooling stage");
                break;
            case LayerKind::soft_proposal:
                ++sp_count;
                sp_at = static_cast<std::ptrdiff_t>(i);
                break;
            case LayerKind::global_avg_pool:
                ++gap_count;
                gap_at = static_cast<std::ptrdiff_t>(i);
                break;
            case LayerKind::fully_connected:
                ++fc_count;
                if (i + 1 != layers.size())
                    throw ConfigError("network spec: the fully-connected head must be the last layer");
                break;
            }
        }
        if (sp_count > 1) throw ConfigError("network spec: more than one SP layer");
        if (gap_count != 1 || fc_count != 1)
            throw ConfigError("network spec: exactly one global pool and one fully-connected head required");
        if (sp_count == 1) {
            if (last_conv_at < 0) throw ConfigError("network spec: SP layer requires a convolutional layer");
            const std::ptrdiff_t prev = sp_at - 1;
            const bool after_conv = prev == last_conv_at;
            const bool after_relu = prev >= 0 && layers[static_cast<std::size_t>(prev)].kind == LayerKind::relu &&
                                    prev - 1 == last_conv_at;
            if (!(after_conv || after_relu))
                throw ConfigError("network spec: SP must immediately follow the last conv (or its relu)");
            if (sp_at + 1 != gap_at)
                throw ConfigError("network spec: SP must immediately precede the spatial pooling layer");
        }
    }
};

// The desk-scale evaluation stack: 32x32x3 input, three conv blocks, SP over
// the final 8x8 maps, global average pooling, linear classifier.
inline NetworkSpec reference_network_spec(std::size_t class_count, bool with_sp = true) {
    NetworkSpec s;
    s.in_channels = 3;
    s.in_height = 32;
    s.in_width = 32;
    s.class_count = class_count;
    s.layers = {
        conv_spec(16, 3, 1, 1), {LayerKind::relu}, {LayerKind::maxpool2},
        conv_spec(32, 3, 1, 1), {LayerKind::relu}, {LayerKind::maxpool2},
        conv_spec(64, 3, 1, 1), {LayerKind::relu},
    };
    if (with_sp) s.layers.push_back({LayerKind::soft_proposal});
    s.layers.push_back({LayerKind::global_avg_pool});
    s.layers.push_back({LayerKind::fully_connected});
    return s;
}

// Gradient-check stack: 16x16x1 input, one conv block, SP, pooling, classifier.
inline NetworkSpec tiny_network_spec(std::size_t class_count = 3, std::size_t conv_channels = 4) {
    NetworkSpec s;
    s.in_channels = 1;
    s.in_height = 16;
    s.in_width = 16;
    s.class_count = class_count;
    s.layers = {
        conv_spec(conv_channels, 3, 1, 1), {LayerKind::relu}, {LayerKind::soft_proposal},
        {LayerKind::global_avg_pool},      {LayerKind::fully_connected},
    };
    return s;
}

struct Network {
    NetworkSpec spec;
    std::vector<ConvLayer> conv; // one per conv layer, in stack order
    FcLayer fc;
};

// Named view over every parameter tensor, in a fixed traversal order
// (conv blocks first, then the classifier; weights before biases).
struct TensorRef {
    std::string name;
    std::vector<std::size_t> shape;
    double* data = nullptr;
    std::size_t size = 0;
};

inline std::vector<TensorRef> parameter_refs(Network& net) {
    std::vector<TensorRef> refs;
    for (std::size_t i = 0; i < net.conv.size(); ++i) {
        ConvLayer& l = net.conv[i];
        const std::string base = "conv" + std::to_string(i);
        refs.push_back({base + ".weight",
                        {l.out_channels, l.in_channels, l.kernel_h, l.kernel_w},
                        l.weights.v.data(),
                        l.weights.v.size()});
        refs.push_back({base + ".bias", {l.out_channels}, l.bias.data(), l.bias.size()});
    }
    refs.push_back({"fc.weight", {net.fc.weights.rows, net.fc.weights.cols}, net.fc.weights.v.data(),
                    net.fc.weights.v.size()});
    refs.push_back({"fc.bias", {net.fc.bias.size()}, net.fc.bias.data(), net.fc.bias.size()});
    return refs;
}

namespace detail {

struct SpatialShape {
    std::size_t c, h, w;
};

// Walks the stack symbolically to find each layer's input shape.
inline std::vector<SpatialShape> spatial_shapes(const NetworkSpec& spec) {
    std::vector<SpatialShape> shapes;
    SpatialShape cur{spec.in_channels, spec.in_height, spec.in_width};
    for (const auto& l : spec.layers) {
        shapes.push_back(cur);
        switch (l.kind) {
        case LayerKind::conv:
            cur.h = conv_output_extent(cur.h, l.kernel, l.stride, l.padding, "height");
            cur.w = conv_output_extent(cur.w, l.kernel, l.stride, l.padding, "width");
            cur.c = l.out_channels;
            break;
        case LayerKind::maxpool2:
            if (cur.h % 2 || cur.w % 2) throw ConfigError("network spec: maxpool2 on odd extent");
            cur.h /= 2;
            cur.w /= 2;
            break;
        case LayerKind::relu:
        case LayerKind::soft_proposal:
            break;
        case LayerKind::global_avg_pool:
        case LayerKind::fully_connected:
            return shapes; // vector stage reached
        }
    }
    return shapes;
}

} // namespace detail

// Fan-in-scaled uniform initialization, biases zero. The classifier bound is
// additionally scaled by the SP grid area when a proposal layer feeds the
// pooling stage: the coupling map sums to one, so pooled features arrive
// attenuated by 1/N^2 and the classifier starts in a matching range.
inline Network make_network(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Network net;
    net.spec = spec;
    Rng rng(seed);

    const auto shapes = detail::spatial_shapes(spec);
    std::size_t sp_grid = 0;
    std::size_t fc_in = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind == LayerKind::conv) {
            const auto in_shape = shapes[i];
            ConvLayer conv;
            conv.out_channels = l.out_channels;
            conv.in_channels = in_shape.c;
            conv.kernel_h = conv.kernel_w = l.kernel;
            conv.stride = l.stride;
            conv.padding = l.padding;
            const std::size_t fan_in = conv.in_channels * conv.kernel_h * conv.kernel_w;
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            conv.weights = Matrix(conv.out_channels, fan_in);
            for (double& w : conv.weights.v) w = rng.uniform(-bound, bound);
            conv.bias.assign(conv.out_channels, 0.0);
            net.conv.push_back(std::move(conv));
        } else if (l.kind == LayerKind::soft_proposal) {
            sp_grid = shapes[i].h;
        } else if (l.kind == LayerKind::global_avg_pool) {
            fc_in = shapes[i].c;
        }
    }

    double fc_bound = std::sqrt(6.0 / static_cast<double>(fc_in));
    if (spec.has_sp()) fc_bound *= static_cast<double>(sp_grid * sp_grid);
    net.fc.weights = Matrix(spec.class_count, fc_in);
    for (double& w : net.fc.weights.v) w = rng.uniform(-fc_bound, fc_bound);
    net.fc.bias.assign(spec.class_count, 0.0);
    return net;
}

// Everything the backward pass and the localization metrics need from a
// forward pass. The proposal map is stored exactly as used and is reused
// verbatim in backward.
struct ForwardCache {
    std::vector<Tensor3> inputs;                      // input to each spatial layer, by layer index
    std::vector<std::vector<std::uint32_t>> pool_argmax; // per maxpool occurrence
    ProposalMap proposal;                             // M as used at the SP layer
    Tensor3 sp_input;                                 // maps entering the SP layer (pre-coupling)
    bool sp_active = false;
    Vec pooled;                                       // global-average-pool output
    Vec logits;
};

namespace detail {

inline ForwardCache forward_impl(const Network& net, const Tensor3& image, const Grid* m_override) {
    const NetworkSpec& spec = net.spec;
    if (image.channels != spec.in_channels || image.height != spec.in_height ||
        image.width != spec.in_width)
        throw InputError("spn_forward: image shape does not match the network input");

    ForwardCache cache;
    cache.inputs.resize(spec.layers.size());
    Tensor3 x = image;
    std::size_t conv_idx = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        switch (l.kind) {
        case LayerKind::conv:
            cache.inputs[i] = x;
            x = conv2d(x, net.conv[conv_idx++]);
            break;
        case LayerKind::relu:
            cache.inputs[i] = x;
            x = relu(x);
            break;
        case LayerKind::maxpool2: {
            cache.inputs[i] = x;
            MaxPool2Result res = maxpool2(x);
            cache.pool_argmax.push_back(std::move(res.argmax));
            x = std::move(res.output);
            break;
        }
        case LayerKind::soft_proposal: {
            if (x.height != x.width)
                throw InputError("spn_forward: SP layer requires square feature maps");
            cache.sp_input = x;
            cache.sp_active = true;
            if (m_override != nullptr) {
                cache.proposal.data = *m_override;
                cache.proposal.iterations = 0;
                cache.proposal.residual = 0.0;
            } else if (spec.sp_force_uniform) {
                cache.proposal = uniform_proposal(x.height);
            } else {
                cache.proposal = generate_proposal(x, spec.sp_config);
            }
            x = sp_forward(x, cache.proposal);
            break;
        }
        case LayerKind::global_avg_pool:
            cache.inputs[i] = x;
            cache.pooled = global_avg_pool(x);
            break;
        case LayerKind::fully_connected:
            cache.logits = fully_connected(cache.pooled, net.fc);
            break;
        }
    }
    return cache;
}

} // namespace detail

// Full forward pass. The proposal map is regenerated from the current
// feature maps on every call, at training and at inference alike.
inline ForwardCache spn_forward(const Network& net, const Tensor3& image) {
    return detail::forward_impl(net, image, nullptr);
}

// Forward pass with the proposal map pinned to a caller-provided value;
// used by the frozen-M gradient oracle.
inline ForwardCache spn_forward_fixed_m(const Network& net, const Tensor3& image, const Grid& m) {
    return detail::forward_impl(net, image, &m);
}

// Parameter gradients, aligned with parameter_refs(net).
struct Gradients {
    std::vector<Vec> tensors;

    void accumulate(const Gradients& other) {
        if (tensors.empty()) {
            tensors = other.tensors;
            return;
        }
        for (std::size_t i = 0; i < tensors.size(); ++i)
            for (std::size_t j = 0; j < tensors[i].size(); ++j) tensors[i][j] += other.tensors[i][j];
    }

    void scale(double s) {
        for (auto& t : tensors)
            for (double& x : t) x *= s;
    }
};

// Reverse pass over the cached forward. At the SP layer the cached map
// modulates the gradient stream, so every filter below the insertion point
// sees proposal-weighted updates.
inline Gradients spn_backward(const Network& net, const ForwardCache& cache, const Vec& d_logits) {
    const NetworkSpec& spec = net.spec;
    if (d_logits.size() != spec.class_count) throw InputError("spn_backward: gradient size mismatch");
    if (cache.inputs.size() != spec.layers.size()) throw InputError("spn_backward: cache does not match network");

    std::vector<Matrix> conv_w_grads(net.conv.size());
    std::vector<Vec> conv_b_grads(net.conv.size());
    Matrix fc_w_grad;
    Vec fc_b_grad;

    Tensor3 d_x;
    Vec d_vec;
    std::size_t conv_idx = net.conv.size();
    std::size_t pool_idx = cache.pool_argmax.size();

    for (std::size_t done = 0; done < spec.layers.size(); ++done) {
        const std::size_t i = spec.layers.size() - 1 - done;
        const LayerSpec& l = spec.layers[i];
        switch (l.kind) {
        case LayerKind::fully_connected: {
            FcGrads g = fully_connected_backward(cache.pooled, net.fc, d_logits);
            fc_w_grad = std::move(g.d_weights);
            fc_b_grad = std::move(g.d_bias);
            d_vec = std::move(g.d_input);
            break;
        }
        case LayerKind::global_avg_pool: {
            const Tensor3& in = cache.inputs[i];
            d_x = global_avg_pool_backward(in.channels, in.height, in.width, d_vec);
            break;
        }
        case LayerKind::soft_proposal:
            if (!cache.sp_active) throw InputError("spn_backward: cache is missing the proposal map");
            d_x = sp_backward(d_x, cache.proposal);
            break;
        case LayerKind::maxpool2: {
            const Tensor3& in = cache.inputs[i];
            --pool_idx;
            d_x = maxpool2_backward(cache.pool_argmax[pool_idx], in.channels, in.height, in.width, d_x);
            break;
        }
        case LayerKind::relu:
            d_x = relu_backward(cache.inputs[i], d_x);
            break;
        case LayerKind::conv: {
            --conv_idx;
            ConvGrads g = conv2d_backward(cache.inputs[i], net.conv[conv_idx], d_x);
            conv_w_grads[conv_idx] = std::move(g.d_weights);
            conv_b_grads[conv_idx] = std::move(g.d_bias);
            d_x = std::move(g.d_input);
            break;
        }
        }
    }

    Gradients out;
    for (std::size_t i = 0; i < net.conv.size(); ++i) {
        out.tensors.push_back(std::move(conv_w_grads[i].v));
        out.tensors.push_back(std::move(conv_b_grads[i]));
    }
    out.tensors.push_back(std::move(fc_w_grad.v));
    out.tensors.push_back(std::move(fc_b_grad));
    return out;
}

} // namespace spn

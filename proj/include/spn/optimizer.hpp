#pragma once

#include <cstdint>
#include <vector>

#include "spn/error.hpp"
#include "spn/network.hpp"

namespace spn {

struct OptimizerConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    std::size_t batch_size = 16;
    int epochs = 30;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(learning_rate >= 0.0)) throw ConfigError("optimizer: learning_rate must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must be in [0,1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("optimizer: weight_decay must be >= 0");
        if (batch_size < 1) throw ConfigError("optimizer: batch_size must be >= 1");
        if (epochs < 0) throw ConfigError("optimizer: epochs must be >= 0");
    }
};

// Momentum buffers, aligned with parameter_refs order.
struct SgdState {
    std::vector<Vec> velocity;

    static SgdState zeros_like(Network& net) {
        SgdState st;
        for (const auto& ref : parameter_refs(net)) st.velocity.emplace_back(ref.size, 0.0);
        return st;
    }
};

// v <- momentum*v - lr*(g + weight_decay*p); p <- p + v.
inline void sgd_step(double* params, const double* grads, double* velocity, std::size_t n,
                     const OptimizerConfig& cfg) {
    for (std::size_t i = 0; i < n; ++i) {
        velocity[i] = cfg.momentum * velocity[i] -
                      cfg.learning_rate * (grads[i] + cfg.weight_decay * params[i]);
        params[i] += velocity[i];
    }
}

inline void sgd_step(Network& net, const Gradients& grads, SgdState& state, const OptimizerConfig& cfg) {
    cfg.validate();
    auto refs = parameter_refs(net);
    if (grads.tensors.size() != refs.size() || state.velocity.size() != refs.size())
        throw InputError("sgd_step: gradient/state tensor count mismatch");
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (grads.tensors[i].size() != refs[i].size || state.velocity[i].size() != refs[i].size)
            throw InputError("sgd_step: tensor size mismatch at " + refs[i].name);
        sgd_step(refs[i].data, grads.tensors[i].data(), state.velocity[i].data(), refs[i].size, cfg);
    }
}

} // namespace spn

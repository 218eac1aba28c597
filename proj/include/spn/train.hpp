#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <vector>

#include "spn/layers.hpp"
#include "spn/network.hpp"
#include "spn/optimizer.hpp"
#include "spn/rng.hpp"

namespace spn {

struct LabeledImage {
    Tensor3 image;
    std::vector<int> labels;
};

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0.0;
    double accuracy = 0.0;
    double mean_walk_iterations = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
};

namespace detail {

inline bool prediction_correct(const Vec& logits, const std::vector<int>& labels, LossMode mode) {
    if (mode == LossMode::softmax_cross_entropy) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.size(); ++i)
            if (logits[i] > logits[best]) best = i;
        return static_cast<int>(best) == labels[0];
    }
    // multi-label: exact set match at the 0.5 sigmoid threshold (logit 0)
    std::vector<char> want(logits.size(), 0);
    for (int l : labels) want[static_cast<std::size_t>(l)] = 1;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if ((logits[i] > 0.0) != static_cast<bool>(want[i])) return false;
    return true;
}

} // namespace detail

// Shuffled mini-batch SGD; the shuffle order is fixed by cfg.seed and batch
// gradients are averaged before each optimizer step. Single-threaded, so a
// fixed seed reproduces the run bit for bit.
inline TrainResult train(Network& net, const std::vector<LabeledImage>& data, const OptimizerConfig& cfg,
                         SgdState* state = nullptr, std::ostream* progress = nullptr) {
    cfg.validate();
    if (data.empty()) throw InputError("train: empty dataset");
    for (const auto& s : data) {
        if (s.labels.empty()) throw InputError("train: sample without labels");
        for (int l : s.labels)
            if (l < 0 || static_cast<std::size_t>(l) >= net.spec.class_count)
                throw InputError("train: label out of range");
    }

    SgdState local;
    if (state == nullptr) {
        local = SgdState::zeros_like(net);
        state = &local;
    } else if (state->velocity.empty()) {
        *state = SgdState::zeros_like(net);
    }

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        double walk_iters_sum = 0.0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Gradients batch_grads;
            for (std::size_t s = start; s < end; ++s) {
                const LabeledImage& sample = data[order[s]];
                ForwardCache cache = spn_forward(net, sample.image);
                LossResult lr = loss(cache.logits, sample.labels, net.spec.loss_mode);
                loss_sum += lr.value;
                correct += detail::prediction_correct(cache.logits, sample.labels, net.spec.loss_mode);
                walk_iters_sum += cache.proposal.iterations;
                batch_grads.accumulate(spn_backward(net, cache, lr.d_logits));
            }
            batch_grads.scale(1.0 / static_cast<double>(end - start));
            sgd_step(net, batch_grads, *state, cfg);
        }

        EpochLog log;
        log.epoch = epoch;
        log.mean_loss = loss_sum / static_cast<double>(data.size());
        log.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
        log.mean_walk_iterations = walk_iters_sum / static_cast<double>(data.size());
        result.log.push_back(log);
        if (progress != nullptr)
            *progress << "epoch " << epoch << " loss " << log.mean_loss << " acc " << log.accuracy
                      << " walk_iters " << log.mean_walk_iterations << "\n";
    }
    return result;
}

} // namespace spn

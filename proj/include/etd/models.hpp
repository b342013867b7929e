#pragma once

#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "etd/blocks.hpp"
#include "etd/model_config.hpp"
#include "etd/stages.hpp"

namespace etd {

/// A built network: an ordered stage pipeline plus its configuration.
/// Training (forward/backward/params) is single-writer; `infer` and
/// `predict_proba` touch no state and may be called concurrently.
template <typename T>
class Model {
public:
    Model(ModelConfig cfg, std::vector<std::unique_ptr<Stage<T>>> stages)
        : cfg_(std::move(cfg)), stages_(std::move(stages)) {}

    const ModelConfig& config() const { return cfg_; }
    const std::vector<std::unique_ptr<Stage<T>>>& stages() const { return stages_; }

    /// Training-mode forward pass; retains activations for backward.
    Tensor<T> forward_train(const Tensor<T>& x) {
        acts_.clear();
        acts_.reserve(stages_.size() + 1);
        acts_.push_back(x);
        for (auto& s : stages_) acts_.push_back(s->forward(acts_.back()));
        return acts_.back();
    }

    /// Reverse-mode sweep from the output cotangent; returns dL/dx.
    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (acts_.size() != stages_.size() + 1)
            throw train_error("backward called without a preceding forward_train");
        Tensor<T> g = grad_out;
        for (std::size_t i = stages_.size(); i-- > 0;)
            g = stages_[i]->backward(acts_[i], acts_[i + 1], g);
        return g;
    }

    Tensor<T> infer(const Tensor<T>& x) const {
        Tensor<T> cur = x;
        for (const auto& s : stages_) cur = s->infer(cur);
        return cur;
    }

    /// Probabilities for a batch of series shaped [n, channels, length].
    /// Pure: running statistics and parameters are left untouched.
    std::vector<T> predict_proba(const Tensor<T>& x, int batch = 256) const {
        if (x.rank() != 3) throw shape_error("predict_proba: input must be rank 3");
        if (x.dim(2) != cfg_.input_length)
            throw shape_error("predict_proba: input length " + std::to_string(x.dim(2)) +
                              " does not match model input length " +
                              std::to_string(cfg_.input_length));
        if (x.dim(1) != cfg_.input_channels)
            throw shape_error("predict_proba: channel count mismatch");
        const int n = x.dim(0);
        std::vector<T> out(static_cast<std::size_t>(n));
        const std::size_t row = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
        for (int start = 0; start < n; start += batch) {
            const int bs = std::min(batch, n - start);
            Tensor<T> xb({bs, x.dim(1), x.dim(2)});
            std::copy_n(x.data.data() + static_cast<std::size_t>(start) * row, bs * row,
                        xb.data.data());
            Tensor<T> p = infer(xb);
            for (int i = 0; i < bs; ++i) out[static_cast<std::size_t>(start) + i] = p.at(i, 0);
        }
        return out;
    }

    std::vector<ParamSlot<T>> params() {
        std::vector<ParamSlot<T>> out;
        for (auto& s : stages_) s->collect_params(out);
        return out;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (const auto& slot : params()) n += slot.value->size();
        return n;
    }

    void zero_grads() {
        for (auto& slot : params())
            if (slot.grad) std::fill(slot.grad->begin(), slot.grad->end(), T(0));
    }

    /// Flat op sequence, in forward order, for structural assertions.
    std::vector<std::string> op_trace() const {
        std::vector<std::string> ops;
        for (const auto& s : stages_) s->append_trace(ops);
        return ops;
    }

    void release_activations() { acts_.clear(); }

private:
    ModelConfig cfg_;
    std::vector<std::unique_ptr<Stage<T>>> stages_;
    std::vector<Tensor<T>> acts_;
};

namespace detail {

template <typename T>
void append_head(std::vector<std::unique_ptr<Stage<T>>>& stages, int in_features,
                 const std::vector<int>& head, std::mt19937_64& rng) {
    int f = in_features;
    for (std::size_t i = 0; i + 1 < head.size(); ++i) {
        stages.push_back(std::make_unique<DenseStage<T>>(f, head[i], rng));
        stages.push_back(std::make_unique<ReluStage<T>>());
        f = head[i];
    }
    stages.push_back(std::make_unique<DenseStage<T>>(f, head.back(), rng));
    stages.push_back(std::make_unique<SigmoidStage<T>>());
}

} // namespace detail

/// conv -> ReLU -> avg pool, twice, then the fully connected head.
template <typename T>
Model<T> build_classical_cnn(const ModelConfig& cfg, std::uint64_t init_seed) {
    if (cfg.architecture != Architecture::kClassicalCnn)
        throw config_error("build_classical_cnn: wrong architecture tag");
    validate_config(cfg);
    if (!cfg.blocks.empty())
        throw config_error("build_classical_cnn: block list must be empty");
    std::mt19937_64 rng = make_rng(init_seed);
    std::vector<std::unique_ptr<Stage<T>>> stages;
    int len = cfg.input_length;
    stages.push_back(
        std::make_unique<Conv1DStage<T>>(cfg.input_channels, cfg.cnn_filters, cfg.cnn_kernel, rng));
    stages.push_back(std::make_unique<ReluStage<T>>());
    stages.push_back(std::make_unique<AvgPool1DStage<T>>(cfg.cnn_pool_window, cfg.cnn_pool_stride));
    len = pooled_length(len, cfg.cnn_pool_window, cfg.cnn_pool_stride);
    stages.push_back(
        std::make_unique<Conv1DStage<T>>(cfg.cnn_filters, cfg.cnn_filters, cfg.cnn_kernel, rng));
    stages.push_back(std::make_unique<ReluStage<T>>());
    stages.push_back(std::make_unique<AvgPool1DStage<T>>(cfg.cnn_pool_window, cfg.cnn_pool_stride));
    len = pooled_length(len, cfg.cnn_pool_window, cfg.cnn_pool_stride);
    stages.push_back(std::make_unique<FlattenStage<T>>());
    detail::append_head(stages, cfg.cnn_filters * len, cfg.head, rng);
    return Model<T>(cfg, std::move(stages));
}

namespace detail {

template <typename T>
Model<T> build_dense_variant(const ModelConfig& cfg, BlockKind kind, std::uint64_t init_seed) {
    validate_config(cfg);
    if (cfg.blocks.empty()) throw config_error("dense variant needs at least one block");
    std::mt19937_64 rng = make_rng(init_seed);
    std::vector<std::unique_ptr<Stage<T>>> stages;
    stages.push_back(
        std::make_unique<Conv1DStage<T>>(cfg.input_channels, cfg.stem_filters, cfg.stem_kernel, rng));
    int ch = cfg.stem_filters;
    for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
        auto block = std::make_unique<DenseBlockStage<T>>(ch, cfg.blocks[i], kind, rng);
        ch = block->out_channels();
        stages.push_back(std::move(block));
        if (i + 1 < cfg.blocks.size()) {
            auto tr = std::make_unique<TransitionStage<T>>(ch, cfg.transitions[i], rng);
            ch = tr->out_channels();
            stages.push_back(std::move(tr));
        }
    }
    stages.push_back(std::make_unique<GlobalAvgPoolStage<T>>());
    append_head(stages, ch, cfg.head, rng);
    return Model<T>(cfg, std::move(stages));
}

} // namespace detail

/// Stem conv feeding standard dense blocks (bottleneck parts), transitions
/// between them, then global average pooling into the sigmoid head.
template <typename T>
Model<T> build_densenet1d(const ModelConfig& cfg, std::uint64_t init_seed) {
    if (cfg.architecture != Architecture::kDensenet1d)
        throw config_error("build_densenet1d: wrong architecture tag");
    return detail::build_dense_variant<T>(cfg, BlockKind::kStandard, init_seed);
}

/// Multi-scale variant: every part stacks convolutions with strictly
/// decreasing kernel lengths and every layer's maps join the concatenation.
template <typename T>
Model<T> build_multiscale_densenet(const ModelConfig& cfg, std::uint64_t init_seed) {
    if (cfg.architecture != Architecture::kMsDensenet)
        throw config_error("build_multiscale_densenet: wrong architecture tag");
    if (cfg.blocks.size() == 1)
        std::cerr << "warning: a single multi-scale dense block tends to underfit; "
                     "two blocks are the intended configuration\n";
    return detail::build_dense_variant<T>(cfg, BlockKind::kMultiScale, init_seed);
}

template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t init_seed) {
    switch (cfg.architecture) {
        case Architecture::kClassicalCnn: return build_classical_cnn<T>(cfg, init_seed);
        case Architecture::kDensenet1d: return build_densenet1d<T>(cfg, init_seed);
        case Architecture::kMsDensenet: return build_multiscale_densenet<T>(cfg, init_seed);
    }
    throw config_error("build_model: unknown architecture");
}

} // namespace etd

#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "etd/ops.hpp"
#include "etd/rng.hpp"
#include "etd/tensor.hpp"

namespace etd {

/// A named view onto one parameter vector and its gradient slot.
/// `trainable` is false for batch-norm running statistics, which are
/// serialized with the model but never touched by the optimizer.
template <typename T>
struct ParamSlot {
    std::string name;
    std::vector<T>* value;
    std::vector<T>* grad;
    bool trainable = true;
};

template <typename T>
void init_uniform_fan_in(std::vector<T>& w, int fan_in, std::mt19937_64& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> d(-s, s);
    for (T& v : w) v = static_cast<T>(d(rng));
}

/// One step of a model pipeline. Training forward passes may cache
/// activations on the stage; `infer` must not write any member state so
/// that a frozen model can serve concurrent callers.
template <typename T>
class Stage {
public:
    virtual ~Stage() = default;
    virtual std::string kind() const = 0;
    virtual Tensor<T> forward(const Tensor<T>& x) = 0;
    virtual Tensor<T> infer(const Tensor<T>& x) const = 0;
    /// x and y are the stage input/output saved by the caller; returns dL/dx.
    virtual Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& grad_y) = 0;
    virtual void collect_params(std::vector<ParamSlot<T>>& out) {}
    virtual void append_trace(std::vector<std::string>& ops) const { ops.push_back(kind()); }
};

template <typename T>
class Conv1DStage : public Stage<T> {
public:
    Conv1DStage(int in_ch, int out_ch, int kernel, std::mt19937_64& rng)
        : p_(in_ch, out_ch, kernel) {
        init_uniform_fan_in(p_.weights, in_ch * kernel, rng);
    }

    std::string kind() const override { return "conv"; }

    Tensor<T> forward(const Tensor<T>& x) override { return infer(x); }

    Tensor<T> infer(const Tensor<T>& x) const override {
        Tensor<T> out({x.dim(0), p_.out_channels, x.dim(2)});
        conv1d_forward(x.slab(), p_, out.slab());
        return out;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& gy) override {
        Tensor<T> gx({x.dim(0), x.dim(1), x.dim(2)});
        conv1d_backward(x.slab(), p_, gy.slab(), gx.slab());
        return gx;
    }

    void collect_params(std::vector<ParamSlot<T>>& out) override {
        out.push_back({"conv.weights", &p_.weights, &p_.grad_weights, true});
        out.push_back({"conv.bias", &p_.bias, &p_.grad_bias, true});
    }

    Conv1DParams<T>& params() { return p_; }

private:
    Conv1DParams<T> p_;
};

template <typename T>
class BatchNorm1DStage : public Stage<T> {
public:
    explicit BatchNorm1DStage(int channels) : p_(channels) {}

    std::string kind() const override { return "bn"; }

    Tensor<T> forward(const Tensor<T>& x) override {
        Tensor<T> out({x.dim(0), x.dim(1), x.dim(2)});
        batch_norm1d_train_forward(x.slab(), p_, out.slab(), cache_);
        return out;
    }

    Tensor<T> infer(const Tensor<T>& x) const override {
        Tensor<T> out({x.dim(0), x.dim(1), x.dim(2)});
        batch_norm1d_infer(x.slab(), p_, out.slab());
        return out;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& gy) override {
        Tensor<T> gx({x.dim(0), x.dim(1), x.dim(2)});
        batch_norm1d_backward(x.slab(), p_, cache_, gy.slab(), gx.slab());
        return gx;
    }

    void collect_params(std::vector<ParamSlot<T>>& out) override {
        out.push_back({"bn.gamma", &p_.gamma, &p_.grad_gamma, true});
        out.push_back({"bn.beta", &p_.beta, &p_.grad_beta, true});
        out.push_back({"bn.running_mean", &p_.running_mean, nullptr, false});
        out.push_back({"bn.running_var", &p_.running_var, nullptr, false});
    }

    BatchNorm1DParams<T>& params() { return p_; }

private:
    BatchNorm1DParams<T> p_;
    BatchNormCache<T> cache_;
};

template <typename T>
class ReluStage : public Stage<T> {
public:
    std::string kind() const override { return "relu"; }

    Tensor<T> forward(const Tensor<T>& x) override { return infer(x); }

    Tensor<T> infer(const Tensor<T>& x) const override {
        Tensor<T> out(x.shape);
        relu_forward(x.data.data(), out.data.data(), x.numel());
        return out;
    }

    Tensor<T> backward(const Tensor<T>&, const Tensor<T>& y, const Tensor<T>& gy) override {
        Tensor<T> gx(y.shape);
        relu_backward(y.data.data(), gy.data.data(), gx.data.data(), y.numel());
        return gx;
    }
};

template <typename T>
class SigmoidStage : public Stage<T> {
public:
    std::string kind() const override { return "sigmoid"; }

    Tensor<T> forward(const Tensor<T>& x) override { return infer(x); }

    Tensor<T> infer(const Tensor<T>& x) const override {
        Tensor<T> out(x.shape);
        sigmoid_forward(x.data.data(), out.data.data(), x.numel());
        return out;
    }

    Tensor<T> backward(const Tensor<T>&, const Tensor<T>& y, const Tensor<T>& gy) override {
        Tensor<T> gx(y.shape);
        sigmoid_backward(y.data.data(), gy.data.data(), gx.data.data(), y.numel());
        return gx;
    }
};

template <typename T>
class AvgPool1DStage : public Stage<T> {
public:
    AvgPool1DStage(int window, int stride) : window_(window), stride_(stride) {}

    std::string kind() const override { return "avg_pool"; }

    Tensor<T> forward(const Tensor<T>& x) override { return infer(x); }

    Tensor<T> infer(const Tensor<T>& x) const override {
        Tensor<T> out({x.dim(0), x.dim(1), pooled_length(x.dim(2), window_, stride_)});
        avg_pool1d_forward(x.slab(), window_, stride_, out.slab());
        return out;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& gy) override {
        Tensor<T> gx({x.dim(0), x.dim(1), x.dim(2)});
        avg_pool1d_backward(window_, stride_, gy.slab(), gx.slab());
        return gx;
    }

private:
    int window_, stride_;
};

template <typename T>
class GlobalAvgPoolStage : public Stage<T> {
public:
    std::string kind() const override { return "global_avg_pool"; }

    Tensor<T> forward(const Tensor<T>& x) override { return infer(x); }

    Tensor<T> infer(const Tensor<T>& x) const override {
        Tensor<T> out;
        global_avg_pool_forward(x.slab(), out);
        return out;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& gy) override {
        Tensor<T> gx({x.dim(0), x.dim(1), x.dim(2)});
        global_avg_pool_backward(gy, gx.slab());
        return gx;
    }
};

template <typename T>
class FlattenStage : public Stage<T> {
public:
    std::string kind() const override { return "flatten"; }

    Tensor<T> forward(const Tensor<T>& x) override { return infer(x); }

    Tensor<T> infer(const Tensor<T>& x) const override {
        if (x.rank() != 3) throw shape_error("flatten: input must be rank 3");
        return Tensor<T>({x.dim(0), x.dim(1) * x.dim(2)}, x.data);
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& gy) override {
        return Tensor<T>({x.dim(0), x.dim(1), x.dim(2)}, gy.data);
    }
};

template <typename T>
class DenseStage : public Stage<T> {
public:
    DenseStage(int in_features, int out_features, std::mt19937_64& rng)
        : p_(in_features, out_features) {
        init_uniform_fan_in(p_.weights, in_features, rng);
    }

    std::string kind() const override { return "fc"; }

    Tensor<T> forward(const Tensor<T>& x) override { return infer(x); }

    Tensor<T> infer(const Tensor<T>& x) const override {
        Tensor<T> out;
        fully_connected_forward(x, p_, out);
        return out;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& gy) override {
        Tensor<T> gx;
        fully_connected_backward(x, p_, gy, gx);
        return gx;
    }

    void collect_params(std::vector<ParamSlot<T>>& out) override {
        out.push_back({"fc.weights", &p_.weights, &p_.grad_weights, true});
        out.push_back({"fc.bias", &p_.bias, &p_.grad_bias, true});
    }

    DenseParams<T>& params() { return p_; }

private:
    DenseParams<T> p_;
};

} // namespace etd

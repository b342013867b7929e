#pragma once

#include <memory>
#include <string>
#include <vector>

#include "etd/model_config.hpp"
#include "etd/stages.hpp"

namespace etd {

/// How a block consumes and re-exports its layers' outputs.
///  - kStandard: layers inside a part form a chain (bottleneck feeding a
///    growth convolution); only the last layer's maps join the running
///    concatenation.
///  - kMultiScale: every layer reads the full running concatenation and
///    every layer's maps are appended to it.
enum class BlockKind { kStandard, kMultiScale };

/// One convolutional unit of a dense block: conv + batch norm + ReLU in the
/// configured order. Operates on views so block-level concatenation needs
/// no copies.
template <typename T>
class ConvUnit {
public:
    ConvUnit(int in_ch, int filters, int kernel, Ordering ordering, std::mt19937_64& rng)
        : ordering_(ordering),
          conv_(in_ch, filters, kernel),
          bn_(ordering == Ordering::kConvBnRelu ? filters : in_ch) {
        init_uniform_fan_in(conv_.weights, in_ch * kernel, rng);
    }

    int in_channels() const { return conv_.in_channels; }
    int out_channels() const { return conv_.out_channels; }
    int kernel_length() const { return conv_.kernel_length; }
    Ordering ordering() const { return ordering_; }

    void forward(const CSlab<T>& in, const Slab<T>& out) {
        if (ordering_ == Ordering::kConvBnRelu) {
            conv_out_ = Tensor<T>({in.batch, conv_.out_channels, in.len});
            conv1d_forward(in, conv_, conv_out_.slab());
            batch_norm1d_train_forward(conv_out_.slab(), bn_, out, bn_cache_);
            relu_inplace(out);
        } else {
            z_ = Tensor<T>({in.batch, in.ch, in.len});
            batch_norm1d_train_forward(in, bn_, z_.slab(), bn_cache_);
            relu_forward(z_.data.data(), z_.data.data(), z_.numel());
            conv1d_forward(z_.slab(), conv_, out);
        }
    }

    void infer(const CSlab<T>& in, const Slab<T>& out) const {
        if (ordering_ == Ordering::kConvBnRelu) {
            Tensor<T> tmp({in.batch, conv_.out_channels, in.len});
            conv1d_forward(in, conv_, tmp.slab());
            batch_norm1d_infer(tmp.slab(), bn_, out);
            relu_inplace(out);
        } else {
            Tensor<T> z({in.batch, in.ch, in.len});
            batch_norm1d_infer(in, bn_, z.slab());
            relu_forward(z.data.data(), z.data.data(), z.numel());
            conv1d_forward(z.slab(), conv_, out);
        }
    }

    /// in/out are the same views passed to forward; grad_in accumulates.
    void backward(const CSlab<T>& in, const CSlab<T>& out, const CSlab<T>& grad_out,
                  const Slab<T>& grad_in) {
        if (ordering_ == Ordering::kConvBnRelu) {
            Tensor<T> g_bn({in.batch, conv_.out_channels, in.len});
            relu_backward_views(out, grad_out, g_bn.slab());
            Tensor<T> g_conv({in.batch, conv_.out_channels, in.len});
            batch_norm1d_backward(conv_out_.slab(), bn_, bn_cache_, g_bn.slab(), g_conv.slab());
            conv1d_backward(in, conv_, g_conv.slab(), grad_in);
        } else {
            Tensor<T> g_z({in.batch, in.ch, in.len});
            conv1d_backward(z_.slab(), conv_, grad_out, g_z.slab());
            Tensor<T> g_bn({in.batch, in.ch, in.len});
            relu_backward_views(z_.slab(), g_z.slab(), g_bn.slab());
            batch_norm1d_backward(in, bn_, bn_cache_, g_bn.slab(), grad_in);
        }
    }

    void collect_params(const std::string& prefix, std::vector<ParamSlot<T>>& out) {
        out.push_back({prefix + ".conv.weights", &conv_.weights, &conv_.grad_weights, true});
        out.push_back({prefix + ".conv.bias", &conv_.bias, &conv_.grad_bias, true});
        out.push_back({prefix + ".bn.gamma", &bn_.gamma, &bn_.grad_gamma, true});
        out.push_back({prefix + ".bn.beta", &bn_.beta, &bn_.grad_beta, true});
        out.push_back({prefix + ".bn.running_mean", &bn_.running_mean, nullptr, false});
        out.push_back({prefix + ".bn.running_var", &bn_.running_var, nullptr, false});
    }

    void append_trace(std::vector<std::string>& ops) const {
        if (ordering_ == Ordering::kConvBnRelu) {
            ops.insert(ops.end(), {"conv", "bn", "relu"});
        } else {
            ops.insert(ops.end(), {"bn", "relu", "conv"});
        }
    }

private:
    static void relu_inplace(const Slab<T>& s) {
        for (int b = 0; b < s.batch; ++b) {
            T* r = s.row(b, 0);
            relu_forward(r, r, static_cast<std::size_t>(s.ch) * s.len);
        }
    }

    static void relu_backward_views(const CSlab<T>& y, const CSlab<T>& g, const Slab<T>& gx) {
        for (int b = 0; b < y.batch; ++b)
            relu_backward(y.row(b, 0), g.row(b, 0), gx.row(b, 0),
                          static_cast<std::size_t>(y.ch) * y.len);
    }

    Ordering ordering_;
    Conv1DParams<T> conv_;
    BatchNorm1DParams<T> bn_;
    BatchNormCache<T> bn_cache_;
    Tensor<T> conv_out_;  // cached conv output (conv-bn-relu ordering)
    Tensor<T> z_;         // cached relu(bn(input)) (bn-relu-conv ordering)
};

/// Densely connected block over a single channel-concatenation buffer.
/// Layer inputs are channel prefixes of the buffer; exported outputs are
/// written straight into their channel range, so the "union of all previous
/// outputs" is a view, not a copy.
template <typename T>
class DenseBlockStage : public Stage<T> {
public:
    struct WireEntry {
        int part;
        int layer;  // index within the part
        int in_channels;
        int filters;
        int kernel;
        bool exported;
    };

    DenseBlockStage(int in_channels, const DenseBlockSpec& spec, BlockKind kind,
                    std::mt19937_64& rng)
        : in_channels_(in_channels), spec_(spec), kind_(kind) {
        if (in_channels < 1) throw config_error("dense block: input channels must be >= 1");
        if (spec.parts > 0 && spec.part.layers.empty())
            throw config_error("dense block: parts must contain at least one conv layer");
        if (kind == BlockKind::kMultiScale) {
            for (std::size_t i = 1; i < spec.part.layers.size(); ++i)
                if (spec.part.layers[i].second >= spec.part.layers[i - 1].second)
                    throw config_error(
                        "multi-scale block: kernel lengths must strictly decrease within a part");
        }
        int c = in_channels;
        for (int p = 0; p < spec.parts; ++p) {
            const int part_prefix = c;
            int chain_in = part_prefix;
            for (std::size_t i = 0; i < spec.part.layers.size(); ++i) {
                const auto [f, k] = spec.part.layers[i];
                const bool last = i + 1 == spec.part.layers.size();
                const bool exported = kind == BlockKind::kMultiScale || last;
                const int in_ch = kind == BlockKind::kMultiScale ? c : chain_in;
                units_.emplace_back(
                    std::make_unique<ConvUnit<T>>(in_ch, f, k, spec.part.ordering, rng));
                wiring_.push_back({p, static_cast<int>(i), in_ch, f, k, exported});
                if (exported) c += f;
                chain_in = f;
            }
        }
        out_channels_ = c;
        if (kind == BlockKind::kStandard) {
            const int n = static_cast<int>(spec.part.layers.size());
            part_tmp_.resize(static_cast<std::size_t>(spec.parts) * std::max(0, n - 1));
        }
    }

    int in_channels() const { return in_channels_; }
    int out_channels() const { return out_channels_; }
    int conv_layer_count() const { return static_cast<int>(units_.size()); }
    BlockKind block_kind() const { return kind_; }
    const std::vector<WireEntry>& wiring() const { return wiring_; }

    std::string kind() const override {
        return kind_ == BlockKind::kMultiScale ? "ms_dense_block" : "dense_block";
    }

    Tensor<T> forward(const Tensor<T>& x) override { return run<false>(x); }

    Tensor<T> infer(const Tensor<T>& x) const override {
        return const_cast<DenseBlockStage*>(this)->template run<true>(x);
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& gy) override {
        Tensor<T> gbuf = gy;
        const int n_layers = static_cast<int>(spec_.part.layers.size());
        int c = out_channels_;
        for (int p = spec_.parts - 1; p >= 0; --p) {
            if (kind_ == BlockKind::kMultiScale) {
                for (int i = n_layers - 1; i >= 0; --i) {
                    ConvUnit<T>& u = *units_[static_cast<std::size_t>(p) * n_layers + i];
                    c -= u.out_channels();
                    u.backward(y.channels(0, c), y.channels(c, u.out_channels()),
                               gbuf.channels(c, u.out_channels()), gbuf.channels(0, c));
                }
            } else {
                ConvUnit<T>& last = *units_[static_cast<std::size_t>(p + 1) * n_layers - 1];
                c -= last.out_channels();
                // walk the chain from the exported layer down to the prefix
                Tensor<T> g;
                for (int i = n_layers - 1; i >= 0; --i) {
                    ConvUnit<T>& u = *units_[static_cast<std::size_t>(p) * n_layers + i];
                    const bool top = i + 1 == n_layers;
                    const CSlab<T> in_view =
                        i > 0 ? CSlab<T>(chain_tmp(p, i - 1).slab()) : CSlab<T>(y.channels(0, c));
                    const CSlab<T> out_view = top ? CSlab<T>(y.channels(c, u.out_channels()))
                                                  : CSlab<T>(chain_tmp(p, i).slab());
                    const CSlab<T> go = top ? CSlab<T>(gbuf.channels(c, u.out_channels()))
                                            : CSlab<T>(g.slab());
                    if (i > 0) {
                        Tensor<T> gi({x.dim(0), u.in_channels(), x.dim(2)});
                        u.backward(in_view, out_view, go, gi.slab());
                        g = std::move(gi);
                    } else {
                        u.backward(in_view, out_view, go, gbuf.channels(0, c));
                    }
                }
            }
        }
        return slice_channels(gbuf, 0, in_channels_);
    }

    void collect_params(std::vector<ParamSlot<T>>& out) override {
        for (std::size_t i = 0; i < units_.size(); ++i)
            units_[i]->collect_params(kind() + "." + std::to_string(i), out);
    }

    void append_trace(std::vector<std::string>& ops) const override {
        for (const auto& u : units_) u->append_trace(ops);
    }

private:
    Tensor<T>& chain_tmp(int part, int slot) {
        const int per = static_cast<int>(spec_.part.layers.size()) - 1;
        return part_tmp_[static_cast<std::size_t>(part) * per + slot];
    }

    template <bool Inference>
    Tensor<T> run(const Tensor<T>& x) {
        if (x.rank() != 3) throw shape_error("dense block: input must be rank 3");
        if (x.dim(1) != in_channels_)
            throw config_error("dense block: input has " + std::to_string(x.dim(1)) +
                               " channels, expected " + std::to_string(in_channels_));
        const int B = x.dim(0), L = x.dim(2);
        Tensor<T> buf({B, out_channels_, L});
        {
            Slab<T> dst = buf.channels(0, in_channels_);
            const CSlab<T> src = x.slab();
            for (int b = 0; b < B; ++b)
                std::copy_n(src.row(b, 0), static_cast<std::size_t>(in_channels_) * L,
                            dst.row(b, 0));
        }
        const int n_layers = static_cast<int>(spec_.part.layers.size());
        int c = in_channels_;
        for (int p = 0; p < spec_.parts; ++p) {
            if (kind_ == BlockKind::kMultiScale) {
                for (int i = 0; i < n_layers; ++i) {
                    ConvUnit<T>& u = *units_[static_cast<std::size_t>(p) * n_layers + i];
                    if constexpr (Inference)
                        u.infer(buf.channels(0, c), buf.channels(c, u.out_channels()));
                    else
                        u.forward(buf.channels(0, c), buf.channels(c, u.out_channels()));
                    c += u.out_channels();
                }
            } else {
                Tensor<T> local_prev;
                for (int i = 0; i < n_layers; ++i) {
                    ConvUnit<T>& u = *units_[static_cast<std::size_t>(p) * n_layers + i];
                    const bool last = i + 1 == n_layers;
                    const CSlab<T> in_view =
                        i == 0 ? CSlab<T>(buf.channels(0, c))
                               : (Inference ? CSlab<T>(local_prev.slab())
                                            : CSlab<T>(chain_tmp(p, i - 1).slab()));
                    if (last) {
                        if constexpr (Inference)
                            u.infer(in_view, buf.channels(c, u.out_channels()));
                        else
                            u.forward(in_view, buf.channels(c, u.out_channels()));
                        c += u.out_channels();
                    } else {
                        Tensor<T> t({B, u.out_channels(), L});
                        if constexpr (Inference) {
                            u.infer(in_view, t.slab());
                            local_prev = std::move(t);
                        } else {
                            u.forward(in_view, t.slab());
                            chain_tmp(p, i) = std::move(t);
                        }
                    }
                }
            }
        }
        return buf;
    }

    int in_channels_;
    int out_channels_ = 0;
    DenseBlockSpec spec_;
    BlockKind kind_;
    std::vector<std::unique_ptr<ConvUnit<T>>> units_;
    std::vector<WireEntry> wiring_;
    std::vector<Tensor<T>> part_tmp_;  // chain intermediates (standard blocks)
};

/// Transition between dense blocks: BN -> ReLU -> width-1 convolution down
/// to ceil(compression * channels), optionally followed by average pooling.
template <typename T>
class TransitionStage : public Stage<T> {
public:
    TransitionStage(int in_channels, const TransitionSpec& spec, std::mt19937_64& rng)
        : spec_(spec),
          bn_(in_channels),
          conv_(in_channels, transition_out_channels(in_channels, spec), 1) {
        init_uniform_fan_in(conv_.weights, in_channels, rng);
    }

    int out_channels() const { return conv_.out_channels; }

    std::string kind() const override { return "transition"; }

    Tensor<T> forward(const Tensor<T>& x) override {
        const int B = x.dim(0), L = x.dim(2);
        z_ = Tensor<T>({B, x.dim(1), L});
        batch_norm1d_train_forward(x.slab(), bn_, z_.slab(), bn_cache_);
        relu_forward(z_.data.data(), z_.data.data(), z_.numel());
        conv_out_ = Tensor<T>({B, conv_.out_channels, L});
        conv1d_forward(z_.slab(), conv_, conv_out_.slab());
        if (spec_.pool_stride <= 1) return conv_out_;
        Tensor<T> out({B, conv_.out_channels,
                       pooled_length(L, spec_.pool_stride, spec_.pool_stride)});
        avg_pool1d_forward(conv_out_.slab(), spec_.pool_stride, spec_.pool_stride, out.slab());
        return out;
    }

    Tensor<T> infer(const Tensor<T>& x) const override {
        const int B = x.dim(0), L = x.dim(2);
        Tensor<T> z({B, x.dim(1), L});
        batch_norm1d_infer(x.slab(), bn_, z.slab());
        relu_forward(z.data.data(), z.data.data(), z.numel());
        Tensor<T> c({B, conv_.out_channels, L});
        conv1d_forward(z.slab(), conv_, c.slab());
        if (spec_.pool_stride <= 1) return c;
        Tensor<T> out({B, conv_.out_channels,
                       pooled_length(L, spec_.pool_stride, spec_.pool_stride)});
        avg_pool1d_forward(c.slab(), spec_.pool_stride, spec_.pool_stride, out.slab());
        return out;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>&, const Tensor<T>& gy) override {
        const int B = x.dim(0), L = x.dim(2);
        const Tensor<T>* g_conv = &gy;
        Tensor<T> g_pool;
        if (spec_.pool_stride > 1) {
            g_pool = Tensor<T>({B, conv_.out_channels, L});
            avg_pool1d_backward(spec_.pool_stride, spec_.pool_stride, gy.slab(), g_pool.slab());
            g_conv = &g_pool;
        }
        Tensor<T> g_z({B, x.dim(1), L});
        conv1d_backward(z_.slab(), conv_, g_conv->slab(), g_z.slab());
        Tensor<T> g_bn({B, x.dim(1), L});
        for (int b = 0; b < B; ++b)
            relu_backward(z_.slab().row(b, 0), g_z.slab().row(b, 0), g_bn.slab().row(b, 0),
                          static_cast<std::size_t>(x.dim(1)) * L);
        Tensor<T> gx({B, x.dim(1), L});
        batch_norm1d_backward(x.slab(), bn_, bn_cache_, g_bn.slab(), gx.slab());
        return gx;
    }

    void collect_params(std::vector<ParamSlot<T>>& out) override {
        out.push_back({"transition.bn.gamma", &bn_.gamma, &bn_.grad_gamma, true});
        out.push_back({"transition.bn.beta", &bn_.beta, &bn_.grad_beta, true});
        out.push_back({"transition.bn.running_mean", &bn_.running_mean, nullptr, false});
        out.push_back({"transition.bn.running_var", &bn_.running_var, nullptr, false});
        out.push_back({"transition.conv.weights", &conv_.weights, &conv_.grad_weights, true});
        out.push_back({"transition.conv.bias", &conv_.bias, &conv_.grad_bias, true});
    }

    void append_trace(std::vector<std::string>& ops) const override {
        ops.insert(ops.end(), {"bn", "relu", "conv"});
        if (spec_.pool_stride > 1) ops.push_back("avg_pool");
    }

private:
    TransitionSpec spec_;
    BatchNorm1DParams<T> bn_;
    Conv1DParams<T> conv_;
    BatchNormCache<T> bn_cache_;
    Tensor<T> z_;
    Tensor<T> conv_out_;
};

} // namespace etd

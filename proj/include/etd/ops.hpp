#pragma once

#include <cblas.h>

#include <cmath>
#include <cstddef>
#include <type_traits>
#include <vector>

#include "etd/errors.hpp"
#include "etd/tensor.hpp"

namespace etd {

/// Keeps a parameter out of template deduction so a mutable Slab<T> can
/// convert to CSlab<T> at the call site.
template <typename T>
using NoDeduce = std::type_identity_t<T>;

// ---------------------------------------------------------------------------
// Parameter bundles. Each learnable slot has a gradient slot of equal shape;
// backward passes accumulate into the gradient slots.
// ---------------------------------------------------------------------------

template <typename T>
struct Conv1DParams {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_length = 0;
    std::vector<T> weights;  // [out][in][k], row-major
    std::vector<T> bias;     // [out]
    std::vector<T> grad_weights;
    std::vector<T> grad_bias;

    Conv1DParams() = default;
    Conv1DParams(int ci, int co, int k) : in_channels(ci), out_channels(co), kernel_length(k) {
        if (ci < 1 || co < 1 || k < 1)
            throw config_error("conv1d: channels and kernel length must be >= 1");
        weights.assign(static_cast<std::size_t>(co) * ci * k, T(0));
        bias.assign(static_cast<std::size_t>(co), T(0));
        grad_weights.assign(weights.size(), T(0));
        grad_bias.assign(bias.size(), T(0));
    }
};

template <typename T>
struct BatchNorm1DParams {
    int channels = 0;
    T epsilon = T(1e-5);
    T momentum = T(0.1);
    std::vector<T> gamma, beta;
    std::vector<T> running_mean, running_var;
    std::vector<T> grad_gamma, grad_beta;

    BatchNorm1DParams() = default;
    explicit BatchNorm1DParams(int c) : channels(c) {
        if (c < 1) throw config_error("batch_norm1d: channels must be >= 1");
        gamma.assign(c, T(1));
        beta.assign(c, T(0));
        running_mean.assign(c, T(0));
        running_var.assign(c, T(1));
        grad_gamma.assign(c, T(0));
        grad_beta.assign(c, T(0));
    }
};

/// Per-invocation batch statistics kept for the backward pass.
template <typename T>
struct BatchNormCache {
    std::vector<T> mean, inv_std;
};

template <typename T>
struct DenseParams {
    int in_features = 0;
    int out_features = 0;
    std::vector<T> weights;  // [out][in]
    std::vector<T> bias;     // [out]
    std::vector<T> grad_weights;
    std::vector<T> grad_bias;

    DenseParams() = default;
    DenseParams(int fi, int fo) : in_features(fi), out_features(fo) {
        if (fi < 1 || fo < 1) throw config_error("dense: feature counts must be >= 1");
        weights.assign(static_cast<std::size_t>(fo) * fi, T(0));
        bias.assign(static_cast<std::size_t>(fo), T(0));
        grad_weights.assign(weights.size(), T(0));
        grad_bias.assign(bias.size(), T(0));
    }
};

// ---------------------------------------------------------------------------
// BLAS dispatch
// ---------------------------------------------------------------------------

namespace detail {

inline void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb, double beta, double* c,
                 int ldc) {
    cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

/// Repacks conv weights [out][in][k] into per-offset matrices: wpack[j] is the
/// contiguous (out x in) matrix of taps at kernel position j. The repack lets
/// "same" convolution run as one GEMM per kernel offset on shifted views.
template <typename T>
void pack_offset_weights(const Conv1DParams<T>& p, std::vector<T>& wpack) {
    const int k = p.kernel_length, ci = p.in_channels, co = p.out_channels;
    wpack.resize(static_cast<std::size_t>(k) * co * ci);
    for (int oc = 0; oc < co; ++oc)
        for (int ic = 0; ic < ci; ++ic) {
            const T* src = &p.weights[(static_cast<std::size_t>(oc) * ci + ic) * k];
            for (int j = 0; j < k; ++j)
                wpack[(static_cast<std::size_t>(j) * co + oc) * ci + ic] = src[j];
        }
}

} // namespace detail

// ---------------------------------------------------------------------------
// conv1d: cross-correlation, zero "same" padding, stride 1.
//   out[b, oc, t] = bias[oc] + sum_ic sum_j w[oc, ic, j] * x[b, ic, t + j - k/2]
// ---------------------------------------------------------------------------

template <typename T>
void conv1d_forward(const NoDeduce<CSlab<T>>& x, const Conv1DParams<T>& p, const Slab<T>& out) {
    if (x.ch != p.in_channels)
        throw config_error("conv1d: input has " + std::to_string(x.ch) + " channels, expected " +
                           std::to_string(p.in_channels));
    if (out.ch != p.out_channels || out.len != x.len || out.batch != x.batch)
        throw shape_error("conv1d: output view does not match input/params");

    const int k = p.kernel_length, ci = p.in_channels, co = p.out_channels, L = x.len;
    const int pad = k / 2;

    thread_local std::vector<T> wpack;
    detail::pack_offset_weights(p, wpack);

    for (int b = 0; b < x.batch; ++b) {
        for (int oc = 0; oc < co; ++oc)
            std::fill_n(out.row(b, oc), L, p.bias[static_cast<std::size_t>(oc)]);
        for (int j = 0; j < k; ++j) {
            const int d = j - pad;
            const int t0 = d < 0 ? -d : 0;
            const int t1 = d > 0 ? L - d : L;
            const int cols = t1 - t0;
            if (cols <= 0) continue;
            detail::gemm(CblasNoTrans, CblasNoTrans, co, cols, ci, T(1),
                         wpack.data() + static_cast<std::size_t>(j) * co * ci, ci,
                         x.row(b, 0) + (t0 + d), x.len, T(1), out.row(b, 0) + t0, out.len);
        }
    }
}

/// Exact gradients of conv1d_forward. Weight/bias gradients accumulate into
/// the param gradient slots; the input cotangent accumulates into grad_x
/// (pass an empty slab with null pointer to skip it, e.g. for a stem layer).
template <typename T>
void conv1d_backward(const NoDeduce<CSlab<T>>& x, Conv1DParams<T>& p,
                     const NoDeduce<CSlab<T>>& grad_out, const NoDeduce<Slab<T>>& grad_x) {
    if (x.ch != p.in_channels) throw config_error("conv1d backward: channel mismatch");
    if (grad_out.ch != p.out_channels || grad_out.len != x.len || grad_out.batch != x.batch)
        throw shape_error("conv1d backward: cotangent shape mismatch");
    if (grad_x.p && (grad_x.ch != x.ch || grad_x.len != x.len || grad_x.batch != x.batch))
        throw shape_error("conv1d backward: grad_x shape mismatch");

    const int k = p.kernel_length, ci = p.in_channels, co = p.out_channels, L = x.len;
    const int pad = k / 2;

    thread_local std::vector<T> wpack;
    thread_local std::vector<T> gpack;
    detail::pack_offset_weights(p, wpack);
    gpack.assign(static_cast<std::size_t>(k) * co * ci, T(0));

    for (int b = 0; b < x.batch; ++b) {
        for (int oc = 0; oc < co; ++oc) {
            const T* g = grad_out.row(b, oc);
            double s = 0;
            for (int t = 0; t < L; ++t) s += static_cast<double>(g[t]);
            p.grad_bias[static_cast<std::size_t>(oc)] += static_cast<T>(s);
        }
        for (int j = 0; j < k; ++j) {
            const int d = j - pad;
            const int t0 = d < 0 ? -d : 0;
            const int t1 = d > 0 ? L - d : L;
            const int cols = t1 - t0;
            if (cols <= 0) continue;
            // dW_j += g[:, t0:t1) . x[:, t0+d:t1+d)^T
            detail::gemm(CblasNoTrans, CblasTrans, co, ci, cols, T(1), grad_out.row(b, 0) + t0,
                         grad_out.len, x.row(b, 0) + (t0 + d), x.len, T(1),
                         gpack.data() + static_cast<std::size_t>(j) * co * ci, ci);
            if (grad_x.p) {
                // dx[:, t0+d:t1+d) += W_j^T . g[:, t0:t1)
                detail::gemm(CblasTrans, CblasNoTrans, ci, cols, co, T(1),
                             wpack.data() + static_cast<std::size_t>(j) * co * ci, ci,
                             grad_out.row(b, 0) + t0, grad_out.len, T(1),
                             grad_x.row(b, 0) + (t0 + d), grad_x.len);
            }
        }
    }
    for (int oc = 0; oc < co; ++oc)
        for (int ic = 0; ic < ci; ++ic) {
            T* dst = &p.grad_weights[(static_cast<std::size_t>(oc) * ci + ic) * k];
            for (int j = 0; j < k; ++j)
                dst[j] += gpack[(static_cast<std::size_t>(j) * co + oc) * ci + ic];
        }
}

// ---------------------------------------------------------------------------
// batch norm (per channel over batch and length axes)
// ---------------------------------------------------------------------------

template <typename T>
void batch_norm1d_train_forward(const NoDeduce<CSlab<T>>& x, BatchNorm1DParams<T>& p, const Slab<T>& out,
                                BatchNormCache<T>& cache) {
    if (x.ch != p.channels) throw config_error("batch_norm1d: channel mismatch");
    if (out.ch != x.ch || out.len != x.len || out.batch != x.batch)
        throw shape_error("batch_norm1d: output shape mismatch");
    const std::size_t n = static_cast<std::size_t>(x.batch) * x.len;
    if (n < 2) throw data_error("batch_norm1d: fewer than 2 values per channel in training mode");

    cache.mean.resize(p.channels);
    cache.inv_std.resize(p.channels);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int c = 0; c < p.channels; ++c) {
        double s = 0, s2 = 0;
        for (int b = 0; b < x.batch; ++b) {
            const T* r = x.row(b, c);
            for (int t = 0; t < x.len; ++t) {
                const double v = r[t];
                s += v;
                s2 += v * v;
            }
        }
        const double mean = s * inv_n;
        double var = s2 * inv_n - mean * mean;
        if (var < 0) var = 0;  // round-off guard
        const double istd = 1.0 / std::sqrt(var + static_cast<double>(p.epsilon));
        cache.mean[c] = static_cast<T>(mean);
        cache.inv_std[c] = static_cast<T>(istd);
        const T g = p.gamma[c], bta = p.beta[c];
        const T m = static_cast<T>(mean), is = static_cast<T>(istd);
        for (int b = 0; b < x.batch; ++b) {
            const T* r = x.row(b, c);
            T* o = out.row(b, c);
            for (int t = 0; t < x.len; ++t) o[t] = g * ((r[t] - m) * is) + bta;
        }
        const T mom = p.momentum;
        p.running_mean[c] = (T(1) - mom) * p.running_mean[c] + mom * static_cast<T>(mean);
        p.running_var[c] = (T(1) - mom) * p.running_var[c] + mom * static_cast<T>(var);
    }
}

template <typename T>
void batch_norm1d_infer(const NoDeduce<CSlab<T>>& x, const BatchNorm1DParams<T>& p, const Slab<T>& out) {
    if (x.ch != p.channels) throw config_error("batch_norm1d: channel mismatch");
    if (out.ch != x.ch || out.len != x.len || out.batch != x.batch)
        throw shape_error("batch_norm1d: output shape mismatch");
    for (int c = 0; c < p.channels; ++c) {
        const T is = static_cast<T>(1.0 / std::sqrt(static_cast<double>(p.running_var[c]) +
                                                    static_cast<double>(p.epsilon)));
        const T m = p.running_mean[c], g = p.gamma[c], bta = p.beta[c];
        for (int b = 0; b < x.batch; ++b) {
            const T* r = x.row(b, c);
            T* o = out.row(b, c);
            for (int t = 0; t < x.len; ++t) o[t] = g * ((r[t] - m) * is) + bta;
        }
    }
}

/// Backward through training-mode batch norm. x is the original input (the
/// normalized activations are recomputed from the cached statistics rather
/// than stored).
template <typename T>
void batch_norm1d_backward(const NoDeduce<CSlab<T>>& x, BatchNorm1DParams<T>& p,
                           const BatchNormCache<T>& cache, const NoDeduce<CSlab<T>>& grad_out,
                           const NoDeduce<Slab<T>>& grad_x) {
    const std::size_t n = static_cast<std::size_t>(x.batch) * x.len;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int c = 0; c < p.channels; ++c) {
        const T m = cache.mean[c], is = cache.inv_std[c];
        double sum_g = 0, sum_gx = 0;
        for (int b = 0; b < x.batch; ++b) {
            const T* r = x.row(b, c);
            const T* g = grad_out.row(b, c);
            for (int t = 0; t < x.len; ++t) {
                const double xh = (r[t] - m) * is;
                sum_g += g[t];
                sum_gx += g[t] * xh;
            }
        }
        p.grad_beta[c] += static_cast<T>(sum_g);
        p.grad_gamma[c] += static_cast<T>(sum_gx);
        const double gam = p.gamma[c];
        const double k1 = sum_g * inv_n, k2 = sum_gx * inv_n;
        for (int b = 0; b < x.batch; ++b) {
            const T* r = x.row(b, c);
            const T* g = grad_out.row(b, c);
            T* gx = grad_x.row(b, c);
            for (int t = 0; t < x.len; ++t) {
                const double xh = (r[t] - m) * is;
                gx[t] += static_cast<T>(gam * is * (g[t] - k1 - xh * k2));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise activations
// ---------------------------------------------------------------------------

template <typename T>
void relu_forward(const T* x, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

/// grad_x += grad_out on positions where the forward output was positive.
template <typename T>
void relu_backward(const T* y, const T* grad_out, T* grad_x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (y[i] > T(0)) grad_x[i] += grad_out[i];
}

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
void sigmoid_forward(const T* x, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid_scalar(x[i]);
}

template <typename T>
void sigmoid_backward(const T* y, const T* grad_out, T* grad_x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) grad_x[i] += grad_out[i] * y[i] * (T(1) - y[i]);
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

inline int pooled_length(int len, int window, int stride) {
    if (window < 1 || stride < 1) throw config_error("avg_pool1d: window and stride must be >= 1");
    if (window > len)
        throw config_error("avg_pool1d: window " + std::to_string(window) +
                           " exceeds input length " + std::to_string(len));
    return (len - window) / stride + 1;
}

template <typename T>
void avg_pool1d_forward(const NoDeduce<CSlab<T>>& x, int window, int stride, const Slab<T>& out) {
    const int lo = pooled_length(x.len, window, stride);
    if (out.len != lo || out.ch != x.ch || out.batch != x.batch)
        throw shape_error("avg_pool1d: output shape mismatch");
    const T inv_w = T(1) / static_cast<T>(window);
    for (int b = 0; b < x.batch; ++b)
        for (int c = 0; c < x.ch; ++c) {
            const T* r = x.row(b, c);
            T* o = out.row(b, c);
            for (int t = 0; t < lo; ++t) {
                T s = T(0);
                const T* w = r + static_cast<std::size_t>(t) * stride;
                for (int i = 0; i < window; ++i) s += w[i];
                o[t] = s * inv_w;
            }
        }
}

template <typename T>
void avg_pool1d_backward(int window, int stride, const NoDeduce<CSlab<T>>& grad_out,
                         const Slab<T>& grad_x) {
    const T inv_w = T(1) / static_cast<T>(window);
    for (int b = 0; b < grad_out.batch; ++b)
        for (int c = 0; c < grad_out.ch; ++c) {
            const T* g = grad_out.row(b, c);
            T* gx = grad_x.row(b, c);
            for (int t = 0; t < grad_out.len; ++t) {
                T* w = gx + static_cast<std::size_t>(t) * stride;
                const T gv = g[t] * inv_w;
                for (int i = 0; i < window; ++i) w[i] += gv;
            }
        }
}

/// [b, c, L] -> [b, c]: per-channel mean over the length axis.
template <typename T>
void global_avg_pool_forward(const NoDeduce<CSlab<T>>& x, Tensor<T>& out) {
    out = Tensor<T>({x.batch, x.ch});
    const T inv_l = T(1) / static_cast<T>(x.len);
    for (int b = 0; b < x.batch; ++b)
        for (int c = 0; c < x.ch; ++c) {
            const T* r = x.row(b, c);
            double s = 0;
            for (int t = 0; t < x.len; ++t) s += r[t];
            out.at(b, c) = static_cast<T>(s) * inv_l;
        }
}

template <typename T>
void global_avg_pool_backward(const Tensor<T>& grad_out, const NoDeduce<Slab<T>>& grad_x) {
    const T inv_l = T(1) / static_cast<T>(grad_x.len);
    for (int b = 0; b < grad_x.batch; ++b)
        for (int c = 0; c < grad_x.ch; ++c) {
            const T gv = grad_out.at(b, c) * inv_l;
            T* gx = grad_x.row(b, c);
            for (int t = 0; t < grad_x.len; ++t) gx[t] += gv;
        }
}

// ---------------------------------------------------------------------------
// fully connected: out = x . W^T + bias
// ---------------------------------------------------------------------------

template <typename T>
void fully_connected_forward(const Tensor<T>& x, const DenseParams<T>& p, Tensor<T>& out) {
    if (x.rank() != 2) throw shape_error("fully_connected: input must be rank 2");
    if (x.dim(1) != p.in_features)
        throw config_error("fully_connected: input has " + std::to_string(x.dim(1)) +
                           " features, expected " + std::to_string(p.in_features));
    const int b = x.dim(0);
    out = Tensor<T>({b, p.out_features});
    for (int i = 0; i < b; ++i)
        for (int o = 0; o < p.out_features; ++o) out.at(i, o) = p.bias[o];
    detail::gemm(CblasNoTrans, CblasTrans, b, p.out_features, p.in_features, T(1), x.data.data(),
                 p.in_features, p.weights.data(), p.in_features, T(1), out.data.data(),
                 p.out_features);
}

template <typename T>
void fully_connected_backward(const Tensor<T>& x, DenseParams<T>& p, const Tensor<T>& grad_out,
                              Tensor<T>& grad_x) {
    const int b = x.dim(0);
    // dW += g^T . x
    detail::gemm(CblasTrans, CblasNoTrans, p.out_features, p.in_features, b, T(1),
                 grad_out.data.data(), p.out_features, x.data.data(), p.in_features, T(1),
                 p.grad_weights.data(), p.in_features);
    for (int o = 0; o < p.out_features; ++o) {
        double s = 0;
        for (int i = 0; i < b; ++i) s += grad_out.at(i, o);
        p.grad_bias[o] += static_cast<T>(s);
    }
    grad_x = Tensor<T>({b, p.in_features});
    detail::gemm(CblasNoTrans, CblasNoTrans, b, p.in_features, p.out_features, T(1),
                 grad_out.data.data(), p.out_features, p.weights.data(), p.in_features, T(0),
                 grad_x.data.data(), p.in_features);
}

// ---------------------------------------------------------------------------
// channel concatenation
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& xs) {
    if (xs.empty()) throw config_error("concat_channels: empty input list");
    const int b = xs[0]->dim(0), L = xs[0]->dim(2);
    int c_total = 0;
    for (const Tensor<T>* t : xs) {
        if (t->rank() != 3) throw shape_error("concat_channels: inputs must be rank 3");
        if (t->dim(0) != b || t->dim(2) != L)
            throw config_error("concat_channels: batch/length mismatch between inputs");
        c_total += t->dim(1);
    }
    Tensor<T> out({b, c_total, L});
    Slab<T> os = out.slab();
    int c0 = 0;
    for (const Tensor<T>* t : xs) {
        const CSlab<T> src = t->slab();
        Slab<T> dst = os.channels(c0, t->dim(1));
        for (int bb = 0; bb < b; ++bb)
            std::copy_n(src.row(bb, 0), static_cast<std::size_t>(t->dim(1)) * L, dst.row(bb, 0));
        c0 += t->dim(1);
    }
    return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int count) {
    Tensor<T> out({x.dim(0), count, x.dim(2)});
    const CSlab<T> src = x.channels(c0, count);
    Slab<T> dst = out.slab();
    for (int b = 0; b < x.dim(0); ++b)
        std::copy_n(src.row(b, 0), static_cast<std::size_t>(count) * x.dim(2), dst.row(b, 0));
    return out;
}

// ---------------------------------------------------------------------------
// binary cross entropy on probabilities
// ---------------------------------------------------------------------------

inline constexpr double kProbClip = 1e-15;

/// Mean negative log likelihood; probabilities are clipped to
/// [kProbClip, 1 - kProbClip] so the loss stays finite.
template <typename T>
double bce_loss(const std::vector<T>& p, const std::vector<int>& y) {
    if (p.size() != y.size() || p.empty()) throw shape_error("bce_loss: size mismatch");
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double pi = static_cast<double>(p[i]);
        pi = std::min(1.0 - kProbClip, std::max(kProbClip, pi));
        s += y[i] ? std::log(pi) : std::log(1.0 - pi);
    }
    return -s / static_cast<double>(p.size());
}

/// d(loss)/d(p_i); composed with sigmoid backward this yields (p - y) / n
/// with respect to the pre-sigmoid logits.
template <typename T>
std::vector<T> bce_loss_grad(const std::vector<T>& p, const std::vector<int>& y) {
    std::vector<T> g(p.size());
    const double inv_n = 1.0 / static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        double pi = static_cast<double>(p[i]);
        pi = std::min(1.0 - kProbClip, std::max(kProbClip, pi));
        const double d = y[i] ? -1.0 / pi : 1.0 / (1.0 - pi);
        g[i] = static_cast<T>(d * inv_n);
    }
    return g;
}

} // namespace etd

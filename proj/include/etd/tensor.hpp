#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "etd/errors.hpp"

namespace etd {

template <typename T>
struct Slab;
template <typename T>
struct CSlab;

/// Dense row-major tensor of rank 2 ([batch, features]) or rank 3
/// ([batch, channels, length]). The single value type flowing through
/// every layer; float for training runs, double for gradient checks.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        validate_shape();
        data.assign(numel(), T(0));
    }

    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        validate_shape();
        if (data.size() != numel())
            throw shape_error("tensor: data size does not match shape");
    }

    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    std::size_t numel() const {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

    // rank-3 access
    T& at(int b, int c, int l) {
        return data[(static_cast<std::size_t>(b) * dim(1) + c) * dim(2) + l];
    }
    T at(int b, int c, int l) const {
        return data[(static_cast<std::size_t>(b) * dim(1) + c) * dim(2) + l];
    }

    // rank-2 access
    T& at(int b, int f) { return data[static_cast<std::size_t>(b) * dim(1) + f]; }
    T at(int b, int f) const { return data[static_cast<std::size_t>(b) * dim(1) + f]; }

    Slab<T> slab();
    CSlab<T> slab() const;
    Slab<T> channels(int c0, int count);
    CSlab<T> channels(int c0, int count) const;

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    void validate_shape() const {
        if (shape.size() != 2 && shape.size() != 3)
            throw shape_error("tensor: rank must be 2 or 3");
        for (int d : shape)
            if (d <= 0) throw shape_error("tensor: dimensions must be positive");
    }
};

/// Mutable view over a channel range of a rank-3 tensor (or a whole one).
/// Row (b, c) lives at p + b*batch_stride + c*len; consecutive channels of
/// one sample are contiguous, which lets dense-block concatenation work on
/// channel prefixes of a single buffer without copies.
template <typename T>
struct Slab {
    T* p = nullptr;
    int batch = 0;
    int ch = 0;
    int len = 0;
    std::ptrdiff_t batch_stride = 0;

    T* row(int b, int c) const {
        return p + static_cast<std::ptrdiff_t>(b) * batch_stride + static_cast<std::ptrdiff_t>(c) * len;
    }

    Slab channels(int c0, int count) const {
        Slab s = *this;
        s.p = p + static_cast<std::ptrdiff_t>(c0) * len;
        s.ch = count;
        return s;
    }

    void fill(T v) const {
        for (int b = 0; b < batch; ++b)
            std::fill_n(row(b, 0), static_cast<std::size_t>(ch) * len, v);
    }
};

/// Read-only counterpart of Slab.
template <typename T>
struct CSlab {
    const T* p = nullptr;
    int batch = 0;
    int ch = 0;
    int len = 0;
    std::ptrdiff_t batch_stride = 0;

    CSlab() = default;
    CSlab(const T* p_, int batch_, int ch_, int len_, std::ptrdiff_t bstride_)
        : p(p_), batch(batch_), ch(ch_), len(len_), batch_stride(bstride_) {}
    CSlab(const Slab<T>& s) : p(s.p), batch(s.batch), ch(s.ch), len(s.len), batch_stride(s.batch_stride) {}

    const T* row(int b, int c) const {
        return p + static_cast<std::ptrdiff_t>(b) * batch_stride + static_cast<std::ptrdiff_t>(c) * len;
    }

    CSlab channels(int c0, int count) const {
        CSlab s = *this;
        s.p = p + static_cast<std::ptrdiff_t>(c0) * len;
        s.ch = count;
        return s;
    }
};

template <typename T>
Slab<T> Tensor<T>::slab() {
    if (rank() != 3) throw shape_error("slab: tensor must be rank 3");
    return Slab<T>{data.data(), dim(0), dim(1), dim(2),
                   static_cast<std::ptrdiff_t>(dim(1)) * dim(2)};
}

template <typename T>
CSlab<T> Tensor<T>::slab() const {
    if (rank() != 3) throw shape_error("slab: tensor must be rank 3");
    return CSlab<T>{data.data(), dim(0), dim(1), dim(2),
                    static_cast<std::ptrdiff_t>(dim(1)) * dim(2)};
}

template <typename T>
Slab<T> Tensor<T>::channels(int c0, int count) {
    if (c0 < 0 || count <= 0 || c0 + count > dim(1))
        throw shape_error("channels: range out of bounds");
    return slab().channels(c0, count);
}

template <typename T>
CSlab<T> Tensor<T>::channels(int c0, int count) const {
    if (c0 < 0 || count <= 0 || c0 + count > dim(1))
        throw shape_error("channels: range out of bounds");
    return slab().channels(c0, count);
}

} // namespace etd

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "stitchlab/rng.hpp"

namespace stitchlab {

// Dense row-major N-d array. Training uses TensorT<float>; the 64-bit
// instantiation exists for the gradient-checking mode.
template <class T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    TensorT() = default;

    explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), T(0));
    }

    TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != numel_of(shape))
            throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape product " + std::to_string(numel_of(shape)));
    }

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int e : s) {
            if (e < 0) throw std::invalid_argument("tensor: negative extent " + std::to_string(e));
            n *= e;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }

    int dim(int i) const {
        if (i < 0 || i >= ndim()) throw std::out_of_range("tensor: dim index " + std::to_string(i));
        return shape[static_cast<std::size_t>(i)];
    }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    // 4-d accessors (NCHW); hot loops index raw pointers instead.
    T& at(int n, int c, int h, int w) {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    T at(int n, int c, int h, int w) const {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    T& at(int n, int c) { return data[static_cast<std::size_t>(n) * shape[1] + c]; }
    T at(int n, int c) const { return data[static_cast<std::size_t>(n) * shape[1] + c]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(T(0)); }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    // 64-bit accumulation regardless of element type.
    double sum() const {
        double acc = 0.0;
        for (T v : data) acc += static_cast<double>(v);
        return acc;
    }

    double max_abs() const {
        double m = 0.0;
        for (T v : data) m = std::max(m, std::abs(static_cast<double>(v)));
        return m;
    }

    static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

    static TensorT full(std::vector<int> s, T v) {
        TensorT t(std::move(s));
        t.fill(v);
        return t;
    }

    static TensorT randn(std::vector<int> s, Rng& rng, T stddev = T(1)) {
        TensorT t(std::move(s));
        for (auto& v : t.data) v = static_cast<T>(rng.normal() * static_cast<double>(stddev));
        return t;
    }

    template <class U>
    TensorT<U> cast() const {
        TensorT<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }

    std::uint64_t byte_hash() const {
        return fnv1a64(data.data(), data.size() * sizeof(T));
    }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <class T>
void require_shape(const TensorT<T>& t, const std::vector<int>& want, const char* who) {
    if (t.shape != want)
        throw std::invalid_argument(std::string(who) + ": expected shape " + shape_str(want) +
                                    ", got " + shape_str(t.shape));
}

template <class T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    return m;
}

template <class T>
double max_rel_diff(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_rel_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double x = static_cast<double>(a.data[i]);
        const double y = static_cast<double>(b.data[i]);
        const double denom = std::max(1.0, std::max(std::abs(x), std::abs(y)));
        m = std::max(m, std::abs(x - y) / denom);
    }
    return m;
}

} // namespace stitchlab

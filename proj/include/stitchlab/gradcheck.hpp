#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stitchlab/kernels.hpp"
#include "stitchlab/rng.hpp"
#include "stitchlab/tensor.hpp"

namespace stitchlab {

struct GradCheckReport {
    std::string layer_id;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass() const { return max_rel_err >= 0.0 && max_rel_err < tolerance; }
};

// A unit under differentiation test: `forward` reads the current values of
// `wrt` (input plus any trainable tensors) and `backward` returns analytic
// gradients aligned with `wrt`. backward must be called right after forward
// because adapters may cache forward state in the closure.
template <class T>
struct GradCheckProblem {
    std::string id;
    std::vector<TensorT<T>*> wrt;
    std::function<TensorT<T>()> forward;
    std::function<std::vector<TensorT<T>>(const TensorT<T>& grad_out)> backward;
};

// Central finite differences against the analytic backward. The output is
// projected to a scalar with fixed random weights; large tensors are probed
// on a seeded coordinate sample.
template <class T>
GradCheckReport grad_check(GradCheckProblem<T>& prob, double step, double tolerance,
                           std::uint64_t seed = 0x5eedULL, int max_coords_per_tensor = 64) {
    Rng rng(stream_seed(seed, "gradcheck", fnv1a64(prob.id)));

    TensorT<T> out = prob.forward();
    TensorT<T> proj(out.shape);
    for (auto& v : proj.data) v = static_cast<T>(rng.normal());
    std::vector<TensorT<T>> analytic = prob.backward(proj);
    if (analytic.size() != prob.wrt.size())
        throw std::invalid_argument("grad_check: backward returned " + std::to_string(analytic.size()) +
                                    " grads for " + std::to_string(prob.wrt.size()) + " tensors");

    auto scalar_loss = [&]() {
        TensorT<T> y = prob.forward();
        double s = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i)
            s += static_cast<double>(y.data[i]) * static_cast<double>(proj.data[i]);
        return s;
    };

    GradCheckReport rep;
    rep.layer_id = prob.id;
    rep.tolerance = tolerance;
    for (std::size_t ti = 0; ti < prob.wrt.size(); ++ti) {
        TensorT<T>& t = *prob.wrt[ti];
        const std::int64_t n = t.numel();
        std::vector<std::int64_t> coords;
        if (n <= max_coords_per_tensor) {
            coords.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            for (int i = 0; i < max_coords_per_tensor; ++i)
                coords.push_back(static_cast<std::int64_t>(rng.next_below(static_cast<std::uint32_t>(n))));
        }
        for (std::int64_t j : coords) {
            const T saved = t.data[static_cast<std::size_t>(j)];
            t.data[static_cast<std::size_t>(j)] = saved + static_cast<T>(step);
            const double lp = scalar_loss();
            t.data[static_cast<std::size_t>(j)] = saved - static_cast<T>(step);
            const double lm = scalar_loss();
            t.data[static_cast<std::size_t>(j)] = saved;
            const double numeric = (lp - lm) / (2.0 * step);
            const double a = static_cast<double>(analytic[ti].data[static_cast<std::size_t>(j)]);
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
            rep.max_rel_err = std::max(rep.max_rel_err, rel);
        }
    }
    return rep;
}

// ------------------------------------------------ adapters for the blocks

template <class T>
GradCheckProblem<T> conv_problem(TensorT<T> x, TensorT<T> w, TensorT<T> b, int stride, int pad,
                                 std::string id = "conv2d") {
    auto state = std::make_shared<std::tuple<TensorT<T>, TensorT<T>, TensorT<T>>>(std::move(x), std::move(w),
                                                                                  std::move(b));
    GradCheckProblem<T> p;
    p.id = std::move(id);
    p.wrt = {&std::get<0>(*state), &std::get<1>(*state), &std::get<2>(*state)};
    p.forward = [state, stride, pad]() {
        return conv2d(std::get<0>(*state), std::get<1>(*state), std::get<2>(*state), stride, pad);
    };
    p.backward = [state, stride, pad](const TensorT<T>& gy) {
        TensorT<T> gx, gw, gb;
        conv2d_backward(gy, std::get<0>(*state), std::get<1>(*state), stride, pad, &gx, &gw, &gb);
        return std::vector<TensorT<T>>{std::move(gx), std::move(gw), std::move(gb)};
    };
    return p;
}

template <class T>
GradCheckProblem<T> linear_problem(TensorT<T> x, TensorT<T> w, TensorT<T> b, std::string id = "linear") {
    auto state = std::make_shared<std::tuple<TensorT<T>, TensorT<T>, TensorT<T>>>(std::move(x), std::move(w),
                                                                                  std::move(b));
    GradCheckProblem<T> p;
    p.id = std::move(id);
    p.wrt = {&std::get<0>(*state), &std::get<1>(*state), &std::get<2>(*state)};
    p.forward = [state]() { return linear(std::get<0>(*state), std::get<1>(*state), std::get<2>(*state)); };
    p.backward = [state](const TensorT<T>& gy) {
        TensorT<T> gx, gw, gb;
        linear_backward(gy, std::get<0>(*state), std::get<1>(*state), &gx, &gw, &gb);
        return std::vector<TensorT<T>>{std::move(gx), std::move(gw), std::move(gb)};
    };
    return p;
}

template <class T>
GradCheckProblem<T> batchnorm_problem(TensorT<T> x, TensorT<T> gamma, TensorT<T> beta, Mode mode,
                                      double eps = 1e-5, std::string id = "batchnorm") {
    struct State {
        TensorT<T> x, gamma, beta, rm0, rv0;
        BNCache<T> cache;
    };
    auto st = std::make_shared<State>();
    st->x = std::move(x);
    st->gamma = std::move(gamma);
    st->beta = std::move(beta);
    const int C = st->x.dim(1);
    st->rm0 = TensorT<T>({C});
    st->rv0 = TensorT<T>::full({C}, T(1));

    GradCheckProblem<T> p;
    p.id = std::move(id);
    p.wrt = {&st->x, &st->gamma, &st->beta};
    p.forward = [st, mode, eps]() {
        // running stats are reset so repeated probes see identical state
        TensorT<T> rm = st->rm0, rv = st->rv0;
        return batchnorm(st->x, st->gamma, st->beta, rm, rv, mode, 0.1, eps, &st->cache);
    };
    p.backward = [st](const TensorT<T>& gy) {
        TensorT<T> gx, gg, gb;
        batchnorm_backward(st->cache, gy, st->gamma, &gx, &gg, &gb);
        return std::vector<TensorT<T>>{std::move(gx), std::move(gg), std::move(gb)};
    };
    return p;
}

// frozen unit: no trainable parameters, input gradient only
template <class T>
GradCheckProblem<T> relu_problem(TensorT<T> x, std::string id = "relu") {
    auto st = std::make_shared<TensorT<T>>(std::move(x));
    GradCheckProblem<T> p;
    p.id = std::move(id);
    p.wrt = {st.get()};
    p.forward = [st]() { return relu(*st); };
    p.backward = [st](const TensorT<T>& gy) { return std::vector<TensorT<T>>{relu_backward(gy, *st)}; };
    return p;
}

template <class T>
GradCheckProblem<T> maxpool_problem(TensorT<T> x, int k, int stride, std::string id = "maxpool2d") {
    struct State {
        TensorT<T> x;
        MaxPoolOut<T> fwd;
    };
    auto st = std::make_shared<State>();
    st->x = std::move(x);
    GradCheckProblem<T> p;
    p.id = std::move(id);
    p.wrt = {&st->x};
    p.forward = [st, k, stride]() {
        st->fwd = maxpool2d(st->x, k, stride);
        return st->fwd.y;
    };
    p.backward = [st](const TensorT<T>& gy) {
        return std::vector<TensorT<T>>{maxpool2d_backward(gy, st->fwd, st->x.shape)};
    };
    return p;
}

template <class T>
GradCheckProblem<T> gap_problem(TensorT<T> x, std::string id = "global_avg_pool") {
    auto st = std::make_shared<TensorT<T>>(std::move(x));
    GradCheckProblem<T> p;
    p.id = std::move(id);
    p.wrt = {st.get()};
    p.forward = [st]() { return global_avg_pool(*st); };
    p.backward = [st](const TensorT<T>& gy) {
        return std::vector<TensorT<T>>{global_avg_pool_backward(gy, st->shape)};
    };
    return p;
}

template <class T>
GradCheckProblem<T> softmax_ce_problem(TensorT<T> logits, std::vector<int> labels,
                                       std::string id = "softmax_cross_entropy") {
    auto st = std::make_shared<std::pair<TensorT<T>, std::vector<int>>>(std::move(logits), std::move(labels));
    GradCheckProblem<T> p;
    p.id = std::move(id);
    p.wrt = {&st->first};
    p.forward = [st]() {
        TensorT<T> out({1});
        out.data[0] = static_cast<T>(softmax_cross_entropy<T>(st->first, st->second, nullptr));
        return out;
    };
    p.backward = [st](const TensorT<T>& gy) {
        TensorT<T> g;
        softmax_cross_entropy<T>(st->first, st->second, &g);
        for (auto& v : g.data) v *= gy.data[0];
        return std::vector<TensorT<T>>{std::move(g)};
    };
    return p;
}

// conv -> BN(Train) -> relu composite, the unit the residual blocks are made of
template <class T>
GradCheckProblem<T> conv_bn_relu_problem(TensorT<T> x, TensorT<T> w, TensorT<T> b, TensorT<T> gamma,
                                         TensorT<T> beta, int stride, int pad, double eps = 1e-5,
                                         std::string id = "conv_bn_relu") {
    struct State {
        TensorT<T> x, w, b, gamma, beta, rm0, rv0;
        TensorT<T> conv_out, bn_out;
        BNCache<T> cache;
    };
    auto st = std::make_shared<State>();
    st->x = std::move(x);
    st->w = std::move(w);
    st->b = std::move(b);
    st->gamma = std::move(gamma);
    st->beta = std::move(beta);
    const int C = st->w.dim(0);
    st->rm0 = TensorT<T>({C});
    st->rv0 = TensorT<T>::full({C}, T(1));

    GradCheckProblem<T> p;
    p.id = std::move(id);
    p.wrt = {&st->x, &st->w, &st->b, &st->gamma, &st->beta};
    p.forward = [st, stride, pad, eps]() {
        TensorT<T> rm = st->rm0, rv = st->rv0;
        st->conv_out = conv2d(st->x, st->w, st->b, stride, pad);
        st->bn_out = batchnorm(st->conv_out, st->gamma, st->beta, rm, rv, Mode::Train, 0.1, eps, &st->cache);
        return relu(st->bn_out);
    };
    p.backward = [st, stride, pad](const TensorT<T>& gy) {
        TensorT<T> g_bn = relu_backward(gy, st->bn_out);
        TensorT<T> g_conv, gg, gbeta;
        batchnorm_backward(st->cache, g_bn, st->gamma, &g_conv, &gg, &gbeta);
        TensorT<T> gx, gw, gb;
        conv2d_backward(g_conv, st->x, st->w, stride, pad, &gx, &gw, &gb);
        return std::vector<TensorT<T>>{std::move(gx), std::move(gw), std::move(gb), std::move(gg),
                                       std::move(gbeta)};
    };
    return p;
}

} // namespace stitchlab

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stitchlab/gemm.hpp"
#include "stitchlab/tensor.hpp"

namespace stitchlab {

enum class Mode { Train, Eval };

// ---------------------------------------------------------------- conv2d

inline int conv_out_extent(int in, int k, int stride, int pad, const char* axis) {
    if (k < 1) throw std::invalid_argument("conv2d: kernel extent must be >= 1");
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (pad < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
    const int span = in + 2 * pad - k;
    if (span < 0 || span % stride != 0)
        throw std::invalid_argument(std::string("conv2d: ") + axis + " extent " + std::to_string(in) +
                                    " with kernel " + std::to_string(k) + ", stride " + std::to_string(stride) +
                                    ", padding " + std::to_string(pad) + " gives no integral output size");
    return span / stride + 1;
}

// col layout: [Ci*kh*kw x Ho*Wo] for one image.
template <class T>
void im2col(const T* img, int Ci, int H, int W, int kh, int kw, int stride, int pad,
            int Ho, int Wo, T* col) {
    for (int c = 0; c < Ci; ++c) {
        const T* plane = img + static_cast<std::size_t>(c) * H * W;
        for (int r = 0; r < kh; ++r) {
            for (int s = 0; s < kw; ++s) {
                T* dst = col + (static_cast<std::size_t>(c) * kh * kw + r * kw + s) *
                                   static_cast<std::size_t>(Ho) * Wo;
                for (int ho = 0; ho < Ho; ++ho) {
                    const int hi = ho * stride - pad + r;
                    if (hi < 0 || hi >= H) {
                        for (int wo = 0; wo < Wo; ++wo) *dst++ = T(0);
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(hi) * W;
                    int wi = -pad + s;
                    for (int wo = 0; wo < Wo; ++wo, wi += stride)
                        *dst++ = (wi >= 0 && wi < W) ? src[wi] : T(0);
                }
            }
        }
    }
}

template <class T>
void col2im_add(const T* col, int Ci, int H, int W, int kh, int kw, int stride, int pad,
                int Ho, int Wo, T* img) {
    for (int c = 0; c < Ci; ++c) {
        T* plane = img + static_cast<std::size_t>(c) * H * W;
        for (int r = 0; r < kh; ++r) {
            for (int s = 0; s < kw; ++s) {
                const T* src = col + (static_cast<std::size_t>(c) * kh * kw + r * kw + s) *
                                         static_cast<std::size_t>(Ho) * Wo;
                for (int ho = 0; ho < Ho; ++ho, src += Wo) {
                    const int hi = ho * stride - pad + r;
                    if (hi < 0 || hi >= H) continue;
                    T* dstrow = plane + static_cast<std::size_t>(hi) * W;
                    int wi = -pad + s;
                    for (int wo = 0; wo < Wo; ++wo, wi += stride)
                        if (wi >= 0 && wi < W) dstrow[wi] += src[wo];
                }
            }
        }
    }
}

template <class T>
void check_conv_args(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* b) {
    if (x.ndim() != 4)
        throw std::invalid_argument("conv2d: input must be 4-d [N,C,H,W], got " + shape_str(x.shape));
    if (w.ndim() != 4)
        throw std::invalid_argument("conv2d: weight must be 4-d [Co,Ci,kh,kw], got " + shape_str(w.shape));
    if (x.dim(1) != w.dim(1))
        throw std::invalid_argument("conv2d: input channels " + std::to_string(x.dim(1)) +
                                    " != weight in-channels " + std::to_string(w.dim(1)));
    if (b && (b->ndim() != 1 || b->dim(0) != w.dim(0)))
        throw std::invalid_argument("conv2d: bias length must equal out-channels " + std::to_string(w.dim(0)));
}

// Cross-correlation, im2col + GEMM per image.
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  int stride, int pad) {
    check_conv_args(x, w, &b);
    const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int Ho = conv_out_extent(H, kh, stride, pad, "height");
    const int Wo = conv_out_extent(W, kw, stride, pad, "width");
    const int K = Ci * kh * kw;
    const int P = Ho * Wo;

    TensorT<T> y({N, Co, Ho, Wo});
    std::vector<T> col(static_cast<std::size_t>(K) * P);
    for (int n = 0; n < N; ++n) {
        im2col(x.ptr() + static_cast<std::size_t>(n) * Ci * H * W, Ci, H, W, kh, kw, stride, pad, Ho, Wo,
               col.data());
        T* yn = y.ptr() + static_cast<std::size_t>(n) * Co * P;
        gemm_nn(Co, K, P, w.ptr(), K, col.data(), P, yn, P);
        for (int o = 0; o < Co; ++o) {
            const T bo = b.data[static_cast<std::size_t>(o)];
            T* row = yn + static_cast<std::size_t>(o) * P;
            for (int p = 0; p < P; ++p) row[p] += bo;
        }
    }
    return y;
}

struct ConvGradFlags {
    bool need_input = true;
    bool need_params = true;
};

template <class T>
void conv2d_backward(const TensorT<T>& gy, const TensorT<T>& x, const TensorT<T>& w,
                     int stride, int pad,
                     TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb,
                     ConvGradFlags flags = {}) {
    check_conv_args(x, w, nullptr);
    const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int Ho = conv_out_extent(H, kh, stride, pad, "height");
    const int Wo = conv_out_extent(W, kw, stride, pad, "width");
    if (gy.shape != std::vector<int>{N, Co, Ho, Wo})
        throw std::invalid_argument("conv2d_backward: grad shape " + shape_str(gy.shape) +
                                    " does not match forward output " + shape_str({N, Co, Ho, Wo}));
    const int K = Ci * kh * kw;
    const int P = Ho * Wo;

    if (flags.need_params) {
        *gw = TensorT<T>({Co, Ci, kh, kw});
        *gb = TensorT<T>({Co});
        // bias gradient with 64-bit accumulation
        std::vector<double> bacc(static_cast<std::size_t>(Co), 0.0);
        for (int n = 0; n < N; ++n) {
            const T* gyn = gy.ptr() + static_cast<std::size_t>(n) * Co * P;
            for (int o = 0; o < Co; ++o) {
                double s = 0.0;
                const T* row = gyn + static_cast<std::size_t>(o) * P;
                for (int p = 0; p < P; ++p) s += static_cast<double>(row[p]);
                bacc[static_cast<std::size_t>(o)] += s;
            }
        }
        for (int o = 0; o < Co; ++o) gb->data[static_cast<std::size_t>(o)] = static_cast<T>(bacc[static_cast<std::size_t>(o)]);
    }
    if (flags.need_input) *gx = TensorT<T>({N, Ci, H, W});

    std::vector<T> col(static_cast<std::size_t>(K) * P);
    std::vector<T> dcol(static_cast<std::size_t>(K) * P);
    std::vector<T> wt;
    if (flags.need_input) {
        wt.resize(static_cast<std::size_t>(K) * Co);
        for (int o = 0; o < Co; ++o)
            for (int k = 0; k < K; ++k)
                wt[static_cast<std::size_t>(k) * Co + o] = w.data[static_cast<std::size_t>(o) * K + k];
    }

    for (int n = 0; n < N; ++n) {
        const T* gyn = gy.ptr() + static_cast<std::size_t>(n) * Co * P;
        if (flags.need_params) {
            im2col(x.ptr() + static_cast<std::size_t>(n) * Ci * H * W, Ci, H, W, kh, kw, stride, pad, Ho, Wo,
                   col.data());
            gemm_nt(Co, P, K, gyn, P, col.data(), P, gw->ptr(), K, /*accumulate=*/true);
        }
        if (flags.need_input) {
            gemm_nn(K, Co, P, wt.data(), Co, gyn, P, dcol.data(), P);
            col2im_add(dcol.data(), Ci, H, W, kh, kw, stride, pad, Ho, Wo,
                       gx->ptr() + static_cast<std::size_t>(n) * Ci * H * W);
        }
    }
}

// ------------------------------------------------------------- batchnorm

template <class T>
struct BNCache {
    Mode mode = Mode::Train;
    std::vector<double> mean, invstd; // per channel
    TensorT<T> xhat;
};

template <class T>
void check_bn_args(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                   const TensorT<T>& rmean, const TensorT<T>& rvar, double eps) {
    if (x.ndim() != 4) throw std::invalid_argument("batchnorm: input must be 4-d, got " + shape_str(x.shape));
    const int C = x.dim(1);
    for (const auto* t : {&gamma, &beta, &rmean, &rvar})
        if (t->ndim() != 1 || t->dim(0) != C)
            throw std::invalid_argument("batchnorm: per-channel parameter length " + shape_str(t->shape) +
                                        " != channel count " + std::to_string(C));
    if (!(eps > 0.0)) throw std::invalid_argument("batchnorm: epsilon must be > 0");
}

// Train mode normalizes over (N,H,W) with two-pass 64-bit statistics and
// updates running stats in place; Eval normalizes by the running stats.
template <class T>
TensorT<T> batchnorm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                     TensorT<T>& running_mean, TensorT<T>& running_var,
                     Mode mode, double momentum, double eps, BNCache<T>* cache = nullptr) {
    check_bn_args(x, gamma, beta, running_mean, running_var, eps);
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const std::int64_t count = static_cast<std::int64_t>(N) * plane;
    if (mode == Mode::Train && count == 0)
        throw std::invalid_argument("batchnorm: zero batch in Train mode");

    TensorT<T> y(x.shape);
    std::vector<double> mean(static_cast<std::size_t>(C)), invstd(static_cast<std::size_t>(C));

    if (mode == Mode::Train) {
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* p = x.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) s += static_cast<double>(p[i]);
            }
            const double m = s / static_cast<double>(count);
            double v = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* p = x.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const double d = static_cast<double>(p[i]) - m;
                    v += d * d;
                }
            }
            v /= static_cast<double>(count);
            mean[static_cast<std::size_t>(c)] = m;
            invstd[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(v + eps);
            const double unbiased = count > 1 ? v * static_cast<double>(count) / static_cast<double>(count - 1) : v;
            running_mean.data[static_cast<std::size_t>(c)] =
                static_cast<T>((1.0 - momentum) * static_cast<double>(running_mean.data[static_cast<std::size_t>(c)]) + momentum * m);
            running_var.data[static_cast<std::size_t>(c)] =
                static_cast<T>((1.0 - momentum) * static_cast<double>(running_var.data[static_cast<std::size_t>(c)]) + momentum * unbiased);
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[static_cast<std::size_t>(c)] = static_cast<double>(running_mean.data[static_cast<std::size_t>(c)]);
            invstd[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(static_cast<double>(running_var.data[static_cast<std::size_t>(c)]) + eps);
        }
    }

    if (cache) {
        cache->mode = mode;
        cache->mean = mean;
        cache->invstd = invstd;
        cache->xhat = TensorT<T>(x.shape);
    }
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* p = x.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
            T* q = y.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
            T* xh = cache ? cache->xhat.ptr() + (static_cast<std::size_t>(n) * C + c) * plane : nullptr;
            const T m = static_cast<T>(mean[static_cast<std::size_t>(c)]);
            const T is = static_cast<T>(invstd[static_cast<std::size_t>(c)]);
            const T g = gamma.data[static_cast<std::size_t>(c)];
            const T bt = beta.data[static_cast<std::size_t>(c)];
            for (std::int64_t i = 0; i < plane; ++i) {
                const T h = (p[i] - m) * is;
                if (xh) xh[i] = h;
                q[i] = g * h + bt;
            }
        }
    }
    return y;
}

template <class T>
void batchnorm_backward(const BNCache<T>& cache, const TensorT<T>& gy, const TensorT<T>& gamma,
                        TensorT<T>* gx, TensorT<T>* ggamma, TensorT<T>* gbeta,
                        bool need_param_grads = true) {
    const int N = gy.dim(0), C = gy.dim(1), H = gy.dim(2), W = gy.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const double count = static_cast<double>(static_cast<std::int64_t>(N) * plane);
    if (cache.xhat.shape != gy.shape)
        throw std::invalid_argument("batchnorm_backward: grad shape " + shape_str(gy.shape) +
                                    " != cached activation shape " + shape_str(cache.xhat.shape));

    std::vector<double> sum_gy(static_cast<std::size_t>(C), 0.0), sum_gy_xhat(static_cast<std::size_t>(C), 0.0);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* g = gy.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
            const T* xh = cache.xhat.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
            double s0 = 0.0, s1 = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) {
                s0 += static_cast<double>(g[i]);
                s1 += static_cast<double>(g[i]) * static_cast<double>(xh[i]);
            }
            sum_gy[static_cast<std::size_t>(c)] += s0;
            sum_gy_xhat[static_cast<std::size_t>(c)] += s1;
        }
    }
    if (need_param_grads) {
        *ggamma = TensorT<T>({C});
        *gbeta = TensorT<T>({C});
        for (int c = 0; c < C; ++c) {
            ggamma->data[static_cast<std::size_t>(c)] = static_cast<T>(sum_gy_xhat[static_cast<std::size_t>(c)]);
            gbeta->data[static_cast<std::size_t>(c)] = static_cast<T>(sum_gy[static_cast<std::size_t>(c)]);
        }
    }
    if (!gx) return;
    *gx = TensorT<T>(gy.shape);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* g = gy.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
            const T* xh = cache.xhat.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
            T* out = gx->ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
            const double gscale = static_cast<double>(gamma.data[static_cast<std::size_t>(c)]) * cache.invstd[static_cast<std::size_t>(c)];
            if (cache.mode == Mode::Train) {
                const double mg = sum_gy[static_cast<std::size_t>(c)] / count;
                const double mgx = sum_gy_xhat[static_cast<std::size_t>(c)] / count;
                for (std::int64_t i = 0; i < plane; ++i)
                    out[i] = static_cast<T>(gscale * (static_cast<double>(g[i]) - mg - static_cast<double>(xh[i]) * mgx));
            } else {
                for (std::int64_t i = 0; i < plane; ++i)
                    out[i] = static_cast<T>(gscale * static_cast<double>(g[i]));
            }
        }
    }
}

// ------------------------------------------------------------------ relu

template <class T>
TensorT<T> relu(const TensorT<T>& x) {
    TensorT<T> y(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    return y;
}

template <class T>
TensorT<T> relu_backward(const TensorT<T>& gy, const TensorT<T>& x) {
    if (!gy.same_shape(x)) throw std::invalid_argument("relu_backward: shape mismatch");
    TensorT<T> gx(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) gx.data[i] = x.data[i] > T(0) ? gy.data[i] : T(0);
    return gx;
}

// ---------------------------------------------------------------- linear

template <class T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    if (x.ndim() != 2 || w.ndim() != 2)
        throw std::invalid_argument("linear: need 2-d input and weight, got " + shape_str(x.shape) + " and " +
                                    shape_str(w.shape));
    if (x.dim(1) != w.dim(1))
        throw std::invalid_argument("linear: input features " + std::to_string(x.dim(1)) +
                                    " != weight in-features " + std::to_string(w.dim(1)));
    const int N = x.dim(0), D = x.dim(1), K = w.dim(0);
    if (b.ndim() != 1 || b.dim(0) != K)
        throw std::invalid_argument("linear: bias length must equal out-features " + std::to_string(K));
    TensorT<T> y({N, K});
    gemm_nt(N, D, K, x.ptr(), D, w.ptr(), D, y.ptr(), K);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) y.data[static_cast<std::size_t>(n) * K + k] += b.data[static_cast<std::size_t>(k)];
    return y;
}

template <class T>
void linear_backward(const TensorT<T>& gy, const TensorT<T>& x, const TensorT<T>& w,
                     TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb,
                     bool need_param_grads = true) {
    const int N = x.dim(0), D = x.dim(1), K = w.dim(0);
    if (gy.shape != std::vector<int>{N, K})
        throw std::invalid_argument("linear_backward: grad shape " + shape_str(gy.shape) + " != " +
                                    shape_str({N, K}));
    if (gx) {
        *gx = TensorT<T>({N, D});
        gemm_nn(N, K, D, gy.ptr(), K, w.ptr(), D, gx->ptr(), D);
    }
    if (need_param_grads) {
        *gw = TensorT<T>({K, D});
        gemm_tn(K, N, D, gy.ptr(), K, x.ptr(), D, gw->ptr(), D);
        *gb = TensorT<T>({K});
        for (int k = 0; k < K; ++k) {
            double s = 0.0;
            for (int n = 0; n < N; ++n) s += static_cast<double>(gy.data[static_cast<std::size_t>(n) * K + k]);
            gb->data[static_cast<std::size_t>(k)] = static_cast<T>(s);
        }
    }
}

// ------------------------------------------------------------- maxpool2d

template <class T>
struct MaxPoolOut {
    TensorT<T> y;
    std::vector<std::int32_t> argmax; // flat offset within the input (h,w) plane
};

template <class T>
MaxPoolOut<T> maxpool2d(const TensorT<T>& x, int k, int stride) {
    if (x.ndim() != 4) throw std::invalid_argument("maxpool2d: input must be 4-d");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = conv_out_extent(H, k, stride, 0, "height");
    const int Wo = conv_out_extent(W, k, stride, 0, "width");
    MaxPoolOut<T> out;
    out.y = TensorT<T>({N, C, Ho, Wo});
    out.argmax.resize(out.y.data.size());
    std::size_t oi = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const T* plane = x.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int ho = 0; ho < Ho; ++ho) {
                for (int wo = 0; wo < Wo; ++wo, ++oi) {
                    T best = plane[static_cast<std::size_t>(ho * stride) * W + wo * stride];
                    std::int32_t besti = ho * stride * W + wo * stride;
                    for (int r = 0; r < k; ++r)
                        for (int s = 0; s < k; ++s) {
                            const std::int32_t idx = (ho * stride + r) * W + wo * stride + s;
                            // first maximum wins ties, deterministic
                            if (plane[idx] > best) {
                                best = plane[idx];
                                besti = idx;
                            }
                        }
                    out.y.data[oi] = best;
                    out.argmax[oi] = besti;
                }
            }
        }
    }
    return out;
}

template <class T>
TensorT<T> maxpool2d_backward(const TensorT<T>& gy, const MaxPoolOut<T>& fwd, const std::vector<int>& in_shape) {
    TensorT<T> gx(in_shape);
    const int C = in_shape[1], H = in_shape[2], W = in_shape[3];
    const int Ho = fwd.y.dim(2), Wo = fwd.y.dim(3);
    if (!gy.same_shape(fwd.y)) throw std::invalid_argument("maxpool2d_backward: grad shape mismatch");
    std::size_t oi = 0;
    for (int n = 0; n < gy.dim(0); ++n)
        for (int c = 0; c < C; ++c) {
            T* plane = gx.ptr() + (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int i = 0; i < Ho * Wo; ++i, ++oi) plane[fwd.argmax[oi]] += gy.data[oi];
        }
    return gx;
}

// -------------------------------------------------------- global avg pool

template <class T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
    if (x.ndim() != 4) throw std::invalid_argument("global_avg_pool: input must be 4-d");
    const int N = x.dim(0), C = x.dim(1);
    const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
    TensorT<T> y({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* p = x.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
            double s = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) s += static_cast<double>(p[i]);
            y.data[static_cast<std::size_t>(n) * C + c] = static_cast<T>(s / static_cast<double>(plane));
        }
    return y;
}

template <class T>
TensorT<T> global_avg_pool_backward(const TensorT<T>& gy, const std::vector<int>& in_shape) {
    const int N = in_shape[0], C = in_shape[1];
    const std::int64_t plane = static_cast<std::int64_t>(in_shape[2]) * in_shape[3];
    if (gy.shape != std::vector<int>{N, C})
        throw std::invalid_argument("global_avg_pool_backward: grad shape mismatch");
    TensorT<T> gx(in_shape);
    const T scale = static_cast<T>(1.0 / static_cast<double>(plane));
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T g = gy.data[static_cast<std::size_t>(n) * C + c] * scale;
            T* p = gx.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) p[i] = g;
        }
    return gx;
}

// flatten [N,C,H,W] -> [N, C*H*W]
template <class T>
TensorT<T> flatten2d(const TensorT<T>& x) {
    if (x.ndim() < 2) throw std::invalid_argument("flatten2d: need at least 2 dims");
    int rest = 1;
    for (int i = 1; i < x.ndim(); ++i) rest *= x.dim(i);
    TensorT<T> y;
    y.shape = {x.dim(0), rest};
    y.data = x.data;
    return y;
}

// ------------------------------------------------- softmax cross entropy

// Mean cross entropy over the batch plus the logits gradient of that mean.
template <class T>
double softmax_cross_entropy(const TensorT<T>& logits, const std::vector<int>& labels, TensorT<T>* grad) {
    if (logits.ndim() != 2) throw std::invalid_argument("softmax_cross_entropy: logits must be 2-d");
    const int N = logits.dim(0), K = logits.dim(1);
    if (static_cast<int>(labels.size()) != N)
        throw std::invalid_argument("softmax_cross_entropy: label count " + std::to_string(labels.size()) +
                                    " != batch size " + std::to_string(N));
    if (grad) *grad = TensorT<T>({N, K});
    double loss = 0.0;
    for (int n = 0; n < N; ++n) {
        const int y = labels[static_cast<std::size_t>(n)];
        if (y < 0 || y >= K)
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                        " out of class range [0," + std::to_string(K) + ")");
        const T* row = logits.ptr() + static_cast<std::size_t>(n) * K;
        double m = static_cast<double>(row[0]);
        for (int k = 1; k < K; ++k) m = std::max(m, static_cast<double>(row[k]));
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - m);
        const double logz = std::log(z);
        loss += -(static_cast<double>(row[y]) - m - logz);
        if (grad) {
            T* g = grad->ptr() + static_cast<std::size_t>(n) * K;
            for (int k = 0; k < K; ++k) {
                const double p = std::exp(static_cast<double>(row[k]) - m - logz);
                g[k] = static_cast<T>((p - (k == y ? 1.0 : 0.0)) / static_cast<double>(N));
            }
        }
    }
    return loss / static_cast<double>(N);
}

// argmax with lowest-index tie break
template <class T>
int argmax_row(const TensorT<T>& logits, int n) {
    const int K = logits.dim(1);
    const T* row = logits.ptr() + static_cast<std::size_t>(n) * K;
    int best = 0;
    for (int k = 1; k < K; ++k)
        if (row[k] > row[best]) best = k;
    return best;
}

} // namespace stitchlab

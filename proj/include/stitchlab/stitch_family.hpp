#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "stitchlab/kernels.hpp"
#include "stitchlab/rng.hpp"
#include "stitchlab/tensor.hpp"

namespace stitchlab {

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// Ordered named-tensor container shared by models and stitchers. Insertion
// order is the canonical iteration order, which keeps init and update
// sequences reproducible.
struct ParamStore {
    std::vector<std::pair<std::string, Tensor>> items;
    std::unordered_map<std::string, std::size_t> index;

    Tensor& add(const std::string& name, Tensor t) {
        if (index.count(name)) throw std::invalid_argument("param store: duplicate name '" + name + "'");
        index.emplace(name, items.size());
        items.emplace_back(name, std::move(t));
        return items.back().second;
    }
    bool has(const std::string& name) const { return index.count(name) != 0; }
    Tensor& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw std::out_of_range("param store: unknown name '" + name + "'");
        return items[it->second].second;
    }
    const Tensor& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw std::out_of_range("param store: unknown name '" + name + "'");
        return items[it->second].second;
    }
    std::size_t size() const { return items.size(); }
    std::int64_t scalar_count() const {
        std::int64_t n = 0;
        for (const auto& [k, v] : items) n += v.numel();
        return n;
    }
    std::uint64_t byte_hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& [k, v] : items) {
            h = fnv1a64(k, h);
            h = fnv1a64(v.data.data(), v.data.size() * sizeof(float), h);
        }
        return h;
    }
    ParamStore zeros_like() const {
        ParamStore g;
        for (const auto& [k, v] : items) g.add(k, Tensor::zeros(v.shape));
        return g;
    }
};

enum class StitchKind { Identity, ChannelPermutation, Conv1x1Sandwich };

struct StitchFamily {
    StitchKind kind = StitchKind::Conv1x1Sandwich;
    int kernel_size = 1;
    bool bn_before = true;
    bool bn_after = true;

    static StitchFamily identity() { return {StitchKind::Identity, 1, false, false}; }
    static StitchFamily permutation() { return {StitchKind::ChannelPermutation, 1, false, false}; }
    static StitchFamily conv_sandwich(int k = 1, bool before = true, bool after = true) {
        return {StitchKind::Conv1x1Sandwich, k, before, after};
    }

    void validate() const {
        if (kernel_size < 1 || kernel_size % 2 == 0)
            throw std::invalid_argument("stitch family: kernel size must be odd and >= 1, got " +
                                        std::to_string(kernel_size));
    }
    std::string name() const {
        switch (kind) {
            case StitchKind::Identity: return "identity";
            case StitchKind::ChannelPermutation: return "permutation";
            case StitchKind::Conv1x1Sandwich:
                return "conv" + std::to_string(kernel_size) + (bn_before ? "+bnpre" : "") +
                       (bn_after ? "+bnpost" : "");
        }
        return "?";
    }
};

struct StitchCache {
    Tensor x;
    BNCache<float> bn1;
    Tensor conv_in;  // post-bn1
    Tensor conv_out; // pre-bn2
    BNCache<float> bn2;
};

// The trainable connector between a frozen bottom and a frozen top:
// optional BN, kxk conv (spatial-preserving), optional BN.
struct Stitcher {
    StitchFamily family;
    int in_ch = 0;
    int out_ch = 0;
    bool training = false; // batch-stat BN while being fitted
    ParamStore params;
    ParamStore buffers;
    std::vector<int> permutation; // ChannelPermutation: out channel c reads in channel permutation[c]

    static Stitcher make(const StitchFamily& fam, int c_in, int c_out, std::uint64_t seed);

    Tensor forward(const Tensor& x, Mode mode, StitchCache* cache = nullptr);
    Tensor forward(const Tensor& x) const; // eval, running stats
    // returns grad wrt input; param grads accumulate into `grads` when given
    Tensor backward(const StitchCache& cache, const Tensor& gy, ParamStore* grads);

    // eval-mode affine map y = M x + d per spatial position; kernel size 1 only
    void eval_linear_map(Tensor& M, Tensor& d) const;
};

} // namespace stitchlab

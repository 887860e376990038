#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stylefp/common.hpp"

namespace stylefp::nn {

using Scalar = double;
using Vec = std::vector<Scalar>;

// Dense CHW feature map.
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    Vec data;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    Scalar& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    Scalar at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const FeatureMap& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

// Fully connected layer, weight stored row-major [out][in].
struct Linear {
    int in_dim = 0;
    int out_dim = 0;
    bool has_bias = true;
    Vec weight;
    Vec bias;
    Vec grad_weight;
    Vec grad_bias;

    Linear() = default;
    Linear(int in, int out, bool with_bias = true);

    void init_he(Rng& rng);
    // square identity map (requires in_dim == out_dim), zero bias
    void init_identity();
    void init_zero();
    void zero_grad();

    Vec forward(const Vec& in) const;
    // Accumulates grad_weight/grad_bias and returns d(loss)/d(in).
    Vec backward(const Vec& in, const Vec& d_out);
};

// 3x3 convolution, stride 1, zero padding 1. Weight layout [out][in][3][3].
struct Conv3x3 {
    int in_ch = 0;
    int out_ch = 0;
    Vec weight;
    Vec bias;
    Vec grad_weight;
    Vec grad_bias;

    Conv3x3() = default;
    Conv3x3(int in, int out);

    void init_he(Rng& rng);
    void zero_grad();

    FeatureMap forward(const FeatureMap& in) const;
    // d_out has the same shape as forward output. When accumulate_param_grads
    // is false only the input gradient is produced (frozen layer on the path).
    FeatureMap backward(const FeatureMap& in, const FeatureMap& d_out, bool accumulate_param_grads);
};

void relu_inplace(FeatureMap& m);
void relu_inplace(Vec& v);
// grad *= (activated > 0), where `activated` are the post-ReLU values
void relu_backward_inplace(const FeatureMap& activated, FeatureMap& grad);

struct PoolIndices {
    int out_h = 0;
    int out_w = 0;
    std::vector<std::uint32_t> argmax;  // flat index into the input map per output cell
};

// 2x2 max pool, stride 2; odd trailing row/col is dropped (floor semantics).
FeatureMap maxpool2x2(const FeatureMap& in, PoolIndices* indices = nullptr);
FeatureMap maxpool2x2_backward(const FeatureMap& in, const FeatureMap& d_out, const PoolIndices& indices);

struct GlobalPoolTape {
    std::vector<std::uint32_t> argmax;  // per channel, flat spatial index of the max
    int height = 0;
    int width = 0;
};

// Global average and max pooling over the spatial dims, concatenated avg-then-max: 2C values.
Vec global_avg_max_pool(const FeatureMap& in, GlobalPoolTape* tape = nullptr);
FeatureMap global_avg_max_pool_backward(const FeatureMap& in, const Vec& d_pooled, const GlobalPoolTape& tape);

// A named view over one parameter array of a model, used to enumerate
// everything an optimizer should touch in a stable order.
struct ParamRef {
    std::string name;
    Vec* value = nullptr;
    Vec* grad = nullptr;
    bool apply_weight_decay = true;
    Scalar lr_scale = 1.0;
};

// Adam with decoupled weight decay. Slot state is keyed by position in the
// ParamRef list, which therefore must be stable across steps.
struct AdamW {
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
    Scalar weight_decay = 0.0;
    std::int64_t step_count = 0;
    std::vector<Vec> m;
    std::vector<Vec> v;

    void step(std::vector<ParamRef>& params, Scalar lr);
};

}  // namespace stylefp::nn

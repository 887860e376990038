#include "stylefp/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stylefp::nn {

Linear::Linear(int in, int out, bool with_bias)
    : in_dim(in),
      out_dim(out),
      has_bias(with_bias),
      weight(static_cast<std::size_t>(in) * out, 0.0),
      bias(with_bias ? out : 0, 0.0),
      grad_weight(weight.size(), 0.0),
      grad_bias(bias.size(), 0.0) {}

void Linear::init_he(Rng& rng) {
    const Scalar scale = std::sqrt(2.0 / std::max(1, in_dim));
    for (auto& w : weight) w = rng.normal() * scale;
    for (auto& b : bias) b = 0.0;
}

void Linear::init_identity() {
    if (in_dim != out_dim) {
        throw SpecError("identity init requires square layer");
    }
    std::fill(weight.begin(), weight.end(), 0.0);
    for (int i = 0; i < in_dim; ++i) weight[static_cast<std::size_t>(i) * in_dim + i] = 1.0;
    std::fill(bias.begin(), bias.end(), 0.0);
}

void Linear::init_zero() {
    std::fill(weight.begin(), weight.end(), 0.0);
    std::fill(bias.begin(), bias.end(), 0.0);
}

void Linear::zero_grad() {
    std::fill(grad_weight.begin(), grad_weight.end(), 0.0);
    std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
}

Vec Linear::forward(const Vec& in) const {
    if (static_cast<int>(in.size()) != in_dim) {
        throw SpecError("linear forward: input dim " + std::to_string(in.size()) + " != " +
                        std::to_string(in_dim));
    }
    Vec out(out_dim, 0.0);
    for (int o = 0; o < out_dim; ++o) {
        const Scalar* wrow = &weight[static_cast<std::size_t>(o) * in_dim];
        Scalar acc = has_bias ? bias[o] : 0.0;
        for (int i = 0; i < in_dim; ++i) acc += wrow[i] * in[i];
        out[o] = acc;
    }
    return out;
}

Vec Linear::backward(const Vec& in, const Vec& d_out) {
    Vec d_in(in_dim, 0.0);
    for (int o = 0; o < out_dim; ++o) {
        const Scalar g = d_out[o];
        if (has_bias) grad_bias[o] += g;
        Scalar* gw = &grad_weight[static_cast<std::size_t>(o) * in_dim];
        const Scalar* wrow = &weight[static_cast<std::size_t>(o) * in_dim];
        for (int i = 0; i < in_dim; ++i) {
            gw[i] += g * in[i];
            d_in[i] += g * wrow[i];
        }
    }
    return d_in;
}

Conv3x3::Conv3x3(int in, int out)
    : in_ch(in),
      out_ch(out),
      weight(static_cast<std::size_t>(in) * out * 9, 0.0),
      bias(out, 0.0),
      grad_weight(weight.size(), 0.0),
      grad_bias(bias.size(), 0.0) {}

void Conv3x3::init_he(Rng& rng) {
    const Scalar scale = std::sqrt(2.0 / (9.0 * std::max(1, in_ch)));
    for (auto& w : weight) w = rng.normal() * scale;
    for (auto& b : bias) b = 0.0;
}

void Conv3x3::zero_grad() {
    std::fill(grad_weight.begin(), grad_weight.end(), 0.0);
    std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
}

FeatureMap Conv3x3::forward(const FeatureMap& in) const {
    if (in.channels != in_ch) {
        throw SpecError("conv forward: channel mismatch");
    }
    const int H = in.height, W = in.width;
    FeatureMap out(out_ch, H, W);
    for (int oc = 0; oc < out_ch; ++oc) {
        const Scalar b = bias[oc];
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                out.at(oc, y, x) = b;
            }
        }
        for (int ic = 0; ic < in_ch; ++ic) {
            const Scalar* w = &weight[(static_cast<std::size_t>(oc) * in_ch + ic) * 9];
            const Scalar* src = &in.data[static_cast<std::size_t>(ic) * H * W];
            Scalar* dst = &out.data[static_cast<std::size_t>(oc) * H * W];
            for (int ky = -1; ky <= 1; ++ky) {
                for (int kx = -1; kx <= 1; ++kx) {
                    const Scalar wv = w[(ky + 1) * 3 + (kx + 1)];
                    if (wv == 0.0) continue;
                    const int y0 = std::max(0, -ky), y1 = std::min(H, H - ky);
                    const int x0 = std::max(0, -kx), x1 = std::min(W, W - kx);
                    for (int y = y0; y < y1; ++y) {
                        const Scalar* srow = src + static_cast<std::size_t>(y + ky) * W + kx;
                        Scalar* drow = dst + static_cast<std::size_t>(y) * W;
                        for (int x = x0; x < x1; ++x) {
                            drow[x] += wv * srow[x];
                        }
                    }
                }
            }
        }
    }
    return out;
}

FeatureMap Conv3x3::backward(const FeatureMap& in, const FeatureMap& d_out, bool accumulate_param_grads) {
    const int H = in.height, W = in.width;
    FeatureMap d_in(in_ch, H, W);
    for (int oc = 0; oc < out_ch; ++oc) {
        const Scalar* gdst = &d_out.data[static_cast<std::size_t>(oc) * H * W];
        if (accumulate_param_grads) {
            Scalar gb = 0.0;
            for (std::size_t i = 0; i < static_cast<std::size_t>(H) * W; ++i) gb += gdst[i];
            grad_bias[oc] += gb;
        }
        for (int ic = 0; ic < in_ch; ++ic) {
            const Scalar* w = &weight[(static_cast<std::size_t>(oc) * in_ch + ic) * 9];
            Scalar* gw = &grad_weight[(static_cast<std::size_t>(oc) * in_ch + ic) * 9];
            const Scalar* src = &in.data[static_cast<std::size_t>(ic) * H * W];
            Scalar* gsrc = &d_in.data[static_cast<std::size_t>(ic) * H * W];
            for (int ky = -1; ky <= 1; ++ky) {
                for (int kx = -1; kx <= 1; ++kx) {
                    const int k = (ky + 1) * 3 + (kx + 1);
                    const Scalar wv = w[k];
                    const int y0 = std::max(0, -ky), y1 = std::min(H, H - ky);
                    const int x0 = std::max(0, -kx), x1 = std::min(W, W - kx);
                    Scalar gw_acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const Scalar* srow = src + static_cast<std::size_t>(y + ky) * W + kx;
                        Scalar* gsrow = gsrc + static_cast<std::size_t>(y + ky) * W + kx;
                        const Scalar* grow = gdst + static_cast<std::size_t>(y) * W;
                        for (int x = x0; x < x1; ++x) {
                            gw_acc += grow[x] * srow[x];
                            gsrow[x] += grow[x] * wv;
                        }
                    }
                    if (accumulate_param_grads) gw[k] += gw_acc;
                }
            }
        }
    }
    return d_in;
}

void relu_inplace(FeatureMap& m) {
    for (auto& v : m.data) v = v > 0.0 ? v : 0.0;
}

void relu_inplace(Vec& v) {
    for (auto& x : v) x = x > 0.0 ? x : 0.0;
}

void relu_backward_inplace(const FeatureMap& activated, FeatureMap& grad) {
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
        if (activated.data[i] <= 0.0) grad.data[i] = 0.0;
    }
}

FeatureMap maxpool2x2(const FeatureMap& in, PoolIndices* indices) {
    const int oh = in.height / 2, ow = in.width / 2;
    FeatureMap out(in.channels, oh, ow);
    if (indices) {
        indices->out_h = oh;
        indices->out_w = ow;
        indices->argmax.assign(static_cast<std::size_t>(in.channels) * oh * ow, 0);
    }
    for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                Scalar best = -std::numeric_limits<Scalar>::infinity();
                std::uint32_t best_idx = 0;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int yy = 2 * y + dy, xx = 2 * x + dx;
                        const Scalar v = in.at(c, yy, xx);
                        if (v > best) {
                            best = v;
                            best_idx = static_cast<std::uint32_t>(yy * in.width + xx);
                        }
                    }
                }
                out.at(c, y, x) = best;
                if (indices) {
                    indices->argmax[(static_cast<std::size_t>(c) * oh + y) * ow + x] = best_idx;
                }
            }
        }
    }
    return out;
}

FeatureMap maxpool2x2_backward(const FeatureMap& in, const FeatureMap& d_out, const PoolIndices& indices) {
    FeatureMap d_in(in.channels, in.height, in.width);
    for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < d_out.height; ++y) {
            for (int x = 0; x < d_out.width; ++x) {
                const std::uint32_t idx =
                    indices.argmax[(static_cast<std::size_t>(c) * d_out.height + y) * d_out.width + x];
                d_in.data[static_cast<std::size_t>(c) * in.height * in.width + idx] += d_out.at(c, y, x);
            }
        }
    }
    return d_in;
}

Vec global_avg_max_pool(const FeatureMap& in, GlobalPoolTape* tape) {
    const int C = in.channels;
    const std::size_t hw = static_cast<std::size_t>(in.height) * in.width;
    Vec out(static_cast<std::size_t>(2) * C, 0.0);
    if (tape) {
        tape->argmax.assign(C, 0);
        tape->height = in.height;
        tape->width = in.width;
    }
    for (int c = 0; c < C; ++c) {
        const Scalar* src = &in.data[static_cast<std::size_t>(c) * hw];
        Scalar sum = 0.0;
        Scalar best = src[0];
        std::uint32_t best_idx = 0;
        for (std::size_t i = 0; i < hw; ++i) {
            sum += src[i];
            if (src[i] > best) {
                best = src[i];
                best_idx = static_cast<std::uint32_t>(i);
            }
        }
        out[c] = sum / static_cast<Scalar>(hw);
        out[C + c] = best;
        if (tape) tape->argmax[c] = best_idx;
    }
    return out;
}

FeatureMap global_avg_max_pool_backward(const FeatureMap& in, const Vec& d_pooled, const GlobalPoolTape& tape) {
    const int C = in.channels;
    const std::size_t hw = static_cast<std::size_t>(in.height) * in.width;
    FeatureMap d_in(C, in.height, in.width);
    for (int c = 0; c < C; ++c) {
        const Scalar g_avg = d_pooled[c] / static_cast<Scalar>(hw);
        Scalar* dst = &d_in.data[static_cast<std::size_t>(c) * hw];
        for (std::size_t i = 0; i < hw; ++i) dst[i] += g_avg;
        dst[tape.argmax[c]] += d_pooled[C + c];
    }
    return d_in;
}

void AdamW::step(std::vector<ParamRef>& params, Scalar lr) {
    if (m.size() != params.size()) {
        m.resize(params.size());
        v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i].assign(params[i].value->size(), 0.0);
            v[i].assign(params[i].value->size(), 0.0);
        }
    }
    ++step_count;
    const Scalar bc1 = 1.0 - std::pow(beta1, static_cast<Scalar>(step_count));
    const Scalar bc2 = 1.0 - std::pow(beta2, static_cast<Scalar>(step_count));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Vec& value = *params[p].value;
        const Vec& grad = *params[p].grad;
        Vec& mp = m[p];
        Vec& vp = v[p];
        const Scalar decay = params[p].apply_weight_decay ? weight_decay : 0.0;
        const Scalar step_lr = lr * params[p].lr_scale;
        for (std::size_t i = 0; i < value.size(); ++i) {
            mp[i] = beta1 * mp[i] + (1.0 - beta1) * grad[i];
            vp[i] = beta2 * vp[i] + (1.0 - beta2) * grad[i] * grad[i];
            const Scalar mhat = mp[i] / bc1;
            const Scalar vhat = vp[i] / bc2;
            value[i] -= step_lr * (mhat / (std::sqrt(vhat) + eps) + decay * value[i]);
        }
    }
}

}  // namespace stylefp::nn

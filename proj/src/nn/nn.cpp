// Copyright 2026 Onescale Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "onescale/nn.hpp"

#include "onescale/common.hpp"
#include "onescale/kernels.hpp"

#include <cmath>
#include <cstring>

namespace onescale::nn {

using kernels::ops;

namespace {

// Xavier-uniform initialization for weight matrices.
void init_xavier(Tensor &w, int fan_in, int fan_out, Rng &rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (size_t i = 0; i < w.numel(); ++i) {
        w.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
    }
}

constexpr float kMaskFloor = -1e30f;

} // namespace

Param::Param(std::string param_name, const std::vector<int> &shape, bool apply_decay)
    : name(std::move(param_name)), w(shape), g(shape), m(shape), v(shape), decay(apply_decay) {}

// ------------------------------------------------------------- Linear ----

Linear::Linear(const std::string &name, int in_dim, int out_dim, Rng &rng, bool bias)
    : w(name + ".w", {out_dim, in_dim}, true), in_dim_(in_dim), out_dim_(out_dim), has_bias_(bias) {
    require(in_dim >= 1 && out_dim >= 1, "Linear dims must be positive");
    init_xavier(w.w, in_dim, out_dim, rng);
    if (has_bias_) {
        b = Param(name + ".b", {out_dim}, false);
    }
}

void Linear::add_adapter(int rank, float alpha, Rng &rng) {
    require(rank >= 1, "adapter rank must be positive");
    require(!has_adapter(), "adapter already attached to " + w.name);
    adapter_rank_ = rank;
    adapter_scale_ = alpha / static_cast<float>(rank);
    adapter_down = Param(w.name + ".adapter_down", {in_dim_, rank}, true);
    adapter_up = Param(w.name + ".adapter_up", {rank, out_dim_}, true);
    init_xavier(adapter_down.w, in_dim_, rank, rng);
    // adapter_up stays zero so the adapted layer starts as an exact identity
}

Tensor Linear::forward(const Tensor &x, Ctx *ctx) const {
    require(x.rank() == 2 && x.dim(1) == in_dim_, "Linear input shape mismatch for " + w.name);
    const int n = x.dim(0);
    Tensor y({n, out_dim_});
    ops().gemm_nt(x.data(), w.w.data(), y.data(), n, in_dim_, out_dim_, false);
    if (has_bias_) {
        for (int i = 0; i < n; ++i) {
            float *row = y.data() + static_cast<size_t>(i) * out_dim_;
            ops().axpy(1.0f, b.w.data(), row, static_cast<size_t>(out_dim_));
        }
    }
    Tensor low;
    if (has_adapter()) {
        low = Tensor({n, adapter_rank_});
        ops().gemm_nn(x.data(), adapter_down.w.data(), low.data(), n, in_dim_, adapter_rank_, false);
        Tensor delta({n, out_dim_});
        ops().gemm_nn(low.data(), adapter_up.w.data(), delta.data(), n, adapter_rank_, out_dim_, false);
        ops().axpy(adapter_scale_, delta.data(), y.data(), y.numel());
    }
    if (ctx) {
        ctx->x = x;
        ctx->low = std::move(low);
    }
    return y;
}

Tensor Linear::backward(const Ctx &ctx, const Tensor &dy) {
    const int n = ctx.x.dim(0);
    require(dy.rank() == 2 && dy.dim(0) == n && dy.dim(1) == out_dim_,
            "Linear backward shape mismatch for " + w.name);
    if (w.trainable) {
        // dW += dy^T . x
        ops().gemm_tn(dy.data(), ctx.x.data(), w.g.data(), out_dim_, n, in_dim_, true);
    }
    if (has_bias_ && b.trainable) {
        for (int i = 0; i < n; ++i) {
            ops().axpy(1.0f, dy.data() + static_cast<size_t>(i) * out_dim_, b.g.data(),
                       static_cast<size_t>(out_dim_));
        }
    }
    Tensor dx({n, in_dim_});
    ops().gemm_nn(dy.data(), w.w.data(), dx.data(), n, out_dim_, in_dim_, false);
    if (has_adapter()) {
        // d_up += s . low^T . dy
        Tensor up_grad({adapter_rank_, out_dim_});
        ops().gemm_tn(ctx.low.data(), dy.data(), up_grad.data(), adapter_rank_, n, out_dim_, false);
        ops().axpy(adapter_scale_, up_grad.data(), adapter_up.g.data(), up_grad.numel());
        // dlow = s . dy . up^T
        Tensor dlow({n, adapter_rank_});
        ops().gemm_nt(dy.data(), adapter_up.w.data(), dlow.data(), n, out_dim_, adapter_rank_, false);
        // d_down += s . x^T . dlow
        Tensor down_grad({in_dim_, adapter_rank_});
        ops().gemm_tn(ctx.x.data(), dlow.data(), down_grad.data(), in_dim_, n, adapter_rank_, false);
        ops().axpy(adapter_scale_, down_grad.data(), adapter_down.g.data(), down_grad.numel());
        // dx += s . dlow . down^T
        Tensor dx_extra({n, in_dim_});
        ops().gemm_nt(dlow.data(), adapter_down.w.data(), dx_extra.data(), n, adapter_rank_, in_dim_, false);
        ops().axpy(adapter_scale_, dx_extra.data(), dx.data(), dx.numel());
    }
    return dx;
}

void Linear::collect(std::vector<Param *> &out) {
    out.push_back(&w);
    if (has_bias_) {
        out.push_back(&b);
    }
    if (has_adapter()) {
        out.push_back(&adapter_down);
        out.push_back(&adapter_up);
    }
}

// ------------------------------------------------------------- Conv2d ----

Conv2d::Conv2d(const std::string &name, int cin, int cout, int ksize, int stride, int pad, Rng &rng)
    : w(name + ".w", {cout, ksize * ksize * cin}, true), b(name + ".b", {cout}, false), cin_(cin),
      cout_(cout), ksize_(ksize), stride_(stride), pad_(pad) {
    require(cin >= 1 && cout >= 1 && ksize >= 1 && stride >= 1 && pad >= 0, "bad Conv2d geometry");
    init_xavier(w.w, ksize * ksize * cin, cout, rng);
}

Tensor Conv2d::im2col(const Tensor &x) const {
    const int h = x.dim(0), iw = x.dim(1);
    const int oh = out_size(h), ow = out_size(iw);
    const int patch = ksize_ * ksize_ * cin_;
    Tensor col({oh * ow, patch});
    float *dst = col.data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int ky = 0; ky < ksize_; ++ky) {
                const int y = oy * stride_ - pad_ + ky;
                for (int kx = 0; kx < ksize_; ++kx) {
                    const int xx = ox * stride_ - pad_ + kx;
                    if (y >= 0 && y < h && xx >= 0 && xx < iw) {
                        std::memcpy(dst, &x.at(y, xx, 0), sizeof(float) * static_cast<size_t>(cin_));
                    } else {
                        std::memset(dst, 0, sizeof(float) * static_cast<size_t>(cin_));
                    }
                    dst += cin_;
                }
            }
        }
    }
    return col;
}

Tensor Conv2d::forward(const Tensor &x, Ctx *ctx) const {
    require(x.rank() == 3 && x.dim(2) == cin_, "Conv2d input shape mismatch for " + w.name);
    const int h = x.dim(0), iw = x.dim(1);
    const int oh = out_size(h), ow = out_size(iw);
    require(oh >= 1 && ow >= 1, "Conv2d output collapsed to zero for " + w.name);
    Tensor col = im2col(x);
    Tensor y({oh, ow, cout_});
    // y[p, c] = col[p, :] . w[c, :]
    ops().gemm_nt(col.data(), w.w.data(), y.data(), oh * ow, ksize_ * ksize_ * cin_, cout_, false);
    for (int p = 0; p < oh * ow; ++p) {
        ops().axpy(1.0f, b.w.data(), y.data() + static_cast<size_t>(p) * cout_,
                   static_cast<size_t>(cout_));
    }
    if (ctx) {
        ctx->col = std::move(col);
        ctx->in_h = h;
        ctx->in_w = iw;
    }
    return y;
}

Tensor Conv2d::backward(const Ctx &ctx, const Tensor &dy) {
    const int oh = dy.dim(0), ow = dy.dim(1);
    require(dy.rank() == 3 && dy.dim(2) == cout_, "Conv2d backward shape mismatch for " + w.name);
    const int positions = oh * ow;
    const int patch = ksize_ * ksize_ * cin_;
    if (w.trainable) {
        // dW += dy^T . col
        ops().gemm_tn(dy.data(), ctx.col.data(), w.g.data(), cout_, positions, patch, true);
    }
    if (b.trainable) {
        for (int p = 0; p < positions; ++p) {
            ops().axpy(1.0f, dy.data() + static_cast<size_t>(p) * cout_, b.g.data(),
                       static_cast<size_t>(cout_));
        }
    }
    // dcol = dy . W, then scatter back to the input grid
    Tensor dcol({positions, patch});
    ops().gemm_nn(dy.data(), w.w.data(), dcol.data(), positions, cout_, patch, false);
    Tensor dx({ctx.in_h, ctx.in_w, cin_});
    const float *src = dcol.data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int ky = 0; ky < ksize_; ++ky) {
                const int y = oy * stride_ - pad_ + ky;
                for (int kx = 0; kx < ksize_; ++kx) {
                    const int xx = ox * stride_ - pad_ + kx;
                    if (y >= 0 && y < ctx.in_h && xx >= 0 && xx < ctx.in_w) {
                        ops().axpy(1.0f, src, &dx.at(y, xx, 0), static_cast<size_t>(cin_));
                    }
                    src += cin_;
                }
            }
        }
    }
    return dx;
}

void Conv2d::collect(std::vector<Param *> &out) {
    out.push_back(&w);
    out.push_back(&b);
}

// ---------------------------------------------------------- LayerNorm ----

LayerNorm::LayerNorm(const std::string &name, int dim)
    : gamma(name + ".gamma", {dim}, false), beta(name + ".beta", {dim}, false), dim_(dim) {
    gamma.w.fill(1.0f);
}

Tensor LayerNorm::forward(const Tensor &x, Ctx *ctx) const {
    require(x.rank() == 2 && x.dim(1) == dim_, "LayerNorm input shape mismatch");
    const int n = x.dim(0);
    Tensor y({n, dim_});
    Tensor x_hat({n, dim_});
    Tensor rstd({n});
    for (int i = 0; i < n; ++i) {
        const float *row = x.data() + static_cast<size_t>(i) * dim_;
        double mean = 0.0;
        for (int j = 0; j < dim_; ++j) {
            mean += row[j];
        }
        mean /= dim_;
        double var = 0.0;
        for (int j = 0; j < dim_; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= dim_;
        const float r = static_cast<float>(1.0 / std::sqrt(var + kEps));
        rstd.at(i) = r;
        for (int j = 0; j < dim_; ++j) {
            const float xh = (row[j] - static_cast<float>(mean)) * r;
            x_hat.at(i, j) = xh;
            y.at(i, j) = xh * gamma.w.at(j) + beta.w.at(j);
        }
    }
    if (ctx) {
        ctx->x_hat = std::move(x_hat);
        ctx->rstd = std::move(rstd);
    }
    return y;
}

Tensor LayerNorm::backward(const Ctx &ctx, const Tensor &dy) {
    const int n = dy.dim(0);
    require(dy.rank() == 2 && dy.dim(1) == dim_, "LayerNorm backward shape mismatch");
    Tensor dx({n, dim_});
    for (int i = 0; i < n; ++i) {
        double sum_dg = 0.0, sum_dg_xh = 0.0;
        for (int j = 0; j < dim_; ++j) {
            const double dg = static_cast<double>(dy.at(i, j)) * gamma.w.at(j);
            sum_dg += dg;
            sum_dg_xh += dg * ctx.x_hat.at(i, j);
        }
        const double mean_dg = sum_dg / dim_;
        const double mean_dg_xh = sum_dg_xh / dim_;
        for (int j = 0; j < dim_; ++j) {
            const double dg = static_cast<double>(dy.at(i, j)) * gamma.w.at(j);
            dx.at(i, j) = static_cast<float>(ctx.rstd.at(i) *
                                             (dg - mean_dg - ctx.x_hat.at(i, j) * mean_dg_xh));
            if (gamma.trainable) {
                gamma.g.at(j) += dy.at(i, j) * ctx.x_hat.at(i, j);
            }
            if (beta.trainable) {
                beta.g.at(j) += dy.at(i, j);
            }
        }
    }
    return dx;
}

void LayerNorm::collect(std::vector<Param *> &out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

// --------------------------------------------------------------- Gelu ----

Tensor Gelu::forward(const Tensor &x, Ctx *ctx) {
    Tensor y(x.shape());
    ops().gelu_fwd(x.data(), y.data(), x.numel());
    if (ctx) {
        ctx->x = x;
    }
    return y;
}

Tensor Gelu::backward(const Ctx &ctx, const Tensor &dy) {
    require(dy.same_shape(ctx.x), "Gelu backward shape mismatch");
    Tensor dx(dy.shape());
    ops().gelu_bwd(ctx.x.data(), dy.data(), dx.data(), dx.numel());
    return dx;
}

// ------------------------------------------------- MultiHeadAttention ----

MultiHeadAttention::MultiHeadAttention(const std::string &name, int model_dim, int heads, Rng &rng)
    : wq(name + ".wq", model_dim, model_dim, rng), wk(name + ".wk", model_dim, model_dim, rng),
      wv(name + ".wv", model_dim, model_dim, rng), wo(name + ".wo", model_dim, model_dim, rng),
      model_dim_(model_dim), heads_(heads), head_dim_(model_dim / heads) {
    require(model_dim % heads == 0, "model_dim must divide evenly into heads");
}

Tensor MultiHeadAttention::forward(const Tensor &x, const std::vector<uint8_t> &mask,
                                   Ctx *ctx) const {
    require(x.rank() == 2 && x.dim(1) == model_dim_, "attention input shape mismatch");
    const int t = x.dim(0);
    require(mask.size() == static_cast<size_t>(t) * t, "mask size mismatch");

    Ctx local;
    Ctx &c = ctx ? *ctx : local;
    const Tensor q = wq.forward(x, ctx ? &c.cq : nullptr);
    const Tensor k = wk.forward(x, ctx ? &c.ck : nullptr);
    const Tensor v = wv.forward(x, ctx ? &c.cv : nullptr);

    // split [T, D] into per-head contiguous [H, T, dh]
    auto split = [&](const Tensor &m) {
        Tensor out({heads_, t, head_dim_});
        for (int h = 0; h < heads_; ++h) {
            for (int i = 0; i < t; ++i) {
                std::memcpy(&out.at(h, i, 0), &m.at(i, h * head_dim_),
                            sizeof(float) * static_cast<size_t>(head_dim_));
            }
        }
        return out;
    };
    Tensor qh = split(q), kh = split(k), vh = split(v);

    const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim_));
    Tensor probs({heads_, t, t});
    Tensor concat({t, model_dim_});
    for (int h = 0; h < heads_; ++h) {
        float *sc = &probs.at(h, 0, 0);
        ops().gemm_nt(&qh.at(h, 0, 0), &kh.at(h, 0, 0), sc, t, head_dim_, t, false);
        for (size_t i = 0; i < static_cast<size_t>(t) * t; ++i) {
            sc[i] = mask[i] ? sc[i] * scale : kMaskFloor;
        }
        ops().softmax_rows(sc, t, t);
        // force exact zeros on masked keys; the tiny residual mass from the
        // floored scores must not leak into the value mix
        for (size_t i = 0; i < static_cast<size_t>(t) * t; ++i) {
            if (!mask[i]) {
                sc[i] = 0.0f;
            }
        }
        Tensor out_h({t, head_dim_});
        ops().gemm_nn(sc, &vh.at(h, 0, 0), out_h.data(), t, t, head_dim_, false);
        for (int i = 0; i < t; ++i) {
            std::memcpy(&concat.at(i, h * head_dim_), &out_h.at(i, 0),
                        sizeof(float) * static_cast<size_t>(head_dim_));
        }
    }
    Tensor y = wo.forward(concat, ctx ? &c.co : nullptr);
    if (ctx) {
        c.qh = std::move(qh);
        c.kh = std::move(kh);
        c.vh = std::move(vh);
        c.probs = std::move(probs);
        c.concat = std::move(concat);
    }
    return y;
}

Tensor MultiHeadAttention::backward(const Ctx &ctx, const std::vector<uint8_t> &mask,
                                    const Tensor &dy) {
    const int t = dy.dim(0);
    const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim_));
    Tensor dconcat = wo.backward(ctx.co, dy);

    Tensor dq({t, model_dim_}), dk({t, model_dim_}), dv({t, model_dim_});
    Tensor dout_h({t, head_dim_});
    Tensor dprobs({t, t});
    Tensor dqh({t, head_dim_}), dkh({t, head_dim_}), dvh({t, head_dim_});
    for (int h = 0; h < heads_; ++h) {
        for (int i = 0; i < t; ++i) {
            std::memcpy(&dout_h.at(i, 0), &dconcat.at(i, h * head_dim_),
                        sizeof(float) * static_cast<size_t>(head_dim_));
        }
        const float *ph = &ctx.probs.at(h, 0, 0);
        // dP = dOut . V^T ; dV = P^T . dOut
        ops().gemm_nt(dout_h.data(), &ctx.vh.at(h, 0, 0), dprobs.data(), t, head_dim_, t, false);
        ops().gemm_tn(ph, dout_h.data(), dvh.data(), t, t, head_dim_, false);
        // softmax backward rowwise: ds = p .* (dp - <dp, p>); masked entries
        // have p == 0 so their ds vanishes automatically
        for (int i = 0; i < t; ++i) {
            const float *prow = ph + static_cast<size_t>(i) * t;
            float *drow = dprobs.data() + static_cast<size_t>(i) * t;
            const float inner = ops().dot(drow, prow, static_cast<size_t>(t));
            for (int j = 0; j < t; ++j) {
                drow[j] = prow[j] * (drow[j] - inner) * scale;
            }
        }
        // dQ = dS . K ; dK = dS^T . Q  (scale already folded into dS)
        ops().gemm_nn(dprobs.data(), &ctx.kh.at(h, 0, 0), dqh.data(), t, t, head_dim_, false);
        ops().gemm_tn(dprobs.data(), &ctx.qh.at(h, 0, 0), dkh.data(), t, t, head_dim_, false);
        for (int i = 0; i < t; ++i) {
            std::memcpy(&dq.at(i, h * head_dim_), &dqh.at(i, 0),
                        sizeof(float) * static_cast<size_t>(head_dim_));
            std::memcpy(&dk.at(i, h * head_dim_), &dkh.at(i, 0),
                        sizeof(float) * static_cast<size_t>(head_dim_));
            std::memcpy(&dv.at(i, h * head_dim_), &dvh.at(i, 0),
                        sizeof(float) * static_cast<size_t>(head_dim_));
        }
    }
    (void)mask;
    Tensor dx = wq.backward(ctx.cq, dq);
    Tensor dxk = wk.backward(ctx.ck, dk);
    Tensor dxv = wv.backward(ctx.cv, dv);
    ops().axpy(1.0f, dxk.data(), dx.data(), dx.numel());
    ops().axpy(1.0f, dxv.data(), dx.data(), dx.numel());
    return dx;
}

void MultiHeadAttention::collect(std::vector<Param *> &out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
}

// -------------------------------------------------------------- AdamW ----

AdamW::AdamW(std::vector<Param *> params, float lr, float beta1, float beta2, float eps,
             float weight_decay)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      weight_decay_(weight_decay) {}

void AdamW::zero_grad() {
    for (Param *p : params_) {
        p->g.fill(0.0f);
    }
}

float AdamW::clip_grad_norm(float max_norm) {
    double total = 0.0;
    for (Param *p : params_) {
        if (p->trainable) {
            total += ops().sumsq(p->g.data(), p->g.numel());
        }
    }
    const float norm = static_cast<float>(std::sqrt(total));
    if (norm > max_norm && norm > 0.0f) {
        const float s = max_norm / norm;
        for (Param *p : params_) {
            if (p->trainable) {
                for (size_t i = 0; i < p->g.numel(); ++i) {
                    p->g.data()[i] *= s;
                }
            }
        }
    }
    return norm;
}

void AdamW::step() {
    ++t_;
    const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
    for (Param *p : params_) {
        if (!p->trainable) {
            continue;
        }
        const float wd = p->decay ? weight_decay_ : 0.0f;
        ops().adamw_step(p->w.data(), p->m.data(), p->v.data(), p->g.data(), p->w.numel(), lr_,
                         beta1_, beta2_, eps_, wd, bc1, bc2);
    }
}

// ---------------------------------------------------------- accounting ----

size_t param_count(const std::vector<Param *> &params) {
    size_t n = 0;
    for (const Param *p : params) {
        n += p->w.numel();
    }
    return n;
}

size_t trainable_param_count(const std::vector<Param *> &params) {
    size_t n = 0;
    for (const Param *p : params) {
        if (p->trainable) {
            n += p->w.numel();
        }
    }
    return n;
}

uint64_t param_checksum(const std::vector<Param *> &params) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const Param *p : params) {
        h = fnv1a64(p->w.data(), p->w.numel() * sizeof(float), h);
    }
    return h;
}

} // namespace onescale::nn

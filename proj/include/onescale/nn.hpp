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
//
// Minimal trainable-layer library with explicit forward/backward passes.
// Forward passes are const and write activations needed by the backward pass
// into caller-provided Ctx objects, so concurrent forwards on distinct inputs
// are safe; backward passes accumulate into Param gradients and are meant for
// the single-writer training loops.

#pragma once

#include "onescale/rng.hpp"
#include "onescale/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace onescale::nn {

// A named trainable tensor with its gradient and Adam moment buffers.
struct Param {
    std::string name;
    Tensor w, g, m, v;
    bool trainable = true;
    bool decay = true; // weight decay applies (matrices yes, biases/norms no)

    Param() = default;
    Param(std::string param_name, const std::vector<int> &shape, bool apply_decay);
};

// y = x . W^T + b with an optional low-rank adapter path
// y += (alpha/rank) . (x . down) . up, the "delta = down*up" convention with
// the up factor zero-initialized so a fresh adapter is an exact identity.
class Linear {
  public:
    Linear() = default; // empty layer, to be assigned before use
    Linear(const std::string &name, int in_dim, int out_dim, Rng &rng, bool bias = true);

    struct Ctx {
        Tensor x;   // [n, in]
        Tensor low; // [n, rank] adapter intermediate, when adapter attached
    };

    Tensor forward(const Tensor &x, Ctx *ctx) const; // x: [n, in] -> [n, out]
    Tensor backward(const Ctx &ctx, const Tensor &dy);

    void add_adapter(int rank, float alpha, Rng &rng);
    bool has_adapter() const { return adapter_rank_ > 0; }

    void collect(std::vector<Param *> &out);

    Param w; // [out, in]
    Param b; // [out] (empty when bias disabled)
    Param adapter_down; // [in, rank]
    Param adapter_up;   // [rank, out], zero-initialized

    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }

  private:
    int in_dim_ = 0, out_dim_ = 0;
    bool has_bias_ = true;
    int adapter_rank_ = 0;
    float adapter_scale_ = 0.0f;
};

// 2-D convolution over [h, w, cin] images (HWC), zero padding, via im2col.
class Conv2d {
  public:
    Conv2d() = default; // empty layer, to be assigned before use
    Conv2d(const std::string &name, int cin, int cout, int ksize, int stride, int pad, Rng &rng);

    struct Ctx {
        Tensor col; // [oh*ow, k*k*cin]
        int in_h = 0, in_w = 0;
    };

    Tensor forward(const Tensor &x, Ctx *ctx) const; // [h,w,cin] -> [oh,ow,cout]
    Tensor backward(const Ctx &ctx, const Tensor &dy);

    void collect(std::vector<Param *> &out);
    int out_size(int in) const { return (in + 2 * pad_ - ksize_) / stride_ + 1; }

    Param w; // [cout, k*k*cin]
    Param b; // [cout]

  private:
    Tensor im2col(const Tensor &x) const;
    int cin_ = 0, cout_ = 0, ksize_ = 0, stride_ = 0, pad_ = 0;
};

// Layer normalization over the last dimension of [n, d].
class LayerNorm {
  public:
    LayerNorm() = default; // empty layer, to be assigned before use
    LayerNorm(const std::string &name, int dim);

    struct Ctx {
        Tensor x_hat; // [n, d] normalized input
        Tensor rstd;  // [n]
    };

    Tensor forward(const Tensor &x, Ctx *ctx) const;
    Tensor backward(const Ctx &ctx, const Tensor &dy);

    void collect(std::vector<Param *> &out);

    Param gamma, beta;

  private:
    int dim_ = 0;
    static constexpr float kEps = 1e-5f;
};

// Elementwise tanh-approximation GELU.
struct Gelu {
    struct Ctx {
        Tensor x;
    };
    static Tensor forward(const Tensor &x, Ctx *ctx);
    static Tensor backward(const Ctx &ctx, const Tensor &dy);
};

// Multi-head self-attention over [T, model_dim] with a boolean allow-mask.
// Masked scores are floored before the softmax and the corresponding
// probabilities re-zeroed afterwards, so disallowed keys contribute exactly
// 0.0f to the value mix.
class MultiHeadAttention {
  public:
    MultiHeadAttention(const std::string &name, int model_dim, int heads, Rng &rng);

    struct Ctx {
        Linear::Ctx cq, ck, cv, co;
        Tensor qh, kh, vh; // [heads, T, head_dim]
        Tensor probs;      // [heads, T, T]
        Tensor concat;     // [T, model_dim]
    };

    // mask: row-major T*T bytes, nonzero = attention allowed.
    Tensor forward(const Tensor &x, const std::vector<uint8_t> &mask, Ctx *ctx) const;
    Tensor backward(const Ctx &ctx, const std::vector<uint8_t> &mask, const Tensor &dy);

    void collect(std::vector<Param *> &out);

    Linear wq, wk, wv, wo;

  private:
    int model_dim_, heads_, head_dim_;
};

// Decoupled-weight-decay Adam over a fixed parameter set.
class AdamW {
  public:
    AdamW(std::vector<Param *> params, float lr, float beta1 = 0.9f, float beta2 = 0.999f,
          float eps = 1e-8f, float weight_decay = 1e-2f);

    void zero_grad();
    void step();
    // Scales all gradients so their global L2 norm is at most max_norm;
    // returns the pre-clip norm.
    float clip_grad_norm(float max_norm);

    void set_lr(float lr) { lr_ = lr; }
    int64_t steps_taken() const { return t_; }

  private:
    std::vector<Param *> params_;
    float lr_, beta1_, beta2_, eps_, weight_decay_;
    int64_t t_ = 0;
};

// Counts for parameter accounting (trainable_fraction etc.).
size_t param_count(const std::vector<Param *> &params);
size_t trainable_param_count(const std::vector<Param *> &params);

// FNV-1a over all parameter bytes in collection order; the freeze checksum.
uint64_t param_checksum(const std::vector<Param *> &params);

} // namespace onescale::nn

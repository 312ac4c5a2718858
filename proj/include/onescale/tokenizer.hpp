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

#pragma once

#include "onescale/checkpoint.hpp"
#include "onescale/nn.hpp"
#include "onescale/rng.hpp"
#include "onescale/tensor.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace onescale {

// Ordered list of token-map resolutions (h_k, w_k), coarse to fine.
struct ScaleSchedule {
    std::vector<std::pair<int, int>> scales;

    int count() const { return static_cast<int>(scales.size()); }
    int total_positions() const;
    int final_h() const { return scales.back().first; }
    int final_w() const { return scales.back().second; }

    // Enforces: strictly increasing areas, monotone non-decreasing dims.
    void validate() const;

    // "1x1,2x2,4x4" <-> schedule
    static ScaleSchedule parse(const std::string &text);
    std::string to_string() const;

    bool operator==(const ScaleSchedule &other) const { return scales == other.scales; }
};

// K integer token maps following a schedule; maps[k] is row-major h_k * w_k.
struct TokenPyramid {
    std::vector<std::vector<int>> maps;

    void validate(const ScaleSchedule &schedule, int vocab) const;
    bool operator==(const TokenPyramid &other) const { return maps == other.maps; }
};

// V learned embedding vectors of dimension d, shared by every scale.
struct Codebook {
    Tensor entries; // [V, d]

    int vocab() const { return entries.dim(0); }
    int dim() const { return entries.dim(1); }
};

// --- schedule-level resampling conventions, shared by every consumer -------

// Residual quantization: area-downsample the running residual to each scale,
// assign nearest codebook entries (lowest index on ties), bilinear-upsample
// the dequantized map onto the final grid, accumulate. Returns tokens and the
// final accumulator (the cumulative reconstruction).
std::pair<TokenPyramid, Tensor> quantize_pyramid(const Tensor &features,
                                                 const ScaleSchedule &schedule,
                                                 const Codebook &codebook);

// Sum over scales of bilinear-upsampled codebook lookups; bit-exact inverse
// of the accumulator built by quantize_pyramid.
Tensor dequantize_pyramid(const TokenPyramid &tokens, const ScaleSchedule &schedule,
                          const Codebook &codebook);

// Codebook rows of one token map as an [h, w, d] feature map.
Tensor lookup_tokens(const std::vector<int> &map, int h, int w, const Codebook &codebook);

// The shared interpolation path underneath dequantize_pyramid: sums
// per-scale [h_k, w_k, d] feature maps bilinear-upsampled to the final grid.
Tensor accumulate_feature_maps(const std::vector<Tensor> &per_scale, int final_h, int final_w);

// Adjoint of accumulate_feature_maps for gradient flow: splits a final-grid
// gradient into per-scale gradients.
std::vector<Tensor> accumulate_feature_maps_adjoint(const Tensor &grad_final,
                                                    const ScaleSchedule &schedule);

// --------------------------------------------------------------------------

struct TokenizerConfig {
    int image_size = 64;
    int channels = 3;
    int latent_dim = 32; // d
    int vocab = 256;     // V
    int base_width = 24; // conv widths base/2x/4x
    ScaleSchedule schedule = ScaleSchedule::parse("1x1,2x2,4x4,8x8,16x16");

    int factor() const { return 4; } // two stride-2 encoder stages
    void validate() const;
};

struct TokenizerTrainConfig {
    int steps = 5000;
    int batch = 8;
    float lr = 1e-3f;
    float commitment = 0.25f;
    float ema_decay = 0.99f;
    float dead_code_threshold = 1e-3f;
    float grad_clip = 1.0f;
    int log_every = 100;
    uint64_t seed = 0;
};

struct TrainStats {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int64_t steps = 0;
};

// Convolutional encoder/decoder pair plus the shared codebook.
class Tokenizer {
  public:
    Tokenizer(const TokenizerConfig &cfg, uint64_t seed);

    // Pure inference ops (thread-safe on distinct inputs given fixed params).
    Tensor encode_features(const Tensor &image) const;
    Tensor decode_image(const Tensor &features) const; // clamped to [0,1]
    TokenPyramid tokenize(const Tensor &image) const;
    Tensor detokenize(const TokenPyramid &tokens) const;
    std::pair<TokenPyramid, Tensor> quantize(const Tensor &features) const;
    Tensor dequantize(const TokenPyramid &tokens) const;

    const TokenizerConfig &config() const { return cfg_; }
    const Codebook &codebook() const { return codebook_; }
    Codebook &mutable_codebook() { return codebook_; }

    std::vector<nn::Param *> params(); // encoder + decoder (codebook is EMA-learned)

    // Training-path forwards with explicit contexts (unclamped decode so
    // gradients never die at the [0,1] boundary).
    struct EncCtx;
    struct DecCtx;
    Tensor encode_train(const Tensor &image, EncCtx &ctx) const;
    Tensor encoder_backward(const EncCtx &ctx, const Tensor &dfeatures);
    Tensor decode_train(const Tensor &features, DecCtx &ctx) const;
    Tensor decoder_backward(const DecCtx &ctx, const Tensor &dimage);

    void save(const std::string &path, uint64_t step, const std::string &config_text,
              uint64_t config_hash) const;
    static Tokenizer load(const std::string &path);
    // Loads and rejects checkpoints whose schedule differs from `expected`.
    static Tokenizer load(const std::string &path, const ScaleSchedule &expected);

    // EMA codebook state, exposed for the trainer.
    Tensor ema_counts; // [V]
    Tensor ema_sums;   // [V, d]

  private:
    TokenizerConfig cfg_;
    Codebook codebook_;

    nn::Conv2d e1_, e2_, e3_, e4_, e5_, e_head_;
    nn::Conv2d d1_, d2_, d_r1_, d3_, d_r2_, d4_, d_out_;

    Tensor decode_raw(const Tensor &features, DecCtx *ctx) const;
};

struct Tokenizer::EncCtx {
    nn::Conv2d::Ctx c1, c2, c3, c4, c5, chead;
    nn::Gelu::Ctx g1, g2, g3, g4, g5;
};

struct Tokenizer::DecCtx {
    nn::Conv2d::Ctx c1, c2, cr1, c3, cr2, c4, cout;
    nn::Gelu::Ctx g1, g2, g3, g4, g5, g6;
};

// Trains encoder, decoder, and EMA codebook on reconstruction + commitment
// loss with straight-through gradients. Writes one loss record per step to
// log_path when non-empty.
std::pair<Tokenizer, TrainStats>
train_tokenizer(const std::vector<Tensor> &images, const TokenizerConfig &cfg,
                const TokenizerTrainConfig &train_cfg, const std::string &log_path = "",
                const std::function<void(int64_t, double)> &progress = nullptr);

} // namespace onescale

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
#include "onescale/tokenizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace onescale {

// T x T boolean attention mask over the concatenated pyramid sequence,
// T = sum of h_k * w_k. Row = query position, column = key position.
struct AttentionMask {
    int t = 0;
    std::vector<uint8_t> allow; // row-major, nonzero = attention permitted

    bool at(int i, int j) const { return allow[static_cast<size_t>(i) * t + j] != 0; }
};

// block_causal: allow[i][j] iff scale(j) <= scale(i) (queries see their own
// scale and every coarser one). full: everything attends to everything.
AttentionMask build_mask(const ScaleSchedule &schedule, MaskMode mode);

// Per-scale unnormalized log-probabilities, each tensor [h_k, w_k, V].
using LogitsPyramid = std::vector<Tensor>;

struct BackboneConfig {
    int layers = 4;
    int model_dim = 128;
    int heads = 4;
    int ff_mult = 4;   // feed-forward width multiplier
    int cond_dim = 0;  // conditioning vector size; 0 disables the hook
    int vocab = 256;
    int latent_dim = 32; // codebook dimension, feeds the input projection
    ScaleSchedule schedule = ScaleSchedule::parse("1x1,2x2,4x4,8x8,16x16");

    void validate() const;
};

// The shared pyramid-sequence transformer. One definition serves both roles;
// the constructor flag picks the mask and the input-embedding path:
//   block_causal (teacher): scale-k inputs embed the cumulative dequantized
//     reconstruction of scales < k (resampled to h_k x w_k); scale-1 uses a
//     learned start embedding.
//   full (student): every input embeds the codebook vector of that position's
//     own token; one pass yields logits for all positions at once.
// A condition vector, when configured and provided, is projected and added
// to the scale-1 positions in both paths.
class Backbone {
  public:
    Backbone(const BackboneConfig &cfg, const Codebook &codebook, MaskMode mode, uint64_t seed);

    LogitsPyramid teacher_forward(const TokenPyramid &hq_tokens,
                                  const Tensor *condition = nullptr) const;
    LogitsPyramid student_forward(const TokenPyramid &lq_tokens,
                                  const Tensor *condition = nullptr) const;

    // Training-path forward with saved activations. Backward accumulates
    // parameter gradients and returns the condition gradient ([1, cond_dim],
    // empty when no condition was supplied).
    struct FwdCtx;
    LogitsPyramid forward_train(const TokenPyramid &tokens, const Tensor *condition,
                                FwdCtx &ctx) const;
    Tensor backward(const FwdCtx &ctx, const LogitsPyramid &dlogits);

    const BackboneConfig &config() const { return cfg_; }
    MaskMode mode() const { return mode_; }
    const Codebook &codebook() const { return codebook_; }
    const AttentionMask &mask() const { return mask_; }

    std::vector<nn::Param *> params();

    // Marks every current parameter non-trainable (call before add_adapters).
    void freeze_base();
    // Attaches rank-r adapters to the q/k/v/o projections of every layer.
    void add_adapters(int rank, float alpha, Rng &rng);
    bool has_adapters() const { return adapter_rank_ > 0; }
    int adapter_rank() const { return adapter_rank_; }

    // Same weights, different mask/input path; adapters are not carried over.
    Backbone clone_with_mode(MaskMode mode) const;

    // Backbone evaluations since construction (restore/sample accounting).
    uint64_t forward_count() const { return forward_count_; }

    // Checkpoint plumbing. put_blobs writes config metadata, the codebook
    // copy, and every parameter; from_checkpoint reconstructs (re-attaching
    // adapters when the metadata says so).
    void put_blobs(Checkpoint &ckpt) const;
    static Backbone from_checkpoint(const Checkpoint &ckpt);
    void save(const std::string &path, CkptKind kind, uint64_t step,
              const std::string &config_text, uint64_t config_hash) const;
    static Backbone load(const std::string &path);
    static Backbone load(const std::string &path, CkptKind want);

  private:
    struct Block {
        nn::LayerNorm ln1, ln2;
        nn::MultiHeadAttention attn;
        nn::Linear ff1, ff2;

        Block(int index, int model_dim, int heads, int ff_mult, Rng &rng);
    };

    BackboneConfig cfg_;
    Codebook codebook_;
    MaskMode mode_;
    AttentionMask mask_;

    nn::Linear in_proj_;             // latent_dim -> model_dim
    nn::Linear cond_proj_;           // cond_dim -> model_dim (when cond_dim > 0)
    nn::Param start_emb_;            // [1, model_dim]
    nn::Param scale_emb_;            // [K, model_dim]
    std::vector<nn::Param> pos_emb_; // per scale [h_k * w_k, model_dim]
    std::vector<Block> blocks_;
    nn::LayerNorm ln_f_;
    nn::Linear head_; // model_dim -> vocab

    int adapter_rank_ = 0;
    float adapter_alpha_ = 0.0f;
    mutable uint64_t forward_count_ = 0;

    LogitsPyramid run(const TokenPyramid &tokens, const Tensor *condition, FwdCtx *ctx) const;
};

struct Backbone::FwdCtx {
    bool student = false;
    bool has_cond = false;
    int first_proj_row = 0; // teacher skips the start-embedding positions
    nn::Linear::Ctx in_proj_ctx, cond_ctx;
    struct BlockCtx {
        nn::LayerNorm::Ctx ln1, ln2;
        nn::MultiHeadAttention::Ctx attn;
        nn::Linear::Ctx ff1, ff2;
        nn::Gelu::Ctx gelu;
    };
    std::vector<BlockCtx> blocks;
    nn::LayerNorm::Ctx ln_f;
    nn::Linear::Ctx head;
};

struct TransformerTrainConfig {
    int steps = 5000;
    int batch = 4;
    float lr = 3e-4f;
    float grad_clip = 1.0f;
    int log_every = 100;
    uint64_t seed = 0;
};

// Mean cross-entropy (nats) of teacher_forward logits against the pyramids'
// own tokens, averaged over every position. The uniform predictor scores
// ln(V); anything learned must land below that.
double teacher_cross_entropy(const Backbone &teacher, const std::vector<TokenPyramid> &pyramids);

// Next-scale teacher training on tokenized images. Writes one record per
// step to log_path when non-empty.
std::pair<Backbone, TrainStats>
train_teacher(const std::vector<TokenPyramid> &corpus, const BackboneConfig &cfg,
              const Codebook &codebook, const TransformerTrainConfig &train_cfg,
              const std::string &log_path = "",
              const std::function<void(int64_t, double)> &progress = nullptr);

} // namespace onescale

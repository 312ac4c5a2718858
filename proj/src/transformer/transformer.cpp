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

#include "onescale/transformer.hpp"

#include "onescale/common.hpp"
#include "onescale/kernels.hpp"
#include "onescale/resize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>
#include <utility>

namespace onescale {

namespace {

// Sequence index -> scale index for the concatenated pyramid layout.
std::vector<int> scale_of_position(const ScaleSchedule &schedule) {
    std::vector<int> scale_of;
    scale_of.reserve(static_cast<size_t>(schedule.total_positions()));
    for (int k = 0; k < schedule.count(); ++k) {
        const int n = schedule.scales[k].first * schedule.scales[k].second;
        scale_of.insert(scale_of.end(), static_cast<size_t>(n), k);
    }
    return scale_of;
}

// -log softmax(logits)[target], computed in double precision.
double row_nll(const float *logits, int n, int target) {
    double mx = logits[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, static_cast<double>(logits[j]));
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(logits[j] - mx);
    return std::log(z) + mx - logits[target];
}

} // namespace

AttentionMask build_mask(const ScaleSchedule &schedule, MaskMode mode) {
    schedule.validate();
    const int t = schedule.total_positions();
    AttentionMask mask;
    mask.t = t;
    mask.allow.assign(static_cast<size_t>(t) * static_cast<size_t>(t), 1);
    if (mode == MaskMode::block_causal) {
        const std::vector<int> scale_of = scale_of_position(schedule);
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < t; ++j)
                mask.allow[static_cast<size_t>(i) * t + j] = scale_of[j] <= scale_of[i] ? 1 : 0;
    }
    return mask;
}

void BackboneConfig::validate() const {
    require(layers >= 1, "backbone needs at least one layer");
    require(model_dim >= 1 && heads >= 1, "model_dim and heads must be positive");
    require(model_dim % heads == 0, "model_dim must divide evenly into heads");
    require(ff_mult >= 1, "ff_mult must be positive");
    require(vocab >= 2, "vocab must be at least 2");
    require(latent_dim >= 1, "latent_dim must be positive");
    require(cond_dim >= 0, "cond_dim must be non-negative");
    schedule.validate();
}

Backbone::Block::Block(int index, int model_dim, int heads, int ff_mult, Rng &rng)
    : ln1("tf.b" + std::to_string(index) + ".ln1", model_dim),
      ln2("tf.b" + std::to_string(index) + ".ln2", model_dim),
      attn("tf.b" + std::to_string(index) + ".attn", model_dim, heads, rng),
      ff1("tf.b" + std::to_string(index) + ".ff1", model_dim, model_dim * ff_mult, rng),
      ff2("tf.b" + std::to_string(index) + ".ff2", model_dim * ff_mult, model_dim, rng) {}

Backbone::Backbone(const BackboneConfig &cfg, const Codebook &codebook, MaskMode mode,
                   uint64_t seed)
    : cfg_(cfg), codebook_(codebook), mode_(mode) {
    cfg_.validate();
    require(codebook_.entries.rank() == 2, "codebook entries must be [V, d]");
    require(codebook_.vocab() == cfg_.vocab && codebook_.dim() == cfg_.latent_dim,
            "codebook shape does not match the backbone config");
    mask_ = build_mask(cfg_.schedule, mode_);

    Rng rng = Rng::derive(seed, "backbone-init");
    const int dm = cfg_.model_dim;
    in_proj_ = nn::Linear("tf.in_proj", cfg_.latent_dim, dm, rng);
    if (cfg_.cond_dim > 0) cond_proj_ = nn::Linear("tf.cond_proj", cfg_.cond_dim, dm, rng);

    auto table = [&rng](const std::string &name, const std::vector<int> &shape) {
        nn::Param p(name, shape, /*apply_decay=*/false);
        for (size_t i = 0; i < p.w.numel(); ++i)
            p.w[i] = static_cast<float>(rng.normal(0.0, 0.02));
        return p;
    };
    start_emb_ = table("tf.start", {1, dm});
    scale_emb_ = table("tf.scale", {cfg_.schedule.count(), dm});
    for (int k = 0; k < cfg_.schedule.count(); ++k) {
        const auto [h, w] = cfg_.schedule.scales[k];
        pos_emb_.push_back(table("tf.pos" + std::to_string(k), {h * w, dm}));
    }
    blocks_.reserve(static_cast<size_t>(cfg_.layers));
    for (int i = 0; i < cfg_.layers; ++i) blocks_.emplace_back(i, dm, cfg_.heads, cfg_.ff_mult, rng);
    ln_f_ = nn::LayerNorm("tf.ln_f", dm);
    head_ = nn::Linear("tf.head", dm, cfg_.vocab, rng);
}

LogitsPyramid Backbone::run(const TokenPyramid &tokens, const Tensor *condition,
                            FwdCtx *ctx) const {
    tokens.validate(cfg_.schedule, cfg_.vocab);
    if (condition != nullptr) {
        require(cfg_.cond_dim > 0, "this backbone was built without a conditioning input");
        require(condition->rank() == 2 && condition->dim(0) == 1 &&
                    condition->dim(1) == cfg_.cond_dim,
                "condition must be [1, cond_dim]");
    }
    const ScaleSchedule &sched = cfg_.schedule;
    const int scale_count = sched.count();
    const int t = sched.total_positions();
    const int dm = cfg_.model_dim;
    const int dl = cfg_.latent_dim;
    const int n0 = sched.scales[0].first * sched.scales[0].second;
    const bool student = mode_ == MaskMode::full;
    const int first_proj = student ? 0 : n0;

    // Token-derived inputs for every projected position, [t - first_proj, dl].
    Tensor proj_in({t - first_proj, dl});
    if (student) {
        // Every position embeds the codebook vector of its own token.
        int row = 0;
        for (int k = 0; k < scale_count; ++k) {
            const auto [h, w] = sched.scales[k];
            const Tensor emb = lookup_tokens(tokens.maps[k], h, w, codebook_);
            std::memcpy(proj_in.data() + static_cast<size_t>(row) * dl, emb.data(),
                        emb.numel() * sizeof(float));
            row += h * w;
        }
    } else {
        // Scale k reads the cumulative reconstruction of scales < k, resampled
        // to its own grid. The running accumulation follows the exact quantizer
        // convention, so teacher inputs match what the tokenizer would rebuild.
        std::vector<Tensor> prefix;
        int row = 0;
        for (int k = 1; k < scale_count; ++k) {
            const auto [ph, pw] = sched.scales[k - 1];
            prefix.push_back(lookup_tokens(tokens.maps[k - 1], ph, pw, codebook_));
            const Tensor acc = accumulate_feature_maps(prefix, sched.final_h(), sched.final_w());
            const auto [h, w] = sched.scales[k];
            const Tensor input = resize_bilinear(acc, h, w);
            std::memcpy(proj_in.data() + static_cast<size_t>(row) * dl, input.data(),
                        input.numel() * sizeof(float));
            row += h * w;
        }
    }
    const Tensor proj = in_proj_.forward(proj_in, ctx != nullptr ? &ctx->in_proj_ctx : nullptr);

    Tensor x({t, dm});
    if (!student)
        for (int i = 0; i < n0; ++i)
            std::memcpy(x.data() + static_cast<size_t>(i) * dm, start_emb_.w.data(),
                        static_cast<size_t>(dm) * sizeof(float));
    std::memcpy(x.data() + static_cast<size_t>(first_proj) * dm, proj.data(),
                proj.numel() * sizeof(float));

    int row = 0;
    for (int k = 0; k < scale_count; ++k) {
        const auto [h, w] = sched.scales[k];
        const float *se = scale_emb_.w.data() + static_cast<size_t>(k) * dm;
        for (int i = 0; i < h * w; ++i, ++row) {
            float *xr = x.data() + static_cast<size_t>(row) * dm;
            const float *pe = pos_emb_[k].w.data() + static_cast<size_t>(i) * dm;
            for (int j = 0; j < dm; ++j) xr[j] += se[j] + pe[j];
        }
    }
    if (condition != nullptr) {
        const Tensor cv = cond_proj_.forward(*condition, ctx != nullptr ? &ctx->cond_ctx : nullptr);
        for (int i = 0; i < n0; ++i)
            kernels::ops().axpy(1.0f, cv.data(), x.data() + static_cast<size_t>(i) * dm,
                                static_cast<size_t>(dm));
    }

    if (ctx != nullptr) {
        ctx->student = student;
        ctx->has_cond = condition != nullptr;
        ctx->first_proj_row = first_proj;
        ctx->blocks.resize(blocks_.size());
    }
    for (size_t b = 0; b < blocks_.size(); ++b) {
        const Block &blk = blocks_[b];
        FwdCtx::BlockCtx *bc = ctx != nullptr ? &ctx->blocks[b] : nullptr;
        const Tensor a = blk.attn.forward(blk.ln1.forward(x, bc != nullptr ? &bc->ln1 : nullptr),
                                          mask_.allow, bc != nullptr ? &bc->attn : nullptr);
        kernels::ops().axpy(1.0f, a.data(), x.data(), x.numel());
        const Tensor f = blk.ff2.forward(
            nn::Gelu::forward(blk.ff1.forward(blk.ln2.forward(x, bc != nullptr ? &bc->ln2 : nullptr),
                                              bc != nullptr ? &bc->ff1 : nullptr),
                              bc != nullptr ? &bc->gelu : nullptr),
            bc != nullptr ? &bc->ff2 : nullptr);
        kernels::ops().axpy(1.0f, f.data(), x.data(), x.numel());
    }
    const Tensor hidden = ln_f_.forward(x, ctx != nullptr ? &ctx->ln_f : nullptr);
    const Tensor logits = head_.forward(hidden, ctx != nullptr ? &ctx->head : nullptr);
    ++forward_count_;

    LogitsPyramid out;
    out.reserve(static_cast<size_t>(scale_count));
    row = 0;
    for (int k = 0; k < scale_count; ++k) {
        const auto [h, w] = sched.scales[k];
        Tensor lk({h, w, cfg_.vocab});
        std::memcpy(lk.data(), logits.data() + static_cast<size_t>(row) * cfg_.vocab,
                    lk.numel() * sizeof(float));
        out.push_back(std::move(lk));
        row += h * w;
    }
    return out;
}

LogitsPyramid Backbone::teacher_forward(const TokenPyramid &hq_tokens,
                                        const Tensor *condition) const {
    require(mode_ == MaskMode::block_causal, "teacher_forward needs a block-causal backbone");
    return run(hq_tokens, condition, nullptr);
}

LogitsPyramid Backbone::student_forward(const TokenPyramid &lq_tokens,
                                        const Tensor *condition) const {
    require(mode_ == MaskMode::full, "student_forward needs a full-attention backbone");
    return run(lq_tokens, condition, nullptr);
}

LogitsPyramid Backbone::forward_train(const TokenPyramid &tokens, const Tensor *condition,
                                      FwdCtx &ctx) const {
    return run(tokens, condition, &ctx);
}

Tensor Backbone::backward(const FwdCtx &ctx, const LogitsPyramid &dlogits) {
    const ScaleSchedule &sched = cfg_.schedule;
    const int t = sched.total_positions();
    const int dm = cfg_.model_dim;
    require(static_cast<int>(dlogits.size()) == sched.count(),
            "dlogits must hold one tensor per scale");
    Tensor dl({t, cfg_.vocab});
    int row = 0;
    for (int k = 0; k < sched.count(); ++k) {
        const auto [h, w] = sched.scales[k];
        require(dlogits[k].rank() == 3 && dlogits[k].dim(0) == h && dlogits[k].dim(1) == w &&
                    dlogits[k].dim(2) == cfg_.vocab,
                "dlogits entry has the wrong shape");
        std::memcpy(dl.data() + static_cast<size_t>(row) * cfg_.vocab, dlogits[k].data(),
                    dlogits[k].numel() * sizeof(float));
        row += h * w;
    }

    Tensor dx = head_.backward(ctx.head, dl);
    dx = ln_f_.backward(ctx.ln_f, dx);
    for (size_t b = blocks_.size(); b-- > 0;) {
        Block &blk = blocks_[b];
        const FwdCtx::BlockCtx &bc = ctx.blocks[b];
        Tensor dff = blk.ff2.backward(bc.ff2, dx);
        dff = nn::Gelu::backward(bc.gelu, dff);
        dff = blk.ff1.backward(bc.ff1, dff);
        dff = blk.ln2.backward(bc.ln2, dff);
        kernels::ops().axpy(1.0f, dff.data(), dx.data(), dx.numel());
        Tensor da = blk.attn.backward(bc.attn, mask_.allow, dx);
        da = blk.ln1.backward(bc.ln1, da);
        kernels::ops().axpy(1.0f, da.data(), dx.data(), dx.numel());
    }

    // The additive embedding tables pick their gradient slices straight off dx.
    row = 0;
    for (int k = 0; k < sched.count(); ++k) {
        const auto [h, w] = sched.scales[k];
        float *sg = scale_emb_.g.data() + static_cast<size_t>(k) * dm;
        for (int i = 0; i < h * w; ++i, ++row) {
            const float *dr = dx.data() + static_cast<size_t>(row) * dm;
            kernels::ops().axpy(1.0f, dr, pos_emb_[k].g.data() + static_cast<size_t>(i) * dm,
                                static_cast<size_t>(dm));
            kernels::ops().axpy(1.0f, dr, sg, static_cast<size_t>(dm));
        }
    }
    const int n0 = sched.scales[0].first * sched.scales[0].second;
    if (!ctx.student)
        for (int i = 0; i < n0; ++i)
            kernels::ops().axpy(1.0f, dx.data() + static_cast<size_t>(i) * dm, start_emb_.g.data(),
                                static_cast<size_t>(dm));

    Tensor dcondition;
    if (ctx.has_cond) {
        Tensor dcv({1, dm});
        for (int i = 0; i < n0; ++i)
            kernels::ops().axpy(1.0f, dx.data() + static_cast<size_t>(i) * dm, dcv.data(),
                                static_cast<size_t>(dm));
        dcondition = cond_proj_.backward(ctx.cond_ctx, dcv);
    }

    const int nproj = t - ctx.first_proj_row;
    Tensor dproj({nproj, dm});
    std::memcpy(dproj.data(), dx.data() + static_cast<size_t>(ctx.first_proj_row) * dm,
                dproj.numel() * sizeof(float));
    in_proj_.backward(ctx.in_proj_ctx, dproj); // token/reconstruction inputs are leaves here
    return dcondition;
}

std::vector<nn::Param *> Backbone::params() {
    std::vector<nn::Param *> out;
    in_proj_.collect(out);
    if (cfg_.cond_dim > 0) cond_proj_.collect(out);
    out.push_back(&start_emb_);
    out.push_back(&scale_emb_);
    for (nn::Param &p : pos_emb_) out.push_back(&p);
    for (Block &blk : blocks_) {
        blk.ln1.collect(out);
        blk.attn.collect(out);
        blk.ln2.collect(out);
        blk.ff1.collect(out);
        blk.ff2.collect(out);
    }
    ln_f_.collect(out);
    head_.collect(out);
    return out;
}

void Backbone::freeze_base() {
    for (nn::Param *p : params()) p->trainable = false;
}

void Backbone::add_adapters(int rank, float alpha, Rng &rng) {
    require(rank >= 1, "adapter rank must be positive");
    require(!has_adapters(), "adapters are already attached");
    for (Block &blk : blocks_) {
        blk.attn.wq.add_adapter(rank, alpha, rng);
        blk.attn.wk.add_adapter(rank, alpha, rng);
        blk.attn.wv.add_adapter(rank, alpha, rng);
        blk.attn.wo.add_adapter(rank, alpha, rng);
    }
    adapter_rank_ = rank;
    adapter_alpha_ = alpha;
}

Backbone Backbone::clone_with_mode(MaskMode mode) const {
    Backbone out(cfg_, codebook_, mode, 0);
    // The fresh copy carries no adapters, so base parameters pair up by name.
    std::unordered_map<std::string, const Tensor *> src;
    for (const nn::Param *p : const_cast<Backbone *>(this)->params()) // read-only traversal
        src[p->name] = &p->w;
    for (nn::Param *p : out.params()) {
        auto it = src.find(p->name);
        require(it != src.end(), "clone source is missing parameter: " + p->name);
        p->w = *it->second;
    }
    return out;
}

void Backbone::put_blobs(Checkpoint &ckpt) const {
    Tensor meta({7});
    meta[0] = static_cast<float>(cfg_.layers);
    meta[1] = static_cast<float>(cfg_.model_dim);
    meta[2] = static_cast<float>(cfg_.heads);
    meta[3] = static_cast<float>(cfg_.ff_mult);
    meta[4] = static_cast<float>(cfg_.cond_dim);
    meta[5] = static_cast<float>(cfg_.vocab);
    meta[6] = static_cast<float>(cfg_.latent_dim);
    ckpt.add("meta.dims", meta);
    Tensor sched({cfg_.schedule.count(), 2});
    for (int k = 0; k < cfg_.schedule.count(); ++k) {
        sched.at(k, 0) = static_cast<float>(cfg_.schedule.scales[k].first);
        sched.at(k, 1) = static_cast<float>(cfg_.schedule.scales[k].second);
    }
    ckpt.add("meta.schedule", sched);
    if (adapter_rank_ > 0) {
        Tensor adapter({2});
        adapter[0] = static_cast<float>(adapter_rank_);
        adapter[1] = adapter_alpha_;
        ckpt.add("meta.adapter", adapter);
    }
    ckpt.add("codebook.entries", codebook_.entries);
    for (const nn::Param *p : const_cast<Backbone *>(this)->params()) // read-only traversal
        ckpt.add(p->name, p->w);
}

Backbone Backbone::from_checkpoint(const Checkpoint &ckpt) {
    const Tensor &meta = ckpt.blob("meta.dims");
    require(meta.numel() == 7, "meta.dims must hold 7 values");
    BackboneConfig cfg;
    cfg.layers = static_cast<int>(meta[0]);
    cfg.model_dim = static_cast<int>(meta[1]);
    cfg.heads = static_cast<int>(meta[2]);
    cfg.ff_mult = static_cast<int>(meta[3]);
    cfg.cond_dim = static_cast<int>(meta[4]);
    cfg.vocab = static_cast<int>(meta[5]);
    cfg.latent_dim = static_cast<int>(meta[6]);
    const Tensor &sched = ckpt.blob("meta.schedule");
    require(sched.rank() == 2 && sched.dim(1) == 2, "meta.schedule must be [K, 2]");
    cfg.schedule.scales.clear();
    for (int k = 0; k < sched.dim(0); ++k)
        cfg.schedule.scales.emplace_back(static_cast<int>(sched.at(k, 0)),
                                         static_cast<int>(sched.at(k, 1)));
    Codebook codebook;
    codebook.entries = ckpt.blob("codebook.entries");

    Backbone out(cfg, codebook, ckpt.mask_mode, 0);
    if (ckpt.has("meta.adapter")) {
        const Tensor &adapter = ckpt.blob("meta.adapter");
        require(adapter.numel() == 2, "meta.adapter must hold rank and alpha");
        out.freeze_base();
        Rng scratch = Rng::derive(0, "adapter-load"); // values are overwritten below
        out.add_adapters(static_cast<int>(adapter[0]), adapter[1], scratch);
    }
    for (nn::Param *p : out.params()) {
        const Tensor &blob = ckpt.blob(p->name);
        require(blob.same_shape(p->w), "checkpoint blob has the wrong shape: " + p->name);
        p->w = blob;
    }
    return out;
}

void Backbone::save(const std::string &path, CkptKind kind, uint64_t step,
                    const std::string &config_text, uint64_t config_hash) const {
    Checkpoint ckpt;
    ckpt.kind = kind;
    ckpt.mask_mode = mode_;
    ckpt.step = step;
    ckpt.config_hash = config_hash;
    ckpt.config_text = config_text;
    put_blobs(ckpt);
    save_checkpoint(ckpt, path);
}

Backbone Backbone::load(const std::string &path) {
    return from_checkpoint(load_checkpoint(path));
}

Backbone Backbone::load(const std::string &path, CkptKind want) {
    return from_checkpoint(load_checkpoint(path, want));
}

double teacher_cross_entropy(const Backbone &teacher, const std::vector<TokenPyramid> &pyramids) {
    require(!pyramids.empty(), "cross-entropy needs at least one pyramid");
    const ScaleSchedule &sched = teacher.config().schedule;
    const int vocab = teacher.config().vocab;
    double total = 0.0;
    int64_t positions = 0;
    for (const TokenPyramid &tokens : pyramids) {
        const LogitsPyramid logits = teacher.teacher_forward(tokens);
        for (int k = 0; k < sched.count(); ++k) {
            const auto [h, w] = sched.scales[k];
            for (int i = 0; i < h * w; ++i) {
                total += row_nll(logits[k].data() + static_cast<size_t>(i) * vocab, vocab,
                                 tokens.maps[k][i]);
                ++positions;
            }
        }
    }
    return total / static_cast<double>(positions);
}

std::pair<Backbone, TrainStats>
train_teacher(const std::vector<TokenPyramid> &corpus, const BackboneConfig &cfg,
              const Codebook &codebook, const TransformerTrainConfig &train_cfg,
              const std::string &log_path,
              const std::function<void(int64_t, double)> &progress) {
    require(!corpus.empty(), "cannot train the teacher on an empty corpus");
    require(train_cfg.steps >= 1 && train_cfg.batch >= 1, "steps and batch must be positive");
    for (const TokenPyramid &tokens : corpus) tokens.validate(cfg.schedule, cfg.vocab);

    Backbone teacher(cfg, codebook, MaskMode::block_causal, train_cfg.seed);
    std::vector<nn::Param *> params = teacher.params();
    nn::AdamW opt(params, train_cfg.lr);
    Rng batches = Rng::derive(train_cfg.seed, "teacher-batches");

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path);
        require(log.good(), "cannot open training log for writing: " + log_path);
        log << "step\tce\n";
    }

    const int t = cfg.schedule.total_positions();
    TrainStats stats;
    stats.steps = train_cfg.steps;
    for (int step = 1; step <= train_cfg.steps; ++step) {
        opt.zero_grad();
        double loss = 0.0;
        for (int b = 0; b < train_cfg.batch; ++b) {
            const TokenPyramid &tokens = corpus[static_cast<size_t>(
                batches.uniform_int(0, static_cast<int64_t>(corpus.size()) - 1))];
            Backbone::FwdCtx ctx;
            const LogitsPyramid logits = teacher.forward_train(tokens, nullptr, ctx);

            // Mean cross-entropy over all positions; the matching gradient is
            // softmax minus one-hot, scaled by 1 / (positions * batch).
            LogitsPyramid dlogits;
            dlogits.reserve(logits.size());
            const float scale = 1.0f / (static_cast<float>(t) * static_cast<float>(train_cfg.batch));
            double nll = 0.0;
            for (int k = 0; k < cfg.schedule.count(); ++k) {
                const auto [h, w] = cfg.schedule.scales[k];
                Tensor dk({h, w, cfg.vocab});
                for (int i = 0; i < h * w; ++i) {
                    const float *lrow = logits[k].data() + static_cast<size_t>(i) * cfg.vocab;
                    float *drow = dk.data() + static_cast<size_t>(i) * cfg.vocab;
                    double mx = lrow[0];
                    for (int j = 1; j < cfg.vocab; ++j)
                        mx = std::max(mx, static_cast<double>(lrow[j]));
                    double z = 0.0;
                    for (int j = 0; j < cfg.vocab; ++j) z += std::exp(lrow[j] - mx);
                    const int target = tokens.maps[k][i];
                    nll += std::log(z) + mx - lrow[target];
                    for (int j = 0; j < cfg.vocab; ++j)
                        drow[j] = static_cast<float>(std::exp(lrow[j] - mx) / z) * scale;
                    drow[target] -= scale;
                }
                dlogits.push_back(std::move(dk));
            }
            teacher.backward(ctx, dlogits);
            loss += nll / t;
        }
        loss /= train_cfg.batch;
        require(std::isfinite(loss), "teacher training diverged (non-finite loss)");
        opt.clip_grad_norm(train_cfg.grad_clip);
        opt.step();

        if (step == 1) stats.initial_loss = loss;
        stats.final_loss = loss;
        if (log.is_open() &&
            (step == 1 || step % train_cfg.log_every == 0 || step == train_cfg.steps))
            log << step << '\t' << loss << '\n';
        if (progress) progress(step, loss);
    }
    return {std::move(teacher), stats};
}

} // namespace onescale

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

#include "onescale/distill.hpp"

#include "onescale/common.hpp"
#include "onescale/kernels.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

namespace onescale {

namespace {

using kernels::ops;

// Double-precision softmax of one logit row into `out`.
void softmax_row_f64(const float *logits, int n, std::vector<double> &out) {
    double mx = logits[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, static_cast<double>(logits[j]));
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
        out[static_cast<size_t>(j)] = std::exp(logits[j] - mx);
        z += out[static_cast<size_t>(j)];
    }
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j)] /= z;
}

void check_logits_shape(const LogitsPyramid &logits, const ScaleSchedule &schedule, int vocab) {
    require(static_cast<int>(logits.size()) == schedule.count(),
            "logits pyramid has the wrong scale count");
    for (int k = 0; k < schedule.count(); ++k) {
        const auto [h, w] = schedule.scales[k];
        require(logits[static_cast<size_t>(k)].rank() == 3 &&
                    logits[static_cast<size_t>(k)].dim(0) == h &&
                    logits[static_cast<size_t>(k)].dim(1) == w &&
                    logits[static_cast<size_t>(k)].dim(2) == vocab,
                "logits tensor has the wrong shape at scale " + std::to_string(k));
    }
}

} // namespace

void LossWeights::validate() const {
    require(lambda_kl >= 0.0f && lambda_perc >= 0.0f && lambda_mse >= 0.0f,
            "loss weights must be non-negative");
    require(lambda_kl > 0.0f || lambda_perc > 0.0f || lambda_mse > 0.0f,
            "at least one loss weight must be positive");
}

double kl_pyramid_loss(const LogitsPyramid &teacher, const LogitsPyramid &student,
                       LogitsPyramid *dstudent) {
    require(teacher.size() == student.size(), "pyramids must have the same scale count");
    require(!teacher.empty(), "empty logits pyramid");
    if (dstudent != nullptr) dstudent->clear();

    double total = 0.0;
    std::vector<double> pt, ps;
    for (size_t k = 0; k < teacher.size(); ++k) {
        require(teacher[k].same_shape(student[k]),
                "logit shapes differ at scale " + std::to_string(k));
        require(teacher[k].rank() == 3, "logits must be [h, w, V]");
        const int v = teacher[k].dim(2);
        const int positions = teacher[k].dim(0) * teacher[k].dim(1);
        pt.resize(static_cast<size_t>(v));
        ps.resize(static_cast<size_t>(v));
        Tensor dk(student[k].shape());
        const double inv_n = 1.0 / positions;
        for (int i = 0; i < positions; ++i) {
            softmax_row_f64(teacher[k].data() + static_cast<size_t>(i) * v, v, pt);
            softmax_row_f64(student[k].data() + static_cast<size_t>(i) * v, v, ps);
            double kl = 0.0;
            for (int j = 0; j < v; ++j)
                kl += pt[static_cast<size_t>(j)] *
                      (std::log(pt[static_cast<size_t>(j)]) - std::log(ps[static_cast<size_t>(j)]));
            total += inv_n * kl;
            if (dstudent != nullptr) {
                float *drow = dk.data() + static_cast<size_t>(i) * v;
                for (int j = 0; j < v; ++j)
                    drow[j] = static_cast<float>(
                        (ps[static_cast<size_t>(j)] - pt[static_cast<size_t>(j)]) * inv_n);
            }
        }
        if (dstudent != nullptr) dstudent->push_back(std::move(dk));
    }
    return total;
}

Tensor soft_decode(const LogitsPyramid &student, const Tokenizer &tokenizer, SoftDecodeCtx *ctx) {
    const ScaleSchedule &sched = tokenizer.config().schedule;
    const Codebook &cb = tokenizer.codebook();
    check_logits_shape(student, sched, cb.vocab());

    std::vector<Tensor> maps;
    maps.reserve(student.size());
    if (ctx != nullptr) ctx->probs.clear();
    for (size_t k = 0; k < student.size(); ++k) {
        const int h = student[k].dim(0), w = student[k].dim(1);
        Tensor probs = student[k];
        ops().softmax_rows(probs.data(), h * w, cb.vocab());
        // Expected embedding: probability-weighted mix of codebook rows.
        Tensor map({h, w, cb.dim()});
        ops().gemm_nn(probs.data(), cb.entries.data(), map.data(), h * w, cb.vocab(), cb.dim(),
                      false);
        maps.push_back(std::move(map));
        if (ctx != nullptr) ctx->probs.push_back(std::move(probs));
    }
    const Tensor acc = accumulate_feature_maps(maps, sched.final_h(), sched.final_w());
    if (ctx == nullptr) return tokenizer.decode_image(acc);
    ctx->raw = tokenizer.decode_train(acc, ctx->dec);
    Tensor out = ctx->raw;
    out.clamp(0.0f, 1.0f);
    return out;
}

LogitsPyramid soft_decode_backward(const SoftDecodeCtx &ctx, const Tensor &dimage,
                                   Tokenizer &tokenizer) {
    require(dimage.same_shape(ctx.raw), "image gradient does not match the decoded image");
    const ScaleSchedule &sched = tokenizer.config().schedule;
    const Codebook &cb = tokenizer.codebook();
    require(ctx.probs.size() == static_cast<size_t>(sched.count()),
            "soft-decode context does not match the tokenizer schedule");

    // Clamp subgradient: pixels the clamp saturated receive nothing.
    Tensor dmasked = dimage;
    for (size_t i = 0; i < dmasked.numel(); ++i)
        if (ctx.raw.data()[i] < 0.0f || ctx.raw.data()[i] > 1.0f) dmasked.data()[i] = 0.0f;

    const Tensor dacc = tokenizer.decoder_backward(ctx.dec, dmasked);
    const std::vector<Tensor> dmaps = accumulate_feature_maps_adjoint(dacc, sched);

    LogitsPyramid dlogits;
    dlogits.reserve(ctx.probs.size());
    for (size_t k = 0; k < ctx.probs.size(); ++k) {
        const int h = ctx.probs[k].dim(0), w = ctx.probs[k].dim(1);
        const int n = h * w, v = cb.vocab();
        // dL/dprob = dmap . entries^T, then through the softmax Jacobian.
        Tensor dprob({n, v});
        ops().gemm_nt(dmaps[k].data(), cb.entries.data(), dprob.data(), n, cb.dim(), v, false);
        Tensor dk({h, w, v});
        for (int i = 0; i < n; ++i) {
            const float *p = ctx.probs[k].data() + static_cast<size_t>(i) * v;
            const float *g = dprob.data() + static_cast<size_t>(i) * v;
            const float inner = ops().dot(p, g, static_cast<size_t>(v));
            float *drow = dk.data() + static_cast<size_t>(i) * v;
            for (int j = 0; j < v; ++j) drow[j] = p[j] * (g[j] - inner);
        }
        dlogits.push_back(std::move(dk));
    }
    return dlogits;
}

ConsistencyTerms consistency_losses(const LogitsPyramid &student, const Tensor &gt_image,
                                    const Tokenizer &tokenizer) {
    const Tensor img = soft_decode(student, tokenizer);
    require(img.same_shape(gt_image), "ground-truth image does not match the decoder output");
    ConsistencyTerms terms;
    terms.mse = mse(img, gt_image);
    terms.perc = mse(tokenizer.encode_features(img), tokenizer.encode_features(gt_image));
    return terms;
}

ConsistencyTerms consistency_losses_grad(const LogitsPyramid &student, const Tensor &gt_image,
                                         Tokenizer &tokenizer, float lambda_mse,
                                         float lambda_perc, LogitsPyramid &dstudent) {
    require(dstudent.size() == student.size(), "dstudent must be pre-sized to the logits shapes");
    SoftDecodeCtx ctx;
    const Tensor img = soft_decode(student, tokenizer, &ctx);
    require(img.same_shape(gt_image), "ground-truth image does not match the decoder output");

    ConsistencyTerms terms;
    terms.mse = mse(img, gt_image);
    Tensor dimg(img.shape());
    if (lambda_mse != 0.0f) {
        const float scale = 2.0f * lambda_mse / static_cast<float>(img.numel());
        for (size_t i = 0; i < img.numel(); ++i)
            dimg.data()[i] = scale * (img.data()[i] - gt_image.data()[i]);
    }

    const Tensor gt_features = tokenizer.encode_features(gt_image);
    if (lambda_perc != 0.0f) {
        Tokenizer::EncCtx ectx;
        const Tensor features = tokenizer.encode_train(img, ectx);
        terms.perc = mse(features, gt_features);
        Tensor dfeatures(features.shape());
        const float scale = 2.0f * lambda_perc / static_cast<float>(features.numel());
        for (size_t i = 0; i < features.numel(); ++i)
            dfeatures.data()[i] = scale * (features.data()[i] - gt_features.data()[i]);
        const Tensor dperc = tokenizer.encoder_backward(ectx, dfeatures);
        ops().axpy(1.0f, dperc.data(), dimg.data(), dimg.numel());
    } else {
        terms.perc = mse(tokenizer.encode_features(img), gt_features);
    }

    if (lambda_mse != 0.0f || lambda_perc != 0.0f) {
        const LogitsPyramid d = soft_decode_backward(ctx, dimg, tokenizer);
        for (size_t k = 0; k < d.size(); ++k) {
            require(d[k].same_shape(dstudent[k]), "dstudent shape mismatch");
            ops().axpy(1.0f, d[k].data(), dstudent[k].data(), d[k].numel());
        }
    }
    return terms;
}

double total_loss(double kl, double perc, double mse_term, const LossWeights &weights) {
    weights.validate();
    require(std::isfinite(kl) && std::isfinite(perc) && std::isfinite(mse_term),
            "non-finite loss term");
    return weights.lambda_kl * kl + weights.lambda_perc * perc + weights.lambda_mse * mse_term;
}

void wrap_with_adapters(Backbone &backbone, const AdapterConfig &cfg, uint64_t seed) {
    require(cfg.rank >= 1, "adapter rank must be positive");
    require(cfg.alpha > 0.0f, "adapter alpha must be positive");
    backbone.freeze_base();
    Rng rng = Rng::derive(seed, "adapter-init");
    backbone.add_adapters(cfg.rank, cfg.alpha, rng);
}

double trainable_fraction(Backbone &backbone) {
    const std::vector<nn::Param *> params = backbone.params();
    const size_t total = nn::param_count(params);
    require(total > 0, "backbone has no parameters");
    return static_cast<double>(nn::trainable_param_count(params)) / static_cast<double>(total);
}

// --- condition encoder -----------------------------------------------------

ConditionEncoder::ConditionEncoder(int in_channels, int cond_dim, uint64_t seed)
    : in_channels_(in_channels), cond_dim_(cond_dim) {
    require(in_channels >= 1, "condition encoder needs at least one input channel");
    require(cond_dim >= 1, "condition dimension must be positive");
    Rng rng = Rng::derive(seed, "cond-encoder-init");
    c1_ = nn::Conv2d("cond.c1", in_channels, kWidth, 3, 2, 1, rng);
    c2_ = nn::Conv2d("cond.c2", kWidth, 2 * kWidth, 3, 2, 1, rng);
    fc_ = nn::Linear("cond.fc", 2 * kWidth, cond_dim, rng);
}

Tensor ConditionEncoder::forward(const Tensor &image, Ctx *ctx) const {
    require(image.rank() == 3 && image.dim(2) == in_channels_,
            "condition encoder input must be [h, w, c]");
    const Tensor a = nn::Gelu::forward(c1_.forward(image, ctx != nullptr ? &ctx->c1 : nullptr),
                                       ctx != nullptr ? &ctx->g1 : nullptr);
    const Tensor b = nn::Gelu::forward(c2_.forward(a, ctx != nullptr ? &ctx->c2 : nullptr),
                                       ctx != nullptr ? &ctx->g2 : nullptr);
    const int ph = b.dim(0), pw = b.dim(1), c = b.dim(2);
    // Global average pool collapses the grid to one summary vector.
    Tensor pooled({1, c});
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
            ops().axpy(1.0f / (static_cast<float>(ph) * pw),
                       b.data() + (static_cast<size_t>(y) * pw + x) * c, pooled.data(),
                       static_cast<size_t>(c));
    if (ctx != nullptr) {
        ctx->pooled_h = ph;
        ctx->pooled_w = pw;
    }
    return fc_.forward(pooled, ctx != nullptr ? &ctx->fc : nullptr);
}

Tensor ConditionEncoder::backward(const Ctx &ctx, const Tensor &dcond) {
    const Tensor dpooled = fc_.backward(ctx.fc, dcond);
    const int ph = ctx.pooled_h, pw = ctx.pooled_w, c = dpooled.dim(1);
    Tensor db({ph, pw, c});
    const float inv = 1.0f / (static_cast<float>(ph) * pw);
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
            for (int ch = 0; ch < c; ++ch)
                db.at(y, x, ch) = dpooled.data()[ch] * inv;
    const Tensor da = c2_.backward(ctx.c2, nn::Gelu::backward(ctx.g2, db));
    return c1_.backward(ctx.c1, nn::Gelu::backward(ctx.g1, da));
}

std::vector<nn::Param *> ConditionEncoder::params() {
    std::vector<nn::Param *> out;
    c1_.collect(out);
    c2_.collect(out);
    fc_.collect(out);
    return out;
}

// --- pre-restorer ----------------------------------------------------------

PreRestorer::PreRestorer(int channels, int width, uint64_t seed)
    : channels_(channels), width_(width) {
    require(channels >= 1 && width >= 1, "pre-restorer channels and width must be positive");
    Rng rng = Rng::derive(seed, "pre-restorer-init");
    c1_ = nn::Conv2d("pre.c1", channels, width, 3, 1, 1, rng);
    c2_ = nn::Conv2d("pre.c2", width, width, 3, 1, 1, rng);
    c3_ = nn::Conv2d("pre.c3", width, channels, 3, 1, 1, rng);
    // Zero output layer: the fresh module is the identity (up to clamping).
    c3_.w.w.fill(0.0f);
    c3_.b.w.fill(0.0f);
}

Tensor PreRestorer::forward(const Tensor &image, Ctx *ctx) const {
    require(image.rank() == 3 && image.dim(2) == channels_,
            "pre-restorer input must be [h, w, c]");
    const Tensor h1 = nn::Gelu::forward(c1_.forward(image, ctx != nullptr ? &ctx->c1 : nullptr),
                                        ctx != nullptr ? &ctx->g1 : nullptr);
    const Tensor h2 = nn::Gelu::forward(c2_.forward(h1, ctx != nullptr ? &ctx->c2 : nullptr),
                                        ctx != nullptr ? &ctx->g2 : nullptr);
    const Tensor residual = c3_.forward(h2, ctx != nullptr ? &ctx->c3 : nullptr);
    Tensor out = image;
    ops().axpy(1.0f, residual.data(), out.data(), out.numel());
    if (ctx != nullptr) {
        ctx->pass.resize(out.numel());
        for (size_t i = 0; i < out.numel(); ++i)
            ctx->pass[i] = out.data()[i] >= 0.0f && out.data()[i] <= 1.0f ? 1 : 0;
    }
    out.clamp(0.0f, 1.0f);
    return out;
}

Tensor PreRestorer::backward(const Ctx &ctx, const Tensor &dout) {
    require(ctx.pass.size() == dout.numel(), "pre-restorer context does not match the gradient");
    Tensor dmasked = dout;
    for (size_t i = 0; i < dmasked.numel(); ++i)
        if (ctx.pass[i] == 0) dmasked.data()[i] = 0.0f;
    Tensor t = c3_.backward(ctx.c3, dmasked);
    t = nn::Gelu::backward(ctx.g2, t);
    t = c2_.backward(ctx.c2, t);
    t = nn::Gelu::backward(ctx.g1, t);
    t = c1_.backward(ctx.c1, t);
    ops().axpy(1.0f, dmasked.data(), t.data(), t.numel()); // identity branch
    return t;
}

std::vector<nn::Param *> PreRestorer::params() {
    std::vector<nn::Param *> out;
    c1_.collect(out);
    c2_.collect(out);
    c3_.collect(out);
    return out;
}

// --- student checkpoint bundle ---------------------------------------------

void save_student(const StudentBundle &student, const std::string &path, uint64_t step,
                  const std::string &config_text, uint64_t config_hash) {
    require(student.backbone.mode() == MaskMode::full,
            "student checkpoints hold a full-attention backbone");
    Checkpoint ckpt;
    ckpt.kind = CkptKind::student;
    ckpt.mask_mode = MaskMode::full;
    ckpt.step = step;
    ckpt.config_hash = config_hash;
    ckpt.config_text = config_text;
    student.backbone.put_blobs(ckpt);
    if (student.cond_encoder.has_value()) {
        Tensor meta({2});
        meta[0] = static_cast<float>(student.cond_encoder->in_channels());
        meta[1] = static_cast<float>(student.cond_encoder->cond_dim());
        ckpt.add("meta.cond_encoder", meta);
        ConditionEncoder &enc = const_cast<ConditionEncoder &>(*student.cond_encoder);
        for (const nn::Param *p : enc.params()) ckpt.add(p->name, p->w);
    }
    if (student.prerestorer.has_value()) {
        Tensor meta({2});
        meta[0] = static_cast<float>(student.prerestorer->channels());
        meta[1] = static_cast<float>(student.prerestorer->width());
        ckpt.add("meta.prerestorer", meta);
        PreRestorer &pre = const_cast<PreRestorer &>(*student.prerestorer);
        for (const nn::Param *p : pre.params()) ckpt.add(p->name, p->w);
    }
    save_checkpoint(ckpt, path);
}

StudentBundle load_student(const std::string &path) {
    const Checkpoint ckpt = load_checkpoint(path, CkptKind::student);
    StudentBundle out{Backbone::from_checkpoint(ckpt), std::nullopt, std::nullopt};
    if (ckpt.has("meta.cond_encoder")) {
        const Tensor &meta = ckpt.blob("meta.cond_encoder");
        require(meta.numel() == 2, "meta.cond_encoder must hold channels and cond_dim");
        out.cond_encoder.emplace(static_cast<int>(meta[0]), static_cast<int>(meta[1]), 0);
        for (nn::Param *p : out.cond_encoder->params()) {
            const Tensor &blob = ckpt.blob(p->name);
            require(blob.same_shape(p->w), "checkpoint blob has the wrong shape: " + p->name);
            p->w = blob;
        }
    }
    if (ckpt.has("meta.prerestorer")) {
        const Tensor &meta = ckpt.blob("meta.prerestorer");
        require(meta.numel() == 2, "meta.prerestorer must hold channels and width");
        out.prerestorer.emplace(static_cast<int>(meta[0]), static_cast<int>(meta[1]), 0);
        for (nn::Param *p : out.prerestorer->params()) {
            const Tensor &blob = ckpt.blob(p->name);
            require(blob.same_shape(p->w), "checkpoint blob has the wrong shape: " + p->name);
            p->w = blob;
        }
    }
    return out;
}

// --- distillation loop -----------------------------------------------------

std::pair<StudentBundle, TrainStats>
distill(const Backbone &teacher, Tokenizer &tokenizer, const std::vector<PairedSample> &pairs,
        const DistillConfig &cfg, const std::string &log_path,
        const std::function<void(int64_t, double)> &progress) {
    require(!pairs.empty(), "cannot distill on an empty pair set");
    require(cfg.steps >= 1 && cfg.batch >= 1, "steps and batch must be positive");
    cfg.weights.validate();
    require(teacher.mode() == MaskMode::block_causal, "the teacher must be block-causal");
    require(teacher.config().schedule == tokenizer.config().schedule,
            "teacher and tokenizer schedules differ");
    require(teacher.config().vocab == tokenizer.config().vocab &&
                teacher.config().latent_dim == tokenizer.config().latent_dim,
            "teacher and tokenizer token spaces differ");
    for (const PairedSample &pair : pairs)
        require(pair.hq.same_shape(pair.lq) && pair.hq.rank() == 3,
                "each pair needs matching [h, w, c] images");
    const int channels = pairs[0].hq.dim(2);

    // Student starts as the teacher with the full-attention path, then gains
    // the only trainable pieces: adapters, condition encoder, pre-restorer.
    StudentBundle student{teacher.clone_with_mode(cfg.student_mask), std::nullopt,
                          std::nullopt};
    wrap_with_adapters(student.backbone, cfg.adapter, cfg.seed);
    if (teacher.config().cond_dim > 0)
        student.cond_encoder.emplace(channels, teacher.config().cond_dim, cfg.seed);
    if (cfg.use_prerestorer)
        student.prerestorer.emplace(channels, cfg.prerestorer_width, cfg.seed);

    std::vector<nn::Param *> opt_params = student.backbone.params();
    if (student.cond_encoder.has_value())
        for (nn::Param *p : student.cond_encoder->params()) opt_params.push_back(p);
    if (student.prerestorer.has_value())
        for (nn::Param *p : student.prerestorer->params()) opt_params.push_back(p);
    nn::AdamW opt(opt_params, cfg.lr, 0.9f, 0.999f, 1e-8f, cfg.weight_decay);

    // Freeze bookkeeping: everything but the adapters and the two front-end
    // modules must stay bit-identical through the whole run.
    std::vector<nn::Param *> frozen;
    for (nn::Param *p : student.backbone.params())
        if (!p->trainable) frozen.push_back(p);
    const uint64_t teacher_sum =
        nn::param_checksum(const_cast<Backbone &>(teacher).params()); // read-only traversal
    const uint64_t frozen_sum = nn::param_checksum(frozen);
    const uint64_t tokenizer_sum = nn::param_checksum(tokenizer.params());

    // Clean-side work is input-independent across steps, so cache it lazily.
    struct HqCache {
        bool ready = false;
        TokenPyramid tokens;
        Tensor features;
    };
    std::vector<HqCache> cache(pairs.size());

    Rng batches = Rng::derive(cfg.seed, "distill-batches");
    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path);
        require(log.good(), "cannot open training log for writing: " + log_path);
        log << "step\tkl\tperc\tmse\ttotal\twall_ms\n";
    }

    TrainStats stats;
    stats.steps = cfg.steps;
    for (int step = 1; step <= cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        opt.zero_grad();
        double kl_sum = 0.0, perc_sum = 0.0, mse_sum = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            const size_t idx = static_cast<size_t>(
                batches.uniform_int(0, static_cast<int64_t>(pairs.size()) - 1));
            const PairedSample &pair = pairs[idx];
            HqCache &hq = cache[idx];
            if (!hq.ready) {
                hq.features = tokenizer.encode_features(pair.hq);
                hq.tokens = tokenizer.quantize(hq.features).first;
                hq.ready = true;
            }

            PreRestorer::Ctx pre_ctx;
            const Tensor lq_in = student.prerestorer.has_value()
                                     ? student.prerestorer->forward(pair.lq, &pre_ctx)
                                     : pair.lq;
            const TokenPyramid lq_tokens = tokenizer.tokenize(lq_in);

            Tensor cond;
            ConditionEncoder::Ctx cond_ctx;
            const Tensor *cond_ptr = nullptr;
            if (student.cond_encoder.has_value()) {
                cond = student.cond_encoder->forward(pair.lq, &cond_ctx);
                cond_ptr = &cond;
            }

            const LogitsPyramid t_logits = teacher.teacher_forward(hq.tokens);
            Backbone::FwdCtx sctx;
            const LogitsPyramid s_logits =
                student.backbone.forward_train(lq_tokens, cond_ptr, sctx);

            LogitsPyramid dkl;
            kl_sum += kl_pyramid_loss(t_logits, s_logits, &dkl);

            LogitsPyramid dtotal;
            dtotal.reserve(s_logits.size());
            for (const Tensor &lk : s_logits) dtotal.emplace_back(lk.shape());
            if (cfg.weights.lambda_kl != 0.0f)
                for (size_t k = 0; k < dkl.size(); ++k)
                    ops().axpy(cfg.weights.lambda_kl / cfg.batch, dkl[k].data(),
                               dtotal[k].data(), dkl[k].numel());

            const ConsistencyTerms terms = consistency_losses_grad(
                s_logits, pair.hq, tokenizer, cfg.weights.lambda_mse / cfg.batch,
                cfg.weights.lambda_perc / cfg.batch, dtotal);
            perc_sum += terms.perc;
            mse_sum += terms.mse;

            const Tensor dcond = student.backbone.backward(sctx, dtotal);
            if (student.cond_encoder.has_value() && dcond.numel() > 0)
                student.cond_encoder->backward(cond_ctx, dcond);

            // The token path is discrete, so the pre-restorer fits the clean
            // image directly as its coarse-restoration objective.
            if (student.prerestorer.has_value()) {
                Tensor dpre(lq_in.shape());
                const float scale =
                    2.0f / (static_cast<float>(lq_in.numel()) * cfg.batch);
                for (size_t i = 0; i < lq_in.numel(); ++i)
                    dpre.data()[i] = scale * (lq_in.data()[i] - pair.hq.data()[i]);
                student.prerestorer->backward(pre_ctx, dpre);
            }
        }
        const double kl_mean = kl_sum / cfg.batch;
        const double perc_mean = perc_sum / cfg.batch;
        const double mse_mean = mse_sum / cfg.batch;
        const double total = total_loss(kl_mean, perc_mean, mse_mean, cfg.weights);

        opt.clip_grad_norm(cfg.grad_clip);
        opt.step();

        if (step == 1) stats.initial_loss = total;
        stats.final_loss = total;
        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        if (log.is_open())
            log << step << '\t' << kl_mean << '\t' << perc_mean << '\t' << mse_mean << '\t'
                << total << '\t' << wall_ms << '\n';
        if (progress && (step == 1 || step % cfg.log_every == 0 || step == cfg.steps))
            progress(step, total);
    }

    require(nn::param_checksum(const_cast<Backbone &>(teacher).params()) == teacher_sum,
            "teacher parameters changed during distillation");
    require(nn::param_checksum(frozen) == frozen_sum,
            "frozen student base parameters changed during distillation");
    require(nn::param_checksum(tokenizer.params()) == tokenizer_sum,
            "tokenizer parameters changed during distillation");
    return {std::move(student), stats};
}

} // namespace onescale

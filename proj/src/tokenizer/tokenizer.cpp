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

#include "onescale/tokenizer.hpp"

#include "onescale/common.hpp"
#include "onescale/kernels.hpp"
#include "onescale/resize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace onescale {

using kernels::ops;

// ------------------------------------------------------- ScaleSchedule ----

int ScaleSchedule::total_positions() const {
    int t = 0;
    for (const auto &[h, w] : scales) {
        t += h * w;
    }
    return t;
}

void ScaleSchedule::validate() const {
    require(!scales.empty(), "scale schedule is empty");
    int prev_area = 0, prev_h = 0, prev_w = 0;
    for (const auto &[h, w] : scales) {
        require(h >= 1 && w >= 1, "scale dimensions must be positive");
        require(h * w > prev_area, "scale areas must strictly increase");
        require(h >= prev_h && w >= prev_w, "scale dimensions must be non-decreasing");
        prev_area = h * w;
        prev_h = h;
        prev_w = w;
    }
}

ScaleSchedule ScaleSchedule::parse(const std::string &text) {
    ScaleSchedule s;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const size_t x = item.find('x');
        require(x != std::string::npos && x > 0 && x + 1 < item.size(),
                "bad scale entry (expected HxW): " + item);
        try {
            s.scales.emplace_back(std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1)));
        } catch (const std::exception &) {
            fail("bad scale entry (expected HxW): " + item);
        }
    }
    s.validate();
    return s;
}

std::string ScaleSchedule::to_string() const {
    std::string out;
    for (size_t i = 0; i < scales.size(); ++i) {
        if (i) {
            out += ',';
        }
        out += std::to_string(scales[i].first) + "x" + std::to_string(scales[i].second);
    }
    return out;
}

void TokenPyramid::validate(const ScaleSchedule &schedule, int vocab) const {
    require(static_cast<int>(maps.size()) == schedule.count(),
            "token pyramid has " + std::to_string(maps.size()) + " maps, schedule expects " +
                std::to_string(schedule.count()));
    for (int k = 0; k < schedule.count(); ++k) {
        const auto [h, w] = schedule.scales[static_cast<size_t>(k)];
        require(static_cast<int>(maps[static_cast<size_t>(k)].size()) == h * w,
                "token map size mismatch at scale " + std::to_string(k + 1));
        for (const int tok : maps[static_cast<size_t>(k)]) {
            require(tok >= 0 && tok < vocab,
                    "token index out of range at scale " + std::to_string(k + 1) + ": " +
                        std::to_string(tok));
        }
    }
}

// --------------------------------------------- quantize / dequantize ------

Tensor lookup_tokens(const std::vector<int> &map, int h, int w, const Codebook &codebook) {
    const int d = codebook.dim();
    require(static_cast<int>(map.size()) == h * w, "token map size mismatch");
    Tensor out({h, w, d});
    for (int i = 0; i < h * w; ++i) {
        const int tok = map[static_cast<size_t>(i)];
        require(tok >= 0 && tok < codebook.vocab(), "token index out of range");
        std::memcpy(out.data() + static_cast<size_t>(i) * d,
                    codebook.entries.data() + static_cast<size_t>(tok) * d,
                    sizeof(float) * static_cast<size_t>(d));
    }
    return out;
}

namespace {

// The one accumulate convention: acc += bilinear_up(map). Both the quantizer
// loop and dequantize_pyramid go through here, which is what makes their
// round trip bit-exact.
void add_upsampled(Tensor &acc, const Tensor &scale_map, int final_h, int final_w) {
    const Tensor up = resize_bilinear(scale_map, final_h, final_w);
    ops().axpy(1.0f, up.data(), acc.data(), acc.numel());
}

void check_features(const Tensor &features, const ScaleSchedule &schedule, const Codebook &cb) {
    schedule.validate();
    require(features.rank() == 3, "feature map must be [h, w, d]");
    require(features.dim(0) == schedule.final_h() && features.dim(1) == schedule.final_w(),
            "feature grid " + std::to_string(features.dim(0)) + "x" +
                std::to_string(features.dim(1)) + " does not match schedule final scale " +
                std::to_string(schedule.final_h()) + "x" + std::to_string(schedule.final_w()));
    require(features.dim(2) == cb.dim(), "feature dimension does not match codebook dimension");
}

std::pair<TokenPyramid, Tensor> quantize_traced(const Tensor &features,
                                                const ScaleSchedule &schedule, const Codebook &cb,
                                                std::vector<float> *trace_vecs,
                                                std::vector<int> *trace_idx) {
    check_features(features, schedule, cb);
    const int fh = schedule.final_h(), fw = schedule.final_w();
    const int d = cb.dim(), vocab = cb.vocab();

    Tensor residual = features;
    Tensor acc = Tensor::zeros_like(features);
    TokenPyramid tokens;
    for (const auto &[h, w] : schedule.scales) {
        const Tensor down = resize_area(residual, h, w);
        std::vector<int> map(static_cast<size_t>(h) * w);
        for (int i = 0; i < h * w; ++i) {
            const float *cell = down.data() + static_cast<size_t>(i) * d;
            const int idx = ops().nearest_code(cell, cb.entries.data(), vocab, d);
            map[static_cast<size_t>(i)] = idx;
            if (trace_vecs) {
                trace_vecs->insert(trace_vecs->end(), cell, cell + d);
                trace_idx->push_back(idx);
            }
        }
        add_upsampled(acc, lookup_tokens(map, h, w, cb), fh, fw);
        for (size_t i = 0; i < residual.numel(); ++i) {
            residual.data()[i] = features.data()[i] - acc.data()[i];
        }
        tokens.maps.push_back(std::move(map));
    }
    return {std::move(tokens), std::move(acc)};
}

} // namespace

std::pair<TokenPyramid, Tensor> quantize_pyramid(const Tensor &features,
                                                 const ScaleSchedule &schedule,
                                                 const Codebook &codebook) {
    return quantize_traced(features, schedule, codebook, nullptr, nullptr);
}

Tensor dequantize_pyramid(const TokenPyramid &tokens, const ScaleSchedule &schedule,
                          const Codebook &codebook) {
    schedule.validate();
    tokens.validate(schedule, codebook.vocab());
    const int fh = schedule.final_h(), fw = schedule.final_w();
    Tensor acc({fh, fw, codebook.dim()});
    for (int k = 0; k < schedule.count(); ++k) {
        const auto [h, w] = schedule.scales[static_cast<size_t>(k)];
        add_upsampled(acc, lookup_tokens(tokens.maps[static_cast<size_t>(k)], h, w, codebook), fh, fw);
    }
    return acc;
}

Tensor accumulate_feature_maps(const std::vector<Tensor> &per_scale, int final_h, int final_w) {
    require(!per_scale.empty(), "no feature maps to accumulate");
    Tensor acc({final_h, final_w, per_scale.front().dim(2)});
    for (const Tensor &m : per_scale) {
        require(m.rank() == 3 && m.dim(2) == acc.dim(2), "feature map dimension mismatch");
        add_upsampled(acc, m, final_h, final_w);
    }
    return acc;
}

std::vector<Tensor> accumulate_feature_maps_adjoint(const Tensor &grad_final,
                                                    const ScaleSchedule &schedule) {
    std::vector<Tensor> grads;
    grads.reserve(static_cast<size_t>(schedule.count()));
    for (const auto &[h, w] : schedule.scales) {
        grads.push_back(resize_bilinear_adjoint(grad_final, h, w));
    }
    return grads;
}

// ---------------------------------------------------------- Tokenizer ----

void TokenizerConfig::validate() const {
    require(image_size >= factor() && image_size % factor() == 0,
            "image size must be a positive multiple of " + std::to_string(factor()));
    require(channels >= 1, "channels must be positive");
    require(latent_dim >= 1, "latent dimension must be positive");
    require(vocab >= 2, "codebook needs at least 2 entries");
    require(base_width >= 1, "base width must be positive");
    schedule.validate();
    require(schedule.final_h() == image_size / factor() && schedule.final_w() == image_size / factor(),
            "schedule final scale must equal the encoder latent grid " +
                std::to_string(image_size / factor()) + "x" + std::to_string(image_size / factor()));
}

namespace {

// Nearest-neighbor x2 upsample and its exact adjoint.
Tensor nearest_up2(const Tensor &x) {
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor y({2 * h, 2 * w, c});
    for (int i = 0; i < 2 * h; ++i) {
        for (int j = 0; j < 2 * w; ++j) {
            std::memcpy(&y.at(i, j, 0), &x.at(i / 2, j / 2, 0), sizeof(float) * static_cast<size_t>(c));
        }
    }
    return y;
}

Tensor nearest_up2_backward(const Tensor &dy) {
    const int h = dy.dim(0) / 2, w = dy.dim(1) / 2, c = dy.dim(2);
    Tensor dx({h, w, c});
    for (int i = 0; i < dy.dim(0); ++i) {
        for (int j = 0; j < dy.dim(1); ++j) {
            ops().axpy(1.0f, &dy.at(i, j, 0), &dx.at(i / 2, j / 2, 0), static_cast<size_t>(c));
        }
    }
    return dx;
}

} // namespace

Tokenizer::Tokenizer(const TokenizerConfig &cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::derive(seed, "tokenizer-init");
    const int w1 = cfg.base_width, w2 = 2 * w1, w4 = 4 * w1;
    const int c = cfg.channels, d = cfg.latent_dim;

    auto conv = [&](const char *name, int cin, int cout, int k, int s, int p) {
        return nn::Conv2d(std::string("tok.") + name, cin, cout, k, s, p, rng);
    };
    e1_ = conv("e1", c, w1, 3, 1, 1);
    e2_ = conv("e2", w1, w2, 3, 2, 1);
    e3_ = conv("e3", w2, w2, 3, 1, 1);
    e4_ = conv("e4", w2, w4, 3, 2, 1);
    e5_ = conv("e5", w4, w4, 3, 1, 1);
    e_head_ = conv("e_head", w4, d, 1, 1, 0);

    d1_ = conv("d1", d, w4, 3, 1, 1);
    d2_ = conv("d2", w4, w4, 3, 1, 1);
    d_r1_ = conv("d_r1", w4, w2, 1, 1, 0);
    d3_ = conv("d3", w2, w2, 3, 1, 1);
    d_r2_ = conv("d_r2", w2, w1, 1, 1, 0);
    d4_ = conv("d4", w1, w1, 3, 1, 1);
    d_out_ = conv("d_out", w1, c, 3, 1, 1);
    d_out_.b.w.fill(0.5f); // decode starts at mid-gray

    codebook_.entries = Tensor({cfg.vocab, d});
    for (size_t i = 0; i < codebook_.entries.numel(); ++i) {
        codebook_.entries.data()[i] = static_cast<float>(rng.normal() * 0.1);
    }
    ema_counts = Tensor({cfg.vocab});
    ema_counts.fill(1.0f);
    ema_sums = codebook_.entries;
}

std::vector<nn::Param *> Tokenizer::params() {
    std::vector<nn::Param *> out;
    for (nn::Conv2d *layer : {&e1_, &e2_, &e3_, &e4_, &e5_, &e_head_, &d1_, &d2_, &d_r1_, &d3_,
                              &d_r2_, &d4_, &d_out_}) {
        layer->collect(out);
    }
    return out;
}

Tensor Tokenizer::encode_train(const Tensor &image, EncCtx &ctx) const {
    require(image.rank() == 3 && image.dim(2) == cfg_.channels, "image must be [H, W, C]");
    require(image.dim(0) % cfg_.factor() == 0 && image.dim(1) % cfg_.factor() == 0,
            "image dimensions must be divisible by " + std::to_string(cfg_.factor()));
    Tensor x = e1_.forward(image, &ctx.c1);
    x = nn::Gelu::forward(x, &ctx.g1);
    x = e2_.forward(x, &ctx.c2);
    x = nn::Gelu::forward(x, &ctx.g2);
    x = e3_.forward(x, &ctx.c3);
    x = nn::Gelu::forward(x, &ctx.g3);
    x = e4_.forward(x, &ctx.c4);
    x = nn::Gelu::forward(x, &ctx.g4);
    x = e5_.forward(x, &ctx.c5);
    x = nn::Gelu::forward(x, &ctx.g5);
    return e_head_.forward(x, &ctx.chead);
}

Tensor Tokenizer::encoder_backward(const EncCtx &ctx, const Tensor &dfeatures) {
    Tensor d = e_head_.backward(ctx.chead, dfeatures);
    d = nn::Gelu::backward(ctx.g5, d);
    d = e5_.backward(ctx.c5, d);
    d = nn::Gelu::backward(ctx.g4, d);
    d = e4_.backward(ctx.c4, d);
    d = nn::Gelu::backward(ctx.g3, d);
    d = e3_.backward(ctx.c3, d);
    d = nn::Gelu::backward(ctx.g2, d);
    d = e2_.backward(ctx.c2, d);
    d = nn::Gelu::backward(ctx.g1, d);
    return e1_.backward(ctx.c1, d);
}

Tensor Tokenizer::encode_features(const Tensor &image) const {
    EncCtx ctx;
    return encode_train(image, ctx);
}

Tensor Tokenizer::decode_raw(const Tensor &features, DecCtx *ctx) const {
    require(features.rank() == 3 && features.dim(2) == cfg_.latent_dim,
            "feature map must be [h, w, d]");
    DecCtx local;
    DecCtx &c = ctx ? *ctx : local;
    Tensor x = d1_.forward(features, ctx ? &c.c1 : nullptr);
    x = nn::Gelu::forward(x, ctx ? &c.g1 : nullptr);
    x = d2_.forward(x, ctx ? &c.c2 : nullptr);
    x = nn::Gelu::forward(x, ctx ? &c.g2 : nullptr);
    x = d_r1_.forward(x, ctx ? &c.cr1 : nullptr);
    x = nn::Gelu::forward(x, ctx ? &c.g3 : nullptr);
    x = nearest_up2(x);
    x = d3_.forward(x, ctx ? &c.c3 : nullptr);
    x = nn::Gelu::forward(x, ctx ? &c.g4 : nullptr);
    x = d_r2_.forward(x, ctx ? &c.cr2 : nullptr);
    x = nn::Gelu::forward(x, ctx ? &c.g5 : nullptr);
    x = nearest_up2(x);
    x = d4_.forward(x, ctx ? &c.c4 : nullptr);
    x = nn::Gelu::forward(x, ctx ? &c.g6 : nullptr);
    return d_out_.forward(x, ctx ? &c.cout : nullptr);
}

Tensor Tokenizer::decode_image(const Tensor &features) const {
    Tensor img = decode_raw(features, nullptr);
    img.clamp(0.0f, 1.0f);
    return img;
}

Tensor Tokenizer::decode_train(const Tensor &features, DecCtx &ctx) const {
    return decode_raw(features, &ctx);
}

Tensor Tokenizer::decoder_backward(const DecCtx &ctx, const Tensor &dimage) {
    Tensor d = d_out_.backward(ctx.cout, dimage);
    d = nn::Gelu::backward(ctx.g6, d);
    d = d4_.backward(ctx.c4, d);
    d = nearest_up2_backward(d);
    d = nn::Gelu::backward(ctx.g5, d);
    d = d_r2_.backward(ctx.cr2, d);
    d = nn::Gelu::backward(ctx.g4, d);
    d = d3_.backward(ctx.c3, d);
    d = nearest_up2_backward(d);
    d = nn::Gelu::backward(ctx.g3, d);
    d = d_r1_.backward(ctx.cr1, d);
    d = nn::Gelu::backward(ctx.g2, d);
    d = d2_.backward(ctx.c2, d);
    d = nn::Gelu::backward(ctx.g1, d);
    return d1_.backward(ctx.c1, d);
}

std::pair<TokenPyramid, Tensor> Tokenizer::quantize(const Tensor &features) const {
    return quantize_pyramid(features, cfg_.schedule, codebook_);
}

Tensor Tokenizer::dequantize(const TokenPyramid &tokens) const {
    return dequantize_pyramid(tokens, cfg_.schedule, codebook_);
}

TokenPyramid Tokenizer::tokenize(const Tensor &image) const {
    return quantize(encode_features(image)).first;
}

Tensor Tokenizer::detokenize(const TokenPyramid &tokens) const {
    return decode_image(dequantize(tokens));
}

// ------------------------------------------------------- persistence -----

void Tokenizer::save(const std::string &path, uint64_t step, const std::string &config_text,
                     uint64_t config_hash) const {
    Checkpoint ckpt;
    ckpt.kind = CkptKind::tokenizer;
    ckpt.step = step;
    ckpt.config_text = config_text;
    ckpt.config_hash = config_hash;

    Tensor meta({6});
    meta.at(0) = static_cast<float>(cfg_.image_size);
    meta.at(1) = static_cast<float>(cfg_.channels);
    meta.at(2) = static_cast<float>(cfg_.latent_dim);
    meta.at(3) = static_cast<float>(cfg_.vocab);
    meta.at(4) = static_cast<float>(cfg_.base_width);
    meta.at(5) = static_cast<float>(cfg_.schedule.count());
    ckpt.add("meta.dims", meta);
    Tensor sched({cfg_.schedule.count(), 2});
    for (int k = 0; k < cfg_.schedule.count(); ++k) {
        sched.at(k, 0) = static_cast<float>(cfg_.schedule.scales[static_cast<size_t>(k)].first);
        sched.at(k, 1) = static_cast<float>(cfg_.schedule.scales[static_cast<size_t>(k)].second);
    }
    ckpt.add("meta.schedule", sched);

    auto *self = const_cast<Tokenizer *>(this); // read-only traversal
    for (const nn::Param *p : self->params()) {
        ckpt.add(p->name, p->w);
    }
    ckpt.add("codebook.entries", codebook_.entries);
    ckpt.add("codebook.ema_counts", ema_counts);
    ckpt.add("codebook.ema_sums", ema_sums);
    save_checkpoint(ckpt, path);
}

Tokenizer Tokenizer::load(const std::string &path) {
    const Checkpoint ckpt = load_checkpoint(path, CkptKind::tokenizer);
    const Tensor &meta = ckpt.blob("meta.dims");
    TokenizerConfig cfg;
    cfg.image_size = static_cast<int>(meta.at(0));
    cfg.channels = static_cast<int>(meta.at(1));
    cfg.latent_dim = static_cast<int>(meta.at(2));
    cfg.vocab = static_cast<int>(meta.at(3));
    cfg.base_width = static_cast<int>(meta.at(4));
    const Tensor &sched = ckpt.blob("meta.schedule");
    cfg.schedule.scales.clear();
    for (int k = 0; k < sched.dim(0); ++k) {
        cfg.schedule.scales.emplace_back(static_cast<int>(sched.at(k, 0)),
                                         static_cast<int>(sched.at(k, 1)));
    }

    Tokenizer tok(cfg, 0);
    for (nn::Param *p : tok.params()) {
        const Tensor &stored = ckpt.blob(p->name);
        require(stored.same_shape(p->w), "checkpoint blob shape mismatch for " + p->name);
        p->w = stored;
    }
    tok.codebook_.entries = ckpt.blob("codebook.entries");
    tok.ema_counts = ckpt.blob("codebook.ema_counts");
    tok.ema_sums = ckpt.blob("codebook.ema_sums");
    return tok;
}

Tokenizer Tokenizer::load(const std::string &path, const ScaleSchedule &expected) {
    Tokenizer tok = load(path);
    require(tok.cfg_.schedule == expected,
            "tokenizer checkpoint schedule mismatch: file has " + tok.cfg_.schedule.to_string() +
                ", expected " + expected.to_string());
    return tok;
}

// ---------------------------------------------------------- training -----

std::pair<Tokenizer, TrainStats>
train_tokenizer(const std::vector<Tensor> &images, const TokenizerConfig &cfg,
                const TokenizerTrainConfig &train_cfg, const std::string &log_path,
                const std::function<void(int64_t, double)> &progress) {
    require(!images.empty(), "empty dataset: no images to train the tokenizer on");
    require(train_cfg.steps >= 1 && train_cfg.batch >= 1, "steps and batch must be positive");
    for (const Tensor &img : images) {
        require(img.rank() == 3 && img.dim(0) == cfg.image_size && img.dim(1) == cfg.image_size &&
                    img.dim(2) == cfg.channels,
                "training image does not match the configured size");
    }

    Tokenizer tok(cfg, train_cfg.seed);
    std::vector<nn::Param *> params = tok.params();
    nn::AdamW opt(params, train_cfg.lr);
    Rng batch_rng = Rng::derive(train_cfg.seed, "tokenizer-batches");
    Rng reinit_rng = Rng::derive(train_cfg.seed, "tokenizer-dead-codes");

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::trunc);
        require(log.good(), "cannot open loss log: " + log_path);
        log << "step\trecon\tcommit\ttotal\n";
    }

    const int d = cfg.latent_dim, vocab = cfg.vocab;
    TrainStats stats;
    std::vector<float> batch_counts(static_cast<size_t>(vocab));
    std::vector<double> batch_sums(static_cast<size_t>(vocab) * d);
    std::vector<float> trace_vecs;
    std::vector<int> trace_idx;

    for (int64_t step = 1; step <= train_cfg.steps; ++step) {
        opt.zero_grad();
        std::fill(batch_counts.begin(), batch_counts.end(), 0.0f);
        std::fill(batch_sums.begin(), batch_sums.end(), 0.0);
        double recon_sum = 0.0, commit_sum = 0.0;
        trace_vecs.clear();
        trace_idx.clear();

        for (int bi = 0; bi < train_cfg.batch; ++bi) {
            const Tensor &img =
                images[static_cast<size_t>(batch_rng.uniform_int(0, static_cast<int64_t>(images.size()) - 1))];

            Tokenizer::EncCtx enc_ctx;
            const Tensor features = tok.encode_train(img, enc_ctx);
            const size_t trace_begin = trace_idx.size();
            auto [tokens, acc] =
                quantize_traced(features, cfg.schedule, tok.codebook(), &trace_vecs, &trace_idx);

            for (size_t a = trace_begin; a < trace_idx.size(); ++a) {
                const int idx = trace_idx[static_cast<size_t>(a)];
                batch_counts[static_cast<size_t>(idx)] += 1.0f;
                const float *vec = trace_vecs.data() + a * d;
                for (int j = 0; j < d; ++j) {
                    batch_sums[static_cast<size_t>(idx) * d + j] += vec[j];
                }
            }

            // decoder sees the quantized accumulator; gradients pass straight
            // through to the encoder features
            Tokenizer::DecCtx dec_ctx;
            const Tensor recon = tok.decode_train(acc, dec_ctx);
            const double recon_mse = mse(recon, img);
            recon_sum += recon_mse;

            double commit = 0.0;
            for (size_t i = 0; i < features.numel(); ++i) {
                const double diff = features.data()[i] - acc.data()[i];
                commit += diff * diff;
            }
            commit /= static_cast<double>(features.numel());
            commit_sum += commit;

            const float inv_batch = 1.0f / static_cast<float>(train_cfg.batch);
            Tensor dimg(recon.shape());
            const float rscale = 2.0f / static_cast<float>(recon.numel()) * inv_batch;
            for (size_t i = 0; i < recon.numel(); ++i) {
                dimg.data()[i] = rscale * (recon.data()[i] - img.data()[i]);
            }
            Tensor dfeatures = tok.decoder_backward(dec_ctx, dimg);
            const float cscale =
                2.0f * train_cfg.commitment / static_cast<float>(features.numel()) * inv_batch;
            for (size_t i = 0; i < features.numel(); ++i) {
                dfeatures.data()[i] += cscale * (features.data()[i] - acc.data()[i]);
            }
            tok.encoder_backward(enc_ctx, dfeatures);
        }

        const double recon = recon_sum / train_cfg.batch;
        const double commit = commit_sum / train_cfg.batch;
        const double total = recon + train_cfg.commitment * commit;
        require(std::isfinite(total),
                "non-finite tokenizer loss at step " + std::to_string(step) + " - training diverged");
        if (step == 1) {
            stats.initial_loss = total;
        }
        stats.final_loss = total;

        opt.clip_grad_norm(train_cfg.grad_clip);
        opt.step();

        // EMA codebook update from this batch's assignments
        const float decay = train_cfg.ema_decay;
        float *entries = tok.mutable_codebook().entries.data();
        for (int v = 0; v < vocab; ++v) {
            tok.ema_counts.at(v) =
                decay * tok.ema_counts.at(v) + (1.0f - decay) * batch_counts[static_cast<size_t>(v)];
            for (int j = 0; j < d; ++j) {
                tok.ema_sums.at(v, j) =
                    decay * tok.ema_sums.at(v, j) +
                    (1.0f - decay) * static_cast<float>(batch_sums[static_cast<size_t>(v) * d + j]);
            }
            if (tok.ema_counts.at(v) >= train_cfg.dead_code_threshold) {
                for (int j = 0; j < d; ++j) {
                    entries[static_cast<size_t>(v) * d + j] =
                        tok.ema_sums.at(v, j) / tok.ema_counts.at(v);
                }
            } else if (!trace_idx.empty()) {
                // dead code: reinitialize from a random batch feature
                const size_t pick = static_cast<size_t>(
                    reinit_rng.uniform_int(0, static_cast<int64_t>(trace_idx.size()) - 1));
                for (int j = 0; j < d; ++j) {
                    const float f = trace_vecs[pick * d + j];
                    entries[static_cast<size_t>(v) * d + j] = f;
                    tok.ema_sums.at(v, j) = f;
                }
                tok.ema_counts.at(v) = 1.0f;
            }
        }

        if (log.is_open() && (step % train_cfg.log_every == 0 || step == 1 || step == train_cfg.steps)) {
            log << step << '\t' << recon << '\t' << commit << '\t' << total << '\n';
        }
        if (progress && (step % train_cfg.log_every == 0 || step == train_cfg.steps)) {
            progress(step, total);
        }
    }
    stats.steps = train_cfg.steps;
    return {std::move(tok), stats};
}

} // namespace onescale

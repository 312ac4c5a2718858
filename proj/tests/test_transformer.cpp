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
#include "onescale/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using onescale::AttentionMask;
using onescale::Backbone;
using onescale::BackboneConfig;
using onescale::build_mask;
using onescale::CkptKind;
using onescale::Codebook;
using onescale::LogitsPyramid;
using onescale::MaskMode;
using onescale::Rng;
using onescale::ScaleSchedule;
using onescale::Tensor;
using onescale::TokenPyramid;
using onescale::TrainStats;
using onescale::TransformerTrainConfig;

namespace {

std::string tmp_path(const std::string &name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Codebook random_codebook(int vocab, int dim, Rng &rng) {
    Codebook cb;
    cb.entries = Tensor({vocab, dim});
    for (size_t i = 0; i < cb.entries.numel(); ++i)
        cb.entries.data()[i] = static_cast<float>(rng.uniform(-0.5, 0.5));
    return cb;
}

TokenPyramid random_pyramid(const ScaleSchedule &schedule, int vocab, Rng &rng) {
    TokenPyramid tokens;
    for (const auto &[h, w] : schedule.scales) {
        std::vector<int> map(static_cast<size_t>(h) * w);
        for (int &id : map) id = static_cast<int>(rng.uniform_int(0, vocab - 1));
        tokens.maps.push_back(std::move(map));
    }
    return tokens;
}

// Small configuration with every feature active, cheap enough for finite
// differences through the whole stack.
BackboneConfig tiny_config() {
    BackboneConfig cfg;
    cfg.layers = 2;
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.ff_mult = 2;
    cfg.cond_dim = 2;
    cfg.vocab = 5;
    cfg.latent_dim = 3;
    cfg.schedule = ScaleSchedule::parse("1x1,2x2");
    return cfg;
}

// Fixed random weighting turns the logits pyramid into a scalar, so the
// weights double as the exact dlogits for backward.
double weighted_loss(const LogitsPyramid &logits, const LogitsPyramid &weights) {
    double total = 0.0;
    for (size_t k = 0; k < logits.size(); ++k)
        for (size_t i = 0; i < logits[k].numel(); ++i)
            total += static_cast<double>(logits[k].data()[i]) * weights[k].data()[i];
    return total;
}

onescale::nn::Param &find_param(Backbone &bb, const std::string &name) {
    for (onescale::nn::Param *p : bb.params())
        if (p->name == name) return *p;
    FAIL(("no parameter named " + name));
    static onescale::nn::Param dummy;
    return dummy;
}

void zero_grads(Backbone &bb) {
    for (onescale::nn::Param *p : bb.params()) p->g.fill(0.0f);
}

// Central-difference check of a handful of slots against the accumulated
// analytic gradient.
void check_grad_tensor(Tensor &w, const Tensor &g, const std::function<double()> &loss, Rng &rng,
                       int probes = 4) {
    const float h = 1e-2f;
    for (int p = 0; p < probes; ++p) {
        const size_t slot = static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(w.numel()) - 1));
        const float keep = w.data()[slot];
        w.data()[slot] = keep + h;
        const double up = loss();
        w.data()[slot] = keep - h;
        const double down = loss();
        w.data()[slot] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double an = g.data()[slot];
        CHECK(std::abs(fd - an) <= 2e-3 + 2e-2 * std::abs(an));
    }
}

bool pyramids_equal(const LogitsPyramid &a, const LogitsPyramid &b) {
    if (a.size() != b.size()) return false;
    for (size_t k = 0; k < a.size(); ++k) {
        if (!a[k].same_shape(b[k])) return false;
        for (size_t i = 0; i < a[k].numel(); ++i)
            if (a[k].data()[i] != b[k].data()[i]) return false;
    }
    return true;
}

bool scale_equal(const Tensor &a, const Tensor &b) {
    if (!a.same_shape(b)) return false;
    for (size_t i = 0; i < a.numel(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

} // namespace

TEST_CASE("block-causal mask matches the scale-membership rule") {
    const ScaleSchedule sched = ScaleSchedule::parse("1x1,2x2");
    const AttentionMask causal = build_mask(sched, MaskMode::block_causal);
    REQUIRE(causal.t == 5);

    // Row 0 (the 1x1 scale) sees only itself; rows 1..4 see everything.
    int trues = 0;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            const bool expect = i == 0 ? j == 0 : true;
            CHECK(causal.at(i, j) == expect);
            trues += causal.at(i, j) ? 1 : 0;
        }
    CHECK(trues == 21);

    const AttentionMask full = build_mask(sched, MaskMode::full);
    int full_trues = 0;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) full_trues += full.at(i, j) ? 1 : 0;
    CHECK(full_trues == 25);
}

TEST_CASE("mask agrees with a brute-force predicate on random schedules") {
    const std::vector<std::string> schedules = {"1x1", "1x1,2x2,3x3", "1x2,2x3,4x6", "2x2,4x4"};
    for (const std::string &text : schedules) {
        const ScaleSchedule sched = ScaleSchedule::parse(text);
        const AttentionMask mask = build_mask(sched, MaskMode::block_causal);

        // Independent scale lookup: walk the schedule for each flat index.
        auto scale_at = [&sched](int pos) {
            for (int k = 0; k < sched.count(); ++k) {
                pos -= sched.scales[k].first * sched.scales[k].second;
                if (pos < 0) return k;
            }
            FAIL("position out of range");
            return -1;
        };
        const int t = sched.total_positions();
        REQUIRE(mask.t == t);
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < t; ++j)
                CHECK(mask.at(i, j) == (scale_at(j) <= scale_at(i)));
    }
    // With a single scale the causal mask degenerates to full attention.
    const ScaleSchedule one = ScaleSchedule::parse("3x3");
    CHECK(build_mask(one, MaskMode::block_causal).allow ==
          build_mask(one, MaskMode::full).allow);
}

TEST_CASE("config validation rejects bad dimensions") {
    BackboneConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.layers = 0;
    CHECK_THROWS(cfg.validate());
    cfg = tiny_config();
    cfg.model_dim = 9; // not divisible by heads = 2
    CHECK_THROWS(cfg.validate());
    cfg = tiny_config();
    cfg.vocab = 1;
    CHECK_THROWS(cfg.validate());
    cfg = tiny_config();
    cfg.cond_dim = -1;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("teacher logits depend only on strictly coarser scales") {
    BackboneConfig cfg;
    cfg.layers = 2;
    cfg.model_dim = 16;
    cfg.heads = 2;
    cfg.ff_mult = 2;
    cfg.vocab = 7;
    cfg.latent_dim = 3;
    cfg.schedule = ScaleSchedule::parse("1x1,2x2,4x4");

    Rng rng = Rng::derive(31, "causality");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);
    const Backbone teacher(cfg, cb, MaskMode::block_causal, 5);
    const TokenPyramid base = random_pyramid(cfg.schedule, cfg.vocab, rng);
    const LogitsPyramid ref = teacher.teacher_forward(base);

    for (int k = 0; k < cfg.schedule.count(); ++k) {
        TokenPyramid poked = base;
        poked.maps[k][0] = (poked.maps[k][0] + 1) % cfg.vocab;
        const LogitsPyramid out = teacher.teacher_forward(poked);
        // Scales at or below the edited one are bit-identical; finer scales
        // must react (their inputs embed the edited reconstruction).
        for (int j = 0; j <= k; ++j) CHECK(scale_equal(out[j], ref[j]));
        for (int j = k + 1; j < cfg.schedule.count(); ++j) CHECK(!scale_equal(out[j], ref[j]));
    }
}

TEST_CASE("student logits react to any token at every scale in one pass") {
    BackboneConfig cfg;
    cfg.layers = 2;
    cfg.model_dim = 16;
    cfg.heads = 2;
    cfg.ff_mult = 2;
    cfg.vocab = 7;
    cfg.latent_dim = 3;
    cfg.schedule = ScaleSchedule::parse("1x1,2x2,4x4");

    Rng rng = Rng::derive(32, "reachability");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);
    const Backbone student(cfg, cb, MaskMode::full, 5);
    const TokenPyramid base = random_pyramid(cfg.schedule, cfg.vocab, rng);

    const uint64_t before = student.forward_count();
    const LogitsPyramid ref = student.student_forward(base);
    CHECK(student.forward_count() == before + 1);

    // Perturb the finest scale: full attention still propagates everywhere.
    TokenPyramid poked = base;
    poked.maps[2][5] = (poked.maps[2][5] + 3) % cfg.vocab;
    const LogitsPyramid out = student.student_forward(poked);
    for (int j = 0; j < cfg.schedule.count(); ++j) CHECK(!scale_equal(out[j], ref[j]));
}

TEST_CASE("forward enforces mode, condition wiring, and token validity") {
    BackboneConfig cfg = tiny_config();
    Rng rng = Rng::derive(33, "guards");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);
    const Backbone teacher(cfg, cb, MaskMode::block_causal, 1);
    const Backbone student(cfg, cb, MaskMode::full, 1);
    const TokenPyramid tokens = random_pyramid(cfg.schedule, cfg.vocab, rng);

    CHECK_THROWS(teacher.student_forward(tokens));
    CHECK_THROWS(student.teacher_forward(tokens));

    Tensor bad_cond({1, 3}); // cond_dim is 2
    CHECK_THROWS(teacher.teacher_forward(tokens, &bad_cond));

    BackboneConfig plain = cfg;
    plain.cond_dim = 0;
    const Backbone no_cond(plain, cb, MaskMode::block_causal, 1);
    Tensor cond({1, 2});
    CHECK_THROWS(no_cond.teacher_forward(tokens, &cond));

    TokenPyramid out_of_range = tokens;
    out_of_range.maps[0][0] = cfg.vocab;
    CHECK_THROWS(teacher.teacher_forward(out_of_range));

    // Codebook must line up with the declared vocab / latent size.
    const Codebook small = random_codebook(cfg.vocab - 1, cfg.latent_dim, rng);
    CHECK_THROWS(Backbone(cfg, small, MaskMode::full, 1));
}

TEST_CASE("uniform logits score exactly ln(vocab) cross-entropy") {
    BackboneConfig cfg = tiny_config();
    cfg.cond_dim = 0;
    Rng rng = Rng::derive(34, "uniform-ce");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);
    Backbone teacher(cfg, cb, MaskMode::block_causal, 2);
    find_param(teacher, "tf.head.w").w.fill(0.0f);
    find_param(teacher, "tf.head.b").w.fill(0.0f);

    std::vector<TokenPyramid> pyramids;
    for (int i = 0; i < 3; ++i) pyramids.push_back(random_pyramid(cfg.schedule, cfg.vocab, rng));
    const double ce = onescale::teacher_cross_entropy(teacher, pyramids);
    CHECK(ce == doctest::Approx(std::log(5.0)).epsilon(1e-6));
}

TEST_CASE("backward matches finite differences in both modes") {
    const BackboneConfig cfg = tiny_config();
    Rng rng = Rng::derive(35, "fd");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);
    const TokenPyramid tokens = random_pyramid(cfg.schedule, cfg.vocab, rng);
    Tensor cond({1, cfg.cond_dim});
    for (size_t i = 0; i < cond.numel(); ++i)
        cond.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));

    LogitsPyramid weights;
    for (const auto &[h, w] : cfg.schedule.scales) {
        Tensor wk({h, w, cfg.vocab});
        for (size_t i = 0; i < wk.numel(); ++i)
            wk.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
        weights.push_back(std::move(wk));
    }

    for (const MaskMode mode : {MaskMode::block_causal, MaskMode::full}) {
        Backbone bb(cfg, cb, mode, 9);
        auto loss = [&]() {
            const LogitsPyramid logits = mode == MaskMode::block_causal
                                             ? bb.teacher_forward(tokens, &cond)
                                             : bb.student_forward(tokens, &cond);
            return weighted_loss(logits, weights);
        };
        zero_grads(bb);
        Backbone::FwdCtx ctx;
        bb.forward_train(tokens, &cond, ctx);
        const Tensor dcond = bb.backward(ctx, weights);
        REQUIRE(dcond.rank() == 2);
        REQUIRE(dcond.dim(1) == cfg.cond_dim);

        for (const char *name :
             {"tf.in_proj.w", "tf.cond_proj.w", "tf.cond_proj.b", "tf.scale", "tf.pos0", "tf.pos1",
              "tf.b0.attn.wq.w", "tf.b0.ff1.b", "tf.b1.ff2.w", "tf.b1.ln1.gamma", "tf.ln_f.beta",
              "tf.head.w"}) {
            onescale::nn::Param &p = find_param(bb, name);
            check_grad_tensor(p.w, p.g, loss, rng);
        }
        if (mode == MaskMode::block_causal) {
            onescale::nn::Param &start = find_param(bb, "tf.start");
            check_grad_tensor(start.w, start.g, loss, rng);
        }

        // The returned condition gradient against direct perturbation.
        check_grad_tensor(cond, dcond, loss, rng, 2);
    }
}

TEST_CASE("backward without a condition returns an empty gradient") {
    BackboneConfig cfg = tiny_config();
    cfg.cond_dim = 0;
    Rng rng = Rng::derive(36, "no-cond");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);
    Backbone student(cfg, cb, MaskMode::full, 3);
    const TokenPyramid tokens = random_pyramid(cfg.schedule, cfg.vocab, rng);

    Backbone::FwdCtx ctx;
    const LogitsPyramid logits = student.forward_train(tokens, nullptr, ctx);
    LogitsPyramid ones;
    for (const Tensor &lk : logits) {
        Tensor d(lk.shape());
        d.fill(1.0f);
        ones.push_back(std::move(d));
    }
    const Tensor dcond = student.backward(ctx, ones);
    CHECK(dcond.numel() == 0);
}

TEST_CASE("fresh adapters leave the forward pass untouched") {
    BackboneConfig cfg = tiny_config();
    Rng rng = Rng::derive(37, "adapters");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);
    Backbone student(cfg, cb, MaskMode::full, 12);
    const TokenPyramid tokens = random_pyramid(cfg.schedule, cfg.vocab, rng);
    const LogitsPyramid before = student.student_forward(tokens);

    const size_t base_count = onescale::nn::param_count(student.params());
    student.freeze_base();
    CHECK(onescale::nn::trainable_param_count(student.params()) == 0);

    Rng arng = Rng::derive(37, "adapter-init");
    student.add_adapters(4, 8.0f, arng);
    CHECK(student.has_adapters());
    CHECK(student.adapter_rank() == 4);
    CHECK_THROWS(student.add_adapters(4, 8.0f, arng)); // double attach

    // Zero-initialized up factors: bitwise-identical logits.
    const LogitsPyramid after = student.student_forward(tokens);
    CHECK(pyramids_equal(before, after));

    // Every layer gains q/k/v/o down+up factors and only those are trainable.
    const size_t adapter_params =
        static_cast<size_t>(cfg.layers) * 4 * (static_cast<size_t>(cfg.model_dim) * 4 * 2);
    CHECK(onescale::nn::param_count(student.params()) == base_count + adapter_params);
    CHECK(onescale::nn::trainable_param_count(student.params()) == adapter_params);
    for (onescale::nn::Param *p : student.params())
        CHECK(p->trainable == (p->name.find(".adapter_") != std::string::npos));
}

TEST_CASE("clone_with_mode copies weights and drops adapters") {
    BackboneConfig cfg = tiny_config();
    Rng rng = Rng::derive(38, "clone");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);
    Backbone teacher(cfg, cb, MaskMode::block_causal, 21);

    Backbone student = teacher.clone_with_mode(MaskMode::full);
    CHECK(student.mode() == MaskMode::full);
    CHECK(onescale::nn::param_checksum(student.params()) ==
          onescale::nn::param_checksum(teacher.params()));

    // Cloning an adapted backbone keeps the base weights only.
    Rng arng = Rng::derive(38, "clone-adapters");
    teacher.add_adapters(2, 4.0f, arng);
    Backbone plain = teacher.clone_with_mode(MaskMode::full);
    CHECK(!plain.has_adapters());
    CHECK(onescale::nn::param_checksum(plain.params()) ==
          onescale::nn::param_checksum(student.params()));
}

TEST_CASE("construction is seed-deterministic") {
    const BackboneConfig cfg = tiny_config();
    Rng rng = Rng::derive(39, "det");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);
    Backbone a(cfg, cb, MaskMode::block_causal, 77);
    Backbone b(cfg, cb, MaskMode::block_causal, 77);
    Backbone c(cfg, cb, MaskMode::block_causal, 78);
    CHECK(onescale::nn::param_checksum(a.params()) == onescale::nn::param_checksum(b.params()));
    CHECK(onescale::nn::param_checksum(a.params()) != onescale::nn::param_checksum(c.params()));
}

TEST_CASE("checkpoint round trip preserves outputs, mode, and adapters") {
    BackboneConfig cfg = tiny_config();
    Rng rng = Rng::derive(40, "ckpt");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);
    const TokenPyramid tokens = random_pyramid(cfg.schedule, cfg.vocab, rng);

    const std::string teacher_path = tmp_path("onescale_test_teacher.ckpt");
    const std::string student_path = tmp_path("onescale_test_student.ckpt");

    Backbone teacher(cfg, cb, MaskMode::block_causal, 99);
    teacher.save(teacher_path, CkptKind::teacher, 123, "[teacher]\n", 0xabcdefULL);
    Backbone teacher2 = Backbone::load(teacher_path, CkptKind::teacher);
    CHECK(teacher2.mode() == MaskMode::block_causal);
    CHECK(teacher2.config().schedule == cfg.schedule);
    CHECK(teacher2.config().cond_dim == cfg.cond_dim);
    CHECK(onescale::nn::param_checksum(teacher2.params()) ==
          onescale::nn::param_checksum(teacher.params()));
    CHECK(pyramids_equal(teacher2.teacher_forward(tokens), teacher.teacher_forward(tokens)));

    // Student with adapters: rank, alpha, freeze state, and outputs survive.
    Backbone student = teacher.clone_with_mode(MaskMode::full);
    student.freeze_base();
    Rng arng = Rng::derive(40, "ckpt-adapters");
    student.add_adapters(4, 8.0f, arng);
    // Nudge one adapter so the low-rank path actually contributes.
    find_param(student, "tf.b0.attn.wq.w.adapter_up").w.fill(0.05f);
    student.save(student_path, CkptKind::student, 456, "[student]\n", 0x123ULL);

    Backbone student2 = Backbone::load(student_path, CkptKind::student);
    CHECK(student2.mode() == MaskMode::full);
    CHECK(student2.has_adapters());
    CHECK(student2.adapter_rank() == 4);
    CHECK(onescale::nn::param_checksum(student2.params()) ==
          onescale::nn::param_checksum(student.params()));
    CHECK(onescale::nn::trainable_param_count(student2.params()) ==
          onescale::nn::trainable_param_count(student.params()));
    CHECK(pyramids_equal(student2.student_forward(tokens), student.student_forward(tokens)));

    // Kind enforcement surfaces both names.
    try {
        Backbone::load(student_path, CkptKind::teacher);
        FAIL("expected a kind mismatch error");
    } catch (const onescale::Error &e) {
        const std::string what = e.what();
        CHECK(what.find("teacher") != std::string::npos);
        CHECK(what.find("student") != std::string::npos);
    }

    std::remove(teacher_path.c_str());
    std::remove(student_path.c_str());
}

TEST_CASE("teacher training learns a deterministic next-scale rule") {
    BackboneConfig cfg;
    cfg.layers = 2;
    cfg.model_dim = 32;
    cfg.heads = 2;
    cfg.ff_mult = 2;
    cfg.vocab = 16;
    cfg.latent_dim = 4;
    cfg.schedule = ScaleSchedule::parse("1x1,2x2,3x3");

    Rng rng = Rng::derive(41, "teacher-train");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);

    // Corpus rule: scale k holds (t0 + k) mod V everywhere, so every scale
    // past the first is exactly predictable from the coarser reconstruction.
    auto make_corpus = [&cfg](Rng &r, int n) {
        std::vector<TokenPyramid> corpus;
        for (int i = 0; i < n; ++i) {
            const int t0 = static_cast<int>(r.uniform_int(0, cfg.vocab - 1));
            TokenPyramid tokens;
            for (int k = 0; k < cfg.schedule.count(); ++k) {
                const auto [h, w] = cfg.schedule.scales[k];
                tokens.maps.emplace_back(static_cast<size_t>(h) * w, (t0 + k) % cfg.vocab);
            }
            corpus.push_back(std::move(tokens));
        }
        return corpus;
    };
    Rng corpus_rng = Rng::derive(41, "corpus");
    const std::vector<TokenPyramid> corpus = make_corpus(corpus_rng, 24);
    const std::vector<TokenPyramid> held_out = make_corpus(corpus_rng, 8);

    TransformerTrainConfig tcfg;
    tcfg.steps = 150;
    tcfg.batch = 4;
    tcfg.lr = 1e-3f;
    tcfg.log_every = 50;
    tcfg.seed = 7;

    const std::string log_path = tmp_path("onescale_test_teacher_log.tsv");
    auto [teacher, stats] = onescale::train_teacher(corpus, cfg, cb, tcfg, log_path);
    CHECK(stats.steps == 150);
    CHECK(stats.final_loss < 0.7 * stats.initial_loss);

    // Anything learned must beat the uniform predictor on held-out data.
    const double ce = onescale::teacher_cross_entropy(teacher, held_out);
    CHECK(ce < std::log(static_cast<double>(cfg.vocab)));

    // Log: header plus steps 1, 50, 100, 150.
    std::ifstream log(log_path);
    REQUIRE(log.good());
    std::vector<std::string> lines;
    for (std::string line; std::getline(log, line);)
        if (!line.empty()) lines.push_back(line);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "step\tce");
    CHECK(lines[1].rfind("1\t", 0) == 0);
    CHECK(lines[4].rfind("150\t", 0) == 0);
    std::remove(log_path.c_str());

    CHECK_THROWS(onescale::train_teacher({}, cfg, cb, tcfg));
}

TEST_CASE("teacher training is reproducible for a fixed seed") {
    BackboneConfig cfg;
    cfg.layers = 1;
    cfg.model_dim = 16;
    cfg.heads = 2;
    cfg.ff_mult = 2;
    cfg.vocab = 8;
    cfg.latent_dim = 3;
    cfg.schedule = ScaleSchedule::parse("1x1,2x2");

    Rng rng = Rng::derive(42, "repro");
    const Codebook cb = random_codebook(cfg.vocab, cfg.latent_dim, rng);
    std::vector<TokenPyramid> corpus;
    for (int i = 0; i < 6; ++i) corpus.push_back(random_pyramid(cfg.schedule, cfg.vocab, rng));

    TransformerTrainConfig tcfg;
    tcfg.steps = 5;
    tcfg.batch = 2;
    tcfg.seed = 13;

    auto [a, sa] = onescale::train_teacher(corpus, cfg, cb, tcfg);
    auto [b, sb] = onescale::train_teacher(corpus, cfg, cb, tcfg);
    CHECK(sa.final_loss == sb.final_loss);
    CHECK(onescale::nn::param_checksum(a.params()) == onescale::nn::param_checksum(b.params()));

    tcfg.seed = 14;
    auto [c, sc] = onescale::train_teacher(corpus, cfg, cb, tcfg);
    CHECK(sc.steps == 5);
    CHECK(onescale::nn::param_checksum(a.params()) != onescale::nn::param_checksum(c.params()));
}

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

#include "onescale/evalbench.hpp"

#include "onescale/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <utility>
#include <vector>

namespace onescale {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<double> luma_plane(const Tensor &img) {
    const int h = img.dim(0), w = img.dim(1);
    std::vector<double> gray(static_cast<size_t>(h) * w);
    const float *p = img.data();
    for (size_t i = 0; i < gray.size(); ++i)
        gray[i] = 0.299 * p[i * 3] + 0.587 * p[i * 3 + 1] + 0.114 * p[i * 3 + 2];
    return gray;
}

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kWindow);
    double total = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - (kWindow - 1) / 2.0;
        k[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        total += k[static_cast<size_t>(i)];
    }
    for (double &v : k) v /= total;
    return k;
}

// Valid-mode separable Gaussian filter: [h, w] -> [h - 10, w - 10].
std::vector<double> filter_valid(const std::vector<double> &src, int h, int w,
                                 const std::vector<double> &k) {
    const int wo = w - kWindow + 1;
    std::vector<double> rows(static_cast<size_t>(h) * wo);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (int t = 0; t < kWindow; ++t)
                acc += k[static_cast<size_t>(t)] *
                       src[static_cast<size_t>(y) * w + x + t];
            rows[static_cast<size_t>(y) * wo + x] = acc;
        }
    const int ho = h - kWindow + 1;
    std::vector<double> out(static_cast<size_t>(ho) * wo);
    for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (int t = 0; t < kWindow; ++t)
                acc += k[static_cast<size_t>(t)] *
                       rows[static_cast<size_t>(y + t) * wo + x];
            out[static_cast<size_t>(y) * wo + x] = acc;
        }
    return out;
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Canonical key/value form of a distillation config, for the arm diff file.
std::vector<std::pair<std::string, std::string>> config_items(const DistillConfig &cfg) {
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return std::string(buf);
    };
    return {
        {"steps", std::to_string(cfg.steps)},
        {"batch", std::to_string(cfg.batch)},
        {"lr", num(cfg.lr)},
        {"weight_decay", num(cfg.weight_decay)},
        {"grad_clip", num(cfg.grad_clip)},
        {"lambda_kl", num(cfg.weights.lambda_kl)},
        {"lambda_perc", num(cfg.weights.lambda_perc)},
        {"lambda_mse", num(cfg.weights.lambda_mse)},
        {"adapter_rank", std::to_string(cfg.adapter.rank)},
        {"adapter_alpha", num(cfg.adapter.alpha)},
        {"student_mask",
         cfg.student_mask == MaskMode::full ? "full" : "block_causal"},
        {"use_prerestorer", cfg.use_prerestorer ? "true" : "false"},
        {"prerestorer_width", std::to_string(cfg.prerestorer_width)},
        {"seed", std::to_string(cfg.seed)},
    };
}

DistillConfig arm_config(const DistillConfig &base, AblationArm arm) {
    DistillConfig cfg = base;
    switch (arm) {
    case AblationArm::full:
    case AblationArm::multi_step_conditioned:
        break;
    case AblationArm::causal_mask:
        cfg.student_mask = MaskMode::block_causal;
        break;
    case AblationArm::no_kl:
        cfg.weights.lambda_kl = 0.0f;
        break;
    case AblationArm::no_prerestorer:
        cfg.use_prerestorer = false;
        break;
    }
    return cfg;
}

} // namespace

double psnr(const Tensor &a, const Tensor &b) {
    require(a.same_shape(b), "psnr needs identically shaped images");
    require(a.numel() > 0, "psnr needs non-empty images");
    double mse = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - b.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse == 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Tensor &a, const Tensor &b) {
    require(a.same_shape(b), "ssim needs identically shaped images");
    require(a.rank() == 3 && a.dim(2) == 3, "ssim expects [h, w, 3] images");
    const int h = a.dim(0), w = a.dim(1);
    require(h >= kWindow && w >= kWindow,
            "ssim needs images at least " + std::to_string(kWindow) +
                " pixels on each side");

    const std::vector<double> x = luma_plane(a);
    const std::vector<double> y = luma_plane(b);
    const size_t n = x.size();
    std::vector<double> xx(n), yy(n), xy(n);
    for (size_t i = 0; i < n; ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }

    const std::vector<double> k = gaussian_kernel();
    const std::vector<double> mu_x = filter_valid(x, h, w, k);
    const std::vector<double> mu_y = filter_valid(y, h, w, k);
    const std::vector<double> e_xx = filter_valid(xx, h, w, k);
    const std::vector<double> e_yy = filter_valid(yy, h, w, k);
    const std::vector<double> e_xy = filter_valid(xy, h, w, k);

    double total = 0.0;
    for (size_t i = 0; i < mu_x.size(); ++i) {
        const double var_x = e_xx[i] - mu_x[i] * mu_x[i];
        const double var_y = e_yy[i] - mu_y[i] * mu_y[i];
        const double cov = e_xy[i] - mu_x[i] * mu_y[i];
        total += ((2.0 * mu_x[i] * mu_y[i] + kC1) * (2.0 * cov + kC2)) /
                 ((mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + kC1) *
                  (var_x + var_y + kC2));
    }
    return total / static_cast<double>(mu_x.size());
}

MetricReport evaluate_images(const std::vector<Tensor> &outputs,
                             const std::vector<Tensor> &references) {
    require(!outputs.empty(), "nothing to evaluate");
    require(outputs.size() == references.size(),
            "evaluate needs one reference per output");
    const double start = now_ms();
    MetricReport report;
    for (size_t i = 0; i < outputs.size(); ++i) {
        report.psnr_values.push_back(psnr(outputs[i], references[i]));
        report.ssim_values.push_back(ssim(outputs[i], references[i]));
    }
    report.count = static_cast<int>(outputs.size());
    for (double v : report.psnr_values) report.psnr_mean += v;
    for (double v : report.ssim_values) report.ssim_mean += v;
    report.psnr_mean /= report.count;
    report.ssim_mean /= report.count;
    report.wall_ms = now_ms() - start;
    return report;
}

SpeedReport benchmark_speed(const StudentBundle &student, const Backbone &teacher,
                            const Tokenizer &tokenizer, int n_images, uint64_t seed) {
    require(n_images >= 3, "speed benchmark needs at least 3 runs for a median");
    require(student.backbone.mode() == MaskMode::full,
            "speed benchmark compares the one-step student against the teacher");
    require(student.backbone.config().schedule == tokenizer.config().schedule &&
                teacher.config().schedule == tokenizer.config().schedule,
            "benchmark parts disagree on the scale schedule");

    const int size = tokenizer.config().image_size;
    Rng rng = Rng::derive(seed, "bench-images");
    std::vector<Tensor> images;
    for (int i = 0; i < n_images; ++i) {
        Tensor img({size, size, tokenizer.config().channels});
        for (size_t j = 0; j < img.numel(); ++j)
            img.data()[j] = static_cast<float>(rng.uniform(0.0, 1.0));
        images.push_back(std::move(img));
    }

    // Warm-up: touch every code path once before the clock starts.
    (void)restore_one_step(images[0], student, tokenizer);
    (void)sample_teacher(teacher, nullptr, 1.0f, seed);

    const int scales = teacher.config().schedule.count();
    std::vector<double> student_ms, teacher_ms, tokenizer_ms;
    SpeedReport report;
    report.n = n_images;
    for (int i = 0; i < n_images; ++i) {
        double t0 = now_ms();
        const TokenPyramid tokens = tokenizer.tokenize(images[static_cast<size_t>(i)]);
        double t1 = now_ms();

        Tensor condition;
        const Tensor *cond_ptr = nullptr;
        if (student.cond_encoder) {
            condition = student.cond_encoder->forward(images[static_cast<size_t>(i)]);
            cond_ptr = &condition;
        }
        const uint64_t before_student = student.backbone.forward_count();
        double t2 = now_ms();
        const TokenPyramid restored =
            argmax_tokens(student.backbone.student_forward(tokens, cond_ptr));
        double t3 = now_ms();
        report.student_passes =
            static_cast<int>(student.backbone.forward_count() - before_student);

        double t4 = now_ms();
        const Tensor decoded = tokenizer.detokenize(restored);
        double t5 = now_ms();
        (void)decoded;

        const uint64_t before_teacher = teacher.forward_count();
        double t6 = now_ms();
        (void)sample_teacher(teacher, nullptr, 1.0f, seed + static_cast<uint64_t>(i));
        double t7 = now_ms();
        report.teacher_passes =
            static_cast<int>(teacher.forward_count() - before_teacher);

        student_ms.push_back(t3 - t2);
        teacher_ms.push_back(t7 - t6);
        tokenizer_ms.push_back((t1 - t0) + (t5 - t4));
    }
    require(report.student_passes == 1, "student path must cost one backbone pass");
    require(report.teacher_passes == scales,
            "teacher path must cost one backbone pass per scale");

    report.student_median_ms = median_of(student_ms);
    report.teacher_median_ms = median_of(teacher_ms);
    report.tokenizer_median_ms = median_of(tokenizer_ms);
    report.speedup = report.teacher_median_ms / report.student_median_ms;
    report.trainable_fraction =
        trainable_fraction(const_cast<Backbone &>(student.backbone));
    return report;
}

std::string ablation_arm_name(AblationArm arm) {
    switch (arm) {
    case AblationArm::full: return "full";
    case AblationArm::causal_mask: return "causal_mask";
    case AblationArm::no_kl: return "no_kl";
    case AblationArm::multi_step_conditioned: return "multi_step_conditioned";
    case AblationArm::no_prerestorer: return "no_prerestorer";
    }
    fail("unhandled ablation arm");
}

AblationArm parse_ablation_arm(const std::string &name) {
    for (AblationArm arm :
         {AblationArm::full, AblationArm::causal_mask, AblationArm::no_kl,
          AblationArm::multi_step_conditioned, AblationArm::no_prerestorer})
        if (ablation_arm_name(arm) == name) return arm;
    fail("unknown ablation arm: " + name);
}

void run_ablation(const Backbone &teacher, Tokenizer &tokenizer,
                  const std::vector<PairedSample> &train_pairs,
                  const std::vector<PairedSample> &eval_pairs,
                  const DistillConfig &base, const std::vector<AblationArm> &arms,
                  int zero_shot_prefix, const std::string &table_path,
                  const std::string &diff_path,
                  const std::function<void(int64_t, double)> &progress) {
    require(!arms.empty(), "ablation needs at least one arm");
    require(!eval_pairs.empty(), "ablation needs held-out pairs to score");
    const int scales = teacher.config().schedule.count();
    int prefix = zero_shot_prefix;
    if (prefix == 0) prefix = std::max(1, scales - 2);
    require(prefix >= 1 && prefix < scales,
            "zero-shot prefix must keep between 1 and K-1 scales");

    std::vector<Tensor> hq, lq;
    for (const PairedSample &p : eval_pairs) {
        hq.push_back(p.hq);
        lq.push_back(p.lq);
    }
    const MetricReport lq_report = evaluate_images(lq, hq);

    std::ofstream table(table_path);
    require(table.good(), "cannot write ablation table: " + table_path);
    std::ofstream diff(diff_path);
    require(diff.good(), "cannot write ablation config diff: " + diff_path);
    table << "arm\tpsnr_mean\tssim_mean\tpsnr_lq\tssim_lq\tpasses\timages\n";
    diff << "arm\tkey\tvalue\tfull_value\n";

    const auto base_items = config_items(base);
    for (AblationArm arm : arms) {
        std::vector<Tensor> outputs;
        int passes = 1;
        if (arm == AblationArm::multi_step_conditioned) {
            passes = scales - prefix;
            for (size_t i = 0; i < lq.size(); ++i) {
                const uint64_t draw_seed =
                    Rng::derive(base.seed, "ablation-zeroshot", i).next_u64();
                outputs.push_back(zero_shot_upsample(lq[i], prefix, teacher,
                                                     tokenizer, draw_seed));
            }
            diff << ablation_arm_name(arm) << "\tpipeline\tzero_shot(prefix="
                 << prefix << ")\tone_step_student\n";
        } else {
            require(!train_pairs.empty(), "ablation arm needs training pairs");
            const DistillConfig cfg = arm_config(base, arm);
            StudentBundle bundle =
                distill(teacher, tokenizer, train_pairs, cfg, "", progress).first;
            for (const Tensor &img : lq)
                outputs.push_back(single_pass_restore(img, bundle, tokenizer));
            if (arm == AblationArm::full) {
                diff << "full\t(baseline)\t-\t-\n";
            } else {
                const auto items = config_items(cfg);
                for (size_t i = 0; i < items.size(); ++i)
                    if (items[i].second != base_items[i].second)
                        diff << ablation_arm_name(arm) << '\t' << items[i].first
                             << '\t' << items[i].second << '\t'
                             << base_items[i].second << '\n';
            }
        }

        const MetricReport report = evaluate_images(outputs, hq);
        char row[256];
        std::snprintf(row, sizeof(row), "%s\t%.6f\t%.6f\t%.6f\t%.6f\t%d\t%d\n",
                      ablation_arm_name(arm).c_str(), report.psnr_mean,
                      report.ssim_mean, lq_report.psnr_mean, lq_report.ssim_mean,
                      passes, report.count);
        table << row;
    }
    require(table.good() && diff.good(), "ablation output write failed");
}

} // namespace onescale

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
// Reference metrics and the experiment bench:
//
//   psnr / ssim        double-precision reference implementations; every
//                      number in a results table comes from these.
//   evaluate_images    per-image metrics plus arithmetic means.
//   benchmark_speed    median wall time of one student pass vs. a full
//                      teacher sampling sweep. Tokenizer encode/decode is
//                      shared by both paths, so it is timed separately and
//                      excluded from the speedup ratio.
//   run_ablation       trains one student per arm under an identical budget
//                      and seed, scores all arms on the same held-out pairs,
//                      and writes a reproducible table plus a config diff
//                      proving each arm changed exactly one thing.

#pragma once

#include "onescale/distill.hpp"
#include "onescale/runtime.hpp"
#include "onescale/tokenizer.hpp"
#include "onescale/transformer.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace onescale {

// Peak signal-to-noise ratio in dB for [0,1] images: 10*log10(1 / MSE).
// Identical images would divide by zero, so they report a documented 100 dB
// cap instead.
double psnr(const Tensor &a, const Tensor &b);

// Single-scale structural similarity on the luma channel (weights 0.299,
// 0.587, 0.114), 11x11 Gaussian window with sigma 1.5, stabilizers
// C1 = 0.01^2 and C2 = 0.03^2, averaged over all fully-valid windows.
// Images must be at least 11 pixels on each side.
double ssim(const Tensor &a, const Tensor &b);

// Metrics over a batch of (output, reference) pairs. Means are plain
// arithmetic means of the per-image columns.
struct MetricReport {
    std::vector<double> psnr_values;
    std::vector<double> ssim_values;
    double psnr_mean = 0.0;
    double ssim_mean = 0.0;
    int count = 0;
    double wall_ms = 0.0;
    std::string config_hash; // filled by callers that track provenance
};

MetricReport evaluate_images(const std::vector<Tensor> &outputs,
                             const std::vector<Tensor> &references);

// Median-of-n timing comparison between the two inference paths. The timed
// student region is one backbone pass plus argmax; the timed teacher region
// is the K-pass sampling sweep. One warm-up run of each precedes the clock.
struct SpeedReport {
    int n = 0;
    double student_median_ms = 0.0;
    double teacher_median_ms = 0.0;
    double tokenizer_median_ms = 0.0; // encode + decode, reported not ratioed
    double speedup = 0.0;             // teacher_median_ms / student_median_ms
    int student_passes = 0;           // per image; contractually 1
    int teacher_passes = 0;           // per image; contractually K
    double trainable_fraction = 0.0;
};

SpeedReport benchmark_speed(const StudentBundle &student, const Backbone &teacher,
                            const Tokenizer &tokenizer, int n_images, uint64_t seed);

// The ablation arms. `full` is the complete recipe; every other arm flips
// exactly one switch against it.
enum class AblationArm {
    full,                   // one-step student, all losses, pre-restorer
    causal_mask,            // student keeps the teacher's block-causal mask
    no_kl,                  // lambda_kl = 0
    multi_step_conditioned, // no distillation: teacher completes LQ token prefix
    no_prerestorer,         // front-end restorer disabled
};

// Name <-> enum; parse rejects unknown names, naming the offender.
std::string ablation_arm_name(AblationArm arm);
AblationArm parse_ablation_arm(const std::string &name);

// Trains (where the arm calls for it) and scores every requested arm.
//
//   table_path  tab-separated, one header row then one row per arm:
//               arm, psnr_mean, ssim_mean, psnr_lq, ssim_lq, passes, images.
//               Fixed-precision formatting; two runs with the same inputs
//               and seed produce byte-identical files.
//   diff_path   tab-separated record of how each arm's configuration
//               differs from the `full` arm: arm, key, value, full_value.
//
// `zero_shot_prefix` is the number of LQ token scales the non-distilled
// baseline trusts (0 picks K-2, clamped to the valid range): coarse scales
// survive degradation best, so the teacher re-invents only the fine ones.
void run_ablation(const Backbone &teacher, Tokenizer &tokenizer,
                  const std::vector<PairedSample> &train_pairs,
                  const std::vector<PairedSample> &eval_pairs,
                  const DistillConfig &base, const std::vector<AblationArm> &arms,
                  int zero_shot_prefix, const std::string &table_path,
                  const std::string &diff_path,
                  const std::function<void(int64_t, double)> &progress = nullptr);

} // namespace onescale

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
// Inference paths. Three ways to turn checkpoints into pixels:
//
//   restore_one_step    degraded image -> tokens -> one full-attention
//                       backbone pass -> argmax -> decoded image. The whole
//                       point of distillation is that this single pass
//                       replaces the teacher's scale-by-scale crawl.
//   sample_teacher      the autoregressive reference path: K passes, one per
//                       scale, each sampling from a temperature-scaled
//                       softmax with a seeded generator.
//   zero_shot_upsample  the training-free baseline: keep the degraded
//                       image's coarse token scales as a trusted prefix and
//                       let the teacher invent the fine scales.
//
// Every path counts its backbone passes; the counts are contractual (1, K,
// and K - s respectively) and the tests pin them.

#pragma once

#include "onescale/distill.hpp"
#include "onescale/tokenizer.hpp"
#include "onescale/transformer.hpp"

#include <cstdint>
#include <string>

namespace onescale {

// What an inference call did, for logs and benchmark tables. `output_path`
// stays empty for in-memory calls; file-writing callers fill it in. The id
// fields are parameter checksums, good enough to tell two checkpoints apart.
struct RestoreReport {
    std::string output_path;
    int forward_pass_count = 0;
    double wall_ms = 0.0;
    std::string schedule;
    uint64_t student_id = 0;
    uint64_t tokenizer_id = 0;
};

// Per-position argmax over the vocabulary axis of each scale's logits.
TokenPyramid argmax_tokens(const LogitsPyramid &logits);

// One-step restoration: optional learned pre-restore, tokenize, a single
// student pass, argmax decode, detokenize. Deterministic by construction —
// restoration wants one answer, not a draw. The condition encoder (when the
// bundle carries one) reads the raw degraded image, matching training.
Tensor restore_one_step(const Tensor &lq, const StudentBundle &student,
                        const Tokenizer &tokenizer, RestoreReport *report = nullptr);

// Same path without the mask-mode check: a single backbone pass under
// whatever mask the bundle carries. Restoration proper always wants full
// attention (restore_one_step enforces that); the ablation bench uses this
// to score a student that kept the teacher's block-causal mask.
Tensor single_pass_restore(const Tensor &lq, const StudentBundle &student,
                           const Tokenizer &tokenizer, RestoreReport *report = nullptr);

// Full autoregressive sampling: K sequential teacher passes. At pass k the
// block-causal mask guarantees scale-k logits ignore the not-yet-sampled
// scales, so the placeholder tokens they contain are harmless. Each position
// draws independently from softmax(logits / temperature) using a generator
// derived from `seed`; temperature -> 0 degenerates to argmax.
TokenPyramid sample_teacher(const Backbone &teacher, const Tensor *condition,
                            float temperature, uint64_t seed);

// Training-free upsampling baseline: trust the degraded image's token scales
// 1..s, sample scales s+1..K from the teacher (K - s passes), decode the
// mixed pyramid. `s` counts scales, 1-based; s == K is rejected because
// there would be nothing left to complete. `out_tokens`, when given,
// receives the mixed pyramid so callers can inspect the preserved prefix.
Tensor zero_shot_upsample(const Tensor &lq, int s, const Backbone &teacher,
                          const Tokenizer &tokenizer, uint64_t seed,
                          float temperature = 1.0f, TokenPyramid *out_tokens = nullptr);

} // namespace onescale

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

#include "onescale/runtime.hpp"

#include "onescale/rng.hpp"

#include <chrono>
#include <cmath>
#include <vector>

namespace onescale {

namespace {

// Draw one category from softmax(row / temperature). Computed in double with
// the usual max shift so tiny temperatures collapse cleanly onto the argmax
// instead of overflowing.
int sample_category(const float *row, int vocab, double temperature, Rng &rng) {
    double scaled_max = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < vocab; ++j)
        scaled_max = std::max(scaled_max, static_cast<double>(row[j]) / temperature);
    std::vector<double> probs(static_cast<size_t>(vocab));
    double total = 0.0;
    for (int j = 0; j < vocab; ++j) {
        probs[static_cast<size_t>(j)] =
            std::exp(static_cast<double>(row[j]) / temperature - scaled_max);
        total += probs[static_cast<size_t>(j)];
    }
    const double u = rng.uniform(0.0, 1.0) * total;
    double acc = 0.0;
    for (int j = 0; j < vocab; ++j) {
        acc += probs[static_cast<size_t>(j)];
        if (u < acc) return j;
    }
    return vocab - 1; // rounding fallback
}

// One autoregressive step: run the teacher on the pyramid as it stands and
// resample scale k from its logits. Block causality makes the placeholder
// tokens at scales > k invisible to these logits.
void sample_scale(const Backbone &teacher, TokenPyramid &tokens, const Tensor *condition,
                  int k, double temperature, Rng &rng) {
    const LogitsPyramid logits = teacher.teacher_forward(tokens, condition);
    const Tensor &lk = logits[static_cast<size_t>(k)];
    const int positions = lk.dim(0) * lk.dim(1);
    const int vocab = lk.dim(2);
    for (int i = 0; i < positions; ++i)
        tokens.maps[static_cast<size_t>(k)][static_cast<size_t>(i)] =
            sample_category(lk.data() + static_cast<size_t>(i) * vocab, vocab, temperature, rng);
}

TokenPyramid placeholder_pyramid(const ScaleSchedule &schedule) {
    TokenPyramid tokens;
    for (const auto &[h, w] : schedule.scales)
        tokens.maps.emplace_back(static_cast<size_t>(h) * static_cast<size_t>(w), 0);
    return tokens;
}

uint64_t checksum_of(const std::vector<nn::Param *> &params) {
    return nn::param_checksum(params);
}

} // namespace

TokenPyramid argmax_tokens(const LogitsPyramid &logits) {
    TokenPyramid tokens;
    for (const Tensor &lk : logits) {
        require(lk.rank() == 3, "argmax_tokens expects [h, w, vocab] logits");
        const int positions = lk.dim(0) * lk.dim(1);
        const int vocab = lk.dim(2);
        std::vector<int> map(static_cast<size_t>(positions));
        for (int i = 0; i < positions; ++i) {
            const float *row = lk.data() + static_cast<size_t>(i) * vocab;
            int best = 0;
            for (int j = 1; j < vocab; ++j)
                if (row[j] > row[best]) best = j;
            map[static_cast<size_t>(i)] = best;
        }
        tokens.maps.push_back(std::move(map));
    }
    return tokens;
}

Tensor restore_one_step(const Tensor &lq, const StudentBundle &student,
                        const Tokenizer &tokenizer, RestoreReport *report) {
    require(student.backbone.mode() == MaskMode::full,
            "one-step restoration needs a full-attention student");
    return single_pass_restore(lq, student, tokenizer, report);
}

Tensor single_pass_restore(const Tensor &lq, const StudentBundle &student,
                           const Tokenizer &tokenizer, RestoreReport *report) {
    require(student.backbone.config().schedule == tokenizer.config().schedule,
            "student and tokenizer schedules differ");
    require(student.backbone.config().vocab == tokenizer.config().vocab &&
                student.backbone.config().latent_dim == tokenizer.config().latent_dim,
            "student and tokenizer token spaces differ");

    const auto start = std::chrono::steady_clock::now();
    Tensor pre_restored;
    const Tensor *input = &lq;
    if (student.prerestorer) {
        pre_restored = student.prerestorer->forward(lq);
        input = &pre_restored;
    }
    const TokenPyramid tokens = tokenizer.tokenize(*input);

    Tensor condition;
    const Tensor *cond_ptr = nullptr;
    if (student.cond_encoder) {
        condition = student.cond_encoder->forward(lq);
        cond_ptr = &condition;
    }

    const uint64_t passes_before = student.backbone.forward_count();
    const LogitsPyramid logits = student.backbone.mode() == MaskMode::full
                                     ? student.backbone.student_forward(tokens, cond_ptr)
                                     : student.backbone.teacher_forward(tokens, cond_ptr);
    const int passes =
        static_cast<int>(student.backbone.forward_count() - passes_before);
    require(passes == 1, "one-step restoration must use exactly one backbone pass");

    Tensor out = tokenizer.detokenize(argmax_tokens(logits));
    out.clamp(0.0f, 1.0f);
    const auto stop = std::chrono::steady_clock::now();

    if (report != nullptr) {
        report->forward_pass_count = passes;
        report->wall_ms =
            std::chrono::duration<double, std::milli>(stop - start).count();
        report->schedule = tokenizer.config().schedule.to_string();
        std::vector<nn::Param *> sp =
            const_cast<Backbone &>(student.backbone).params();
        if (student.cond_encoder)
            for (nn::Param *p :
                 const_cast<ConditionEncoder &>(*student.cond_encoder).params())
                sp.push_back(p);
        if (student.prerestorer)
            for (nn::Param *p :
                 const_cast<PreRestorer &>(*student.prerestorer).params())
                sp.push_back(p);
        report->student_id = checksum_of(sp);
        report->tokenizer_id = checksum_of(const_cast<Tokenizer &>(tokenizer).params());
    }
    return out;
}

TokenPyramid sample_teacher(const Backbone &teacher, const Tensor *condition,
                            float temperature, uint64_t seed) {
    require(std::isfinite(temperature) && temperature > 0.0f,
            "sampling temperature must be positive");
    const ScaleSchedule &schedule = teacher.config().schedule;
    TokenPyramid tokens = placeholder_pyramid(schedule);
    Rng rng = Rng::derive(seed, "teacher-sample");
    for (int k = 0; k < schedule.count(); ++k)
        sample_scale(teacher, tokens, condition, k, temperature, rng);
    return tokens;
}

Tensor zero_shot_upsample(const Tensor &lq, int s, const Backbone &teacher,
                          const Tokenizer &tokenizer, uint64_t seed, float temperature,
                          TokenPyramid *out_tokens) {
    require(teacher.config().schedule == tokenizer.config().schedule,
            "teacher and tokenizer schedules differ");
    require(teacher.config().vocab == tokenizer.config().vocab &&
                teacher.config().latent_dim == tokenizer.config().latent_dim,
            "teacher and tokenizer token spaces differ");
    const int count = teacher.config().schedule.count();
    require(s >= 1 && s < count,
            "zero-shot upsampling needs a scale prefix 1 <= s < " +
                std::to_string(count) + ", got " + std::to_string(s));
    require(std::isfinite(temperature) && temperature > 0.0f,
            "sampling temperature must be positive");

    TokenPyramid tokens = tokenizer.tokenize(lq);
    Rng rng = Rng::derive(seed, "zero-shot-sample");
    for (int k = s; k < count; ++k)
        sample_scale(teacher, tokens, nullptr, k, temperature, rng);

    if (out_tokens != nullptr) *out_tokens = tokens;
    Tensor out = tokenizer.detokenize(tokens);
    out.clamp(0.0f, 1.0f);
    return out;
}

} // namespace onescale

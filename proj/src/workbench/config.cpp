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

#include "onescale/workbench.hpp"

#include "onescale/rng.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace onescale {

namespace {

std::string trim(const std::string &s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void parse_fail(int line, const std::string &msg) {
    fail("config parse error at line " + std::to_string(line) + ": " + msg);
}

long long to_int(const std::string &value, int line, const std::string &key) {
    size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &used);
    } catch (const std::exception &) {
        parse_fail(line, "invalid integer for " + key + ": '" + value + "'");
    }
    if (used != value.size())
        parse_fail(line, "invalid integer for " + key + ": '" + value + "'");
    return v;
}

double to_num(const std::string &value, int line, const std::string &key) {
    size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception &) {
        parse_fail(line, "invalid number for " + key + ": '" + value + "'");
    }
    if (used != value.size())
        parse_fail(line, "invalid number for " + key + ": '" + value + "'");
    return v;
}

bool to_bool(const std::string &value, int line, const std::string &key) {
    if (value == "true") return true;
    if (value == "false") return false;
    parse_fail(line, "expected true or false for " + key + ", got '" + value + "'");
}

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string fmt_factors(const std::vector<int> &factors) {
    std::string out;
    for (size_t i = 0; i < factors.size(); ++i) {
        if (i > 0) out += ',';
        out += std::to_string(factors[i]);
    }
    return out;
}

std::vector<int> parse_factors(const std::string &value, int line, const std::string &key) {
    std::vector<int> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(static_cast<int>(to_int(trim(item), line, key)));
    if (out.empty()) parse_fail(line, "empty list for " + key);
    return out;
}

// Applies one key = value to the config; unknown names fail loudly.
void apply_key(RunConfig &cfg, const std::string &section, const std::string &key,
               const std::string &value, int line) {
    const std::string full = section + "." + key;
    auto as_int = [&] { return static_cast<int>(to_int(value, line, full)); };
    auto as_float = [&] { return static_cast<float>(to_num(value, line, full)); };
    auto as_double = [&] { return to_num(value, line, full); };

    if (section == "run") {
        if (key == "seed") {
            cfg.seed = static_cast<uint64_t>(to_int(value, line, full));
            return;
        }
    } else if (section == "data") {
        if (key == "count") { cfg.data.count = as_int(); return; }
        if (key == "image_size") { cfg.data.image_size = as_int(); return; }
        if (key == "holdout") { cfg.data.holdout = as_int(); return; }
    } else if (section == "tokenizer") {
        if (key == "schedule") {
            try {
                cfg.tokenizer.schedule = ScaleSchedule::parse(value);
            } catch (const std::exception &e) {
                parse_fail(line, std::string(e.what()));
            }
            return;
        }
        if (key == "vocab") { cfg.tokenizer.vocab = as_int(); return; }
        if (key == "latent_dim") { cfg.tokenizer.latent_dim = as_int(); return; }
        if (key == "base_width") { cfg.tokenizer.base_width = as_int(); return; }
    } else if (section == "tokenizer_train") {
        if (key == "steps") { cfg.tokenizer_train.steps = as_int(); return; }
        if (key == "batch") { cfg.tokenizer_train.batch = as_int(); return; }
        if (key == "lr") { cfg.tokenizer_train.lr = as_float(); return; }
        if (key == "commitment") { cfg.tokenizer_train.commitment = as_float(); return; }
        if (key == "ema_decay") { cfg.tokenizer_train.ema_decay = as_float(); return; }
        if (key == "dead_code_threshold") {
            cfg.tokenizer_train.dead_code_threshold = as_float();
            return;
        }
        if (key == "grad_clip") { cfg.tokenizer_train.grad_clip = as_float(); return; }
        if (key == "log_every") { cfg.tokenizer_train.log_every = as_int(); return; }
    } else if (section == "backbone") {
        if (key == "layers") { cfg.backbone.layers = as_int(); return; }
        if (key == "model_dim") { cfg.backbone.model_dim = as_int(); return; }
        if (key == "heads") { cfg.backbone.heads = as_int(); return; }
        if (key == "ff_mult") { cfg.backbone.ff_mult = as_int(); return; }
        if (key == "cond_dim") { cfg.backbone.cond_dim = as_int(); return; }
    } else if (section == "teacher") {
        if (key == "steps") { cfg.teacher_train.steps = as_int(); return; }
        if (key == "batch") { cfg.teacher_train.batch = as_int(); return; }
        if (key == "lr") { cfg.teacher_train.lr = as_float(); return; }
        if (key == "grad_clip") { cfg.teacher_train.grad_clip = as_float(); return; }
        if (key == "log_every") { cfg.teacher_train.log_every = as_int(); return; }
    } else if (section == "degrade") {
        if (key == "sigma_lo") { cfg.degrade.sigma_lo = as_double(); return; }
        if (key == "sigma_hi") { cfg.degrade.sigma_hi = as_double(); return; }
        if (key == "factors") { cfg.degrade.factors = parse_factors(value, line, full); return; }
        if (key == "noise_lo") { cfg.degrade.noise_lo = as_double(); return; }
        if (key == "noise_hi") { cfg.degrade.noise_hi = as_double(); return; }
        if (key == "quality_lo") { cfg.degrade.quality_lo = as_int(); return; }
        if (key == "quality_hi") { cfg.degrade.quality_hi = as_int(); return; }
    } else if (section == "distill") {
        if (key == "steps") { cfg.distill.steps = as_int(); return; }
        if (key == "batch") { cfg.distill.batch = as_int(); return; }
        if (key == "lr") { cfg.distill.lr = as_float(); return; }
        if (key == "weight_decay") { cfg.distill.weight_decay = as_float(); return; }
        if (key == "grad_clip") { cfg.distill.grad_clip = as_float(); return; }
        if (key == "lambda_kl") { cfg.distill.weights.lambda_kl = as_float(); return; }
        if (key == "lambda_perc") { cfg.distill.weights.lambda_perc = as_float(); return; }
        if (key == "lambda_mse") { cfg.distill.weights.lambda_mse = as_float(); return; }
        if (key == "adapter_rank") { cfg.distill.adapter.rank = as_int(); return; }
        if (key == "adapter_alpha") { cfg.distill.adapter.alpha = as_float(); return; }
        if (key == "student_mask") {
            if (value == "full") cfg.distill.student_mask = MaskMode::full;
            else if (value == "block_causal") cfg.distill.student_mask = MaskMode::block_causal;
            else parse_fail(line, "expected full or block_causal for " + full +
                                      ", got '" + value + "'");
            return;
        }
        if (key == "use_prerestorer") { cfg.distill.use_prerestorer = to_bool(value, line, full); return; }
        if (key == "prerestorer_width") { cfg.distill.prerestorer_width = as_int(); return; }
        if (key == "log_every") { cfg.distill.log_every = as_int(); return; }
    } else {
        parse_fail(line, "unknown config section: " + section);
    }
    parse_fail(line, "unknown config key: " + full);
}

} // namespace

void RunConfig::validate() const {
    require(data.count >= 1, "data.count must be at least 1");
    require(data.holdout >= 0, "data.holdout cannot be negative");
    require(data.image_size >= 16, "data.image_size must be at least 16");
    tokenizer.schedule.validate();
    require(data.image_size ==
                tokenizer.schedule.final_h() * tokenizer.factor() &&
            data.image_size == tokenizer.schedule.final_w() * tokenizer.factor(),
            "the schedule's final scale times the patch factor must equal "
            "data.image_size");
    require(tokenizer.vocab >= 2, "tokenizer.vocab must be at least 2");
    require(tokenizer.latent_dim >= 1, "tokenizer.latent_dim must be at least 1");
    require(tokenizer.base_width >= 1, "tokenizer.base_width must be at least 1");
    backbone.validate();
    require(backbone.vocab == tokenizer.vocab &&
                backbone.latent_dim == tokenizer.latent_dim &&
                backbone.schedule == tokenizer.schedule,
            "backbone token space must mirror the tokenizer");
    for (const auto &[name, steps, batch, lr, log_every] :
         {std::tuple<const char *, int, int, float, int>{
              "tokenizer_train", tokenizer_train.steps, tokenizer_train.batch,
              tokenizer_train.lr, tokenizer_train.log_every},
          {"teacher", teacher_train.steps, teacher_train.batch, teacher_train.lr,
           teacher_train.log_every},
          {"distill", distill.steps, distill.batch, distill.lr, distill.log_every}}) {
        const std::string section(name);
        require(steps >= 1, section + ".steps must be at least 1");
        require(batch >= 1, section + ".batch must be at least 1");
        require(lr > 0.0f, section + ".lr must be positive");
        require(log_every >= 1, section + ".log_every must be at least 1");
    }
    degrade.validate();
    distill.weights.validate();
    require(distill.adapter.rank >= 1, "distill.adapter_rank must be at least 1");
    require(distill.adapter.alpha > 0.0f, "distill.adapter_alpha must be positive");
    require(!distill.use_prerestorer || distill.prerestorer_width >= 1,
            "distill.prerestorer_width must be at least 1");
}

std::string RunConfig::canonical_text() const {
    std::ostringstream out;
    out << "[run]\n";
    out << "seed = " << seed << "\n\n";
    out << "[data]\n";
    out << "count = " << data.count << "\n";
    out << "image_size = " << data.image_size << "\n";
    out << "holdout = " << data.holdout << "\n\n";
    out << "[tokenizer]\n";
    out << "schedule = " << tokenizer.schedule.to_string() << "\n";
    out << "vocab = " << tokenizer.vocab << "\n";
    out << "latent_dim = " << tokenizer.latent_dim << "\n";
    out << "base_width = " << tokenizer.base_width << "\n\n";
    out << "[tokenizer_train]\n";
    out << "steps = " << tokenizer_train.steps << "\n";
    out << "batch = " << tokenizer_train.batch << "\n";
    out << "lr = " << fmt_num(tokenizer_train.lr) << "\n";
    out << "commitment = " << fmt_num(tokenizer_train.commitment) << "\n";
    out << "ema_decay = " << fmt_num(tokenizer_train.ema_decay) << "\n";
    out << "dead_code_threshold = " << fmt_num(tokenizer_train.dead_code_threshold)
        << "\n";
    out << "grad_clip = " << fmt_num(tokenizer_train.grad_clip) << "\n";
    out << "log_every = " << tokenizer_train.log_every << "\n\n";
    out << "[backbone]\n";
    out << "layers = " << backbone.layers << "\n";
    out << "model_dim = " << backbone.model_dim << "\n";
    out << "heads = " << backbone.heads << "\n";
    out << "ff_mult = " << backbone.ff_mult << "\n";
    out << "cond_dim = " << backbone.cond_dim << "\n\n";
    out << "[teacher]\n";
    out << "steps = " << teacher_train.steps << "\n";
    out << "batch = " << teacher_train.batch << "\n";
    out << "lr = " << fmt_num(teacher_train.lr) << "\n";
    out << "grad_clip = " << fmt_num(teacher_train.grad_clip) << "\n";
    out << "log_every = " << teacher_train.log_every << "\n\n";
    out << "[degrade]\n";
    out << "sigma_lo = " << fmt_num(degrade.sigma_lo) << "\n";
    out << "sigma_hi = " << fmt_num(degrade.sigma_hi) << "\n";
    out << "factors = " << fmt_factors(degrade.factors) << "\n";
    out << "noise_lo = " << fmt_num(degrade.noise_lo) << "\n";
    out << "noise_hi = " << fmt_num(degrade.noise_hi) << "\n";
    out << "quality_lo = " << degrade.quality_lo << "\n";
    out << "quality_hi = " << degrade.quality_hi << "\n\n";
    out << "[distill]\n";
    out << "steps = " << distill.steps << "\n";
    out << "batch = " << distill.batch << "\n";
    out << "lr = " << fmt_num(distill.lr) << "\n";
    out << "weight_decay = " << fmt_num(distill.weight_decay) << "\n";
    out << "grad_clip = " << fmt_num(distill.grad_clip) << "\n";
    out << "lambda_kl = " << fmt_num(distill.weights.lambda_kl) << "\n";
    out << "lambda_perc = " << fmt_num(distill.weights.lambda_perc) << "\n";
    out << "lambda_mse = " << fmt_num(distill.weights.lambda_mse) << "\n";
    out << "adapter_rank = " << distill.adapter.rank << "\n";
    out << "adapter_alpha = " << fmt_num(distill.adapter.alpha) << "\n";
    out << "student_mask = "
        << (distill.student_mask == MaskMode::full ? "full" : "block_causal") << "\n";
    out << "use_prerestorer = " << (distill.use_prerestorer ? "true" : "false") << "\n";
    out << "prerestorer_width = " << distill.prerestorer_width << "\n";
    out << "log_every = " << distill.log_every << "\n";
    return out.str();
}

uint64_t RunConfig::hash() const { return fnv1a64(canonical_text()); }

RunConfig parse_run_config(const std::string &text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::set<std::string> seen;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const size_t comment = raw.find_first_of("#;");
        std::string line = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                parse_fail(line_no, "malformed section header: " + line);
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            parse_fail(line_no, "expected key = value, got: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) parse_fail(line_no, "missing key before '='");
        if (section.empty())
            parse_fail(line_no, "key '" + key + "' appears before any [section]");
        if (!seen.insert(section + "." + key).second)
            parse_fail(line_no, "duplicate config key: " + section + "." + key);
        apply_key(cfg, section, key, value, line_no);
    }

    // One source of truth for the token space: the tokenizer section.
    cfg.tokenizer.image_size = cfg.data.image_size;
    cfg.backbone.schedule = cfg.tokenizer.schedule;
    cfg.backbone.vocab = cfg.tokenizer.vocab;
    cfg.backbone.latent_dim = cfg.tokenizer.latent_dim;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

void save_run_config(const RunConfig &cfg, const std::string &path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "cannot write config: " + path);
    out << cfg.canonical_text();
    out.flush();
    require(out.good(), "write failed for config: " + path);
}

uint64_t stage_seed(uint64_t master_seed, std::string_view stage) {
    return Rng::derive(master_seed, stage).next_u64();
}

} // namespace onescale

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

#include <doctest.h>

#include "onescale/degrade.hpp"
#include "onescale/image.hpp"
#include "onescale/rng.hpp"
#include "onescale/workbench.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace onescale;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out << text;
}

std::vector<std::string> lines_of(const std::string &text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    for (std::string line; std::getline(ss, line);) lines.push_back(line);
    return lines;
}

std::string error_of(const std::function<void()> &fn) {
    try {
        fn();
    } catch (const std::exception &e) {
        return e.what();
    }
    return "";
}

bool contains(const std::string &haystack, const std::string &needle) {
    return haystack.find(needle) != std::string::npos;
}

// A config small enough that every training stage finishes in well under a
// second but still exercises three scales, conditioning, and the
// pre-restorer.
const char *kTinyConfig = R"(
[run]
seed = 11

[data]
count = 6
image_size = 16
holdout = 2

[tokenizer]
schedule = 1x1,2x2,4x4
vocab = 16
latent_dim = 4
base_width = 4

[tokenizer_train]
steps = 40
batch = 2
log_every = 10

[backbone]
layers = 1
model_dim = 16
heads = 2
ff_mult = 2
cond_dim = 4

[teacher]
steps = 30
batch = 2
log_every = 10

[degrade]
factors = 1,2

[distill]
steps = 3
batch = 1
log_every = 1
adapter_rank = 2
prerestorer_width = 4
)";

} // namespace

TEST_CASE("run config survives a canonical-text round trip") {
    const RunConfig base = parse_run_config(kTinyConfig);
    const std::string text = base.canonical_text();
    const RunConfig again = parse_run_config(text);
    CHECK(again.canonical_text() == text);
    CHECK(again.hash() == base.hash());
    CHECK(again.seed == 11);
    CHECK(again.data.image_size == 16);
    CHECK(again.tokenizer.image_size == 16);
    CHECK(again.tokenizer.schedule.to_string() == "1x1,2x2,4x4");
    CHECK(again.backbone.schedule == again.tokenizer.schedule);
    CHECK(again.backbone.vocab == 16);
    CHECK(again.backbone.latent_dim == 4);
    CHECK(again.distill.steps == 3);

    // An empty config is the library defaults, which must also validate.
    const RunConfig defaults = parse_run_config("");
    CHECK(defaults.data.image_size == 64);
    CHECK(defaults.hash() != base.hash());

    // Any semantic change shows up in the hash.
    RunConfig tweaked = base;
    tweaked.seed = 12;
    CHECK(tweaked.hash() != base.hash());
    CHECK(tweaked.canonical_text() != text);
}

TEST_CASE("run config names unknown keys and sections") {
    const std::string typo = error_of(
        [] { parse_run_config("[distill]\nlamda_kl = 0.5\n"); });
    CHECK(contains(typo, "unknown config key: distill.lamda_kl"));

    const std::string section = error_of(
        [] { parse_run_config("[distil]\nsteps = 3\n"); });
    CHECK(contains(section, "unknown config section: distil"));
}

TEST_CASE("run config parse errors carry line numbers") {
    const std::string header = error_of(
        [] { parse_run_config("[run]\nseed = 1\n[tokenizer\nvocab = 8\n"); });
    CHECK(contains(header, "line 3"));
    CHECK(contains(header, "malformed section header"));

    const std::string no_eq = error_of(
        [] { parse_run_config("[run]\nseed 1\n"); });
    CHECK(contains(no_eq, "line 2"));
    CHECK(contains(no_eq, "expected key = value"));

    const std::string bad_int = error_of(
        [] { parse_run_config("[tokenizer]\nvocab = banana\n"); });
    CHECK(contains(bad_int, "line 2"));
    CHECK(contains(bad_int, "invalid integer for tokenizer.vocab"));

    const std::string bad_bool = error_of(
        [] { parse_run_config("[distill]\nuse_prerestorer = yes\n"); });
    CHECK(contains(bad_bool, "expected true or false"));

    const std::string orphan = error_of(
        [] { parse_run_config("seed = 1\n"); });
    CHECK(contains(orphan, "before any [section]"));

    const std::string dup = error_of(
        [] { parse_run_config("[run]\nseed = 1\nseed = 2\n"); });
    CHECK(contains(dup, "duplicate config key: run.seed"));
}

TEST_CASE("run config validation catches inconsistent geometry") {
    // The default schedule needs 64-pixel images; 32 cannot match.
    CHECK_THROWS(parse_run_config("[data]\nimage_size = 32\n"));
    CHECK_THROWS(parse_run_config("[tokenizer]\nvocab = 1\n"));
    CHECK_THROWS(parse_run_config("[distill]\nlambda_kl = -1\n"));
    CHECK_THROWS(parse_run_config("[data]\ncount = 0\n"));
}

TEST_CASE("stage seeds are deterministic and distinct") {
    CHECK(stage_seed(7, "tokenizer") == stage_seed(7, "tokenizer"));
    std::set<uint64_t> seen;
    for (const char *stage : {"tokenizer", "teacher", "distill", "degrade"})
        seen.insert(stage_seed(7, stage));
    CHECK(seen.size() == 4);
    CHECK(stage_seed(7, "tokenizer") != stage_seed(8, "tokenizer"));
}

TEST_CASE("toy images are deterministic and non-trivial") {
    Rng a(123), b(123);
    const Tensor first = toy_image(16, a);
    const Tensor second = toy_image(16, b);
    CHECK(first.shape() == std::vector<int>{16, 16, 3});
    for (size_t i = 0; i < first.numel(); ++i) {
        CHECK(first.data()[i] == second.data()[i]);
        CHECK(first.data()[i] >= 0.0f);
        CHECK(first.data()[i] <= 1.0f);
    }

    // Drawing again from the same stream gives a different image, and every
    // image has real structure (a flat image would have zero deviation).
    Rng stream(9);
    const Tensor *prev = nullptr;
    Tensor prev_store;
    for (int i = 0; i < 8; ++i) {
        const Tensor img = toy_image(16, stream);
        double sum = 0.0, sq = 0.0;
        for (size_t j = 0; j < img.numel(); ++j) {
            sum += img.data()[j];
            sq += static_cast<double>(img.data()[j]) * img.data()[j];
        }
        const double n = static_cast<double>(img.numel());
        const double var = sq / n - (sum / n) * (sum / n);
        CHECK(std::sqrt(std::max(0.0, var)) > 0.02);
        if (prev != nullptr) {
            bool differs = false;
            for (size_t j = 0; j < img.numel() && !differs; ++j)
                differs = img.data()[j] != prev->data()[j];
            CHECK(differs);
        }
        prev_store = img;
        prev = &prev_store;
    }

    Rng tiny(1);
    CHECK_THROWS(toy_image(8, tiny));
}

TEST_CASE("toy dataset generation is byte-identical across runs") {
    const fs::path root = fs::temp_directory_path() / "onescale_wb_dataset";
    fs::remove_all(root);
    const std::string dir_a = (root / "a").string();
    const std::string dir_b = (root / "b").string();

    const DatasetSummary sa = generate_toy_dataset(3, 16, 77, dir_a, 0xabcdULL);
    const DatasetSummary sb = generate_toy_dataset(3, 16, 77, dir_b, 0xabcdULL);
    CHECK(sa.count == 3);
    for (int i = 0; i < 3; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", i);
        CHECK(slurp((fs::path(dir_a) / name).string()) ==
              slurp((fs::path(dir_b) / name).string()));
    }
    uint64_t stamped = 0;
    CHECK(read_hash_stamp(sa.manifest_path, stamped));
    CHECK(stamped == 0xabcdULL);
    CHECK(read_image_manifest(sa.manifest_path).size() == 3);

    // Offsets shift the file names so shards can share a directory, and the
    // image at a given global index does not depend on how it was sharded.
    const std::string dir_c = (root / "c").string();
    generate_toy_dataset(2, 16, 77, dir_c, 0xabcdULL, 1);
    CHECK(fs::exists(fs::path(dir_c) / "img_00001.png"));
    CHECK(fs::exists(fs::path(dir_c) / "img_00002.png"));
    CHECK(!fs::exists(fs::path(dir_c) / "img_00000.png"));
    CHECK(slurp((fs::path(dir_c) / "img_00001.png").string()) ==
          slurp((fs::path(dir_a) / "img_00001.png").string()));

    CHECK_THROWS(generate_toy_dataset(0, 16, 1, (root / "d").string(), 0));
    CHECK_THROWS(generate_toy_dataset(1, 8, 1, (root / "e").string(), 0));
    fs::remove_all(root);
}

TEST_CASE("image manifests resolve paths and hash stamps round trip") {
    const fs::path root = fs::temp_directory_path() / "onescale_wb_manifest";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string manifest = (root / "manifest.tsv").string();
    spit(manifest, "# file\nalpha.png\n\nbeta.png\n");

    const std::vector<std::string> files = read_image_manifest(manifest);
    REQUIRE(files.size() == 2);
    CHECK(files[0] == (root / "alpha.png").string());
    CHECK(files[1] == (root / "beta.png").string());

    uint64_t value = 99;
    CHECK(!read_hash_stamp(manifest, value));
    append_hash_stamp(manifest, 0x1234abcd5678ef00ULL);
    CHECK(read_hash_stamp(manifest, value));
    CHECK(value == 0x1234abcd5678ef00ULL);
    // A later stamp supersedes an earlier one.
    append_hash_stamp(manifest, 0x1ULL);
    CHECK(read_hash_stamp(manifest, value));
    CHECK(value == 0x1ULL);

    spit((root / "empty.tsv").string(), "# file\n");
    CHECK_THROWS(read_image_manifest((root / "empty.tsv").string()));
    fs::remove_all(root);
}

TEST_CASE("cli rejects bad invocations with usage errors") {
    CHECK(run_cli({}) == 2);
    CHECK(run_cli({"frobnicate"}) == 2);
    CHECK(run_cli({"--help"}) == 0);
    CHECK(run_cli({"gen-data"}) == 2);        // missing required options
    CHECK(run_cli({"restore", "--lq", "x"}) == 2);
    CHECK(run_cli({"gen-data", "--config", "/definitely/missing.ini",
                   "--out", (fs::temp_directory_path() / "onescale_wb_none")
                                .string()}) == 1);
}

TEST_CASE("cli pipeline runs end to end and is reproducible") {
    const fs::path root = fs::temp_directory_path() / "onescale_wb_e2e";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string cfg_path = (root / "run.ini").string();
    spit(cfg_path, kTinyConfig);
    const RunConfig cfg = load_run_config(cfg_path);

    const std::string hq = (root / "hq").string();
    const std::string lq = (root / "lq").string();
    const std::string tok_ckpt = (root / "tok.ckpt").string();
    const std::string teacher_ckpt = (root / "teacher.ckpt").string();
    const std::string student_ckpt = (root / "student.ckpt").string();
    const std::string restored = (root / "restored").string();
    const std::string metrics = (root / "metrics.txt").string();

    // --- data -------------------------------------------------------------
    REQUIRE(run_cli({"gen-data", "--config", cfg_path, "--out", hq}) == 0);
    int png_count = 0;
    for (const auto &entry : fs::directory_iterator(hq))
        if (entry.path().extension() == ".png") ++png_count;
    CHECK(png_count == 6);

    REQUIRE(run_cli({"degrade", "--config", cfg_path, "--hq", hq,
                     "--out", lq}) == 0);
    const std::string pair_manifest = (fs::path(lq) / "manifest.tsv").string();
    CHECK(read_manifest(pair_manifest).size() == 6);
    uint64_t stamp = 0;
    CHECK(read_hash_stamp(pair_manifest, stamp));
    CHECK(stamp == cfg.hash());

    // --- training ---------------------------------------------------------
    REQUIRE(run_cli({"train-tokenizer", "--config", cfg_path, "--data", hq,
                     "--out", tok_ckpt}) == 0);
    CHECK(fs::exists(tok_ckpt));
    CHECK(fs::exists(tok_ckpt + ".log"));

    REQUIRE(run_cli({"train-teacher", "--config", cfg_path, "--data", hq,
                     "--tokenizer", tok_ckpt, "--out", teacher_ckpt}) == 0);
    CHECK(fs::exists(teacher_ckpt));

    REQUIRE(run_cli({"distill", "--config", cfg_path, "--pairs", pair_manifest,
                     "--teacher", teacher_ckpt, "--tokenizer", tok_ckpt,
                     "--out", student_ckpt}) == 0);
    CHECK(fs::exists(student_ckpt));
    const std::vector<std::string> log_lines =
        lines_of(slurp(student_ckpt + ".log"));
    REQUIRE(log_lines.size() == 4); // header + three steps
    CHECK(log_lines[0] == "step\tkl\tperc\tmse\ttotal\twall_ms");

    // --- restoration ------------------------------------------------------
    const std::string report = (root / "restore_report.tsv").string();
    REQUIRE(run_cli({"restore", "--lq", lq, "--student", student_ckpt,
                     "--tokenizer", tok_ckpt, "--out", restored,
                     "--report", report}) == 0);
    png_count = 0;
    for (const auto &entry : fs::directory_iterator(restored))
        if (entry.path().extension() == ".png") ++png_count;
    CHECK(png_count == 6);
    // Every report row records exactly one forward pass.
    int data_rows = 0;
    for (const std::string &line : lines_of(slurp(report))) {
        if (line.empty() || line[0] == '#' || line.rfind("file\t", 0) == 0)
            continue;
        const size_t tab1 = line.find('\t');
        REQUIRE(tab1 != std::string::npos);
        const size_t tab2 = line.find('\t', tab1 + 1);
        REQUIRE(tab2 != std::string::npos);
        CHECK(line.substr(tab1 + 1, tab2 - tab1 - 1) == "1");
        ++data_rows;
    }
    CHECK(data_rows == 6);

    // Single-file input works too.
    const std::string restored_one = (root / "restored_one").string();
    REQUIRE(run_cli({"restore", "--lq",
                     (fs::path(lq) / "img_00000.png").string(), "--student",
                     student_ckpt, "--tokenizer", tok_ckpt, "--out",
                     restored_one}) == 0);
    CHECK(fs::exists(fs::path(restored_one) / "img_00000.png"));

    // --- evaluation -------------------------------------------------------
    REQUIRE(run_cli({"evaluate", "--pairs", pair_manifest, "--restored",
                     restored, "--out", metrics}) == 0);
    const std::vector<std::string> metric_lines = lines_of(slurp(metrics));
    REQUIRE(metric_lines.size() == 9); // stamp + header + 6 rows + mean
    CHECK(metric_lines[1] == "file\tpsnr\tssim");
    CHECK(metric_lines[8].rfind("mean\t", 0) == 0);
    CHECK(read_hash_stamp(metrics, stamp));
    CHECK(stamp == cfg.hash());

    // --- reproducibility of every non-training stage ----------------------
    const std::string hq2 = (root / "hq2").string();
    REQUIRE(run_cli({"gen-data", "--config", cfg_path, "--out", hq2}) == 0);
    for (int i = 0; i < 6; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", i);
        CHECK(slurp((fs::path(hq) / name).string()) ==
              slurp((fs::path(hq2) / name).string()));
    }
    const std::string restored2 = (root / "restored2").string();
    REQUIRE(run_cli({"restore", "--lq", lq, "--student", student_ckpt,
                     "--tokenizer", tok_ckpt, "--out", restored2}) == 0);
    for (int i = 0; i < 6; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", i);
        CHECK(slurp((fs::path(restored) / name).string()) ==
              slurp((fs::path(restored2) / name).string()));
    }
    const std::string metrics2 = (root / "metrics2.txt").string();
    REQUIRE(run_cli({"evaluate", "--pairs", pair_manifest, "--restored",
                     restored2, "--out", metrics2}) == 0);
    CHECK(slurp(metrics2) == slurp(metrics));

    // --- sampling and zero-shot completion --------------------------------
    const std::string samples = (root / "samples").string();
    const std::string samples2 = (root / "samples2").string();
    const std::string samples3 = (root / "samples3").string();
    REQUIRE(run_cli({"sample", "--teacher", teacher_ckpt, "--tokenizer",
                     tok_ckpt, "--n", "2", "--seed", "5", "--temperature",
                     "1.5", "--out", samples}) == 0);
    REQUIRE(run_cli({"sample", "--teacher", teacher_ckpt, "--tokenizer",
                     tok_ckpt, "--n", "2", "--seed", "5", "--temperature",
                     "1.5", "--out", samples2}) == 0);
    REQUIRE(run_cli({"sample", "--teacher", teacher_ckpt, "--tokenizer",
                     tok_ckpt, "--n", "2", "--seed", "6", "--temperature",
                     "1.5", "--out", samples3}) == 0);
    std::string bytes_a, bytes_b, bytes_c;
    for (int i = 0; i < 2; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05d.png", i);
        bytes_a += slurp((fs::path(samples) / name).string());
        bytes_b += slurp((fs::path(samples2) / name).string());
        bytes_c += slurp((fs::path(samples3) / name).string());
    }
    CHECK(bytes_a == bytes_b);
    CHECK(bytes_a != bytes_c);

    const std::string zs = (root / "zs").string();
    REQUIRE(run_cli({"zeroshot", "--lq", lq, "--s", "1", "--teacher",
                     teacher_ckpt, "--tokenizer", tok_ckpt, "--seed", "3",
                     "--out", zs}) == 0);
    CHECK(fs::exists(fs::path(zs) / "img_00000.png"));
    CHECK(read_image_manifest((fs::path(zs) / "manifest.tsv").string()).size() ==
          6);

    // --- benchmark and ablation ------------------------------------------
    const std::string bench_out = (root / "bench.txt").string();
    REQUIRE(run_cli({"bench", "--student", student_ckpt, "--teacher",
                     teacher_ckpt, "--tokenizer", tok_ckpt, "--n", "3",
                     "--out", bench_out}) == 0);
    const std::string bench_text = slurp(bench_out);
    CHECK(contains(bench_text, "speedup\t"));
    CHECK(contains(bench_text, "student_passes\t1"));
    CHECK(contains(bench_text, "teacher_passes\t3"));

    const std::string table = (root / "ablation.tsv").string();
    REQUIRE(run_cli({"ablate", "--config", cfg_path, "--pairs", pair_manifest,
                     "--eval-pairs", pair_manifest, "--teacher", teacher_ckpt,
                     "--tokenizer", tok_ckpt, "--arms",
                     "full,no_kl,multi_step_conditioned", "--out", table}) == 0);
    const std::vector<std::string> table_lines = lines_of(slurp(table));
    REQUIRE(table_lines.size() == 5); // header + 3 arms + hash stamp
    CHECK(table_lines[1].rfind("full\t", 0) == 0);
    CHECK(table_lines[3].rfind("multi_step_conditioned\t", 0) == 0);
    CHECK(fs::exists(table + ".diff"));
    CHECK(read_hash_stamp(table, stamp));
    CHECK(stamp == cfg.hash());

    fs::remove_all(root);
}

TEST_CASE("cli evaluate refuses mismatched config hashes unless forced") {
    const fs::path root = fs::temp_directory_path() / "onescale_wb_hash";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string cfg_path = (root / "run.ini").string();
    spit(cfg_path, kTinyConfig);

    // A second config that differs only in seed still has a different hash.
    std::string other_text = kTinyConfig;
    const size_t pos = other_text.find("seed = 11");
    REQUIRE(pos != std::string::npos);
    other_text.replace(pos, 9, "seed = 12");
    const std::string cfg2_path = (root / "run2.ini").string();
    spit(cfg2_path, other_text);
    REQUIRE(load_run_config(cfg2_path).hash() != load_run_config(cfg_path).hash());

    const std::string hq = (root / "hq").string();
    const std::string lq = (root / "lq").string();
    const std::string lq2 = (root / "lq2").string();
    REQUIRE(run_cli({"gen-data", "--config", cfg_path, "--out", hq, "--n",
                     "2"}) == 0);
    REQUIRE(run_cli({"degrade", "--config", cfg_path, "--hq", hq, "--out",
                     lq}) == 0);
    REQUIRE(run_cli({"degrade", "--config", cfg2_path, "--hq", hq, "--out",
                     lq2}) == 0);

    // Stand in for a restoration run stamped with the first config: the
    // hashes come from the manifests, not from the image content.
    const std::string restored = (root / "restored").string();
    fs::create_directories(restored);
    for (const auto &entry : fs::directory_iterator(lq))
        if (entry.path().extension() == ".png")
            fs::copy_file(entry.path(), fs::path(restored) / entry.path().filename());
    std::ofstream manifest(fs::path(restored) / "manifest.tsv");
    manifest << "# file\n";
    for (int i = 0; i < 2; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", i);
        manifest << name << '\n';
    }
    manifest.close();
    append_hash_stamp((fs::path(restored) / "manifest.tsv").string(),
                      load_run_config(cfg_path).hash());

    const std::string metrics = (root / "metrics.txt").string();
    const std::string pair2 = (fs::path(lq2) / "manifest.tsv").string();
    CHECK(run_cli({"evaluate", "--pairs", pair2, "--restored", restored,
                   "--out", metrics}) == 1);
    CHECK(!fs::exists(metrics));
    CHECK(run_cli({"evaluate", "--pairs", pair2, "--restored", restored,
                   "--out", metrics, "--force"}) == 0);
    CHECK(fs::exists(metrics));

    // Matching hashes need no flag.
    const std::string pair1 = (fs::path(lq) / "manifest.tsv").string();
    CHECK(run_cli({"evaluate", "--pairs", pair1, "--restored", restored,
                   "--out", metrics}) == 0);
    fs::remove_all(root);
}

TEST_CASE("cli refuses to reuse a locked output directory") {
    const fs::path root = fs::temp_directory_path() / "onescale_wb_lock";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string cfg_path = (root / "run.ini").string();
    spit(cfg_path, kTinyConfig);

    const std::string out = (root / "out").string();
    fs::create_directories(out);
    spit((fs::path(out) / ".lock").string(), "");
    CHECK(run_cli({"gen-data", "--config", cfg_path, "--out", out, "--n",
                   "1"}) == 1);
    fs::remove(fs::path(out) / ".lock");
    CHECK(run_cli({"gen-data", "--config", cfg_path, "--out", out, "--n",
                   "1"}) == 0);
    // The lock is released afterwards, so a rerun succeeds.
    CHECK(run_cli({"gen-data", "--config", cfg_path, "--out", out, "--n",
                   "1"}) == 0);
    fs::remove_all(root);
}

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
// The workbench command line. Eleven subcommands cover the pipeline from
// toy data to the benchmark table:
//
//   gen-data -> degrade -> train-tokenizer -> train-teacher -> distill
//   -> restore / sample / zeroshot -> evaluate / ablate / bench

#include "onescale/workbench.hpp"

#include "onescale/evalbench.hpp"
#include "onescale/image.hpp"
#include "onescale/rng.hpp"
#include "onescale/runtime.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>

namespace fs = std::filesystem;

namespace onescale {

namespace {

// Exclusive ownership of an output directory for the life of a subcommand.
// create-with-O_EXCL is the atomicity guarantee; a leftover lock from a
// crashed run must be removed by hand, and the message says so.
class DirLock {
public:
    explicit DirLock(const std::string &dir) {
        fs::create_directories(dir);
        path_ = (fs::path(dir) / ".lock").string();
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        require(fd >= 0, "output directory is locked by another run (remove " +
                             path_ + " if it is stale)");
        ::close(fd);
    }
    ~DirLock() { std::remove(path_.c_str()); }
    DirLock(const DirLock &) = delete;
    DirLock &operator=(const DirLock &) = delete;

private:
    std::string path_;
};

std::string hex_hash(uint64_t hash) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

// Sorted .png files directly under dir (no recursion), skipping dotfiles.
std::vector<std::string> list_pngs(const std::string &dir) {
    require(fs::is_directory(dir), "not a directory: " + dir);
    std::vector<std::string> names;
    for (const auto &entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() > 4 && name[0] != '.' &&
            name.substr(name.size() - 4) == ".png")
            names.push_back(name);
    }
    std::sort(names.begin(), names.end());
    require(!names.empty(), "no .png images under " + dir);
    return names;
}

std::vector<Tensor> load_pngs(const std::string &dir,
                              const std::vector<std::string> &names) {
    std::vector<Tensor> images;
    for (const std::string &name : names)
        images.push_back(read_png((fs::path(dir) / name).string()));
    return images;
}

std::vector<PairedSample> load_pairs(const std::string &manifest_path) {
    std::vector<PairedSample> pairs;
    for (const PairRecord &rec : read_manifest(manifest_path)) {
        PairedSample pair;
        pair.hq = read_png(rec.hq_path);
        pair.lq = read_png(rec.lq_path);
        pairs.push_back(std::move(pair));
    }
    require(!pairs.empty(), "pair manifest is empty: " + manifest_path);
    return pairs;
}

std::function<void(int64_t, double)> progress_printer(const std::string &stage) {
    return [stage](int64_t step, double loss) {
        std::printf("%s step %lld loss %.6f\n", stage.c_str(),
                    static_cast<long long>(step), loss);
        std::fflush(stdout);
    };
}

// Per-subcommand option storage. One struct keeps the wiring below readable.
struct CliOptions {
    std::string config;
    std::string out;
    std::string data_dir;
    std::string hq_dir;
    std::string lq_path;
    std::string pairs;
    std::string eval_pairs;
    std::string restored;
    std::string tokenizer_ckpt;
    std::string teacher_ckpt;
    std::string student_ckpt;
    std::string log_path;
    std::string report_path;
    std::string diff_path;
    std::string arms = "full";
    uint64_t seed = 0;
    int n = 0;
    int offset = 0;
    int prefix = 0;
    float temperature = 1.0f;
    bool force = false;
};

uint64_t master_seed(const RunConfig &cfg, const CLI::App *sub, uint64_t flag_value) {
    return sub->count("--seed") > 0 ? flag_value : cfg.seed;
}

// ------------------------------------------------------------ handlers ----

void cmd_gen_data(const CliOptions &opt, const CLI::App *sub) {
    const RunConfig cfg = load_run_config(opt.config);
    const uint64_t seed = master_seed(cfg, sub, opt.seed);
    const int n = opt.n > 0 ? opt.n : cfg.data.count;
    DirLock lock(opt.out);
    const DatasetSummary summary = generate_toy_dataset(
        n, cfg.data.image_size, seed, opt.out, cfg.hash(), opt.offset);
    std::printf("wrote %d images to %s (manifest %s)\n", summary.count,
                opt.out.c_str(), summary.manifest_path.c_str());
}

void cmd_degrade(const CliOptions &opt, const CLI::App *sub) {
    const RunConfig cfg = load_run_config(opt.config);
    const uint64_t seed = master_seed(cfg, sub, opt.seed);
    DirLock lock(opt.out);
    const PairSummary summary =
        make_pairs(opt.hq_dir, opt.out, cfg.degrade, stage_seed(seed, "degrade"));
    for (const std::string &failure : summary.failures)
        std::fprintf(stderr, "skipped: %s\n", failure.c_str());
    require(summary.processed >= 1, "no images could be degraded");
    append_hash_stamp(summary.manifest_path, cfg.hash());
    std::printf("degraded %d images into %s\n", summary.processed, opt.out.c_str());
}

void cmd_train_tokenizer(CliOptions &opt, const CLI::App *sub) {
    RunConfig cfg = load_run_config(opt.config);
    const uint64_t seed = master_seed(cfg, sub, opt.seed);
    cfg.tokenizer_train.seed = stage_seed(seed, "tokenizer");
    const std::vector<Tensor> images =
        load_pngs(opt.data_dir, list_pngs(opt.data_dir));
    const std::string log = opt.log_path.empty() ? opt.out + ".log" : opt.log_path;
    auto [tok, stats] = train_tokenizer(images, cfg.tokenizer, cfg.tokenizer_train,
                                        log, progress_printer("tokenizer"));
    tok.save(opt.out, static_cast<uint64_t>(stats.steps), cfg.canonical_text(),
             cfg.hash());
    std::printf("tokenizer: loss %.6f -> %.6f over %lld steps; saved %s\n",
                stats.initial_loss, stats.final_loss,
                static_cast<long long>(stats.steps), opt.out.c_str());
}

void cmd_train_teacher(CliOptions &opt, const CLI::App *sub) {
    RunConfig cfg = load_run_config(opt.config);
    const uint64_t seed = master_seed(cfg, sub, opt.seed);
    cfg.teacher_train.seed = stage_seed(seed, "teacher");
    const Tokenizer tok = Tokenizer::load(opt.tokenizer_ckpt, cfg.tokenizer.schedule);
    const std::vector<Tensor> images =
        load_pngs(opt.data_dir, list_pngs(opt.data_dir));
    std::vector<TokenPyramid> corpus;
    for (const Tensor &img : images) corpus.push_back(tok.tokenize(img));
    const std::string log = opt.log_path.empty() ? opt.out + ".log" : opt.log_path;
    auto [teacher, stats] =
        train_teacher(corpus, cfg.backbone, tok.codebook(), cfg.teacher_train, log,
                      progress_printer("teacher"));
    teacher.save(opt.out, CkptKind::teacher, static_cast<uint64_t>(stats.steps),
                 cfg.canonical_text(), cfg.hash());
    std::printf("teacher: ce %.6f -> %.6f nats over %lld steps; saved %s\n",
                stats.initial_loss, stats.final_loss,
                static_cast<long long>(stats.steps), opt.out.c_str());
}

void cmd_distill(CliOptions &opt, const CLI::App *sub) {
    RunConfig cfg = load_run_config(opt.config);
    const uint64_t seed = master_seed(cfg, sub, opt.seed);
    cfg.distill.seed = stage_seed(seed, "distill");
    const Backbone teacher = Backbone::load(opt.teacher_ckpt, CkptKind::teacher);
    Tokenizer tok = Tokenizer::load(opt.tokenizer_ckpt, cfg.tokenizer.schedule);
    const std::vector<PairedSample> pairs = load_pairs(opt.pairs);
    const std::string log = opt.log_path.empty() ? opt.out + ".log" : opt.log_path;
    auto [bundle, stats] = distill(teacher, tok, pairs, cfg.distill, log,
                                   progress_printer("distill"));
    save_student(bundle, opt.out, static_cast<uint64_t>(stats.steps),
                 cfg.canonical_text(), cfg.hash());
    std::printf("student: loss %.6f -> %.6f over %lld steps; saved %s\n",
                stats.initial_loss, stats.final_loss,
                static_cast<long long>(stats.steps), opt.out.c_str());
}

void cmd_restore(const CliOptions &opt) {
    const StudentBundle bundle = load_student(opt.student_ckpt);
    const Tokenizer tok = Tokenizer::load(opt.tokenizer_ckpt);
    const uint64_t hash = load_checkpoint(opt.student_ckpt).config_hash;

    std::vector<std::string> names;
    std::string src_dir;
    if (fs::is_directory(opt.lq_path)) {
        src_dir = opt.lq_path;
        names = list_pngs(opt.lq_path);
    } else {
        src_dir = fs::path(opt.lq_path).parent_path().string();
        names = {fs::path(opt.lq_path).filename().string()};
    }

    DirLock lock(opt.out);
    const std::string manifest_path = (fs::path(opt.out) / "manifest.tsv").string();
    std::ofstream manifest(manifest_path, std::ios::trunc);
    require(manifest.good(), "cannot write manifest: " + manifest_path);
    manifest << "# file\n# config_hash " << hex_hash(hash) << "\n";

    std::ofstream report;
    if (!opt.report_path.empty()) {
        report.open(opt.report_path, std::ios::trunc);
        require(report.good(), "cannot write report: " + opt.report_path);
    }
    bool report_header = false;
    for (const std::string &name : names) {
        const Tensor lq = read_png((fs::path(src_dir) / name).string());
        RestoreReport info;
        const Tensor restored = restore_one_step(lq, bundle, tok, &info);
        write_png(restored, (fs::path(opt.out) / name).string());
        manifest << name << '\n';
        if (report.is_open()) {
            if (!report_header) {
                report << "# schedule " << info.schedule << "\n# student_id "
                       << hex_hash(info.student_id) << "\n# tokenizer_id "
                       << hex_hash(info.tokenizer_id) << "\n# config_hash "
                       << hex_hash(hash) << "\nfile\tforward_passes\twall_ms\n";
                report_header = true;
            }
            char row[512];
            std::snprintf(row, sizeof(row), "%s\t%d\t%.3f\n", name.c_str(),
                          info.forward_pass_count, info.wall_ms);
            report << row;
        }
    }
    manifest.flush();
    require(manifest.good(), "write failed for manifest: " + manifest_path);
    std::printf("restored %zu images into %s\n", names.size(), opt.out.c_str());
}

void cmd_sample(const CliOptions &opt) {
    const Backbone teacher = Backbone::load(opt.teacher_ckpt, CkptKind::teacher);
    const Tokenizer tok = Tokenizer::load(opt.tokenizer_ckpt);
    require(teacher.config().schedule == tok.config().schedule,
            "teacher and tokenizer schedules differ");
    require(opt.n >= 1, "need --n of at least 1");
    const uint64_t hash = load_checkpoint(opt.teacher_ckpt).config_hash;

    DirLock lock(opt.out);
    const std::string manifest_path = (fs::path(opt.out) / "manifest.tsv").string();
    std::ofstream manifest(manifest_path, std::ios::trunc);
    require(manifest.good(), "cannot write manifest: " + manifest_path);
    manifest << "# file\n# config_hash " << hex_hash(hash) << "\n";
    for (int i = 0; i < opt.n; ++i) {
        const uint64_t draw_seed =
            Rng::derive(opt.seed, "sample", static_cast<uint64_t>(i)).next_u64();
        const TokenPyramid tokens =
            sample_teacher(teacher, nullptr, opt.temperature, draw_seed);
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05d.png", i);
        write_png(tok.detokenize(tokens), (fs::path(opt.out) / name).string());
        manifest << name << '\n';
    }
    manifest.flush();
    require(manifest.good(), "write failed for manifest: " + manifest_path);
    std::printf("sampled %d images into %s\n", opt.n, opt.out.c_str());
}

void cmd_zeroshot(const CliOptions &opt) {
    const Backbone teacher = Backbone::load(opt.teacher_ckpt, CkptKind::teacher);
    const Tokenizer tok = Tokenizer::load(opt.tokenizer_ckpt);
    const uint64_t hash = load_checkpoint(opt.teacher_ckpt).config_hash;
    const std::vector<std::string> names = list_pngs(opt.lq_path);

    DirLock lock(opt.out);
    const std::string manifest_path = (fs::path(opt.out) / "manifest.tsv").string();
    std::ofstream manifest(manifest_path, std::ios::trunc);
    require(manifest.good(), "cannot write manifest: " + manifest_path);
    manifest << "# file\n# config_hash " << hex_hash(hash) << "\n";
    for (size_t i = 0; i < names.size(); ++i) {
        const Tensor lq = read_png((fs::path(opt.lq_path) / names[i]).string());
        const uint64_t draw_seed = Rng::derive(opt.seed, "zeroshot", i).next_u64();
        const Tensor out = zero_shot_upsample(lq, opt.prefix, teacher, tok,
                                              draw_seed, opt.temperature);
        write_png(out, (fs::path(opt.out) / names[i]).string());
        manifest << names[i] << '\n';
    }
    manifest.flush();
    require(manifest.good(), "write failed for manifest: " + manifest_path);
    std::printf("completed %zu images into %s\n", names.size(), opt.out.c_str());
}

void cmd_evaluate(const CliOptions &opt) {
    const std::vector<PairRecord> pairs = read_manifest(opt.pairs);
    const std::string restored_manifest =
        (fs::path(opt.restored) / "manifest.tsv").string();
    const std::vector<std::string> restored_files =
        read_image_manifest(restored_manifest);

    uint64_t pairs_hash = 0, restored_hash = 0;
    const bool have_pairs_hash = read_hash_stamp(opt.pairs, pairs_hash);
    const bool have_restored_hash = read_hash_stamp(restored_manifest, restored_hash);
    if (have_pairs_hash && have_restored_hash && pairs_hash != restored_hash)
        require(opt.force, "config hash mismatch: pairs " + hex_hash(pairs_hash) +
                               " vs restored " + hex_hash(restored_hash) +
                               " (pass --force to evaluate anyway)");

    // Restored files match pairs by file name.
    std::vector<Tensor> outputs, references;
    for (const std::string &file : restored_files) {
        const std::string name = fs::path(file).filename().string();
        const PairRecord *match = nullptr;
        for (const PairRecord &rec : pairs)
            if (fs::path(rec.lq_path).filename().string() == name) {
                match = &rec;
                break;
            }
        require(match != nullptr, "no pair record for restored image: " + name);
        outputs.push_back(read_png(file));
        references.push_back(read_png(match->hq_path));
    }
    const MetricReport report = evaluate_images(outputs, references);

    std::ofstream out(opt.out, std::ios::trunc);
    require(out.good(), "cannot write metrics: " + opt.out);
    if (have_pairs_hash) out << "# config_hash " << hex_hash(pairs_hash) << "\n";
    out << "file\tpsnr\tssim\n";
    for (size_t i = 0; i < restored_files.size(); ++i) {
        char row[512];
        std::snprintf(row, sizeof(row), "%s\t%.6f\t%.6f\n",
                      fs::path(restored_files[i]).filename().string().c_str(),
                      report.psnr_values[i], report.ssim_values[i]);
        out << row;
    }
    char mean_row[128];
    std::snprintf(mean_row, sizeof(mean_row), "mean\t%.6f\t%.6f\n",
                  report.psnr_mean, report.ssim_mean);
    out << mean_row;
    out.flush();
    require(out.good(), "write failed for metrics: " + opt.out);
    std::printf("%d images: mean psnr %.4f dB, mean ssim %.6f -> %s\n",
                report.count, report.psnr_mean, report.ssim_mean, opt.out.c_str());
}

void cmd_ablate(CliOptions &opt, const CLI::App *sub) {
    RunConfig cfg = load_run_config(opt.config);
    const uint64_t seed = master_seed(cfg, sub, opt.seed);
    cfg.distill.seed = stage_seed(seed, "ablate");
    const Backbone teacher = Backbone::load(opt.teacher_ckpt, CkptKind::teacher);
    Tokenizer tok = Tokenizer::load(opt.tokenizer_ckpt, cfg.tokenizer.schedule);
    const std::vector<PairedSample> train_pairs = load_pairs(opt.pairs);
    const std::vector<PairedSample> eval_pairs = load_pairs(opt.eval_pairs);

    std::vector<AblationArm> arms;
    std::stringstream ss(opt.arms);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) arms.push_back(parse_ablation_arm(item));

    const std::string diff =
        opt.diff_path.empty() ? opt.out + ".diff" : opt.diff_path;
    run_ablation(teacher, tok, train_pairs, eval_pairs, cfg.distill, arms,
                 opt.prefix, opt.out, diff, progress_printer("ablate"));
    append_hash_stamp(opt.out, cfg.hash());
    append_hash_stamp(diff, cfg.hash());
    std::printf("ablation table %s (config diff %s)\n", opt.out.c_str(), diff.c_str());
}

void cmd_bench(const CliOptions &opt) {
    const StudentBundle student = load_student(opt.student_ckpt);
    const Backbone teacher = Backbone::load(opt.teacher_ckpt, CkptKind::teacher);
    const Tokenizer tok = Tokenizer::load(opt.tokenizer_ckpt);
    const int runs = opt.n > 0 ? opt.n : 5;
    const SpeedReport report =
        benchmark_speed(student, teacher, tok, runs, opt.seed);

    std::ostringstream text;
    text << "images\t" << report.n << "\n"
         << "student_median_ms\t" << report.student_median_ms << "\n"
         << "teacher_median_ms\t" << report.teacher_median_ms << "\n"
         << "tokenizer_median_ms\t" << report.tokenizer_median_ms << "\n"
         << "speedup\t" << report.speedup << "\n"
         << "student_passes\t" << report.student_passes << "\n"
         << "teacher_passes\t" << report.teacher_passes << "\n"
         << "trainable_fraction\t" << report.trainable_fraction << "\n";
    std::fputs(text.str().c_str(), stdout);
    if (!opt.out.empty()) {
        std::ofstream out(opt.out, std::ios::trunc);
        require(out.good(), "cannot write benchmark report: " + opt.out);
        out << "# config_hash "
            << hex_hash(load_checkpoint(opt.student_ckpt).config_hash) << "\n"
            << text.str();
        out.flush();
        require(out.good(), "write failed for benchmark report: " + opt.out);
    }
}

} // namespace

int run_cli(const std::vector<std::string> &args) {
    CLI::App app{"one-step restoration workbench"};
    app.require_subcommand(1);
    CliOptions opt;

    CLI::App *gen = app.add_subcommand("gen-data", "generate the toy dataset");
    gen->add_option("--config", opt.config, "run config file")->required();
    gen->add_option("--out", opt.out, "output directory")->required();
    gen->add_option("--n", opt.n, "image count (default: data.count)");
    gen->add_option("--offset", opt.offset, "first image index");
    gen->add_option("--seed", opt.seed, "master seed override");

    CLI::App *deg = app.add_subcommand("degrade", "degrade clean images into pairs");
    deg->add_option("--config", opt.config, "run config file")->required();
    deg->add_option("--hq", opt.hq_dir, "clean image directory")->required();
    deg->add_option("--out", opt.out, "output directory")->required();
    deg->add_option("--seed", opt.seed, "master seed override");

    CLI::App *ttok = app.add_subcommand("train-tokenizer", "train the tokenizer");
    ttok->add_option("--config", opt.config, "run config file")->required();
    ttok->add_option("--data", opt.data_dir, "clean image directory")->required();
    ttok->add_option("--out", opt.out, "checkpoint path")->required();
    ttok->add_option("--log", opt.log_path, "loss log path (default: OUT.log)");
    ttok->add_option("--seed", opt.seed, "master seed override");

    CLI::App *ttea = app.add_subcommand("train-teacher", "train the teacher");
    ttea->add_option("--config", opt.config, "run config file")->required();
    ttea->add_option("--data", opt.data_dir, "clean image directory")->required();
    ttea->add_option("--tokenizer", opt.tokenizer_ckpt, "tokenizer checkpoint")
        ->required();
    ttea->add_option("--out", opt.out, "checkpoint path")->required();
    ttea->add_option("--log", opt.log_path, "loss log path (default: OUT.log)");
    ttea->add_option("--seed", opt.seed, "master seed override");

    CLI::App *dis = app.add_subcommand("distill", "distill the one-step student");
    dis->add_option("--config", opt.config, "run config file")->required();
    dis->add_option("--pairs", opt.pairs, "training pair manifest")->required();
    dis->add_option("--teacher", opt.teacher_ckpt, "teacher checkpoint")->required();
    dis->add_option("--tokenizer", opt.tokenizer_ckpt, "tokenizer checkpoint")
        ->required();
    dis->add_option("--out", opt.out, "checkpoint path")->required();
    dis->add_option("--log", opt.log_path, "loss log path (default: OUT.log)");
    dis->add_option("--seed", opt.seed, "master seed override");

    CLI::App *res = app.add_subcommand("restore", "one-step restoration");
    res->add_option("--lq", opt.lq_path, "degraded image file or directory")
        ->required();
    res->add_option("--student", opt.student_ckpt, "student checkpoint")->required();
    res->add_option("--tokenizer", opt.tokenizer_ckpt, "tokenizer checkpoint")
        ->required();
    res->add_option("--out", opt.out, "output directory")->required();
    res->add_option("--report", opt.report_path, "pass-count/timing report path");

    CLI::App *sam = app.add_subcommand("sample", "unconditional teacher sampling");
    sam->add_option("--teacher", opt.teacher_ckpt, "teacher checkpoint")->required();
    sam->add_option("--tokenizer", opt.tokenizer_ckpt, "tokenizer checkpoint")
        ->required();
    sam->add_option("--n", opt.n, "number of samples")->required();
    sam->add_option("--seed", opt.seed, "sampling seed");
    sam->add_option("--temperature", opt.temperature, "softmax temperature");
    sam->add_option("--out", opt.out, "output directory")->required();

    CLI::App *zer = app.add_subcommand("zeroshot",
                                       "training-free upsampling baseline");
    zer->add_option("--lq", opt.lq_path, "degraded image directory")->required();
    zer->add_option("--s", opt.prefix, "token scales to keep from the input")
        ->required();
    zer->add_option("--teacher", opt.teacher_ckpt, "teacher checkpoint")->required();
    zer->add_option("--tokenizer", opt.tokenizer_ckpt, "tokenizer checkpoint")
        ->required();
    zer->add_option("--seed", opt.seed, "sampling seed");
    zer->add_option("--temperature", opt.temperature, "softmax temperature");
    zer->add_option("--out", opt.out, "output directory")->required();

    CLI::App *eva = app.add_subcommand("evaluate", "score restored images");
    eva->add_option("--pairs", opt.pairs, "pair manifest with references")
        ->required();
    eva->add_option("--restored", opt.restored, "restored image directory")
        ->required();
    eva->add_option("--out", opt.out, "metrics file")->required();
    eva->add_flag("--force", opt.force, "evaluate across mismatched config hashes");

    CLI::App *abl = app.add_subcommand("ablate", "train and score ablation arms");
    abl->add_option("--config", opt.config, "run config file")->required();
    abl->add_option("--pairs", opt.pairs, "training pair manifest")->required();
    abl->add_option("--eval-pairs", opt.eval_pairs, "held-out pair manifest")
        ->required();
    abl->add_option("--teacher", opt.teacher_ckpt, "teacher checkpoint")->required();
    abl->add_option("--tokenizer", opt.tokenizer_ckpt, "tokenizer checkpoint")
        ->required();
    abl->add_option("--arms", opt.arms, "comma-separated arm names");
    abl->add_option("--prefix", opt.prefix, "zero-shot scale prefix (0 = auto)");
    abl->add_option("--out", opt.out, "table path")->required();
    abl->add_option("--diff", opt.diff_path, "config diff path (default: OUT.diff)");
    abl->add_option("--seed", opt.seed, "master seed override");

    CLI::App *ben = app.add_subcommand("bench", "student vs teacher speed");
    ben->add_option("--student", opt.student_ckpt, "student checkpoint")->required();
    ben->add_option("--teacher", opt.teacher_ckpt, "teacher checkpoint")->required();
    ben->add_option("--tokenizer", opt.tokenizer_ckpt, "tokenizer checkpoint")
        ->required();
    ben->add_option("--n", opt.n, "timed runs (default 5, at least 3)");
    ben->add_option("--seed", opt.seed, "benchmark seed");
    ben->add_option("--out", opt.out, "report file");

    std::vector<const char *> argv;
    argv.push_back("onescale");
    for (const std::string &arg : args) argv.push_back(arg.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp &) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError &e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (gen->parsed()) cmd_gen_data(opt, gen);
        else if (deg->parsed()) cmd_degrade(opt, deg);
        else if (ttok->parsed()) cmd_train_tokenizer(opt, ttok);
        else if (ttea->parsed()) cmd_train_teacher(opt, ttea);
        else if (dis->parsed()) cmd_distill(opt, dis);
        else if (res->parsed()) cmd_restore(opt);
        else if (sam->parsed()) cmd_sample(opt);
        else if (zer->parsed()) cmd_zeroshot(opt);
        else if (eva->parsed()) cmd_evaluate(opt);
        else if (abl->parsed()) cmd_ablate(opt, abl);
        else if (ben->parsed()) cmd_bench(opt);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace onescale

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
// Run configuration, toy data, and the command-line workbench.
//
// A run is a pure function of (config file, master seed, dataset bytes).
// The config is sectioned key = value text; unknown keys are rejected by
// name so a typo like "lamda_kl" dies loudly instead of silently training
// with a default. Every artifact a run produces embeds the config hash, and
// `evaluate` refuses to mix artifacts from different configs unless forced.

#pragma once

#include "onescale/degrade.hpp"
#include "onescale/distill.hpp"
#include "onescale/tokenizer.hpp"
#include "onescale/transformer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace onescale {

// [data] section: how much toy data to make and at what resolution.
struct DataConfig {
    int count = 2000;
    int image_size = 64;
    int holdout = 200; // held-out pair budget, consumed by evaluation scripts
};

// One file describing an entire run. The backbone's schedule, vocabulary,
// and latent width are not separate keys: they are copied from the tokenizer
// section at load time, so the two halves cannot drift apart.
struct RunConfig {
    uint64_t seed = 0;
    DataConfig data;
    TokenizerConfig tokenizer;
    TokenizerTrainConfig tokenizer_train;
    BackboneConfig backbone;
    TransformerTrainConfig teacher_train;
    DegradeRanges degrade;
    DistillConfig distill;

    void validate() const;

    // Stable serialization: fixed section and key order, fixed number
    // formatting. load(canonical_text()) reproduces the config exactly, and
    // hash() is the FNV-1a of this text.
    std::string canonical_text() const;
    uint64_t hash() const;
};

// Parse errors carry 1-based line numbers; unknown sections and keys are
// rejected with the offending name spelled out.
RunConfig parse_run_config(const std::string &text);
RunConfig load_run_config(const std::string &path);
void save_run_config(const RunConfig &cfg, const std::string &path);

// Per-stage seed derivation from the master seed, so every consumer gets an
// independent stream and reruns are reproducible.
uint64_t stage_seed(uint64_t master_seed, std::string_view stage);

// One procedurally generated training image: a color gradient base, a few
// Gabor-style oriented gratings, and anti-aliased shapes on top. Gives the
// tokenizer real multi-scale structure to chew on.
Tensor toy_image(int size, Rng &rng);

struct DatasetSummary {
    int count = 0;
    std::string manifest_path;
};

// Writes n PNGs plus a manifest into out_dir. Image i draws from a stream
// keyed by index_offset + i, so disjoint offset ranges give disjoint data
// (that is how train and held-out sets stay independent under one seed).
DatasetSummary generate_toy_dataset(int n, int size, uint64_t seed,
                                    const std::string &out_dir, uint64_t config_hash,
                                    int index_offset = 0);

// Image-list manifest reader: returns paths resolved against the manifest's
// directory, ignoring comment lines.
std::vector<std::string> read_image_manifest(const std::string &manifest_path);

// Provenance stamps: "# config_hash <16 hex digits>" comment lines that
// manifest readers skip. `read_hash_stamp` returns false when a file was
// never stamped.
void append_hash_stamp(const std::string &path, uint64_t config_hash);
bool read_hash_stamp(const std::string &path, uint64_t &hash_out);

// The command-line workbench. `args` excludes the program name. Returns the
// process exit code: 0 success, 1 runtime failure, 2 usage error.
int run_cli(const std::vector<std::string> &args);

} // namespace onescale

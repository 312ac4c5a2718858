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

#pragma once

#include "onescale/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace onescale {

// Single-file checkpoint container: fixed little-endian header (format
// version, kind, mask mode, step counter, RNG state, config hash), the
// producing config snapshot as text, then ordered named float32 blobs.
// Serialization is deterministic, so save -> load -> save is byte-identical.

inline constexpr uint32_t kCheckpointVersion = 1;

enum class CkptKind : uint32_t { tokenizer = 0, teacher = 1, student = 2 };

enum class MaskMode : uint32_t { block_causal = 0, full = 1 };

struct Checkpoint {
    CkptKind kind = CkptKind::tokenizer;
    MaskMode mask_mode = MaskMode::block_causal;
    uint64_t step = 0;
    uint64_t rng_state = 0;
    uint64_t config_hash = 0;
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> blobs;

    void add(const std::string &name, const Tensor &t) { blobs.emplace_back(name, t); }
    bool has(const std::string &name) const;
    const Tensor &blob(const std::string &name) const; // error when missing
};

void save_checkpoint(const Checkpoint &ckpt, const std::string &path);
Checkpoint load_checkpoint(const std::string &path);
// Loads and additionally requires the stored kind.
Checkpoint load_checkpoint(const std::string &path, CkptKind want);

const char *ckpt_kind_name(CkptKind kind);

} // namespace onescale

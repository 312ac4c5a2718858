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

#include "onescale/checkpoint.hpp"

#include "onescale/common.hpp"

#include <cstring>
#include <fstream>

namespace onescale {

namespace {

constexpr char kMagic[4] = {'O', 'S', 'C', 'K'};

void write_u32(std::ostream &out, uint32_t v) {
    out.write(reinterpret_cast<const char *>(&v), sizeof(v));
}

void write_u64(std::ostream &out, uint64_t v) {
    out.write(reinterpret_cast<const char *>(&v), sizeof(v));
}

void write_str(std::ostream &out, const std::string &s) {
    write_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t read_u32(std::istream &in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char *>(&v), sizeof(v));
    require(in.good(), "checkpoint truncated");
    return v;
}

uint64_t read_u64(std::istream &in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char *>(&v), sizeof(v));
    require(in.good(), "checkpoint truncated");
    return v;
}

std::string read_str(std::istream &in) {
    const uint32_t n = read_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    require(in.good(), "checkpoint truncated");
    return s;
}

} // namespace

bool Checkpoint::has(const std::string &name) const {
    for (const auto &[blob_name, tensor] : blobs) {
        if (blob_name == name) {
            return true;
        }
    }
    return false;
}

const Tensor &Checkpoint::blob(const std::string &name) const {
    for (const auto &[blob_name, tensor] : blobs) {
        if (blob_name == name) {
            return tensor;
        }
    }
    fail("checkpoint is missing blob: " + name);
}

void save_checkpoint(const Checkpoint &ckpt, const std::string &path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "cannot open checkpoint for writing: " + path);
    out.write(kMagic, 4);
    write_u32(out, kCheckpointVersion);
    write_u32(out, static_cast<uint32_t>(ckpt.kind));
    write_u32(out, static_cast<uint32_t>(ckpt.mask_mode));
    write_u64(out, ckpt.step);
    write_u64(out, ckpt.rng_state);
    write_u64(out, ckpt.config_hash);
    write_str(out, ckpt.config_text);
    write_u32(out, static_cast<uint32_t>(ckpt.blobs.size()));
    for (const auto &[name, tensor] : ckpt.blobs) {
        write_str(out, name);
        write_u32(out, static_cast<uint32_t>(tensor.rank()));
        for (int i = 0; i < tensor.rank(); ++i) {
            write_u32(out, static_cast<uint32_t>(tensor.dim(i)));
        }
        out.write(reinterpret_cast<const char *>(tensor.data()),
                  static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
    }
    out.flush();
    require(out.good(), "write failed for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open checkpoint: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    require(in.good() && std::memcmp(magic, kMagic, 4) == 0,
            "not a checkpoint file (bad magic): " + path);
    const uint32_t version = read_u32(in);
    require(version == kCheckpointVersion,
            "checkpoint format version mismatch: file has " + std::to_string(version) +
                ", this build reads " + std::to_string(kCheckpointVersion));
    Checkpoint ckpt;
    ckpt.kind = static_cast<CkptKind>(read_u32(in));
    ckpt.mask_mode = static_cast<MaskMode>(read_u32(in));
    ckpt.step = read_u64(in);
    ckpt.rng_state = read_u64(in);
    ckpt.config_hash = read_u64(in);
    ckpt.config_text = read_str(in);
    const uint32_t nblobs = read_u32(in);
    ckpt.blobs.reserve(nblobs);
    for (uint32_t i = 0; i < nblobs; ++i) {
        const std::string name = read_str(in);
        const uint32_t rank = read_u32(in);
        std::vector<int> shape(rank);
        for (uint32_t j = 0; j < rank; ++j) {
            shape[j] = static_cast<int>(read_u32(in));
        }
        Tensor t(shape);
        in.read(reinterpret_cast<char *>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
        require(in.good(), "checkpoint truncated in blob " + name);
        ckpt.blobs.emplace_back(name, std::move(t));
    }
    return ckpt;
}

Checkpoint load_checkpoint(const std::string &path, CkptKind want) {
    Checkpoint ckpt = load_checkpoint(path);
    require(ckpt.kind == want, std::string("checkpoint kind mismatch: expected ") +
                                   ckpt_kind_name(want) + ", file holds " +
                                   ckpt_kind_name(ckpt.kind) + ": " + path);
    return ckpt;
}

const char *ckpt_kind_name(CkptKind kind) {
    switch (kind) {
    case CkptKind::tokenizer:
        return "tokenizer";
    case CkptKind::teacher:
        return "teacher";
    case CkptKind::student:
        return "student";
    }
    return "unknown";
}

} // namespace onescale

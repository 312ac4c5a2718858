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

#include "onescale/rng.hpp"
#include "onescale/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace onescale {

// Synthetic degradation: blur -> downsample -> noise -> JPEG -> upsample back.
// Every stage is deterministic given the parameter record, so a manifest line
// is enough to replay the exact low-quality image.

// Sentinel quality that skips the JPEG round trip entirely.
inline constexpr int kLosslessQuality = 0;

// Normalized separable Gaussian taps; the 2-D kernel weight at offset
// (dy, dx) is taps[r+dy] * taps[r+dx]. sigma = 0 degenerates to the single
// tap 1.0 (identity blur).
struct Kernel {
    std::vector<float> taps; // odd length 2 * radius + 1, sums to 1
    int radius() const { return (static_cast<int>(taps.size()) - 1) / 2; }
};

// Taps cover +/- ceil(3 sigma).
Kernel gaussian_kernel(double sigma);

// Separable convolution with mirrored borders (edge sample repeated:
// index -1 reads row 0, index h reads row h-1, folding as often as needed).
Tensor convolve_reflect(const Tensor &img, const Kernel &kernel);

struct DegradeParams {
    double blur_sigma = 0.0;
    int downsample_factor = 1;
    double noise_sigma = 0.0;
    int jpeg_quality = kLosslessQuality;
    uint64_t seed = 0; // noise stream seed
};

struct DegradeRanges {
    double sigma_lo = 0.0, sigma_hi = 3.0;
    std::vector<int> factors = {1, 2, 4};
    double noise_lo = 0.0, noise_hi = 0.08;
    int quality_lo = 30, quality_hi = 95;

    void validate() const;
};

DegradeParams sample_params(const DegradeRanges &ranges, Rng &rng);

// hq [H, W, C] in [0,1] -> degraded [H, W, C] in [0,1]. H and W must be
// divisible by the downsample factor.
Tensor degrade(const Tensor &hq, const DegradeParams &params);

// One line of the pair manifest.
struct PairRecord {
    std::string hq_path;
    std::string lq_path;
    DegradeParams params;
};

struct PairSummary {
    int processed = 0;
    std::vector<std::string> failures; // unreadable inputs, with reasons
    std::string manifest_path;
};

// Degrades every .png under input_dir (sorted by filename) into output_dir
// and writes output_dir/manifest.tsv. Per-image parameters and noise seeds
// derive from master_seed and the image's position in sorted order.
// Unreadable files are recorded in the summary and skipped.
PairSummary make_pairs(const std::string &input_dir, const std::string &output_dir,
                       const DegradeRanges &ranges, uint64_t master_seed);

std::vector<PairRecord> read_manifest(const std::string &path);

} // namespace onescale

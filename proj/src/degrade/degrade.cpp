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

#include "onescale/degrade.hpp"

#include "onescale/common.hpp"
#include "onescale/image.hpp"
#include "onescale/resize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace onescale {

namespace {

// Mirror an index into [0, n), repeating the edge sample: -1 -> 0, n -> n-1.
int fold(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) {
            i = -1 - i;
        }
        if (i >= n) {
            i = 2 * n - 1 - i;
        }
    }
    return i;
}

} // namespace

Kernel gaussian_kernel(double sigma) {
    require(sigma >= 0.0, "blur sigma must be non-negative");
    Kernel k;
    if (sigma == 0.0) {
        k.taps = {1.0f};
        return k;
    }
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> raw(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        raw[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    k.taps.resize(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        k.taps[i] = static_cast<float>(raw[i] / sum);
    }
    return k;
}

Tensor convolve_reflect(const Tensor &img, const Kernel &kernel) {
    require(img.rank() == 3, "image must be [H, W, C]");
    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    const int r = kernel.radius();

    // horizontal pass
    Tensor tmp({h, w, c});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int dx = -r; dx <= r; ++dx) {
                    acc += static_cast<double>(kernel.taps[static_cast<size_t>(dx + r)]) *
                           img.at(y, fold(x + dx, w), ch);
                }
                tmp.at(y, x, ch) = static_cast<float>(acc);
            }
        }
    }
    // vertical pass
    Tensor out({h, w, c});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int dy = -r; dy <= r; ++dy) {
                    acc += static_cast<double>(kernel.taps[static_cast<size_t>(dy + r)]) *
                           tmp.at(fold(y + dy, h), x, ch);
                }
                out.at(y, x, ch) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

void DegradeRanges::validate() const {
    require(sigma_lo >= 0.0 && sigma_lo <= sigma_hi, "bad blur sigma range");
    require(noise_lo >= 0.0 && noise_lo <= noise_hi, "bad noise sigma range");
    require(!factors.empty(), "downsample factor list is empty");
    for (const int f : factors) {
        require(f >= 1, "downsample factors must be >= 1");
    }
    require((quality_lo == kLosslessQuality && quality_hi == kLosslessQuality) ||
                (quality_lo >= 1 && quality_lo <= quality_hi && quality_hi <= 100),
            "bad JPEG quality range");
}

DegradeParams sample_params(const DegradeRanges &ranges, Rng &rng) {
    ranges.validate();
    DegradeParams p;
    p.blur_sigma = rng.uniform(ranges.sigma_lo, ranges.sigma_hi);
    p.downsample_factor = ranges.factors[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(ranges.factors.size()) - 1))];
    p.noise_sigma = rng.uniform(ranges.noise_lo, ranges.noise_hi);
    p.jpeg_quality = static_cast<int>(rng.uniform_int(ranges.quality_lo, ranges.quality_hi));
    p.seed = rng.next_u64();
    return p;
}

Tensor degrade(const Tensor &hq, const DegradeParams &params) {
    require(hq.rank() == 3, "image must be [H, W, C]");
    require(params.downsample_factor >= 1, "downsample factor must be >= 1");
    require(params.noise_sigma >= 0.0, "noise sigma must be non-negative");
    require(params.jpeg_quality == kLosslessQuality ||
                (params.jpeg_quality >= 1 && params.jpeg_quality <= 100),
            "JPEG quality must be 1..100 or the lossless sentinel");
    const int h = hq.dim(0), w = hq.dim(1);
    const int f = params.downsample_factor;
    require(h % f == 0 && w % f == 0,
            "image dimensions must be divisible by the downsample factor");

    Tensor img = convolve_reflect(hq, gaussian_kernel(params.blur_sigma));
    if (f > 1) {
        img = resize_area(img, h / f, w / f);
    }
    if (params.noise_sigma > 0.0) {
        Rng rng = Rng::derive(params.seed, "degrade-noise");
        for (size_t i = 0; i < img.numel(); ++i) {
            img.data()[i] += static_cast<float>(params.noise_sigma * rng.normal());
        }
    }
    if (params.jpeg_quality != kLosslessQuality) {
        img.clamp(0.0f, 1.0f);
        img = jpeg_roundtrip(img, params.jpeg_quality);
    }
    if (f > 1) {
        img = resize_bicubic(img, h, w);
    }
    img.clamp(0.0f, 1.0f);
    return img;
}

// ------------------------------------------------------------ manifest ----

namespace {

std::string manifest_line(const PairRecord &rec) {
    char buf[1024];
    std::snprintf(buf, sizeof(buf), "%s\t%s\t%.17g\t%d\t%.17g\t%d\t%llu", rec.hq_path.c_str(),
                  rec.lq_path.c_str(), rec.params.blur_sigma, rec.params.downsample_factor,
                  rec.params.noise_sigma, rec.params.jpeg_quality,
                  static_cast<unsigned long long>(rec.params.seed));
    return buf;
}

} // namespace

PairSummary make_pairs(const std::string &input_dir, const std::string &output_dir,
                       const DegradeRanges &ranges, uint64_t master_seed) {
    namespace fs = std::filesystem;
    ranges.validate();
    require(fs::is_directory(input_dir), "not a directory: " + input_dir);
    fs::create_directories(output_dir);

    std::vector<std::string> names;
    for (const auto &entry : fs::directory_iterator(input_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            names.push_back(entry.path().filename().string());
        }
    }
    std::sort(names.begin(), names.end());
    require(!names.empty(), "no .png images under " + input_dir);

    PairSummary summary;
    summary.manifest_path = (fs::path(output_dir) / "manifest.tsv").string();
    std::ofstream manifest(summary.manifest_path, std::ios::trunc);
    require(manifest.good(), "cannot write manifest: " + summary.manifest_path);
    manifest << "# hq_path\tlq_path\tblur_sigma\tdownsample_factor\tnoise_sigma\tjpeg_quality\tseed\n";

    for (size_t i = 0; i < names.size(); ++i) {
        PairRecord rec;
        rec.hq_path = (fs::path(input_dir) / names[i]).string();
        rec.lq_path = (fs::path(output_dir) / names[i]).string();
        Rng prng = Rng::derive(master_seed, "degrade-params", i);
        rec.params = sample_params(ranges, prng);
        try {
            const Tensor hq = read_png(rec.hq_path);
            const Tensor lq = degrade(hq, rec.params);
            write_png(lq, rec.lq_path);
        } catch (const Error &e) {
            summary.failures.push_back(names[i] + ": " + e.what());
            continue;
        }
        manifest << manifest_line(rec) << '\n';
        ++summary.processed;
    }
    manifest.flush();
    require(manifest.good(), "write failed for manifest: " + summary.manifest_path);
    return summary;
}

std::vector<PairRecord> read_manifest(const std::string &path) {
    std::ifstream in(path);
    require(in.good(), "cannot open manifest: " + path);
    std::vector<PairRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) {
            fields.push_back(field);
        }
        require(fields.size() == 7,
                "manifest parse error at line " + std::to_string(line_no) + ": expected 7 fields, got " +
                    std::to_string(fields.size()));
        PairRecord rec;
        rec.hq_path = fields[0];
        rec.lq_path = fields[1];
        try {
            rec.params.blur_sigma = std::stod(fields[2]);
            rec.params.downsample_factor = std::stoi(fields[3]);
            rec.params.noise_sigma = std::stod(fields[4]);
            rec.params.jpeg_quality = std::stoi(fields[5]);
            rec.params.seed = std::stoull(fields[6]);
        } catch (const std::exception &) {
            fail("manifest parse error at line " + std::to_string(line_no) + ": bad numeric field");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace onescale

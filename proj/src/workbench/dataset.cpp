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

#include "onescale/image.hpp"
#include "onescale/rng.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace onescale {

namespace {

constexpr double kPi = 3.14159265358979323846;

float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

} // namespace

Tensor toy_image(int size, Rng &rng) {
    require(size >= 16, "toy images need a size of at least 16 pixels");
    Tensor img({size, size, 3});

    // Base layer: a linear color gradient with clearly separated endpoints,
    // so even the flattest draw keeps usable contrast.
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    const double gx = std::cos(theta), gy = std::sin(theta);
    float c0[3], c1[3];
    for (int tries = 0;; ++tries) {
        double dist = 0.0;
        for (int c = 0; c < 3; ++c) {
            c0[c] = static_cast<float>(rng.uniform(0.0, 1.0));
            c1[c] = static_cast<float>(rng.uniform(0.0, 1.0));
            dist += std::abs(static_cast<double>(c0[c]) - c1[c]);
        }
        if (dist >= 0.45 || tries > 64) break;
    }
    // Projection extremes over the corners normalize the gradient axis.
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (int cy = 0; cy <= 1; ++cy)
        for (int cx = 0; cx <= 1; ++cx) {
            const double p = gx * (cx * (size - 1)) + gy * (cy * (size - 1));
            lo = first ? p : std::min(lo, p);
            hi = first ? p : std::max(hi, p);
            first = false;
        }
    const double span = hi - lo > 1e-9 ? hi - lo : 1.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const float t = static_cast<float>((gx * x + gy * y - lo) / span);
            float *px = img.data() + (static_cast<size_t>(y) * size + x) * 3;
            for (int c = 0; c < 3; ++c) px[c] = c0[c] + (c1[c] - c0[c]) * t;
        }

    // Oriented Gabor-style gratings: localized frequency content at scales
    // the pyramid's middle levels have to model.
    const int gratings = static_cast<int>(rng.uniform_int(1, 3));
    for (int g = 0; g < gratings; ++g) {
        const double cx = rng.uniform(0.0, size);
        const double cy = rng.uniform(0.0, size);
        const double wavelength = rng.uniform(size / 8.0, size / 2.0);
        const double phi = rng.uniform(0.0, kPi);
        const double phase = rng.uniform(0.0, 2.0 * kPi);
        const double envelope = rng.uniform(size / 8.0, size / 3.0);
        const double amp = rng.uniform(0.15, 0.4);
        double dir[3];
        for (double &d : dir) d = rng.uniform(-1.0, 1.0);
        const double co = std::cos(phi), si = std::sin(phi);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double u = dx * co + dy * si;
                const double wave =
                    amp * std::exp(-(dx * dx + dy * dy) / (2.0 * envelope * envelope)) *
                    std::cos(2.0 * kPi * u / wavelength + phase);
                float *px = img.data() + (static_cast<size_t>(y) * size + x) * 3;
                for (int c = 0; c < 3; ++c)
                    px[c] += static_cast<float>(wave * dir[c]);
            }
    }

    // Solid shapes with a one-pixel anti-aliased rim: sharp edges for the
    // finest scales, flat interiors for the coarse ones.
    const int shapes = static_cast<int>(rng.uniform_int(1, 2));
    for (int s = 0; s < shapes; ++s) {
        const bool circle = rng.uniform_int(0, 1) == 0;
        const double cx = rng.uniform(0.2 * size, 0.8 * size);
        const double cy = rng.uniform(0.2 * size, 0.8 * size);
        const double radius = rng.uniform(0.1 * size, 0.3 * size);
        float color[3];
        for (float &c : color) c = static_cast<float>(rng.uniform(0.0, 1.0));
        const double alpha = rng.uniform(0.6, 1.0);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double dist = circle
                                        ? std::sqrt(dx * dx + dy * dy) - radius
                                        : std::max(std::abs(dx), std::abs(dy)) - radius;
                const double coverage = std::min(1.0, std::max(0.0, 0.5 - dist));
                if (coverage <= 0.0) continue;
                const float blend = static_cast<float>(alpha * coverage);
                float *px = img.data() + (static_cast<size_t>(y) * size + x) * 3;
                for (int c = 0; c < 3; ++c)
                    px[c] += (color[c] - px[c]) * blend;
            }
    }

    for (size_t i = 0; i < img.numel(); ++i) img.data()[i] = clamp01(img.data()[i]);
    return img;
}

DatasetSummary generate_toy_dataset(int n, int size, uint64_t seed,
                                    const std::string &out_dir, uint64_t config_hash,
                                    int index_offset) {
    namespace fs = std::filesystem;
    require(n >= 1, "toy dataset needs at least one image");
    require(index_offset >= 0, "dataset index offset cannot be negative");
    fs::create_directories(out_dir);

    DatasetSummary summary;
    summary.manifest_path = (fs::path(out_dir) / "manifest.tsv").string();
    std::ofstream manifest(summary.manifest_path, std::ios::trunc);
    require(manifest.good(), "cannot write manifest: " + summary.manifest_path);
    manifest << "# file\n";
    char stamp[64];
    std::snprintf(stamp, sizeof(stamp), "# config_hash %016llx\n",
                  static_cast<unsigned long long>(config_hash));
    manifest << stamp;

    for (int i = 0; i < n; ++i) {
        const int index = index_offset + i;
        Rng rng = Rng::derive(seed, "toy-image", static_cast<uint64_t>(index));
        const Tensor img = toy_image(size, rng);
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", index);
        write_png(img, (fs::path(out_dir) / name).string());
        manifest << name << '\n';
        ++summary.count;
    }
    manifest.flush();
    require(manifest.good(), "write failed for manifest: " + summary.manifest_path);
    return summary;
}

std::vector<std::string> read_image_manifest(const std::string &manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest_path);
    require(in.good(), "cannot open manifest: " + manifest_path);
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<std::string> paths;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        paths.push_back((dir / line).string());
    }
    require(!paths.empty(), "manifest lists no images: " + manifest_path);
    return paths;
}

void append_hash_stamp(const std::string &path, uint64_t config_hash) {
    std::ofstream out(path, std::ios::app);
    require(out.good(), "cannot stamp file: " + path);
    char stamp[64];
    std::snprintf(stamp, sizeof(stamp), "# config_hash %016llx\n",
                  static_cast<unsigned long long>(config_hash));
    out << stamp;
    out.flush();
    require(out.good(), "write failed while stamping: " + path);
}

bool read_hash_stamp(const std::string &path, uint64_t &hash_out) {
    std::ifstream in(path);
    require(in.good(), "cannot open file: " + path);
    std::string line;
    bool found = false;
    // The newest stamp wins: re-stamping a file appends rather than edits.
    while (std::getline(in, line)) {
        if (line.rfind("# config_hash ", 0) != 0) continue;
        hash_out = std::strtoull(line.c_str() + 14, nullptr, 16);
        found = true;
    }
    return found;
}

} // namespace onescale

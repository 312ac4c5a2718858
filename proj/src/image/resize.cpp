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

#include "onescale/resize.hpp"

#include "onescale/common.hpp"

#include <algorithm>
#include <cmath>

namespace onescale {

namespace {

void check_args(const Tensor &src, int out_h, int out_w) {
    require(src.rank() == 3, "resize expects a [H, W, C] tensor");
    require(out_h >= 1 && out_w >= 1, "resize target must be at least 1x1");
}

inline int clamp_index(int i, int n) {
    return i < 0 ? 0 : (i >= n ? n - 1 : i);
}

// Catmull-Rom weight (a = -0.5) for |t| < 2.
inline double cubic_weight(double t) {
    t = std::abs(t);
    if (t <= 1.0) {
        return (1.5 * t - 2.5) * t * t + 1.0;
    }
    if (t < 2.0) {
        return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    }
    return 0.0;
}

} // namespace

Tensor resize_area(const Tensor &src, int out_h, int out_w) {
    check_args(src, out_h, out_w);
    const int in_h = src.dim(0), in_w = src.dim(1), ch = src.dim(2);
    if (out_h == in_h && out_w == in_w) {
        return src;
    }
    Tensor dst({out_h, out_w, ch});
    const double sy = static_cast<double>(in_h) / out_h;
    const double sx = static_cast<double>(in_w) / out_w;
    std::vector<double> acc(static_cast<size_t>(ch));
    for (int oy = 0; oy < out_h; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        const int ys = static_cast<int>(std::floor(y0));
        const int ye = std::min(static_cast<int>(std::ceil(y1)), in_h);
        for (int ox = 0; ox < out_w; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            const int xs = static_cast<int>(std::floor(x0));
            const int xe = std::min(static_cast<int>(std::ceil(x1)), in_w);
            std::fill(acc.begin(), acc.end(), 0.0);
            double area = 0.0;
            for (int y = ys; y < ye; ++y) {
                const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
                for (int x = xs; x < xe; ++x) {
                    const double w = wy * (std::min<double>(x + 1, x1) - std::max<double>(x, x0));
                    const float *px = &src.at(y, x, 0);
                    for (int c = 0; c < ch; ++c) {
                        acc[static_cast<size_t>(c)] += w * px[c];
                    }
                    area += w;
                }
            }
            const double inv = 1.0 / area;
            float *out = &dst.at(oy, ox, 0);
            for (int c = 0; c < ch; ++c) {
                out[c] = static_cast<float>(acc[static_cast<size_t>(c)] * inv);
            }
        }
    }
    return dst;
}

Tensor resize_bilinear(const Tensor &src, int out_h, int out_w) {
    check_args(src, out_h, out_w);
    const int in_h = src.dim(0), in_w = src.dim(1), ch = src.dim(2);
    if (out_h == in_h && out_w == in_w) {
        return src;
    }
    Tensor dst({out_h, out_w, ch});
    const double sy = static_cast<double>(in_h) / out_h;
    const double sx = static_cast<double>(in_w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        const double fy = (oy + 0.5) * sy - 0.5;
        const int y0 = static_cast<int>(std::floor(fy));
        const double wy = fy - y0;
        const int ya = clamp_index(y0, in_h), yb = clamp_index(y0 + 1, in_h);
        for (int ox = 0; ox < out_w; ++ox) {
            const double fx = (ox + 0.5) * sx - 0.5;
            const int x0 = static_cast<int>(std::floor(fx));
            const double wx = fx - x0;
            const int xa = clamp_index(x0, in_w), xb = clamp_index(x0 + 1, in_w);
            const float *p00 = &src.at(ya, xa, 0);
            const float *p01 = &src.at(ya, xb, 0);
            const float *p10 = &src.at(yb, xa, 0);
            const float *p11 = &src.at(yb, xb, 0);
            float *out = &dst.at(oy, ox, 0);
            for (int c = 0; c < ch; ++c) {
                const double top = (1.0 - wx) * p00[c] + wx * p01[c];
                const double bot = (1.0 - wx) * p10[c] + wx * p11[c];
                out[c] = static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return dst;
}

Tensor resize_bilinear_adjoint(const Tensor &grad_out, int in_h, int in_w) {
    check_args(grad_out, in_h, in_w);
    const int out_h = grad_out.dim(0), out_w = grad_out.dim(1), ch = grad_out.dim(2);
    Tensor grad_in({in_h, in_w, ch});
    if (out_h == in_h && out_w == in_w) {
        return grad_out;
    }
    const double sy = static_cast<double>(in_h) / out_h;
    const double sx = static_cast<double>(in_w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        const double fy = (oy + 0.5) * sy - 0.5;
        const int y0 = static_cast<int>(std::floor(fy));
        const double wy = fy - y0;
        const int ya = clamp_index(y0, in_h), yb = clamp_index(y0 + 1, in_h);
        for (int ox = 0; ox < out_w; ++ox) {
            const double fx = (ox + 0.5) * sx - 0.5;
            const int x0 = static_cast<int>(std::floor(fx));
            const double wx = fx - x0;
            const int xa = clamp_index(x0, in_w), xb = clamp_index(x0 + 1, in_w);
            const float *g = &grad_out.at(oy, ox, 0);
            for (int c = 0; c < ch; ++c) {
                grad_in.at(ya, xa, c) += static_cast<float>((1.0 - wy) * (1.0 - wx) * g[c]);
                grad_in.at(ya, xb, c) += static_cast<float>((1.0 - wy) * wx * g[c]);
                grad_in.at(yb, xa, c) += static_cast<float>(wy * (1.0 - wx) * g[c]);
                grad_in.at(yb, xb, c) += static_cast<float>(wy * wx * g[c]);
            }
        }
    }
    return grad_in;
}

Tensor resize_bicubic(const Tensor &src, int out_h, int out_w) {
    check_args(src, out_h, out_w);
    const int in_h = src.dim(0), in_w = src.dim(1), ch = src.dim(2);
    if (out_h == in_h && out_w == in_w) {
        return src;
    }
    Tensor dst({out_h, out_w, ch});
    const double sy = static_cast<double>(in_h) / out_h;
    const double sx = static_cast<double>(in_w) / out_w;
    std::vector<double> acc(static_cast<size_t>(ch));
    for (int oy = 0; oy < out_h; ++oy) {
        const double fy = (oy + 0.5) * sy - 0.5;
        const int y0 = static_cast<int>(std::floor(fy));
        double wy[4];
        for (int t = 0; t < 4; ++t) {
            wy[t] = cubic_weight(fy - (y0 - 1 + t));
        }
        for (int ox = 0; ox < out_w; ++ox) {
            const double fx = (ox + 0.5) * sx - 0.5;
            const int x0 = static_cast<int>(std::floor(fx));
            double wx[4];
            for (int t = 0; t < 4; ++t) {
                wx[t] = cubic_weight(fx - (x0 - 1 + t));
            }
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int t = 0; t < 4; ++t) {
                const int y = clamp_index(y0 - 1 + t, in_h);
                for (int s = 0; s < 4; ++s) {
                    const int x = clamp_index(x0 - 1 + s, in_w);
                    const double w = wy[t] * wx[s];
                    const float *px = &src.at(y, x, 0);
                    for (int c = 0; c < ch; ++c) {
                        acc[static_cast<size_t>(c)] += w * px[c];
                    }
                }
            }
            float *out = &dst.at(oy, ox, 0);
            for (int c = 0; c < ch; ++c) {
                out[c] = static_cast<float>(acc[static_cast<size_t>(c)]);
            }
        }
    }
    return dst;
}

} // namespace onescale

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

// Scalar reference kernels. These define the semantics the AVX2 variants are
// tested against. Built without -mavx2 so the compiler cannot widen them.

#include <cmath>
#include <cstring>
#include <limits>

#include "onescale/kernels.hpp"

namespace onescale::kernels {

namespace {

void gemm_nn_scalar(const float *a, const float *b, float *c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        float *crow = c + static_cast<size_t>(i) * n;
        if (!accumulate) {
            std::memset(crow, 0, sizeof(float) * static_cast<size_t>(n));
        }
        const float *arow = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const float av = arow[p];
            const float *brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

void gemm_nt_scalar(const float *a, const float *b, float *c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const float *arow = a + static_cast<size_t>(i) * k;
        float *crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const float *brow = b + static_cast<size_t>(j) * k;
            float acc = 0.0f;
            for (int p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void gemm_tn_scalar(const float *a, const float *b, float *c, int m, int k, int n, bool accumulate) {
    if (!accumulate) {
        std::memset(c, 0, sizeof(float) * static_cast<size_t>(m) * static_cast<size_t>(n));
    }
    for (int p = 0; p < k; ++p) {
        const float *arow = a + static_cast<size_t>(p) * m;
        const float *brow = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const float av = arow[i];
            float *crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// Squared L2 with 8 partial bins combined pairwise. The AVX2 variant performs
// the same bin assignment and combine order, so both produce identical bits
// and identical argmin tie behavior.
float l2sqr_binned(const float *x, const float *y, int dim) {
    float bins[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int i = 0;
    for (; i + 8 <= dim; i += 8) {
        for (int l = 0; l < 8; ++l) {
            const float d = x[i + l] - y[i + l];
            bins[l] += d * d;
        }
    }
    float t0 = bins[0] + bins[1];
    float t1 = bins[2] + bins[3];
    float t2 = bins[4] + bins[5];
    float t3 = bins[6] + bins[7];
    float total = (t0 + t1) + (t2 + t3);
    for (; i < dim; ++i) {
        const float d = x[i] - y[i];
        total += d * d;
    }
    return total;
}

int nearest_code_scalar(const float *x, const float *codes, int vocab, int dim) {
    int best = 0;
    float best_dist = std::numeric_limits<float>::infinity();
    for (int v = 0; v < vocab; ++v) {
        const float d = l2sqr_binned(x, codes + static_cast<size_t>(v) * dim, dim);
        if (d < best_dist) {
            best_dist = d;
            best = v;
        }
    }
    return best;
}

void softmax_rows_scalar(float *x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        float *row = x + static_cast<size_t>(r) * cols;
        float mx = row[0];
        for (int j = 1; j < cols; ++j) {
            mx = std::max(mx, row[j]);
        }
        float sum = 0.0f;
        for (int j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const float inv = 1.0f / sum;
        for (int j = 0; j < cols; ++j) {
            row[j] *= inv;
        }
    }
}

void adamw_step_scalar(float *w, float *m, float *v, const float *g, size_t n, float lr, float beta1,
                       float beta2, float eps, float weight_decay, float bc1, float bc2) {
    for (size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
        const float mhat = m[i] / bc1;
        const float vhat = v[i] / bc2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[i]);
    }
}

float dot_scalar(const float *a, const float *b, size_t n) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

float sumsq_scalar(const float *x, size_t n) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) {
        acc += x[i] * x[i];
    }
    return acc;
}

void axpy_scalar(float alpha, const float *x, float *y, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

constexpr float kGeluC = 0.7978845608028654f; // sqrt(2/pi)
constexpr float kGeluA = 0.044715f;

void gelu_fwd_scalar(const float *x, float *y, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const float xi = x[i];
        const float u = kGeluC * (xi + kGeluA * xi * xi * xi);
        y[i] = 0.5f * xi * (1.0f + std::tanh(u));
    }
}

void gelu_bwd_scalar(const float *x, const float *dy, float *dx, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const float xi = x[i];
        const float u = kGeluC * (xi + kGeluA * xi * xi * xi);
        const float t = std::tanh(u);
        const float du = kGeluC * (1.0f + 3.0f * kGeluA * xi * xi);
        const float grad = 0.5f * (1.0f + t) + 0.5f * xi * (1.0f - t * t) * du;
        dx[i] = dy[i] * grad;
    }
}

} // namespace

const Ops &scalar_ops() {
    static const Ops table = {
        gemm_nn_scalar, gemm_nt_scalar, gemm_tn_scalar, nearest_code_scalar, softmax_rows_scalar,
        adamw_step_scalar, dot_scalar, sumsq_scalar, axpy_scalar, gelu_fwd_scalar, gelu_bwd_scalar,
    };
    return table;
}

} // namespace onescale::kernels

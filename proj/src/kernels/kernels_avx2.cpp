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

// AVX2+FMA kernel variants. This translation unit is the only one compiled
// with -mavx2 -mfma; callers reach it through the dispatch table after a
// CPUID check. nearest_code deliberately avoids FMA so its distance bits
// match the scalar reference exactly (see kernels.hpp).

#include "onescale/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <vector>

namespace onescale::kernels {

namespace {

// ---------------------------------------------------------------- exp -----

// Cephes-style expf polynomial, |rel err| < 2^-21 over the clamped range.
inline __m256 exp256_ps(__m256 x) {
    const __m256 hi = _mm256_set1_ps(88.3762626647949f);
    const __m256 lo = _mm256_set1_ps(-88.3762626647949f);
    x = _mm256_min_ps(_mm256_max_ps(x, lo), hi);

    __m256 fx = _mm256_fmadd_ps(x, _mm256_set1_ps(1.44269504088896341f), _mm256_set1_ps(0.5f));
    fx = _mm256_floor_ps(fx);

    x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(0.693359375f), x);
    x = _mm256_fnmadd_ps(fx, _mm256_set1_ps(-2.12194440e-4f), x);

    const __m256 z = _mm256_mul_ps(x, x);
    __m256 y = _mm256_set1_ps(1.9875691500e-4f);
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
    y = _mm256_fmadd_ps(y, z, x);
    y = _mm256_add_ps(y, _mm256_set1_ps(1.0f));

    __m256i imm = _mm256_cvttps_epi32(fx);
    imm = _mm256_add_epi32(imm, _mm256_set1_epi32(0x7f));
    imm = _mm256_slli_epi32(imm, 23);
    return _mm256_mul_ps(y, _mm256_castsi256_ps(imm));
}

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 s = _mm_add_ps(lo, hi);
    s = _mm_add_ps(s, _mm_movehl_ps(s, s));
    s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
    return _mm_cvtss_f32(s);
}

// ---------------------------------------------------------------- gemm ----

// Packs a 16-column panel of b (k rows) into contiguous memory, zero-padding
// the column tail.
void pack_b_panel(const float *b, int k, int n, int j0, int jw, float *panel) {
    for (int p = 0; p < k; ++p) {
        const float *row = b + static_cast<size_t>(p) * n + j0;
        float *dst = panel + static_cast<size_t>(p) * 16;
        int j = 0;
        for (; j < jw; ++j) {
            dst[j] = row[j];
        }
        for (; j < 16; ++j) {
            dst[j] = 0.0f;
        }
    }
}

// 4x16 FMA micro-kernel over a packed panel.
inline void micro_4x16(const float *a, int k, int lda, const float *panel, float *acc) {
    __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
    __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
    __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
    __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
    for (int p = 0; p < k; ++p) {
        const __m256 b0 = _mm256_load_ps(panel + static_cast<size_t>(p) * 16);
        const __m256 b1 = _mm256_load_ps(panel + static_cast<size_t>(p) * 16 + 8);
        const __m256 a0 = _mm256_broadcast_ss(a + 0 * static_cast<size_t>(lda) + p);
        const __m256 a1 = _mm256_broadcast_ss(a + 1 * static_cast<size_t>(lda) + p);
        const __m256 a2 = _mm256_broadcast_ss(a + 2 * static_cast<size_t>(lda) + p);
        const __m256 a3 = _mm256_broadcast_ss(a + 3 * static_cast<size_t>(lda) + p);
        c00 = _mm256_fmadd_ps(a0, b0, c00);
        c01 = _mm256_fmadd_ps(a0, b1, c01);
        c10 = _mm256_fmadd_ps(a1, b0, c10);
        c11 = _mm256_fmadd_ps(a1, b1, c11);
        c20 = _mm256_fmadd_ps(a2, b0, c20);
        c21 = _mm256_fmadd_ps(a2, b1, c21);
        c30 = _mm256_fmadd_ps(a3, b0, c30);
        c31 = _mm256_fmadd_ps(a3, b1, c31);
    }
    _mm256_store_ps(acc + 0, c00);
    _mm256_store_ps(acc + 8, c01);
    _mm256_store_ps(acc + 16, c10);
    _mm256_store_ps(acc + 24, c11);
    _mm256_store_ps(acc + 32, c20);
    _mm256_store_ps(acc + 40, c21);
    _mm256_store_ps(acc + 48, c30);
    _mm256_store_ps(acc + 56, c31);
}

inline void micro_1x16(const float *a, int k, const float *panel, float *acc) {
    __m256 c0 = _mm256_setzero_ps(), c1 = _mm256_setzero_ps();
    for (int p = 0; p < k; ++p) {
        const __m256 b0 = _mm256_load_ps(panel + static_cast<size_t>(p) * 16);
        const __m256 b1 = _mm256_load_ps(panel + static_cast<size_t>(p) * 16 + 8);
        const __m256 av = _mm256_broadcast_ss(a + p);
        c0 = _mm256_fmadd_ps(av, b0, c0);
        c1 = _mm256_fmadd_ps(av, b1, c1);
    }
    _mm256_store_ps(acc + 0, c0);
    _mm256_store_ps(acc + 8, c1);
}

thread_local std::vector<float> g_panel;

float *panel_buffer(int k) {
    const size_t need = static_cast<size_t>(k) * 16 + 8;
    if (g_panel.size() < need) {
        g_panel.assign(need, 0.0f);
    }
    // align to 32 bytes inside the vector
    auto addr = reinterpret_cast<uintptr_t>(g_panel.data());
    const size_t off = (32 - (addr % 32)) % 32 / sizeof(float);
    return g_panel.data() + off;
}

void gemm_nn_avx2(const float *a, const float *b, float *c, int m, int k, int n, bool accumulate) {
    float *panel = panel_buffer(k);
    alignas(32) float acc[64];
    for (int j0 = 0; j0 < n; j0 += 16) {
        const int jw = (n - j0) < 16 ? (n - j0) : 16;
        pack_b_panel(b, k, n, j0, jw, panel);
        int i = 0;
        for (; i + 4 <= m; i += 4) {
            micro_4x16(a + static_cast<size_t>(i) * k, k, k, panel, acc);
            for (int r = 0; r < 4; ++r) {
                float *crow = c + static_cast<size_t>(i + r) * n + j0;
                const float *arow = acc + static_cast<size_t>(r) * 16;
                if (accumulate) {
                    for (int j = 0; j < jw; ++j) {
                        crow[j] += arow[j];
                    }
                } else {
                    std::memcpy(crow, arow, sizeof(float) * static_cast<size_t>(jw));
                }
            }
        }
        for (; i < m; ++i) {
            micro_1x16(a + static_cast<size_t>(i) * k, k, panel, acc);
            float *crow = c + static_cast<size_t>(i) * n + j0;
            if (accumulate) {
                for (int j = 0; j < jw; ++j) {
                    crow[j] += acc[j];
                }
            } else {
                std::memcpy(crow, acc, sizeof(float) * static_cast<size_t>(jw));
            }
        }
    }
}

void gemm_nt_avx2(const float *a, const float *b, float *c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const float *arow = a + static_cast<size_t>(i) * k;
        float *crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const float *brow = b + static_cast<size_t>(j) * k;
            __m256 acc0 = _mm256_setzero_ps();
            __m256 acc1 = _mm256_setzero_ps();
            int p = 0;
            for (; p + 16 <= k; p += 16) {
                acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), acc0);
                acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p + 8), _mm256_loadu_ps(brow + p + 8), acc1);
            }
            for (; p + 8 <= k; p += 8) {
                acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), acc0);
            }
            float sum = hsum8(_mm256_add_ps(acc0, acc1));
            for (; p < k; ++p) {
                sum += arow[p] * brow[p];
            }
            crow[j] = accumulate ? crow[j] + sum : sum;
        }
    }
}

void gemm_tn_avx2(const float *a, const float *b, float *c, int m, int k, int n, bool accumulate) {
    if (!accumulate) {
        std::memset(c, 0, sizeof(float) * static_cast<size_t>(m) * static_cast<size_t>(n));
    }
    for (int p = 0; p < k; ++p) {
        const float *arow = a + static_cast<size_t>(p) * m;
        const float *brow = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const __m256 av = _mm256_broadcast_ss(arow + i);
            float *crow = c + static_cast<size_t>(i) * n;
            int j = 0;
            for (; j + 8 <= n; j += 8) {
                _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), _mm256_loadu_ps(crow + j)));
            }
            const float afs = arow[i];
            for (; j < n; ++j) {
                crow[j] += afs * brow[j];
            }
        }
    }
}

// --------------------------------------------------------- nearest code ---

// Mirrors the scalar 8-bin layout: lane l of the accumulator is bin l. No
// FMA here; mul then add matches the scalar rounding sequence bit for bit.
int nearest_code_avx2(const float *x, const float *codes, int vocab, int dim) {
    int best = 0;
    float best_dist = std::numeric_limits<float>::infinity();
    const int main_dim = dim & ~7;
    for (int v = 0; v < vocab; ++v) {
        const float *code = codes + static_cast<size_t>(v) * dim;
        __m256 acc = _mm256_setzero_ps();
        for (int i = 0; i < main_dim; i += 8) {
            const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(code + i));
            acc = _mm256_add_ps(acc, _mm256_mul_ps(d, d));
        }
        alignas(32) float bins[8];
        _mm256_store_ps(bins, acc);
        const float t0 = bins[0] + bins[1];
        const float t1 = bins[2] + bins[3];
        const float t2 = bins[4] + bins[5];
        const float t3 = bins[6] + bins[7];
        float total = (t0 + t1) + (t2 + t3);
        for (int i = main_dim; i < dim; ++i) {
            const float d = x[i] - code[i];
            total += d * d;
        }
        if (total < best_dist) {
            best_dist = total;
            best = v;
        }
    }
    return best;
}

// ------------------------------------------------------------- softmax ----

void softmax_rows_avx2(float *x, int rows, int cols) {
    alignas(32) float pad[8];
    for (int r = 0; r < rows; ++r) {
        float *row = x + static_cast<size_t>(r) * cols;
        const int main_cols = cols & ~7;

        __m256 vmax = _mm256_set1_ps(-std::numeric_limits<float>::infinity());
        for (int j = 0; j < main_cols; j += 8) {
            vmax = _mm256_max_ps(vmax, _mm256_loadu_ps(row + j));
        }
        alignas(32) float mx8[8];
        _mm256_store_ps(mx8, vmax);
        float mx = mx8[0];
        for (int l = 1; l < 8; ++l) {
            mx = mx < mx8[l] ? mx8[l] : mx;
        }
        for (int j = main_cols; j < cols; ++j) {
            mx = mx < row[j] ? row[j] : mx;
        }

        const __m256 vm = _mm256_set1_ps(mx);
        __m256 vsum = _mm256_setzero_ps();
        for (int j = 0; j < main_cols; j += 8) {
            const __m256 e = exp256_ps(_mm256_sub_ps(_mm256_loadu_ps(row + j), vm));
            _mm256_storeu_ps(row + j, e);
            vsum = _mm256_add_ps(vsum, e);
        }
        float sum = hsum8(vsum);
        if (main_cols < cols) {
            for (int j = 0; j < 8; ++j) {
                pad[j] = -std::numeric_limits<float>::infinity();
            }
            for (int j = main_cols; j < cols; ++j) {
                pad[j - main_cols] = row[j] - mx;
            }
            const __m256 e = exp256_ps(_mm256_load_ps(pad));
            _mm256_store_ps(pad, e);
            for (int j = main_cols; j < cols; ++j) {
                row[j] = pad[j - main_cols];
                sum += pad[j - main_cols];
            }
        }

        const __m256 inv = _mm256_set1_ps(1.0f / sum);
        int j = 0;
        for (; j + 8 <= cols; j += 8) {
            _mm256_storeu_ps(row + j, _mm256_mul_ps(_mm256_loadu_ps(row + j), inv));
        }
        const float invs = 1.0f / sum;
        for (; j < cols; ++j) {
            row[j] *= invs;
        }
    }
}

// --------------------------------------------------------------- adamw ----

void adamw_step_avx2(float *w, float *m, float *v, const float *g, size_t n, float lr, float beta1,
                     float beta2, float eps, float weight_decay, float bc1, float bc2) {
    const __m256 vb1 = _mm256_set1_ps(beta1);
    const __m256 vb1c = _mm256_set1_ps(1.0f - beta1);
    const __m256 vb2 = _mm256_set1_ps(beta2);
    const __m256 vb2c = _mm256_set1_ps(1.0f - beta2);
    const __m256 vibc1 = _mm256_set1_ps(1.0f / bc1);
    const __m256 vibc2 = _mm256_set1_ps(1.0f / bc2);
    const __m256 veps = _mm256_set1_ps(eps);
    const __m256 vlr = _mm256_set1_ps(lr);
    const __m256 vwd = _mm256_set1_ps(weight_decay);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_loadu_ps(g + i);
        __m256 mv = _mm256_fmadd_ps(vb1, _mm256_loadu_ps(m + i), _mm256_mul_ps(vb1c, gv));
        __m256 vv = _mm256_fmadd_ps(vb2, _mm256_loadu_ps(v + i), _mm256_mul_ps(vb2c, _mm256_mul_ps(gv, gv)));
        _mm256_storeu_ps(m + i, mv);
        _mm256_storeu_ps(v + i, vv);
        const __m256 mhat = _mm256_mul_ps(mv, vibc1);
        const __m256 vhat = _mm256_mul_ps(vv, vibc2);
        const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
        const __m256 wv = _mm256_loadu_ps(w + i);
        const __m256 update = _mm256_add_ps(_mm256_div_ps(mhat, denom), _mm256_mul_ps(vwd, wv));
        _mm256_storeu_ps(w + i, _mm256_fnmadd_ps(vlr, update, wv));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
        const float mhat = m[i] / bc1;
        const float vhat = v[i] / bc2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[i]);
    }
}

// ---------------------------------------------------------- reductions ----

float dot_avx2(const float *a, const float *b, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    }
    float sum = hsum8(acc);
    for (; i < n; ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

float sumsq_avx2(const float *x, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        acc = _mm256_fmadd_ps(v, v, acc);
    }
    float sum = hsum8(acc);
    for (; i < n; ++i) {
        sum += x[i] * x[i];
    }
    return sum;
}

void axpy_avx2(float alpha, const float *x, float *y, size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

// ---------------------------------------------------------------- gelu ----

inline __m256 tanh256_ps(__m256 x) {
    // tanh(x) = 1 - 2 / (exp(2x) + 1)
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 two = _mm256_set1_ps(2.0f);
    const __m256 e = exp256_ps(_mm256_mul_ps(two, x));
    return _mm256_sub_ps(one, _mm256_div_ps(two, _mm256_add_ps(e, one)));
}

constexpr float kGeluC = 0.7978845608028654f;
constexpr float kGeluA = 0.044715f;

void gelu_fwd_avx2(const float *x, float *y, size_t n) {
    const __m256 c = _mm256_set1_ps(kGeluC);
    const __m256 a = _mm256_set1_ps(kGeluA);
    const __m256 half = _mm256_set1_ps(0.5f);
    const __m256 one = _mm256_set1_ps(1.0f);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xi = _mm256_loadu_ps(x + i);
        const __m256 x3 = _mm256_mul_ps(xi, _mm256_mul_ps(xi, xi));
        const __m256 u = _mm256_mul_ps(c, _mm256_fmadd_ps(a, x3, xi));
        const __m256 t = tanh256_ps(u);
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_mul_ps(half, xi), _mm256_add_ps(one, t)));
    }
    for (; i < n; ++i) {
        const float xi = x[i];
        const float u = kGeluC * (xi + kGeluA * xi * xi * xi);
        y[i] = 0.5f * xi * (1.0f + std::tanh(u));
    }
}

void gelu_bwd_avx2(const float *x, const float *dy, float *dx, size_t n) {
    const __m256 c = _mm256_set1_ps(kGeluC);
    const __m256 a3 = _mm256_set1_ps(3.0f * kGeluA);
    const __m256 a = _mm256_set1_ps(kGeluA);
    const __m256 half = _mm256_set1_ps(0.5f);
    const __m256 one = _mm256_set1_ps(1.0f);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xi = _mm256_loadu_ps(x + i);
        const __m256 x2 = _mm256_mul_ps(xi, xi);
        const __m256 u = _mm256_mul_ps(c, _mm256_fmadd_ps(a, _mm256_mul_ps(x2, xi), xi));
        const __m256 t = tanh256_ps(u);
        const __m256 du = _mm256_mul_ps(c, _mm256_fmadd_ps(a3, x2, one));
        const __m256 sech2 = _mm256_fnmadd_ps(t, t, one);
        __m256 grad = _mm256_fmadd_ps(_mm256_mul_ps(half, xi), _mm256_mul_ps(sech2, du),
                                      _mm256_mul_ps(half, _mm256_add_ps(one, t)));
        _mm256_storeu_ps(dx + i, _mm256_mul_ps(_mm256_loadu_ps(dy + i), grad));
    }
    for (; i < n; ++i) {
        const float xi = x[i];
        const float u = kGeluC * (xi + kGeluA * xi * xi * xi);
        const float t = std::tanh(u);
        const float du = kGeluC * (1.0f + 3.0f * kGeluA * xi * xi);
        dx[i] = dy[i] * (0.5f * (1.0f + t) + 0.5f * xi * (1.0f - t * t) * du);
    }
}

} // namespace

const Ops &avx2_ops() {
    static const Ops table = {
        gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2, nearest_code_avx2, softmax_rows_avx2,
        adamw_step_avx2, dot_avx2, sumsq_avx2, axpy_avx2, gelu_fwd_avx2, gelu_bwd_avx2,
    };
    return table;
}

} // namespace onescale::kernels

#else // !(__AVX2__ && __FMA__)

namespace onescale::kernels {

const Ops &avx2_ops() {
    return scalar_ops();
}

} // namespace onescale::kernels

#endif

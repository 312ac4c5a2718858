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

#include <cstddef>

namespace onescale::kernels {

// Float32 row-major compute kernels. Each kernel has a scalar reference
// implementation and an AVX2 variant; the active table is chosen once at
// startup from CPUID and can be overridden with ONESCALE_KERNELS=scalar|avx2
// or force_isa(). Reductions that feed argmin decisions (nearest_code) use a
// fixed 8-bin partial-sum order in BOTH variants so tie-breaking is
// bit-identical across implementations.
struct Ops {
    // c[m x n] = a[m x k] * b[k x n]          (+ c when accumulate)
    void (*gemm_nn)(const float *a, const float *b, float *c, int m, int k, int n, bool accumulate);
    // c[m x n] = a[m x k] * b[n x k]^T        (+ c when accumulate)
    void (*gemm_nt)(const float *a, const float *b, float *c, int m, int k, int n, bool accumulate);
    // c[m x n] = a[k x m]^T * b[k x n]        (+ c when accumulate)
    void (*gemm_tn)(const float *a, const float *b, float *c, int m, int k, int n, bool accumulate);

    // Index of the codebook row nearest to x in squared L2; ties resolve to
    // the lowest index. codes is [vocab x dim].
    int (*nearest_code)(const float *x, const float *codes, int vocab, int dim);

    // In-place numerically stable softmax over each row.
    void (*softmax_rows)(float *x, int rows, int cols);

    // AdamW with decoupled weight decay. bc1/bc2 are the bias corrections
    // 1-beta1^t and 1-beta2^t for the current step t.
    void (*adamw_step)(float *w, float *m, float *v, const float *g, size_t n, float lr, float beta1,
                       float beta2, float eps, float weight_decay, float bc1, float bc2);

    float (*dot)(const float *a, const float *b, size_t n);
    float (*sumsq)(const float *x, size_t n);
    // y += alpha * x
    void (*axpy)(float alpha, const float *x, float *y, size_t n);

    // tanh-approximation GELU and its derivative (dx = dy * gelu'(x)).
    void (*gelu_fwd)(const float *x, float *y, size_t n);
    void (*gelu_bwd)(const float *x, const float *dy, float *dx, size_t n);
};

enum class Isa { scalar, avx2 };

const Ops &scalar_ops();
const Ops &avx2_ops();
bool avx2_supported();

/// Active table, resolved on first use.
const Ops &ops();
const char *active_isa_name();
void force_isa(Isa isa);

} // namespace onescale::kernels

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

#include "onescale/kernels.hpp"
#include "onescale/rng.hpp"

#include <cmath>
#include <cstring>
#include <doctest.h>
#include <vector>

using namespace onescale;
using namespace onescale::kernels;

namespace {

std::vector<float> random_vec(size_t n, Rng &rng, float lo = -1.0f, float hi = 1.0f) {
    std::vector<float> v(n);
    for (auto &x : v) {
        x = static_cast<float>(rng.uniform(lo, hi));
    }
    return v;
}

// Double-precision naive matmul, the independent reference for all layouts.
std::vector<double> gemm_ref(const std::vector<float> &a, const std::vector<float> &b, int m, int k,
                             int n, bool a_trans, bool b_trans) {
    std::vector<double> c(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a_trans ? a[static_cast<size_t>(p) * m + i] : a[static_cast<size_t>(i) * k + p];
            for (int j = 0; j < n; ++j) {
                const double bv = b_trans ? b[static_cast<size_t>(j) * k + p] : b[static_cast<size_t>(p) * n + j];
                c[static_cast<size_t>(i) * n + j] += av * bv;
            }
        }
    }
    return c;
}

void check_close(const std::vector<float> &got, const std::vector<double> &want, double tol) {
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
        const double scale = std::max(1.0, std::abs(want[i]));
        CHECK(std::abs(got[i] - want[i]) <= tol * scale);
    }
}

struct IsaFixture {
    // Tests force ISAs explicitly; restore the default dispatch afterwards.
    ~IsaFixture() {
        force_isa(avx2_supported() ? Isa::avx2 : Isa::scalar);
    }
};

} // namespace

TEST_CASE("dispatch exposes a usable table and ISA toggling") {
    IsaFixture fix;
    CHECK(ops().gemm_nn != nullptr);
    force_isa(Isa::scalar);
    CHECK(std::strcmp(active_isa_name(), "scalar") == 0);
    if (avx2_supported()) {
        force_isa(Isa::avx2);
        CHECK(std::strcmp(active_isa_name(), "avx2") == 0);
    }
}

TEST_CASE("gemm variants match the double-precision reference, both ISAs") {
    IsaFixture fix;
    Rng rng = Rng::derive(11, "gemm");
    const std::vector<const Ops *> tables =
        avx2_supported() ? std::vector<const Ops *>{&scalar_ops(), &avx2_ops()}
                         : std::vector<const Ops *>{&scalar_ops()};
    const int sizes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 16, 16}, {5, 17, 19}, {8, 32, 48}, {13, 9, 33}};
    for (const auto &sz : sizes) {
        const int m = sz[0], k = sz[1], n = sz[2];
        const auto a = random_vec(static_cast<size_t>(m) * k, rng);
        const auto b = random_vec(static_cast<size_t>(k) * n, rng);
        const auto at = [&] { // a stored transposed [k x m]
            std::vector<float> t(a.size());
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p)
                    t[static_cast<size_t>(p) * m + i] = a[static_cast<size_t>(i) * k + p];
            return t;
        }();
        const auto bt = [&] { // b stored transposed [n x k]
            std::vector<float> t(b.size());
            for (int p = 0; p < k; ++p)
                for (int j = 0; j < n; ++j)
                    t[static_cast<size_t>(j) * k + p] = b[static_cast<size_t>(p) * n + j];
            return t;
        }();
        const auto want = gemm_ref(a, b, m, k, n, false, false);
        for (const Ops *t : tables) {
            std::vector<float> c(static_cast<size_t>(m) * n, -7.0f);
            t->gemm_nn(a.data(), b.data(), c.data(), m, k, n, false);
            check_close(c, want, 1e-4);
            // accumulate mode adds onto the preset value
            std::vector<float> c2(c);
            t->gemm_nn(a.data(), b.data(), c2.data(), m, k, n, true);
            for (size_t i = 0; i < c2.size(); ++i) {
                CHECK(c2[i] == doctest::Approx(2.0f * c[i]).epsilon(1e-4));
            }
            std::vector<float> cnt(static_cast<size_t>(m) * n, 0.0f);
            t->gemm_nt(a.data(), bt.data(), cnt.data(), m, k, n, false);
            check_close(cnt, want, 1e-4);
            std::vector<float> ctn(static_cast<size_t>(m) * n, 0.0f);
            t->gemm_tn(at.data(), b.data(), ctn.data(), m, k, n, false);
            check_close(ctn, want, 1e-4);
        }
    }
}

TEST_CASE("nearest_code picks the lowest index among ties, identically on both ISAs") {
    IsaFixture fix;
    // duplicated entries: the duplicate at index 2 must never win over index 0
    const int dim = 19;
    Rng rng = Rng::derive(12, "ties");
    auto codes = random_vec(static_cast<size_t>(4) * dim, rng);
    std::memcpy(codes.data() + 2 * dim, codes.data(), sizeof(float) * dim);
    for (int trial = 0; trial < 50; ++trial) {
        auto x = random_vec(dim, rng);
        const int s = scalar_ops().nearest_code(x.data(), codes.data(), 4, dim);
        CHECK(s != 2);
        if (avx2_supported()) {
            CHECK(avx2_ops().nearest_code(x.data(), codes.data(), 4, dim) == s);
        }
    }
    // symmetric two-entry tie: x equidistant from both, lowest index wins
    std::vector<float> pair = {1.0f, 0.0f, 0.0f, 1.0f};
    std::vector<float> mid = {0.0f, 0.0f};
    CHECK(scalar_ops().nearest_code(mid.data(), pair.data(), 2, 2) == 0);
    if (avx2_supported()) {
        CHECK(avx2_ops().nearest_code(mid.data(), pair.data(), 2, 2) == 0);
    }
}

TEST_CASE("nearest_code agrees across ISAs bit-for-bit on random data") {
    IsaFixture fix;
    if (!avx2_supported()) {
        return;
    }
    Rng rng = Rng::derive(13, "nncmp");
    for (const int dim : {1, 3, 8, 16, 32, 35}) {
        for (const int vocab : {1, 2, 17, 256}) {
            auto codes = random_vec(static_cast<size_t>(vocab) * dim, rng);
            for (int trial = 0; trial < 20; ++trial) {
                auto x = random_vec(dim, rng);
                CHECK(scalar_ops().nearest_code(x.data(), codes.data(), vocab, dim) ==
                      avx2_ops().nearest_code(x.data(), codes.data(), vocab, dim));
            }
        }
    }
}

TEST_CASE("nearest_code matches a well-separated brute-force oracle") {
    IsaFixture fix;
    Rng rng = Rng::derive(14, "nnref");
    const int dim = 32, vocab = 64;
    auto codes = random_vec(static_cast<size_t>(vocab) * dim, rng);
    for (int trial = 0; trial < 30; ++trial) {
        // plant the query near a random code so the winner is unambiguous
        const int target = static_cast<int>(rng.uniform_int(0, vocab - 1));
        std::vector<float> x(codes.begin() + static_cast<size_t>(target) * dim,
                             codes.begin() + static_cast<size_t>(target + 1) * dim);
        for (auto &v : x) {
            v += static_cast<float>(rng.uniform(-1e-3, 1e-3));
        }
        CHECK(scalar_ops().nearest_code(x.data(), codes.data(), vocab, dim) == target);
        if (avx2_supported()) {
            CHECK(avx2_ops().nearest_code(x.data(), codes.data(), vocab, dim) == target);
        }
    }
}

TEST_CASE("softmax_rows is stable, normalized, and matches a double oracle") {
    IsaFixture fix;
    Rng rng = Rng::derive(15, "softmax");
    for (const int cols : {1, 7, 8, 9, 256, 1000}) {
        const int rows = 3;
        auto x = random_vec(static_cast<size_t>(rows) * cols, rng, -8.0f, 8.0f);
        if (cols > 2) { // mix in extreme logits
            x[1] = -1e30f;
            x[2] = 40.0f;
        }
        std::vector<double> want(x.size());
        for (int r = 0; r < rows; ++r) {
            const float *row = x.data() + static_cast<size_t>(r) * cols;
            double mx = row[0];
            for (int j = 1; j < cols; ++j) {
                mx = std::max(mx, static_cast<double>(row[j]));
            }
            double sum = 0.0;
            for (int j = 0; j < cols; ++j) {
                want[static_cast<size_t>(r) * cols + j] = std::exp(row[j] - mx);
                sum += want[static_cast<size_t>(r) * cols + j];
            }
            for (int j = 0; j < cols; ++j) {
                want[static_cast<size_t>(r) * cols + j] /= sum;
            }
        }
        const std::vector<const Ops *> tables =
            avx2_supported() ? std::vector<const Ops *>{&scalar_ops(), &avx2_ops()}
                             : std::vector<const Ops *>{&scalar_ops()};
        for (const Ops *t : tables) {
            auto y = x;
            t->softmax_rows(y.data(), rows, cols);
            for (int r = 0; r < rows; ++r) {
                double sum = 0.0;
                for (int j = 0; j < cols; ++j) {
                    const size_t idx = static_cast<size_t>(r) * cols + j;
                    CHECK(std::abs(y[idx] - want[idx]) < 2e-6);
                    sum += y[idx];
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("adamw_step matches a double-precision reference on both ISAs") {
    IsaFixture fix;
    Rng rng = Rng::derive(16, "adamw");
    const size_t n = 1037; // odd size exercises the vector tail
    const auto w0 = random_vec(n, rng);
    const auto m0 = random_vec(n, rng, -0.1f, 0.1f);
    const auto v0 = random_vec(n, rng, 0.0f, 0.1f);
    const auto g = random_vec(n, rng);
    const float lr = 1e-3f, b1 = 0.9f, b2 = 0.999f, eps = 1e-8f, wd = 1e-2f;
    const float bc1 = 1.0f - std::pow(b1, 3.0f), bc2 = 1.0f - std::pow(b2, 3.0f);

    std::vector<double> wref(n);
    for (size_t i = 0; i < n; ++i) {
        const double m1 = b1 * m0[i] + (1.0 - b1) * g[i];
        const double v1 = b2 * v0[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = m1 / bc1, vhat = v1 / bc2;
        wref[i] = w0[i] - lr * (mhat / (std::sqrt(vhat) + eps) + wd * w0[i]);
    }

    const std::vector<const Ops *> tables =
        avx2_supported() ? std::vector<const Ops *>{&scalar_ops(), &avx2_ops()}
                         : std::vector<const Ops *>{&scalar_ops()};
    for (const Ops *t : tables) {
        auto w = w0, m = m0, v = v0;
        t->adamw_step(w.data(), m.data(), v.data(), g.data(), n, lr, b1, b2, eps, wd, bc1, bc2);
        for (size_t i = 0; i < n; ++i) {
            CHECK(std::abs(w[i] - wref[i]) < 1e-6);
        }
    }
}

TEST_CASE("dot, sumsq, axpy agree with double references on both ISAs") {
    IsaFixture fix;
    Rng rng = Rng::derive(17, "blas1");
    for (const size_t n : {size_t(1), size_t(7), size_t(8), size_t(255), size_t(4096)}) {
        const auto a = random_vec(n, rng);
        const auto b = random_vec(n, rng);
        double dref = 0.0, sref = 0.0;
        for (size_t i = 0; i < n; ++i) {
            dref += static_cast<double>(a[i]) * b[i];
            sref += static_cast<double>(a[i]) * a[i];
        }
        const std::vector<const Ops *> tables =
            avx2_supported() ? std::vector<const Ops *>{&scalar_ops(), &avx2_ops()}
                             : std::vector<const Ops *>{&scalar_ops()};
        for (const Ops *t : tables) {
            CHECK(t->dot(a.data(), b.data(), n) == doctest::Approx(dref).epsilon(1e-4));
            CHECK(t->sumsq(a.data(), n) == doctest::Approx(sref).epsilon(1e-4));
            auto y = b;
            t->axpy(0.5f, a.data(), y.data(), n);
            for (size_t i = 0; i < n; ++i) {
                CHECK(y[i] == doctest::Approx(b[i] + 0.5 * a[i]).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("gelu forward/backward match analytic double references on both ISAs") {
    IsaFixture fix;
    Rng rng = Rng::derive(18, "gelu");
    const size_t n = 517;
    const auto x = random_vec(n, rng, -4.0f, 4.0f);
    const auto dy = random_vec(n, rng);
    constexpr double c = 0.7978845608028654, a = 0.044715;
    std::vector<double> yref(n), dxref(n);
    for (size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        const double u = c * (xi + a * xi * xi * xi);
        const double t = std::tanh(u);
        yref[i] = 0.5 * xi * (1.0 + t);
        const double du = c * (1.0 + 3.0 * a * xi * xi);
        dxref[i] = dy[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du);
    }
    const std::vector<const Ops *> tables =
        avx2_supported() ? std::vector<const Ops *>{&scalar_ops(), &avx2_ops()}
                         : std::vector<const Ops *>{&scalar_ops()};
    for (const Ops *t : tables) {
        std::vector<float> y(n), dx(n);
        t->gelu_fwd(x.data(), y.data(), n);
        t->gelu_bwd(x.data(), dy.data(), dx.data(), n);
        for (size_t i = 0; i < n; ++i) {
            CHECK(std::abs(y[i] - yref[i]) < 1e-5);
            CHECK(std::abs(dx[i] - dxref[i]) < 1e-4);
        }
    }
}

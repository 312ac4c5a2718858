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

#include "onescale/common.hpp"

#include <cstdlib>
#include <string_view>

namespace onescale::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa pick_default_isa() {
    if (const char *env = std::getenv("ONESCALE_KERNELS")) {
        const std::string_view want(env);
        if (want == "scalar") {
            return Isa::scalar;
        }
        if (want == "avx2") {
            require(cpu_has_avx2(), "ONESCALE_KERNELS=avx2 requested but CPU lacks AVX2/FMA");
            return Isa::avx2;
        }
        fail("unknown ONESCALE_KERNELS value (expected scalar or avx2): " + std::string(want));
    }
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

struct Active {
    Isa isa;
    const Ops *table;
};

Active &active() {
    static Active state = [] {
        const Isa isa = pick_default_isa();
        return Active{isa, isa == Isa::avx2 ? &avx2_ops() : &scalar_ops()};
    }();
    return state;
}

} // namespace

bool avx2_supported() {
    return cpu_has_avx2();
}

const Ops &ops() {
    return *active().table;
}

const char *active_isa_name() {
    return active().isa == Isa::avx2 ? "avx2" : "scalar";
}

void force_isa(Isa isa) {
    if (isa == Isa::avx2) {
        require(cpu_has_avx2(), "force_isa(avx2) on a CPU without AVX2/FMA");
    }
    active() = Active{isa, isa == Isa::avx2 ? &avx2_ops() : &scalar_ops()};
}

} // namespace onescale::kernels

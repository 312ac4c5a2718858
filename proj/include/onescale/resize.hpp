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

#include "onescale/tensor.hpp"

namespace onescale {

// Resamplers over [H, W, C] tensors with arbitrary C. All are pure functions
// using half-pixel sample centers (align-corners disabled) and edge
// replication at the borders. Identical input size returns a plain copy, so
// same-size calls are bit-exact identities.

// Box-coverage average; the fixed convention for downsampling residual maps.
Tensor resize_area(const Tensor &src, int out_h, int out_w);

// The fixed convention for upsampling dequantized maps.
Tensor resize_bilinear(const Tensor &src, int out_h, int out_w);

// Catmull-Rom cubic (a = -0.5); used to bring degraded images back to full
// resolution.
Tensor resize_bicubic(const Tensor &src, int out_h, int out_w);

// Transpose of resize_bilinear viewed as a linear map: scatters output-space
// gradients back onto an [in_h, in_w, C] grid with the same weights. Needed
// wherever gradients must flow through bilinear upsampling.
Tensor resize_bilinear_adjoint(const Tensor &grad_out, int in_h, int in_w);

} // namespace onescale

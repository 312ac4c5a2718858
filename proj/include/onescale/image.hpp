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

#include <string>

namespace onescale {

// Images are [H, W, C] float tensors with values in [0, 1], C = 3.

// Reads an 8-bit PNG as RGB; pixel values divided by 255.
Tensor read_png(const std::string &path);

// Writes an 8-bit RGB PNG; values multiplied by 255 with round-half-up.
void write_png(const Tensor &img, const std::string &path);

// In-memory JPEG encode/decode round trip: baseline sequential, 4:2:0 chroma
// subsampling below quality 90, 4:4:4 at >= 90. quality must lie in [1, 100].
Tensor jpeg_roundtrip(const Tensor &img, int quality);

} // namespace onescale

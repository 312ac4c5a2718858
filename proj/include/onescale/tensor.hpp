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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "onescale/common.hpp"

namespace onescale {

/// Dense row-major float32 tensor. Images and feature maps use HWC layout.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(numel_of(shape_)), 0.0f);
    }

    Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

    static Tensor zeros_like(const Tensor &t) { return Tensor(t.shape_); }

    const std::vector<int> &shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape_.size()); }

    size_t numel() const { return data_.size(); }

    float *data() { return data_.data(); }
    const float *data() const { return data_.data(); }

    float &operator[](size_t i) { return data_[i]; }
    float operator[](size_t i) const { return data_[i]; }

    // 2-D / 3-D accessors for (rows, cols) and (h, w, c) layouts.
    float &at(int i) { return data_[static_cast<size_t>(i)]; }
    const float &at(int i) const { return data_[static_cast<size_t>(i)]; }
    float &at(int i, int j) { return data_[idx2(i, j)]; }
    const float &at(int i, int j) const { return data_[idx2(i, j)]; }
    float &at(int i, int j, int k) { return data_[idx3(i, j, k)]; }
    const float &at(int i, int j, int k) const { return data_[idx3(i, j, k)]; }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

    void clamp(float lo, float hi) {
        for (float &v : data_) {
            v = std::min(hi, std::max(lo, v));
        }
    }

    bool same_shape(const Tensor &o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (float v : data_) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

    static size_t numel_of(const std::vector<int> &shape) {
        size_t n = 1;
        for (int d : shape) {
            require(d >= 0, "tensor: negative dimension");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

private:
    size_t idx2(int i, int j) const {
        return static_cast<size_t>(i) * static_cast<size_t>(shape_[1]) + static_cast<size_t>(j);
    }
    size_t idx3(int i, int j, int k) const {
        return (static_cast<size_t>(i) * static_cast<size_t>(shape_[1]) + static_cast<size_t>(j)) *
                   static_cast<size_t>(shape_[2]) +
               static_cast<size_t>(k);
    }

    std::vector<int> shape_;
    std::vector<float> data_;
};

inline double mse(const Tensor &a, const Tensor &b) {
    require(a.same_shape(b), "mse: shape mismatch");
    require(a.numel() > 0, "mse: empty tensors");
    double acc = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

} // namespace onescale

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

#include "onescale/image.hpp"

#include "onescale/common.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

namespace onescale {

namespace {

std::vector<unsigned char> to_bytes(const Tensor &img) {
    require(img.rank() == 3 && img.dim(2) == 3, "image must be [H, W, 3]");
    std::vector<unsigned char> bytes(img.numel());
    const float *p = img.data();
    for (size_t i = 0; i < img.numel(); ++i) {
        // round-half-up on the [0, 255] scale
        float v = std::floor(p[i] * 255.0f + 0.5f);
        v = v < 0.0f ? 0.0f : (v > 255.0f ? 255.0f : v);
        bytes[i] = static_cast<unsigned char>(v);
    }
    return bytes;
}

Tensor from_bytes(const unsigned char *bytes, int h, int w) {
    Tensor img({h, w, 3});
    float *p = img.data();
    const size_t n = img.numel();
    for (size_t i = 0; i < n; ++i) {
        p[i] = static_cast<float>(bytes[i]) / 255.0f;
    }
    return img;
}

// libjpeg's default error handler exits the process; reroute it through
// setjmp so failures surface as exceptions.
struct JpegErr {
    jpeg_error_mgr pub;
    jmp_buf jump;
    char msg[JMSG_LENGTH_MAX];
};

void jpeg_error_trap(j_common_ptr cinfo) {
    auto *err = reinterpret_cast<JpegErr *>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->msg);
    longjmp(err->jump, 1);
}

} // namespace

Tensor read_png(const std::string &path) {
    png_image im;
    std::memset(&im, 0, sizeof(im));
    im.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&im, path.c_str())) {
        fail("cannot read PNG " + path + ": " + im.message);
    }
    im.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(im));
    if (!png_image_finish_read(&im, nullptr, bytes.data(), 0, nullptr)) {
        const std::string msg = im.message;
        png_image_free(&im);
        fail("cannot decode PNG " + path + ": " + msg);
    }
    return from_bytes(bytes.data(), static_cast<int>(im.height), static_cast<int>(im.width));
}

void write_png(const Tensor &img, const std::string &path) {
    const std::vector<unsigned char> bytes = to_bytes(img);
    png_image im;
    std::memset(&im, 0, sizeof(im));
    im.version = PNG_IMAGE_VERSION;
    im.width = static_cast<png_uint_32>(img.dim(1));
    im.height = static_cast<png_uint_32>(img.dim(0));
    im.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&im, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        fail("cannot write PNG " + path + ": " + im.message);
    }
}

Tensor jpeg_roundtrip(const Tensor &img, int quality) {
    require(quality >= 1 && quality <= 100, "JPEG quality must lie in [1, 100]");
    const int h = img.dim(0), w = img.dim(1);
    std::vector<unsigned char> rgb = to_bytes(img);

    JpegErr err;
    unsigned char *encoded = nullptr;
    unsigned long encoded_size = 0;

    jpeg_compress_struct enc;
    enc.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_trap;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&enc);
        free(encoded);
        fail(std::string("JPEG encode failed: ") + err.msg);
    }
    jpeg_create_compress(&enc);
    jpeg_mem_dest(&enc, &encoded, &encoded_size);
    enc.image_width = static_cast<JDIMENSION>(w);
    enc.image_height = static_cast<JDIMENSION>(h);
    enc.input_components = 3;
    enc.in_color_space = JCS_RGB;
    jpeg_set_defaults(&enc);
    jpeg_set_quality(&enc, quality, TRUE); // force baseline-compatible tables
    enc.dct_method = JDCT_ISLOW;
    // 4:2:0 below quality 90, 4:4:4 at or above; pinned for reproducibility.
    const int luma_samp = quality < 90 ? 2 : 1;
    enc.comp_info[0].h_samp_factor = luma_samp;
    enc.comp_info[0].v_samp_factor = luma_samp;
    for (int c = 1; c < 3; ++c) {
        enc.comp_info[c].h_samp_factor = 1;
        enc.comp_info[c].v_samp_factor = 1;
    }
    jpeg_start_compress(&enc, TRUE);
    const size_t row_stride = static_cast<size_t>(w) * 3;
    while (enc.next_scanline < enc.image_height) {
        JSAMPROW row = rgb.data() + enc.next_scanline * row_stride;
        jpeg_write_scanlines(&enc, &row, 1);
    }
    jpeg_finish_compress(&enc);
    jpeg_destroy_compress(&enc);

    jpeg_decompress_struct dec;
    dec.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_trap;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&dec);
        free(encoded);
        fail(std::string("JPEG decode failed: ") + err.msg);
    }
    jpeg_create_decompress(&dec);
    jpeg_mem_src(&dec, encoded, encoded_size);
    jpeg_read_header(&dec, TRUE);
    dec.out_color_space = JCS_RGB;
    dec.dct_method = JDCT_ISLOW;
    jpeg_start_decompress(&dec);
    require(static_cast<int>(dec.output_width) == w && static_cast<int>(dec.output_height) == h,
            "JPEG round trip changed dimensions");
    std::vector<unsigned char> decoded(static_cast<size_t>(h) * row_stride);
    while (dec.output_scanline < dec.output_height) {
        JSAMPROW row = decoded.data() + dec.output_scanline * row_stride;
        jpeg_read_scanlines(&dec, &row, 1);
    }
    jpeg_finish_decompress(&dec);
    jpeg_destroy_decompress(&dec);
    free(encoded);

    return from_bytes(decoded.data(), h, w);
}

} // namespace onescale

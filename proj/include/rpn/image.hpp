#pragma once

#include <string>
#include <vector>

#include "rpn/tensor.hpp"

namespace rpn {

// Planar RGB image, values in [0,1], channel-major (c, y, x).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<Real> data;

  Image() = default;
  Image(int h, int w)
      : height(h), width(w), data(static_cast<size_t>(3) * h * w, 0) {}

  Real& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  Real at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  int64_t pixels() const { return static_cast<int64_t>(height) * width; }
};

// PPM (P6) and PNG, chosen by file extension (.ppm otherwise PNG).
Image read_image(const std::string& path);
void write_image(const std::string& path, const Image& img);

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

// Grayscale dump of a single-channel map, min-max normalized.
void write_gray(const std::string& path, const std::vector<Real>& map, int h,
                int w);

// Separable cubic resampling (Catmull-Rom), kernel stretched by the scale
// factor when downscaling so constants and low frequencies are preserved.
Image resize_bicubic(const Image& img, int out_h, int out_w);

// Pads bottom/right by symmetric reflection up to the next multiple.
Image pad_to_multiple(const Image& img, int multiple);
Image crop_top_left(const Image& img, int h, int w);

// (N,3,H,W) tensor from a batch of same-sized images.
TensorR images_to_tensor(const std::vector<const Image*>& batch);
TensorR image_to_tensor(const Image& img);
// Sample n of a (N,3,H,W) tensor; clamps to [0,1] when requested.
Image tensor_to_image(const TensorR& t, int n, bool clamp01);

uint8_t quantize_8bit(Real v);

// FNV-1a over the 8-bit quantized pixels; used to freeze corpora in tests.
uint64_t image_hash(const Image& img);

}  // namespace rpn

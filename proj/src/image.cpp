#include "rpn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "rpn/common.hpp"

namespace rpn {

namespace {

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         std::equal(suf.rbegin(), suf.rend(), s.rbegin(),
                    [](char a, char b) { return std::tolower(a) == std::tolower(b); });
}

// Symmetric reflection index fold: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
int fold_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

Real cubic_kernel(Real t) {
  constexpr Real a = -0.5;
  t = std::abs(t);
  if (t <= 1) return ((a + 2) * t - (a + 3)) * t * t + 1;
  if (t < 2) return (((t - 5) * t + 8) * t - 4) * a;
  return 0;
}

// One separable pass along the given axis.
void resample_axis(const Image& src, Image& dst, bool vertical) {
  const int in_n = vertical ? src.height : src.width;
  const int out_n = vertical ? dst.height : dst.width;
  const int other = vertical ? src.width : src.height;
  const Real scale = static_cast<Real>(in_n) / out_n;
  const Real fscale = std::max<Real>(1, scale);
  const Real support = 2 * fscale;

  std::vector<int> idx;
  std::vector<Real> wgt;
  for (int o = 0; o < out_n; ++o) {
    const Real center = (o + Real(0.5)) * scale - Real(0.5);
    const int lo = static_cast<int>(std::ceil(center - support));
    const int hi = static_cast<int>(std::floor(center + support));
    idx.clear();
    wgt.clear();
    Real norm = 0;
    for (int i = lo; i <= hi; ++i) {
      const Real w = cubic_kernel((i - center) / fscale);
      if (w == 0) continue;
      idx.push_back(std::clamp(i, 0, in_n - 1));
      wgt.push_back(w);
      norm += w;
    }
    for (Real& w : wgt) w /= norm;
    for (int c = 0; c < 3; ++c)
      for (int j = 0; j < other; ++j) {
        Real acc = 0;
        for (size_t k = 0; k < idx.size(); ++k) {
          const int i = idx[k];
          acc += wgt[k] * (vertical ? src.at(c, i, j) : src.at(c, j, i));
        }
        if (vertical)
          dst.at(c, o, j) = acc;
        else
          dst.at(c, j, o) = acc;
      }
  }
}

}  // namespace

uint8_t quantize_8bit(Real v) {
  const long q = std::lround(v * 255.0);
  return static_cast<uint8_t>(std::clamp(q, 0L, 255L));
}

Image read_image(const std::string& path) {
  if (has_suffix(path, ".ppm")) return read_ppm(path);
  return read_png(path);
}

void write_image(const std::string& path, const Image& img) {
  if (has_suffix(path, ".ppm")) return write_ppm(path, img);
  return write_png(path, img);
}

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check_format(f.good(), "cannot open image: " + path);
  std::string magic;
  f >> magic;
  check_format(magic == "P6", "not a P6 ppm: " + path);
  auto next_int = [&f, &path]() {
    // Skip whitespace and '#' comments.
    for (;;) {
      int ch = f.peek();
      if (ch == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(ch)) {
        f.get();
      } else {
        break;
      }
    }
    int v = -1;
    f >> v;
    check_format(f.good() && v >= 0, "bad ppm header: " + path);
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  check_format(maxval == 255, "only 8-bit ppm supported: " + path);
  f.get();  // single whitespace after header
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    check_format(f.gcount() == static_cast<std::streamsize>(row.size()),
                 "truncated ppm payload: " + path);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = row[static_cast<size_t>(x) * 3 + c] / Real(255);
  }
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  check_config(f.good(), "cannot write image: " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<size_t>(x) * 3 + c] = quantize_8bit(img.at(c, y, x));
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
  }
  check_config(f.good(), "write failed: " + path);
}

Image read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  check_format(fp != nullptr, "cannot open image: " + path);
  png_byte header[8];
  if (std::fread(header, 1, 8, fp) != 8 || png_sig_cmp(header, 0, 8)) {
    std::fclose(fp);
    throw FormatError("not a png file: " + path);
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw FormatError("png decode error: " + path);
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  std::vector<png_byte> rowbuf(png_get_rowbytes(png, info));
  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, rowbuf.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = rowbuf[static_cast<size_t>(x) * 3 + c] / Real(255);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

void write_png(const std::string& path, const Image& img) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  check_config(fp != nullptr, "cannot write image: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw ConfigError("png encode error: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<size_t>(x) * 3 + c] = quantize_8bit(img.at(c, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

void write_gray(const std::string& path, const std::vector<Real>& map, int h,
                int w) {
  check_config(static_cast<int64_t>(map.size()) == static_cast<int64_t>(h) * w,
               "gray map size mismatch");
  Real lo = map.empty() ? 0 : map[0], hi = lo;
  for (Real v : map) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const Real span = hi > lo ? hi - lo : Real(1);
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Real v = (map[static_cast<size_t>(y) * w + x] - lo) / span;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
    }
  write_image(path, img);
}

Image resize_bicubic(const Image& img, int out_h, int out_w) {
  check_config(out_h > 0 && out_w > 0, "resize target must be positive");
  if (out_h == img.height && out_w == img.width) return img;
  Image mid(img.height, out_w);
  resample_axis(img, mid, /*vertical=*/false);
  Image out(out_h, out_w);
  resample_axis(mid, out, /*vertical=*/true);
  return out;
}

Image pad_to_multiple(const Image& img, int multiple) {
  const int h = (img.height + multiple - 1) / multiple * multiple;
  const int w = (img.width + multiple - 1) / multiple * multiple;
  if (h == img.height && w == img.width) return img;
  Image out(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y) {
      const int sy = fold_index(y, img.height);
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = img.at(c, sy, fold_index(x, img.width));
    }
  return out;
}

Image crop_top_left(const Image& img, int h, int w) {
  check_shape(h <= img.height && w <= img.width, "crop larger than image");
  Image out(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, x);
  return out;
}

TensorR images_to_tensor(const std::vector<const Image*>& batch) {
  check_shape(!batch.empty(), "empty batch");
  const int h = batch[0]->height, w = batch[0]->width;
  TensorR t(Shape{static_cast<int>(batch.size()), 3, h, w});
  for (size_t n = 0; n < batch.size(); ++n) {
    check_shape(batch[n]->height == h && batch[n]->width == w,
                "batch images must share dims");
    std::copy(batch[n]->data.begin(), batch[n]->data.end(),
              t.data() + static_cast<int64_t>(n) * 3 * h * w);
  }
  return t;
}

TensorR image_to_tensor(const Image& img) { return images_to_tensor({&img}); }

Image tensor_to_image(const TensorR& t, int n, bool clamp01) {
  check_shape(t.rank() == 4 && t.dim(1) == 3, "tensor_to_image needs (N,3,H,W)");
  Image img(t.dim(2), t.dim(3));
  const int64_t plane = img.pixels();
  const Real* src = t.data() + static_cast<int64_t>(n) * 3 * plane;
  for (int64_t i = 0; i < 3 * plane; ++i)
    img.data[static_cast<size_t>(i)] =
        clamp01 ? std::clamp(src[i], Real(0), Real(1)) : src[i];
  return img;
}

uint64_t image_hash(const Image& img) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  mix(static_cast<uint8_t>(img.width & 0xff));
  mix(static_cast<uint8_t>(img.width >> 8));
  mix(static_cast<uint8_t>(img.height & 0xff));
  mix(static_cast<uint8_t>(img.height >> 8));
  for (Real v : img.data) mix(quantize_8bit(v));
  return h;
}

}  // namespace rpn

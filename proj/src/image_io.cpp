#include "adists/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace adists {
namespace {

struct PngImage {
  png_image image;
  PngImage() {
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

bool has_png_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("decode_image: cannot open " + path.string());
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

std::uint8_t quantize(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

void write_png(png_uint_32 format, const std::uint8_t* pixels, std::size_t height,
               std::size_t width, const std::filesystem::path& path) {
  PngImage png;
  png.image.width = static_cast<png_uint_32>(width);
  png.image.height = static_cast<png_uint_32>(height);
  png.image.format = format;
  if (!png_image_write_to_file(&png.image, path.string().c_str(), 0, pixels, 0, nullptr)) {
    throw DataError("encode_image: " + path.string() + ": " + png.image.message);
  }
}

}  // namespace

Tensor decode_image(const std::filesystem::path& path) {
  if (!has_png_signature(path)) {
    throw DataError("decode_image: " + path.string() + " is not a PNG file");
  }
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.string().c_str())) {
    throw DataError("decode_image: " + path.string() + ": " + png.image.message);
  }
  png.image.format = PNG_FORMAT_RGB;
  const std::size_t h = png.image.height, w = png.image.width;
  if (h == 0 || w == 0) throw DataError("decode_image: empty image " + path.string());
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr)) {
    throw DataError("decode_image: corrupt PNG " + path.string() + ": " + png.image.message);
  }
  Tensor out({3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(c, y, x) = static_cast<float>(buffer[(y * w + x) * 3 + c]) / 255.0f;
      }
    }
  }
  return out;
}

void encode_image(const Tensor& image, const std::filesystem::path& path) {
  require_rank(image, 3, "encode_image");
  const std::size_t c = image.channels(), h = image.height(), w = image.width();
  if (c != 1 && c != 3) {
    throw ShapeError("encode_image: expected 1 or 3 channels, got " + std::to_string(c));
  }
  std::vector<std::uint8_t> pixels(c * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        pixels[(y * w + x) * c + k] = quantize(image.at(k, y, x));
      }
    }
  }
  write_png(c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY, pixels.data(), h, w, path);
}

void encode_gray8(const std::vector<std::uint8_t>& pixels, std::size_t height,
                  std::size_t width, const std::filesystem::path& path) {
  if (pixels.size() != height * width) {
    throw ShapeError("encode_gray8: pixel count does not match " + std::to_string(height) +
                     "x" + std::to_string(width));
  }
  write_png(PNG_FORMAT_GRAY, pixels.data(), height, width, path);
}

namespace {

double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Contribution {
  std::size_t first;
  std::vector<double> weights;
};

// One output coordinate's source taps along an axis, with edge clamping folded
// in by accumulating weights on the border sample.
std::vector<Contribution> axis_contributions(std::size_t in_size, std::size_t out_size) {
  const double scale = static_cast<double>(out_size) / static_cast<double>(in_size);
  const double support_scale = scale < 1.0 ? 1.0 / scale : 1.0;
  const double support = 2.0 * support_scale;
  std::vector<Contribution> result(out_size);
  for (std::size_t o = 0; o < out_size; ++o) {
    const double center = (static_cast<double>(o) + 0.5) / scale - 0.5;
    const auto lo = static_cast<long>(std::floor(center - support)) + 1;
    const auto hi = static_cast<long>(std::floor(center + support));
    std::vector<double> w(in_size, 0.0);
    std::size_t first = in_size, last = 0;
    double total = 0.0;
    for (long i = lo; i <= hi; ++i) {
      const double wt = cubic((static_cast<double>(i) - center) / support_scale);
      if (wt == 0.0) continue;
      const auto idx = static_cast<std::size_t>(
          std::clamp<long>(i, 0, static_cast<long>(in_size) - 1));
      w[idx] += wt;
      total += wt;
      first = std::min(first, idx);
      last = std::max(last, idx);
    }
    Contribution c{first, {}};
    for (std::size_t i = first; i <= last; ++i) c.weights.push_back(w[i] / total);
    result[o] = std::move(c);
  }
  return result;
}

}  // namespace

Tensor resize_bicubic_to(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  require_rank(image, 3, "resize_bicubic");
  if (image.height() == 0 || image.width() == 0 || out_h == 0 || out_w == 0) {
    throw ShapeError("resize_bicubic: degenerate image size " + shape_string(image.shape()));
  }
  if (out_h == image.height() && out_w == image.width()) return image;
  const std::size_t c = image.channels(), h = image.height(), w = image.width();
  const auto cols = axis_contributions(w, out_w);
  const auto rows = axis_contributions(h, out_h);
  Tensor horizontal({c, h, out_w});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double acc = 0.0;
        const auto& ct = cols[ox];
        for (std::size_t t = 0; t < ct.weights.size(); ++t) {
          acc += ct.weights[t] * image.at(k, y, ct.first + t);
        }
        horizontal.at(k, y, ox) = static_cast<float>(acc);
      }
    }
  }
  Tensor out({c, out_h, out_w});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& rt = rows[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double acc = 0.0;
        for (std::size_t t = 0; t < rt.weights.size(); ++t) {
          acc += rt.weights[t] * horizontal.at(k, rt.first + t, ox);
        }
        out.at(k, oy, ox) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor resize_bicubic(const Tensor& image, std::size_t target_short_side) {
  require_rank(image, 3, "resize_bicubic");
  if (target_short_side == 0) throw UsageError("resize_bicubic: target must be positive");
  const std::size_t h = image.height(), w = image.width();
  if (h == 0 || w == 0) {
    throw ShapeError("resize_bicubic: degenerate image size " + shape_string(image.shape()));
  }
  const std::size_t short_side = std::min(h, w);
  const double scale = static_cast<double>(target_short_side) / static_cast<double>(short_side);
  std::size_t out_h = h == short_side ? target_short_side
                                      : static_cast<std::size_t>(std::lround(h * scale));
  std::size_t out_w = h == short_side ? static_cast<std::size_t>(std::lround(w * scale))
                                      : target_short_side;
  return resize_bicubic_to(image, std::max<std::size_t>(out_h, 1),
                           std::max<std::size_t>(out_w, 1));
}

}  // namespace adists

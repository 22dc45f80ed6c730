#include "adists/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace adists::kernels {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// im2col tiles are capped at this many elements so the scratch buffer stays
// cache-friendly for large images.
constexpr std::size_t kColumnBudget = std::size_t{1} << 21;

struct ConvGeometry {
  std::size_t in_channels, in_h, in_w;
  std::size_t out_channels, k_h, k_w;
  std::size_t stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_channels * k_h * k_w; }
  std::size_t pixels() const { return out_h * out_w; }
};

ConvGeometry make_geometry(const Shape& input, const Shape& filters,
                           std::size_t stride, std::size_t padding) {
  if (input.size() != 3) {
    throw ShapeError("conv2d: input must be C x H x W, got " + shape_string(input));
  }
  if (filters.size() != 4) {
    throw ShapeError("conv2d: filters must be Cout x Cin x kH x kW, got " +
                     shape_string(filters));
  }
  if (filters[1] != input[0]) {
    throw ShapeError("conv2d: filters expect " + std::to_string(filters[1]) +
                     " input channels but input " + shape_string(input) + " has " +
                     std::to_string(input[0]));
  }
  if (stride == 0) throw UsageError("conv2d: stride must be positive");
  ConvGeometry g{input[0], input[1], input[2], filters[0], filters[2], filters[3],
                 stride, padding, 0, 0};
  if (g.k_h > g.in_h + 2 * padding || g.k_w > g.in_w + 2 * padding || g.k_h == 0 ||
      g.k_w == 0) {
    throw ShapeError("conv2d: kernel " + shape_string(filters) +
                     " does not fit padded input " + shape_string(input));
  }
  g.out_h = (g.in_h + 2 * padding - g.k_h) / stride + 1;
  g.out_w = (g.in_w + 2 * padding - g.k_w) / stride + 1;
  return g;
}

std::size_t tile_pixels(const ConvGeometry& g) {
  const std::size_t per_row = g.out_w;
  const std::size_t rows = std::max<std::size_t>(1, kColumnBudget / (g.patch() * per_row));
  return std::min(g.pixels(), rows * per_row);
}

// Gathers the receptive fields of output pixels [p0, p1) into a
// (Cin*kH*kW) x (p1-p0) row-major matrix.
template <typename T>
void im2col(const T* input, const ConvGeometry& g, std::size_t p0, std::size_t p1,
            T* cols) {
  const std::size_t np = p1 - p0;
  const auto rows = static_cast<std::int64_t>(g.patch());
  const auto pad = static_cast<std::int64_t>(g.padding);
  const auto h = static_cast<std::int64_t>(g.in_h);
  const auto w = static_cast<std::int64_t>(g.in_w);
#pragma omp parallel for schedule(static)
  for (std::int64_t row = 0; row < rows; ++row) {
    const auto ci = static_cast<std::size_t>(row) / (g.k_h * g.k_w);
    const auto ky = static_cast<std::int64_t>((row / g.k_w) % g.k_h);
    const auto kx = static_cast<std::int64_t>(row % g.k_w);
    const T* src = input + ci * g.in_h * g.in_w;
    T* dst = cols + static_cast<std::size_t>(row) * np;
    std::size_t oy = p0 / g.out_w;
    std::size_t ox = p0 % g.out_w;
    for (std::size_t p = 0; p < np; ++p) {
      const std::int64_t iy = static_cast<std::int64_t>(oy * g.stride) + ky - pad;
      const std::int64_t ix = static_cast<std::int64_t>(ox * g.stride) + kx - pad;
      dst[p] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? src[iy * w + ix] : T{0};
      if (++ox == g.out_w) {
        ox = 0;
        ++oy;
      }
    }
  }
}

// Scatter-add adjoint of im2col. Parallel over input channels, each of which
// owns a disjoint block of rows, so there are no write conflicts.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, std::size_t p0, std::size_t p1,
            T* grad_input) {
  const std::size_t np = p1 - p0;
  const auto pad = static_cast<std::int64_t>(g.padding);
  const auto h = static_cast<std::int64_t>(g.in_h);
  const auto w = static_cast<std::int64_t>(g.in_w);
  const auto channels = static_cast<std::int64_t>(g.in_channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < channels; ++ci) {
    T* dst = grad_input + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.k_h; ++ky) {
      for (std::size_t kx = 0; kx < g.k_w; ++kx) {
        const std::size_t row = (static_cast<std::size_t>(ci) * g.k_h + ky) * g.k_w + kx;
        const T* src = cols + row * np;
        std::size_t oy = p0 / g.out_w;
        std::size_t ox = p0 % g.out_w;
        for (std::size_t p = 0; p < np; ++p) {
          const std::int64_t iy =
              static_cast<std::int64_t>(oy * g.stride + ky) - pad;
          const std::int64_t ix =
              static_cast<std::int64_t>(ox * g.stride + kx) - pad;
          if (iy >= 0 && iy < h && ix >= 0 && ix < w) dst[iy * w + ix] += src[p];
          if (++ox == g.out_w) {
            ox = 0;
            ++oy;
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& filters,
                      const BasicTensor<T>& bias, std::size_t stride,
                      std::size_t padding) {
  const ConvGeometry g = make_geometry(input.shape(), filters.shape(), stride, padding);
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != g.out_channels)) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(g.out_channels) + " output channels");
  }
  BasicTensor<T> output({g.out_channels, g.out_h, g.out_w});
  const std::size_t total = g.pixels();
  const std::size_t tile = tile_pixels(g);
  const auto k = static_cast<Eigen::Index>(g.patch());
  const auto cout = static_cast<Eigen::Index>(g.out_channels);
  Eigen::Map<const RowMatrix<T>> weights(filters.data(), cout, k);
  std::vector<T> cols(g.patch() * tile);

  for (std::size_t p0 = 0; p0 < total; p0 += tile) {
    const std::size_t p1 = std::min(total, p0 + tile);
    const auto np = static_cast<Eigen::Index>(p1 - p0);
    im2col(input.data(), g, p0, p1, cols.data());
    Eigen::Map<const RowMatrix<T>> colmat(cols.data(), k, np);
    Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>> out(
        output.data() + p0, cout, np, Eigen::OuterStride<>(static_cast<Eigen::Index>(total)));
    out.noalias() = weights * colmat;
  }

  if (!bias.empty()) {
    const auto channels = static_cast<std::int64_t>(g.out_channels);
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < channels; ++c) {
      const T b = bias[static_cast<std::size_t>(c)];
      for (T& v : output.channel(static_cast<std::size_t>(c))) v += b;
    }
  }
  return output;
}

template <typename T>
BasicTensor<T> conv2d_backward_input(const BasicTensor<T>& grad_output,
                                     const BasicTensor<T>& filters,
                                     const Shape& input_shape, std::size_t stride,
                                     std::size_t padding) {
  const ConvGeometry g = make_geometry(input_shape, filters.shape(), stride, padding);
  if (grad_output.shape() != Shape{g.out_channels, g.out_h, g.out_w}) {
    throw ShapeError("conv2d_backward_input: gradient shape " +
                     shape_string(grad_output.shape()) + " does not match output " +
                     shape_string({g.out_channels, g.out_h, g.out_w}));
  }
  BasicTensor<T> grad_input(input_shape);
  const std::size_t total = g.pixels();
  const std::size_t tile = tile_pixels(g);
  const auto k = static_cast<Eigen::Index>(g.patch());
  const auto cout = static_cast<Eigen::Index>(g.out_channels);
  Eigen::Map<const RowMatrix<T>> weights(filters.data(), cout, k);
  std::vector<T> cols(g.patch() * tile);

  for (std::size_t p0 = 0; p0 < total; p0 += tile) {
    const std::size_t p1 = std::min(total, p0 + tile);
    const auto np = static_cast<Eigen::Index>(p1 - p0);
    Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>> gout(
        grad_output.data() + p0, cout, np,
        Eigen::OuterStride<>(static_cast<Eigen::Index>(total)));
    Eigen::Map<RowMatrix<T>> colmat(cols.data(), k, np);
    colmat.noalias() = weights.transpose() * gout;
    col2im(cols.data(), g, p0, p1, grad_input.data());
  }
  return grad_input;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  const auto n = static_cast<std::int64_t>(input.size());
  const T* in = input.data();
  T* o = out.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) o[i] = in[i] > T{0} ? in[i] : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_output,
                             const BasicTensor<T>& input) {
  require_same_shape(grad_output, input, "relu_backward");
  BasicTensor<T> out(input.shape());
  const auto n = static_cast<std::int64_t>(input.size());
  const T* g = grad_output.data();
  const T* in = input.data();
  T* o = out.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) o[i] = in[i] > T{0} ? g[i] : T{0};
  return out;
}

namespace {

std::size_t clamp_index(std::int64_t i, std::size_t n) {
  if (i < 0) return 0;
  if (static_cast<std::size_t>(i) >= n) return n - 1;
  return static_cast<std::size_t>(i);
}

void check_pool_input(const Shape& shape, const char* what) {
  if (shape.size() != 3) {
    throw ShapeError(std::string(what) + ": input must be C x H x W, got " +
                     shape_string(shape));
  }
  if (shape[1] < kL2PoolTaps.size() || shape[2] < kL2PoolTaps.size()) {
    throw ShapeError(std::string(what) + ": input " + shape_string(shape) +
                     " smaller than the 3x3 pooling window");
  }
}

}  // namespace

template <typename T>
BasicTensor<T> l2_pool(const BasicTensor<T>& input) {
  check_pool_input(input.shape(), "l2_pool");
  const std::size_t h = input.height(), w = input.width();
  const std::size_t oh = pooled_extent(h), ow = pooled_extent(w);
  BasicTensor<T> out({input.channels(), oh, ow});
  const auto channels = static_cast<std::int64_t>(input.channels());
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* src = input.data() + static_cast<std::size_t>(c) * h * w;
    T* dst = out.data() + static_cast<std::size_t>(c) * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < 3; ++dy) {
          const std::size_t iy = clamp_index(static_cast<std::int64_t>(2 * oy + dy) - 1, h);
          for (std::size_t dx = 0; dx < 3; ++dx) {
            const std::size_t ix =
                clamp_index(static_cast<std::int64_t>(2 * ox + dx) - 1, w);
            const double v = src[iy * w + ix];
            acc += kL2PoolTaps[dy] * kL2PoolTaps[dx] * v * v;
          }
        }
        dst[oy * ow + ox] = static_cast<T>(std::sqrt(acc + kL2PoolEpsilon));
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> l2_pool_backward(const BasicTensor<T>& grad_output,
                                const BasicTensor<T>& input,
                                const BasicTensor<T>& output) {
  check_pool_input(input.shape(), "l2_pool_backward");
  require_same_shape(grad_output, output, "l2_pool_backward");
  const std::size_t h = input.height(), w = input.width();
  const std::size_t oh = output.height(), ow = output.width();
  BasicTensor<T> grad_input(input.shape());
  const auto channels = static_cast<std::int64_t>(input.channels());
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < channels; ++c) {
    const std::size_t ci = static_cast<std::size_t>(c);
    const T* x = input.data() + ci * h * w;
    const T* g = grad_output.data() + ci * oh * ow;
    const T* y = output.data() + ci * oh * ow;
    T* dst = grad_input.data() + ci * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double scale = static_cast<double>(g[oy * ow + ox]) / y[oy * ow + ox];
        for (std::size_t dy = 0; dy < 3; ++dy) {
          const std::size_t iy = clamp_index(static_cast<std::int64_t>(2 * oy + dy) - 1, h);
          for (std::size_t dx = 0; dx < 3; ++dx) {
            const std::size_t ix =
                clamp_index(static_cast<std::int64_t>(2 * ox + dx) - 1, w);
            dst[iy * w + ix] +=
                static_cast<T>(kL2PoolTaps[dy] * kL2PoolTaps[dx] * scale);
          }
        }
      }
    }
    for (std::size_t i = 0; i < h * w; ++i) dst[i] *= x[i];
  }
  return grad_input;
}

#define ADISTS_INSTANTIATE_KERNELS(T)                                                  \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                 const BasicTensor<T>&, std::size_t, std::size_t);     \
  template BasicTensor<T> conv2d_backward_input(const BasicTensor<T>&,                 \
                                                const BasicTensor<T>&, const Shape&,   \
                                                std::size_t, std::size_t);             \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                 \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> l2_pool(const BasicTensor<T>&);                              \
  template BasicTensor<T> l2_pool_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                           const BasicTensor<T>&);

ADISTS_INSTANTIATE_KERNELS(float)
ADISTS_INSTANTIATE_KERNELS(double)

#undef ADISTS_INSTANTIATE_KERNELS

}  // namespace adists::kernels

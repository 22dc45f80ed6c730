#include "adists/local_stats.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace adists {

void WindowSpec::validate() const {
  if (height < 3 || width < 3 || height % 2 == 0 || width % 2 == 0) {
    throw UsageError("window must have odd dimensions >= 3, got " + to_string());
  }
}

namespace {

// (H+1) x (W+1) summed-area table of f(a, b) over one channel.
template <typename F>
void integral(std::size_t h, std::size_t w, std::vector<double>& table, F&& value) {
  const std::size_t stride = w + 1;
  std::fill(table.begin(), table.begin() + static_cast<std::ptrdiff_t>(stride), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    double row = 0.0;
    table[(y + 1) * stride] = 0.0;
    for (std::size_t x = 0; x < w; ++x) {
      row += value(y * w + x);
      table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
    }
  }
}

inline double window_sum(const std::vector<double>& table, std::size_t stride, std::size_t y,
                         std::size_t x, std::size_t wh, std::size_t ww) {
  return table[(y + wh) * stride + x + ww] - table[y * stride + x + ww] -
         table[(y + wh) * stride + x] + table[y * stride + x];
}

template <typename T>
double mean_of(std::span<const T> v) {
  double s = 0.0;
  for (const T x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

struct ClampedGeometry {
  std::size_t channels, h, w, wh, ww, oh, ow;
};

template <typename T>
ClampedGeometry clamp_geometry(const BasicTensor<T>& a, const WindowSpec& window,
                               const char* what) {
  require_rank(a, 3, what);
  if (a.height() == 0 || a.width() == 0) {
    throw ShapeError(std::string(what) + ": empty map " + shape_string(a.shape()));
  }
  if (window.height == 0 || window.width == 0) {
    throw UsageError(std::string(what) + ": window must be non-empty");
  }
  ClampedGeometry g{a.channels(), a.height(), a.width(), window.clamped_height(a.height()),
                    window.clamped_width(a.width()), 0, 0};
  g.oh = g.h - g.wh + 1;
  g.ow = g.w - g.ww + 1;
  return g;
}

}  // namespace

template <typename T>
LocalStatistics<T> windowed_stats(const BasicTensor<T>& a, const BasicTensor<T>& b,
                                  const WindowSpec& window) {
  require_same_shape(a, b, "windowed_stats");
  const ClampedGeometry g = clamp_geometry(a, window, "windowed_stats");
  const Shape out_shape{g.channels, g.oh, g.ow};
  LocalStatistics<T> s{BasicTensor<T>(out_shape), BasicTensor<T>(out_shape),
                       BasicTensor<T>(out_shape), BasicTensor<T>(out_shape),
                       BasicTensor<T>(out_shape), g.wh, g.ww};
  const double n = static_cast<double>(g.wh * g.ww);
  const std::size_t stride = g.w + 1;
  const auto channels = static_cast<std::int64_t>(g.channels);

#pragma omp parallel
  {
    std::vector<double> ta((g.h + 1) * stride), tb(ta.size()), taa(ta.size()),
        tbb(ta.size()), tab(ta.size());
#pragma omp for schedule(static)
    for (std::int64_t ci = 0; ci < channels; ++ci) {
      const auto c = static_cast<std::size_t>(ci);
      const auto av = a.channel(c);
      const auto bv = b.channel(c);
      const double ma = mean_of(av), mb = mean_of(bv);
      integral(g.h, g.w, ta, [&](std::size_t i) { return av[i] - ma; });
      integral(g.h, g.w, tb, [&](std::size_t i) { return bv[i] - mb; });
      integral(g.h, g.w, taa, [&](std::size_t i) {
        const double d = av[i] - ma;
        return d * d;
      });
      integral(g.h, g.w, tbb, [&](std::size_t i) {
        const double d = bv[i] - mb;
        return d * d;
      });
      integral(g.h, g.w, tab, [&](std::size_t i) {
        return (static_cast<double>(av[i]) - ma) * (static_cast<double>(bv[i]) - mb);
      });
      for (std::size_t y = 0; y < g.oh; ++y) {
        for (std::size_t x = 0; x < g.ow; ++x) {
          const double sa = window_sum(ta, stride, y, x, g.wh, g.ww) / n;
          const double sb = window_sum(tb, stride, y, x, g.wh, g.ww) / n;
          const double saa = window_sum(taa, stride, y, x, g.wh, g.ww) / n;
          const double sbb = window_sum(tbb, stride, y, x, g.wh, g.ww) / n;
          const double sab = window_sum(tab, stride, y, x, g.wh, g.ww) / n;
          s.mu_x.at(c, y, x) = static_cast<T>(sa + ma);
          s.mu_y.at(c, y, x) = static_cast<T>(sb + mb);
          s.var_x.at(c, y, x) = static_cast<T>(std::max(0.0, saa - sa * sa));
          s.var_y.at(c, y, x) = static_cast<T>(std::max(0.0, sbb - sb * sb));
          s.cov_xy.at(c, y, x) = static_cast<T>(sab - sa * sb);
        }
      }
    }
  }
  return s;
}

template <typename T>
LocalMoments<T> windowed_moments(const BasicTensor<T>& a, const WindowSpec& window) {
  const ClampedGeometry g = clamp_geometry(a, window, "windowed_moments");
  const Shape out_shape{g.channels, g.oh, g.ow};
  LocalMoments<T> m{BasicTensor<T>(out_shape), BasicTensor<T>(out_shape), g.wh, g.ww};
  const double n = static_cast<double>(g.wh * g.ww);
  const std::size_t stride = g.w + 1;
  const auto channels = static_cast<std::int64_t>(g.channels);

#pragma omp parallel
  {
    std::vector<double> ta((g.h + 1) * stride), taa(ta.size());
#pragma omp for schedule(static)
    for (std::int64_t ci = 0; ci < channels; ++ci) {
      const auto c = static_cast<std::size_t>(ci);
      const auto av = a.channel(c);
      const double ma = mean_of(av);
      integral(g.h, g.w, ta, [&](std::size_t i) { return av[i] - ma; });
      integral(g.h, g.w, taa, [&](std::size_t i) {
        const double d = av[i] - ma;
        return d * d;
      });
      for (std::size_t y = 0; y < g.oh; ++y) {
        for (std::size_t x = 0; x < g.ow; ++x) {
          const double sa = window_sum(ta, stride, y, x, g.wh, g.ww) / n;
          const double saa = window_sum(taa, stride, y, x, g.wh, g.ww) / n;
          m.mean.at(c, y, x) = static_cast<T>(sa + ma);
          m.variance.at(c, y, x) = static_cast<T>(std::max(0.0, saa - sa * sa));
        }
      }
    }
  }
  return m;
}

template <typename T>
BasicTensor<T> box_mean(const BasicTensor<T>& a, std::size_t window_h, std::size_t window_w) {
  require_rank(a, 3, "box_mean");
  const std::size_t h = a.height(), w = a.width();
  if (window_h == 0 || window_w == 0 || window_h > h || window_w > w) {
    throw ShapeError("box_mean: window " + std::to_string(window_h) + "x" +
                     std::to_string(window_w) + " does not fit map " + shape_string(a.shape()));
  }
  const std::size_t oh = h - window_h + 1, ow = w - window_w + 1;
  BasicTensor<T> out({a.channels(), oh, ow});
  const double n = static_cast<double>(window_h * window_w);
  const std::size_t stride = w + 1;
  const auto channels = static_cast<std::int64_t>(a.channels());
#pragma omp parallel
  {
    std::vector<double> table((h + 1) * stride);
#pragma omp for schedule(static)
    for (std::int64_t ci = 0; ci < channels; ++ci) {
      const auto c = static_cast<std::size_t>(ci);
      const auto av = a.channel(c);
      integral(h, w, table, [&](std::size_t i) { return static_cast<double>(av[i]); });
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          out.at(c, y, x) = static_cast<T>(window_sum(table, stride, y, x, window_h, window_w) / n);
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> box_mean_backward(const BasicTensor<T>& grad_output, std::size_t window_h,
                                 std::size_t window_w, const Shape& input_shape) {
  require_rank(grad_output, 3, "box_mean_backward");
  if (input_shape.size() != 3 || input_shape[1] < window_h || input_shape[2] < window_w ||
      grad_output.shape() != Shape{input_shape[0], input_shape[1] - window_h + 1,
                                   input_shape[2] - window_w + 1}) {
    throw ShapeError("box_mean_backward: gradient " + shape_string(grad_output.shape()) +
                     " inconsistent with input " + shape_string(input_shape));
  }
  const std::size_t h = input_shape[1], w = input_shape[2];
  const std::size_t oh = grad_output.height(), ow = grad_output.width();
  BasicTensor<T> out(input_shape);
  const double n = static_cast<double>(window_h * window_w);
  const std::size_t stride = ow + 1;
  const auto channels = static_cast<std::int64_t>(input_shape[0]);
#pragma omp parallel
  {
    std::vector<double> table((oh + 1) * stride);
#pragma omp for schedule(static)
    for (std::int64_t ci = 0; ci < channels; ++ci) {
      const auto c = static_cast<std::size_t>(ci);
      const auto gv = grad_output.channel(c);
      integral(oh, ow, table, [&](std::size_t i) { return static_cast<double>(gv[i]); });
      // Input pixel (y, x) is covered by outputs oy in [y-wh+1, y], ox in [x-ww+1, x].
      for (std::size_t y = 0; y < h; ++y) {
        const std::size_t y0 = y + 1 >= window_h ? y + 1 - window_h : 0;
        const std::size_t y1 = std::min(y, oh - 1);
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t x0 = x + 1 >= window_w ? x + 1 - window_w : 0;
          const std::size_t x1 = std::min(x, ow - 1);
          double acc = 0.0;
          if (y0 <= y1 && x0 <= x1) {
            acc = window_sum(table, stride, y0, x0, y1 - y0 + 1, x1 - x0 + 1);
          }
          out.at(c, y, x) = static_cast<T>(acc / n);
        }
      }
    }
  }
  return out;
}

#define ADISTS_INSTANTIATE_STATS(T)                                                       \
  template LocalStatistics<T> windowed_stats(const BasicTensor<T>&, const BasicTensor<T>&, \
                                             const WindowSpec&);                          \
  template LocalMoments<T> windowed_moments(const BasicTensor<T>&, const WindowSpec&);    \
  template BasicTensor<T> box_mean(const BasicTensor<T>&, std::size_t, std::size_t);      \
  template BasicTensor<T> box_mean_backward(const BasicTensor<T>&, std::size_t,           \
                                            std::size_t, const Shape&);

ADISTS_INSTANTIATE_STATS(float)
ADISTS_INSTANTIATE_STATS(double)

#undef ADISTS_INSTANTIATE_STATS

}  // namespace adists

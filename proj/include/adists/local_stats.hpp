#pragma once

#include <cstddef>
#include <string>

#include "adists/tensor.hpp"

namespace adists {

/// Sliding window with stride 1 and valid-mode output. A window larger than
/// the map is clamped to the map extent along that axis, which yields a
/// single position.
struct WindowSpec {
  std::size_t height = 21;
  std::size_t width = 21;

  void validate() const;
  std::size_t clamped_height(std::size_t map_h) const { return height < map_h ? height : map_h; }
  std::size_t clamped_width(std::size_t map_w) const { return width < map_w ? width : map_w; }
  std::string to_string() const {
    return std::to_string(height) + "x" + std::to_string(width);
  }

  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

/// Local means, population variances (1/n) and covariance, each shaped
/// C x (H - wh + 1) x (W - ww + 1) for the clamped window (wh, ww).
template <typename T>
struct LocalStatistics {
  BasicTensor<T> mu_x, mu_y;
  BasicTensor<T> var_x, var_y;
  BasicTensor<T> cov_xy;
  std::size_t window_h = 0, window_w = 0;
};

template <typename T>
struct LocalMoments {
  BasicTensor<T> mean;
  BasicTensor<T> variance;
  std::size_t window_h = 0, window_w = 0;
};

/// Integral-image implementation. Each channel is centred on its global mean
/// first (two-pass), sums are accumulated in binary64, and variances are
/// clamped at zero.
template <typename T>
LocalStatistics<T> windowed_stats(const BasicTensor<T>& a, const BasicTensor<T>& b,
                                  const WindowSpec& window);

template <typename T>
LocalMoments<T> windowed_moments(const BasicTensor<T>& a, const WindowSpec& window);

/// Valid-mode box mean with an explicit (already clamped) window.
template <typename T>
BasicTensor<T> box_mean(const BasicTensor<T>& a, std::size_t window_h, std::size_t window_w);

/// Adjoint of box_mean: spreads each output gradient uniformly over its window.
template <typename T>
BasicTensor<T> box_mean_backward(const BasicTensor<T>& grad_output, std::size_t window_h,
                                 std::size_t window_w, const Shape& input_shape);

}  // namespace adists

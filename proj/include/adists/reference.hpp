#pragma once

#include <array>
#include <span>
#include <vector>

#include "adists/backbone.hpp"
#include "adists/metrics.hpp"
#include "adists/tensor.hpp"
#include "adists/texture_model.hpp"

// Serial, definition-level implementations used as oracles by the tests and
// as the baseline of the benchmark. Everything accumulates in binary64.
namespace adists::reference {

TensorD conv2d(const TensorD& input, const TensorD& filters, const TensorD& bias,
               std::size_t stride, std::size_t padding);

TensorD l2_pool(const TensorD& input);

TensorD box_mean(const TensorD& a, std::size_t window_h, std::size_t window_w);

/// Per-window two-pass statistics.
LocalStatistics<double> windowed_stats(const TensorD& a, const TensorD& b,
                                       const WindowSpec& window);

/// l, s and l*s straight from the formulas, one window at a time.
SsimMaps<double> ssim_maps(const TensorD& x, const TensorD& y, const WindowSpec& window,
                           double c1, double c2);

double dists(const FeaturePyramid<float>& px, const FeaturePyramid<float>& py,
             const DistsWeights& weights, const MetricConfig& config,
             const std::array<double, kNumPyramidLevels>& ranges);

/// Full adaptive pooling with per-window statistics and explicit loops.
double adists(const FeaturePyramid<float>& px, const FeaturePyramid<float>& py,
              const LogisticParams& params, const MetricConfig& config,
              const std::array<double, kNumPyramidLevels>& ranges);

/// Pearson correlation of ranks, each rank counted pairwise.
double srcc(std::span<const double> a, std::span<const double> b);

/// Tau-b from all n(n-1)/2 pairs.
double krcc(std::span<const double> a, std::span<const double> b);

}  // namespace adists::reference

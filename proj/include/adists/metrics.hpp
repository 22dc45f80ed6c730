#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adists/backbone.hpp"
#include "adists/local_stats.hpp"
#include "adists/tensor.hpp"
#include "adists/texture_model.hpp"

namespace adists {

enum class MetricId { Mse, Ssim, Lpips, Dists, Adists };

MetricId parse_metric(std::string_view name);
std::string metric_name(MetricId id);

/// Only SSIM grows with quality; the others are distances.
inline bool higher_is_better(MetricId id) { return id == MetricId::Ssim; }

enum class PoolingMode { MinCombination, ReferenceWeighted };

PoolingMode parse_pooling(std::string_view name);
std::string pooling_name(PoolingMode mode);

struct SsimConstants {
  double c1 = 1e-4;
  double c2 = 9e-4;
};

struct MetricConfig {
  double k1 = 0.01;
  double k2 = 0.03;
  double c = kDefaultDispersionStabilizer;
  WindowSpec window;
  PoolingMode pooling = PoolingMode::MinCombination;

  /// c1 = (k1 L)^2, c2 = (k2 L)^2 for dynamic range L.
  SsimConstants constants(double dynamic_range = 1.0) const {
    return {k1 * k1 * dynamic_range * dynamic_range, k2 * k2 * dynamic_range * dynamic_range};
  }
  void validate() const;
};

/// Per-level diagnostics for the feature metrics.
struct StageBreakdown {
  std::size_t level = 0;
  std::size_t channels = 0;
  std::size_t positions = 0;        // K_i
  double similarity = 0.0;          // mean over channels of S_ij (A-DISTS), or level term
  double texture_probability = 0.0; // mean pooled p over positions (A-DISTS only)
};

struct MetricScore {
  double value = 0.0;
  MetricId metric = MetricId::Mse;
  std::string variant;
  std::vector<StageBreakdown> stages;
};

MetricScore mse(const Tensor& x, const Tensor& y);

template <typename T>
struct SsimMaps {
  BasicTensor<T> l, s, ls;
};

/// Luminance and structure factors per window position from local statistics.
template <typename T>
SsimMaps<T> ssim_local(const LocalStatistics<T>& stats, double c1, double c2);

/// Single-scale mean SSIM over all window positions and RGB channels.
MetricScore msssim_mean(const Tensor& x, const Tensor& y, const MetricConfig& config = {});

inline constexpr const char* kLpipsWeightEntry = "lpips.weight";
inline constexpr const char* kDistsAlphaEntry = "dists.alpha";
inline constexpr const char* kDistsBetaEntry = "dists.beta";

/// w[i][j] for feature levels 1..5 (index 0 is level 1).
struct LpipsWeights {
  std::vector<std::vector<double>> w;
  bool uniform = true;

  static LpipsWeights uniform_weights(const BackboneConfig& config = {});
  /// Reads a flat table of sum(N_1..N_5) entries when present, else uniform.
  static LpipsWeights from_archive(const WeightArchive& archive,
                                   const BackboneConfig& config = {});
};

/// alpha[i][j], beta[i][j] over levels 0..5, normalised so that the grand
/// total of both tables is 1.
struct DistsWeights {
  std::vector<std::vector<double>> alpha, beta;
  bool uniform = true;

  static DistsWeights uniform_weights(const BackboneConfig& config = {});
  static DistsWeights from_archive(const WeightArchive& archive,
                                   const BackboneConfig& config = {});
  void normalize();
};

/// Sum over levels 1..5 and channels of w_ij * mean_k (x_hat - y_hat)^2, with
/// feature vectors unit-normalised along the channel axis at every location.
MetricScore lpips_distance(const FeaturePyramid<float>& px, const FeaturePyramid<float>& py,
                           const LpipsWeights& weights);

/// 1 - sum_ij (alpha_ij l_ij + beta_ij s_ij) using whole-map statistics.
/// `ranges` holds the dynamic range per level for the stabilisers.
MetricScore dists(const FeaturePyramid<float>& px, const FeaturePyramid<float>& py,
                  const DistsWeights& weights, const MetricConfig& config,
                  const std::array<double, kNumPyramidLevels>& ranges);

std::array<double, kNumPyramidLevels> dynamic_ranges(const Backbone& backbone);

/// Adaptive pooling on precomputed pyramids (the pooling mode comes from the
/// config).
MetricScore adists_from_pyramids(const FeaturePyramid<float>& px,
                                 const FeaturePyramid<float>& py, const LogisticParams& params,
                                 const MetricConfig& config,
                                 const std::array<double, kNumPyramidLevels>& ranges);

/// Min-combination A-DISTS (config.pooling is ignored).
MetricScore adists(const Tensor& x, const Tensor& y, const Backbone& backbone,
                   const LogisticParams& params, const MetricConfig& config = {});

/// Texture probabilities taken from the reference only.
MetricScore adists_reference_weighted(const Tensor& x, const Tensor& y, const Backbone& backbone,
                                      const LogisticParams& params,
                                      const MetricConfig& config = {});

/// The weight each (level, channel) similarity carries in the final average,
/// in level-major order.
std::vector<double> adists_pooling_weights(const BackboneConfig& config = {});

/// Throws UsageError when the params were fitted with a different window or
/// stabiliser than the metric configuration.
void require_compatible(const LogisticParams& params, const MetricConfig& config);

/// Bundles everything needed to score image pairs with any metric. Immutable
/// and shareable across threads.
class Scorer {
 public:
  Scorer(const WeightArchive& archive, LogisticParams params, MetricConfig config = {});

  MetricScore score(MetricId metric, const Tensor& x, const Tensor& y) const;

  const Backbone& backbone() const noexcept { return backbone_; }
  const LogisticParams& params() const noexcept { return params_; }
  const MetricConfig& config() const noexcept { return config_; }

 private:
  Backbone backbone_;
  LogisticParams params_;
  MetricConfig config_;
  LpipsWeights lpips_;
  DistsWeights dists_;
};

}  // namespace adists

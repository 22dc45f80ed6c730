#include "adists/metrics.hpp"

#include <cmath>
#include <cstdint>

namespace adists {

MetricId parse_metric(std::string_view name) {
  if (name == "mse") return MetricId::Mse;
  if (name == "ssim" || name == "msssim") return MetricId::Ssim;
  if (name == "lpips") return MetricId::Lpips;
  if (name == "dists") return MetricId::Dists;
  if (name == "adists") return MetricId::Adists;
  throw UsageError("unknown metric '" + std::string(name) +
                   "' (expected mse, ssim, lpips, dists or adists)");
}

std::string metric_name(MetricId id) {
  switch (id) {
    case MetricId::Mse: return "mse";
    case MetricId::Ssim: return "ssim";
    case MetricId::Lpips: return "lpips";
    case MetricId::Dists: return "dists";
    case MetricId::Adists: return "adists";
  }
  return "unknown";
}

PoolingMode parse_pooling(std::string_view name) {
  if (name == "min") return PoolingMode::MinCombination;
  if (name == "ref") return PoolingMode::ReferenceWeighted;
  throw UsageError("unknown pooling '" + std::string(name) + "' (expected min or ref)");
}

std::string pooling_name(PoolingMode mode) {
  return mode == PoolingMode::MinCombination ? "min" : "ref";
}

void MetricConfig::validate() const {
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw UsageError("metric config: k1 and k2 must be positive");
  if (!(c > 0.0)) throw UsageError("metric config: dispersion stabiliser c must be positive");
  window.validate();
}

MetricScore mse(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "mse");
  require_finite(x, "mse");
  require_finite(y, "mse");
  if (x.empty()) throw ShapeError("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    acc += d * d;
  }
  return {acc / static_cast<double>(x.size()), MetricId::Mse, "", {}};
}

namespace {

// Written so that swapping (mx, vx) with (my, vy) gives bitwise-equal results.
inline double luminance_term(double mx, double my, double c1) {
  return (2.0 * (mx * my) + c1) / ((mx * mx + my * my) + c1);
}

inline double structure_term(double vx, double vy, double cov, double c2) {
  return (2.0 * cov + c2) / ((vx + vy) + c2);
}

}  // namespace

template <typename T>
SsimMaps<T> ssim_local(const LocalStatistics<T>& stats, double c1, double c2) {
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw UsageError("ssim_local: c1 and c2 must be positive");
  SsimMaps<T> maps{BasicTensor<T>(stats.mu_x.shape()), BasicTensor<T>(stats.mu_x.shape()),
                   BasicTensor<T>(stats.mu_x.shape())};
  for (std::size_t k = 0; k < maps.l.size(); ++k) {
    const double l = luminance_term(stats.mu_x[k], stats.mu_y[k], c1);
    const double s = structure_term(stats.var_x[k], stats.var_y[k], stats.cov_xy[k], c2);
    maps.l[k] = static_cast<T>(l);
    maps.s[k] = static_cast<T>(s);
    maps.ls[k] = static_cast<T>(l * s);
  }
  return maps;
}

template SsimMaps<float> ssim_local(const LocalStatistics<float>&, double, double);
template SsimMaps<double> ssim_local(const LocalStatistics<double>&, double, double);

MetricScore msssim_mean(const Tensor& x, const Tensor& y, const MetricConfig& config) {
  require_same_shape(x, y, "msssim_mean");
  require_rank(x, 3, "msssim_mean");
  require_finite(x, "msssim_mean");
  require_finite(y, "msssim_mean");
  const auto stats = windowed_stats(x, y, config.window);
  const auto k = config.constants(1.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < stats.mu_x.size(); ++i) {
    acc += luminance_term(stats.mu_x[i], stats.mu_y[i], k.c1) *
           structure_term(stats.var_x[i], stats.var_y[i], stats.cov_xy[i], k.c2);
  }
  return {acc / static_cast<double>(stats.mu_x.size()), MetricId::Ssim, "single-scale", {}};
}

// ---------------------------------------------------------------------------

namespace {

std::size_t feature_channel_total(const BackboneConfig& config) {
  return config.total_channels() - config.channels(0);
}

std::vector<std::vector<double>> split_table(const Tensor& flat, const BackboneConfig& config,
                                             std::size_t first_level, const char* name) {
  std::vector<std::vector<double>> table;
  std::size_t offset = 0;
  for (std::size_t i = first_level; i < kNumPyramidLevels; ++i) {
    std::vector<double> row(config.channels(i));
    for (auto& v : row) {
      v = flat[offset++];
      if (!(v >= 0.0)) throw DataError(std::string(name) + " contains a negative weight");
    }
    table.push_back(std::move(row));
  }
  return table;
}

void require_table(const WeightArchive& archive, const char* name, std::size_t n) {
  const Tensor& t = archive.at(name);
  if (t.shape() != Shape{n}) {
    throw ShapeError(std::string(name) + " has shape " + shape_string(t.shape()) +
                     ", expected [" + std::to_string(n) + "]");
  }
}

}  // namespace

LpipsWeights LpipsWeights::uniform_weights(const BackboneConfig& config) {
  LpipsWeights w;
  for (std::size_t i = 1; i < kNumPyramidLevels; ++i) w.w.emplace_back(config.channels(i), 1.0);
  return w;
}

LpipsWeights LpipsWeights::from_archive(const WeightArchive& archive,
                                        const BackboneConfig& config) {
  if (!archive.contains(kLpipsWeightEntry)) return uniform_weights(config);
  require_table(archive, kLpipsWeightEntry, feature_channel_total(config));
  LpipsWeights w;
  w.w = split_table(archive.at(kLpipsWeightEntry), config, 1, kLpipsWeightEntry);
  w.uniform = false;
  return w;
}

DistsWeights DistsWeights::uniform_weights(const BackboneConfig& config) {
  DistsWeights w;
  for (std::size_t i = 0; i < kNumPyramidLevels; ++i) {
    w.alpha.emplace_back(config.channels(i), 1.0);
    w.beta.emplace_back(config.channels(i), 1.0);
  }
  w.normalize();
  return w;
}

DistsWeights DistsWeights::from_archive(const WeightArchive& archive,
                                        const BackboneConfig& config) {
  const bool has_alpha = archive.contains(kDistsAlphaEntry);
  const bool has_beta = archive.contains(kDistsBetaEntry);
  if (!has_alpha && !has_beta) return uniform_weights(config);
  if (has_alpha != has_beta) {
    throw DataError("archive carries only one of dists.alpha / dists.beta");
  }
  const std::size_t n = config.total_channels();
  require_table(archive, kDistsAlphaEntry, n);
  require_table(archive, kDistsBetaEntry, n);
  DistsWeights w;
  w.alpha = split_table(archive.at(kDistsAlphaEntry), config, 0, kDistsAlphaEntry);
  w.beta = split_table(archive.at(kDistsBetaEntry), config, 0, kDistsBetaEntry);
  w.uniform = false;
  w.normalize();
  return w;
}

void DistsWeights::normalize() {
  double total = 0.0;
  for (const auto& row : alpha) {
    for (double v : row) total += v;
  }
  for (const auto& row : beta) {
    for (double v : row) total += v;
  }
  if (!(total > 0.0)) throw DataError("DISTS weights sum to zero");
  for (auto& row : alpha) {
    for (double& v : row) v /= total;
  }
  for (auto& row : beta) {
    for (double& v : row) v /= total;
  }
}

namespace {

void require_matching_pyramids(const FeaturePyramid<float>& px, const FeaturePyramid<float>& py,
                               const char* what) {
  if (px.levels() != py.levels()) throw ShapeError(std::string(what) + ": level count mismatch");
  for (std::size_t i = 0; i < px.levels(); ++i) {
    require_same_shape(px.stages[i], py.stages[i], what);
  }
}

Tensor unit_normalize_channels(const Tensor& f) {
  Tensor out(f.shape());
  const std::size_t plane = f.plane();
  std::vector<double> norm(plane, 0.0);
  for (std::size_t j = 0; j < f.channels(); ++j) {
    const auto v = f.channel(j);
    for (std::size_t k = 0; k < plane; ++k) norm[k] += static_cast<double>(v[k]) * v[k];
  }
  for (auto& n : norm) n = std::sqrt(n) + 1e-10;
  for (std::size_t j = 0; j < f.channels(); ++j) {
    const auto v = f.channel(j);
    auto o = out.channel(j);
    for (std::size_t k = 0; k < plane; ++k) o[k] = static_cast<float>(v[k] / norm[k]);
  }
  return out;
}

}  // namespace

MetricScore lpips_distance(const FeaturePyramid<float>& px, const FeaturePyramid<float>& py,
                           const LpipsWeights& weights) {
  require_matching_pyramids(px, py, "lpips_distance");
  if (weights.w.size() + 1 < px.levels()) {
    throw ShapeError("lpips_distance: weight table covers " + std::to_string(weights.w.size()) +
                     " feature levels");
  }
  MetricScore score{0.0, MetricId::Lpips, weights.uniform ? "uniform-weight variant" : "", {}};
  for (std::size_t i = 1; i < px.levels(); ++i) {
    const auto& row = weights.w[i - 1];
    if (row.size() != px.stages[i].channels()) {
      throw ShapeError("lpips_distance: weight row " + std::to_string(i) + " has " +
                       std::to_string(row.size()) + " entries for " +
                       std::to_string(px.stages[i].channels()) + " channels");
    }
    const Tensor nx = unit_normalize_channels(px.stages[i]);
    const Tensor ny = unit_normalize_channels(py.stages[i]);
    const std::size_t plane = nx.plane();
    double level = 0.0;
    for (std::size_t j = 0; j < nx.channels(); ++j) {
      const auto a = nx.channel(j), b = ny.channel(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < plane; ++k) {
        const double d = static_cast<double>(a[k]) - b[k];
        acc += d * d;
      }
      level += row[j] * acc / static_cast<double>(plane);
    }
    score.value += level;
    score.stages.push_back({i, nx.channels(), plane, level, 0.0});
  }
  return score;
}

MetricScore dists(const FeaturePyramid<float>& px, const FeaturePyramid<float>& py,
                  const DistsWeights& weights, const MetricConfig& config,
                  const std::array<double, kNumPyramidLevels>& ranges) {
  require_matching_pyramids(px, py, "dists");
  if (weights.alpha.size() < px.levels() || weights.beta.size() < px.levels()) {
    throw ShapeError("dists: weight tables do not cover every level");
  }
  MetricScore score{0.0, MetricId::Dists, weights.uniform ? "uniform-weight variant" : "", {}};
  double total = 0.0;
  for (std::size_t i = 0; i < px.levels(); ++i) {
    const Tensor& fx = px.stages[i];
    const Tensor& fy = py.stages[i];
    if (weights.alpha[i].size() != fx.channels() || weights.beta[i].size() != fx.channels()) {
      throw ShapeError("dists: weight row " + std::to_string(i) + " does not match channels");
    }
    const auto k = config.constants(ranges[i]);
    const double n = static_cast<double>(fx.plane());
    double level = 0.0;
    for (std::size_t j = 0; j < fx.channels(); ++j) {
      const auto a = fx.channel(j), b = fy.channel(j);
      double ma = 0.0, mb = 0.0;
      for (std::size_t q = 0; q < a.size(); ++q) {
        ma += a[q];
        mb += b[q];
      }
      ma /= n;
      mb /= n;
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (std::size_t q = 0; q < a.size(); ++q) {
        const double da = a[q] - ma, db = b[q] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
      }
      va /= n;
      vb /= n;
      cov /= n;
      level += weights.alpha[i][j] * luminance_term(ma, mb, k.c1) +
               weights.beta[i][j] * structure_term(va, vb, cov, k.c2);
    }
    total += level;
    score.stages.push_back({i, fx.channels(), 1, level, 0.0});
  }
  score.value = 1.0 - total;
  return score;
}

std::array<double, kNumPyramidLevels> dynamic_ranges(const Backbone& backbone) {
  std::array<double, kNumPyramidLevels> r{};
  for (std::size_t i = 0; i < kNumPyramidLevels; ++i) r[i] = backbone.dynamic_range(i);
  r[0] = 1.0;
  return r;
}

void require_compatible(const LogisticParams& params, const MetricConfig& config) {
  if (params.window != config.window) {
    throw UsageError("texture params were fitted with window " + params.window.to_string() +
                     " but the metric uses " + config.window.to_string());
  }
  if (params.c != config.c) {
    throw UsageError("texture params were fitted with c = " + std::to_string(params.c) +
                     " but the metric uses c = " + std::to_string(config.c));
  }
}

MetricScore adists_from_pyramids(const FeaturePyramid<float>& px,
                                 const FeaturePyramid<float>& py, const LogisticParams& params,
                                 const MetricConfig& config,
                                 const std::array<double, kNumPyramidLevels>& ranges) {
  require_matching_pyramids(px, py, "adists");
  require_compatible(params, config);
  if (params.stages.size() < px.levels()) {
    throw UsageError("adists: texture params cover fewer levels than the pyramid");
  }
  const bool min_mode = config.pooling == PoolingMode::MinCombination;
  MetricScore score{0.0, MetricId::Adists, min_mode ? "min-combination" : "reference-weighted",
                    {}};
  double total = 0.0;
  std::size_t channel_count = 0;
  for (std::size_t i = 0; i < px.levels(); ++i) {
    const Tensor& fx = px.stages[i];
    const Tensor& fy = py.stages[i];
    const auto stats = windowed_stats(fx, fy, config.window);
    const Tensor gx = i == 0 ? stage_dispersion(luminance(fx), config.window, config.c)
                             : stage_dispersion(fx, config.window, config.c);
    const std::size_t positions = gx.size();
    std::vector<double> pooled(positions);
    if (min_mode) {
      const Tensor gy = i == 0 ? stage_dispersion(luminance(fy), config.window, config.c)
                               : stage_dispersion(fy, config.window, config.c);
      for (std::size_t k = 0; k < positions; ++k) {
        const double p_x = params.stages[i].probability(gx[k]);
        const double p_y = params.stages[i].probability(gy[k]);
        pooled[k] = p_y < p_x ? p_y : p_x;
      }
    } else {
      for (std::size_t k = 0; k < positions; ++k) {
        pooled[k] = params.stages[i].probability(gx[k]);
      }
    }
    const auto consts = config.constants(ranges[i]);
    const std::size_t channels = fx.channels();
    std::vector<double> similarity(channels);
#pragma omp parallel for schedule(static)
    for (std::int64_t jj = 0; jj < static_cast<std::int64_t>(channels); ++jj) {
      const auto j = static_cast<std::size_t>(jj);
      const std::size_t base = j * positions;
      double acc = 0.0;
      for (std::size_t k = 0; k < positions; ++k) {
        const double l = luminance_term(stats.mu_x[base + k], stats.mu_y[base + k], consts.c1);
        const double s = structure_term(stats.var_x[base + k], stats.var_y[base + k],
                                        stats.cov_xy[base + k], consts.c2);
        acc += pooled[k] * l + (1.0 - pooled[k]) * s;
      }
      similarity[j] = acc / static_cast<double>(positions);
    }
    double level = 0.0;
    for (double s : similarity) level += s;
    double mean_p = 0.0;
    for (double p : pooled) mean_p += p;
    total += level;
    channel_count += channels;
    score.stages.push_back({i, channels, positions, level / static_cast<double>(channels),
                            mean_p / static_cast<double>(positions)});
  }
  score.value = 1.0 - total / static_cast<double>(channel_count);
  return score;
}

namespace {

MetricScore adists_with(const Tensor& x, const Tensor& y, const Backbone& backbone,
                        const LogisticParams& params, MetricConfig config, PoolingMode mode) {
  require_same_shape(x, y, "adists");
  config.pooling = mode;
  require_compatible(params, config);
  const auto px = backbone.extract(x);
  const auto py = backbone.extract(y);
  return adists_from_pyramids(px, py, params, config, dynamic_ranges(backbone));
}

}  // namespace

MetricScore adists(const Tensor& x, const Tensor& y, const Backbone& backbone,
                   const LogisticParams& params, const MetricConfig& config) {
  return adists_with(x, y, backbone, params, config, PoolingMode::MinCombination);
}

MetricScore adists_reference_weighted(const Tensor& x, const Tensor& y, const Backbone& backbone,
                                      const LogisticParams& params, const MetricConfig& config) {
  return adists_with(x, y, backbone, params, config, PoolingMode::ReferenceWeighted);
}

std::vector<double> adists_pooling_weights(const BackboneConfig& config) {
  const double n = static_cast<double>(config.total_channels());
  return std::vector<double>(config.total_channels(), 1.0 / n);
}

Scorer::Scorer(const WeightArchive& archive, LogisticParams params, MetricConfig config)
    : backbone_(archive),
      params_(std::move(params)),
      config_(config),
      lpips_(LpipsWeights::from_archive(archive)),
      dists_(DistsWeights::from_archive(archive)) {
  config_.validate();
  require_compatible(params_, config_);
}

MetricScore Scorer::score(MetricId metric, const Tensor& x, const Tensor& y) const {
  switch (metric) {
    case MetricId::Mse:
      return mse(x, y);
    case MetricId::Ssim:
      return msssim_mean(x, y, config_);
    case MetricId::Lpips: {
      require_same_shape(x, y, "lpips");
      return lpips_distance(backbone_.extract(x), backbone_.extract(y), lpips_);
    }
    case MetricId::Dists: {
      require_same_shape(x, y, "dists");
      return dists(backbone_.extract(x), backbone_.extract(y), dists_, config_,
                   dynamic_ranges(backbone_));
    }
    case MetricId::Adists:
      return config_.pooling == PoolingMode::MinCombination
                 ? adists(x, y, backbone_, params_, config_)
                 : adists_reference_weighted(x, y, backbone_, params_, config_);
  }
  throw UsageError("unsupported metric");
}

}  // namespace adists

#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "adists/archive.hpp"
#include "adists/tensor.hpp"

namespace adists {

inline constexpr std::size_t kNumStages = 5;            // VGG16 conv1..conv5
inline constexpr std::size_t kNumPyramidLevels = kNumStages + 1;  // plus the input

struct StageSpec {
  std::size_t out_channels;
  std::size_t num_convs;
};

struct BackboneConfig {
  std::array<StageSpec, kNumStages> stages{{{64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}}};
  bool renormalize = true;

  /// Channel count of pyramid level i (level 0 is the RGB input).
  std::size_t channels(std::size_t level) const {
    return level == 0 ? 3 : stages.at(level - 1).out_channels;
  }
  std::size_t total_channels() const;
  void validate() const;
};

/// "convK_L" for stage K (1-based) and convolution L (1-based).
std::string conv_layer_name(std::size_t stage, std::size_t index);

/// Every archive entry name the topology needs, in forward order, plus the
/// input normalisation constants.
std::vector<std::string> required_archive_entries(const BackboneConfig& config = {});

/// Checks names and shapes against the topology; returns human-readable
/// problems (empty when the archive is complete).
std::vector<std::string> validate_backbone_archive(const WeightArchive& archive,
                                                   const BackboneConfig& config = {});

/// Divides each output filter (a Cin x kH x kW slice) and its bias by the
/// filter's l2 norm. Non-convolution entries are copied through.
WeightArchive renormalize_filters(const WeightArchive& weights);

template <typename T>
struct FeaturePyramid {
  // stages[0] is the raw input image; stages[i >= 1] are post-ReLU features.
  std::vector<BasicTensor<T>> stages;

  std::size_t levels() const { return stages.size(); }
};

template <typename T>
struct ConvLayer {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

/// Five-stage VGG16 feature extractor with l2-pooling between stages.
/// Immutable after construction and safe to share across threads.
class Backbone {
 public:
  explicit Backbone(const WeightArchive& archive, BackboneConfig config = {});

  const BackboneConfig& config() const noexcept { return config_; }

  /// Runs stages 1..last_stage. The image must be 3 x H x W in [0, 1] with
  /// min(H, W) >= 2^last_stage (32 for the full pyramid).
  template <typename T>
  FeaturePyramid<T> extract(const BasicTensor<T>& image,
                            std::size_t last_stage = kNumStages) const;

  template <typename T>
  const std::vector<std::vector<ConvLayer<T>>>& layers() const;

  const std::array<double, 3>& input_mean() const noexcept { return mean_; }
  const std::array<double, 3>& input_std() const noexcept { return std_; }

  /// Dynamic range per pyramid level used for the SSIM stabilisers: read from
  /// the archive's "calibration.dynamic_range" entry when present, else 1.
  double dynamic_range(std::size_t level) const { return dynamic_range_.at(level); }
  bool calibrated() const noexcept { return calibrated_; }

  static std::size_t min_input_extent(std::size_t last_stage) {
    return std::size_t{1} << last_stage;
  }

 private:
  BackboneConfig config_;
  std::vector<std::vector<ConvLayer<float>>> layers_f_;
  mutable std::vector<std::vector<ConvLayer<double>>> layers_d_;
  mutable std::once_flag layers_d_once_;
  std::array<double, 3> mean_{};
  std::array<double, 3> std_{};
  std::array<double, kNumPyramidLevels> dynamic_range_{};
  bool calibrated_ = false;
};

template <>
const std::vector<std::vector<ConvLayer<float>>>& Backbone::layers<float>() const;
template <>
const std::vector<std::vector<ConvLayer<double>>>& Backbone::layers<double>() const;

inline constexpr const char* kCalibrationEntry = "calibration.dynamic_range";

/// 99th percentile of |activation| per pyramid level over the given images.
std::array<double, kNumPyramidLevels> measure_dynamic_range(const Backbone& backbone,
                                                            const std::vector<Tensor>& images);

}  // namespace adists

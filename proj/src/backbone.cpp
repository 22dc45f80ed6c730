#include "adists/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adists/kernels.hpp"

namespace adists {

std::size_t BackboneConfig::total_channels() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < kNumPyramidLevels; ++i) n += channels(i);
  return n;
}

void BackboneConfig::validate() const {
  static constexpr std::array<std::size_t, kNumStages> kChannels{64, 128, 256, 512, 512};
  for (std::size_t i = 0; i < kNumStages; ++i) {
    if (stages[i].out_channels != kChannels[i] || stages[i].num_convs == 0) {
      throw UsageError("backbone: stage " + std::to_string(i + 1) +
                       " does not match the VGG16 topology");
    }
  }
}

std::string conv_layer_name(std::size_t stage, std::size_t index) {
  return "conv" + std::to_string(stage) + "_" + std::to_string(index);
}

std::vector<std::string> required_archive_entries(const BackboneConfig& config) {
  std::vector<std::string> names;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    for (std::size_t l = 0; l < config.stages[s].num_convs; ++l) {
      const auto base = conv_layer_name(s + 1, l + 1);
      names.push_back(base + ".weight");
      names.push_back(base + ".bias");
    }
  }
  names.emplace_back("input.mean");
  names.emplace_back("input.std");
  return names;
}

std::vector<std::string> validate_backbone_archive(const WeightArchive& archive,
                                                   const BackboneConfig& config) {
  std::vector<std::string> problems;
  std::size_t in_channels = 3;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::size_t out_channels = config.stages[s].out_channels;
    for (std::size_t l = 0; l < config.stages[s].num_convs; ++l) {
      const auto base = conv_layer_name(s + 1, l + 1);
      const Shape want_w{out_channels, in_channels, 3, 3};
      const Shape want_b{out_channels};
      const Tensor* w = archive.find(base + ".weight");
      const Tensor* b = archive.find(base + ".bias");
      if (!w) {
        problems.push_back("missing " + base + ".weight");
      } else if (w->shape() != want_w) {
        problems.push_back(base + ".weight has shape " + shape_string(w->shape()) +
                           ", expected " + shape_string(want_w));
      }
      if (!b) {
        problems.push_back("missing " + base + ".bias");
      } else if (b->shape() != want_b) {
        problems.push_back(base + ".bias has shape " + shape_string(b->shape()) +
                           ", expected " + shape_string(want_b));
      }
      in_channels = out_channels;
    }
  }
  for (const char* name : {"input.mean", "input.std"}) {
    const Tensor* t = archive.find(name);
    if (!t) {
      problems.push_back(std::string("missing ") + name);
    } else if (t->shape() != Shape{3}) {
      problems.push_back(std::string(name) + " has shape " + shape_string(t->shape()) +
                         ", expected [3]");
    }
  }
  if (const Tensor* std_dev = archive.find("input.std"); std_dev && std_dev->size() == 3) {
    for (float v : std_dev->values()) {
      if (!(v > 0.0f)) problems.emplace_back("input.std must be positive");
    }
  }
  if (const Tensor* cal = archive.find(kCalibrationEntry);
      cal && cal->shape() != Shape{kNumPyramidLevels}) {
    problems.push_back(std::string(kCalibrationEntry) + " has shape " +
                       shape_string(cal->shape()) + ", expected [6]");
  }
  return problems;
}

WeightArchive renormalize_filters(const WeightArchive& weights) {
  WeightArchive out;
  for (const auto& [name, tensor] : weights.entries()) {
    const bool is_weight = name.rfind("conv", 0) == 0 && name.ends_with(".weight");
    const bool is_bias = name.rfind("conv", 0) == 0 && name.ends_with(".bias");
    if (is_bias) continue;  // emitted together with its filter
    if (!is_weight) {
      out.add(name, tensor);
      continue;
    }
    if (tensor.rank() != 4) {
      throw ShapeError("renormalize_filters: " + name + " must be rank 4, got " +
                       shape_string(tensor.shape()));
    }
    const std::string base = name.substr(0, name.size() - std::string(".weight").size());
    const Tensor* bias = weights.find(base + ".bias");
    if (!bias || bias->shape() != Shape{tensor.dim(0)}) {
      throw DataError("renormalize_filters: " + base + ".bias missing or mis-shaped");
    }
    Tensor w = tensor;
    Tensor b = *bias;
    const std::size_t per_filter = tensor.size() / tensor.dim(0);
    for (std::size_t o = 0; o < tensor.dim(0); ++o) {
      auto filter = w.values().subspan(o * per_filter, per_filter);
      double sq = 0.0;
      for (float v : filter) sq += static_cast<double>(v) * v;
      const double norm = std::sqrt(sq);
      if (!(norm > 0.0)) {
        throw DataError("renormalize_filters: filter " + std::to_string(o) + " of " + base +
                        " has zero norm");
      }
      for (float& v : filter) v = static_cast<float>(v / norm);
      b[o] = static_cast<float>(b[o] / norm);
    }
    out.add(name, std::move(w));
    out.add(base + ".bias", std::move(b));
  }
  return out;
}

Backbone::Backbone(const WeightArchive& archive, BackboneConfig config)
    : config_(config) {
  config_.validate();
  if (auto problems = validate_backbone_archive(archive, config_); !problems.empty()) {
    std::string msg = "backbone: invalid weight archive:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  const WeightArchive source = config_.renormalize ? renormalize_filters(archive) : archive;
  layers_f_.resize(kNumStages);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    for (std::size_t l = 0; l < config_.stages[s].num_convs; ++l) {
      const auto base = conv_layer_name(s + 1, l + 1);
      layers_f_[s].push_back({source.at(base + ".weight"), source.at(base + ".bias")});
    }
  }
  const Tensor& mean = archive.at("input.mean");
  const Tensor& std_dev = archive.at("input.std");
  for (std::size_t c = 0; c < 3; ++c) {
    mean_[c] = mean[c];
    std_[c] = std_dev[c];
  }
  dynamic_range_.fill(1.0);
  if (const Tensor* cal = archive.find(kCalibrationEntry)) {
    for (std::size_t i = 0; i < kNumPyramidLevels; ++i) {
      if ((*cal)[i] > 0.0f) dynamic_range_[i] = (*cal)[i];
    }
    calibrated_ = true;
  }
}

template <>
const std::vector<std::vector<ConvLayer<float>>>& Backbone::layers<float>() const {
  return layers_f_;
}

template <>
const std::vector<std::vector<ConvLayer<double>>>& Backbone::layers<double>() const {
  std::call_once(layers_d_once_, [this] {
    layers_d_.resize(layers_f_.size());
    for (std::size_t s = 0; s < layers_f_.size(); ++s) {
      for (const auto& layer : layers_f_[s]) {
        layers_d_[s].push_back({layer.weight.cast<double>(), layer.bias.cast<double>()});
      }
    }
  });
  return layers_d_;
}

template <typename T>
FeaturePyramid<T> Backbone::extract(const BasicTensor<T>& image, std::size_t last_stage) const {
  require_rank(image, 3, "extract_pyramid");
  if (image.channels() != 3) {
    throw ShapeError("extract_pyramid: expected 3 channels, got " +
                     shape_string(image.shape()));
  }
  if (last_stage > kNumStages) throw UsageError("extract_pyramid: last_stage must be <= 5");
  const std::size_t min_extent = min_input_extent(last_stage);
  if (image.height() < min_extent || image.width() < min_extent) {
    throw ShapeError("extract_pyramid: image " + shape_string(image.shape()) +
                     " is smaller than " + std::to_string(min_extent) + "x" +
                     std::to_string(min_extent));
  }
  require_finite(image, "extract_pyramid");

  FeaturePyramid<T> pyramid;
  pyramid.stages.reserve(last_stage + 1);
  pyramid.stages.push_back(image);

  BasicTensor<T> x(image.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    const auto src = image.channel(c);
    auto dst = x.channel(c);
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = static_cast<T>((src[i] - mean_[c]) / std_[c]);
    }
  }
  const auto& stages = layers<T>();
  for (std::size_t s = 0; s < last_stage; ++s) {
    if (s > 0) x = kernels::l2_pool(x);
    for (const auto& layer : stages[s]) {
      x = kernels::relu(kernels::conv2d(x, layer.weight, layer.bias, 1, 1));
    }
    pyramid.stages.push_back(x);
  }
  return pyramid;
}

template FeaturePyramid<float> Backbone::extract(const Tensor&, std::size_t) const;
template FeaturePyramid<double> Backbone::extract(const TensorD&, std::size_t) const;

std::array<double, kNumPyramidLevels> measure_dynamic_range(const Backbone& backbone,
                                                            const std::vector<Tensor>& images) {
  std::array<double, kNumPyramidLevels> range{};
  range[0] = 1.0;
  std::array<std::vector<float>, kNumPyramidLevels> samples;
  for (const auto& img : images) {
    const auto pyramid = backbone.extract(img);
    for (std::size_t i = 1; i < pyramid.levels(); ++i) {
      for (float v : pyramid.stages[i].values()) samples[i].push_back(std::abs(v));
    }
  }
  for (std::size_t i = 1; i < kNumPyramidLevels; ++i) {
    auto& v = samples[i];
    if (v.empty()) {
      range[i] = 1.0;
      continue;
    }
    const auto k = static_cast<std::size_t>(0.99 * static_cast<double>(v.size() - 1));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    range[i] = v[k] > 0.0f ? v[k] : 1.0;
  }
  return range;
}

}  // namespace adists

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adists/backbone.hpp"
#include "adists/local_stats.hpp"
#include "adists/tensor.hpp"

namespace adists {

inline constexpr double kDefaultDispersionStabilizer = 1e-6;

/// Rec. 601 luma of a 3 x H x W image, returned as 1 x H x W.
template <typename T>
BasicTensor<T> luminance(const BasicTensor<T>& rgb);

/// Channel-averaged local variance-to-mean ratio of one feature map,
/// shaped 1 x H' x W'.
template <typename T>
BasicTensor<T> stage_dispersion(const BasicTensor<T>& features, const WindowSpec& window,
                                double c);

template <typename T>
struct DispersionMap {
  std::vector<BasicTensor<T>> stages;  // per pyramid level, 1 x H'_i x W'_i
  double c = kDefaultDispersionStabilizer;
};

/// Level 0 uses the luminance of the input image; levels >= 1 average over
/// all feature channels.
template <typename T>
DispersionMap<T> dispersion_index(const FeaturePyramid<T>& pyramid, const WindowSpec& window,
                                  double c);

struct StageLogistic {
  double weight = 0.0;
  double bias = 0.0;

  double probability(double gamma) const;
  friend bool operator==(const StageLogistic&, const StageLogistic&) = default;
};

/// Per-level logistic texture classifier plus the dispersion configuration it
/// was fitted with; scoring refuses a configuration that differs.
struct LogisticParams {
  std::vector<StageLogistic> stages;  // one per pyramid level
  double c = kDefaultDispersionStabilizer;
  WindowSpec window;
  std::string source;

  friend bool operator==(const LogisticParams&, const LogisticParams&) = default;
};

/// Parameters fitted on the synthetic patch corpus against the synthetic
/// seed-0 archive. These are not the values from the original corpus.
LogisticParams default_logistic_params();

std::string format_params(const LogisticParams& params);
LogisticParams parse_params(const std::string& text);
void save_params(const LogisticParams& params, const std::filesystem::path& path);
LogisticParams load_params(const std::filesystem::path& path);

template <typename T>
struct TextureProbabilityMaps {
  std::vector<BasicTensor<T>> p;  // texture probability per level, in [0, 1]

  /// q = 1 - p, materialised on demand.
  BasicTensor<T> structure(std::size_t level) const;
};

template <typename T>
TextureProbabilityMaps<T> texture_probability(const DispersionMap<T>& gamma,
                                              const LogisticParams& params);

/// Elementwise minimum; ties keep the first argument.
template <typename T>
TextureProbabilityMaps<T> combine_min(const TextureProbabilityMaps<T>& px,
                                      const TextureProbabilityMaps<T>& py);

// ---------------------------------------------------------------------------
// Fitting

enum class PatchLabel { Structure = 0, Texture = 1 };

struct PatchRecord {
  Tensor image;  // 3 x size x size, [0, 1]
  PatchLabel label;
  std::size_t size;
};

struct PatchCorpus {
  std::vector<PatchRecord> records;
};

inline constexpr std::array<std::size_t, 5> kPatchSizes{16, 32, 64, 128, 256};

/// CSV manifest with header "path,label,size"; label is "structure" or
/// "texture"; relative paths resolve against the manifest's directory.
PatchCorpus load_corpus_manifest(const std::filesystem::path& manifest);
void save_corpus(const PatchCorpus& corpus, const std::filesystem::path& directory);

struct FitOptions {
  std::size_t max_iterations = 10000;
  double gradient_tolerance = 1e-8;
  double l2_penalty = 1e-4;
  std::size_t min_per_class = 20;
  // Patch size used to fit each pyramid level.
  std::array<std::size_t, kNumPyramidLevels> level_patch_size{32, 16, 32, 64, 128, 256};
};

struct LogisticFit {
  StageLogistic params;
  std::vector<double> loss_trace;  // penalised mean cross-entropy per iteration
  std::size_t iterations = 0;
  bool converged = false;
  double accuracy = 0.0;  // on the fitting data
};

/// 1-D logistic regression of label (texture = 1) on gamma by damped Newton
/// iterations with backtracking; minimises mean binary cross-entropy plus
/// (l2_penalty / 2) * weight^2.
LogisticFit fit_logistic_1d(const std::vector<double>& gamma, const std::vector<int>& label,
                            const FitOptions& options = {});

double logistic_accuracy(const StageLogistic& model, const std::vector<double>& gamma,
                         const std::vector<int>& label);

/// Patch-level dispersion at a pyramid level: one window spanning the whole
/// level map of the patch.
double patch_dispersion(const Backbone& backbone, const Tensor& patch, std::size_t level,
                        double c);

struct LevelSamples {
  std::vector<double> gamma;
  std::vector<int> label;
};

/// Gathers (gamma, label) for `level` from the patches of the paired size.
LevelSamples level_samples(const PatchCorpus& corpus, const Backbone& backbone,
                           std::size_t level, double c, const FitOptions& options = {});

struct LevelFitReport {
  std::size_t level = 0;
  std::size_t patch_size = 0;
  std::size_t structure_count = 0;
  std::size_t texture_count = 0;
  LogisticFit fit;
};

struct ClassifierFit {
  LogisticParams params;
  std::vector<LevelFitReport> levels;
};

ClassifierFit fit_classifier(const PatchCorpus& corpus, const Backbone& backbone,
                             const WindowSpec& window, double c = kDefaultDispersionStabilizer,
                             const FitOptions& options = {});

/// Texture probability maps of one image rendered as 8-bit grayscale
/// (0 = structure, 255 = texture), one per pyramid level.
struct GrayMap {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
};

std::vector<GrayMap> emit_probability_maps(const Tensor& image, const Backbone& backbone,
                                           const LogisticParams& params);

}  // namespace adists

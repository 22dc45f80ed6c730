#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "adists/archive.hpp"
#include "adists/tensor.hpp"
#include "adists/texture_model.hpp"

namespace adists::synthetic {

/// Seeded random VGG16 archive (He-scaled filters, small biases, ImageNet
/// input normalisation). With calibration on, the dynamic-range entry is
/// measured from a handful of natural-like images.
WeightArchive make_archive(std::uint64_t seed, bool with_calibration = true);

/// Smooth multi-octave value noise with a few hard-edged shapes on top,
/// 3 x height x width in [0, 1].
Tensor natural_like_image(std::uint64_t seed, std::size_t height, std::size_t width);

/// x + N(0, sigma^2) per element, clamped to [0, 1].
Tensor add_gaussian_noise(const Tensor& image, double sigma, std::uint64_t seed);

/// Separable Gaussian blur with edge clamping.
Tensor gaussian_blur(const Tensor& image, double sigma);

/// Periodic or stochastically perturbed micro-pattern filling the patch.
/// kind: 0 tiled, 1 perturbed tiles, 2 randomly flipped tiles; negative draws
/// one at random.
Tensor texture_patch(std::uint64_t seed, std::size_t size, int kind = -1);

/// One shape on a flat background.
/// kind: 0 step edge, 1 corner, 2 line, 3 blob; negative draws one at random.
Tensor structure_patch(std::uint64_t seed, std::size_t size, int kind = -1);

/// `per_class` structure and texture patches at every size in `sizes`.
PatchCorpus patch_corpus(std::uint64_t seed, std::size_t per_class,
                         const std::vector<std::size_t>& sizes = {kPatchSizes.begin(),
                                                                  kPatchSizes.end()});

/// Left half noise texture, right half flat gray.
Tensor half_noise_composite(std::uint64_t seed, std::size_t height, std::size_t width);

struct NoiseManifest {
  std::filesystem::path manifest;
  std::size_t records = 0;
};

/// Writes `images` references plus one noisy copy per sigma and a MOS
/// manifest (ref,dist,score,subset) whose score is minus the sigma rank.
NoiseManifest write_noise_manifest(const std::filesystem::path& directory, std::uint64_t seed,
                                   std::size_t images, std::size_t size,
                                   const std::vector<double>& sigmas);

}  // namespace adists::synthetic

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "adists/tensor.hpp"

namespace adists {

/// Reads a PNG as a 3 x H x W tensor in [0, 1]. Grayscale and palette images
/// are expanded to RGB; alpha is dropped; 16-bit samples are reduced to 8 bits.
Tensor decode_image(const std::filesystem::path& path);

/// Writes a 1- or 3-channel tensor as an 8-bit PNG. Values are clamped to
/// [0, 1] and rounded to the nearest level.
void encode_image(const Tensor& image, const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG from raw bytes (row-major, height x width).
void encode_gray8(const std::vector<std::uint8_t>& pixels, std::size_t height,
                  std::size_t width, const std::filesystem::path& path);

/// Area-scaled bicubic (Keys, a = -0.5) resampling so that the shorter side
/// becomes `target_short_side`. The long side keeps the aspect ratio, rounded
/// to the nearest integer. Downscaling widens the kernel by the scale factor.
Tensor resize_bicubic(const Tensor& image, std::size_t target_short_side);

/// Resamples to an explicit output size.
Tensor resize_bicubic_to(const Tensor& image, std::size_t out_h, std::size_t out_w);

}  // namespace adists

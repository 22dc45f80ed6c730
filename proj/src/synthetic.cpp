#include "adists/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "adists/backbone.hpp"
#include "adists/image_io.hpp"

namespace adists::synthetic {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Random lattice with cell size `cell`, interpolated with smoothstep weights.
std::vector<double> value_noise(Rng& rng, std::size_t h, std::size_t w, double cell) {
  const std::size_t gh = static_cast<std::size_t>(std::ceil(h / cell)) + 2;
  const std::size_t gw = static_cast<std::size_t>(std::ceil(w / cell)) + 2;
  std::vector<double> grid(gh * gw);
  for (auto& v : grid) v = uniform(rng, -1.0, 1.0);
  const double oy = uniform(rng, 0.0, 1.0), ox = uniform(rng, 0.0, 1.0);
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = y / cell + oy;
    const auto iy = static_cast<std::size_t>(fy);
    double ty = fy - iy;
    ty = ty * ty * (3 - 2 * ty);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = x / cell + ox;
      const auto ix = static_cast<std::size_t>(fx);
      double tx = fx - ix;
      tx = tx * tx * (3 - 2 * tx);
      const double a = grid[iy * gw + ix], b = grid[iy * gw + ix + 1];
      const double c = grid[(iy + 1) * gw + ix], d = grid[(iy + 1) * gw + ix + 1];
      out[y * w + x] = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
    }
  }
  return out;
}

Tensor gray_to_rgb(const std::vector<double>& gray, std::size_t h, std::size_t w,
                   const std::array<double, 3>& tint) {
  Tensor img({3, h, w});
  for (std::size_t c = 0; c < 3; ++c) {
    auto ch = img.channel(c);
    for (std::size_t i = 0; i < h * w; ++i) {
      ch[i] = static_cast<float>(std::clamp(gray[i] * tint[c], 0.0, 1.0));
    }
  }
  return img;
}

std::array<double, 3> random_tint(Rng& rng, double spread) {
  return {1.0 + uniform(rng, -spread, spread), 1.0 + uniform(rng, -spread, spread),
          1.0 + uniform(rng, -spread, spread)};
}

}  // namespace

WeightArchive make_archive(std::uint64_t seed, bool with_calibration) {
  Rng rng(seed);
  WeightArchive archive;
  const BackboneConfig config;
  std::size_t in_channels = 3;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::size_t out_channels = config.stages[s].out_channels;
    for (std::size_t l = 0; l < config.stages[s].num_convs; ++l) {
      std::normal_distribution<float> filter(0.0f,
                                             std::sqrt(2.0f / static_cast<float>(in_channels * 9)));
      std::normal_distribution<float> bias(0.0f, 0.01f);
      Tensor w({out_channels, in_channels, 3, 3});
      for (auto& v : w.values()) v = filter(rng);
      if (s == 0 && l == 0) {
        // First layer: oriented Sobel derivatives with colour-opponent gains
        // plus a small zero-mean random part, resembling the smooth edge
        // filters of trained networks. Flat regions only pass the bias.
        const std::array<float, 9> sobel_x{-1, 0, 1, -2, 0, 2, -1, 0, 1};
        const std::array<float, 9> sobel_y{-1, -2, -1, 0, 0, 0, 1, 2, 1};
        std::normal_distribution<float> gain(0.0f, 1.0f);
        std::uniform_real_distribution<float> angle(0.0f, 2.0f * std::numbers::pi_v<float>);
        for (std::size_t o = 0; o < out_channels; ++o) {
          const float theta = angle(rng);
          for (std::size_t c = 0; c < in_channels; ++c) {
            auto kernel = w.values().subspan((o * in_channels + c) * 9, 9);
            const float g = gain(rng);
            float mean = 0.0f;
            for (float v : kernel) mean += v;
            mean /= 9.0f;
            for (std::size_t t = 0; t < 9; ++t) {
              kernel[t] = g * 0.25f * (std::cos(theta) * sobel_x[t] + std::sin(theta) * sobel_y[t]) +
                          0.25f * (kernel[t] - mean);
            }
          }
        }
      }
      Tensor b({out_channels});
      for (auto& v : b.values()) v = bias(rng);
      const auto base = conv_layer_name(s + 1, l + 1);
      archive.add(base + ".weight", std::move(w));
      archive.add(base + ".bias", std::move(b));
      in_channels = out_channels;
    }
  }
  archive.add("input.mean", Tensor({3}, std::vector<float>{0.485f, 0.456f, 0.406f}));
  archive.add("input.std", Tensor({3}, std::vector<float>{0.229f, 0.224f, 0.225f}));
  if (with_calibration) {
    const Backbone backbone(archive);
    std::vector<Tensor> images;
    for (std::uint64_t i = 0; i < 4; ++i) images.push_back(natural_like_image(seed * 7919 + i, 64, 64));
    const auto range = measure_dynamic_range(backbone, images);
    Tensor cal({kNumPyramidLevels});
    for (std::size_t i = 0; i < kNumPyramidLevels; ++i) cal[i] = static_cast<float>(range[i]);
    archive.add(kCalibrationEntry, std::move(cal));
  }
  return archive;
}

Tensor natural_like_image(std::uint64_t seed, std::size_t height, std::size_t width) {
  Rng rng(seed);
  std::vector<double> lum(height * width, uniform(rng, 0.35, 0.65));
  const std::array<std::pair<double, double>, 5> octaves{
      {{32.0, 0.22}, {16.0, 0.12}, {8.0, 0.07}, {4.0, 0.04}, {2.0, 0.02}}};
  for (const auto& [cell, amp] : octaves) {
    const auto n = value_noise(rng, height, width, cell);
    for (std::size_t i = 0; i < lum.size(); ++i) lum[i] += amp * n[i];
  }
  const auto tint = random_tint(rng, 0.25);
  Tensor img = gray_to_rgb(lum, height, width, tint);

  const std::size_t shapes = uniform_index(rng, 2, 4);
  for (std::size_t k = 0; k < shapes; ++k) {
    const double cy = uniform(rng, 0.0, height), cx = uniform(rng, 0.0, width);
    const double ry = uniform(rng, 0.08, 0.3) * height, rx = uniform(rng, 0.08, 0.3) * width;
    const bool disc = uniform(rng, 0.0, 1.0) < 0.5;
    const std::array<double, 3> colour{uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95),
                                       uniform(rng, 0.05, 0.95)};
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1 && std::abs(dx) <= 1;
        if (!inside) continue;
        for (std::size_t c = 0; c < 3; ++c) {
          // Keep some of the underlying noise so shapes are not perfectly flat.
          const double v = 0.8 * colour[c] + 0.2 * img.at(c, y, x);
          img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return img;
}

Tensor add_gaussian_noise(const Tensor& image, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw UsageError("add_gaussian_noise: sigma must be non-negative");
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  Tensor out = image;
  for (auto& v : out.values()) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));
  return out;
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
  require_rank(image, 3, "gaussian_blur");
  if (!(sigma > 0.0)) return image;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    taps[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += taps[k + radius];
  }
  for (auto& t : taps) t /= total;
  const auto h = static_cast<std::ptrdiff_t>(image.height());
  const auto w = static_cast<std::ptrdiff_t>(image.width());
  Tensor tmp(image.shape()), out(image.shape());
  for (std::size_t c = 0; c < image.channels(); ++c) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          acc += taps[k + radius] * image.at(c, y, std::clamp<std::ptrdiff_t>(x + k, 0, w - 1));
        }
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    }
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          acc += taps[k + radius] * tmp.at(c, std::clamp<std::ptrdiff_t>(y + k, 0, h - 1), x);
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor texture_patch(std::uint64_t seed, std::size_t size, int kind) {
  Rng rng(seed);
  const int drawn = static_cast<int>(uniform_index(rng, 0, 2));
  if (kind < 0) kind = drawn;
  const double base = uniform(rng, 0.3, 0.7);
  const double contrast = uniform(rng, 0.15, 0.35);
  const double period_hi = std::max(2.0, size / 16.0);
  const auto p = static_cast<std::size_t>(
      std::round(uniform(rng, std::max(2.0, period_hi / 2.0), period_hi)));
  std::vector<double> tile(p * p);
  for (auto& v : tile) v = uniform(rng, -1.0, 1.0);
  std::vector<double> lum(size * size);
  if (kind == 0) {
    // Exact tiling with per-pixel jitter.
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        lum[y * size + x] =
            base + contrast * (0.8 * tile[(y % p) * p + x % p] + uniform(rng, -0.2, 0.2));
      }
    }
  } else if (kind == 1) {
    // Every tile instance perturbs its texels.
    const double jitter = uniform(rng, 0.3, 0.5);
    for (std::size_t ty = 0; ty < size; ty += p) {
      for (std::size_t tx = 0; tx < size; tx += p) {
        for (std::size_t y = ty; y < std::min(ty + p, size); ++y) {
          for (std::size_t x = tx; x < std::min(tx + p, size); ++x) {
            const double v = tile[(y - ty) * p + (x - tx)] + jitter * uniform(rng, -1.0, 1.0);
            lum[y * size + x] = base + contrast * 0.8 * v;
          }
        }
      }
    }
  } else {
    // The same texel with a random flip or transposition per tile.
    for (std::size_t ty = 0; ty < size; ty += p) {
      for (std::size_t tx = 0; tx < size; tx += p) {
        const auto op = uniform_index(rng, 0, 3);
        for (std::size_t y = ty; y < std::min(ty + p, size); ++y) {
          for (std::size_t x = tx; x < std::min(tx + p, size); ++x) {
            std::size_t u = y - ty, v = x - tx;
            if (op & 1) u = p - 1 - u;
            if (op & 2) std::swap(u, v);
            lum[y * size + x] = base + contrast * (0.8 * tile[u * p + v] + uniform(rng, -0.2, 0.2));
          }
        }
      }
    }
  }
  return gray_to_rgb(lum, size, size, random_tint(rng, 0.15));
}

Tensor structure_patch(std::uint64_t seed, std::size_t size, int kind) {
  Rng rng(seed);
  const double background = uniform(rng, 0.2, 0.8);
  const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  const double contrast = sign * uniform(rng, 0.15, 0.35);
  const double foreground = std::clamp(background + contrast, 0.0, 1.0);
  const int drawn = static_cast<int>(uniform_index(rng, 0, 3));
  if (kind < 0) kind = drawn;
  const double n = static_cast<double>(size);
  const double cy = uniform(rng, 0.3, 0.7) * n, cx = uniform(rng, 0.3, 0.7) * n;
  const double theta = uniform(rng, 0.0, 2 * std::numbers::pi);
  const double ny = std::sin(theta), nx = std::cos(theta);
  const double theta2 = theta + uniform(rng, 0.35, 0.65) * std::numbers::pi;
  const double my = std::sin(theta2), mx = std::cos(theta2);
  const double width = std::max(1.0, n / 16.0);
  const double radius = uniform(rng, 0.15, 0.3) * n;
  std::vector<double> lum(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      const double d1 = dy * ny + dx * nx;
      bool inside = false;
      switch (kind) {
        case 0:  // step edge
          inside = d1 > 0.0;
          break;
        case 1:  // corner
          inside = d1 > 0.0 && dy * my + dx * mx > 0.0;
          break;
        case 2:  // line
          inside = std::abs(d1) < width;
          break;
        default:  // blob
          inside = dy * dy + dx * dx < radius * radius;
          break;
      }
      lum[y * size + x] = inside ? foreground : background;
    }
  }
  return gray_to_rgb(lum, size, size, random_tint(rng, 0.15));
}

PatchCorpus patch_corpus(std::uint64_t seed, std::size_t per_class,
                         const std::vector<std::size_t>& sizes) {
  PatchCorpus corpus;
  Rng rng(seed);
  for (std::size_t size : sizes) {
    for (std::size_t k = 0; k < per_class; ++k) {
      corpus.records.push_back({structure_patch(rng(), size), PatchLabel::Structure, size});
      corpus.records.push_back({texture_patch(rng(), size), PatchLabel::Texture, size});
    }
  }
  return corpus;
}

Tensor half_noise_composite(std::uint64_t seed, std::size_t height, std::size_t width) {
  Rng rng(seed);
  std::vector<double> lum(height * width, 0.5);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width / 2; ++x) lum[y * width + x] = uniform(rng, 0.2, 0.8);
  }
  return gray_to_rgb(lum, height, width, {1.0, 1.0, 1.0});
}

NoiseManifest write_noise_manifest(const std::filesystem::path& directory, std::uint64_t seed,
                                   std::size_t images, std::size_t size,
                                   const std::vector<double>& sigmas) {
  std::filesystem::create_directories(directory);
  NoiseManifest result{directory / "manifest.csv", 0};
  std::ofstream out(result.manifest, std::ios::trunc);
  if (!out) throw DataError("cannot write " + result.manifest.string());
  out << "ref,dist,score,subset\n";
  for (std::size_t i = 0; i < images; ++i) {
    const Tensor ref = natural_like_image(seed + 1000 * i, size, size);
    const std::string ref_name = "ref_" + std::to_string(i) + ".png";
    encode_image(ref, directory / ref_name);
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
      const std::string dist_name =
          "dist_" + std::to_string(i) + "_" + std::to_string(k) + ".png";
      encode_image(add_gaussian_noise(ref, sigmas[k], seed + 1000 * i + k + 1),
                   directory / dist_name);
      out << ref_name << "," << dist_name << "," << -static_cast<double>(k + 1) << ",image_"
          << i << "\n";
      ++result.records;
    }
  }
  return result;
}

}  // namespace adists::synthetic

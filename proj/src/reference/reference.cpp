#include "adists/reference.hpp"

#include <cmath>

#include "adists/error.hpp"

namespace adists::reference {

TensorD conv2d(const TensorD& input, const TensorD& filters, const TensorD& bias,
               std::size_t stride, std::size_t padding) {
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = filters.dim(0), kh = filters.dim(2), kw = filters.dim(3);
  if (filters.dim(1) != cin) throw ShapeError("reference conv2d: channel mismatch");
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
  TensorD out({cout, oh, ow});
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < cin; ++c) {
          for (std::size_t dy = 0; dy < kh; ++dy) {
            for (std::size_t dx = 0; dx < kw; ++dx) {
              const auto iy = static_cast<std::ptrdiff_t>(y * stride + dy) -
                              static_cast<std::ptrdiff_t>(padding);
              const auto ix = static_cast<std::ptrdiff_t>(x * stride + dx) -
                              static_cast<std::ptrdiff_t>(padding);
              if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                  ix >= static_cast<std::ptrdiff_t>(w)) {
                continue;
              }
              acc += filters[((o * cin + c) * kh + dy) * kw + dx] *
                     input.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

TensorD l2_pool(const TensorD& input) {
  const std::size_t c = input.channels(), h = input.height(), w = input.width();
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  const double taps[3] = {0.25, 0.5, 0.25};
  auto clamp = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(std::max<std::ptrdiff_t>(i, 0),
                                                             static_cast<std::ptrdiff_t>(n) - 1));
  };
  TensorD out({c, oh, ow});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const double v = input.at(k, clamp(static_cast<std::ptrdiff_t>(2 * y) + dy, h),
                                      clamp(static_cast<std::ptrdiff_t>(2 * x) + dx, w));
            acc += taps[dy + 1] * taps[dx + 1] * v * v;
          }
        }
        out.at(k, y, x) = std::sqrt(acc + 1e-12);
      }
    }
  }
  return out;
}

TensorD box_mean(const TensorD& a, std::size_t window_h, std::size_t window_w) {
  const std::size_t c = a.channels();
  const std::size_t oh = a.height() - window_h + 1, ow = a.width() - window_w + 1;
  TensorD out({c, oh, ow});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < window_h; ++dy) {
          for (std::size_t dx = 0; dx < window_w; ++dx) acc += a.at(k, y + dy, x + dx);
        }
        out.at(k, y, x) = acc / static_cast<double>(window_h * window_w);
      }
    }
  }
  return out;
}

LocalStatistics<double> windowed_stats(const TensorD& a, const TensorD& b,
                                       const WindowSpec& window) {
  require_same_shape(a, b, "reference windowed_stats");
  const std::size_t wh = window.clamped_height(a.height());
  const std::size_t ww = window.clamped_width(a.width());
  const std::size_t c = a.channels(), oh = a.height() - wh + 1, ow = a.width() - ww + 1;
  LocalStatistics<double> st{TensorD({c, oh, ow}), TensorD({c, oh, ow}), TensorD({c, oh, ow}),
                             TensorD({c, oh, ow}), TensorD({c, oh, ow}), wh, ww};
  const double n = static_cast<double>(wh * ww);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double ma = 0.0, mb = 0.0;
        for (std::size_t dy = 0; dy < wh; ++dy) {
          for (std::size_t dx = 0; dx < ww; ++dx) {
            ma += a.at(k, y + dy, x + dx);
            mb += b.at(k, y + dy, x + dx);
          }
        }
        ma /= n;
        mb /= n;
        double va = 0.0, vb = 0.0, cov = 0.0;
        for (std::size_t dy = 0; dy < wh; ++dy) {
          for (std::size_t dx = 0; dx < ww; ++dx) {
            const double da = a.at(k, y + dy, x + dx) - ma;
            const double db = b.at(k, y + dy, x + dx) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
          }
        }
        st.mu_x.at(k, y, x) = ma;
        st.mu_y.at(k, y, x) = mb;
        st.var_x.at(k, y, x) = va / n;
        st.var_y.at(k, y, x) = vb / n;
        st.cov_xy.at(k, y, x) = cov / n;
      }
    }
  }
  return st;
}

SsimMaps<double> ssim_maps(const TensorD& x, const TensorD& y, const WindowSpec& window,
                           double c1, double c2) {
  const auto st = windowed_stats(x, y, window);
  SsimMaps<double> maps{TensorD(st.mu_x.shape()), TensorD(st.mu_x.shape()),
                        TensorD(st.mu_x.shape())};
  for (std::size_t k = 0; k < st.mu_x.size(); ++k) {
    const double mx = st.mu_x[k], my = st.mu_y[k];
    const double l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
    const double s = (2.0 * st.cov_xy[k] + c2) / (st.var_x[k] + st.var_y[k] + c2);
    maps.l[k] = l;
    maps.s[k] = s;
    maps.ls[k] = l * s;
  }
  return maps;
}

double dists(const FeaturePyramid<float>& px, const FeaturePyramid<float>& py,
             const DistsWeights& weights, const MetricConfig& config,
             const std::array<double, kNumPyramidLevels>& ranges) {
  double total = 0.0;
  for (std::size_t i = 0; i < px.levels(); ++i) {
    const auto k = config.constants(ranges[i]);
    const TensorD fx = px.stages[i].cast<double>(), fy = py.stages[i].cast<double>();
    const WindowSpec whole{fx.height(), fx.width()};
    const auto st = windowed_stats(fx, fy, whole);
    for (std::size_t j = 0; j < fx.channels(); ++j) {
      const double mx = st.mu_x[j], my = st.mu_y[j];
      const double l = (2.0 * mx * my + k.c1) / (mx * mx + my * my + k.c1);
      const double s = (2.0 * st.cov_xy[j] + k.c2) / (st.var_x[j] + st.var_y[j] + k.c2);
      total += weights.alpha[i][j] * l + weights.beta[i][j] * s;
    }
  }
  return 1.0 - total;
}

namespace {

// gamma per window position; level 0 works on Rec. 601 luma.
std::vector<double> dispersion(const TensorD& f, bool luma, const WindowSpec& window, double c) {
  TensorD src = f;
  if (luma) {
    src = TensorD({1, f.height(), f.width()});
    for (std::size_t q = 0; q < f.plane(); ++q) {
      src[q] = 0.299 * f[q] + 0.587 * f[f.plane() + q] + 0.114 * f[2 * f.plane() + q];
    }
  }
  const auto st = windowed_stats(src, src, window);
  const std::size_t positions = st.mu_x.plane();
  std::vector<double> gamma(positions, 0.0);
  for (std::size_t j = 0; j < src.channels(); ++j) {
    for (std::size_t k = 0; k < positions; ++k) {
      gamma[k] += st.var_x[j * positions + k] / (st.mu_x[j * positions + k] + c);
    }
  }
  for (auto& g : gamma) g /= static_cast<double>(src.channels());
  return gamma;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double adists(const FeaturePyramid<float>& px, const FeaturePyramid<float>& py,
              const LogisticParams& params, const MetricConfig& config,
              const std::array<double, kNumPyramidLevels>& ranges) {
  const bool min_mode = config.pooling == PoolingMode::MinCombination;
  double total = 0.0;
  std::size_t channels = 0;
  for (std::size_t i = 0; i < px.levels(); ++i) {
    const TensorD fx = px.stages[i].cast<double>(), fy = py.stages[i].cast<double>();
    const auto gx = dispersion(fx, i == 0, config.window, config.c);
    const auto gy = dispersion(fy, i == 0, config.window, config.c);
    const auto& model = params.stages[i];
    const auto k = config.constants(ranges[i]);
    const auto st = windowed_stats(fx, fy, config.window);
    const std::size_t positions = gx.size();
    for (std::size_t j = 0; j < fx.channels(); ++j) {
      double acc = 0.0;
      for (std::size_t q = 0; q < positions; ++q) {
        const double p_x = sigmoid(model.weight * gx[q] + model.bias);
        const double p_y = sigmoid(model.weight * gy[q] + model.bias);
        const double p = min_mode ? std::min(p_x, p_y) : p_x;
        const std::size_t at = j * positions + q;
        const double mx = st.mu_x[at], my = st.mu_y[at];
        const double l = (2.0 * mx * my + k.c1) / (mx * mx + my * my + k.c1);
        const double s = (2.0 * st.cov_xy[at] + k.c2) / (st.var_x[at] + st.var_y[at] + k.c2);
        acc += p * l + (1.0 - p) * s;
      }
      total += acc / static_cast<double>(positions);
    }
    channels += fx.channels();
  }
  return 1.0 - total / static_cast<double>(channels);
}

namespace {

std::vector<double> pairwise_ranks(std::span<const double> v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) less += 1.0;
      if (v[j] == v[i]) equal += 1.0;
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

}  // namespace

double srcc(std::span<const double> a, std::span<const double> b) {
  const auto ra = pairwise_ranks(a), rb = pairwise_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double krcc(std::span<const double> a, std::span<const double> b) {
  double concordant = 0.0, discordant = 0.0, ties_a = 0.0, ties_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0.0 && db == 0.0) continue;
      if (da == 0.0) {
        ties_a += 1.0;
      } else if (db == 0.0) {
        ties_b += 1.0;
      } else if ((da > 0.0) == (db > 0.0)) {
        concordant += 1.0;
      } else {
        discordant += 1.0;
      }
    }
  }
  return (concordant - discordant) /
         std::sqrt((concordant + discordant + ties_a) * (concordant + discordant + ties_b));
}

}  // namespace adists::reference

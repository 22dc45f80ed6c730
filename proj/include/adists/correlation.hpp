#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace adists {

/// Throws DataError on length mismatch, fewer than two points or a constant
/// argument.
double pearson(std::span<const double> x, std::span<const double> y);

/// 1-based ranks; tied values share the average of their positions.
std::vector<double> average_ranks(std::span<const double> v);

double srcc(std::span<const double> pred, std::span<const double> mos);

/// Kendall tau-b in O(n log n).
double krcc(std::span<const double> pred, std::span<const double> mos);

/// f(s) = (a - b) / (1 + exp(-(s - c) / |d|)) + b
struct Logistic4 {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

  double operator()(double s) const;
  static std::string form() { return "f(s) = (a - b) / (1 + exp(-(s - c) / |d|)) + b"; }
};

struct Logistic4Fit {
  Logistic4 params;
  double sse = 0.0;
  std::size_t starts = 0;
  bool converged = false;
};

/// Least squares by Levenberg-Marquardt from `starts` seeded starting points
/// (the first two are deterministic: a data-scaled sigmoid and a near-linear
/// one). Needs at least 5 points.
Logistic4Fit fit_logistic4(std::span<const double> pred, std::span<const double> mos,
                           std::uint64_t seed = 0, std::size_t starts = 8);

struct PlccResult {
  double value = 0.0;
  double raw_pearson = 0.0;
  Logistic4Fit fit;
  bool fallback = false;  // fit failed or lost to the raw correlation
  std::string warning;
};

/// Pearson correlation between the fitted mapping of `pred` and `mos`.
PlccResult plcc(std::span<const double> pred, std::span<const double> mos, std::uint64_t seed = 0);

struct TwoAfcRecord {
  double r = 0.5;  // fraction of humans preferring distortion 0
  double d0 = 0.0;
  double d1 = 0.0;
};

/// Mean of r * rhat + (1 - r)(1 - rhat) with rhat = [d0 < d1]; equal
/// distances earn rhat = 0.5.
double two_afc_score(std::span<const TwoAfcRecord> records);

}  // namespace adists

#include "adists/correlation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "adists/error.hpp"

namespace adists {

namespace {

void require_pair(std::span<const double> x, std::span<const double> y, std::size_t min_n,
                  const char* what) {
  if (x.size() != y.size()) {
    throw DataError(std::string(what) + ": length mismatch (" + std::to_string(x.size()) +
                    " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < min_n) {
    throw DataError(std::string(what) + ": needs at least " + std::to_string(min_n) +
                    " points, got " + std::to_string(x.size()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw DataError(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sorts v[lo, hi) in place and returns the number of inversions.
std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                          std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

// Sum of t(t-1)/2 over runs of equal values in a sorted sequence.
template <typename Eq>
std::uint64_t tied_pairs(std::size_t n, Eq&& equal) {
  std::uint64_t total = 0, run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && equal(i - 1, i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

double stable_sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double sse_of(const Logistic4& f, std::span<const double> s, std::span<const double> m) {
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = f(s[i]) - m[i];
    sum += r * r;
  }
  return std::isfinite(sum) ? sum : std::numeric_limits<double>::infinity();
}

struct LmResult {
  Logistic4 params;
  double sse;
  bool converged;
};

LmResult levenberg_marquardt(Logistic4 p, std::span<const double> s, std::span<const double> m,
                             double min_scale) {
  double sse = sse_of(p, s, m);
  double lambda = 1e-3;
  bool converged = false;
  for (int it = 0; it < 500 && std::isfinite(sse); ++it) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    const double d = std::abs(p.d);
    const double sign = p.d < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double sig = stable_sigmoid((s[i] - p.c) / d);
      const double slope = (p.a - p.b) * sig * (1.0 - sig);
      Eigen::Vector4d g;
      g << sig, 1.0 - sig, -slope / d, -slope * (s[i] - p.c) * sign / (d * d);
      const double r = (p.a - p.b) * sig + p.b - m[i];
      jtj += g * g.transpose();
      jtr += g * r;
    }
    bool improved = false;
    while (lambda < 1e12) {
      Eigen::Matrix4d lhs = jtj;
      for (int k = 0; k < 4; ++k) lhs(k, k) += lambda * std::max(jtj(k, k), 1e-12);
      const Eigen::Vector4d delta = lhs.ldlt().solve(-jtr);
      Logistic4 q{p.a + delta[0], p.b + delta[1], p.c + delta[2], p.d + delta[3]};
      const double q_sse = std::abs(q.d) < min_scale ? std::numeric_limits<double>::infinity()
                                                     : sse_of(q, s, m);
      if (q_sse < sse) {
        const double gain = sse - q_sse;
        p = q;
        sse = q_sse;
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = true;
        if (gain <= 1e-12 * std::max(sse, 1e-300)) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) converged = true;
    if (converged) break;
  }
  return {p, sse, converged};
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, 2, "pearson");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("pearson: constant input, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double srcc(std::span<const double> pred, std::span<const double> mos) {
  require_pair(pred, mos, 2, "srcc");
  const auto rp = average_ranks(pred);
  const auto rm = average_ranks(mos);
  return pearson(rp, rm);
}

double krcc(std::span<const double> pred, std::span<const double> mos) {
  require_pair(pred, mos, 2, "krcc");
  const std::size_t n = pred.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pred[a] != pred[b] ? pred[a] < pred[b] : mos[a] < mos[b];
  });
  const std::uint64_t tx = tied_pairs(n, [&](std::size_t i, std::size_t j) {
    return pred[order[i]] == pred[order[j]];
  });
  const std::uint64_t txy = tied_pairs(n, [&](std::size_t i, std::size_t j) {
    return pred[order[i]] == pred[order[j]] && mos[order[i]] == mos[order[j]];
  });
  std::vector<double> y(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = mos[order[i]];
  const std::uint64_t swaps = merge_count(y, buf, 0, n);
  const std::uint64_t ty = tied_pairs(n, [&](std::size_t i, std::size_t j) { return y[i] == y[j]; });
  const double n0 = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double denom = (n0 - static_cast<double>(tx)) * (n0 - static_cast<double>(ty));
  if (denom <= 0.0) throw DataError("krcc: constant input, correlation undefined");
  const double numer = n0 - static_cast<double>(tx) - static_cast<double>(ty) +
                       static_cast<double>(txy) - 2.0 * static_cast<double>(swaps);
  return std::clamp(numer / std::sqrt(denom), -1.0, 1.0);
}

double Logistic4::operator()(double s) const {
  return (a - b) * stable_sigmoid((s - c) / std::abs(d)) + b;
}

Logistic4Fit fit_logistic4(std::span<const double> pred, std::span<const double> mos,
                           std::uint64_t seed, std::size_t starts) {
  require_pair(pred, mos, 5, "fit_logistic4");
  if (starts < 2) throw UsageError("fit_logistic4: needs at least 2 starts");
  const auto [pmin_it, pmax_it] = std::minmax_element(pred.begin(), pred.end());
  const auto [mmin_it, mmax_it] = std::minmax_element(mos.begin(), mos.end());
  const double pmin = *pmin_it, pmax = *pmax_it, mmin = *mmin_it, mmax = *mmax_it;
  const double prange = pmax - pmin;
  if (prange == 0.0 || mmax == mmin) throw DataError("fit_logistic4: constant input");

  const double pm = mean_of(pred), mm = mean_of(mos);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sxy += (pred[i] - pm) * (mos[i] - mm);
    sxx += (pred[i] - pm) * (pred[i] - pm);
  }
  const double slope = sxy / sxx;
  const double sd = std::sqrt(sxx / static_cast<double>(pred.size()));
  const bool increasing = slope >= 0.0;

  std::vector<Logistic4> initial;
  initial.push_back({increasing ? mmax : mmin, increasing ? mmin : mmax, pm, sd});
  const double wide = 1e3 * prange;
  initial.push_back({mm + 2.0 * wide * slope, mm - 2.0 * wide * slope, pm, wide});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  while (initial.size() < starts) {
    const bool up = unit(rng) < 0.75 ? increasing : !increasing;
    initial.push_back({up ? mmax : mmin, up ? mmin : mmax, pmin + unit(rng) * prange,
                       sd * std::exp(normal(rng))});
  }

  Logistic4Fit best;
  best.sse = std::numeric_limits<double>::infinity();
  best.starts = initial.size();
  const double min_scale = 1e-9 * prange;
  for (const auto& start : initial) {
    const auto r = levenberg_marquardt(start, pred, mos, min_scale);
    if (r.sse < best.sse) {
      best.params = r.params;
      best.sse = r.sse;
      best.converged = r.converged;
    }
  }
  if (!std::isfinite(best.sse)) throw NumericError("fit_logistic4: every start diverged");
  return best;
}

PlccResult plcc(std::span<const double> pred, std::span<const double> mos, std::uint64_t seed) {
  PlccResult out;
  out.raw_pearson = pearson(pred, mos);
  out.value = out.raw_pearson;
  if (pred.size() < 5) {
    out.fallback = true;
    out.warning = "fewer than 5 points; raw Pearson reported";
    return out;
  }
  try {
    out.fit = fit_logistic4(pred, mos, seed);
    std::vector<double> mapped(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) mapped[i] = out.fit.params(pred[i]);
    const double fitted = pearson(mapped, mos);
    if (fitted < out.raw_pearson - 1e-9) {
      out.fallback = true;
      out.warning = "fitted mapping correlates worse than the raw scores; raw Pearson reported";
    } else {
      out.value = fitted;
    }
  } catch (const Error& e) {
    out.fallback = true;
    out.warning = std::string("four-parameter fit failed (") + e.what() + "); raw Pearson reported";
  }
  return out;
}

double two_afc_score(std::span<const TwoAfcRecord> records) {
  if (records.empty()) throw DataError("two_afc_score: no records");
  double total = 0.0;
  for (const auto& rec : records) {
    if (!(rec.r >= 0.0 && rec.r <= 1.0)) {
      throw DataError("two_afc_score: vote ratio outside [0, 1]");
    }
    if (!std::isfinite(rec.d0) || !std::isfinite(rec.d1)) {
      throw DataError("two_afc_score: non-finite distance");
    }
    const double rhat = rec.d0 < rec.d1 ? 1.0 : (rec.d0 == rec.d1 ? 0.5 : 0.0);
    total += rec.r * rhat + (1.0 - rec.r) * (1.0 - rhat);
  }
  return total / static_cast<double>(records.size());
}

}  // namespace adists

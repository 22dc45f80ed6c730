#include "adists/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "adists/error.hpp"
#include "adists/synthetic.hpp"

namespace adists {

RecoveryInit parse_recovery_init(const std::string& name) {
  if (name == "noise") return RecoveryInit::Noise;
  if (name == "blur" || name == "blurred-copy") return RecoveryInit::Blur;
  throw UsageError("unknown init '" + name + "' (expected noise or blur)");
}

std::string recovery_init_name(RecoveryInit init) {
  return init == RecoveryInit::Noise ? "noise" : "blur";
}

Tensor recovery_start(const Tensor& reference, RecoveryInit init, const RecoveryOptions& options) {
  require_rank(reference, 3, "recovery_start");
  if (init == RecoveryInit::Noise) {
    return synthetic::add_gaussian_noise(reference, options.noise_sigma, options.seed);
  }
  return synthetic::gaussian_blur(reference, options.blur_sigma);
}

namespace {

template <typename A, typename B>
double psnr_impl(const A& x, const B& y) {
  require_same_shape(x, y, "psnr");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    sum += d * d;
  }
  if (sum == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(sum / static_cast<double>(x.size()));
}

double max_abs(const TensorD& t) {
  double m = 0.0;
  for (double v : t.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

double psnr(const Tensor& reference, const Tensor& image) { return psnr_impl(reference, image); }
double psnr(const TensorD& reference, const TensorD& image) { return psnr_impl(reference, image); }

RecoveryReport recover_reference(const autograd::ObjectiveEvaluator& objective,
                                 const Tensor& reference, const Tensor& start,
                                 const RecoveryOptions& options) {
  require_same_shape(reference, start, "recover_reference");
  if (objective.shape() != reference.shape()) {
    throw ShapeError("recover_reference: objective was built for another image shape");
  }
  if (!(options.armijo > 0.0 && options.armijo < 1.0)) {
    throw UsageError("recover_reference: Armijo constant must lie in (0, 1)");
  }
  if (!(options.first_step > 0.0)) throw UsageError("recover_reference: first step must be positive");

  const TensorD x = reference.cast<double>();
  TensorD y = start.cast<double>();
  for (auto& v : y.values()) v = std::clamp(v, 0.0, 1.0);

  RecoveryReport report;
  auto current = objective.evaluate(y, true);
  report.evaluations = 1;
  report.trace.push_back({0, current.value, psnr(x, y), 0.0});

  double alpha = 0.0;
  std::size_t failures = 0;
  for (std::size_t it = 1; it <= options.steps; ++it) {
    report.iterations = it - 1;
    const double gmax = max_abs(current.gradient);
    if (current.value <= 0.0 || gmax == 0.0) {
      report.stop_reason = current.value <= 0.0 ? "objective reached zero" : "zero gradient";
      break;
    }
    if (alpha == 0.0) alpha = options.first_step / gmax;

    bool accepted = false;
    TensorD trial(y.shape());
    for (std::size_t h = 0; h <= options.max_halvings; ++h, alpha *= 0.5) {
      double decrease = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        trial[i] = std::clamp(y[i] - alpha * current.gradient[i], 0.0, 1.0);
        decrease += current.gradient[i] * (y[i] - trial[i]);
      }
      if (decrease <= 0.0) break;
      const double value = objective.value(trial);
      ++report.evaluations;
      if (value <= current.value - options.armijo * decrease) {
        accepted = true;
        break;
      }
    }
    report.iterations = it;
    if (!accepted) {
      alpha = 0.0;
      if (++failures >= options.max_failures) {
        report.aborted = true;
        report.stop_reason = "line search failed " + std::to_string(failures) + " times in a row";
        break;
      }
      continue;
    }
    failures = 0;
    y = std::move(trial);
    trial = TensorD();
    current = objective.evaluate(y, true);
    ++report.evaluations;
    report.trace.push_back({it, current.value, psnr(x, y), alpha});
    alpha *= 2.0;
    if (options.target_gain_db > 0.0 &&
        report.final_psnr() - report.initial_psnr() >= options.target_gain_db) {
      report.stop_reason = "PSNR gain target reached";
      break;
    }
  }
  if (report.stop_reason.empty()) report.stop_reason = "step budget reached";
  report.image = y.cast<float>();
  return report;
}

void write_recovery_trace(const RecoveryReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trace " + path.string());
  out.precision(10);
  out << "step,value,psnr\n";
  for (const auto& s : report.trace) out << s.step << ',' << s.value << ',' << s.psnr << '\n';
  if (!out) throw DataError("failed writing trace " + path.string());
}

}  // namespace adists

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adists/autograd.hpp"

namespace adists {

enum class RecoveryInit { Noise, Blur };

RecoveryInit parse_recovery_init(const std::string& name);
std::string recovery_init_name(RecoveryInit init);

struct RecoveryOptions {
  std::size_t steps = 2000;
  double armijo = 1e-4;
  std::size_t max_halvings = 40;
  std::size_t max_failures = 20;  // consecutive failed line searches before aborting
  double first_step = 0.05;       // largest pixel change of the first trial step
  double noise_sigma = 0.1;
  double blur_sigma = 2.0;
  double target_gain_db = 0.0;  // stop once PSNR improves by this much; 0 disables
  std::uint64_t seed = 0;
};

/// Degraded starting point: x + N(0, sigma^2) clamped to [0, 1], or a
/// Gaussian-blurred copy.
Tensor recovery_start(const Tensor& reference, RecoveryInit init,
                      const RecoveryOptions& options = {});

struct RecoveryStep {
  std::size_t step = 0;
  double value = 0.0;
  double psnr = 0.0;
  double step_size = 0.0;
};

struct RecoveryReport {
  std::vector<RecoveryStep> trace;  // accepted steps only, starting with the initial image
  Tensor image;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool aborted = false;
  std::string stop_reason;

  double initial_psnr() const { return trace.front().psnr; }
  double final_psnr() const { return trace.back().psnr; }
  double final_value() const { return trace.back().value; }
};

/// Infinite when the images are equal; pixel range is [0, 1].
double psnr(const Tensor& reference, const Tensor& image);
double psnr(const TensorD& reference, const TensorD& image);

/// Projected gradient descent on objective(x_ref, y) from `start`, pixels kept
/// in [0, 1], with a halving Armijo line search. Only decreasing steps are
/// accepted, so the trace values never increase.
RecoveryReport recover_reference(const autograd::ObjectiveEvaluator& objective,
                                  const Tensor& reference, const Tensor& start,
                                  const RecoveryOptions& options = {});

/// CSV with header step,value,psnr.
void write_recovery_trace(const RecoveryReport& report, const std::filesystem::path& path);

}  // namespace adists

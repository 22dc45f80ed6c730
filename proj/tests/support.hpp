#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "adists/backbone.hpp"
#include "adists/synthetic.hpp"
#include "adists/tensor.hpp"
#include "adists/texture_model.hpp"

namespace adists::test {

template <typename T = float>
BasicTensor<T> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  BasicTensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

// Shared seed-0 synthetic backbone; the built-in params were fitted against it.
inline const Backbone& backbone() {
  static const Backbone instance(synthetic::make_archive(0));
  return instance;
}

inline const LogisticParams& params() {
  static const LogisticParams instance = default_logistic_params();
  return instance;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("adists-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace adists::test

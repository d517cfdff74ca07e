#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "maskgil/model/config.hpp"
#include "maskgil/model/model.hpp"
#include "maskgil/numerics/tensor.hpp"

namespace testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("maskgil-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

template <class T>
maskgil::numerics::Tensor<T> random_tensor(maskgil::numerics::Shape shape, std::mt19937_64& rng,
                                           double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  maskgil::numerics::Tensor<T> t(std::move(shape));
  for (auto& x : t.data()) x = static_cast<T>(nd(rng));
  return t;
}

inline maskgil::model::ModelConfig micro(maskgil::AttentionMode mode =
                                             maskgil::AttentionMode::bidirectional) {
  auto c = maskgil::model::preset_micro();
  c.attention = mode;
  return c;
}

// Micro model with weights large enough that outputs depend visibly on
// every input.
inline maskgil::model::ParametersF lively_model(const maskgil::model::ModelConfig& c,
                                                std::uint64_t seed) {
  auto cfg = c;
  cfg.init_std = 0.5;
  return maskgil::model::build_model(cfg, seed);
}

}  // namespace testing

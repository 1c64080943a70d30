#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include "semipair/config.hpp"
#include "semipair/synth.hpp"

namespace testing_support {

// A dataset small enough to train in seconds: 18 subjects at 16x16, with
// every modality present in each evaluation split.
inline semipair::SynthSpec tiny_spec(int64_t paired = 4) {
  semipair::SynthSpec s;
  s.n_subjects = 18;
  s.n_train = 10;
  s.n_val = 4;
  s.n_test = 4;
  s.n_paired = paired;
  s.height = 16;
  s.width = 16;
  s.seed = 11;
  s.tumor_axis_min = 0.15;
  s.tumor_axis_max = 0.25;
  return s;
}

inline semipair::TrainConfig tiny_config(int64_t ep1 = 1, int64_t ep2 = 1) {
  semipair::TrainConfig c;
  c.epochs_step1 = ep1;
  c.epochs_step2 = ep2;
  c.lr_flat_epochs = ep1 + ep2;
  c.batch_size = 4;
  c.base_width = 4;
  c.content_levels = 2;
  c.disc_levels = 2;
  c.seed = 3;
  c.checkpoint_interval = 0;
  return c;
}

inline semipair::NetConfig tiny_net(int64_t hw = 8) {
  semipair::NetConfig n;
  n.height = hw;
  n.width = hw;
  n.modalities = 3;
  n.regions = 2;
  n.style_dim = 4;
  n.content_levels = 2;
  n.disc_levels = 2;
  n.base_width = 3;
  n.style_mlp_width = 5;
  return n;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("semipair_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace semipair {

/// Raised for invalid arguments, malformed files and violated preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossWeights {
  double lambda_rec = 50.0;
  double lambda_seg = 100.0;
  double lambda_sty = 10.0;
  double lambda_con = 10.0;
  double lambda_tran = 100.0;
  double lambda_style_l2 = 0.01;

  void validate() const;
};

struct NetConfig {
  int64_t height = 128;
  int64_t width = 128;
  int64_t modalities = 4;
  int64_t regions = 1;
  int64_t style_dim = 8;
  int64_t content_levels = 4;  // K
  int64_t disc_levels = 4;     // P
  int64_t base_width = 32;
  int64_t style_mlp_width = 64;

  /// Throws if the image size is not divisible by 2^max(K, P).
  void validate() const;
  int64_t content_channels(int64_t level) const;  // level in [0, K]
  int64_t disc_channels(int64_t level) const;     // level in [1, P]
};

struct AugmentConfig {
  double elastic_alpha = 34.0;  // at 128 px, scaled linearly with size
  double elastic_sigma = 4.0;
  double max_shift_px = 20.0;
  double zoom_min = 0.8;
  double zoom_max = 1.2;

  /// Parameters rescaled for a square-ish image of the given width.
  AugmentConfig scaled_to(int64_t width) const;
};

struct TrainConfig {
  int64_t epochs_step1 = 20;
  int64_t epochs_step2 = 30;
  int64_t batch_size = 8;
  double lr_init = 1e-4;
  double lr_final = 1e-6;
  int64_t lr_flat_epochs = 40;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  LossWeights weights;
  int64_t n_s = 8;
  uint64_t seed = 0;
  int64_t checkpoint_interval = 10;

  int64_t content_levels = 4;
  int64_t disc_levels = 4;
  int64_t base_width = 32;

  AugmentConfig augment;

  // Ablation switches.
  bool use_content_consistency = true;
  bool use_translation_loss = true;
  bool end_to_end = false;
  bool use_disentanglement = true;

  int64_t total_epochs() const { return epochs_step1 + epochs_step2; }
  void validate() const;
};

nlohmann::json to_json(const LossWeights& w);
nlohmann::json to_json(const NetConfig& c);
nlohmann::json to_json(const TrainConfig& c);

/// Flat key-value JSON; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
NetConfig net_config_from_json(const nlohmann::json& j);

/// Applies the keys present in `j` on top of `base`.
void merge_train_config(TrainConfig& base, const nlohmann::json& j);

/// FNV-1a over the canonical (sorted-key) JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

}  // namespace semipair

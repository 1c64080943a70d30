#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "semipair/config.hpp"
#include "semipair/datamodel.hpp"
#include "semipair/networks.hpp"

namespace semipair {

/// Derives the network shape from a dataset and training configuration.
NetConfig net_config_for(const SemiPairedDataset& ds, const TrainConfig& cfg);

/// All five networks plus the configuration that produced them.
struct Model {
  NetConfig net;
  TrainConfig train;
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  std::string dataset_hash;
  int64_t epoch = 0;
  torch::ScalarType dtype = torch::kFloat32;

  /// Fresh networks; parameter initialization draws from torch's global
  /// generator seeded with `train.seed`.
  static Model create(const NetConfig& net, const TrainConfig& train, torch::ScalarType dtype = torch::kFloat32);

  nlohmann::json config_json() const;
  std::string config_hash() const;
};

/// Single archive: the five parameter sets, config JSON, config hash,
/// dataset hash and epoch counter.
void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Verifies the stored hash against the stored config, and against
/// `expected_config_hash` when given.
Model load_checkpoint(const std::filesystem::path& path,
                      const std::optional<std::string>& expected_config_hash = std::nullopt);

/// Refuses a dataset that was not the one the model was trained on.
void check_dataset_matches(const Model& model, const SemiPairedDataset& ds);

struct Batch {
  torch::Tensor images;      // [B, 1, H, W]
  torch::Tensor modalities;  // [B] long
  torch::Tensor masks;       // [B, R, H, W] in the model dtype; undefined if any sample lacks one
  std::vector<std::string> subjects;

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
};

Batch make_batch(const std::vector<const Sample*>& samples, torch::ScalarType dtype = torch::kFloat32);
Batch make_batch(const std::vector<Sample>& samples, torch::ScalarType dtype = torch::kFloat32);

/// Segmentation probabilities [N, R, H, W] through E_c and D_s only.
torch::Tensor predict(Model& model, const std::vector<const Sample*>& samples, int64_t chunk = 8);

inline constexpr double kSegThreshold = 0.5;
inline torch::Tensor binarize(const torch::Tensor& seg) { return seg.ge(kSegThreshold); }

}  // namespace semipair

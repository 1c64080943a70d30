#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "semipair/config.hpp"

namespace semipair {

struct ModalityId {
  int64_t index = 0;
  std::string name;

  friend bool operator==(const ModalityId& a, const ModalityId& b) { return a.index == b.index; }
};

enum class Split { Train, Val, Test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// One image of one modality. `image` is float32 [H, W] in [-1, 1];
/// `mask`, when present, is uint8 [R, H, W] with values in {0, 1}.
struct Sample {
  std::string subject_id;
  ModalityId modality;
  torch::Tensor image;
  std::optional<torch::Tensor> mask;
};

struct SubjectRecord {
  std::string subject_id;
  std::vector<int64_t> modalities;  // sorted, unique
  bool paired = false;
  Split split = Split::Train;
};

/// Per-modality intensity map used by the synthetic generator (see synth.hpp).
struct ModalityStyle {
  std::string name;
  double bias = -0.5;
  double gain = 0.6;
  double gamma = 1.0;
  int edema_sign = 1;
  int core_sign = 1;
};

class SemiPairedDataset {
 public:
  using Key = std::pair<std::string, int64_t>;

  int64_t height = 0;
  int64_t width = 0;
  std::vector<std::string> modality_names;
  std::vector<std::string> region_names;
  std::vector<SubjectRecord> records;
  std::map<Key, Sample> samples;

  // Present for synthetic datasets: per-subject content field [H, W] and the
  // style maps, so that the analytic translation of any subject to any
  // modality can be rendered.
  std::map<std::string, torch::Tensor> content;
  std::vector<ModalityStyle> styles;

  // Hash of the producing configuration (synth spec or "external").
  std::string config_hash;

  int64_t modality_count() const { return static_cast<int64_t>(modality_names.size()); }
  int64_t region_count() const { return static_cast<int64_t>(region_names.size()); }
  ModalityId modality(int64_t index) const;

  const Sample& sample(const std::string& subject, int64_t modality) const;
  const SubjectRecord& record(const std::string& subject) const;
  bool has_ground_truth() const { return !content.empty() && !styles.empty(); }

  /// Records of one split, in stored order.
  std::vector<const SubjectRecord*> split_records(Split s) const;
  /// Every stored sample of the subjects in one split.
  std::vector<const Sample*> split_samples(Split s) const;

  /// Throws on any violated invariant: unresolved samples, shape mismatches,
  /// out-of-range pixels, paired/unpaired modality counts, imbalance.
  void validate() const;
};

/// Assigns splits and pairing. `records` lists candidate subjects with the
/// modalities they offer. Train subjects beyond the first `n_paired`, and all
/// val/test subjects, are reduced to a single modality chosen so that
/// per-modality counts differ by at most one within each split.
std::vector<SubjectRecord> plan_splits(const std::vector<SubjectRecord>& records, int64_t modality_count,
                                       int64_t n_train, int64_t n_val, int64_t n_test, int64_t n_paired,
                                       uint64_t seed);

/// One-hot label volume [M, H, W] with plane `index` set to one.
torch::Tensor expand_modality_label(const ModalityId& m, int64_t modality_count, int64_t height, int64_t width);

/// Same as above for a batch of indices: [B, M, H, W].
torch::Tensor expand_modality_labels(const torch::Tensor& indices, int64_t modality_count, int64_t height,
                                     int64_t width, torch::ScalarType dtype = torch::kFloat32);

void save_dataset(const SemiPairedDataset& ds, const std::filesystem::path& root);
SemiPairedDataset load_dataset(const std::filesystem::path& root);

nlohmann::json manifest_json(const SemiPairedDataset& ds);

}  // namespace semipair

#pragma once

#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "semipair/datamodel.hpp"
#include "semipair/model.hpp"

namespace semipair {

/// 2|P∩G| / (|P|+|G|) over all elements; 1 when both masks are empty.
double dice_score(const torch::Tensor& pred, const torch::Tensor& gt);

struct SsimParams {
  int64_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 2.0;
};

/// Mean local SSIM of two [H, W] images over the valid window positions.
double ssim(const torch::Tensor& x, const torch::Tensor& y, const SsimParams& p = {});

struct SegReport {
  std::vector<std::string> modalities;
  std::vector<std::string> regions;
  std::vector<std::vector<double>> dice;  // [region][modality]
  std::vector<int64_t> counts;            // samples per modality

  double aver(size_t region) const;
  nlohmann::json to_json() const;
  static SegReport from_json(const nlohmann::json& j);
  /// One row per region, one column per modality plus "Aver".
  std::string table() const;
};

struct TransReport {
  std::vector<std::string> modalities;  // target modalities
  std::vector<double> ssim;             // NaN when a target received no translations
  std::vector<int64_t> counts;

  double average() const;
  nlohmann::json to_json() const;
  static TransReport from_json(const nlohmann::json& j);
  std::string table() const;
};

struct StyleStats {
  double max = 0.0, min = 0.0, mean = 0.0;
  int64_t count = 0;

  nlohmann::json to_json() const;
  static StyleStats from_json(const nlohmann::json& j);
};

SegReport evaluate_segmentation(Model& model, const SemiPairedDataset& ds, Split split);
/// Same table from binary predictions [N, R, H, W] aligned with `samples`.
SegReport segmentation_report(const SemiPairedDataset& ds, const std::vector<const Sample*>& samples,
                              const torch::Tensor& binary_pred);

/// Translates every stored sample of the split to every other modality and
/// scores it against the analytic target. The target style is the mean code
/// of that modality's stored samples in the split.
TransReport evaluate_translation(Model& model, const SemiPairedDataset& ds, Split split);

/// Mean style code per modality over the stored samples of a split, [M, n_s].
torch::Tensor mean_style_codes(Model& model, const SemiPairedDataset& ds, Split split);

/// Translates one sample to `target_modality` with the given style code.
torch::Tensor translate(Model& model, const Sample& sample, const torch::Tensor& style);

struct Interpolation {
  std::vector<double> values;
  std::vector<torch::Tensor> images;  // [H, W] each
  std::vector<torch::Tensor> segs;    // [R, H, W] each
};

Interpolation interpolate_style(Model& model, const Sample& sample, int64_t dim, double lo, double hi, int64_t steps);

StyleStats style_statistics(Model& model, const std::vector<const Sample*>& samples);

struct ContentProbe {
  double paired = 0.0;  // same subject, different modality
  double random = 0.0;  // different subject, different modality
  int64_t paired_count = 0, random_count = 0;

  double ratio() const { return paired / random; }
};

/// Mean bottleneck L1 distance between content codes of the same subject in
/// two modalities, against random cross-subject couples.
ContentProbe content_distance_probe(Model& model, const SemiPairedDataset& ds, Split split, uint64_t seed);

}  // namespace semipair

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "semipair/datamodel.hpp"

namespace semipair {

// Content fields are scalar maps u(y, x) in [0, 1] partitioned into disjoint
// bands: 0 outside the head, tissue in [0.15, 0.55], edema in [0.65, 0.80]
// and tumor core in [0.85, 1.0]. Each modality's style maps every band onto
// its own disjoint intensity interval, so the map is invertible and the
// tumor may appear bright or dark depending on the modality.
namespace bands {
inline constexpr double kTissueLo = 0.15, kTissueHi = 0.55;
inline constexpr double kEdemaLo = 0.65, kEdemaHi = 0.80;
inline constexpr double kCoreLo = 0.85, kCoreHi = 1.0;
// Output intervals shared by all modalities.
inline constexpr double kTissueOutLo = -0.6, kTissueOutHi = 0.2;
inline constexpr double kBrightEdemaLo = 0.25, kBrightEdemaHi = 0.45;
inline constexpr double kBrightCoreLo = 0.55, kBrightCoreHi = 0.95;
inline constexpr double kDarkEdemaLo = -0.75, kDarkEdemaHi = -0.65;  // edema maps downward from -0.65
inline constexpr double kDarkCoreLo = -0.95, kDarkCoreHi = -0.8;
}  // namespace bands

struct SynthSpec {
  int64_t n_subjects = 120;
  int64_t n_train = 80;
  int64_t n_val = 20;
  int64_t n_test = 20;
  int64_t n_paired = 24;
  int64_t height = 64;
  int64_t width = 64;
  uint64_t seed = 7;

  // Geometry, as fractions of the image width.
  double head_axis_min = 0.36, head_axis_max = 0.46;
  double tumor_axis_min = 0.09, tumor_axis_max = 0.2;
  double core_ratio_min = 0.35, core_ratio_max = 0.6;

  std::vector<ModalityStyle> styles = default_styles();

  static std::vector<ModalityStyle> default_styles();
  int64_t modality_count() const { return static_cast<int64_t>(styles.size()); }
  void validate() const;
};

nlohmann::json to_json(const SynthSpec& s);
/// Flat keys plus an optional "styles" array; unknown keys are rejected.
void merge_synth_spec(SynthSpec& s, const nlohmann::json& j);

/// Applies one modality's style to a content field (float32 [H, W]).
torch::Tensor apply_style(const torch::Tensor& content, const ModalityStyle& style);
/// Inverse of apply_style on its image.
torch::Tensor invert_style(const torch::Tensor& image, const ModalityStyle& style);

/// Region masks [2, H, W] (whole tumor, tumor core) from a content field.
torch::Tensor content_masks(const torch::Tensor& content);

/// Renders the analytic image of `subject` in `modality` (requires ground truth).
torch::Tensor ground_truth_image(const SemiPairedDataset& ds, const std::string& subject, int64_t modality);

/// Deterministic synthetic dataset: identical specs give bit-identical output.
SemiPairedDataset synth_generate(const SynthSpec& spec);

/// A single content field; exposed for tests.
torch::Tensor synth_content_field(const SynthSpec& spec, uint64_t subject_seed);

}  // namespace semipair

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include <json.hpp>
#include <torch/torch.h>

#include "semipair/config.hpp"
#include "semipair/datamodel.hpp"
#include "semipair/rng.hpp"

namespace semipair {

enum class AugmentKind { HFlip, VFlip, Rotate, Zoom, Elastic, Shift };
inline constexpr int kAugmentKinds = 6;

std::string to_string(AugmentKind k);

/// One geometric augmentation. Only the fields relevant to `kind` are used.
struct AugmentOp {
  AugmentKind kind = AugmentKind::HFlip;
  double angle_deg = 0.0;  // rotate, [0, 360)
  double ratio = 1.0;      // zoom, [0.8, 1.2]
  double alpha = 34.0;     // elastic displacement scale (px)
  double sigma = 4.0;      // elastic smoothing width (px)
  uint64_t seed = 0;       // elastic displacement field
  int64_t dx = 0, dy = 0;  // shift, |d| <= 20

  static AugmentOp hflip() { return {AugmentKind::HFlip}; }
  static AugmentOp vflip() { return {AugmentKind::VFlip}; }
  static AugmentOp rotate(double deg) {
    AugmentOp op{AugmentKind::Rotate};
    op.angle_deg = deg;
    return op;
  }
  static AugmentOp zoom(double r) {
    AugmentOp op{AugmentKind::Zoom};
    op.ratio = r;
    return op;
  }
  static AugmentOp elastic(double alpha, double sigma, uint64_t seed) {
    AugmentOp op{AugmentKind::Elastic};
    op.alpha = alpha;
    op.sigma = sigma;
    op.seed = seed;
    return op;
  }
  static AugmentOp shift(int64_t dx, int64_t dy) {
    AugmentOp op{AugmentKind::Shift};
    op.dx = dx;
    op.dy = dy;
    return op;
  }

  void validate() const;
};

nlohmann::json to_json(const AugmentOp& op);

/// Applies `op` to an image [H, W] in [-1, 1] and optionally to its mask
/// [R, H, W]. Images are resampled bilinearly with -1 fill and clipped to
/// [-1, 1]; masks use nearest-neighbor sampling with 0 fill.
std::pair<torch::Tensor, std::optional<torch::Tensor>> apply(const AugmentOp& op, const torch::Tensor& image,
                                                             const std::optional<torch::Tensor>& mask = std::nullopt);

struct ViewPair {
  Sample view1, view2;
  AugmentOp op1, op2;
  std::string source_subject;
  ModalityId modality;
};

/// Draws a random op of the given kind; parameters follow `cfg`.
AugmentOp random_op(AugmentKind kind, const AugmentConfig& cfg, Rng& rng);

/// Two distinct op kinds drawn uniformly, each applied to `sample`.
ViewPair make_view_pair(const Sample& sample, const AugmentConfig& cfg, Rng& rng);

}  // namespace semipair

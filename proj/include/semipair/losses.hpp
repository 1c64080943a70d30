#pragma once

#include <map>
#include <optional>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "semipair/config.hpp"
#include "semipair/networks.hpp"

namespace semipair {

inline constexpr double kDiceEpsilon = 1e-7;
inline constexpr double kProbClamp = 1e-12;

// All expectations are arithmetic means over batch, patch and pixel positions.
//
// The probability-domain functions below are the literal objectives; the
// *_logits variants evaluate the same quantities from pre-activation outputs
// and are what the trainer differentiates.

/// E[log D(real)] + 1/2 E[log(1 - D(recon))] + 1/2 E[log(1 - D(trans))].
/// Probabilities must lie strictly inside (0, 1). Without a translation term
/// (intra-modality pattern) that term vanishes.
torch::Tensor adversarial_loss(const torch::Tensor& d_real_src, const torch::Tensor& d_fake_recon_src,
                               const std::optional<torch::Tensor>& d_fake_trans_src = std::nullopt);
torch::Tensor adversarial_loss_logits(const torch::Tensor& real_logits, const torch::Tensor& recon_logits,
                                      const std::optional<torch::Tensor>& trans_logits = std::nullopt);

/// Non-saturating generator surrogate: -1/2 E[log D(recon)] - 1/2 E[log D(trans)].
torch::Tensor generator_adversarial_loss_logits(const torch::Tensor& recon_logits,
                                                const std::optional<torch::Tensor>& trans_logits = std::nullopt);

/// -E[log D_cls(m | x)] over real images; `cls` holds probabilities [B, M].
torch::Tensor cls_loss_real(const torch::Tensor& cls, const torch::Tensor& labels);
torch::Tensor cls_loss_real_logits(const torch::Tensor& cls_logits, const torch::Tensor& labels);

/// 1/2 E[-log D_cls(m_a | x_{a->a})] + 1/2 E[-log D_cls(m_b | x_{a->b})].
torch::Tensor cls_loss_fake(const torch::Tensor& cls_recon, const torch::Tensor& labels_recon,
                            const std::optional<torch::Tensor>& cls_trans = std::nullopt,
                            const std::optional<torch::Tensor>& labels_trans = std::nullopt);
torch::Tensor cls_loss_fake_logits(const torch::Tensor& logits_recon, const torch::Tensor& labels_recon,
                                   const std::optional<torch::Tensor>& logits_trans = std::nullopt,
                                   const std::optional<torch::Tensor>& labels_trans = std::nullopt);

/// Mean absolute difference.
torch::Tensor reconstruction_loss(const torch::Tensor& x_recon, const torch::Tensor& x);

/// -(2 sum l p) / (sum(l^2 + p^2) + eps) over all elements.
torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& label);
/// dice_loss per (sample, region) of [B, R, H, W] maps, averaged.
torch::Tensor dice_loss_batch(const torch::Tensor& pred, const torch::Tensor& label);

torch::Tensor style_consistency_loss(const torch::Tensor& s1, const torch::Tensor& s2);

/// Mean absolute difference of the bottleneck maps.
torch::Tensor content_consistency_loss(const ContentCode& a, const ContentCode& b);
torch::Tensor content_consistency_loss(const torch::Tensor& bottleneck_a, const torch::Tensor& bottleneck_b);

torch::Tensor supervised_translation_loss(const torch::Tensor& x_ab, const torch::Tensor& x_b);

/// Mean of squared style entries.
torch::Tensor style_l2_regularizer(const torch::Tensor& styles);

enum class Pattern { Intra, PairedInter, UnpairedInter };
std::string to_string(Pattern p);

struct GeneratorTerms {
  std::optional<torch::Tensor> adv;  // generator-side adversarial term
  std::optional<torch::Tensor> cls_f;
  std::optional<torch::Tensor> rec;
  std::optional<torch::Tensor> seg;
  std::optional<torch::Tensor> style_l2;
  std::optional<torch::Tensor> sty;
  std::optional<torch::Tensor> con;
  std::optional<torch::Tensor> tran;
};

/// Weight of every generator term admitted by `pattern`. A term whose weight
/// is zero is optional.
std::map<std::string, double> generator_weights(Pattern pattern, const LossWeights& w);
inline std::map<std::string, double> discriminator_weights() { return {{"adv", -1.0}, {"cls_r", 1.0}}; }

/// L_D = -L_adv + L^r_cls.
torch::Tensor compose_L_D(const torch::Tensor& adv, const torch::Tensor& cls_r);

/// L_G (common), L_G + lambda_sty L_sty (intra) or L_G + lambda_con L_con +
/// lambda_tran L_tran (paired inter). Missing required terms, or terms the
/// pattern does not admit, raise.
torch::Tensor compose_L_G(Pattern pattern, const GeneratorTerms& terms, const LossWeights& w);

/// One optimization step's scalar terms and composites.
struct LossReport {
  int64_t epoch = 0;
  int64_t step = 0;
  std::string phase;
  std::string pattern;
  double lr = 0.0;
  std::map<std::string, double> terms;
  std::map<std::string, double> g_weights;
  std::map<std::string, double> d_weights;
  double L_D = 0.0;
  double L_G = 0.0;

  bool has(const std::string& term) const { return terms.count(term) > 0; }
  double recompose_G() const;
  double recompose_D() const;
  nlohmann::json to_json() const;
  static LossReport from_json(const nlohmann::json& j);
};

}  // namespace semipair

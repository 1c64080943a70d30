#include "semipair/losses.hpp"

#include <cmath>

namespace semipair {

namespace F = torch::nn::functional;

namespace {

void same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw Error(std::string(what) + ": shape mismatch");
}

void check_open_unit(const torch::Tensor& p, const char* what) {
  if (p.numel() == 0) throw Error(std::string(what) + ": empty input");
  if (p.le(0).any().item<bool>() || p.ge(1).any().item<bool>()) {
    throw Error(std::string(what) + ": probabilities must lie in (0, 1)");
  }
}

torch::Tensor target_log_prob(const torch::Tensor& probs, const torch::Tensor& labels) {
  if (probs.dim() != 2 || labels.dim() != 1 || probs.size(0) != labels.size(0)) {
    throw Error("classification loss expects [B, M] probabilities and [B] labels");
  }
  auto picked = probs.gather(1, labels.to(torch::kLong).unsqueeze(1)).squeeze(1);
  return torch::log(picked.clamp_min(kProbClamp));
}

}  // namespace

torch::Tensor adversarial_loss(const torch::Tensor& d_real_src, const torch::Tensor& d_fake_recon_src,
                               const std::optional<torch::Tensor>& d_fake_trans_src) {
  check_open_unit(d_real_src, "adversarial_loss");
  check_open_unit(d_fake_recon_src, "adversarial_loss");
  auto loss = torch::log(d_real_src).mean() + 0.5 * torch::log1p(-d_fake_recon_src).mean();
  if (d_fake_trans_src) {
    check_open_unit(*d_fake_trans_src, "adversarial_loss");
    loss = loss + 0.5 * torch::log1p(-*d_fake_trans_src).mean();
  }
  return loss;
}

torch::Tensor adversarial_loss_logits(const torch::Tensor& real_logits, const torch::Tensor& recon_logits,
                                      const std::optional<torch::Tensor>& trans_logits) {
  // log sigmoid(z) and log(1 - sigmoid(z)) = log sigmoid(-z).
  auto loss = F::logsigmoid(real_logits).mean() + 0.5 * F::logsigmoid(-recon_logits).mean();
  if (trans_logits) loss = loss + 0.5 * F::logsigmoid(-*trans_logits).mean();
  return loss;
}

torch::Tensor generator_adversarial_loss_logits(const torch::Tensor& recon_logits,
                                                const std::optional<torch::Tensor>& trans_logits) {
  auto loss = -0.5 * F::logsigmoid(recon_logits).mean();
  if (trans_logits) loss = loss - 0.5 * F::logsigmoid(*trans_logits).mean();
  return loss;
}

torch::Tensor cls_loss_real(const torch::Tensor& cls, const torch::Tensor& labels) {
  return -target_log_prob(cls, labels).mean();
}

torch::Tensor cls_loss_real_logits(const torch::Tensor& cls_logits, const torch::Tensor& labels) {
  return F::cross_entropy(cls_logits, labels.to(torch::kLong));
}

torch::Tensor cls_loss_fake(const torch::Tensor& cls_recon, const torch::Tensor& labels_recon,
                            const std::optional<torch::Tensor>& cls_trans,
                            const std::optional<torch::Tensor>& labels_trans) {
  if (cls_trans.has_value() != labels_trans.has_value()) throw Error("cls_loss_fake: translation term incomplete");
  auto loss = -0.5 * target_log_prob(cls_recon, labels_recon).mean();
  if (cls_trans) loss = loss - 0.5 * target_log_prob(*cls_trans, *labels_trans).mean();
  return loss;
}

torch::Tensor cls_loss_fake_logits(const torch::Tensor& logits_recon, const torch::Tensor& labels_recon,
                                   const std::optional<torch::Tensor>& logits_trans,
                                   const std::optional<torch::Tensor>& labels_trans) {
  if (logits_trans.has_value() != labels_trans.has_value()) {
    throw Error("cls_loss_fake: translation term incomplete");
  }
  auto loss = 0.5 * F::cross_entropy(logits_recon, labels_recon.to(torch::kLong));
  if (logits_trans) loss = loss + 0.5 * F::cross_entropy(*logits_trans, labels_trans->to(torch::kLong));
  return loss;
}

torch::Tensor reconstruction_loss(const torch::Tensor& x_recon, const torch::Tensor& x) {
  same_shape(x_recon, x, "reconstruction_loss");
  return (x_recon - x).abs().mean();
}

torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& label) {
  same_shape(pred, label, "dice_loss");
  auto l = label.to(pred.scalar_type());
  return -2.0 * (l * pred).sum() / ((l * l + pred * pred).sum() + kDiceEpsilon);
}

torch::Tensor dice_loss_batch(const torch::Tensor& pred, const torch::Tensor& label) {
  same_shape(pred, label, "dice_loss");
  if (pred.dim() < 2) throw Error("dice_loss_batch expects [B, R, ...] maps");
  auto p = pred.flatten(2);
  auto l = label.to(pred.scalar_type()).flatten(2);
  auto per = -2.0 * (l * p).sum(2) / ((l * l + p * p).sum(2) + kDiceEpsilon);
  return per.mean();
}

torch::Tensor style_consistency_loss(const torch::Tensor& s1, const torch::Tensor& s2) {
  same_shape(s1, s2, "style_consistency_loss");
  return (s1 - s2).abs().mean();
}

torch::Tensor content_consistency_loss(const torch::Tensor& bottleneck_a, const torch::Tensor& bottleneck_b) {
  same_shape(bottleneck_a, bottleneck_b, "content_consistency_loss");
  return (bottleneck_a - bottleneck_b).abs().mean();
}

torch::Tensor content_consistency_loss(const ContentCode& a, const ContentCode& b) {
  if (a.levels() != b.levels()) throw Error("content_consistency_loss: pyramid depth mismatch");
  return content_consistency_loss(a.bottleneck(), b.bottleneck());
}

torch::Tensor supervised_translation_loss(const torch::Tensor& x_ab, const torch::Tensor& x_b) {
  same_shape(x_ab, x_b, "supervised_translation_loss");
  return (x_ab - x_b).abs().mean();
}

torch::Tensor style_l2_regularizer(const torch::Tensor& styles) { return styles.square().mean(); }

std::string to_string(Pattern p) {
  switch (p) {
    case Pattern::Intra:
      return "intra";
    case Pattern::PairedInter:
      return "paired";
    case Pattern::UnpairedInter:
      return "unpaired";
  }
  return "?";
}

std::map<std::string, double> generator_weights(Pattern pattern, const LossWeights& w) {
  std::map<std::string, double> out{{"adv_g", 1.0},
                                    {"cls_f", 1.0},
                                    {"rec", w.lambda_rec},
                                    {"seg", w.lambda_seg},
                                    {"style_l2", w.lambda_style_l2}};
  if (pattern == Pattern::Intra) out["sty"] = w.lambda_sty;
  if (pattern == Pattern::PairedInter) {
    out["con"] = w.lambda_con;
    out["tran"] = w.lambda_tran;
  }
  return out;
}

torch::Tensor compose_L_D(const torch::Tensor& adv, const torch::Tensor& cls_r) { return -adv + cls_r; }

torch::Tensor compose_L_G(Pattern pattern, const GeneratorTerms& t, const LossWeights& w) {
  const auto weights = generator_weights(pattern, w);
  const std::pair<const char*, const std::optional<torch::Tensor>*> slots[] = {
      {"adv_g", &t.adv}, {"cls_f", &t.cls_f},       {"rec", &t.rec}, {"seg", &t.seg},
      {"style_l2", &t.style_l2}, {"sty", &t.sty}, {"con", &t.con}, {"tran", &t.tran}};
  torch::Tensor total;
  for (const auto& [name, slot] : slots) {
    auto it = weights.find(name);
    if (it == weights.end()) {
      if (slot->has_value()) {
        throw Error(std::string("term '") + name + "' is not part of the " + to_string(pattern) + " objective");
      }
      continue;
    }
    if (!slot->has_value()) {
      if (it->second != 0.0) {
        throw Error(std::string("missing term '") + name + "' for the " + to_string(pattern) + " objective");
      }
      continue;
    }
    auto contrib = (*slot)->mul(it->second);
    total = total.defined() ? total + contrib : contrib;
  }
  return total;
}

double LossReport::recompose_G() const {
  double s = 0.0;
  for (const auto& [name, wt] : g_weights) {
    if (auto it = terms.find(name); it != terms.end()) s += wt * it->second;
  }
  return s;
}

double LossReport::recompose_D() const {
  double s = 0.0;
  for (const auto& [name, wt] : d_weights) {
    if (auto it = terms.find(name); it != terms.end()) s += wt * it->second;
  }
  return s;
}

nlohmann::json LossReport::to_json() const {
  return {{"epoch", epoch},     {"step", step},         {"phase", phase},       {"pattern", pattern},
          {"lr", lr},           {"terms", terms},       {"g_weights", g_weights}, {"d_weights", d_weights},
          {"L_D", L_D},         {"L_G", L_G}};
}

LossReport LossReport::from_json(const nlohmann::json& j) {
  LossReport r;
  r.epoch = j.at("epoch").get<int64_t>();
  r.step = j.at("step").get<int64_t>();
  r.phase = j.at("phase").get<std::string>();
  r.pattern = j.at("pattern").get<std::string>();
  r.lr = j.at("lr").get<double>();
  r.terms = j.at("terms").get<std::map<std::string, double>>();
  r.g_weights = j.at("g_weights").get<std::map<std::string, double>>();
  r.d_weights = j.at("d_weights").get<std::map<std::string, double>>();
  r.L_D = j.at("L_D").get<double>();
  r.L_G = j.at("L_G").get<double>();
  return r;
}

}  // namespace semipair

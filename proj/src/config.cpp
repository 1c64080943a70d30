#include "semipair/config.hpp"

#include <algorithm>
#include <cstdio>

namespace semipair {

using nlohmann::json;

void LossWeights::validate() const {
  for (double w : {lambda_rec, lambda_seg, lambda_sty, lambda_con, lambda_tran, lambda_style_l2}) {
    if (!(w >= 0.0)) throw Error("loss weights must be non-negative");
  }
}

void NetConfig::validate() const {
  if (height <= 0 || width <= 0) throw Error("image size must be positive");
  if (modalities < 1) throw Error("need at least one modality");
  if (regions < 1) throw Error("need at least one segmentation region");
  if (style_dim < 1) throw Error("style dimension must be positive");
  if (content_levels < 1 || disc_levels < 1) throw Error("network depths must be positive");
  if (base_width < 1) throw Error("base width must be positive");
  const int64_t depth = std::max(content_levels, disc_levels);
  const int64_t div = int64_t{1} << depth;
  if (height % div != 0 || width % div != 0) {
    throw Error("image size " + std::to_string(height) + "x" + std::to_string(width) +
                " is not divisible by 2^" + std::to_string(depth));
  }
}

int64_t NetConfig::content_channels(int64_t level) const {
  if (level <= 0) return base_width;
  return base_width * (int64_t{1} << std::min<int64_t>(level - 1, 3));
}

int64_t NetConfig::disc_channels(int64_t level) const {
  return base_width * (int64_t{1} << std::min<int64_t>(level - 1, 3));
}

AugmentConfig AugmentConfig::scaled_to(int64_t width) const {
  AugmentConfig out = *this;
  const double f = static_cast<double>(width) / 128.0;
  out.elastic_alpha *= f;
  out.elastic_sigma *= f;
  out.max_shift_px *= f;
  return out;
}

void TrainConfig::validate() const {
  if (epochs_step1 < 0 || epochs_step2 < 0 || total_epochs() < 1) throw Error("invalid epoch budget");
  if (lr_flat_epochs < 0 || lr_flat_epochs > total_epochs()) {
    throw Error("lr_flat_epochs must lie in [0, total epochs]");
  }
  if (batch_size < 1) throw Error("batch_size must be positive");
  if (!(lr_init > 0.0) || !(lr_final > 0.0)) throw Error("learning rates must be positive");
  if (n_s < 1) throw Error("n_s must be positive");
  if (checkpoint_interval < 0) throw Error("checkpoint_interval must be non-negative");
  weights.validate();
}

json to_json(const LossWeights& w) {
  return json{{"lambda_rec", w.lambda_rec},   {"lambda_seg", w.lambda_seg},
              {"lambda_sty", w.lambda_sty},   {"lambda_con", w.lambda_con},
              {"lambda_tran", w.lambda_tran}, {"lambda_style_l2", w.lambda_style_l2}};
}

json to_json(const NetConfig& c) {
  return json{{"height", c.height},
              {"width", c.width},
              {"modalities", c.modalities},
              {"regions", c.regions},
              {"style_dim", c.style_dim},
              {"content_levels", c.content_levels},
              {"disc_levels", c.disc_levels},
              {"base_width", c.base_width},
              {"style_mlp_width", c.style_mlp_width}};
}

json to_json(const TrainConfig& c) {
  json j{{"epochs_step1", c.epochs_step1},
         {"epochs_step2", c.epochs_step2},
         {"batch_size", c.batch_size},
         {"lr_init", c.lr_init},
         {"lr_final", c.lr_final},
         {"lr_flat_epochs", c.lr_flat_epochs},
         {"adam_beta1", c.adam_beta1},
         {"adam_beta2", c.adam_beta2},
         {"n_s", c.n_s},
         {"seed", c.seed},
         {"checkpoint_interval", c.checkpoint_interval},
         {"content_levels", c.content_levels},
         {"disc_levels", c.disc_levels},
         {"base_width", c.base_width},
         {"elastic_alpha", c.augment.elastic_alpha},
         {"elastic_sigma", c.augment.elastic_sigma},
         {"max_shift_px", c.augment.max_shift_px},
         {"zoom_min", c.augment.zoom_min},
         {"zoom_max", c.augment.zoom_max},
         {"use_content_consistency", c.use_content_consistency},
         {"use_translation_loss", c.use_translation_loss},
         {"end_to_end", c.end_to_end},
         {"use_disentanglement", c.use_disentanglement}};
  j.update(to_json(c.weights));
  return j;
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      dst = it->get<T>();
    } catch (const json::exception& e) {
      throw Error(std::string("config key '") + key + "': " + e.what());
    }
  }
}

}  // namespace

void merge_train_config(TrainConfig& c, const json& j) {
  if (!j.is_object()) throw Error("config must be a flat JSON object");
  const json known = to_json(TrainConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error("unknown config key '" + key + "'");
  }
  take(j, "epochs_step1", c.epochs_step1);
  take(j, "epochs_step2", c.epochs_step2);
  take(j, "batch_size", c.batch_size);
  take(j, "lr_init", c.lr_init);
  take(j, "lr_final", c.lr_final);
  take(j, "lr_flat_epochs", c.lr_flat_epochs);
  take(j, "adam_beta1", c.adam_beta1);
  take(j, "adam_beta2", c.adam_beta2);
  take(j, "n_s", c.n_s);
  take(j, "seed", c.seed);
  take(j, "checkpoint_interval", c.checkpoint_interval);
  take(j, "content_levels", c.content_levels);
  take(j, "disc_levels", c.disc_levels);
  take(j, "base_width", c.base_width);
  take(j, "elastic_alpha", c.augment.elastic_alpha);
  take(j, "elastic_sigma", c.augment.elastic_sigma);
  take(j, "max_shift_px", c.augment.max_shift_px);
  take(j, "zoom_min", c.augment.zoom_min);
  take(j, "zoom_max", c.augment.zoom_max);
  take(j, "use_content_consistency", c.use_content_consistency);
  take(j, "use_translation_loss", c.use_translation_loss);
  take(j, "end_to_end", c.end_to_end);
  take(j, "use_disentanglement", c.use_disentanglement);
  take(j, "lambda_rec", c.weights.lambda_rec);
  take(j, "lambda_seg", c.weights.lambda_seg);
  take(j, "lambda_sty", c.weights.lambda_sty);
  take(j, "lambda_con", c.weights.lambda_con);
  take(j, "lambda_tran", c.weights.lambda_tran);
  take(j, "lambda_style_l2", c.weights.lambda_style_l2);
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  merge_train_config(c, j);
  c.validate();
  return c;
}

NetConfig net_config_from_json(const json& j) {
  NetConfig c;
  take(j, "height", c.height);
  take(j, "width", c.width);
  take(j, "modalities", c.modalities);
  take(j, "regions", c.regions);
  take(j, "style_dim", c.style_dim);
  take(j, "content_levels", c.content_levels);
  take(j, "disc_levels", c.disc_levels);
  take(j, "base_width", c.base_width);
  take(j, "style_mlp_width", c.style_mlp_width);
  c.validate();
  return c;
}

std::string config_hash(const json& j) {
  // nlohmann::json objects are std::map backed, so dump() is key-sorted.
  const std::string text = j.dump();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace semipair

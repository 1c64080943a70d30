#include "semipair/model.hpp"

namespace semipair {

namespace fs = std::filesystem;
using nlohmann::json;

NetConfig net_config_for(const SemiPairedDataset& ds, const TrainConfig& cfg) {
  NetConfig net;
  net.height = ds.height;
  net.width = ds.width;
  net.modalities = ds.modality_count();
  net.regions = ds.region_count();
  net.style_dim = cfg.n_s;
  net.content_levels = cfg.content_levels;
  net.disc_levels = cfg.disc_levels;
  net.base_width = cfg.base_width;
  net.validate();
  return net;
}

Model Model::create(const NetConfig& net, const TrainConfig& train, torch::ScalarType dtype) {
  net.validate();
  train.validate();
  if (net.style_dim != train.n_s) throw Error("network style_dim differs from n_s");
  torch::manual_seed(train.seed);
  Model m;
  m.net = net;
  m.train = train;
  m.dtype = dtype;
  m.generator = Generator(net);
  m.discriminator = Discriminator(net);
  m.generator->to(dtype);
  m.discriminator->to(dtype);
  return m;
}

json Model::config_json() const { return json{{"net", to_json(net)}, {"train", to_json(train)}}; }

std::string Model::config_hash() const { return semipair::config_hash(config_json()); }

namespace {

void save_module(torch::serialize::OutputArchive& root, const char* key, const torch::nn::Module& module) {
  torch::serialize::OutputArchive sub;
  module.save(sub);
  root.write(key, sub);
}

void load_module(torch::serialize::InputArchive& root, const char* key, torch::nn::Module& module) {
  torch::serialize::InputArchive sub;
  if (!root.try_read(key, sub)) throw Error(std::string("checkpoint lacks network '") + key + "'");
  module.load(sub);
}

}  // namespace

void save_checkpoint(const Model& model, const fs::path& path) {
  torch::serialize::OutputArchive archive;
  archive.write("format", c10::IValue(std::string("semipair-checkpoint-v1")));
  archive.write("config", c10::IValue(model.config_json().dump()));
  archive.write("config_hash", c10::IValue(model.config_hash()));
  archive.write("dataset_hash", c10::IValue(model.dataset_hash));
  archive.write("epoch", c10::IValue(model.epoch));
  archive.write("dtype", c10::IValue(static_cast<int64_t>(model.dtype)));
  save_module(archive, "E_s", *model.generator->style_encoder);
  save_module(archive, "E_c", *model.generator->content_encoder);
  save_module(archive, "D_t", *model.generator->translation_decoder);
  save_module(archive, "D_s", *model.generator->segmentation_decoder);
  save_module(archive, "D", *model.discriminator);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  archive.save_to(path.string());
}

Model load_checkpoint(const fs::path& path, const std::optional<std::string>& expected_config_hash) {
  if (!fs::exists(path)) throw Error("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw Error("cannot read checkpoint " + path.string());
  }
  c10::IValue v;
  auto read_string = [&](const char* key) {
    if (!archive.try_read(key, v) || !v.isString()) throw Error(std::string("checkpoint lacks '") + key + "'");
    return v.toStringRef();
  };
  if (read_string("format") != "semipair-checkpoint-v1") throw Error("unsupported checkpoint format");
  const json cfg = json::parse(read_string("config"));
  const std::string stored_hash = read_string("config_hash");
  if (semipair::config_hash(cfg) != stored_hash) throw Error("checkpoint config hash does not match its config");
  if (expected_config_hash && *expected_config_hash != stored_hash) {
    throw Error("checkpoint config hash " + stored_hash + " differs from expected " + *expected_config_hash);
  }
  const NetConfig net = net_config_from_json(cfg.at("net"));
  const TrainConfig train = train_config_from_json(cfg.at("train"));
  if (!archive.try_read("dtype", v)) throw Error("checkpoint lacks 'dtype'");
  const auto dtype = static_cast<torch::ScalarType>(v.toInt());

  Model m = Model::create(net, train, dtype);
  m.dataset_hash = read_string("dataset_hash");
  if (!archive.try_read("epoch", v)) throw Error("checkpoint lacks 'epoch'");
  m.epoch = v.toInt();
  load_module(archive, "E_s", *m.generator->style_encoder);
  load_module(archive, "E_c", *m.generator->content_encoder);
  load_module(archive, "D_t", *m.generator->translation_decoder);
  load_module(archive, "D_s", *m.generator->segmentation_decoder);
  load_module(archive, "D", *m.discriminator);
  return m;
}

void check_dataset_matches(const Model& model, const SemiPairedDataset& ds) {
  if (model.dataset_hash != ds.config_hash) {
    throw Error("dataset hash " + ds.config_hash + " differs from the checkpoint's training dataset " +
                model.dataset_hash);
  }
  if (ds.height != model.net.height || ds.width != model.net.width || ds.modality_count() != model.net.modalities) {
    throw Error("dataset geometry does not match the model");
  }
}

Batch make_batch(const std::vector<const Sample*>& samples, torch::ScalarType dtype) {
  if (samples.empty()) throw Error("empty batch");
  std::vector<torch::Tensor> images, masks;
  std::vector<int64_t> mods;
  Batch b;
  bool all_masks = true;
  for (const Sample* s : samples) {
    images.push_back(s->image);
    mods.push_back(s->modality.index);
    b.subjects.push_back(s->subject_id);
    if (s->mask) {
      masks.push_back(*s->mask);
    } else {
      all_masks = false;
    }
  }
  b.images = torch::stack(images).unsqueeze(1).to(dtype);
  b.modalities = torch::tensor(mods, torch::kLong);
  if (all_masks) b.masks = torch::stack(masks).to(dtype);
  return b;
}

Batch make_batch(const std::vector<Sample>& samples, torch::ScalarType dtype) {
  std::vector<const Sample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(ptrs, dtype);
}

torch::Tensor predict(Model& model, const std::vector<const Sample*>& samples, int64_t chunk) {
  if (samples.empty()) throw Error("nothing to predict");
  for (const Sample* s : samples) {
    if (s->modality.index < 0 || s->modality.index >= model.net.modalities) {
      throw Error("sample '" + s->subject_id + "' has unknown modality index " + std::to_string(s->modality.index));
    }
  }
  torch::NoGradGuard no_grad;
  // oneDNN picks convolution algorithms by batch size, which breaks bitwise
  // agreement between batched and single-sample predictions.
  const bool mkldnn = at::globalContext().userEnabledMkldnn();
  at::globalContext().setUserEnabledMkldnn(false);
  model.generator->eval();
  std::vector<torch::Tensor> out;
  for (size_t i = 0; i < samples.size(); i += static_cast<size_t>(chunk)) {
    const size_t end = std::min(samples.size(), i + static_cast<size_t>(chunk));
    std::vector<const Sample*> part(samples.begin() + static_cast<std::ptrdiff_t>(i),
                                    samples.begin() + static_cast<std::ptrdiff_t>(end));
    Batch b = make_batch(part, model.dtype);
    out.push_back(model.generator->forward_single(b.images, b.modalities));
  }
  model.generator->train();
  at::globalContext().setUserEnabledMkldnn(mkldnn);
  return torch::cat(out, 0);
}

}  // namespace semipair

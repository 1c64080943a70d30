#include "semipair/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

namespace semipair {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(CurriculumPhase p) {
  switch (p) {
    case CurriculumPhase::Step1_StyleConsistent:
      return "Step1_StyleConsistent";
    case CurriculumPhase::Step2_PairedInter:
      return "Step2_PairedInter";
    case CurriculumPhase::Step2_UnpairedInter:
      return "Step2_UnpairedInter";
  }
  return "?";
}

CurriculumStep phase_for(const TrainConfig& cfg, int64_t epoch) {
  if (epoch < 1 || epoch > cfg.total_epochs()) {
    throw Error("epoch " + std::to_string(epoch) + " outside [1, " + std::to_string(cfg.total_epochs()) + "]");
  }
  return epoch <= cfg.epochs_step1 ? CurriculumStep::Step1 : CurriculumStep::Step2;
}

CurriculumPhase phase_for(const TrainConfig& cfg, int64_t epoch, int slot) {
  if (phase_for(cfg, epoch) == CurriculumStep::Step1) return CurriculumPhase::Step1_StyleConsistent;
  if (slot < 0 || slot > 1) throw Error("Step2 iterations have two slots");
  return slot == 0 ? CurriculumPhase::Step2_PairedInter : CurriculumPhase::Step2_UnpairedInter;
}

double lr_at(const TrainConfig& cfg, int64_t epoch) {
  const int64_t total = cfg.total_epochs();
  if (epoch < 1 || epoch > total) throw Error("epoch out of range for the learning-rate schedule");
  if (epoch <= cfg.lr_flat_epochs || total == cfg.lr_flat_epochs) return cfg.lr_init;
  const double t = static_cast<double>(epoch - cfg.lr_flat_epochs) / static_cast<double>(total - cfg.lr_flat_epochs);
  return (1.0 - t) * cfg.lr_init + t * cfg.lr_final;
}

PairBatch make_view_batch(const std::vector<ViewPair>& views, torch::ScalarType dtype) {
  std::vector<Sample> first, second;
  for (const auto& v : views) {
    if (!v.view1.mask || !v.view2.mask) throw Error("style-consistent views must carry masks");
    first.push_back(v.view1);
    second.push_back(v.view2);
  }
  return {make_batch(first, dtype), make_batch(second, dtype)};
}

// ---------------------------------------------------------------------------

PairedStream::PairedStream(const SemiPairedDataset& ds, uint64_t seed) : ds_(&ds), rng_(seed) {
  for (const auto* r : ds.split_records(Split::Train)) {
    if (r->paired) subjects_.push_back(r);
  }
  order_.resize(subjects_.size());
  reshuffle();
}

void PairedStream::reshuffle() {
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  shuffle(order_, rng_);
  cursor_ = 0;
}

std::pair<const Sample*, const Sample*> PairedStream::next() {
  if (subjects_.empty()) throw Error("no paired subjects");
  if (cursor_ == order_.size()) reshuffle();
  const SubjectRecord* r = subjects_[order_[cursor_++]];
  const auto n = r->modalities.size();
  const size_t i = uniform_index(rng_, n);
  size_t j = uniform_index(rng_, n - 1);
  if (j >= i) ++j;
  return {&ds_->sample(r->subject_id, r->modalities[i]), &ds_->sample(r->subject_id, r->modalities[j])};
}

std::vector<std::pair<const Sample*, const Sample*>> PairedStream::next_batch(int64_t n) {
  std::vector<std::pair<const Sample*, const Sample*>> out;
  for (int64_t i = 0; i < n; ++i) out.push_back(next());
  return out;
}

std::vector<std::pair<const Sample*, const Sample*>> make_unpaired_couples(const std::vector<const Sample*>& pool,
                                                                          Rng& rng) {
  std::vector<const Sample*> order = pool;
  shuffle(order, rng);
  std::vector<std::pair<const Sample*, const Sample*>> out;
  out.reserve(order.size());
  for (const Sample* a : order) {
    std::vector<const Sample*> partners;
    for (const Sample* b : pool) {
      if (b->subject_id != a->subject_id && b->modality.index != a->modality.index) partners.push_back(b);
    }
    if (partners.empty()) {
      throw Error("no cross-subject, cross-modality partner for subject '" + a->subject_id + "'");
    }
    out.emplace_back(a, partners[uniform_index(rng, partners.size())]);
  }
  return out;
}

namespace {

PairBatch to_pair_batch(const std::vector<std::pair<const Sample*, const Sample*>>& couples, torch::ScalarType dtype) {
  std::vector<const Sample*> a, b;
  for (const auto& [x, y] : couples) {
    a.push_back(x);
    b.push_back(y);
  }
  return {make_batch(a, dtype), make_batch(b, dtype)};
}

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

double scalar(const torch::Tensor& t) { return t.item<double>(); }

}  // namespace

// ---------------------------------------------------------------------------

Trainer::Trainer(const SemiPairedDataset& ds, TrainConfig cfg, TrainerOptions opts)
    : ds_(&ds), cfg_(std::move(cfg)), opts_(std::move(opts)) {
  cfg_.validate();
  augment_ = cfg_.augment.scaled_to(ds.width);
  weights_ = cfg_.weights;
  if (!cfg_.use_content_consistency) weights_.lambda_con = 0.0;
  if (!cfg_.use_translation_loss) weights_.lambda_tran = 0.0;

  model_ = Model::create(net_config_for(ds, cfg_), cfg_, opts_.dtype);
  model_.dataset_hash = ds.config_hash;

  train_pool_ = ds.split_samples(Split::Train);
  if (train_pool_.empty()) throw Error("dataset has no training samples");
  for (const Sample* s : train_pool_) {
    if (!s->mask) throw Error("training sample of subject '" + s->subject_id + "' has no mask");
  }

  const auto adam = [&](std::vector<torch::Tensor> params) {
    return std::make_unique<torch::optim::Adam>(
        std::move(params),
        torch::optim::AdamOptions(cfg_.lr_init).betas(std::make_tuple(cfg_.adam_beta1, cfg_.adam_beta2)));
  };
  opt_g_ = adam(model_.generator->parameters());
  opt_d_ = adam(model_.discriminator->parameters());
  lr_ = cfg_.lr_init;

  if (opts_.out_dir) {
    fs::create_directories(*opts_.out_dir);
    std::ofstream(*opts_.out_dir / "config.json") << to_json(cfg_).dump(2) << "\n";
    log_file_ = std::make_unique<std::ofstream>(*opts_.out_dir / "train_log.jsonl");
  }
}

int64_t Trainer::iterations_per_epoch() const {
  const auto n = static_cast<int64_t>(train_pool_.size());
  return (n + cfg_.batch_size - 1) / cfg_.batch_size;
}

void Trainer::set_lr(double lr) {
  lr_ = lr;
  for (auto* opt : {opt_g_.get(), opt_d_.get()}) {
    for (auto& group : opt->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

void Trainer::emit(LossReport& r) {
  r.epoch = epoch_;
  r.step = ++step_;
  r.phase = phase_;
  r.lr = lr_;
  for (const auto& [name, value] : r.terms) {
    if (!std::isfinite(value)) {
      throw Error("non-finite loss term '" + name + "' at epoch " + std::to_string(epoch_) + ", step " +
                  std::to_string(step_) + " (" + r.pattern + " pattern)");
    }
  }
  if (log_file_) *log_file_ << r.to_json().dump() << "\n";
  if (on_report) on_report(r);
}

LossReport Trainer::update(Pattern pattern, const PairBatch& batch, const std::optional<torch::Tensor>& style_b_override) {
  const auto& a = batch.a;
  const auto& b = batch.b;
  if (a.size() == 0 || a.size() != b.size()) throw Error("pair batch halves must be non-empty and equal in size");
  if (!a.masks.defined() || !b.masks.defined()) throw Error("training batches need segmentation masks");
  for (int64_t i = 0; i < a.size(); ++i) {
    const bool same_subject = a.subjects[static_cast<size_t>(i)] == b.subjects[static_cast<size_t>(i)];
    const bool same_modality = a.modalities[i].item<int64_t>() == b.modalities[i].item<int64_t>();
    if (pattern == Pattern::Intra && (!same_subject || !same_modality)) {
      throw Error("style-consistent views must come from the same image");
    }
    if (pattern == Pattern::PairedInter && (!same_subject || same_modality)) {
      throw Error("paired batch mixes subjects or repeats a modality (row " + std::to_string(i) + ")");
    }
    if (pattern == Pattern::UnpairedInter && (same_subject || same_modality)) {
      throw Error("unpaired couple must span two subjects and two modalities (row " + std::to_string(i) + ")");
    }
  }
  if (!cfg_.use_disentanglement) return segmentation_only_update(batch, phase_);

  auto& G = model_.generator;
  auto& D = model_.discriminator;
  const bool cross = pattern != Pattern::Intra;

  auto out = G->forward_pair(a.images, a.modalities, b.images, b.modalities, cross, style_b_override);
  const auto reals = torch::cat({a.images, b.images}, 0);
  const auto real_labels = torch::cat({a.modalities, b.modalities}, 0);
  const auto recon = torch::cat({out.recon_a, out.recon_b}, 0);
  torch::Tensor trans, trans_labels;
  if (cross) {
    trans = torch::cat({out.trans_ab, out.trans_ba}, 0);
    trans_labels = torch::cat({b.modalities, a.modalities}, 0);
  }
  const int64_t n = reals.size(0);

  LossReport report;
  report.pattern = to_string(pattern);

  // Discriminator: maximize L_adv, minimize L^r_cls, on detached fakes.
  {
    std::vector<torch::Tensor> parts{reals, recon.detach()};
    if (cross) parts.push_back(trans.detach());
    auto d_out = D(torch::cat(parts, 0));
    auto src = d_out.src_logits;
    std::optional<torch::Tensor> trans_src;
    if (cross) trans_src = src.slice(0, 2 * n, 3 * n);
    auto adv = adversarial_loss_logits(src.slice(0, 0, n), src.slice(0, n, 2 * n), trans_src);
    auto cls_r = cls_loss_real_logits(d_out.cls_logits.slice(0, 0, n), real_labels);
    auto loss_d = compose_L_D(adv, cls_r);
    opt_d_->zero_grad();
    loss_d.backward();
    opt_d_->step();
    if (on_optimizer_step) on_optimizer_step("D");
    report.terms["adv"] = scalar(adv);
    report.terms["cls_r"] = scalar(cls_r);
    report.L_D = scalar(loss_d);
  }

  // Generator, with the discriminator frozen.
  set_requires_grad(*D, false);
  GeneratorTerms t;
  {
    std::vector<torch::Tensor> parts{recon};
    if (cross) parts.push_back(trans);
    auto d_out = D(torch::cat(parts, 0));
    std::optional<torch::Tensor> trans_src, trans_cls, trans_lbl;
    if (cross) {
      trans_src = d_out.src_logits.slice(0, n, 2 * n);
      trans_cls = d_out.cls_logits.slice(0, n, 2 * n);
      trans_lbl = trans_labels;
    }
    t.adv = generator_adversarial_loss_logits(d_out.src_logits.slice(0, 0, n), trans_src);
    t.cls_f = cls_loss_fake_logits(d_out.cls_logits.slice(0, 0, n), real_labels, trans_cls, trans_lbl);
  }
  t.rec = reconstruction_loss(recon, reals);
  const auto seg_a = dice_loss_batch(out.seg_a, a.masks);
  const auto seg_b = dice_loss_batch(out.seg_b, b.masks);
  t.seg = 0.5 * (seg_a + seg_b);
  t.style_l2 = style_l2_regularizer(torch::cat({out.style_a, out.style_b}, 0));
  if (pattern == Pattern::Intra && weights_.lambda_sty > 0.0) t.sty = style_consistency_loss(out.style_a, out.style_b);
  if (pattern == Pattern::PairedInter) {
    if (weights_.lambda_con > 0.0) t.con = content_consistency_loss(out.content_a, out.content_b);
    if (weights_.lambda_tran > 0.0) {
      t.tran = supervised_translation_loss(trans, torch::cat({b.images, a.images}, 0));
    }
  }
  auto loss_g = compose_L_G(pattern, t, weights_);
  opt_g_->zero_grad();
  loss_g.backward();
  opt_g_->step();
  set_requires_grad(*D, true);
  if (on_optimizer_step) on_optimizer_step("G");

  report.terms["adv_g"] = scalar(*t.adv);
  report.terms["cls_f"] = scalar(*t.cls_f);
  report.terms["rec"] = scalar(*t.rec);
  report.terms["seg"] = scalar(*t.seg);
  report.terms["seg_a"] = scalar(seg_a);
  report.terms["seg_b"] = scalar(seg_b);
  report.terms["style_l2"] = scalar(*t.style_l2);
  if (t.sty) report.terms["sty"] = scalar(*t.sty);
  if (t.con) report.terms["con"] = scalar(*t.con);
  if (t.tran) report.terms["tran"] = scalar(*t.tran);
  report.g_weights = generator_weights(pattern, weights_);
  for (auto it = report.g_weights.begin(); it != report.g_weights.end();) {
    it = report.terms.count(it->first) ? std::next(it) : report.g_weights.erase(it);
  }
  report.d_weights = discriminator_weights();
  report.L_G = scalar(loss_g);
  emit(report);
  return report;
}

LossReport Trainer::segmentation_only_update(const PairBatch& batch, const std::string& phase) {
  auto& G = model_.generator;
  auto images = torch::cat({batch.a.images, batch.b.images}, 0);
  auto mods = torch::cat({batch.a.modalities, batch.b.modalities}, 0);
  auto masks = torch::cat({batch.a.masks, batch.b.masks}, 0);
  auto seg = dice_loss_batch(G->forward_single(images, mods), masks);
  auto loss = weights_.lambda_seg * seg;
  opt_g_->zero_grad();
  loss.backward();
  opt_g_->step();
  if (on_optimizer_step) on_optimizer_step("G");
  LossReport r;
  r.pattern = "seg_only";
  r.phase = phase;
  r.terms["seg"] = scalar(seg);
  r.g_weights = {{"seg", weights_.lambda_seg}};
  r.L_G = scalar(loss);
  emit(r);
  return r;
}

LossReport Trainer::step1_iteration(const PairBatch& views) { return update(Pattern::Intra, views); }

std::vector<LossReport> Trainer::step2_iteration(const std::optional<PairBatch>& paired, const PairBatch& unpaired) {
  std::vector<LossReport> out;
  if (paired) out.push_back(update(Pattern::PairedInter, *paired));
  out.push_back(update(Pattern::UnpairedInter, unpaired));
  return out;
}

double Trainer::mean_dice(Split split) {
  const auto samples = ds_->split_samples(split);
  if (samples.empty()) throw Error("split " + to_string(split) + " is empty");
  auto pred = binarize(predict(model_, samples)).to(torch::kFloat64);
  std::vector<double> sums(static_cast<size_t>(ds_->modality_count()), 0.0);
  std::vector<int64_t> counts(sums.size(), 0);
  for (size_t i = 0; i < samples.size(); ++i) {
    auto gt = samples[i]->mask->to(torch::kFloat64);
    auto p = pred[static_cast<int64_t>(i)];
    const auto inter = (p * gt).sum({1, 2});
    const auto denom = p.sum({1, 2}) + gt.sum({1, 2});
    // Empty-vs-empty counts as a perfect score.
    auto dice = torch::where(denom.gt(0), 2.0 * inter / denom.clamp_min(1.0), torch::ones_like(denom));
    sums[static_cast<size_t>(samples[i]->modality.index)] += dice.mean().item<double>();
    ++counts[static_cast<size_t>(samples[i]->modality.index)];
  }
  double total = 0.0;
  int present = 0;
  for (size_t m = 0; m < sums.size(); ++m) {
    if (counts[m] == 0) continue;
    total += sums[m] / static_cast<double>(counts[m]);
    ++present;
  }
  return total / present;
}

TrainResult Trainer::train() {
  TrainResult result;
  PairedStream paired(*ds_, derive_seed(cfg_.seed, 101));
  const int64_t B = cfg_.batch_size;
  const int64_t total = cfg_.total_epochs();
  const bool has_val = !ds_->split_records(Split::Val).empty();

  for (epoch_ = 1; epoch_ <= total; ++epoch_) {
    set_lr(lr_at(cfg_, epoch_));
    const bool step1 = phase_for(cfg_, epoch_) == CurriculumStep::Step1;
    phase_ = cfg_.end_to_end ? "EndToEnd" : (step1 ? "Step1" : "Step2");
    Rng rng(derive_seed(cfg_.seed, 1000 + static_cast<uint64_t>(epoch_)));

    std::vector<const Sample*> order = train_pool_;
    shuffle(order, rng);
    std::vector<std::pair<const Sample*, const Sample*>> couples;
    if (!step1 || cfg_.end_to_end) couples = make_unpaired_couples(train_pool_, rng);

    for (int64_t it = 0; it < iterations_per_epoch(); ++it) {
      const auto begin = static_cast<size_t>(it * B);
      const auto end = std::min(order.size(), begin + static_cast<size_t>(B));
      if (step1 || cfg_.end_to_end) {
        std::vector<ViewPair> views;
        for (size_t i = begin; i < end; ++i) views.push_back(make_view_pair(*order[i], augment_, rng));
        step1_iteration(make_view_batch(views, model_.dtype));
      }
      if (!step1 || cfg_.end_to_end) {
        std::optional<PairBatch> paired_batch;
        if (!paired.empty()) paired_batch = to_pair_batch(paired.next_batch(B), model_.dtype);
        std::vector<std::pair<const Sample*, const Sample*>> part(couples.begin() + static_cast<std::ptrdiff_t>(begin),
                                                                  couples.begin() + static_cast<std::ptrdiff_t>(end));
        step2_iteration(paired_batch, to_pair_batch(part, model_.dtype));
      }
    }
    model_.epoch = epoch_;

    double val = std::numeric_limits<double>::quiet_NaN();
    const bool select = cfg_.end_to_end || !step1 || epoch_ == total;
    if (select && has_val) {
      val = mean_dice(Split::Val);
      if (val > result.best_val_dice) {
        result.best_val_dice = val;
        result.best_epoch = epoch_;
        if (opts_.out_dir) {
          result.best_checkpoint = *opts_.out_dir / "best.bin";
          save_checkpoint(model_, *result.best_checkpoint);
        }
      }
    }
    result.val_dice.push_back(val);
    if (log_file_) {
      json line{{"event", "epoch_end"}, {"epoch", epoch_}, {"phase", phase_}, {"lr", lr_}};
      if (!std::isnan(val)) line["val_dice"] = val;
      *log_file_ << line.dump() << "\n";
      log_file_->flush();
    }
    if (opts_.verbose) {
      std::cerr << "epoch " << epoch_ << "/" << total << " " << phase_ << " lr=" << lr_;
      if (!std::isnan(val)) std::cerr << " val_dice=" << val;
      std::cerr << std::endl;
    }
    if (opts_.out_dir && ((cfg_.checkpoint_interval > 0 && epoch_ % cfg_.checkpoint_interval == 0) || epoch_ == total)) {
      save_checkpoint(model_, *opts_.out_dir / ("ckpt_ep" + std::to_string(epoch_) + ".bin"));
    }
  }
  epoch_ = total;
  if (opts_.out_dir && !result.best_checkpoint) {
    result.best_checkpoint = *opts_.out_dir / "best.bin";
    save_checkpoint(model_, *result.best_checkpoint);
  }
  return result;
}

TrainResult train(const SemiPairedDataset& ds, const TrainConfig& cfg, const TrainerOptions& opts) {
  Trainer t(ds, cfg, opts);
  return t.train();
}

}  // namespace semipair

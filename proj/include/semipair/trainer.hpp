#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "semipair/augment.hpp"
#include "semipair/config.hpp"
#include "semipair/datamodel.hpp"
#include "semipair/losses.hpp"
#include "semipair/model.hpp"
#include "semipair/rng.hpp"

namespace semipair {

enum class CurriculumStep { Step1, Step2 };
enum class CurriculumPhase { Step1_StyleConsistent, Step2_PairedInter, Step2_UnpairedInter };

std::string to_string(CurriculumPhase p);

/// Epochs 1..epochs_step1 are Step1, the remainder Step2.
CurriculumStep phase_for(const TrainConfig& cfg, int64_t epoch);
/// Phase of a within-iteration slot: Step2 runs the paired pattern in slot 0
/// and the unpaired pattern in slot 1.
CurriculumPhase phase_for(const TrainConfig& cfg, int64_t epoch, int slot);

/// lr_init through lr_flat_epochs, then linear down to lr_final at the last epoch.
double lr_at(const TrainConfig& cfg, int64_t epoch);

/// Two images per row: view pairs, same-subject pairs or cross-subject couples.
struct PairBatch {
  Batch a, b;
};

PairBatch make_view_batch(const std::vector<ViewPair>& views, torch::ScalarType dtype);

/// Paired subjects cycled in a seeded order; each draw is a uniformly chosen
/// ordered 2-subset of the subject's modalities.
class PairedStream {
 public:
  PairedStream(const SemiPairedDataset& ds, uint64_t seed);
  bool empty() const { return subjects_.empty(); }
  std::pair<const Sample*, const Sample*> next();
  std::vector<std::pair<const Sample*, const Sample*>> next_batch(int64_t n);

 private:
  void reshuffle();
  const SemiPairedDataset* ds_;
  std::vector<const SubjectRecord*> subjects_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  Rng rng_;
};

/// Every training sample as x_a, each coupled with a random sample of a
/// different subject and a different modality.
std::vector<std::pair<const Sample*, const Sample*>> make_unpaired_couples(const std::vector<const Sample*>& pool,
                                                                          Rng& rng);

struct TrainerOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + train_log.jsonl
  torch::ScalarType dtype = torch::kFloat32;
  bool verbose = false;
};

struct TrainResult {
  std::vector<double> val_dice;  // per epoch; NaN when not evaluated
  int64_t best_epoch = 0;
  double best_val_dice = -1.0;
  std::optional<std::filesystem::path> best_checkpoint;
};

class Trainer {
 public:
  Trainer(const SemiPairedDataset& ds, TrainConfig cfg, TrainerOptions opts = {});

  Model& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }

  /// Style-consistent pattern: D by L_D, then G by the intra objective.
  LossReport step1_iteration(const PairBatch& views);
  /// Paired pattern then unpaired pattern; the paired update is skipped when
  /// `paired` is empty.
  std::vector<LossReport> step2_iteration(const std::optional<PairBatch>& paired, const PairBatch& unpaired);

  /// One D/G round for a pattern. `style_b_override` replaces s_b in the
  /// generator pass (used to probe the decoder wiring).
  LossReport update(Pattern pattern, const PairBatch& batch,
                    const std::optional<torch::Tensor>& style_b_override = std::nullopt);

  /// Runs the full epoch budget.
  TrainResult train();

  /// Mean Dice over modalities and regions on a split (threshold 0.5).
  double mean_dice(Split split);

  int64_t iterations_per_epoch() const;

  /// Called after every D/G round with its report.
  std::function<void(const LossReport&)> on_report;
  /// Called right after each optimizer step with "D" or "G"; lets tests
  /// snapshot parameters between the two halves of a round.
  std::function<void(const std::string&)> on_optimizer_step;

 private:
  LossReport segmentation_only_update(const PairBatch& batch, const std::string& phase);
  void set_lr(double lr);
  void emit(LossReport& r);

  const SemiPairedDataset* ds_;
  TrainConfig cfg_;
  TrainerOptions opts_;
  AugmentConfig augment_;
  LossWeights weights_;
  Model model_;
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  std::vector<const Sample*> train_pool_;
  std::unique_ptr<std::ostream> log_file_;
  int64_t epoch_ = 0;
  int64_t step_ = 0;
  double lr_ = 0.0;
  std::string phase_;
};

/// Convenience wrapper around Trainer::train().
TrainResult train(const SemiPairedDataset& ds, const TrainConfig& cfg, const TrainerOptions& opts = {});

}  // namespace semipair

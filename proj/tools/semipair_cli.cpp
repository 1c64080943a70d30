#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "semipair/datamodel.hpp"
#include "semipair/eval.hpp"
#include "semipair/image_io.hpp"
#include "semipair/model.hpp"
#include "semipair/synth.hpp"
#include "semipair/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semipair;

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("malformed JSON in " + p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

// --seed beats SEMIPAIR_SEED, which beats the config file.
std::optional<uint64_t> seed_override(const std::optional<uint64_t>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("SEMIPAIR_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(std::string("SEMIPAIR_SEED is not an unsigned integer: ") + env);
    }
  }
  return std::nullopt;
}

Model open_model(const fs::path& ckpt, const SemiPairedDataset& ds, const std::optional<std::string>& expect_hash) {
  Model m = load_checkpoint(ckpt, expect_hash);
  check_dataset_matches(m, ds);
  return m;
}

std::string mean_std(const std::vector<double>& v, int precision) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << mean << "±" << sd;
  return os.str();
}

const Sample& find_sample(const SemiPairedDataset& ds, const std::string& subject) {
  const auto& rec = ds.record(subject);
  return ds.sample(subject, rec.modalities.front());
}

int64_t modality_index(const SemiPairedDataset& ds, const std::string& name) {
  for (int64_t m = 0; m < ds.modality_count(); ++m) {
    if (ds.modality_names[static_cast<size_t>(m)] == name) return m;
  }
  throw Error("unknown modality '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-paired multi-modal segmentation with curriculum disentanglement"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic semi-paired dataset");
  fs::path synth_out, synth_spec_file;
  std::optional<int64_t> synth_paired, synth_subjects;
  std::optional<uint64_t> synth_seed;
  bool synth_force = false;
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_option("--spec", synth_spec_file, "Flat JSON synth spec")->check(CLI::ExistingFile);
  synth->add_option("--paired", synth_paired, "Number of paired training subjects (NPS)");
  synth->add_option("--subjects", synth_subjects, "Total subjects; split sizes scale along");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_flag("--force", synth_force, "Overwrite a non-empty output directory");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train with the two-step curriculum");
  fs::path train_data, train_out, train_config_file;
  std::optional<uint64_t> train_seed;
  std::vector<uint64_t> train_seeds;
  std::optional<int64_t> ep1, ep2, lr_flat, batch, base_width, levels, disc_levels;
  bool no_cc = false, no_tran = false, end_to_end = false, no_dis = false, use_double = false, verbose = false;
  train_cmd->add_option("--data", train_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", train_out, "Run directory")->required();
  train_cmd->add_option("--config", train_config_file, "Flat JSON training config")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train_seed, "Training seed");
  train_cmd->add_option("--seeds", train_seeds, "Several seeds; one run per seed under <out>/seed_<s>")->delimiter(',');
  train_cmd->add_option("--epochs-step1", ep1, "Step1 epochs (0 trains inter-modality only)");
  train_cmd->add_option("--epochs-step2", ep2, "Step2 epochs");
  train_cmd->add_option("--lr-flat-epochs", lr_flat,
                        "Epochs at lr_init before the linear decay (default keeps the 40/50 ratio when the "
                        "epoch budget changes)");
  train_cmd->add_option("--batch-size", batch, "Batch size");
  train_cmd->add_option("--base-width", base_width, "Channel width of the first level");
  train_cmd->add_option("--content-levels", levels, "Content pyramid depth K");
  train_cmd->add_option("--disc-levels", disc_levels, "Discriminator downsampling levels P");
  train_cmd->add_flag("--no-content-consistency", no_cc, "Drop the content consistency loss");
  train_cmd->add_flag("--no-translation-loss", no_tran, "Drop the supervised translation loss");
  train_cmd->add_flag("--end-to-end", end_to_end, "Merge both steps in every epoch");
  train_cmd->add_flag("--no-disentanglement", no_dis, "Plain segmentation network (E_c + D_s only)");
  train_cmd->add_flag("--double", use_double, "Train in float64");
  train_cmd->add_flag("-v,--verbose", verbose, "Per-epoch progress on stderr");

  // Shared by the evaluation commands.
  struct EvalArgs {
    fs::path data;
    std::vector<fs::path> ckpts;
    std::string split = "test";
    fs::path out;
    std::optional<std::string> config_hash;
    std::optional<uint64_t> seed;
  };
  auto add_eval = [&](CLI::App* cmd, EvalArgs& a, bool many) {
    cmd->add_option("--data", a.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    auto* opt = cmd->add_option("--ckpt", a.ckpts, many ? "Checkpoint(s); several report mean±std" : "Checkpoint")
                    ->required()
                    ->check(CLI::ExistingFile);
    if (!many) opt->expected(1);
    cmd->add_option("--split", a.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    cmd->add_option("--config-hash", a.config_hash, "Refuse checkpoints with another config hash");
    cmd->add_option("--seed", a.seed, "Seed for randomized probes");
  };

  EvalArgs seg_args, trans_args, tr_args, interp_args, stats_args;
  auto* eval_seg = app.add_subcommand("eval-seg", "Segmentation Dice table");
  add_eval(eval_seg, seg_args, true);
  eval_seg->add_option("--out", seg_args.out, "Write the JSON report here");

  auto* eval_trans = app.add_subcommand("eval-trans", "Translation SSIM against analytic targets");
  add_eval(eval_trans, trans_args, true);
  eval_trans->add_option("--out", trans_args.out, "Write the JSON report here");

  auto* translate_cmd = app.add_subcommand("translate", "Translate one subject's image to another modality");
  add_eval(translate_cmd, tr_args, false);
  std::string tr_subject, tr_target;
  translate_cmd->add_option("--subject", tr_subject, "Subject id")->required();
  translate_cmd->add_option("--to", tr_target, "Target modality name")->required();
  translate_cmd->add_option("--out", tr_args.out, "PNG: input | translation | target")->required();

  auto* interp_cmd = app.add_subcommand("interpolate", "Sweep one style dimension");
  add_eval(interp_cmd, interp_args, false);
  std::vector<std::string> interp_subjects;
  int64_t interp_dim = 3, interp_steps = 10;
  double interp_lo = -0.7, interp_hi = 0.2;
  interp_cmd->add_option("--subjects", interp_subjects, "Subjects (default: first four of the split)");
  interp_cmd->add_option("--dim", interp_dim, "1-based style dimension")->check(CLI::PositiveNumber);
  interp_cmd->add_option("--lo", interp_lo, "Range start");
  interp_cmd->add_option("--hi", interp_hi, "Range end");
  interp_cmd->add_option("--steps", interp_steps, "Number of values")->check(CLI::PositiveNumber);
  interp_cmd->add_option("--out", interp_args.out, "PNG grid: rows are values, columns are images")->required();

  auto* stats_cmd = app.add_subcommand("stats", "Style code statistics and the content distance probe");
  add_eval(stats_cmd, stats_args, false);
  stats_cmd->add_option("--out", stats_args.out, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) {
      SynthSpec spec;
      if (!synth_spec_file.empty()) merge_synth_spec(spec, read_json(synth_spec_file));
      if (synth_subjects) {
        const double f = static_cast<double>(*synth_subjects) / static_cast<double>(spec.n_subjects);
        spec.n_subjects = *synth_subjects;
        spec.n_val = static_cast<int64_t>(std::llround(static_cast<double>(spec.n_val) * f));
        spec.n_test = static_cast<int64_t>(std::llround(static_cast<double>(spec.n_test) * f));
        spec.n_train = spec.n_subjects - spec.n_val - spec.n_test;
      }
      if (synth_paired) spec.n_paired = *synth_paired;
      if (auto s = seed_override(synth_seed)) spec.seed = *s;
      spec.validate();
      if (fs::exists(synth_out) && !fs::is_empty(synth_out)) {
        if (!synth_force) throw Error(synth_out.string() + " exists and is not empty; pass --force to overwrite");
        fs::remove_all(synth_out);
      }
      const auto ds = synth_generate(spec);
      save_dataset(ds, synth_out);
      write_json(synth_out / "synth_spec.json", to_json(spec));
      std::cout << "dataset " << synth_out.string() << " config_hash " << ds.config_hash << "\n";
      std::cout << std::left << std::setw(7) << "split" << std::setw(8) << "paired";
      for (const auto& m : ds.modality_names) std::cout << std::right << std::setw(7) << m;
      std::cout << "\n";
      for (Split s : {Split::Train, Split::Val, Split::Test}) {
        int64_t paired = 0;
        std::vector<int64_t> counts(static_cast<size_t>(ds.modality_count()), 0);
        for (const auto* r : ds.split_records(s)) paired += r->paired;
        for (const auto* smp : ds.split_samples(s)) ++counts[static_cast<size_t>(smp->modality.index)];
        std::cout << std::left << std::setw(7) << to_string(s) << std::setw(8) << paired;
        for (auto c : counts) std::cout << std::right << std::setw(7) << c;
        std::cout << "\n";
      }
      return 0;
    }

    if (*train_cmd) {
      TrainConfig cfg;
      json file_cfg = json::object();
      if (!train_config_file.empty()) file_cfg = read_json(train_config_file);
      merge_train_config(cfg, file_cfg);
      if (ep1) cfg.epochs_step1 = *ep1;
      if (ep2) cfg.epochs_step2 = *ep2;
      if (lr_flat) {
        cfg.lr_flat_epochs = *lr_flat;
      } else if (!file_cfg.contains("lr_flat_epochs")) {
        const TrainConfig defaults;
        cfg.lr_flat_epochs = cfg.total_epochs() * defaults.lr_flat_epochs / defaults.total_epochs();
      }
      if (batch) cfg.batch_size = *batch;
      if (base_width) cfg.base_width = *base_width;
      if (levels) cfg.content_levels = *levels;
      if (disc_levels) cfg.disc_levels = *disc_levels;
      if (no_cc) cfg.use_content_consistency = false;
      if (no_tran) cfg.use_translation_loss = false;
      if (end_to_end) cfg.end_to_end = true;
      if (no_dis) cfg.use_disentanglement = false;
      if (auto s = seed_override(train_seed)) cfg.seed = *s;
      cfg.validate();
      const auto ds = load_dataset(train_data);
      std::cout << "weights rec=" << cfg.weights.lambda_rec << " seg=" << cfg.weights.lambda_seg
                << " sty=" << cfg.weights.lambda_sty << " con=" << cfg.weights.lambda_con
                << " tran=" << cfg.weights.lambda_tran << "\n";

      std::vector<uint64_t> seeds = train_seeds;
      if (seeds.empty()) seeds.push_back(cfg.seed);
      std::vector<double> best;
      for (uint64_t seed : seeds) {
        TrainConfig run = cfg;
        run.seed = seed;
        TrainerOptions opts;
        opts.out_dir = train_seeds.empty() ? train_out : train_out / ("seed_" + std::to_string(seed));
        opts.dtype = use_double ? torch::kFloat64 : torch::kFloat32;
        opts.verbose = verbose;
        Trainer trainer(ds, run, opts);
        const auto res = trainer.train();
        std::cout << "seed " << seed << " best_epoch " << res.best_epoch << " val_dice " << res.best_val_dice
                  << " checkpoint " << res.best_checkpoint->string() << " config_hash "
                  << trainer.model().config_hash() << "\n";
        best.push_back(res.best_val_dice);
      }
      if (best.size() > 1) std::cout << "val_dice " << mean_std(best, 4) << " over " << best.size() << " seeds\n";
      return 0;
    }

    if (*eval_seg || *eval_trans) {
      const auto& a = *eval_seg ? seg_args : trans_args;
      const auto ds = load_dataset(a.data);
      const Split split = split_from_string(a.split);
      json reports = json::array();
      std::vector<double> summary;
      for (const auto& ck : a.ckpts) {
        Model m = open_model(ck, ds, a.config_hash);
        json r;
        if (*eval_seg) {
          const auto rep = evaluate_segmentation(m, ds, split);
          std::cout << ck.string() << "\n" << rep.table();
          r = rep.to_json();
          summary.push_back(rep.aver(0));
        } else {
          const auto rep = evaluate_translation(m, ds, split);
          std::cout << ck.string() << "\n" << rep.table();
          r = rep.to_json();
          summary.push_back(rep.average());
        }
        r["checkpoint"] = ck.string();
        r["config_hash"] = m.config_hash();
        r["dataset_hash"] = ds.config_hash;
        r["split"] = a.split;
        reports.push_back(r);
      }
      if (summary.size() > 1) {
        std::cout << (*eval_seg ? ds.region_names.front() + " Aver Dice " : std::string("Aver SSIM "))
                  << mean_std(summary, 4) << " over " << summary.size() << " checkpoints\n";
      }
      if (!a.out.empty()) write_json(a.out, reports.size() == 1 ? reports[0] : reports);
      return 0;
    }

    if (*translate_cmd) {
      const auto ds = load_dataset(tr_args.data);
      Model m = open_model(tr_args.ckpts.front(), ds, tr_args.config_hash);
      const Sample& s = find_sample(ds, tr_subject);
      const int64_t target = modality_index(ds, tr_target);
      const auto styles = mean_style_codes(m, ds, ds.record(tr_subject).split);
      const auto out = translate(m, s, styles[target]).to(torch::kFloat32);
      std::vector<torch::Tensor> row{s.image, out};
      if (ds.has_ground_truth()) {
        const auto gt = ground_truth_image(ds, tr_subject, target);
        row.push_back(gt);
        std::cout << "ssim " << std::fixed << std::setprecision(4) << ssim(out, gt) << "\n";
      }
      write_png(tr_args.out, image_grid({row}));
      return 0;
    }

    if (*interp_cmd) {
      const auto ds = load_dataset(interp_args.data);
      Model m = open_model(interp_args.ckpts.front(), ds, interp_args.config_hash);
      if (interp_subjects.empty()) {
        for (const auto* r : ds.split_records(split_from_string(interp_args.split))) {
          if (interp_subjects.size() == 4) break;
          interp_subjects.push_back(r->subject_id);
        }
      }
      std::vector<Interpolation> cols;
      for (const auto& subj : interp_subjects) {
        cols.push_back(interpolate_style(m, find_sample(ds, subj), interp_dim - 1, interp_lo, interp_hi, interp_steps));
      }
      std::vector<std::vector<torch::Tensor>> rows(static_cast<size_t>(interp_steps));
      bool seg_fixed = true;
      for (const auto& c : cols) {
        for (size_t k = 0; k < rows.size(); ++k) {
          rows[k].push_back(c.images[k].to(torch::kFloat32));
          seg_fixed = seg_fixed && torch::equal(c.segs[k], c.segs[0]);
        }
      }
      write_png(interp_args.out, image_grid(rows));
      std::cout << "dim " << interp_dim << " range [" << interp_lo << ", " << interp_hi << "] steps " << interp_steps
                << " seg_unchanged " << (seg_fixed ? "yes" : "no") << "\n";
      return 0;
    }

    if (*stats_cmd) {
      const auto ds = load_dataset(stats_args.data);
      Model m = open_model(stats_args.ckpts.front(), ds, stats_args.config_hash);
      const Split split = split_from_string(stats_args.split);
      const auto st = style_statistics(m, ds.split_samples(split));
      const auto probe = content_distance_probe(m, ds, split, seed_override(stats_args.seed).value_or(0));
      std::cout << std::fixed << std::setprecision(4) << "style max " << st.max << " min " << st.min << " mean "
                << st.mean << " over " << st.count << " entries\n"
                << "content L1 paired " << probe.paired << " random " << probe.random << " ratio " << probe.ratio()
                << "\n";
      if (!stats_args.out.empty()) {
        json j = st.to_json();
        j["content_paired"] = probe.paired;
        j["content_random"] = probe.random;
        j["config_hash"] = m.config_hash();
        write_json(stats_args.out, j);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

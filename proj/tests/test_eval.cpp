#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "semipair/eval.hpp"
#include "semipair/synth.hpp"
#include "semipair/trainer.hpp"
#include "support.hpp"

using namespace semipair;
using testing_support::tiny_config;
using testing_support::tiny_spec;

namespace {

torch::Tensor rand_image(int64_t h, int64_t w, uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::rand({h, w}, gen, torch::kFloat64) * 2 - 1;
}

torch::Tensor rand_mask(int64_t h, int64_t w, uint64_t seed, double p = 0.3) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::rand({h, w}, gen, torch::kFloat64).lt(p).to(torch::kUInt8);
}

struct Fixture {
  SemiPairedDataset ds = synth_generate(tiny_spec());
  Trainer trainer{ds, tiny_config()};
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST(DiceScore, Examples) {
  auto m = torch::zeros({4, 4}, torch::kUInt8);
  m.index_put_({0, torch::indexing::Slice(0, 4)}, 1);
  EXPECT_EQ(dice_score(m, m), 1.0);
  EXPECT_EQ(dice_score(m, m.flip({0})), 0.0);
  auto p = torch::zeros({4, 4}, torch::kUInt8), g = torch::zeros({4, 4}, torch::kUInt8);
  p.index_put_({0, torch::indexing::Slice(0, 4)}, 1);
  g.index_put_({0, torch::indexing::Slice(0, 2)}, 1);
  g.index_put_({1, torch::indexing::Slice(0, 2)}, 1);
  EXPECT_NEAR(dice_score(p, g), 0.5, 1e-12);
  EXPECT_EQ(dice_score(torch::zeros({3, 3}), torch::zeros({3, 3})), 1.0);
  EXPECT_THROW(dice_score(p, torch::zeros({4, 5})), Error);
}

TEST(DiceScore, MatchesBruteForce) {
  for (uint64_t s = 0; s < 20; ++s) {
    const auto p = rand_mask(9 + s % 5, 7 + s % 3, s, 0.2 + 0.03 * static_cast<double>(s));
    const auto g = rand_mask(p.size(0), p.size(1), 100 + s);
    EXPECT_NEAR(dice_score(p, g), oracles::dice(p, g), 1e-9);
    EXPECT_EQ(dice_score(p, g), dice_score(g, p));
  }
}

TEST(Ssim, Examples) {
  const auto x = rand_image(16, 16, 1);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
  // Zero-mean in every window: a checkerboard.
  const auto z = (torch::arange(16).view({16, 1}) + torch::arange(16).view({1, 16})).remainder(2).to(torch::kFloat64) - 0.5;
  EXPECT_LT(ssim(z, -z), 0.0);
  EXPECT_NEAR(ssim(z, -z), oracles::ssim(z, -z), 1e-9);
  const double c = 0.1, c1 = 0.02 * 0.02;
  const double closed = (2 * c * (c + 0.5) + c1) / (c * c + (c + 0.5) * (c + 0.5) + c1);
  EXPECT_NEAR(ssim(torch::full({12, 12}, c, torch::kFloat64), torch::full({12, 12}, c + 0.5, torch::kFloat64)), closed,
              1e-9);
  EXPECT_THROW(ssim(torch::zeros({10, 16}), torch::zeros({10, 16})), Error);
  EXPECT_THROW(ssim(x, rand_image(16, 15, 2)), Error);
}

TEST(Ssim, MatchesBruteForce) {
  for (uint64_t s = 0; s < 20; ++s) {
    const auto x = rand_image(11 + s % 6, 12 + s % 4, s);
    // Correlated partner so the scores spread over a useful range.
    const auto y = (0.6 * x + 0.4 * rand_image(x.size(0), x.size(1), 50 + s)).clamp(-1, 1);
    EXPECT_NEAR(ssim(x, y), oracles::ssim(x, y), 1e-6);
    EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-12);
  }
}

TEST(SegReportTest, PerfectPredictorAndLayout) {
  auto& f = fixture();
  const auto samples = f.ds.split_samples(Split::Test);
  std::vector<torch::Tensor> gts;
  for (const auto* s : samples) gts.push_back(*s->mask);
  const auto rep = segmentation_report(f.ds, samples, torch::stack(gts));
  for (const auto& row : rep.dice) {
    for (double v : row) EXPECT_EQ(v, 1.0);
  }
  EXPECT_EQ(rep.aver(0), 1.0);
  const auto table = rep.table();
  std::istringstream lines(table);
  std::string header;
  std::getline(lines, header);
  std::istringstream cols(header);
  std::vector<std::string> words;
  for (std::string w; cols >> w;) words.push_back(w);
  EXPECT_EQ(words.size(), static_cast<size_t>(f.ds.modality_count()) + 2);  // Region + M + Aver
  EXPECT_EQ(words.back(), "Aver");
  EXPECT_THROW(segmentation_report(f.ds, samples, torch::stack(gts).slice(0, 1)), Error);
}

TEST(SegReportTest, AverageAndJson) {
  SegReport r;
  r.modalities = {"T1ce", "T1", "T2", "Flair"};
  r.regions = {"WT"};
  r.dice = {{0.8, 0.9, 1.0, 0.7}};
  r.counts = {1, 1, 1, 1};
  EXPECT_NEAR(r.aver(0), 0.85, 1e-12);
  EXPECT_NE(r.table().find("85.00"), std::string::npos);
  const auto back = SegReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  auto bad = r.to_json();
  bad["dice"][0].erase(0);
  EXPECT_THROW(SegReport::from_json(bad), Error);
}

TEST(SegReportTest, MatchesManualAverages) {
  auto& f = fixture();
  const auto samples = f.ds.split_samples(Split::Val);
  const auto pred = binarize(predict(f.trainer.model(), samples));
  const auto rep = evaluate_segmentation(f.trainer.model(), f.ds, Split::Val);
  for (int64_t r = 0; r < f.ds.region_count(); ++r) {
    for (int64_t m = 0; m < f.ds.modality_count(); ++m) {
      double s = 0;
      int n = 0;
      for (size_t i = 0; i < samples.size(); ++i) {
        if (samples[i]->modality.index != m) continue;
        s += oracles::dice(pred[static_cast<int64_t>(i)][r], (*samples[i]->mask)[r]);
        ++n;
      }
      EXPECT_NEAR(rep.dice[static_cast<size_t>(r)][static_cast<size_t>(m)], s / n, 1e-12);
    }
  }
}

TEST(TransReportTest, GroupsByTargetModality) {
  auto& f = fixture();
  const auto rep = evaluate_translation(f.trainer.model(), f.ds, Split::Test);
  const auto samples = f.ds.split_samples(Split::Test);
  for (int64_t m = 0; m < f.ds.modality_count(); ++m) {
    int64_t others = 0;
    for (const auto* s : samples) others += s->modality.index != m;
    EXPECT_EQ(rep.counts[static_cast<size_t>(m)], others);
    EXPECT_GE(rep.ssim[static_cast<size_t>(m)], -1.0);
    EXPECT_LE(rep.ssim[static_cast<size_t>(m)], 1.0);
  }
  TransReport t;
  t.modalities = {"A", "B"};
  t.ssim = {0.5, std::nan("")};
  t.counts = {3, 0};
  EXPECT_EQ(t.average(), 0.5);
  const auto back = TransReport::from_json(t.to_json());
  EXPECT_TRUE(std::isnan(back.ssim[1]));
  EXPECT_EQ(back.to_json(), t.to_json());
}

TEST(TransReportTest, NeedsGroundTruth) {
  auto& f = fixture();
  auto ds = f.ds;
  ds.content.clear();
  EXPECT_THROW(evaluate_translation(f.trainer.model(), ds, Split::Test), Error);
}

TEST(Interpolation, SegmentationUnchangedAndValuesSpaced) {
  auto& f = fixture();
  const auto& s = *f.ds.split_samples(Split::Test)[0];
  const auto it = interpolate_style(f.trainer.model(), s, 2, -0.7, 0.2, 10);
  ASSERT_EQ(it.images.size(), 10u);
  EXPECT_EQ(it.values.front(), -0.7);
  EXPECT_NEAR(it.values.back(), 0.2, 1e-15);
  for (size_t k = 1; k < 10; ++k) {
    EXPECT_TRUE(torch::equal(it.segs[k], it.segs[0]));
    EXPECT_NEAR(it.values[k] - it.values[k - 1], 0.1, 1e-12);
  }
  EXPECT_FALSE(torch::equal(it.images.front(), it.images.back()));
  const auto one = interpolate_style(f.trainer.model(), s, 0, -0.5, 0.5, 1);
  ASSERT_EQ(one.values.size(), 1u);
  EXPECT_EQ(one.values[0], -0.5);
}

TEST(Interpolation, RejectsBadArguments) {
  auto& f = fixture();
  const auto& s = *f.ds.split_samples(Split::Test)[0];
  auto& m = f.trainer.model();
  EXPECT_THROW(interpolate_style(m, s, -1, 0, 1, 2), Error);
  EXPECT_THROW(interpolate_style(m, s, m.net.style_dim, 0, 1, 2), Error);
  EXPECT_THROW(interpolate_style(m, s, 0, 1, 1, 2), Error);
  EXPECT_THROW(interpolate_style(m, s, 0, 0, 1, 0), Error);
}

TEST(StyleStatsTest, Ordering) {
  auto& f = fixture();
  const auto st = style_statistics(f.trainer.model(), f.ds.split_samples(Split::Train));
  EXPECT_LE(st.min, st.mean);
  EXPECT_LE(st.mean, st.max);
  EXPECT_EQ(st.count, static_cast<int64_t>(f.ds.split_samples(Split::Train).size()) * f.trainer.model().net.style_dim);
  EXPECT_EQ(StyleStats::from_json(st.to_json()).to_json(), st.to_json());
  EXPECT_THROW(style_statistics(f.trainer.model(), {}), Error);
}

TEST(ContentProbeTest, CountsAndDeterminism) {
  auto& f = fixture();
  const auto a = content_distance_probe(f.trainer.model(), f.ds, Split::Test, 5);
  const auto b = content_distance_probe(f.trainer.model(), f.ds, Split::Test, 5);
  EXPECT_EQ(a.paired, b.paired);
  EXPECT_EQ(a.random, b.random);
  EXPECT_EQ(a.paired_count, static_cast<int64_t>(f.ds.split_records(Split::Test).size()));
  EXPECT_GT(a.random, 0.0);
  EXPECT_GE(a.paired, 0.0);
}

TEST(Translate, MatchesDecoderWithOwnStyle) {
  auto& f = fixture();
  auto& m = f.trainer.model();
  const auto& s = *f.ds.split_samples(Split::Test)[0];
  torch::NoGradGuard ng;
  const auto x = s.image.unsqueeze(0).unsqueeze(0);
  const auto mod = torch::tensor({s.modality.index}, torch::kLong);
  const auto style = m.generator->encode_style(x, mod);
  const auto out = m.generator->forward_pair(x, mod, x, mod, false);
  EXPECT_LT((translate(m, s, style[0]) - out.recon_a[0][0]).abs().max().item<double>(), 1e-5);
}

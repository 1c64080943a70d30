#include <gtest/gtest.h>

#include <fstream>

#include "semipair/datamodel.hpp"
#include "semipair/synth.hpp"
#include "support.hpp"

using namespace semipair;
using testing_support::TempDir;
using testing_support::tiny_spec;

namespace {

std::vector<SubjectRecord> full_records(int64_t n, int64_t M) {
  std::vector<SubjectRecord> out;
  for (int64_t i = 0; i < n; ++i) {
    SubjectRecord r;
    r.subject_id = "S" + std::to_string(i);
    for (int64_t m = 0; m < M; ++m) r.modalities.push_back(m);
    out.push_back(r);
  }
  return out;
}

std::vector<int64_t> unpaired_counts(const std::vector<SubjectRecord>& recs, Split s, int64_t M) {
  std::vector<int64_t> c(static_cast<size_t>(M), 0);
  for (const auto& r : recs) {
    if (r.split == s && !r.paired) ++c[static_cast<size_t>(r.modalities.front())];
  }
  return c;
}

// Hand-built dataset with two 4x4 subjects.
SemiPairedDataset two_subject_dataset() {
  SemiPairedDataset ds;
  ds.height = 4;
  ds.width = 4;
  ds.modality_names = {"A", "B"};
  ds.region_names = {"WT"};
  ds.config_hash = "external";
  SubjectRecord p{"P0", {0, 1}, true, Split::Train};
  SubjectRecord u{"U0", {1}, false, Split::Test};
  ds.records = {p, u};
  auto put = [&](const std::string& s, int64_t m, float v) {
    Sample smp{s, ds.modality(m), torch::full({4, 4}, v), torch::zeros({1, 4, 4}, torch::kUInt8)};
    (*smp.mask)[0][1][1] = 1;
    ds.samples[{s, m}] = smp;
  };
  put("P0", 0, -0.5f);
  put("P0", 1, 0.25f);
  put("U0", 1, 0.75f);
  return ds;
}

}  // namespace

TEST(PlanSplits, FullScaleCounts) {
  const auto recs = plan_splits(full_records(369, 4), 4, 240, 60, 69, 40, 1);
  int64_t paired = 0, unpaired_train = 0;
  for (const auto& r : recs) {
    if (r.split == Split::Train && r.paired) ++paired;
    if (r.split == Split::Train && !r.paired) ++unpaired_train;
    if (r.split != Split::Train) EXPECT_EQ(r.modalities.size(), 1u);
  }
  EXPECT_EQ(paired, 40);
  EXPECT_EQ(unpaired_train, 200);
  EXPECT_EQ(unpaired_counts(recs, Split::Train, 4), (std::vector<int64_t>{50, 50, 50, 50}));
}

TEST(PlanSplits, NoPairedSubjects) {
  const auto recs = plan_splits(full_records(30, 4), 4, 20, 5, 5, 0, 2);
  for (const auto& r : recs) {
    EXPECT_FALSE(r.paired);
    EXPECT_EQ(r.modalities.size(), 1u);
  }
}

TEST(PlanSplits, SmallCaseMatchesBruteForceBalance) {
  const auto recs = plan_splits(full_records(12, 4), 4, 8, 2, 2, 4, 3);
  std::vector<int64_t> assigned;
  for (const auto& r : recs) {
    if (r.split == Split::Train && !r.paired) assigned.push_back(r.modalities.front());
  }
  ASSERT_EQ(assigned.size(), 4u);
  // Enumerate every assignment of 4 subjects to 4 modalities and keep those
  // whose counts differ by at most one; the planner's choice must be one.
  std::set<std::vector<int64_t>> balanced;
  for (int code = 0; code < 256; ++code) {
    std::vector<int64_t> a{code & 3, (code >> 2) & 3, (code >> 4) & 3, (code >> 6) & 3};
    std::vector<int64_t> c(4, 0);
    for (auto m : a) ++c[static_cast<size_t>(m)];
    if (*std::max_element(c.begin(), c.end()) - *std::min_element(c.begin(), c.end()) <= 1) balanced.insert(a);
  }
  EXPECT_EQ(balanced.size(), 24u);
  EXPECT_TRUE(balanced.count(assigned));
  std::sort(assigned.begin(), assigned.end());
  EXPECT_EQ(assigned, (std::vector<int64_t>{0, 1, 2, 3}));
}

TEST(PlanSplits, IsPureInItsInputs) {
  const auto a = plan_splits(full_records(40, 4), 4, 24, 8, 8, 6, 9);
  const auto b = plan_splits(full_records(40, 4), 4, 24, 8, 8, 6, 9);
  const auto c = plan_splits(full_records(40, 4), 4, 24, 8, 8, 6, 10);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].subject_id, b[i].subject_id);
    EXPECT_EQ(a[i].modalities, b[i].modalities);
    EXPECT_EQ(a[i].split, b[i].split);
    differs = differs || a[i].subject_id != c[i].subject_id || a[i].split != c[i].split;
  }
  EXPECT_TRUE(differs);
}

TEST(PlanSplits, EverySplitIsBalanced) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const auto recs = plan_splits(full_records(50, 4), 4, 30, 9, 11, 7, seed);
    for (Split s : {Split::Train, Split::Val, Split::Test}) {
      const auto c = unpaired_counts(recs, s, 4);
      EXPECT_LE(*std::max_element(c.begin(), c.end()) - *std::min_element(c.begin(), c.end()), 1);
    }
  }
}

TEST(PlanSplits, InsufficientSubjectsFail) {
  EXPECT_THROW(plan_splits(full_records(10, 4), 4, 8, 2, 2, 0, 0), Error);
  EXPECT_THROW(plan_splits(full_records(10, 4), 4, 4, 2, 2, 5, 0), Error);
}

TEST(ModalityLabel, OneHotPlanes) {
  const auto t = expand_modality_label({2, "T2"}, 4, 128, 128);
  ASSERT_EQ(t.sizes(), torch::IntArrayRef({4, 128, 128}));
  EXPECT_TRUE(t[2].eq(1).all().item<bool>());
  EXPECT_EQ(t.sum().item<double>(), 128.0 * 128.0);
  EXPECT_TRUE(t.sum(0).eq(1).all().item<bool>());
  const auto single = expand_modality_label({0, "X"}, 1, 3, 5);
  EXPECT_TRUE(single.eq(1).all().item<bool>());
  EXPECT_THROW(expand_modality_label({4, "?"}, 4, 2, 2), Error);
  const auto batch = expand_modality_labels(torch::tensor({1, 0}, torch::kLong), 3, 2, 2);
  EXPECT_TRUE(batch[0][1].eq(1).all().item<bool>());
  EXPECT_TRUE(batch[1][0].eq(1).all().item<bool>());
  EXPECT_EQ(batch.sum().item<double>(), 8.0);
}

TEST(Dataset, HandBuiltRoundTrip) {
  TempDir dir("ds2");
  const auto ds = two_subject_dataset();
  ds.validate();
  save_dataset(ds, dir.path());
  EXPECT_EQ(manifest_json(ds).at("records").size(), 2u);
  const auto back = load_dataset(dir.path());
  ASSERT_EQ(back.samples.size(), 3u);
  for (const auto& [key, s] : ds.samples) {
    const auto& t = back.sample(key.first, key.second);
    EXPECT_TRUE(torch::equal(s.image, t.image));
    EXPECT_TRUE(torch::equal(*s.mask, *t.mask));
  }
  EXPECT_EQ(back.record("P0").modalities, (std::vector<int64_t>{0, 1}));
  EXPECT_TRUE(back.record("P0").paired);
}

TEST(Dataset, MissingFileNamesSubject) {
  TempDir dir("dsmissing");
  save_dataset(two_subject_dataset(), dir.path());
  std::filesystem::remove(dir.path() / "data" / "U0_B.f32");
  try {
    load_dataset(dir.path());
    FAIL() << "load should fail";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("U0"), std::string::npos) << e.what();
  }
}

TEST(Dataset, TruncatedFileNamesSubject) {
  TempDir dir("dstrunc");
  save_dataset(two_subject_dataset(), dir.path());
  std::filesystem::resize_file(dir.path() / "data" / "P0_A.f32", 12);
  try {
    load_dataset(dir.path());
    FAIL() << "load should fail";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("P0"), std::string::npos) << e.what();
  }
}

TEST(Dataset, NaNPixelsNameSubject) {
  TempDir dir("dsnan");
  save_dataset(two_subject_dataset(), dir.path());
  {
    std::fstream f(dir.path() / "data" / "P0_B.f32", std::ios::in | std::ios::out | std::ios::binary);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    f.seekp(8);
    f.write(reinterpret_cast<const char*>(&nan), sizeof nan);
  }
  try {
    load_dataset(dir.path());
    FAIL() << "load should fail";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("P0"), std::string::npos) << e.what();
  }
}

TEST(Dataset, ValidateCatchesBrokenInvariants) {
  auto ds = two_subject_dataset();
  ds.records[1].modalities = {0, 1};  // unpaired with two modalities
  EXPECT_THROW(ds.validate(), Error);

  ds = two_subject_dataset();
  ds.samples.erase({"U0", 1});
  EXPECT_THROW(ds.validate(), Error);

  ds = two_subject_dataset();
  ds.samples.at({"P0", 0}).image[0][0] = 1.5f;
  EXPECT_THROW(ds.validate(), Error);

  ds = two_subject_dataset();
  ds.records[0].split = Split::Val;  // paired outside train
  EXPECT_THROW(ds.validate(), Error);
}

TEST(Synth, DeterministicAndValid) {
  const auto a = synth_generate(tiny_spec());
  const auto b = synth_generate(tiny_spec());
  a.validate();
  EXPECT_EQ(a.config_hash, b.config_hash);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (const auto& [key, s] : a.samples) {
    EXPECT_TRUE(torch::equal(s.image, b.sample(key.first, key.second).image));
  }
  EXPECT_EQ(manifest_json(a), manifest_json(b));
  auto other = tiny_spec();
  other.seed = 12;
  EXPECT_NE(synth_generate(other).config_hash, a.config_hash);
}

TEST(Synth, DefaultDeskShape) {
  const SynthSpec s;
  EXPECT_EQ(s.n_subjects, 120);
  EXPECT_EQ(s.n_paired, 24);
  EXPECT_EQ(s.modality_count(), 4);
  EXPECT_EQ(s.height, 64);
  EXPECT_EQ(s.width, 64);
}

TEST(Synth, MasksAreStyleInvariant) {
  const auto ds = synth_generate(tiny_spec());
  for (const auto& r : ds.records) {
    if (!r.paired) continue;
    const auto& first = *ds.sample(r.subject_id, r.modalities[0]).mask;
    for (int64_t m : r.modalities) EXPECT_TRUE(torch::equal(first, *ds.sample(r.subject_id, m).mask));
    EXPECT_TRUE(torch::equal(first, content_masks(ds.content.at(r.subject_id))));
  }
}

TEST(Synth, StoredImagesAreAnalyticTargets) {
  const auto ds = synth_generate(tiny_spec());
  for (const auto& [key, s] : ds.samples) {
    EXPECT_TRUE(torch::equal(s.image, ground_truth_image(ds, key.first, key.second)));
  }
}

TEST(Synth, StyleMapsInvert) {
  const auto spec = tiny_spec();
  const auto u = synth_content_field(spec, 99);
  for (const auto& st : spec.styles) {
    const auto img = apply_style(u, st);
    EXPECT_LE(img.abs().max().item<double>(), 1.0);
    EXPECT_LT((invert_style(img, st) - u).abs().max().item<double>(), 1e-4) << st.name;
  }
}

TEST(Synth, TumorContrastDiffersAcrossModalities) {
  const auto spec = tiny_spec();
  const auto u = synth_content_field(spec, 5);
  const auto core = content_masks(u)[1].to(torch::kBool);
  ASSERT_TRUE(core.any().item<bool>());
  std::vector<double> means;
  for (const auto& st : spec.styles) means.push_back(apply_style(u, st).index({core}).mean().item<double>());
  EXPECT_GT(*std::max_element(means.begin(), means.end()), 0.5);
  EXPECT_LT(*std::min_element(means.begin(), means.end()), -0.5);
}

TEST(Synth, SaveLoadIsBitExact) {
  TempDir dir("synthrt");
  const auto ds = synth_generate(tiny_spec());
  save_dataset(ds, dir.path());
  const auto back = load_dataset(dir.path());
  EXPECT_EQ(back.config_hash, ds.config_hash);
  for (const auto& [key, s] : ds.samples) {
    const auto& t = back.sample(key.first, key.second);
    EXPECT_TRUE(torch::equal(s.image, t.image));
    EXPECT_TRUE(torch::equal(*s.mask, *t.mask));
  }
  for (const auto& [subj, u] : ds.content) EXPECT_TRUE(torch::equal(u, back.content.at(subj)));
  ASSERT_EQ(back.styles.size(), ds.styles.size());
  for (const auto& [key, s] : ds.samples) {
    EXPECT_TRUE(torch::equal(ground_truth_image(back, key.first, key.second), s.image));
  }
}

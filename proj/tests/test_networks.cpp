#include <gtest/gtest.h>

#include <set>

#include "semipair/networks.hpp"
#include "support.hpp"

using namespace semipair;
using testing_support::tiny_net;

namespace {

torch::Tensor images(int64_t b, int64_t hw, uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::rand({b, 1, hw, hw}, gen) * 2 - 1;
}

NetConfig full_net() {
  NetConfig n;
  n.height = 128;
  n.width = 128;
  n.modalities = 4;
  return n;
}

}  // namespace

TEST(Networks, FullScaleShapes) {
  torch::NoGradGuard ng;
  torch::manual_seed(0);
  const auto cfg = full_net();
  Generator g(cfg);
  Discriminator d(cfg);
  const auto x = images(8, 128, 1);
  const auto m = torch::tensor({0, 1, 2, 3, 0, 1, 2, 3}, torch::kLong);
  EXPECT_EQ(g->encode_style(x, m).sizes(), torch::IntArrayRef({8, 8}));
  const auto c = g->encode_content(x.slice(0, 0, 1), m.slice(0, 0, 1));
  EXPECT_EQ(c.levels(), 4);
  EXPECT_EQ(c.bottleneck().size(2), 8);
  EXPECT_EQ(c.bottleneck().size(3), 8);
  EXPECT_EQ(d(x.slice(0, 0, 1)).src_logits.sizes(), torch::IntArrayRef({1, 1, 8, 8}));
  EXPECT_NO_THROW(audit_shapes(cfg));
}

TEST(Networks, StyleLengthIndependentOfResolution) {
  torch::NoGradGuard ng;
  auto cfg = tiny_net(16);
  cfg.style_dim = 8;
  StyleEncoder e(cfg);
  for (int64_t hw : {16, 64, 128}) {
    auto input = torch::cat({images(2, hw, 2), torch::zeros({2, cfg.modalities, hw, hw})}, 1);
    EXPECT_EQ(e(input).sizes(), torch::IntArrayRef({2, 8}));
  }
}

TEST(Networks, AuditAcrossSizes) {
  auto cfg = tiny_net();
  for (int64_t hw : {8, 16, 24, 32}) {
    cfg.height = hw;
    cfg.width = hw;
    EXPECT_NO_THROW(audit_shapes(cfg)) << hw;
  }
  cfg.height = 10;
  EXPECT_THROW(audit_shapes(cfg), Error);
  EXPECT_THROW(Generator{cfg}, Error);
}

TEST(Networks, OutputRangesAndNormalization) {
  torch::NoGradGuard ng;
  torch::manual_seed(1);
  const auto cfg = tiny_net(16);
  Generator g(cfg);
  Discriminator d(cfg);
  const auto xa = images(3, 16, 3), xb = images(3, 16, 4);
  const auto ma = torch::tensor({0, 1, 2}, torch::kLong), mb = torch::tensor({1, 2, 0}, torch::kLong);
  const auto out = g->forward_pair(xa, ma, xb, mb);
  EXPECT_EQ(out.count(), 6);
  for (const auto* t : {&out.recon_a, &out.recon_b, &out.trans_ab, &out.trans_ba}) {
    EXPECT_EQ(t->sizes(), xa.sizes());
    EXPECT_LE(t->abs().max().item<double>(), 1.0);
  }
  for (const auto* t : {&out.seg_a, &out.seg_b}) {
    EXPECT_EQ(t->sizes(), torch::IntArrayRef({3, cfg.regions, 16, 16}));
    EXPECT_GE(t->min().item<double>(), 0.0);
    EXPECT_LE(t->max().item<double>(), 1.0);
  }
  const auto dout = d(xa);
  EXPECT_GT(dout.src().min().item<double>(), 0.0);
  EXPECT_LT(dout.src().max().item<double>(), 1.0);
  EXPECT_LT((dout.cls().sum(1) - 1).abs().max().item<double>(), 1e-6);
  EXPECT_EQ(g->forward_single(xa, ma).sizes(), torch::IntArrayRef({3, cfg.regions, 16, 16}));
}

TEST(Networks, PureForwardPasses) {
  torch::NoGradGuard ng;
  torch::manual_seed(2);
  const auto cfg = tiny_net(16);
  Generator g(cfg);
  Discriminator d(cfg);
  const auto x = images(2, 16, 5);
  const auto m = torch::tensor({1, 1}, torch::kLong);
  EXPECT_TRUE(torch::equal(g->encode_style(x, m), g->encode_style(x.clone(), m)));
  const auto c1 = g->encode_content(x, m), c2 = g->encode_content(x, m);
  for (int64_t k = 0; k < c1.levels(); ++k) {
    EXPECT_TRUE(torch::equal(c1.pyramid[static_cast<size_t>(k)], c2.pyramid[static_cast<size_t>(k)]));
  }
  EXPECT_TRUE(torch::equal(d(x).src_logits, d(x).src_logits));
  EXPECT_TRUE(torch::equal(d(x).cls_logits, d(x).cls_logits));
}

TEST(Networks, PyramidShapeIgnoresModality) {
  torch::NoGradGuard ng;
  const auto cfg = tiny_net(16);
  Generator g(cfg);
  const auto x = images(1, 16, 6);
  const auto ref = g->encode_content(x, torch::tensor({0}, torch::kLong));
  for (int64_t m = 1; m < cfg.modalities; ++m) {
    const auto c = g->encode_content(x, torch::tensor({m}, torch::kLong));
    ASSERT_EQ(c.levels(), cfg.content_levels);
    for (int64_t k = 0; k < c.levels(); ++k) {
      EXPECT_EQ(c.pyramid[static_cast<size_t>(k)].sizes(), ref.pyramid[static_cast<size_t>(k)].sizes());
    }
  }
}

TEST(Networks, StyleChangesTranslation) {
  torch::NoGradGuard ng;
  torch::manual_seed(3);
  const auto cfg = tiny_net(16);
  Generator g(cfg);
  const auto c = g->encode_content(images(1, 16, 7), torch::tensor({0}, torch::kLong));
  const auto s1 = torch::randn({1, cfg.style_dim});
  const auto s2 = torch::randn({1, cfg.style_dim});
  const auto diff = (g->decode_translation(c, s1) - g->decode_translation(c, s2)).abs().max().item<double>();
  EXPECT_GT(diff, 0.0);
}

TEST(Networks, SegmentationDependsOnContentOnly) {
  torch::NoGradGuard ng;
  const auto cfg = tiny_net(16);
  Generator g(cfg);
  const auto x = images(1, 16, 8);
  const auto m = torch::tensor({2}, torch::kLong);
  const auto content = g->encode_content(x, m);
  // Any two images with the same pyramid share their segmentation.
  const auto cloned = content.detach();
  EXPECT_TRUE(torch::equal(g->decode_segmentation(content), g->decode_segmentation(cloned)));
  EXPECT_TRUE(torch::equal(g->decode_segmentation(content), g->forward_single(x, m)));
}

TEST(Networks, TranslationEqualsReconstructionUnderSharedStyle) {
  torch::NoGradGuard ng;
  torch::manual_seed(4);
  const auto cfg = tiny_net(16);
  Generator g(cfg);
  const auto xa = images(2, 16, 9), xb = images(2, 16, 10);
  const auto ma = torch::tensor({0, 1}, torch::kLong), mb = torch::tensor({2, 0}, torch::kLong);
  const auto sa = g->encode_style(xa, ma);
  const auto out = g->forward_pair(xa, ma, xb, mb, true, sa);
  EXPECT_TRUE(torch::equal(out.trans_ab, out.recon_a));
  EXPECT_TRUE(torch::equal(out.style_b, sa));
  const auto plain = g->forward_pair(xa, ma, xb, mb);
  EXPECT_FALSE(torch::equal(plain.trans_ab, plain.recon_a));
}

TEST(Networks, ReconstructionOnlyPass) {
  torch::NoGradGuard ng;
  const auto cfg = tiny_net(16);
  Generator g(cfg);
  const auto x = images(2, 16, 11);
  const auto m = torch::tensor({0, 0}, torch::kLong);
  const auto out = g->forward_pair(x, m, x, m, false);
  EXPECT_FALSE(out.trans_ab.defined());
  EXPECT_FALSE(out.trans_ba.defined());
  EXPECT_EQ(out.count(), 4);
}

TEST(Networks, MismatchedInputsFail) {
  torch::NoGradGuard ng;
  const auto cfg = tiny_net(16);
  Generator g(cfg);
  const auto m = torch::tensor({0}, torch::kLong);
  EXPECT_THROW(g->forward_pair(images(1, 16, 1), m, images(2, 16, 1), torch::tensor({0, 0}, torch::kLong)), Error);
  EXPECT_THROW(g->encode_style(images(1, 8, 1), m), Error);
  EXPECT_THROW(g->encode_style(images(1, 16, 1), torch::tensor({0, 1}, torch::kLong)), Error);
  EXPECT_THROW(g->decode_translation(g->encode_content(images(1, 16, 1), m), torch::zeros({1, cfg.style_dim + 1})),
               Error);
}

TEST(Networks, OneParameterSetPerNetwork) {
  const auto cfg = tiny_net(16);
  Generator g(cfg);
  std::set<std::string> top;
  for (const auto& item : g->named_children()) top.insert(item.key());
  EXPECT_EQ(top, (std::set<std::string>{"E_s", "E_c", "D_t", "D_s"}));
  // The generator's parameters are exactly the union of its four networks'.
  size_t n = 0;
  for (const auto& item : g->named_children()) n += item.value()->parameters().size();
  EXPECT_EQ(g->parameters().size(), n);
  // No parameter tensor is shared between two networks.
  std::set<const void*> ptrs;
  for (const auto& p : g->parameters()) EXPECT_TRUE(ptrs.insert(p.data_ptr()).second);
}

TEST(Networks, ContentCodeHelpers) {
  ContentCode a{{torch::ones({2, 3, 4, 4}), torch::ones({2, 5, 2, 2})}};
  ContentCode b{{torch::zeros({1, 3, 4, 4}), torch::zeros({1, 5, 2, 2})}};
  const auto c = ContentCode::cat(a, b);
  EXPECT_EQ(c.bottleneck().size(0), 3);
  const auto s = c.slice(2, 3);
  EXPECT_TRUE(torch::equal(s.pyramid[0], b.pyramid[0]));
  EXPECT_THROW(ContentCode::cat(a, ContentCode{{torch::ones({1, 3, 4, 4})}}), Error);
}

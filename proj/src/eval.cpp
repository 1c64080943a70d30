#include "semipair/eval.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "semipair/rng.hpp"
#include "semipair/synth.hpp"

namespace semipair {

using nlohmann::json;

double dice_score(const torch::Tensor& pred, const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes()) throw Error("dice_score: shape mismatch");
  auto p = pred.to(torch::kFloat64).ne(0).to(torch::kFloat64);
  auto g = gt.to(torch::kFloat64).ne(0).to(torch::kFloat64);
  const double inter = (p * g).sum().item<double>();
  const double denom = p.sum().item<double>() + g.sum().item<double>();
  if (denom == 0.0) return 1.0;
  return 2.0 * inter / denom;
}

namespace {

torch::Tensor gaussian_window(const SsimParams& p) {
  auto r = torch::arange(p.window, torch::kFloat64) - static_cast<double>(p.window - 1) / 2.0;
  auto g = torch::exp(-(r * r) / (2.0 * p.sigma * p.sigma));
  return g / g.sum();
}

// Valid-mode separable filtering of [1, 1, H, W].
torch::Tensor filter(const torch::Tensor& x, const torch::Tensor& g) {
  const auto n = g.size(0);
  auto y = torch::conv2d(x, g.view({1, 1, n, 1}));
  return torch::conv2d(y, g.view({1, 1, 1, n}));
}

std::string fixed(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

json nan_to_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double null_to_nan(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

}  // namespace

double ssim(const torch::Tensor& x, const torch::Tensor& y, const SsimParams& p) {
  if (x.sizes() != y.sizes()) throw Error("ssim: shape mismatch");
  if (x.dim() != 2) throw Error("ssim expects [H, W] images");
  if (x.size(0) < p.window || x.size(1) < p.window) {
    throw Error("ssim: image smaller than the " + std::to_string(p.window) + "-pixel window");
  }
  const auto g = gaussian_window(p);
  auto a = x.to(torch::kFloat64).view({1, 1, x.size(0), x.size(1)});
  auto b = y.to(torch::kFloat64).view({1, 1, y.size(0), y.size(1)});
  const double c1 = std::pow(p.k1 * p.dynamic_range, 2);
  const double c2 = std::pow(p.k2 * p.dynamic_range, 2);
  auto mu_a = filter(a, g);
  auto mu_b = filter(b, g);
  auto var_a = filter(a * a, g) - mu_a * mu_a;
  auto var_b = filter(b * b, g) - mu_b * mu_b;
  auto cov = filter(a * b, g) - mu_a * mu_b;
  auto map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  return map.mean().item<double>();
}

// ---------------------------------------------------------------------------

double SegReport::aver(size_t region) const {
  const auto& row = dice.at(region);
  double s = 0.0;
  for (double v : row) s += v;
  return s / static_cast<double>(row.size());
}

json SegReport::to_json() const {
  json rows = json::array();
  for (size_t r = 0; r < regions.size(); ++r) rows.push_back(dice[r]);
  json aver_col = json::array();
  for (size_t r = 0; r < regions.size(); ++r) aver_col.push_back(aver(r));
  return {{"modalities", modalities}, {"regions", regions}, {"dice", rows}, {"aver", aver_col}, {"counts", counts}};
}

SegReport SegReport::from_json(const json& j) {
  SegReport r;
  r.modalities = j.at("modalities").get<std::vector<std::string>>();
  r.regions = j.at("regions").get<std::vector<std::string>>();
  r.dice = j.at("dice").get<std::vector<std::vector<double>>>();
  r.counts = j.at("counts").get<std::vector<int64_t>>();
  if (r.dice.size() != r.regions.size()) throw Error("seg report: one Dice row per region expected");
  for (const auto& row : r.dice) {
    if (row.size() != r.modalities.size()) throw Error("seg report: one Dice entry per modality expected");
  }
  return r;
}

std::string SegReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(8) << "Region";
  for (const auto& m : modalities) os << std::right << std::setw(9) << m;
  os << std::right << std::setw(9) << "Aver" << "\n";
  for (size_t r = 0; r < regions.size(); ++r) {
    os << std::left << std::setw(8) << regions[r];
    for (double v : dice[r]) os << std::right << std::setw(9) << fixed(100.0 * v, 2);
    os << std::right << std::setw(9) << fixed(100.0 * aver(r), 2) << "\n";
  }
  return os.str();
}

double TransReport::average() const {
  double s = 0.0;
  int n = 0;
  for (double v : ssim) {
    if (std::isnan(v)) continue;
    s += v;
    ++n;
  }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

json TransReport::to_json() const {
  json vals = json::array();
  for (double v : ssim) vals.push_back(nan_to_null(v));
  return {{"modalities", modalities}, {"ssim", vals}, {"counts", counts}, {"average", nan_to_null(average())}};
}

TransReport TransReport::from_json(const json& j) {
  TransReport r;
  r.modalities = j.at("modalities").get<std::vector<std::string>>();
  for (const auto& v : j.at("ssim")) r.ssim.push_back(null_to_nan(v));
  r.counts = j.at("counts").get<std::vector<int64_t>>();
  if (r.ssim.size() != r.modalities.size() || r.counts.size() != r.modalities.size()) {
    throw Error("translation report: one entry per modality expected");
  }
  return r;
}

std::string TransReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(8) << "Metric";
  for (const auto& m : modalities) os << std::right << std::setw(9) << m;
  os << std::right << std::setw(9) << "Aver" << "\n";
  os << std::left << std::setw(8) << "SSIM";
  for (double v : ssim) os << std::right << std::setw(9) << (std::isnan(v) ? std::string("-") : fixed(v));
  os << std::right << std::setw(9) << fixed(average()) << "\n";
  return os.str();
}

json StyleStats::to_json() const { return {{"max", max}, {"min", min}, {"mean", mean}, {"count", count}}; }

StyleStats StyleStats::from_json(const json& j) {
  StyleStats s;
  s.max = j.at("max").get<double>();
  s.min = j.at("min").get<double>();
  s.mean = j.at("mean").get<double>();
  s.count = j.at("count").get<int64_t>();
  return s;
}

// ---------------------------------------------------------------------------

SegReport evaluate_segmentation(Model& model, const SemiPairedDataset& ds, Split split) {
  const auto samples = ds.split_samples(split);
  if (samples.empty()) throw Error("split " + to_string(split) + " has no samples");
  return segmentation_report(ds, samples, binarize(predict(model, samples)));
}

SegReport segmentation_report(const SemiPairedDataset& ds, const std::vector<const Sample*>& samples,
                              const torch::Tensor& pred) {
  if (samples.empty()) throw Error("no samples to evaluate");
  if (pred.dim() != 4 || pred.size(0) != static_cast<int64_t>(samples.size()) || pred.size(1) != ds.region_count()) {
    throw Error("predictions must be [N, R, H, W] with one row per sample");
  }
  const auto M = static_cast<size_t>(ds.modality_count());
  const auto R = static_cast<size_t>(ds.region_count());
  SegReport rep;
  rep.modalities = ds.modality_names;
  rep.regions = ds.region_names;
  rep.dice.assign(R, std::vector<double>(M, 0.0));
  rep.counts.assign(M, 0);

  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = *samples[i];
    if (!s.mask) throw Error("sample of subject '" + s.subject_id + "' has no mask");
    const auto m = static_cast<size_t>(s.modality.index);
    for (size_t r = 0; r < R; ++r) {
      rep.dice[r][m] += dice_score(pred[static_cast<int64_t>(i)][static_cast<int64_t>(r)],
                                   (*s.mask)[static_cast<int64_t>(r)]);
    }
    ++rep.counts[m];
  }
  for (size_t m = 0; m < M; ++m) {
    if (rep.counts[m] == 0) throw Error("no " + ds.modality_names[m] + " samples to evaluate");
    for (size_t r = 0; r < R; ++r) rep.dice[r][m] /= static_cast<double>(rep.counts[m]);
  }
  return rep;
}

torch::Tensor mean_style_codes(Model& model, const SemiPairedDataset& ds, Split split) {
  const auto samples = ds.split_samples(split);
  if (samples.empty()) throw Error("split " + to_string(split) + " has no samples");
  torch::NoGradGuard no_grad;
  const Batch b = make_batch(samples, model.dtype);
  const auto styles = model.generator->encode_style(b.images, b.modalities);
  auto out = torch::zeros({ds.modality_count(), model.net.style_dim}, styles.options());
  for (int64_t m = 0; m < ds.modality_count(); ++m) {
    const auto rows = b.modalities.eq(m);
    if (!rows.any().item<bool>()) {
      throw Error("split " + to_string(split) + " has no " + ds.modality_names[static_cast<size_t>(m)] + " samples");
    }
    out[m] = styles.index({rows}).mean(0);
  }
  return out;
}

torch::Tensor translate(Model& model, const Sample& sample, const torch::Tensor& style) {
  torch::NoGradGuard no_grad;
  auto image = sample.image.unsqueeze(0).unsqueeze(0).to(model.dtype);
  auto mod = torch::tensor({sample.modality.index}, torch::kLong);
  auto content = model.generator->encode_content(image, mod);
  return model.generator->decode_translation(content, style.to(model.dtype).view({1, -1}))[0][0];
}

TransReport evaluate_translation(Model& model, const SemiPairedDataset& ds, Split split) {
  if (!ds.has_ground_truth()) throw Error("translation targets need a dataset with analytic ground truth");
  const auto samples = ds.split_samples(split);
  if (samples.empty()) throw Error("split " + to_string(split) + " has no samples");
  const auto styles = mean_style_codes(model, ds, split);
  const int64_t M = ds.modality_count();
  TransReport rep;
  rep.modalities = ds.modality_names;
  std::vector<double> sums(static_cast<size_t>(M), 0.0);
  rep.counts.assign(static_cast<size_t>(M), 0);

  torch::NoGradGuard no_grad;
  const Batch b = make_batch(samples, model.dtype);
  const auto content = model.generator->encode_content(b.images, b.modalities);
  for (int64_t target = 0; target < M; ++target) {
    std::vector<int64_t> rows;
    for (size_t i = 0; i < samples.size(); ++i) {
      if (samples[i]->modality.index != target) rows.push_back(static_cast<int64_t>(i));
    }
    if (rows.empty()) continue;
    const auto idx = torch::tensor(rows, torch::kLong);
    ContentCode sub;
    for (const auto& t : content.pyramid) sub.pyramid.push_back(t.index_select(0, idx));
    const auto style = styles[target].unsqueeze(0).expand({static_cast<int64_t>(rows.size()), -1});
    const auto out = model.generator->decode_translation(sub, style);
    for (size_t k = 0; k < rows.size(); ++k) {
      const Sample& s = *samples[static_cast<size_t>(rows[k])];
      sums[static_cast<size_t>(target)] += ssim(out[static_cast<int64_t>(k)][0], ground_truth_image(ds, s.subject_id, target));
      ++rep.counts[static_cast<size_t>(target)];
    }
  }
  for (int64_t m = 0; m < M; ++m) {
    const auto c = rep.counts[static_cast<size_t>(m)];
    rep.ssim.push_back(c ? sums[static_cast<size_t>(m)] / static_cast<double>(c)
                         : std::numeric_limits<double>::quiet_NaN());
  }
  return rep;
}

Interpolation interpolate_style(Model& model, const Sample& sample, int64_t dim, double lo, double hi, int64_t steps) {
  if (dim < 0 || dim >= model.net.style_dim) {
    throw Error("style dimension " + std::to_string(dim) + " outside [0, " + std::to_string(model.net.style_dim) + ")");
  }
  if (!(lo < hi)) throw Error("interpolation range needs lo < hi");
  if (steps < 1) throw Error("interpolation needs at least one step");
  torch::NoGradGuard no_grad;
  auto image = sample.image.unsqueeze(0).unsqueeze(0).to(model.dtype);
  auto mod = torch::tensor({sample.modality.index}, torch::kLong);
  auto& G = model.generator;
  const auto style = G->encode_style(image, mod);
  const auto content = G->encode_content(image, mod);
  Interpolation out;
  for (int64_t k = 0; k < steps; ++k) {
    const double v = steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(steps - 1);
    auto s = style.clone();
    s.index_put_({0, dim}, v);
    out.values.push_back(v);
    out.images.push_back(G->decode_translation(content, s)[0][0]);
    out.segs.push_back(G->decode_segmentation(content)[0]);
  }
  return out;
}

StyleStats style_statistics(Model& model, const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw Error("style statistics need at least one sample");
  torch::NoGradGuard no_grad;
  const Batch b = make_batch(samples, model.dtype);
  const auto s = model.generator->encode_style(b.images, b.modalities).to(torch::kFloat64);
  StyleStats st;
  st.max = s.max().item<double>();
  st.min = s.min().item<double>();
  st.mean = s.mean().item<double>();
  st.count = s.numel();
  return st;
}

ContentProbe content_distance_probe(Model& model, const SemiPairedDataset& ds, Split split, uint64_t seed) {
  // Each probe subject contributes its images in two modalities. With analytic
  // ground truth any split works; otherwise only paired subjects do.
  struct Entry {
    std::string subject;
    int64_t m1, m2;
  };
  Rng rng(seed);
  const int64_t M = ds.modality_count();
  if (M < 2) throw Error("content probe needs at least two modalities");
  std::vector<Entry> entries;
  for (const auto* r : ds.split_records(split)) {
    if (ds.has_ground_truth()) {
      const int64_t m1 = r->modalities.front();
      int64_t m2 = static_cast<int64_t>(uniform_index(rng, static_cast<size_t>(M - 1)));
      if (m2 >= m1) ++m2;
      entries.push_back({r->subject_id, m1, m2});
    } else if (r->modalities.size() >= 2) {
      entries.push_back({r->subject_id, r->modalities[0], r->modalities[1]});
    }
  }
  if (entries.size() < 2) throw Error("content probe needs at least two subjects with two modalities");

  auto image_of = [&](const std::string& subj, int64_t m) {
    return ds.has_ground_truth() ? ground_truth_image(ds, subj, m) : ds.sample(subj, m).image;
  };
  std::vector<torch::Tensor> images;
  std::vector<int64_t> mods;
  for (const auto& e : entries) {
    images.push_back(image_of(e.subject, e.m1));
    mods.push_back(e.m1);
    images.push_back(image_of(e.subject, e.m2));
    mods.push_back(e.m2);
  }
  torch::NoGradGuard no_grad;
  const auto x = torch::stack(images).unsqueeze(1).to(model.dtype);
  const auto code = model.generator->encode_content(x, torch::tensor(mods, torch::kLong)).bottleneck().to(torch::kFloat64);
  auto dist = [&](int64_t i, int64_t j) { return (code[i] - code[j]).abs().mean().item<double>(); };

  ContentProbe p;
  const auto n = static_cast<int64_t>(entries.size());
  for (int64_t i = 0; i < n; ++i) {
    p.paired += dist(2 * i, 2 * i + 1);
    ++p.paired_count;
    // A random partner of another subject, in a modality other than this image's.
    int64_t j = static_cast<int64_t>(uniform_index(rng, static_cast<size_t>(n - 1)));
    if (j >= i) ++j;
    const int64_t slot = mods[static_cast<size_t>(2 * j)] != mods[static_cast<size_t>(2 * i)] ? 2 * j : 2 * j + 1;
    p.random += dist(2 * i, slot);
    ++p.random_count;
  }
  p.paired /= static_cast<double>(p.paired_count);
  p.random /= static_cast<double>(p.random_count);
  return p;
}

}  // namespace semipair

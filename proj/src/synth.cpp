#include "semipair/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "semipair/rng.hpp"

namespace semipair {

using nlohmann::json;

std::vector<ModalityStyle> SynthSpec::default_styles() {
  // T1ce: enhancing core, dark edema. T1: tumor dark. T2: tumor bright.
  // Flair: edema bright, core dark.
  return {
      {"T1ce", -0.45, 0.55, 0.8, -1, +1},
      {"T1", -0.50, 0.50, 1.0, -1, -1},
      {"T2", -0.55, 0.60, 1.3, +1, +1},
      {"Flair", -0.40, 0.45, 1.6, +1, -1},
  };
}

void SynthSpec::validate() const {
  if (styles.empty()) throw Error("synth spec needs at least one modality style");
  if (height < 16 || width < 16) throw Error("synth images must be at least 16x16");
  if (n_subjects < 1) throw Error("n_subjects must be positive");
  if (n_train + n_val + n_test > n_subjects) throw Error("split counts exceed n_subjects");
  if (n_paired > 0 && modality_count() < 2) throw Error("paired subjects need two or more modalities");
  if (!(0.0 < head_axis_min && head_axis_min <= head_axis_max && head_axis_max < 0.5)) {
    throw Error("head axis range must lie in (0, 0.5)");
  }
  if (!(0.0 < tumor_axis_min && tumor_axis_min <= tumor_axis_max && tumor_axis_max < head_axis_min)) {
    throw Error("tumor axis range must be positive and smaller than the head");
  }
  if (!(0.0 < core_ratio_min && core_ratio_min <= core_ratio_max && core_ratio_max < 1.0)) {
    throw Error("core ratio range must lie in (0, 1)");
  }
  for (const auto& s : styles) {
    if (!(s.gain > 0.0) || !(s.gamma > 0.0)) throw Error("style '" + s.name + "': gain and gamma must be positive");
    if (s.bias < bands::kTissueOutLo - 1e-12 || s.bias + s.gain > bands::kTissueOutHi + 1e-12) {
      throw Error("style '" + s.name + "': tissue intensities must stay within [-0.6, 0.2]");
    }
    if (std::abs(s.edema_sign) != 1 || std::abs(s.core_sign) != 1) {
      throw Error("style '" + s.name + "': contrast signs must be +1 or -1");
    }
  }
}

json to_json(const SynthSpec& s) {
  json styles = json::array();
  for (const auto& st : s.styles) {
    styles.push_back({{"name", st.name},
                      {"bias", st.bias},
                      {"gain", st.gain},
                      {"gamma", st.gamma},
                      {"edema_sign", st.edema_sign},
                      {"core_sign", st.core_sign}});
  }
  return json{{"n_subjects", s.n_subjects},
              {"n_train", s.n_train},
              {"n_val", s.n_val},
              {"n_test", s.n_test},
              {"n_paired", s.n_paired},
              {"height", s.height},
              {"width", s.width},
              {"seed", s.seed},
              {"head_axis_min", s.head_axis_min},
              {"head_axis_max", s.head_axis_max},
              {"tumor_axis_min", s.tumor_axis_min},
              {"tumor_axis_max", s.tumor_axis_max},
              {"core_ratio_min", s.core_ratio_min},
              {"core_ratio_max", s.core_ratio_max},
              {"styles", styles}};
}

void merge_synth_spec(SynthSpec& s, const json& j) {
  if (!j.is_object()) throw Error("synth spec must be a JSON object");
  const json known = to_json(SynthSpec{});
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error("unknown synth key '" + key + "'");
  }
  auto take = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  try {
    take("n_subjects", s.n_subjects);
    take("n_train", s.n_train);
    take("n_val", s.n_val);
    take("n_test", s.n_test);
    take("n_paired", s.n_paired);
    take("height", s.height);
    take("width", s.width);
    take("seed", s.seed);
    take("head_axis_min", s.head_axis_min);
    take("head_axis_max", s.head_axis_max);
    take("tumor_axis_min", s.tumor_axis_min);
    take("tumor_axis_max", s.tumor_axis_max);
    take("core_ratio_min", s.core_ratio_min);
    take("core_ratio_max", s.core_ratio_max);
    if (j.contains("styles")) {
      s.styles.clear();
      for (const auto& st : j["styles"]) {
        s.styles.push_back({st.at("name").get<std::string>(), st.at("bias").get<double>(), st.at("gain").get<double>(),
                            st.at("gamma").get<double>(), st.at("edema_sign").get<int>(),
                            st.at("core_sign").get<int>()});
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("synth spec: ") + e.what());
  }
}

namespace {

double style_value(double u, const ModalityStyle& s) {
  using namespace bands;
  if (u < 0.5 * kTissueLo) return -1.0;
  if (u <= 0.5 * (kTissueHi + kEdemaLo)) {
    const double v = std::clamp((u - kTissueLo) / (kTissueHi - kTissueLo), 0.0, 1.0);
    return s.bias + s.gain * std::pow(v, s.gamma);
  }
  if (u < 0.5 * (kEdemaHi + kCoreLo)) {
    const double w = std::clamp((u - kEdemaLo) / (kEdemaHi - kEdemaLo), 0.0, 1.0);
    return s.edema_sign > 0 ? kBrightEdemaLo + (kBrightEdemaHi - kBrightEdemaLo) * w
                            : kDarkEdemaHi - (kDarkEdemaHi - kDarkEdemaLo) * w;
  }
  const double w = std::clamp((u - kCoreLo) / (kCoreHi - kCoreLo), 0.0, 1.0);
  return s.core_sign > 0 ? kBrightCoreLo + (kBrightCoreHi - kBrightCoreLo) * w
                         : kDarkCoreHi - (kDarkCoreHi - kDarkCoreLo) * w;
}

double inverse_style_value(double x, const ModalityStyle& s) {
  using namespace bands;
  constexpr double tol = 1e-6;
  if (x <= -1.0 + tol) return 0.0;
  if (x >= s.bias - tol && x <= s.bias + s.gain + tol) {
    const double v = std::clamp((x - s.bias) / s.gain, 0.0, 1.0);
    return kTissueLo + (kTissueHi - kTissueLo) * std::pow(v, 1.0 / s.gamma);
  }
  auto lerp_back = [](double x, double lo, double hi) { return std::clamp((x - lo) / (hi - lo), 0.0, 1.0); };
  const bool bright = x > s.bias + s.gain;
  if (bright && x < 0.5 * (kBrightEdemaHi + kBrightCoreLo)) {
    if (s.edema_sign < 0) throw Error("intensity does not belong to style '" + s.name + "'");
    return kEdemaLo + (kEdemaHi - kEdemaLo) * lerp_back(x, kBrightEdemaLo, kBrightEdemaHi);
  }
  if (bright) {
    if (s.core_sign < 0) throw Error("intensity does not belong to style '" + s.name + "'");
    return kCoreLo + (kCoreHi - kCoreLo) * lerp_back(x, kBrightCoreLo, kBrightCoreHi);
  }
  if (x > 0.5 * (kDarkEdemaLo + kDarkCoreHi)) {
    if (s.edema_sign > 0) throw Error("intensity does not belong to style '" + s.name + "'");
    return kEdemaLo + (kEdemaHi - kEdemaLo) * (kDarkEdemaHi - x) / (kDarkEdemaHi - kDarkEdemaLo);
  }
  if (s.core_sign > 0) throw Error("intensity does not belong to style '" + s.name + "'");
  return kCoreLo + (kCoreHi - kCoreLo) * std::clamp((kDarkCoreHi - x) / (kDarkCoreHi - kDarkCoreLo), 0.0, 1.0);
}

template <typename F>
torch::Tensor map_pixels(const torch::Tensor& in, F&& f) {
  auto src = in.to(torch::kFloat32).contiguous();
  auto out = torch::empty_like(src);
  const float* p = src.data_ptr<float>();
  float* q = out.data_ptr<float>();
  for (int64_t i = 0; i < src.numel(); ++i) q[i] = static_cast<float>(f(static_cast<double>(p[i])));
  return out;
}

struct Ellipse {
  double cx, cy, a, b, theta;

  // Normalized radius: <= 1 inside.
  double radius(double x, double y) const {
    const double c = std::cos(theta), s = std::sin(theta);
    const double dx = x - cx, dy = y - cy;
    const double u = (c * dx + s * dy) / a;
    const double v = (-s * dx + c * dy) / b;
    return std::sqrt(u * u + v * v);
  }
};

}  // namespace

torch::Tensor apply_style(const torch::Tensor& content, const ModalityStyle& style) {
  return map_pixels(content, [&](double u) { return style_value(u, style); });
}

torch::Tensor invert_style(const torch::Tensor& image, const ModalityStyle& style) {
  return map_pixels(image, [&](double x) { return inverse_style_value(x, style); });
}

torch::Tensor content_masks(const torch::Tensor& content) {
  using namespace bands;
  auto wt = content.ge(0.5 * (kTissueHi + kEdemaLo));
  auto tc = content.ge(0.5 * (kEdemaHi + kCoreLo));
  return torch::stack({wt, tc}).to(torch::kUInt8);
}

torch::Tensor ground_truth_image(const SemiPairedDataset& ds, const std::string& subject, int64_t modality) {
  if (!ds.has_ground_truth()) throw Error("dataset carries no analytic ground truth");
  auto it = ds.content.find(subject);
  if (it == ds.content.end()) throw Error("no content field for subject '" + subject + "'");
  if (modality < 0 || modality >= static_cast<int64_t>(ds.styles.size())) throw Error("modality out of range");
  return apply_style(it->second, ds.styles[static_cast<size_t>(modality)]);
}

torch::Tensor synth_content_field(const SynthSpec& spec, uint64_t subject_seed) {
  const int64_t H = spec.height, W = spec.width;
  const double size = static_cast<double>(W);
  const double scale_y = static_cast<double>(H) / size;
  Rng rng(subject_seed);

  Ellipse head{0.5 * W + uniform(rng, -0.03, 0.03) * size, 0.5 * H + uniform(rng, -0.03, 0.03) * H,
               uniform(rng, spec.head_axis_min, spec.head_axis_max) * size,
               uniform(rng, spec.head_axis_min, spec.head_axis_max) * size * scale_y,
               uniform(rng, 0.0, std::numbers::pi)};

  // Smooth tissue texture: gaussian blobs plus one low-frequency wave.
  struct Blob {
    double x, y, s, amp;
  };
  std::vector<Blob> blobs(6);
  for (auto& bl : blobs) {
    bl = {uniform(rng, 0.2, 0.8) * W, uniform(rng, 0.2, 0.8) * H, uniform(rng, 0.06, 0.18) * size,
          uniform(rng, -1.0, 1.0)};
  }
  const double fx = uniform(rng, 1.0, 3.0) * 2.0 * std::numbers::pi / W;
  const double fy = uniform(rng, 1.0, 3.0) * 2.0 * std::numbers::pi / H;
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);

  // Tumor: resampled until it lies well inside the head and is not degenerate.
  Ellipse tumor{};
  double core_ratio = 0.5;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 1000) throw Error("synth: could not place a tumor inside the head");
    const double rr = std::sqrt(uniform01(rng)) * 0.6;
    const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    tumor = {head.cx + rr * head.a * std::cos(ang), head.cy + rr * head.b * std::sin(ang),
             uniform(rng, spec.tumor_axis_min, spec.tumor_axis_max) * size,
             uniform(rng, spec.tumor_axis_min, spec.tumor_axis_max) * size * scale_y,
             uniform(rng, 0.0, std::numbers::pi)};
    core_ratio = uniform(rng, spec.core_ratio_min, spec.core_ratio_max);
    int64_t wt = 0, core = 0;
    bool inside = true;
    for (int64_t y = 0; y < H && inside; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        const double r = tumor.radius(x + 0.5, y + 0.5);
        if (r > 1.0) continue;
        ++wt;
        if (r <= core_ratio) ++core;
        if (head.radius(x + 0.5, y + 0.5) > 0.92) {
          inside = false;
          break;
        }
      }
    }
    if (inside && wt >= 8 && core >= 2) break;
  }

  std::vector<double> tissue(static_cast<size_t>(H * W), 0.0);
  double lo = 1e300, hi = -1e300;
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double t = 0.35 * std::sin(fx * px + fy * py + phase);
      for (const auto& bl : blobs) {
        const double d2 = (px - bl.x) * (px - bl.x) + (py - bl.y) * (py - bl.y);
        t += bl.amp * std::exp(-d2 / (2.0 * bl.s * bl.s));
      }
      tissue[static_cast<size_t>(y * W + x)] = t;
      if (head.radius(px, py) <= 1.0) {
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      }
    }
  }
  const double span = std::max(hi - lo, 1e-9);

  using namespace bands;
  auto field = torch::zeros({H, W}, torch::kFloat32);
  auto acc = field.accessor<float, 2>();
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double u = 0.0;
      const double rt = tumor.radius(px, py);
      if (rt <= core_ratio) {
        u = kCoreLo + (kCoreHi - kCoreLo) * (1.0 - rt / core_ratio);
      } else if (rt <= 1.0) {
        u = kEdemaLo + (kEdemaHi - kEdemaLo) * (1.0 - rt) / (1.0 - core_ratio);
      } else if (head.radius(px, py) <= 1.0) {
        const double t = std::clamp((tissue[static_cast<size_t>(y * W + x)] - lo) / span, 0.0, 1.0);
        u = kTissueLo + (kTissueHi - kTissueLo) * t;
      }
      acc[y][x] = static_cast<float>(u);
    }
  }
  return field;
}

SemiPairedDataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  const int64_t M = spec.modality_count();

  std::vector<SubjectRecord> candidates;
  std::map<std::string, torch::Tensor> fields;
  for (int64_t i = 0; i < spec.n_subjects; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "S%03lld", static_cast<long long>(i));
    SubjectRecord r;
    r.subject_id = id;
    for (int64_t m = 0; m < M; ++m) r.modalities.push_back(m);
    candidates.push_back(r);
    fields[id] = synth_content_field(spec, derive_seed(spec.seed, static_cast<uint64_t>(i)));
  }

  SemiPairedDataset ds;
  ds.height = spec.height;
  ds.width = spec.width;
  for (const auto& s : spec.styles) ds.modality_names.push_back(s.name);
  ds.region_names = {"WT", "TC"};
  ds.styles = spec.styles;
  ds.config_hash = config_hash(to_json(spec));
  ds.records = plan_splits(candidates, M, spec.n_train, spec.n_val, spec.n_test, spec.n_paired,
                           derive_seed(spec.seed, 0xC0FFEE));
  for (const auto& r : ds.records) {
    const auto& field = fields.at(r.subject_id);
    ds.content[r.subject_id] = field;
    const auto masks = content_masks(field);
    for (int64_t m : r.modalities) {
      ds.samples.emplace(SemiPairedDataset::Key{r.subject_id, m},
                         Sample{r.subject_id, ds.modality(m), apply_style(field, spec.styles[static_cast<size_t>(m)]),
                                masks.clone()});
    }
  }
  ds.validate();
  return ds;
}

}  // namespace semipair

#include "semipair/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace semipair {

std::string to_string(AugmentKind k) {
  switch (k) {
    case AugmentKind::HFlip:
      return "hflip";
    case AugmentKind::VFlip:
      return "vflip";
    case AugmentKind::Rotate:
      return "rotate";
    case AugmentKind::Zoom:
      return "zoom";
    case AugmentKind::Elastic:
      return "elastic";
    case AugmentKind::Shift:
      return "shift";
  }
  return "?";
}

void AugmentOp::validate() const {
  switch (kind) {
    case AugmentKind::Rotate:
      if (!(angle_deg >= 0.0 && angle_deg < 360.0)) throw Error("rotate angle must lie in [0, 360)");
      break;
    case AugmentKind::Zoom:
      if (!(ratio >= 0.8 && ratio <= 1.2)) throw Error("zoom ratio must lie in [0.8, 1.2]");
      break;
    case AugmentKind::Elastic:
      if (!(alpha >= 0.0) || !(sigma > 0.0)) throw Error("elastic alpha must be >= 0 and sigma > 0");
      break;
    case AugmentKind::Shift:
      if (std::abs(dx) > 20 || std::abs(dy) > 20) throw Error("shift must not exceed 20 px per axis");
      break;
    default:
      break;
  }
}

nlohmann::json to_json(const AugmentOp& op) {
  nlohmann::json j{{"kind", to_string(op.kind)}};
  switch (op.kind) {
    case AugmentKind::Rotate:
      j["angle_deg"] = op.angle_deg;
      break;
    case AugmentKind::Zoom:
      j["ratio"] = op.ratio;
      break;
    case AugmentKind::Elastic:
      j["alpha"] = op.alpha;
      j["sigma"] = op.sigma;
      j["seed"] = op.seed;
      break;
    case AugmentKind::Shift:
      j["dx"] = op.dx;
      j["dy"] = op.dy;
      break;
    default:
      break;
  }
  return j;
}

namespace {

// Source coordinates (x, y) for every output pixel.
struct Warp {
  int64_t H, W;
  std::vector<double> sx, sy;
};

std::vector<double> gaussian_smooth(const std::vector<double>& f, int64_t H, int64_t W, double sigma) {
  const int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(4.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int64_t i = -radius; i <= radius; ++i) {
    k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[static_cast<size_t>(i + radius)];
  }
  for (auto& v : k) v /= sum;
  // Zero padding outside the frame.
  std::vector<double> tmp(f.size(), 0.0), out(f.size(), 0.0);
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int64_t i = -radius; i <= radius; ++i) {
        const int64_t xx = x + i;
        if (xx >= 0 && xx < W) acc += k[static_cast<size_t>(i + radius)] * f[static_cast<size_t>(y * W + xx)];
      }
      tmp[static_cast<size_t>(y * W + x)] = acc;
    }
  }
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int64_t i = -radius; i <= radius; ++i) {
        const int64_t yy = y + i;
        if (yy >= 0 && yy < H) acc += k[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(yy * W + x)];
      }
      out[static_cast<size_t>(y * W + x)] = acc;
    }
  }
  return out;
}

Warp make_warp(const AugmentOp& op, int64_t H, int64_t W) {
  Warp w{H, W, std::vector<double>(static_cast<size_t>(H * W)), std::vector<double>(static_cast<size_t>(H * W))};
  const double cx = 0.5 * static_cast<double>(W - 1);
  const double cy = 0.5 * static_cast<double>(H - 1);
  std::vector<double> ex, ey;
  if (op.kind == AugmentKind::Elastic) {
    Rng rng(op.seed);
    std::vector<double> fx(w.sx.size()), fy(w.sx.size());
    for (auto& v : fx) v = uniform(rng, -1.0, 1.0);
    for (auto& v : fy) v = uniform(rng, -1.0, 1.0);
    ex = gaussian_smooth(fx, H, W, op.sigma);
    ey = gaussian_smooth(fy, H, W, op.sigma);
  }
  const double th = op.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      const auto i = static_cast<size_t>(y * W + x);
      const double px = static_cast<double>(x), py = static_cast<double>(y);
      double qx = px, qy = py;
      switch (op.kind) {
        case AugmentKind::HFlip:
          qx = static_cast<double>(W - 1 - x);
          break;
        case AugmentKind::VFlip:
          qy = static_cast<double>(H - 1 - y);
          break;
        case AugmentKind::Rotate: {
          // Inverse rotation about the image center.
          const double dx = px - cx, dy = py - cy;
          qx = cx + c * dx + s * dy;
          qy = cy - s * dx + c * dy;
          break;
        }
        case AugmentKind::Zoom:
          qx = cx + (px - cx) / op.ratio;
          qy = cy + (py - cy) / op.ratio;
          break;
        case AugmentKind::Elastic:
          qx = px + op.alpha * ex[i];
          qy = py + op.alpha * ey[i];
          break;
        case AugmentKind::Shift:
          qx = px - static_cast<double>(op.dx);
          qy = py - static_cast<double>(op.dy);
          break;
      }
      w.sx[i] = qx;
      w.sy[i] = qy;
    }
  }
  return w;
}

torch::Tensor warp_bilinear(const Warp& w, const torch::Tensor& image, float fill) {
  auto src = image.to(torch::kFloat32).contiguous();
  auto out = torch::empty({w.H, w.W}, torch::kFloat32);
  const float* p = src.data_ptr<float>();
  float* q = out.data_ptr<float>();
  auto at = [&](int64_t x, int64_t y) -> double {
    if (x < 0 || y < 0 || x >= w.W || y >= w.H) return fill;
    return p[y * w.W + x];
  };
  for (size_t i = 0; i < w.sx.size(); ++i) {
    const double x = w.sx[i], y = w.sy[i];
    const double x0 = std::floor(x), y0 = std::floor(y);
    const double fx = x - x0, fy = y - y0;
    const auto ix = static_cast<int64_t>(x0), iy = static_cast<int64_t>(y0);
    double v = at(ix, iy);
    if (fx != 0.0 || fy != 0.0) {
      v = (1.0 - fy) * ((1.0 - fx) * at(ix, iy) + fx * at(ix + 1, iy)) +
          fy * ((1.0 - fx) * at(ix, iy + 1) + fx * at(ix + 1, iy + 1));
    }
    q[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

torch::Tensor warp_nearest(const Warp& w, const torch::Tensor& mask) {
  auto src = mask.to(torch::kUInt8).contiguous();
  const int64_t R = src.size(0);
  auto out = torch::zeros({R, w.H, w.W}, torch::kUInt8);
  const uint8_t* p = src.data_ptr<uint8_t>();
  uint8_t* q = out.data_ptr<uint8_t>();
  const int64_t plane = w.H * w.W;
  for (size_t i = 0; i < w.sx.size(); ++i) {
    const auto ix = static_cast<int64_t>(std::floor(w.sx[i] + 0.5));
    const auto iy = static_cast<int64_t>(std::floor(w.sy[i] + 0.5));
    if (ix < 0 || iy < 0 || ix >= w.W || iy >= w.H) continue;
    for (int64_t r = 0; r < R; ++r) {
      q[r * plane + static_cast<int64_t>(i)] = p[r * plane + iy * w.W + ix] ? 1 : 0;
    }
  }
  return out;
}

}  // namespace

std::pair<torch::Tensor, std::optional<torch::Tensor>> apply(const AugmentOp& op, const torch::Tensor& image,
                                                             const std::optional<torch::Tensor>& mask) {
  op.validate();
  if (image.dim() != 2) throw Error("augment expects a 2-D image");
  const int64_t H = image.size(0), W = image.size(1);
  if (mask && (mask->dim() != 3 || mask->size(1) != H || mask->size(2) != W)) {
    throw Error("augment: mask shape does not match the image");
  }
  const Warp w = make_warp(op, H, W);
  std::optional<torch::Tensor> out_mask;
  if (mask) out_mask = warp_nearest(w, *mask);
  return {warp_bilinear(w, image, -1.0f), out_mask};
}

AugmentOp random_op(AugmentKind kind, const AugmentConfig& cfg, Rng& rng) {
  switch (kind) {
    case AugmentKind::HFlip:
      return AugmentOp::hflip();
    case AugmentKind::VFlip:
      return AugmentOp::vflip();
    case AugmentKind::Rotate:
      return AugmentOp::rotate(uniform(rng, 0.0, 360.0));
    case AugmentKind::Zoom:
      return AugmentOp::zoom(uniform(rng, cfg.zoom_min, cfg.zoom_max));
    case AugmentKind::Elastic:
      return AugmentOp::elastic(cfg.elastic_alpha, cfg.elastic_sigma, rng());
    case AugmentKind::Shift: {
      const auto m = static_cast<int64_t>(std::floor(std::min(cfg.max_shift_px, 20.0)));
      return AugmentOp::shift(uniform_int(rng, -m, m), uniform_int(rng, -m, m));
    }
  }
  throw Error("unknown augmentation kind");
}

ViewPair make_view_pair(const Sample& sample, const AugmentConfig& cfg, Rng& rng) {
  if (!sample.mask) throw Error("view pairs require a segmentation mask (subject '" + sample.subject_id + "')");
  const auto k1 = static_cast<int>(uniform_index(rng, kAugmentKinds));
  auto k2 = static_cast<int>(uniform_index(rng, kAugmentKinds - 1));
  if (k2 >= k1) ++k2;
  ViewPair vp;
  vp.op1 = random_op(static_cast<AugmentKind>(k1), cfg, rng);
  vp.op2 = random_op(static_cast<AugmentKind>(k2), cfg, rng);
  vp.source_subject = sample.subject_id;
  vp.modality = sample.modality;
  auto [img1, m1] = apply(vp.op1, sample.image, sample.mask);
  auto [img2, m2] = apply(vp.op2, sample.image, sample.mask);
  vp.view1 = Sample{sample.subject_id, sample.modality, img1, m1};
  vp.view2 = Sample{sample.subject_id, sample.modality, img2, m2};
  return vp;
}

}  // namespace semipair

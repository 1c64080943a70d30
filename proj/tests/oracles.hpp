#pragma once

#include <cmath>
#include <vector>

#include <torch/torch.h>

// Loop-based reference implementations, written independently of the
// tensor code they check.
namespace oracles {

inline double dice(const torch::Tensor& pred, const torch::Tensor& gt) {
  auto p = pred.contiguous().to(torch::kFloat64).flatten();
  auto g = gt.contiguous().to(torch::kFloat64).flatten();
  const double* a = p.data_ptr<double>();
  const double* b = g.data_ptr<double>();
  long inter = 0, np = 0, ng = 0;
  for (int64_t i = 0; i < p.numel(); ++i) {
    const bool x = a[i] != 0.0, y = b[i] != 0.0;
    np += x;
    ng += y;
    inter += x && y;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

// Every valid 11x11 window is weighted with the full 2-D Gaussian.
inline double ssim(const torch::Tensor& x, const torch::Tensor& y, int window = 11, double sigma = 1.5,
                   double range = 2.0) {
  auto xa = x.contiguous().to(torch::kFloat64);
  auto ya = y.contiguous().to(torch::kFloat64);
  const int64_t H = xa.size(0), W = xa.size(1);
  const double* X = xa.data_ptr<double>();
  const double* Y = ya.data_ptr<double>();
  std::vector<double> w(static_cast<size_t>(window * window));
  double total = 0.0;
  const double c = (window - 1) / 2.0;
  for (int i = 0; i < window; ++i) {
    for (int j = 0; j < window; ++j) {
      const double v = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
      w[static_cast<size_t>(i * window + j)] = v;
      total += v;
    }
  }
  for (double& v : w) v /= total;
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  double sum = 0.0;
  long count = 0;
  for (int64_t r = 0; r + window <= H; ++r) {
    for (int64_t q = 0; q + window <= W; ++q) {
      double mx = 0, my = 0;
      for (int i = 0; i < window; ++i) {
        for (int j = 0; j < window; ++j) {
          const double k = w[static_cast<size_t>(i * window + j)];
          mx += k * X[(r + i) * W + q + j];
          my += k * Y[(r + i) * W + q + j];
        }
      }
      double vx = 0, vy = 0, cov = 0;
      for (int i = 0; i < window; ++i) {
        for (int j = 0; j < window; ++j) {
          const double k = w[static_cast<size_t>(i * window + j)];
          const double dx = X[(r + i) * W + q + j] - mx, dy = Y[(r + i) * W + q + j] - my;
          vx += k * dx * dx;
          vy += k * dy * dy;
          cov += k * dx * dy;
        }
      }
      sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

}  // namespace oracles

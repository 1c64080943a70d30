#pragma once

#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace semipair {

/// 8-bit grayscale PNG of an [H, W] image; values in [lo, hi] map to 0..255.
void write_png(const std::filesystem::path& path, const torch::Tensor& image, double lo = -1.0, double hi = 1.0);

/// Tiles equally sized [H, W] images into a grid, row-major, with a 2-pixel
/// gap filled at `lo`.
torch::Tensor image_grid(const std::vector<std::vector<torch::Tensor>>& rows, double lo = -1.0);

}  // namespace semipair

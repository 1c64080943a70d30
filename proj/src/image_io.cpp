#include "semipair/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "semipair/config.hpp"

namespace semipair {

void write_png(const std::filesystem::path& path, const torch::Tensor& image, double lo, double hi) {
  if (image.dim() != 2) throw Error("write_png expects an [H, W] image");
  if (!(lo < hi)) throw Error("write_png needs lo < hi");
  const auto u8 = ((image.to(torch::kFloat64) - lo) / (hi - lo) * 255.0).round().clamp(0, 255).to(torch::kUInt8).contiguous();
  const auto H = static_cast<png_uint_32>(u8.size(0));
  const auto W = static_cast<png_uint_32>(u8.size(1));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw Error("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, W, H, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto* data = u8.data_ptr<uint8_t>();
  for (png_uint_32 y = 0; y < H; ++y) png_write_row(png, const_cast<png_bytep>(data + static_cast<size_t>(y) * W));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

torch::Tensor image_grid(const std::vector<std::vector<torch::Tensor>>& rows, double lo) {
  if (rows.empty() || rows.front().empty()) throw Error("empty image grid");
  constexpr int64_t gap = 2;
  const auto H = rows[0][0].size(0), W = rows[0][0].size(1);
  const auto n_rows = static_cast<int64_t>(rows.size());
  int64_t n_cols = 0;
  for (const auto& r : rows) n_cols = std::max<int64_t>(n_cols, static_cast<int64_t>(r.size()));
  auto grid = torch::full({n_rows * H + (n_rows - 1) * gap, n_cols * W + (n_cols - 1) * gap}, lo, torch::kFloat32);
  for (int64_t i = 0; i < n_rows; ++i) {
    for (size_t j = 0; j < rows[static_cast<size_t>(i)].size(); ++j) {
      const auto& img = rows[static_cast<size_t>(i)][j];
      if (img.dim() != 2 || img.size(0) != H || img.size(1) != W) throw Error("image grid tiles differ in shape");
      const auto c = static_cast<int64_t>(j);
      grid.slice(0, i * (H + gap), i * (H + gap) + H).slice(1, c * (W + gap), c * (W + gap) + W).copy_(img);
    }
  }
  return grid;
}

}  // namespace semipair

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "semipair/config.hpp"

namespace semipair {

/// Multi-scale content features; level k (1-based) has spatial size H/2^k.
struct ContentCode {
  std::vector<torch::Tensor> pyramid;

  const torch::Tensor& bottleneck() const { return pyramid.back(); }
  int64_t levels() const { return static_cast<int64_t>(pyramid.size()); }
  ContentCode detach() const;
  /// Batch-concatenates two codes with the same configuration.
  static ContentCode cat(const ContentCode& a, const ContentCode& b);
  ContentCode slice(int64_t begin, int64_t end) const;
};

/// Conv -> optional instance norm -> leaky ReLU.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride, bool norm, double slope = 0.2);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::InstanceNorm2d norm_{nullptr};
  double slope_;
};
TORCH_MODULE(ConvBlock);

/// E_s: (image, label planes) -> style vector of length n_s. Global average
/// pooling makes the output length independent of the image size.
class StyleEncoderImpl : public torch::nn::Module {
 public:
  explicit StyleEncoderImpl(const NetConfig& cfg);
  torch::Tensor forward(const torch::Tensor& input);  // [B, 1+M, H, W] -> [B, n_s]

 private:
  NetConfig cfg_;
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(StyleEncoder);

/// E_c: U-Net style contracting path producing K feature levels.
class ContentEncoderImpl : public torch::nn::Module {
 public:
  explicit ContentEncoderImpl(const NetConfig& cfg);
  ContentCode forward(const torch::Tensor& input);  // [B, 1+M, H, W]

 private:
  NetConfig cfg_;
  ConvBlock stem_{nullptr};
  std::vector<torch::nn::Sequential> levels_;
};
TORCH_MODULE(ContentEncoder);

/// D_t: bottleneck content + style -> image in (-1, 1). The style code drives
/// per-layer scale/shift of instance-normalized activations (AdaIN).
class TranslationDecoderImpl : public torch::nn::Module {
 public:
  explicit TranslationDecoderImpl(const NetConfig& cfg);
  torch::Tensor forward(const torch::Tensor& bottleneck, const torch::Tensor& style);

 private:
  NetConfig cfg_;
  torch::nn::Sequential mlp_{nullptr};
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<int64_t> channels_;  // output channels of each AdaIN-modulated conv
  std::vector<bool> upsample_;     // whether the conv is preceded by 2x upsampling
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(TranslationDecoder);

/// D_s: U-Net expanding path over the whole content pyramid -> per-region
/// probabilities in (0, 1). Receives no style input.
class SegmentationDecoderImpl : public torch::nn::Module {
 public:
  explicit SegmentationDecoderImpl(const NetConfig& cfg);
  torch::Tensor forward(const ContentCode& content);  // [B, R, H, W]

 private:
  NetConfig cfg_;
  std::vector<ConvBlock> up_;
  std::vector<ConvBlock> fuse_;
  ConvBlock final_up_{nullptr};
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(SegmentationDecoder);

struct DiscriminatorOutputs {
  torch::Tensor src_logits;  // [B, 1, H/2^P, W/2^P]
  torch::Tensor cls_logits;  // [B, M]

  torch::Tensor src() const { return torch::sigmoid(src_logits); }
  torch::Tensor cls() const { return torch::softmax(cls_logits, 1); }
};

/// D: shared convolutional trunk, patch real/fake head, pooled modality head.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const NetConfig& cfg);
  DiscriminatorOutputs forward(const torch::Tensor& image);  // [B, 1, H, W]

 private:
  NetConfig cfg_;
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Conv2d src_head_{nullptr};
  torch::nn::Conv2d cls_head_{nullptr};
};
TORCH_MODULE(Discriminator);

struct GeneratorOutputs {
  torch::Tensor recon_a, recon_b, trans_ab, trans_ba;  // [B, 1, H, W]
  torch::Tensor seg_a, seg_b;                          // [B, R, H, W]
  torch::Tensor style_a, style_b;                      // [B, n_s]
  ContentCode content_a, content_b;

  /// Number of populated image/segmentation outputs (6 for a pair, 1 for a single input).
  int count() const;
};

/// The four shared generator networks.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const NetConfig& cfg);

  /// Depth-wise concatenation of the image [B, 1, H, W] (or [B, H, W]) and its
  /// expanded one-hot modality label.
  torch::Tensor make_input(const torch::Tensor& image, const torch::Tensor& modality) const;

  torch::Tensor encode_style(const torch::Tensor& image, const torch::Tensor& modality);
  ContentCode encode_content(const torch::Tensor& image, const torch::Tensor& modality);
  torch::Tensor decode_translation(const ContentCode& content, const torch::Tensor& style);
  torch::Tensor decode_segmentation(const ContentCode& content);

  /// Full pair pass: reconstructions, both translations and both segmentations.
  /// With `translations` off only the reconstructions are decoded. A
  /// `style_b_override` replaces s_b wherever D_t consumes it.
  GeneratorOutputs forward_pair(const torch::Tensor& image_a, const torch::Tensor& modality_a,
                                const torch::Tensor& image_b, const torch::Tensor& modality_b,
                                bool translations = true,
                                const std::optional<torch::Tensor>& style_b_override = std::nullopt);
  /// Test-time pass: segmentation only, through E_c and D_s.
  torch::Tensor forward_single(const torch::Tensor& image, const torch::Tensor& modality);

  const NetConfig& config() const { return cfg_; }

  StyleEncoder style_encoder{nullptr};
  ContentEncoder content_encoder{nullptr};
  TranslationDecoder translation_decoder{nullptr};
  SegmentationDecoder segmentation_decoder{nullptr};

 private:
  NetConfig cfg_;
};
TORCH_MODULE(Generator);

/// Raises unless every network output shape follows from the configuration.
void audit_shapes(const NetConfig& cfg);

}  // namespace semipair

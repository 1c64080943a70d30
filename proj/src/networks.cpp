#include "semipair/networks.hpp"

#include "semipair/datamodel.hpp"

namespace semipair {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1) {
  const int64_t pad = kernel == 4 ? 1 : kernel / 2;
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(pad));
}

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

}  // namespace

ContentCode ContentCode::detach() const {
  ContentCode out;
  for (const auto& t : pyramid) out.pyramid.push_back(t.detach());
  return out;
}

ContentCode ContentCode::cat(const ContentCode& a, const ContentCode& b) {
  if (a.levels() != b.levels()) throw Error("content codes have different pyramid depths");
  ContentCode out;
  for (int64_t k = 0; k < a.levels(); ++k) {
    out.pyramid.push_back(torch::cat({a.pyramid[static_cast<size_t>(k)], b.pyramid[static_cast<size_t>(k)]}, 0));
  }
  return out;
}

ContentCode ContentCode::slice(int64_t begin, int64_t end) const {
  ContentCode out;
  for (const auto& t : pyramid) out.pyramid.push_back(t.slice(0, begin, end));
  return out;
}

ConvBlockImpl::ConvBlockImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride, bool norm, double slope)
    : slope_(slope) {
  conv_ = register_module("conv", conv(in, out, kernel, stride));
  if (norm) {
    norm_ = register_module("norm", torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out).affine(true)));
  }
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
  auto y = conv_(x);
  if (norm_) y = norm_(y);
  return F::leaky_relu(y, F::LeakyReLUFuncOptions().negative_slope(slope_));
}

// ---------------------------------------------------------------------------

StyleEncoderImpl::StyleEncoderImpl(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  trunk_ = torch::nn::Sequential();
  trunk_->push_back(ConvBlock(1 + cfg.modalities, cfg.content_channels(0), 3, 1, false));
  for (int64_t k = 1; k <= cfg.content_levels; ++k) {
    trunk_->push_back(ConvBlock(cfg.content_channels(k - 1), cfg.content_channels(k), 4, 2, false));
  }
  register_module("trunk", trunk_);
  head_ = register_module("head", torch::nn::Linear(cfg.content_channels(cfg.content_levels), cfg.style_dim));
}

torch::Tensor StyleEncoderImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != 1 + cfg_.modalities) {
    throw Error("style encoder expects [B, 1+M, H, W] input");
  }
  auto h = trunk_->forward(input);
  return head_(h.mean({2, 3}));
}

// ---------------------------------------------------------------------------

ContentEncoderImpl::ContentEncoderImpl(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  stem_ = register_module("stem", ConvBlock(1 + cfg.modalities, cfg.content_channels(0), 3, 1, true));
  for (int64_t k = 1; k <= cfg.content_levels; ++k) {
    torch::nn::Sequential level;
    level->push_back(ConvBlock(cfg.content_channels(k - 1), cfg.content_channels(k), 4, 2, true));
    level->push_back(ConvBlock(cfg.content_channels(k), cfg.content_channels(k), 3, 1, true));
    levels_.push_back(register_module("level" + std::to_string(k), level));
  }
}

ContentCode ContentEncoderImpl::forward(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != 1 + cfg_.modalities) {
    throw Error("content encoder expects [B, 1+M, H, W] input");
  }
  const int64_t div = int64_t{1} << cfg_.content_levels;
  if (input.size(2) % div != 0 || input.size(3) % div != 0) {
    throw Error("content encoder input size is not divisible by 2^K");
  }
  ContentCode code;
  auto h = stem_(input);
  for (auto& level : levels_) {
    h = level->forward(h);
    code.pyramid.push_back(h);
  }
  return code;
}

// ---------------------------------------------------------------------------

TranslationDecoderImpl::TranslationDecoderImpl(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int64_t K = cfg.content_levels;
  auto add = [&](int64_t in, int64_t out, bool up) {
    convs_.push_back(register_module("conv" + std::to_string(convs_.size()), conv(in, out, 3)));
    channels_.push_back(out);
    upsample_.push_back(up);
  };
  add(cfg.content_channels(K), cfg.content_channels(K), false);
  add(cfg.content_channels(K), cfg.content_channels(K), false);
  for (int64_t k = K; k >= 1; --k) add(cfg.content_channels(k), cfg.content_channels(k - 1), true);
  out_ = register_module("out", conv(cfg.content_channels(0), 1, 3));

  int64_t adain_params = 0;
  for (int64_t c : channels_) adain_params += 2 * c;
  mlp_ = torch::nn::Sequential(torch::nn::Linear(cfg.style_dim, cfg.style_mlp_width), torch::nn::ReLU(),
                               torch::nn::Linear(cfg.style_mlp_width, cfg.style_mlp_width), torch::nn::ReLU(),
                               torch::nn::Linear(cfg.style_mlp_width, adain_params));
  register_module("mlp", mlp_);
}

torch::Tensor TranslationDecoderImpl::forward(const torch::Tensor& bottleneck, const torch::Tensor& style) {
  if (style.dim() != 2 || style.size(1) != cfg_.style_dim) throw Error("style code length mismatch");
  if (bottleneck.dim() != 4 || bottleneck.size(0) != style.size(0)) {
    throw Error("content and style batch sizes differ");
  }
  const auto params = mlp_->forward(style);
  auto h = bottleneck;
  int64_t offset = 0;
  for (size_t i = 0; i < convs_.size(); ++i) {
    if (upsample_[i]) h = upsample2(h);
    h = convs_[i](h);
    const int64_t c = channels_[i];
    auto gamma = params.slice(1, offset, offset + c).unsqueeze(-1).unsqueeze(-1);
    auto beta = params.slice(1, offset + c, offset + 2 * c).unsqueeze(-1).unsqueeze(-1);
    offset += 2 * c;
    h = F::instance_norm(h, F::InstanceNormFuncOptions().eps(1e-5));
    h = torch::relu(h * (1.0 + gamma) + beta);
  }
  return torch::tanh(out_(h));
}

// ---------------------------------------------------------------------------

SegmentationDecoderImpl::SegmentationDecoderImpl(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int64_t K = cfg.content_levels;
  for (int64_t k = K - 1; k >= 1; --k) {
    up_.push_back(register_module("up" + std::to_string(k),
                                  ConvBlock(cfg.content_channels(k + 1), cfg.content_channels(k), 3, 1, true)));
    fuse_.push_back(register_module("fuse" + std::to_string(k),
                                    ConvBlock(2 * cfg.content_channels(k), cfg.content_channels(k), 3, 1, true)));
  }
  final_up_ = register_module("final_up", ConvBlock(cfg.content_channels(1), cfg.content_channels(0), 3, 1, true));
  out_ = register_module("out", conv(cfg.content_channels(0), cfg.regions, 1));
}

torch::Tensor SegmentationDecoderImpl::forward(const ContentCode& content) {
  if (content.levels() != cfg_.content_levels) throw Error("segmentation decoder needs the full content pyramid");
  auto h = content.bottleneck();
  for (size_t i = 0; i < up_.size(); ++i) {
    const auto skip_level = static_cast<size_t>(cfg_.content_levels - 2) - i;  // 0-based pyramid index
    h = up_[i](upsample2(h));
    h = fuse_[i](torch::cat({h, content.pyramid[skip_level]}, 1));
  }
  h = final_up_(upsample2(h));
  return torch::sigmoid(out_(h));
}

// ---------------------------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  trunk_ = torch::nn::Sequential();
  int64_t in = 1;
  for (int64_t k = 1; k <= cfg.disc_levels; ++k) {
    trunk_->push_back(ConvBlock(in, cfg.disc_channels(k), 4, 2, false));
    in = cfg.disc_channels(k);
  }
  register_module("trunk", trunk_);
  src_head_ = register_module("src", conv(in, 1, 3));
  cls_head_ = register_module("cls", conv(in, cfg.modalities, 3));
}

DiscriminatorOutputs DiscriminatorImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 1) throw Error("discriminator expects [B, 1, H, W] images");
  auto h = trunk_->forward(image);
  return {src_head_(h), cls_head_(h).mean({2, 3})};
}

// ---------------------------------------------------------------------------

int GeneratorOutputs::count() const {
  int n = 0;
  for (const auto* t : {&recon_a, &recon_b, &trans_ab, &trans_ba, &seg_a, &seg_b}) n += t->defined() ? 1 : 0;
  return n;
}

GeneratorImpl::GeneratorImpl(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  style_encoder = register_module("E_s", StyleEncoder(cfg));
  content_encoder = register_module("E_c", ContentEncoder(cfg));
  translation_decoder = register_module("D_t", TranslationDecoder(cfg));
  segmentation_decoder = register_module("D_s", SegmentationDecoder(cfg));
}

torch::Tensor GeneratorImpl::make_input(const torch::Tensor& image, const torch::Tensor& modality) const {
  auto img = image.dim() == 3 ? image.unsqueeze(1) : image;
  if (img.dim() != 4 || img.size(1) != 1) throw Error("generator expects single-channel images");
  if (img.size(2) != cfg_.height || img.size(3) != cfg_.width) {
    throw Error("image size " + std::to_string(img.size(2)) + "x" + std::to_string(img.size(3)) +
                " does not match the network configuration");
  }
  if (modality.dim() != 1 || modality.size(0) != img.size(0)) throw Error("one modality label per image required");
  auto labels = expand_modality_labels(modality, cfg_.modalities, img.size(2), img.size(3), img.scalar_type());
  return torch::cat({img, labels.to(img.device())}, 1);
}

torch::Tensor GeneratorImpl::encode_style(const torch::Tensor& image, const torch::Tensor& modality) {
  return style_encoder(make_input(image, modality));
}

ContentCode GeneratorImpl::encode_content(const torch::Tensor& image, const torch::Tensor& modality) {
  return content_encoder(make_input(image, modality));
}

torch::Tensor GeneratorImpl::decode_translation(const ContentCode& content, const torch::Tensor& style) {
  return translation_decoder(content.bottleneck(), style);
}

torch::Tensor GeneratorImpl::decode_segmentation(const ContentCode& content) { return segmentation_decoder(content); }

GeneratorOutputs GeneratorImpl::forward_pair(const torch::Tensor& image_a, const torch::Tensor& modality_a,
                                             const torch::Tensor& image_b, const torch::Tensor& modality_b,
                                             bool translations, const std::optional<torch::Tensor>& style_b_override) {
  if (image_a.sizes() != image_b.sizes()) throw Error("paired inputs must have identical shapes");
  const int64_t B = image_a.size(0);
  // Both inputs share every network, so they are processed as one batch;
  // instance normalization keeps the samples independent.
  auto input = torch::cat({make_input(image_a, modality_a), make_input(image_b, modality_b)}, 0);
  auto styles = style_encoder(input);
  auto content = content_encoder(input);

  GeneratorOutputs out;
  out.style_a = styles.slice(0, 0, B);
  out.style_b = style_b_override ? *style_b_override : styles.slice(0, B, 2 * B);
  if (out.style_b.sizes() != out.style_a.sizes()) throw Error("style override has the wrong shape");
  out.content_a = content.slice(0, B);
  out.content_b = content.slice(B, 2 * B);

  // D_t over (c_a, s_a), (c_b, s_b), then (c_a, s_b), (c_b, s_a). The two calls
  // have the same shape so equal arguments decode to bitwise equal images.
  auto bottleneck = content.bottleneck();
  auto recon = translation_decoder(bottleneck, torch::cat({out.style_a, out.style_b}, 0));
  out.recon_a = recon.slice(0, 0, B);
  out.recon_b = recon.slice(0, B, 2 * B);
  if (translations) {
    auto trans = translation_decoder(bottleneck, torch::cat({out.style_b, out.style_a}, 0));
    out.trans_ab = trans.slice(0, 0, B);
    out.trans_ba = trans.slice(0, B, 2 * B);
  }

  auto seg = segmentation_decoder(content);
  out.seg_a = seg.slice(0, 0, B);
  out.seg_b = seg.slice(0, B, 2 * B);
  return out;
}

torch::Tensor GeneratorImpl::forward_single(const torch::Tensor& image, const torch::Tensor& modality) {
  return segmentation_decoder(content_encoder(make_input(image, modality)));
}

void audit_shapes(const NetConfig& cfg) {
  cfg.validate();
  torch::NoGradGuard no_grad;
  Generator g(cfg);
  Discriminator d(cfg);
  auto img = torch::zeros({1, 1, cfg.height, cfg.width});
  auto mod = torch::zeros({1}, torch::kLong);
  auto fail = [](const std::string& what) { throw Error("shape audit failed: " + what); };

  auto style = g->encode_style(img, mod);
  if (style.sizes() != torch::IntArrayRef({1, cfg.style_dim})) fail("style code");
  auto content = g->encode_content(img, mod);
  if (content.levels() != cfg.content_levels) fail("content pyramid depth");
  for (int64_t k = 1; k <= cfg.content_levels; ++k) {
    const auto& t = content.pyramid[static_cast<size_t>(k - 1)];
    if (t.size(1) != cfg.content_channels(k) || t.size(2) != (cfg.height >> k) || t.size(3) != (cfg.width >> k)) {
      fail("content level " + std::to_string(k));
    }
  }
  if (g->decode_translation(content, style).sizes() != img.sizes()) fail("translation output");
  if (g->decode_segmentation(content).sizes() != torch::IntArrayRef({1, cfg.regions, cfg.height, cfg.width})) {
    fail("segmentation output");
  }
  auto dout = d(img);
  if (dout.src_logits.sizes() !=
      torch::IntArrayRef({1, 1, cfg.height >> cfg.disc_levels, cfg.width >> cfg.disc_levels})) {
    fail("discriminator patch map");
  }
  if (dout.cls_logits.sizes() != torch::IntArrayRef({1, cfg.modalities})) fail("discriminator class head");
}

}  // namespace semipair

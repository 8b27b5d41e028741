#include "semcon/nets/generator.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "semcon/core/errors.hpp"

namespace semcon::nets {

std::string GeneratorOptions::fingerprint() const {
  return "generator/v1 base=" + std::to_string(base_width) + " bottleneck=" + std::to_string(bottleneck_width) +
         " style=" + std::to_string(style_dim) + " pn=" + std::to_string(pixel_norm) +
         " eq=" + std::to_string(equalized_lr) + " adain=" + std::to_string(adain) +
         " noise=" + std::to_string(stochastic_noise);
}

void to_json(nlohmann::json& j, const GeneratorOptions& o) {
  j = nlohmann::json{{"base_width", o.base_width},     {"bottleneck_width", o.bottleneck_width},
                     {"style_dim", o.style_dim},       {"pixel_norm", o.pixel_norm},
                     {"equalized_lr", o.equalized_lr}, {"adain", o.adain},
                     {"stochastic_noise", o.stochastic_noise}};
}

void from_json(const nlohmann::json& j, GeneratorOptions& o) {
  j.at("base_width").get_to(o.base_width);
  j.at("bottleneck_width").get_to(o.bottleneck_width);
  j.at("style_dim").get_to(o.style_dim);
  j.at("pixel_norm").get_to(o.pixel_norm);
  j.at("equalized_lr").get_to(o.equalized_lr);
  j.at("adain").get_to(o.adain);
  j.at("stochastic_noise").get_to(o.stochastic_noise);
}

GeneratorImpl::GeneratorImpl(const GeneratorOptions& options) : options_(options) {
  const int64_t b = options.base_width, mid = 2 * options.base_width, bott = options.bottleneck_width;
  const bool eq = options.equalized_lr;
  enc1_ = register_module("enc1", EqualizedConv2d(3, b, 3, 2, 1, 1, eq));
  enc2_ = register_module("enc2", EqualizedConv2d(b, mid, 3, 2, 1, 1, eq));
  enc3_ = register_module("enc3", EqualizedConv2d(mid, bott, 3, 2, 1, 1, eq));
  enc1_sb_ = register_module("enc1_sb", ScaleBias(b));
  enc2_sb_ = register_module("enc2_sb", ScaleBias(mid));
  enc3_sb_ = register_module("enc3_sb", ScaleBias(bott));
  bottleneck_ = register_module("bottleneck", ResBlock(bott, eq));

  const int64_t widths[4] = {bott, mid, b, b};
  for (int i = 0; i < 3; ++i) {
    const auto tag = std::to_string(i + 1);
    dec_[i] = register_module("dec" + tag, EqualizedDeconv2d(widths[i], widths[i + 1], eq));
    if (options.stochastic_noise) noise_[i] = register_module("noise" + tag, NoiseInjection(widths[i + 1]));
    if (options.adain) adain_[i] = register_module("adain" + tag, AdaIN(widths[i + 1], options.style_dim));
    dec_sb_[i] = register_module("dec" + tag + "_sb", ScaleBias(widths[i + 1]));
  }
  to_rgb_ = register_module("to_rgb", EqualizedConv2d(b, 3, 1, 1, 0, 1, eq));
  out_sb_ = register_module("out_sb", ScaleBias(3));
  if (options.adain) style_ = register_parameter("style", torch::randn({1, options.style_dim}));
}

torch::Tensor GeneratorImpl::encode_layer(EqualizedConv2d& conv, ScaleBias& sb, const torch::Tensor& x) {
  auto h = conv->forward(x);
  if (options_.pixel_norm) h = pixel_norm(h);
  return lrelu(sb->forward(h));
}

torch::Tensor GeneratorImpl::decode_layer(int i, const torch::Tensor& x, torch::Generator* gen) {
  auto h = dec_[i]->forward(x);
  if (options_.stochastic_noise) h = noise_[i]->forward(h, gen);
  if (options_.adain) {
    h = adain_[i]->forward(h, style_.expand({h.size(0), -1}));
  } else if (options_.pixel_norm) {
    h = pixel_norm(h);
  }
  return lrelu(dec_sb_[i]->forward(h));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x, std::optional<uint64_t> noise_seed) {
  require(x.dim() == 4 && x.size(1) == 3, ErrorKind::Shape, "generator expects [N,3,H,W]");
  require(x.size(2) % kDownsampleFactor == 0 && x.size(3) % kDownsampleFactor == 0, ErrorKind::Shape,
          "generator input height/width must be divisible by 8, got " + std::to_string(x.size(2)) + "x" +
              std::to_string(x.size(3)));
  std::optional<torch::Generator> gen;
  if (noise_seed && options_.stochastic_noise) gen = at::make_generator<at::CPUGeneratorImpl>(*noise_seed);
  torch::Generator* gp = gen ? &*gen : nullptr;

  auto h = encode_layer(enc1_, enc1_sb_, x);
  h = encode_layer(enc2_, enc2_sb_, h);
  h = encode_layer(enc3_, enc3_sb_, h);
  h = bottleneck_->forward(h);
  for (int i = 0; i < 3; ++i) h = decode_layer(i, h, gp);
  return torch::tanh(out_sb_->forward(to_rgb_->forward(h)));
}

Image generator_forward(Generator& g, const Image& x) {
  torch::NoGradGuard no_grad;
  return Image(g->forward(x.tensor().unsqueeze(0))[0]);
}

Image generator_stochastic_noise(Generator& g, const Image& x, uint64_t seed) {
  torch::NoGradGuard no_grad;
  return Image(g->forward(x.tensor().unsqueeze(0), seed)[0]);
}

}  // namespace semcon::nets

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "semcon/core/types.hpp"
#include "semcon/nets/layers.hpp"

namespace semcon::nets {

struct GeneratorOptions {
  int64_t base_width = 16;
  int64_t bottleneck_width = 64;
  int64_t style_dim = 32;
  bool pixel_norm = true;
  bool equalized_lr = true;
  bool adain = true;
  bool stochastic_noise = true;

  std::string fingerprint() const;
};

void to_json(nlohmann::json& j, const GeneratorOptions& o);
void from_json(const nlohmann::json& j, GeneratorOptions& o);

/// Encoder-decoder translator. Three stride-2 convolutions take the input down by 8, one
/// residual block works at the bottleneck, three deconvolutions bring it back. There is no
/// path from encoder to decoder other than the bottleneck.
class GeneratorImpl : public torch::nn::Module {
 public:
  static constexpr int64_t kDownsampleFactor = 8;

  explicit GeneratorImpl(const GeneratorOptions& options = {});

  /// [N,3,H,W] -> [N,3,H,W] in [-1,1]. Without a seed no noise is injected.
  torch::Tensor forward(const torch::Tensor& x, std::optional<uint64_t> noise_seed = std::nullopt);

  const GeneratorOptions& options() const { return options_; }

 private:
  torch::Tensor encode_layer(EqualizedConv2d& conv, ScaleBias& sb, const torch::Tensor& x);
  torch::Tensor decode_layer(int i, const torch::Tensor& x, torch::Generator* gen);

  GeneratorOptions options_;
  EqualizedConv2d enc1_{nullptr}, enc2_{nullptr}, enc3_{nullptr};
  ScaleBias enc1_sb_{nullptr}, enc2_sb_{nullptr}, enc3_sb_{nullptr};
  ResBlock bottleneck_{nullptr};
  EqualizedDeconv2d dec_[3] = {nullptr, nullptr, nullptr};
  NoiseInjection noise_[3] = {nullptr, nullptr, nullptr};
  AdaIN adain_[3] = {nullptr, nullptr, nullptr};
  ScaleBias dec_sb_[3] = {nullptr, nullptr, nullptr};
  EqualizedConv2d to_rgb_{nullptr};
  ScaleBias out_sb_{nullptr};
  torch::Tensor style_;
};
TORCH_MODULE(Generator);

/// Single-image convenience wrappers.
Image generator_forward(Generator& g, const Image& x);
Image generator_stochastic_noise(Generator& g, const Image& x, uint64_t seed);

}  // namespace semcon::nets

#pragma once

#include <cstdint>
#include <optional>

#include <torch/nn/module.h>
#include <torch/nn/modules/linear.h>
#include <torch/nn/pimpl.h>
#include <torch/types.h>

namespace semcon::nets {

inline constexpr double kLeakySlope = 0.2;

torch::Tensor lrelu(const torch::Tensor& x);

/// Convolution whose weights are stored at unit variance and rescaled by sqrt(2 / fan_in) on
/// every forward pass when `equalized` is set; otherwise the scale is folded in at init.
class EqualizedConv2dImpl : public torch::nn::Module {
 public:
  EqualizedConv2dImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1, int64_t padding = 0,
                      int64_t dilation = 1, bool equalized = true);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  double runtime_scale_;
  int64_t stride_, padding_, dilation_;
};
TORCH_MODULE(EqualizedConv2d);

/// Stride-2 deconvolution (kernel 4, padding 1) that doubles the spatial size.
class EqualizedDeconv2dImpl : public torch::nn::Module {
 public:
  EqualizedDeconv2dImpl(int64_t in, int64_t out, bool equalized = true);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  double runtime_scale_;
};
TORCH_MODULE(EqualizedDeconv2d);

/// Learned per-channel scale and bias.
class ScaleBiasImpl : public torch::nn::Module {
 public:
  explicit ScaleBiasImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor scale;
  torch::Tensor bias;
};
TORCH_MODULE(ScaleBias);

/// Normalises each pixel's feature vector to unit RMS.
torch::Tensor pixel_norm(const torch::Tensor& x, double eps = 1e-8);

/// Instance normalisation followed by a per-channel affine predicted from a style code.
class AdaINImpl : public torch::nn::Module {
 public:
  AdaINImpl(int64_t channels, int64_t style_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& style);

  torch::nn::Linear affine{nullptr};
};
TORCH_MODULE(AdaIN);

/// Adds per-pixel Gaussian noise with a learned per-channel strength.
class NoiseInjectionImpl : public torch::nn::Module {
 public:
  explicit NoiseInjectionImpl(int64_t channels, double init_strength = 0.05);
  torch::Tensor forward(const torch::Tensor& x, torch::Generator* gen);

  torch::Tensor strength;
};
TORCH_MODULE(NoiseInjection);

/// Two 3x3 convolutions with an identity shortcut.
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int64_t channels, bool equalized);
  torch::Tensor forward(const torch::Tensor& x);

  EqualizedConv2d conv1{nullptr};
  EqualizedConv2d conv2{nullptr};
};
TORCH_MODULE(ResBlock);

/// Freeze or unfreeze every parameter of a module.
void set_requires_grad(torch::nn::Module& module, bool flag);

}  // namespace semcon::nets

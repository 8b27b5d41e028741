#include "semcon/nets/layers.hpp"

#include <cmath>

#include <torch/torch.h>

namespace semcon::nets {

namespace F = torch::nn::functional;

torch::Tensor lrelu(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLeakySlope));
}

namespace {

double he_scale(int64_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

}  // namespace

EqualizedConv2dImpl::EqualizedConv2dImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t padding,
                                         int64_t dilation, bool equalized)
    : stride_(stride), padding_(padding), dilation_(dilation) {
  const double scale = he_scale(in * kernel * kernel);
  auto init = torch::randn({out, in, kernel, kernel});
  if (equalized) {
    runtime_scale_ = scale;
  } else {
    runtime_scale_ = 1.0;
    init.mul_(scale);
  }
  weight = register_parameter("weight", init);
  bias = register_parameter("bias", torch::zeros({out}));
}

torch::Tensor EqualizedConv2dImpl::forward(const torch::Tensor& x) {
  auto w = runtime_scale_ == 1.0 ? weight : weight * runtime_scale_;
  return F::conv2d(x, w, F::Conv2dFuncOptions().bias(bias).stride(stride_).padding(padding_).dilation(dilation_));
}

EqualizedDeconv2dImpl::EqualizedDeconv2dImpl(int64_t in, int64_t out, bool equalized) {
  // A stride-2 kernel-4 deconvolution sees 4 input taps per output pixel per input channel.
  const double scale = he_scale(in * 4);
  auto init = torch::randn({in, out, 4, 4});
  if (equalized) {
    runtime_scale_ = scale;
  } else {
    runtime_scale_ = 1.0;
    init.mul_(scale);
  }
  weight = register_parameter("weight", init);
  bias = register_parameter("bias", torch::zeros({out}));
}

torch::Tensor EqualizedDeconv2dImpl::forward(const torch::Tensor& x) {
  auto w = runtime_scale_ == 1.0 ? weight : weight * runtime_scale_;
  return F::conv_transpose2d(x, w, F::ConvTranspose2dFuncOptions().bias(bias).stride(2).padding(1));
}

ScaleBiasImpl::ScaleBiasImpl(int64_t channels) {
  scale = register_parameter("scale", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor ScaleBiasImpl::forward(const torch::Tensor& x) {
  return x * scale.view({1, -1, 1, 1}) + bias.view({1, -1, 1, 1});
}

torch::Tensor pixel_norm(const torch::Tensor& x, double eps) {
  return x * torch::rsqrt(x.pow(2).mean(1, /*keepdim=*/true) + eps);
}

AdaINImpl::AdaINImpl(int64_t channels, int64_t style_dim) {
  affine = register_module("affine", torch::nn::Linear(style_dim, 2 * channels));
  torch::NoGradGuard no_grad;
  affine->weight.mul_(0.1);
  affine->bias.zero_();
}

torch::Tensor AdaINImpl::forward(const torch::Tensor& x, const torch::Tensor& style) {
  const int64_t c = x.size(1);
  auto mean = x.mean({2, 3}, /*keepdim=*/true);
  auto var = x.var({2, 3}, /*unbiased=*/false, /*keepdim=*/true);
  auto normed = (x - mean) * torch::rsqrt(var + 1e-5);
  auto params = affine->forward(style).view({-1, 2 * c, 1, 1});
  auto gamma = params.slice(1, 0, c);
  auto beta = params.slice(1, c, 2 * c);
  return normed * (1 + gamma) + beta;
}

NoiseInjectionImpl::NoiseInjectionImpl(int64_t channels, double init_strength) {
  strength = register_parameter("strength", torch::full({channels}, init_strength));
}

torch::Tensor NoiseInjectionImpl::forward(const torch::Tensor& x, torch::Generator* gen) {
  if (gen == nullptr) return x;
  auto noise = at::randn({x.size(0), 1, x.size(2), x.size(3)}, *gen, x.options());
  return x + strength.view({1, -1, 1, 1}) * noise;
}

ResBlockImpl::ResBlockImpl(int64_t channels, bool equalized) {
  conv1 = register_module("conv1", EqualizedConv2d(channels, channels, 3, 1, 1, 1, equalized));
  conv2 = register_module("conv2", EqualizedConv2d(channels, channels, 3, 1, 1, 1, equalized));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  return lrelu(x + conv2->forward(lrelu(conv1->forward(x))));
}

void set_requires_grad(torch::nn::Module& module, bool flag) {
  for (auto& p : module.parameters(/*recurse=*/true)) p.set_requires_grad(flag);
}

}  // namespace semcon::nets

#include <algorithm>
#include <cmath>
#include <vector>

#include <torch/torch.h>

#include "semcon/core/errors.hpp"
#include "semcon/toyworld/rng.hpp"
#include "semcon/toyworld/toyworld.hpp"

namespace semcon {

void PerturbSpec::validate() const {
  require(jitter_strength >= 0 && noise_std >= 0 && blur_sigma_min >= 0 && blur_sigma_max >= blur_sigma_min,
          ErrorKind::Config, "perturbation magnitudes must be non-negative with blur_sigma_min <= blur_sigma_max");
}

void to_json(nlohmann::json& j, const PerturbSpec& spec) {
  j = nlohmann::json{{"jitter_strength", spec.jitter_strength},
                     {"blur_sigma_min", spec.blur_sigma_min},
                     {"blur_sigma_max", spec.blur_sigma_max},
                     {"noise_std", spec.noise_std}};
}

void from_json(const nlohmann::json& j, PerturbSpec& spec) {
  j.at("jitter_strength").get_to(spec.jitter_strength);
  j.at("blur_sigma_min").get_to(spec.blur_sigma_min);
  j.at("blur_sigma_max").get_to(spec.blur_sigma_max);
  j.at("noise_std").get_to(spec.noise_std);
}

torch::Tensor gaussian_blur(const torch::Tensor& chw, double sigma) {
  auto src = chw.to(torch::kFloat32).contiguous();
  if (sigma <= 0) return src.clone();
  const int64_t channels = src.size(0), h = src.size(1), w = src.size(2);
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(k + radius)];
  }
  for (auto& v : kernel) v /= total;

  auto tmp = torch::empty_like(src);
  auto out = torch::empty_like(src);
  const float* in = src.data_ptr<float>();
  float* mid = tmp.data_ptr<float>();
  float* dst = out.data_ptr<float>();
  for (int64_t c = 0; c < channels; ++c) {
    const int64_t base = c * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0;
        for (int k = -radius; k <= radius; ++k) {
          const int64_t xx = std::clamp<int64_t>(x + k, 0, w - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * in[base + y * w + xx];
        }
        mid[base + y * w + x] = static_cast<float>(acc);
      }
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0;
        for (int k = -radius; k <= radius; ++k) {
          const int64_t yy = std::clamp<int64_t>(y + k, 0, h - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * mid[base + yy * w + x];
        }
        dst[base + y * w + x] = static_cast<float>(acc);
      }
  }
  return out;
}

namespace {

torch::Tensor perturb_tensor(const torch::Tensor& chw, const PerturbSpec& spec, uint64_t seed) {
  Rng rng(seed);
  auto out = chw.to(torch::kFloat32).contiguous().clone();
  const int64_t h = out.size(1), w = out.size(2), plane = h * w;

  if (spec.jitter_strength > 0) {
    const double s = spec.jitter_strength;
    const double brightness = s * rng.uniform(-1, 1);
    const double contrast = 1.0 + s * rng.uniform(-1, 1);
    const double saturation = 1.0 + s * rng.uniform(-1, 1);
    double shift[3];
    for (double& v : shift) v = 0.5 * s * rng.uniform(-1, 1);
    float* p = out.data_ptr<float>();
    double mean = 0;
    for (int64_t i = 0; i < 3 * plane; ++i) mean += p[i];
    mean /= static_cast<double>(3 * plane);
    for (int64_t i = 0; i < plane; ++i) {
      const double gray = (p[i] + p[plane + i] + p[2 * plane + i]) / 3.0;
      for (int c = 0; c < 3; ++c) {
        double v = gray + saturation * (p[c * plane + i] - gray);
        v = mean + contrast * (v - mean) + brightness + shift[c];
        p[c * plane + i] = static_cast<float>(v);
      }
    }
  }

  if (spec.blur_sigma_max > 0) {
    const double sigma = rng.uniform(spec.blur_sigma_min, spec.blur_sigma_max);
    if (sigma > 0) out = gaussian_blur(out, sigma);
  }

  if (spec.noise_std > 0) {
    float* p = out.data_ptr<float>();
    for (int64_t i = 0; i < 3 * plane; ++i) p[i] += static_cast<float>(spec.noise_std * rng.normal());
  }
  return out.clamp_(-1.0f, 1.0f);
}

}  // namespace

Image perturb(const Image& x, const PerturbSpec& spec, uint64_t seed) {
  spec.validate();
  return Image(perturb_tensor(x.tensor(), spec, seed));
}

torch::Tensor perturb_batch(const torch::Tensor& images, const PerturbSpec& spec, uint64_t seed) {
  spec.validate();
  require(images.dim() == 4 && images.size(1) == 3, ErrorKind::Shape, "expected [N,3,H,W] images");
  std::vector<torch::Tensor> out;
  out.reserve(static_cast<std::size_t>(images.size(0)));
  for (int64_t i = 0; i < images.size(0); ++i)
    out.push_back(perturb_tensor(images[i], spec, derive_seed(seed, static_cast<uint64_t>(i))));
  return torch::stack(out);
}

}  // namespace semcon

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semcon/core/types.hpp"

namespace semcon {

enum ToyClass : int { kBackground = 0, kRoad = 1, kDisc = 2, kBox = 3, kPole = 4 };

enum class Domain { Source, Target };

std::string to_string(Domain domain);

struct Rgb {
  double r = 0, g = 0, b = 0;
};

/// Appearance and content knobs of one toy domain.
struct DomainSpec {
  std::array<Rgb, kToyClasses> palette{};
  double texture_amp = 0.0;
  double sky_gradient = 0.0;
  double noise_std = 0.0;
  /// Spawn probability per class; the background entry is ignored (it is the canvas).
  std::array<double, kToyClasses> object_freq{};
  /// Scales horizon height and tilt variation, in [0, 1].
  double viewpoint_jitter = 0.0;

  void validate() const;

  /// Clean, saturated "synthetic" look.
  static DomainSpec source_default();
  /// Overcast, textured, noisy look with a different object mix and looser viewpoint.
  static DomainSpec target_default();
};

void to_json(nlohmann::json& j, const DomainSpec& spec);
void from_json(const nlohmann::json& j, DomainSpec& spec);

/// Geometry ranges of the scene grammar, as fractions of the image side. Shared by the
/// renderer and by anything that needs the analytic spawn model.
struct SceneGrammar {
  // Road: pixels with y >= horizon(x) = S*(base + jitter*vj*u) + slope*(x - S/2),
  // slope = tilt*vj*u', u,u' ~ U(-1, 1).
  static constexpr double horizon_base = 0.62;
  static constexpr double horizon_jitter = 0.12;
  static constexpr double horizon_tilt = 0.15;
  // Box standing near the horizon.
  static constexpr double box_w_min = 0.24, box_w_max = 0.38;
  static constexpr double box_h_min = 0.20, box_h_max = 0.35;
  static constexpr double box_bottom_min = 0.48, box_bottom_max = 0.58;
  // Disc in the upper half.
  static constexpr double disc_r_min = 0.03, disc_r_max = 0.07;
  static constexpr double disc_cy_max = 0.40;
  // Pole from its top down to the image bottom (the road overdraws the lower part).
  static constexpr double pole_w_min = 0.03, pole_w_max = 0.05;
  static constexpr double pole_top_max = 0.30;
  /// Per-scene uniform colour offset applied to each class, per channel.
  static constexpr double colour_jitter = 0.06;
  /// Texture frequencies (cycles per image side) along x and y, per class.
  static constexpr std::array<double, kToyClasses> tex_fx{1.0, 9.0, 4.0, 6.0, 0.0};
  static constexpr std::array<double, kToyClasses> tex_fy{3.0, 2.0, 4.0, 7.0, 11.0};
  /// Painter's order; later entries overwrite earlier ones.
  static constexpr std::array<int, 4> draw_order{kBox, kDisc, kPole, kRoad};
};

struct SceneSample {
  Image image;
  SegMask mask;
  uint64_t seed;
  Domain domain;
};

/// Renders one scene. Pure in (seed, spec, size); size must be >= 16 and divisible by 8.
SceneSample sample_scene(uint64_t seed, const DomainSpec& spec, int64_t size, Domain domain = Domain::Source);

/// Photometric perturbation used for consistency training. No spatial transforms.
struct PerturbSpec {
  double jitter_strength = 0.2;
  double blur_sigma_min = 0.0;
  double blur_sigma_max = 1.5;
  double noise_std = 0.05;

  void validate() const;
  static PerturbSpec none() { return {0.0, 0.0, 0.0, 0.0}; }
};

void to_json(nlohmann::json& j, const PerturbSpec& spec);
void from_json(const nlohmann::json& j, PerturbSpec& spec);

/// Colour jitter, then Gaussian blur, then additive noise; clamped to [-1, 1].
Image perturb(const Image& x, const PerturbSpec& spec, uint64_t seed);
/// Batched form over [N, 3, H, W]; image i uses derive_seed(seed, i).
torch::Tensor perturb_batch(const torch::Tensor& images, const PerturbSpec& spec, uint64_t seed);

/// Separable Gaussian blur with replicated borders on a [3, H, W] float tensor.
torch::Tensor gaussian_blur(const torch::Tensor& chw, double sigma);

}  // namespace semcon

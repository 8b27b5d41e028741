#include "semcon/toyworld/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <torch/torch.h>

#include "semcon/core/errors.hpp"
#include "semcon/toyworld/rng.hpp"

namespace semcon {

std::string to_string(Domain domain) { return domain == Domain::Source ? "source" : "target"; }

void DomainSpec::validate() const {
  for (int c = 0; c < kToyClasses; ++c) {
    const auto p = object_freq[static_cast<std::size_t>(c)];
    require(p >= 0.0 && p <= 1.0, ErrorKind::Config,
            "object_freq[" + std::to_string(c) + "] must lie in [0,1]");
    const auto& col = palette[static_cast<std::size_t>(c)];
    require(std::isfinite(col.r) && std::isfinite(col.g) && std::isfinite(col.b), ErrorKind::Config,
            "palette entries must be finite");
  }
  require(std::isfinite(texture_amp) && texture_amp >= 0, ErrorKind::Config, "texture_amp must be >= 0");
  require(std::isfinite(sky_gradient), ErrorKind::Config, "sky_gradient must be finite");
  require(std::isfinite(noise_std) && noise_std >= 0, ErrorKind::Config, "noise_std must be >= 0");
  require(viewpoint_jitter >= 0 && viewpoint_jitter <= 1, ErrorKind::Config,
          "viewpoint_jitter must lie in [0,1]");
}

DomainSpec DomainSpec::source_default() {
  DomainSpec s;
  s.palette = {Rgb{-0.40, 0.00, 0.80}, Rgb{-0.20, -0.20, -0.20}, Rgb{0.80, -0.60, -0.60},
               Rgb{0.40, 0.10, -0.30}, Rgb{-0.70, -0.70, -0.50}};
  s.texture_amp = 0.04;
  s.sky_gradient = 0.30;
  s.noise_std = 0.02;
  s.object_freq = {1.0, 0.9, 0.7, 0.8, 0.7};
  s.viewpoint_jitter = 0.3;
  return s;
}

DomainSpec DomainSpec::target_default() {
  DomainSpec s;
  s.palette = {Rgb{-0.25, -0.05, 0.45}, Rgb{-0.40, -0.35, -0.30}, Rgb{0.50, -0.30, -0.45},
               Rgb{0.15, 0.15, -0.20}, Rgb{0.10, 0.05, 0.10}};
  s.texture_amp = 0.10;
  s.sky_gradient = 0.10;
  s.noise_std = 0.06;
  s.object_freq = {1.0, 0.9, 0.5, 0.9, 0.9};
  s.viewpoint_jitter = 0.8;
  return s;
}

void to_json(nlohmann::json& j, const DomainSpec& spec) {
  nlohmann::json palette = nlohmann::json::array();
  for (const auto& c : spec.palette) palette.push_back({c.r, c.g, c.b});
  j = nlohmann::json{{"palette", palette},
                     {"texture_amp", spec.texture_amp},
                     {"sky_gradient", spec.sky_gradient},
                     {"noise_std", spec.noise_std},
                     {"object_freq", spec.object_freq},
                     {"viewpoint_jitter", spec.viewpoint_jitter}};
}

void from_json(const nlohmann::json& j, DomainSpec& spec) {
  const auto& palette = j.at("palette");
  require(palette.is_array() && palette.size() == kToyClasses, ErrorKind::Config,
          "palette must list " + std::to_string(kToyClasses) + " colours");
  for (std::size_t c = 0; c < kToyClasses; ++c) {
    const auto& col = palette.at(c);
    require(col.is_array() && col.size() == 3, ErrorKind::Config, "palette colours are [r,g,b]");
    spec.palette[c] = Rgb{col.at(0).get<double>(), col.at(1).get<double>(), col.at(2).get<double>()};
  }
  j.at("texture_amp").get_to(spec.texture_amp);
  j.at("sky_gradient").get_to(spec.sky_gradient);
  j.at("noise_std").get_to(spec.noise_std);
  j.at("object_freq").get_to(spec.object_freq);
  j.at("viewpoint_jitter").get_to(spec.viewpoint_jitter);
}

namespace {

struct SceneLayout {
  std::array<bool, kToyClasses> present{};
  double horizon0 = 0, slope = 0;
  double box_x = 0, box_w = 0, box_bottom = 0, box_h = 0;
  double disc_cx = 0, disc_cy = 0, disc_r = 0;
  double pole_x = 0, pole_w = 0, pole_top = 0;
  std::array<std::array<double, 3>, kToyClasses> colour_offset{};
  std::array<double, kToyClasses> phase{};
};

SceneLayout draw_layout(Rng& rng, const DomainSpec& spec, double s) {
  using G = SceneGrammar;
  SceneLayout l;
  // Parameters are always drawn so that the random stream does not depend on which objects spawn.
  for (int c = 1; c < kToyClasses; ++c) l.present[static_cast<std::size_t>(c)] = rng.bernoulli(spec.object_freq[static_cast<std::size_t>(c)]);
  const double vj = spec.viewpoint_jitter;
  l.horizon0 = s * (G::horizon_base + G::horizon_jitter * vj * rng.uniform(-1, 1));
  l.slope = G::horizon_tilt * vj * rng.uniform(-1, 1);
  l.box_w = s * rng.uniform(G::box_w_min, G::box_w_max);
  l.box_h = s * rng.uniform(G::box_h_min, G::box_h_max);
  l.box_x = rng.uniform(0, s - l.box_w);
  l.box_bottom = s * rng.uniform(G::box_bottom_min, G::box_bottom_max);
  l.disc_r = s * rng.uniform(G::disc_r_min, G::disc_r_max);
  l.disc_cx = rng.uniform(l.disc_r, s - l.disc_r);
  l.disc_cy = rng.uniform(l.disc_r, s * G::disc_cy_max);
  l.pole_w = s * rng.uniform(G::pole_w_min, G::pole_w_max);
  l.pole_x = rng.uniform(0, s - l.pole_w);
  l.pole_top = s * rng.uniform(0, G::pole_top_max);
  for (auto& off : l.colour_offset)
    for (auto& v : off) v = rng.uniform(-G::colour_jitter, G::colour_jitter);
  for (auto& p : l.phase) p = rng.uniform(0, 2.0 * std::numbers::pi);
  return l;
}

bool covers(const SceneLayout& l, int cls, double xc, double yc, double s) {
  switch (cls) {
    case kRoad:
      return yc >= l.horizon0 + l.slope * (xc - 0.5 * s);
    case kBox:
      return xc >= l.box_x && xc < l.box_x + l.box_w && yc >= l.box_bottom - l.box_h && yc < l.box_bottom;
    case kDisc: {
      const double dx = xc - l.disc_cx, dy = yc - l.disc_cy;
      return dx * dx + dy * dy <= l.disc_r * l.disc_r;
    }
    case kPole:
      return xc >= l.pole_x && xc < l.pole_x + l.pole_w && yc >= l.pole_top;
    default:
      return false;
  }
}

}  // namespace

SceneSample sample_scene(uint64_t seed, const DomainSpec& spec, int64_t size, Domain domain) {
  require(size >= 16 && size % 8 == 0, ErrorKind::Shape,
          "scene size must be >= 16 and divisible by 8, got " + std::to_string(size));
  spec.validate();
  Rng rng(seed);
  const double s = static_cast<double>(size);
  const SceneLayout layout = draw_layout(rng, spec, s);

  auto image = torch::empty({3, size, size}, torch::kFloat32);
  auto mask = torch::zeros({size, size}, torch::kInt64);
  float* img = image.data_ptr<float>();
  int64_t* lab = mask.data_ptr<int64_t>();
  const int64_t plane = size * size;

  for (int64_t y = 0; y < size; ++y) {
    for (int64_t x = 0; x < size; ++x) {
      const double xc = static_cast<double>(x) + 0.5, yc = static_cast<double>(y) + 0.5;
      int cls = kBackground;
      for (int c : SceneGrammar::draw_order) {
        if (layout.present[static_cast<std::size_t>(c)] && covers(layout, c, xc, yc, s)) cls = c;
      }
      lab[y * size + x] = cls;
      const auto ci = static_cast<std::size_t>(cls);
      const double tex = std::sin(2.0 * std::numbers::pi *
                                      (SceneGrammar::tex_fx[ci] * xc + SceneGrammar::tex_fy[ci] * yc) / s +
                                  layout.phase[ci]);
      double shade = spec.texture_amp * tex;
      if (cls == kBackground) shade += spec.sky_gradient * (0.5 - yc / s);
      const auto& base = spec.palette[ci];
      const double rgb[3] = {base.r, base.g, base.b};
      for (int ch = 0; ch < 3; ++ch) {
        double v = rgb[ch] + layout.colour_offset[ci][static_cast<std::size_t>(ch)] + shade;
        if (spec.noise_std > 0) v += spec.noise_std * rng.normal();
        img[ch * plane + y * size + x] = static_cast<float>(std::clamp(v, -1.0, 1.0));
      }
    }
  }
  return SceneSample{Image(image), SegMask(mask, kToyClasses), seed, domain};
}

}  // namespace semcon

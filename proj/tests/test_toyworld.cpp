#include <doctest.h>

#include <array>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <torch/torch.h>

#include "helpers.hpp"
#include "semcon/toyworld/dataset.hpp"
#include "semcon/toyworld/rng.hpp"
#include "semcon/toyworld/toyworld.hpp"

using namespace semcon;
using testing::kind_of;

namespace {

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Per-pixel coverage probability of one object class, estimated from draws of that object's
// geometry alone with an independent generator. Geometry follows the scene grammar ranges.
std::vector<double> coverage_map(int cls, const DomainSpec& spec, int64_t size, int draws, std::mt19937_64& eng) {
  using G = SceneGrammar;
  const double s = static_cast<double>(size);
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng); };
  std::vector<double> cover(static_cast<std::size_t>(size * size), 0.0);
  for (int d = 0; d < draws; ++d) {
    const double vj = spec.viewpoint_jitter;
    const double h0 = s * (G::horizon_base + G::horizon_jitter * vj * u(-1, 1));
    const double slope = G::horizon_tilt * vj * u(-1, 1);
    const double bw = s * u(G::box_w_min, G::box_w_max), bh = s * u(G::box_h_min, G::box_h_max);
    const double bx = u(0, s - bw), bb = s * u(G::box_bottom_min, G::box_bottom_max);
    const double r = s * u(G::disc_r_min, G::disc_r_max);
    const double cx = u(r, s - r), cy = u(r, s * G::disc_cy_max);
    const double pw = s * u(G::pole_w_min, G::pole_w_max);
    const double px = u(0, s - pw), pt = s * u(0, G::pole_top_max);
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        const double xc = x + 0.5, yc = y + 0.5;
        bool in = false;
        switch (cls) {
          case kRoad: in = yc >= h0 + slope * (xc - 0.5 * s); break;
          case kBox: in = xc >= bx && xc < bx + bw && yc >= bb - bh && yc < bb; break;
          case kDisc: in = (xc - cx) * (xc - cx) + (yc - cy) * (yc - cy) <= r * r; break;
          case kPole: in = xc >= px && xc < px + pw && yc >= pt; break;
        }
        if (in) cover[static_cast<std::size_t>(y * size + x)] += 1.0 / draws;
      }
  }
  return cover;
}

// Expected pixel share per class: P(c visible) = P(c drawn and covers) * prod over later
// classes d of (1 - P(d drawn and covers)), since objects are placed independently.
std::array<double, kToyClasses> expected_frequencies(const DomainSpec& spec, int64_t size) {
  std::mt19937_64 eng(99);
  std::array<std::vector<double>, kToyClasses> cov;
  for (int c = 1; c < kToyClasses; ++c) cov[static_cast<std::size_t>(c)] = coverage_map(c, spec, size, 3000, eng);
  std::array<double, kToyClasses> freq{};
  const auto& order = SceneGrammar::draw_order;
  for (int64_t p = 0; p < size * size; ++p) {
    double visible_any = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const int c = order[i];
      double v = spec.object_freq[static_cast<std::size_t>(c)] * cov[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)];
      for (std::size_t j = i + 1; j < order.size(); ++j) {
        const int d = order[j];
        v *= 1.0 - spec.object_freq[static_cast<std::size_t>(d)] * cov[static_cast<std::size_t>(d)][static_cast<std::size_t>(p)];
      }
      freq[static_cast<std::size_t>(c)] += v;
      visible_any += v;
    }
    freq[kBackground] += 1.0 - visible_any;
  }
  for (auto& f : freq) f /= static_cast<double>(size * size);
  return freq;
}

}  // namespace

TEST_SUITE("toyworld") {
  TEST_CASE("rng is deterministic and seeds are separated") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 10; ++i) {
      const auto x = a.uniform();
      CHECK(x == b.uniform());
      CHECK(x >= 0.0);
      CHECK(x < 1.0);
    }
    CHECK(Rng(42).uniform() != c.uniform());
    CHECK(derive_seed(1, 2) != derive_seed(2, 1));
    CHECK(seed_tag("warmup") != seed_tag("i2i"));
  }

  TEST_CASE("sample_scene is bit-identical for the same seed") {
    const auto a = sample_scene(7, DomainSpec::source_default(), 64, Domain::Source);
    const auto b = sample_scene(7, DomainSpec::source_default(), 64, Domain::Source);
    CHECK(torch::equal(a.image.tensor(), b.image.tensor()));
    CHECK(torch::equal(a.mask.tensor(), b.mask.tensor()));
    const auto c = sample_scene(8, DomainSpec::source_default(), 64, Domain::Source);
    CHECK_FALSE(torch::equal(a.image.tensor(), c.image.tensor()));
    CHECK(a.image.height() == 64);
    CHECK(a.mask.width() == 64);
  }

  TEST_CASE("sample_scene size contract") {
    CHECK(kind_of([] { sample_scene(1, DomainSpec::source_default(), 60, Domain::Source); }) == ErrorKind::Shape);
    CHECK(kind_of([] { sample_scene(1, DomainSpec::source_default(), 8, Domain::Source); }) == ErrorKind::Shape);
    CHECK_NOTHROW(sample_scene(1, DomainSpec::source_default(), 16, Domain::Source));
  }

  TEST_CASE("background-only spec renders a constant background mask") {
    auto spec = DomainSpec::target_default();
    spec.object_freq = {1.0, 0.0, 0.0, 0.0, 0.0};
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = sample_scene(seed, spec, 32, Domain::Target);
      CHECK(torch::all(s.mask.tensor() == kBackground).item<bool>());
    }
  }

  TEST_CASE("classes spawned with probability one always appear") {
    auto spec = DomainSpec::source_default();
    spec.object_freq = {1.0, 1.0, 1.0, 1.0, 1.0};
    spec.viewpoint_jitter = 1.0;
    for (uint64_t seed = 0; seed < 200; ++seed) {
      const auto s = sample_scene(seed, spec, 64, Domain::Source);
      for (int c = 0; c < kToyClasses; ++c) CHECK((s.mask.tensor() == c).any().item<bool>());
    }
  }

  TEST_CASE("identical specs give identically distributed domains") {
    const auto spec = DomainSpec::source_default();
    const auto a = sample_scene(11, spec, 32, Domain::Source);
    const auto b = sample_scene(11, spec, 32, Domain::Target);
    CHECK(torch::equal(a.image.tensor(), b.image.tensor()));
  }

  TEST_CASE("class pixel frequencies match the spawn model") {
    for (const auto& spec : {DomainSpec::source_default(), DomainSpec::target_default()}) {
      const int64_t size = 64;
      const auto expected = expected_frequencies(spec, size);
      std::array<double, kToyClasses> measured{};
      const int n = 1000;
      for (int i = 0; i < n; ++i) {
        const auto s = sample_scene(static_cast<uint64_t>(1000 + i), spec, size, Domain::Source);
        auto counts = torch::bincount(s.mask.tensor().flatten(), std::nullopt, kToyClasses);
        for (int c = 0; c < kToyClasses; ++c)
          measured[static_cast<std::size_t>(c)] += counts[c].item<double>() / static_cast<double>(size * size * n);
      }
      for (int c = 0; c < kToyClasses; ++c) {
        INFO("class " << c << " expected " << expected[static_cast<std::size_t>(c)] << " measured "
                      << measured[static_cast<std::size_t>(c)]);
        CHECK(std::abs(measured[static_cast<std::size_t>(c)] - expected[static_cast<std::size_t>(c)]) <=
              0.2 * expected[static_cast<std::size_t>(c)]);
      }
    }
  }

  TEST_CASE("perturb: all-zero spec is the identity") {
    const auto s = sample_scene(3, DomainSpec::target_default(), 32, Domain::Target);
    CHECK(torch::equal(perturb(s.image, PerturbSpec::none(), 9).tensor(), s.image.tensor()));
  }

  TEST_CASE("perturb: noise statistics") {
    Image x(torch::zeros({3, 64, 64}));
    PerturbSpec spec{0.0, 0.0, 0.0, 0.1};
    const auto y = perturb(x, spec, 17).tensor();
    const double sd = y.std().item<double>();
    CHECK(sd == doctest::Approx(0.1).epsilon(0.1));
  }

  TEST_CASE("perturb: blur keeps a constant image constant") {
    Image x(torch::full({3, 16, 16}, 0.3));
    PerturbSpec spec{0.0, 2.0, 2.0, 0.0};
    CHECK(torch::allclose(perturb(x, spec, 1).tensor(), x.tensor(), 0, 1e-6));
    CHECK(torch::allclose(gaussian_blur(x.tensor(), 2.0), x.tensor(), 0, 1e-6));
  }

  TEST_CASE("perturb: deterministic, clamped, seed dependent") {
    const auto s = sample_scene(4, DomainSpec::target_default(), 32, Domain::Target);
    PerturbSpec spec;
    const auto a = perturb(s.image, spec, 5).tensor();
    CHECK(torch::equal(a, perturb(s.image, spec, 5).tensor()));
    CHECK_FALSE(torch::equal(a, perturb(s.image, spec, 6).tensor()));
    CHECK(a.min().item<float>() >= -1.0f);
    CHECK(a.max().item<float>() <= 1.0f);
    auto batch = torch::stack({s.image.tensor(), s.image.tensor()});
    auto pb = perturb_batch(batch, spec, 5);
    CHECK(torch::equal(pb[0], perturb(s.image, spec, derive_seed(5, 0)).tensor()));
  }

  TEST_CASE("perturb spec validation") {
    PerturbSpec bad{-0.1, 0, 0, 0};
    CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::Config);
    PerturbSpec inverted{0, 2.0, 1.0, 0};
    CHECK(kind_of([&] { inverted.validate(); }) == ErrorKind::Config);
  }

  TEST_CASE("make_split: disjoint seeds, unlabelled target, stable bytes") {
    const auto dir = testing::scratch("split");
    SplitRequest req;
    req.n_src = 8;
    req.n_tgt = 8;
    req.n_val_tgt = 4;
    req.image_size = 32;
    const auto files = make_split(req, dir / "a");
    const auto src = Manifest::load(files.source), tgt = Manifest::load(files.target), val = Manifest::load(files.target_val);
    CHECK(src.size() == 8);
    CHECK(tgt.size() == 8);
    CHECK(val.size() == 4);
    std::set<uint64_t> seeds;
    for (const auto* m : {&src, &tgt, &val})
      for (const auto& r : m->records()) seeds.insert(r.seed);
    CHECK(seeds.size() == 20);
    for (const auto& r : tgt.records()) CHECK(r.mask.empty());
    CHECK(src.labelled());
    CHECK(val.labelled());
    CHECK_FALSE(tgt.labelled());
    CHECK(std::filesystem::exists(files.histograms));

    make_split(req, dir / "b");
    for (const char* name : {kSourceManifest, kTargetManifest, kTargetValManifest, "class_histograms.json"})
      CHECK(file_bytes(dir / "a" / name) == file_bytes(dir / "b" / name));
    CHECK(file_bytes(dir / "a" / src.records()[3].image) == file_bytes(dir / "b" / src.records()[3].image));

    const auto set = load_image_set(src, true);
    CHECK(set.size() == 8);
    CHECK(set.images.sizes() == torch::IntArrayRef({8, 3, 32, 32}));
    const auto hist = class_histogram(set);
    int64_t total = 0;
    for (auto h : hist) total += h;
    CHECK(total == 8 * 32 * 32);
  }

  TEST_CASE("make_split: overlapping seed ranges are a config error") {
    SplitRequest req;
    req.n_src = 10;
    req.offsets.target = 5;
    CHECK(kind_of([&] { plan_split_seeds(req); }) == ErrorKind::Config);
  }

  TEST_CASE("manifest round trip") {
    const auto dir = testing::scratch("manifest");
    Manifest m(dir, {{"a.png", "a_mask.png", "source", 3}, {"b.png", "", "target", 4}});
    m.save(dir / "m.tsv");
    const auto back = Manifest::load(dir / "m.tsv");
    CHECK((back.records() == m.records()));
    CHECK(back.image_path(1) == dir / "b.png");
  }
}

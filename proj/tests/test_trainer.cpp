#include <doctest.h>

#include <fstream>

#include <torch/torch.h>

#include "helpers.hpp"
#include "semcon/toyworld/dataset.hpp"
#include "semcon/trainer/batching.hpp"
#include "semcon/trainer/config.hpp"
#include "semcon/trainer/phases.hpp"
#include "semcon/trainer/schedule.hpp"

using namespace semcon;
using nlohmann::json;
using testing::kind_of;

namespace {

std::string config_error(const json& user) {
  try {
    parse_config(merge_config(default_config_json(), user));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    return e.what();
  }
  FAIL("expected a config error");
  return {};
}

RunConfig tiny_config() {
  json j = smoke_config_json();
  j["data"]["image_size"] = 32;
  j["data"]["crop"] = 32;
  j["data"]["n_src"] = 16;
  j["data"]["n_tgt"] = 16;
  j["data"]["n_val_tgt"] = 8;
  j["model"]["generator"]["base_width"] = 8;
  j["model"]["generator"]["bottleneck_width"] = 16;
  j["model"]["discriminator"]["width"] = 8;
  j["model"]["discriminator"]["trunk_width"] = 8;
  j["model"]["discriminator"]["res_blocks"] = 1;
  return parse_config(j);
}

struct TinyData {
  ImageSet source, target, val;
};

const TinyData& tiny_data() {
  static const TinyData data = [] {
    const auto cfg = tiny_config();
    const auto dir = testing::scratch("trainer_data");
    const auto files = make_split(cfg.data.split, dir);
    return TinyData{load_image_set(Manifest::load(files.source), true),
                    load_image_set(Manifest::load(files.target), false),
                    load_image_set(Manifest::load(files.target_val), true)};
  }();
  return data;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("config errors name the offending key path") {
    CHECK(config_error({{"i2i", {{"stepz", 3}}}}).find("i2i.stepz") != std::string::npos);
    CHECK(config_error({{"warmup", {{"optim", {{"lr", "fast"}}}}}}).find("warmup.optim.lr") != std::string::npos);
    CHECK(config_error({{"i2i", {{"fade_start", 900}, {"fade_end", 100}}}}).find("fade_start") != std::string::npos);
    CHECK(config_error({{"i2i", {{"gan", "wgan"}}}}).find("wgan") != std::string::npos);
    CHECK(config_error({{"data", {{"crop", 60}}}}).find("crop") != std::string::npos);
  }

  TEST_CASE("config round trips and overrides apply") {
    const auto j = default_config_json();
    CHECK(config_to_json(parse_config(j)) == j);
    json k = j;
    apply_overrides(k, {"i2i.steps=7", "i2i.gan=sgan", "experiment=abc", "i2i.class_gan=false"});
    const auto c = parse_config(k);
    CHECK(c.i2i.steps == 7);
    CHECK(c.i2i.gan == losses::GanObjective::Standard);
    CHECK(c.experiment == "abc");
    CHECK_FALSE(c.i2i.class_gan);
    CHECK(kind_of([&] { apply_overrides(k, {"nokey"}); }) == ErrorKind::Config);
    CHECK(kind_of([&] { apply_overrides(k, {"i2i.nope=1"}); }) == ErrorKind::Config);
    CHECK(kind_of([] { load_config("/nonexistent/config.json"); }) == ErrorKind::Config);
  }

  TEST_CASE("learning-rate decay") {
    OptimConfig o{1e-3, 0.5, 100};
    CHECK(o.rate_at(0) == doctest::Approx(1e-3));
    CHECK(o.rate_at(100) == doctest::Approx(5e-4));
    CHECK(o.rate_at(50) == doctest::Approx(1e-3 * std::sqrt(0.5)));
  }

  TEST_CASE("ema update worked examples") {
    NetParams t, s;
    t.add("w", torch::tensor({1.0, 2.0}, torch::kFloat64));
    s.add("w", torch::tensor({3.0, -2.0}, torch::kFloat64));
    CHECK(ema_update(t, s, 1.0).bitwise_equal(t));
    CHECK(ema_update(t, s, 0.0).bitwise_equal(s));
    auto m = ema_update(t, s, 0.999).at("w");
    CHECK(m[0].item<double>() == doctest::Approx(0.999 * 1.0 + 0.001 * 3.0));
    CHECK(m[1].item<double>() == doctest::Approx(0.999 * 2.0 - 0.001 * 2.0));
    CHECK(kind_of([&] { ema_update(t, s, 1.5); }) == ErrorKind::Config);
    CHECK(ema_decay_at(0, 0.99) == 0.0);
    CHECK(ema_decay_at(9, 0.99) == doctest::Approx(0.9));
    CHECK(ema_decay_at(10000, 0.99) == 0.99);
  }

  TEST_CASE("ema over modules matches the array form") {
    torch::manual_seed(3);
    torch::nn::Linear a(3, 2), b(3, 2);
    const auto expect = ema_update(NetParams::from_module(*a), NetParams::from_module(*b), 0.9);
    ema_update_module(*a, *b, 0.9);
    const auto blended = NetParams::from_module(*a);
    for (const auto& [name, value] : blended.arrays())
      CHECK(torch::allclose(value, expect.at(name), 1e-6, 1e-7));
  }

  TEST_CASE("lambda fade endpoints and midpoint") {
    Schedule s{20000, 100000, 0.3, 0};
    CHECK(lambda_fade(0, s) == 0.0);
    CHECK(lambda_fade(20000, s) == 0.0);
    CHECK(lambda_fade(60000, s) == doctest::Approx(0.15));
    CHECK(lambda_fade(100000, s) == doctest::Approx(0.3));
    CHECK(lambda_fade(200000, s) == doctest::Approx(0.3));
    for (int64_t step = 0; step < 120000; step += 997) {
      CHECK(lambda_fade(step + 997, s) >= lambda_fade(step, s));
    }
    Schedule c{0, 0, 0.3, 10};
    CHECK(lambda_con_at(9, c, 2.0) == 0.0);
    CHECK(lambda_con_at(10, c, 2.0) == 2.0);
    Schedule bad{10, 5, 0.3, 0};
    CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::Config);
  }

  TEST_CASE("global-norm clipping worked examples") {
    NetParams g;
    g.add("a", torch::tensor({3.0}, torch::kFloat64));
    g.add("b", torch::tensor({4.0}, torch::kFloat64));
    CHECK(global_norm({g.at("a"), g.at("b")}) == doctest::Approx(5.0));
    auto c = clip_global_norm(g, 1.0);
    CHECK(c.at("a").item<double>() == doctest::Approx(0.6));
    CHECK(c.at("b").item<double>() == doctest::Approx(0.8));
    CHECK(clip_global_norm(g, 10.0).bitwise_equal(g));
    auto nan = torch::tensor({NAN});
    CHECK(kind_of([&] { global_norm({nan}); }) == ErrorKind::NumericalFault);
  }

  TEST_CASE("clipping preserves direction on random gradients") {
    torch::manual_seed(4);
    for (int trial = 0; trial < 20; ++trial) {
      NetParams g;
      g.add("a", torch::randn({5}, torch::kFloat64) * 10);
      g.add("b", torch::randn({2, 3}, torch::kFloat64) * 10);
      const double max_norm = 0.5 + trial * 0.1;
      auto c = clip_global_norm(g, max_norm);
      const double n = global_norm({g.at("a"), g.at("b")});
      const double nc = global_norm({c.at("a"), c.at("b")});
      CHECK(nc <= max_norm * (1 + 1e-12));
      auto flat = torch::cat({g.at("a").flatten(), g.at("b").flatten()});
      auto flat_c = torch::cat({c.at("a").flatten(), c.at("b").flatten()});
      const double cos = (flat * flat_c).sum().item<double>() / (n * nc);
      CHECK(cos == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("in-place gradient clipping") {
    auto p = torch::zeros({2}, torch::kFloat64).requires_grad_(true);
    (p * torch::tensor({3.0, 4.0}, torch::kFloat64)).sum().backward();
    CHECK(clip_gradients({p}, 1.0) == doctest::Approx(5.0));
    CHECK(p.grad()[1].item<double>() == doctest::Approx(0.8));
  }

  TEST_CASE("batch split proportions") {
    for (int64_t b : {1, 2, 7, 8, 16}) {
      for (double f : {0.0, 0.25, 0.5, 0.9, 1.0}) {
        auto [t, s] = batch_split(b, f);
        CHECK(t + s == b);
        CHECK(std::abs(static_cast<double>(t) - f * static_cast<double>(b)) <= 1.0);
      }
    }
  }

  TEST_CASE("batches are deterministic crops with aligned labels") {
    const auto& d = tiny_data();
    Rng a(5), b(5);
    auto x = sample_batch(d.source, 4, 16, a), y = sample_batch(d.source, 4, 16, b);
    CHECK(torch::equal(x.images, y.images));
    CHECK(torch::equal(x.labels, y.labels));
    CHECK(x.images.sizes() == torch::IntArrayRef({4, 3, 16, 16}));
    CHECK(x.labels.sizes() == torch::IntArrayRef({4, 16, 16}));
    Rng full(6);
    auto z = sample_batch(d.source, 2, 32, full);
    CHECK(torch::equal(z.labels[0], d.source.masks[z.indices[0]]));
    Rng u(7);
    CHECK_FALSE(sample_batch(d.target, 2, 16, u).labels.defined());
  }

  TEST_CASE("warm-up smoke run is finite and deterministic") {
    const auto cfg = tiny_config();
    const auto& d = tiny_data();
    const auto dir = testing::scratch("warmup_logs");
    SegPhaseResult r1, r2;
    {
      MetricsLog log1(dir / "a.jsonl"), log2(dir / "b.jsonl");
      r1 = run_warmup(d.source, d.target, cfg, log1);
      r2 = run_warmup(d.source, d.target, cfg, log2);
    }
    CHECK(NetParams::from_module(*r1.teacher).bitwise_equal(NetParams::from_module(*r2.teacher)));
    REQUIRE(!r1.metrics.empty());
    for (const auto& m : r1.metrics) CHECK(m.all_finite());
    std::ifstream a(dir / "a.jsonl"), b(dir / "b.jsonl");
    std::vector<json> lines;
    for (std::string la, lb; std::getline(a, la);) {
      std::getline(b, lb);
      CHECK(la == lb);
      lines.push_back(json::parse(la));
    }
    REQUIRE(lines.size() == r1.metrics.size());
    CHECK(lines.front()["lambda_con"] == 0.0);
    CHECK(lines.front()["con"] == 0.0);
    CHECK(lines.back()["lambda_con"] == cfg.warmup.lambda_con);
  }

  TEST_CASE("supervised loss decreases without target data") {
    auto cfg = tiny_config();
    cfg.segmentation.steps = 120;
    cfg.segmentation.lambda_con = 0.0;
    cfg.segmentation.translated_fraction = 0.0;
    cfg.segmentation.log_interval = 10;
    const auto& d = tiny_data();
    MetricsLog log;
    ImageSet none;
    auto r = run_segmentation(d.source, none, none, cfg.segmentation, cfg, log);
    double first = 0, last = 0;
    for (std::size_t i = 0; i < 3; ++i) first += r.metrics[i].get("sup");
    for (std::size_t i = r.metrics.size() - 3; i < r.metrics.size(); ++i) last += r.metrics[i].get("sup");
    CHECK(last < 0.7 * first);
    for (const auto& m : r.metrics) CHECK(m.get("con") == 0.0);
  }

  TEST_CASE("pseudo-labels are the teacher's argmax") {
    torch::manual_seed(8);
    const auto& d = tiny_data();
    nets::Segmenter f;
    auto pl = generate_pseudo_labels(f, d.target, 0.9);
    REQUIRE(pl.labels.sizes() == torch::IntArrayRef({d.target.size(), 32, 32}));
    torch::NoGradGuard ng;
    f->eval();
    auto logits = f->forward(d.target.float_images({0, 1})).contiguous();
    const int64_t k = logits.size(1);
    const float* p = logits.data_ptr<float>();
    int64_t mismatches = 0;
    for (int64_t n = 0; n < 2; ++n)
      for (int64_t y = 0; y < 32; ++y)
        for (int64_t x = 0; x < 32; ++x) {
          int64_t best = 0;
          for (int64_t c = 1; c < k; ++c)
            if (p[((n * k + c) * 32 + y) * 32 + x] > p[((n * k + best) * 32 + y) * 32 + x]) best = c;
          mismatches += best != pl.labels[n][y][x].item<int64_t>();
        }
    CHECK(mismatches == 0);
  }

  TEST_CASE("uniform teacher gives 1/K confidence everywhere") {
    const auto& d = tiny_data();
    nets::Segmenter f;
    {
      torch::NoGradGuard ng;
      f->classifier->weight.zero_();
      f->classifier->bias.zero_();
    }
    auto pl = generate_pseudo_labels(f, d.target, 0.5);
    CHECK(pl.coverage["mean_max_prob"].get<double>() == doctest::Approx(1.0 / kToyClasses));
    CHECK(pl.coverage["below_threshold"].get<double>() == doctest::Approx(1.0));
  }

  TEST_CASE("i2i smoke: trunk stays frozen, identity error falls, translation keeps shapes") {
    const auto cfg = tiny_config();
    const auto& d = tiny_data();
    nets::Segmenter f;
    auto pl = generate_pseudo_labels(f, d.target, 0.9);
    MetricsLog log;
    auto r = run_i2i(d.source, d.target, &pl, d.val, cfg, log);
    CHECK(r.summary["trunk_unchanged"].get<bool>());
    CHECK(r.summary["identity_error_after_pretrain"].get<double>() < r.summary["identity_error_init"].get<double>());
    for (const auto& m : r.metrics) CHECK(m.all_finite());
    r.generator->eval();
    auto t = translate_images(r.generator, d.source);
    CHECK(t.size() == d.source.size());
    CHECK(t.images.sizes() == d.source.images.sizes());
    CHECK((t.images.scalar_type() == torch::kUInt8));
    CHECK(torch::equal(t.masks, d.source.masks));
  }

  TEST_CASE("online pseudo-labels do not need a precomputed set") {
    auto cfg = tiny_config();
    cfg.i2i.pseudo_labels = PseudoLabelSource::Online;
    cfg.i2i.steps = 4;
    const auto& d = tiny_data();
    MetricsLog log;
    auto r = run_i2i(d.source, d.target, nullptr, d.val, cfg, log);
    CHECK(r.summary["trunk_unchanged"].get<bool>());
    cfg.i2i.pseudo_labels = PseudoLabelSource::Precomputed;
    CHECK(kind_of([&] { run_i2i(d.source, d.target, nullptr, d.val, cfg, log); }) == ErrorKind::Prerequisite);
  }

  TEST_CASE("channel histograms") {
    auto a = torch::zeros({2, 3, 4, 4}, torch::kUInt8);
    auto b = torch::full({2, 3, 4, 4}, 255, torch::kUInt8);
    auto ha = channel_histogram(a, 8), hb = channel_histogram(b, 8);
    CHECK(ha.sizes() == torch::IntArrayRef({3, 8}));
    CHECK(torch::allclose(ha.sum(1), torch::ones({3}, ha.options())));
    CHECK(ha[0][0].item<double>() == 1.0);
    CHECK(hb[2][7].item<double>() == 1.0);
    CHECK(histogram_l1(ha, hb) == doctest::Approx(6.0));
    CHECK(histogram_l1(ha, ha) == 0.0);
  }
}

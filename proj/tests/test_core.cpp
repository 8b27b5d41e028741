#include <doctest.h>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "helpers.hpp"
#include "semcon/core/image_io.hpp"
#include "semcon/core/types.hpp"

using namespace semcon;
using testing::kind_of;

TEST_SUITE("core") {
  TEST_CASE("image validates shape, range and finiteness") {
    CHECK_NOTHROW(Image(torch::zeros({3, 4, 5})));
    CHECK(kind_of([] { Image(torch::zeros({4, 4, 4})); }) == ErrorKind::Shape);
    CHECK(kind_of([] { Image(torch::full({3, 2, 2}, 1.5)); }) == ErrorKind::Shape);
    auto bad = torch::zeros({3, 2, 2});
    bad[0][0][0] = NAN;
    CHECK(kind_of([&] { Image{bad}; }) == ErrorKind::NumericalFault);
  }

  TEST_CASE("segmask rejects ids outside the class range") {
    CHECK_NOTHROW(SegMask(torch::tensor({{0, 4}}, torch::kInt64), 5));
    CHECK(kind_of([] { SegMask(torch::tensor({{0, 5}}, torch::kInt64), 5); }) == ErrorKind::InvalidLabel);
    CHECK(kind_of([] { SegMask(torch::tensor({{-1}}, torch::kInt64), 5); }) == ErrorKind::InvalidLabel);
  }

  TEST_CASE("onehot encode small cases") {
    auto a = onehot_encode(SegMask(torch::tensor({{0}}, torch::kInt64), 2), 2).tensor();
    CHECK(a.sizes() == torch::IntArrayRef({2, 1, 1}));
    CHECK(a[0][0][0].item<float>() == 1.0f);
    CHECK(a[1][0][0].item<float>() == 0.0f);

    // 2x1 mask (0, 1), k = 3 -> pixel rows (1,0,0) and (0,1,0).
    auto b = onehot_encode(SegMask(torch::tensor({{0}, {1}}, torch::kInt64), 3), 3).tensor();
    CHECK(torch::equal(b.select(2, 0).t(), torch::tensor({{1.f, 0.f, 0.f}, {0.f, 1.f, 0.f}})));

    CHECK(kind_of([] { onehot_encode(SegMask(torch::tensor({{3}}, torch::kInt64), 5), 3); }) == ErrorKind::InvalidLabel);
  }

  TEST_CASE("onehot decode small cases and invalid encodings") {
    CHECK(onehot_decode(OneHotMask(torch::tensor({1.f, 0.f}).reshape({2, 1, 1}))).at(0, 0) == 0);
    CHECK(onehot_decode(OneHotMask(torch::tensor({0.f, 0.f, 1.f}).reshape({3, 1, 1}))).at(0, 0) == 2);
    CHECK(kind_of([] { OneHotMask(torch::tensor({1.f, 1.f}).reshape({2, 1, 1})); }) == ErrorKind::InvalidEncoding);
    CHECK(kind_of([] { OneHotMask(torch::tensor({0.5f, 0.5f}).reshape({2, 1, 1})); }) == ErrorKind::InvalidEncoding);
    CHECK(kind_of([] { OneHotMask(torch::zeros({2, 1, 1})); }) == ErrorKind::InvalidEncoding);
  }

  TEST_CASE("onehot round trips exhaustively on random masks") {
    torch::manual_seed(3);
    for (int trial = 0; trial < 50; ++trial) {
      const int k = 2 + trial % 6;
      SegMask m(torch::randint(0, k, {8, 8}, torch::kInt64), k);
      auto enc = onehot_encode(m, k);
      CHECK(torch::equal(enc.tensor().sum(0), torch::ones({8, 8})));
      CHECK(torch::equal(onehot_decode(enc).tensor(), m.tensor()));
      CHECK(torch::equal(onehot_encode(onehot_decode(enc), k).tensor(), enc.tensor()));
    }
  }

  TEST_CASE("onehot_batch matches per-image encoding") {
    auto labels = torch::randint(0, 5, {3, 4, 6}, torch::kInt64);
    auto batch = onehot_batch(labels, 5);
    REQUIRE(batch.sizes() == torch::IntArrayRef({3, 5, 4, 6}));
    for (int64_t i = 0; i < 3; ++i)
      CHECK(torch::equal(batch[i], onehot_encode(SegMask(labels[i], 5), 5).tensor()));
  }

  TEST_CASE("class set validation") {
    CHECK(ClassSet::all(4).ids() == std::vector<int>{0, 1, 2, 3});
    CHECK(kind_of([] { ClassSet(3, {0, 0}); }) == ErrorKind::InvalidLabel);
    CHECK(kind_of([] { ClassSet(3, {3}); }) == ErrorKind::InvalidLabel);
  }

  TEST_CASE("net params blend is schema checked and exact") {
    NetParams a, b, c, d;
    a.add("w", torch::ones({2, 2}, torch::kFloat64));
    b.add("w", torch::zeros({2, 2}, torch::kFloat64));
    c.add("v", torch::zeros({2, 2}, torch::kFloat64));
    d.add("w", torch::zeros({2, 3}, torch::kFloat64));
    CHECK(torch::allclose(blend(a, b, 0.25).at("w"), torch::full({2, 2}, 0.25, torch::kFloat64)));
    CHECK(kind_of([&] { blend(a, c, 0.5); }) == ErrorKind::Schema);
    CHECK(kind_of([&] { blend(a, d, 0.5); }) == ErrorKind::Schema);
    NetParams e;
    CHECK(kind_of([&] { e.add("x", torch::tensor({INFINITY})); }) == ErrorKind::NumericalFault);
  }

  TEST_CASE("net params from and into modules") {
    torch::nn::Linear lin(3, 2);
    auto p = NetParams::from_module(*lin);
    CHECK(p.size() == 2);
    CHECK(p.numel() == 8);
    torch::nn::Linear other(3, 2);
    p.load_into(*other);
    CHECK(NetParams::from_module(*other).bitwise_equal(p));
    torch::nn::Linear wrong(4, 2);
    CHECK(kind_of([&] { p.load_into(*wrong); }) == ErrorKind::Schema);
  }

  TEST_CASE("loss report") {
    LossReport r{3, "warmup", {}};
    r.set("sup", 1.5);
    CHECK(r.get("sup") == 1.5);
    CHECK(r.all_finite());
    r.set("con", NAN);
    CHECK_FALSE(r.all_finite());
    auto j = r.to_json();
    CHECK(j["step"] == 3);
    CHECK(j["phase"] == "warmup");
  }

  TEST_CASE("hyper defaults validate") {
    Hyper h;
    CHECK_NOTHROW(h.validate());
    h.fade_start = 900;
    CHECK(kind_of([&] { h.validate(); }) == ErrorKind::Config);
  }

  TEST_CASE("png round trip: masks exact, images within one quantisation step") {
    const auto dir = testing::scratch("png");
    torch::manual_seed(5);
    SegMask m(torch::randint(0, 5, {9, 7}, torch::kInt64), 5);
    write_mask_png(dir / "m.png", m);
    CHECK(torch::equal(read_mask_png(dir / "m.png", 5).tensor(), m.tensor()));
    CHECK(kind_of([&] { read_mask_png(dir / "m.png", 2); }) == ErrorKind::InvalidLabel);

    Image img(torch::rand({3, 9, 7}) * 2 - 1);
    write_image_png(dir / "i.png", img);
    auto back = read_image_png(dir / "i.png");
    CHECK((back.tensor() - img.tensor()).abs().max().item<float>() <= 0.5f / 127.5f + 1e-6f);
    CHECK(to_byte(-1.0f) == 0);
    CHECK(to_byte(1.0f) == 255);
    CHECK(kind_of([&] { read_image_png(dir / "missing.png"); }) == ErrorKind::Io);
  }
}

#pragma once

// Reference implementations written as plain loops over std::vector<double>, plus helpers for
// random instances and central finite differences. Nothing here calls into torch's math.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <torch/torch.h>

namespace oracle {

/// Dense array in row-major order.
struct Arr {
  std::vector<int64_t> shape;
  std::vector<double> v;

  int64_t numel() const {
    int64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
  double& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
    return v[static_cast<std::size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  double at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return v[static_cast<std::size_t>(((n * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  double at3(int64_t n, int64_t h, int64_t w) const {
    return v[static_cast<std::size_t>((n * shape[1] + h) * shape[2] + w)];
  }
};

inline torch::Tensor to_tensor(const Arr& a) {
  auto t = torch::empty(a.shape, torch::kFloat64);
  std::copy(a.v.begin(), a.v.end(), t.data_ptr<double>());
  return t;
}

inline Arr from_tensor(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  Arr a{c.sizes().vec(), std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel())};
  return a;
}

struct Gen {
  std::mt19937_64 eng;
  explicit Gen(uint64_t seed) : eng(seed) {}
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(eng); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng); }
  int64_t integer(int64_t lo, int64_t hi) { return std::uniform_int_distribution<int64_t>(lo, hi)(eng); }

  Arr normal_arr(std::vector<int64_t> shape, double sd = 1.0) {
    Arr a{std::move(shape), {}};
    a.v.resize(static_cast<std::size_t>(a.numel()));
    for (auto& x : a.v) x = normal(sd);
    return a;
  }
  Arr uniform_arr(std::vector<int64_t> shape, double lo, double hi) {
    Arr a{std::move(shape), {}};
    a.v.resize(static_cast<std::size_t>(a.numel()));
    for (auto& x : a.v) x = uniform(lo, hi);
    return a;
  }
  /// One-hot [N,K,H,W] with uniformly random classes.
  Arr onehot(int64_t n, int64_t k, int64_t h, int64_t w) {
    Arr a{{n, k, h, w}, std::vector<double>(static_cast<std::size_t>(n * k * h * w), 0.0)};
    for (int64_t i = 0; i < n; ++i)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) a.at4(i, integer(0, k - 1), y, x) = 1.0;
    return a;
  }
};

inline double log_softmax_at(const Arr& logits, int64_t n, int64_t c, int64_t h, int64_t w) {
  double mx = -INFINITY;
  for (int64_t j = 0; j < logits.shape[1]; ++j) mx = std::max(mx, logits.at4(n, j, h, w));
  double s = 0;
  for (int64_t j = 0; j < logits.shape[1]; ++j) s += std::exp(logits.at4(n, j, h, w) - mx);
  return logits.at4(n, c, h, w) - mx - std::log(s);
}

inline double seg_ce(const Arr& logits, const Arr& y) {
  const auto& s = logits.shape;
  double total = 0;
  for (int64_t n = 0; n < s[0]; ++n)
    for (int64_t h = 0; h < s[2]; ++h)
      for (int64_t w = 0; w < s[3]; ++w)
        for (int64_t c = 0; c < s[1]; ++c) total -= y.at4(n, c, h, w) * log_softmax_at(logits, n, c, h, w);
  return total / static_cast<double>(s[0] * s[2] * s[3]);
}

inline double sym_ce(const Arr& logits, const Arr& y, double alpha, double beta, double log_clamp) {
  const auto& s = logits.shape;
  double ce = 0, rce = 0;
  for (int64_t n = 0; n < s[0]; ++n)
    for (int64_t h = 0; h < s[2]; ++h)
      for (int64_t w = 0; w < s[3]; ++w)
        for (int64_t c = 0; c < s[1]; ++c) {
          const double lp = log_softmax_at(logits, n, c, h, w);
          const double q = y.at4(n, c, h, w);
          ce -= q * lp;
          const double lq = q > 0 ? std::max(std::log(q), log_clamp) : log_clamp;
          rce -= std::exp(lp) * lq;
        }
  return (alpha * ce + beta * rce) / static_cast<double>(s[0] * s[2] * s[3]);
}

/// m(prediction, target): squared error, or binary cross-entropy of sigmoid(prediction).
inline double gan_m(double p, double t, bool least_squares) {
  if (least_squares) return (p - t) * (p - t);
  const double sig = 1.0 / (1.0 + std::exp(-p));
  return -(t * std::log(sig) + (1.0 - t) * std::log(1.0 - sig));
}

inline Arr map(const Arr& a, const std::function<double(double)>& f) {
  Arr out = a;
  for (auto& x : out.v) x = f(x);
  return out;
}

inline Arr dgan_d(const Arr& fake, const Arr& real, bool ls) {
  Arr out = fake;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = gan_m(fake.v[i], 0.0, ls) + gan_m(real.v[i], 1.0, ls);
  return out;
}

inline Arr dgan_g(const Arr& fake, bool ls) {
  return map(fake, [&](double x) { return gan_m(x, 1.0, ls); });
}

inline Arr cgan_d(const Arr& fake, const Arr& ys, const Arr& real, const Arr& yt, bool ls) {
  Arr out = fake;
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    double v = 0;
    if (ys.v[i] != 0) v += gan_m(fake.v[i], 0.0, ls) * ys.v[i];
    if (yt.v[i] != 0) v += gan_m(real.v[i], 1.0, ls) * yt.v[i];
    out.v[i] = v;
  }
  return out;
}

inline Arr cgan_g(const Arr& fake, const Arr& ys, bool ls) {
  Arr out = fake;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = ys.v[i] != 0 ? gan_m(fake.v[i], 1.0, ls) * ys.v[i] : 0.0;
  return out;
}

inline double sum(const Arr& a) {
  double s = 0;
  for (double x : a.v) s += x;
  return s;
}

inline double gan_total(const Arr& dgan, const Arr& cgan, double lambda_cgan, int k) {
  return sum(dgan) + lambda_cgan / k * sum(cgan);
}

inline double identity_l1(const Arr& gx, const Arr& x) {
  double s = 0;
  for (std::size_t i = 0; i < x.v.size(); ++i) s += std::abs(gx.v[i] - x.v[i]);
  return s;
}

inline double consistency(const Arr& teacher, const Arr& student) {
  const auto& s = student.shape;
  double total = 0;
  for (int64_t n = 0; n < s[0]; ++n)
    for (int64_t h = 0; h < s[2]; ++h)
      for (int64_t w = 0; w < s[3]; ++w)
        for (int64_t c = 0; c < s[1]; ++c) {
          const double d = std::exp(log_softmax_at(teacher, n, c, h, w)) - std::exp(log_softmax_at(student, n, c, h, w));
          total += d * d;
        }
  return total / static_cast<double>(s[0] * s[2] * s[3]);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); }

inline double max_rel_err(const Arr& a, const Arr& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    num = std::max(num, std::abs(a.v[i] - b.v[i]));
    den = std::max(den, std::abs(b.v[i]));
  }
  return num / std::max(den, 1e-12);
}

/// Central differences of a scalar function with respect to every entry of `x`.
inline Arr finite_diff(const std::function<double(const Arr&)>& f, Arr x, double h = 1e-6) {
  Arr g = x;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    const double keep = x.v[i];
    x.v[i] = keep + h;
    const double up = f(x);
    x.v[i] = keep - h;
    const double down = f(x);
    x.v[i] = keep;
    g.v[i] = (up - down) / (2 * h);
  }
  return g;
}

/// ||a - b|| / ||b|| over whole arrays.
inline double norm_rel_err(const Arr& a, const Arr& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    num += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
    den += b.v[i] * b.v[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace oracle

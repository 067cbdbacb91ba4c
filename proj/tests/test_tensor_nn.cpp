#include <doctest.h>

#include <cmath>

#include "hfr/nn/init.hpp"
#include "hfr/nn/layers.hpp"
#include "hfr/rng.hpp"
#include "oracles.hpp"

using namespace hfr;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1,
                        double hi = 1) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.vec()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// direct quadruple-loop convolution, the obvious way
template <typename T>
Tensor<T> conv_direct(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                      std::size_t stride, long pad) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - k) / stride + 1;
  Tensor<T> y({n, co, oh, ow});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t oc = 0; oc < co; ++oc)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T acc = b[oc];
          for (std::size_t ic = 0; ic < ci; ++ic)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                long iy = static_cast<long>(oy * stride) - pad + static_cast<long>(ky);
                long ix = static_cast<long>(ox * stride) - pad + static_cast<long>(kx);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) ||
                    ix >= static_cast<long>(wd))
                  continue;
                acc += x.at4(in, ic, iy, ix) * w.at4(oc, ic, ky, kx);
              }
          y.at4(in, oc, oy, ox) = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("conv2d matches the direct convolution") {
  Rng rng(42);
  nn::Conv2d<double> conv(3, 5, 4, 2, 1);
  nn::fill_normal(conv.weight(), 0.0, 0.5, rng);
  nn::fill_normal(conv.bias(), 0.0, 0.5, rng);
  Tensor<double> x = random_tensor<double>({2, 3, 8, 8}, rng);
  Tensor<double> y = conv.forward(x, false);
  Tensor<double> ref = conv_direct(x, conv.weight(), conv.bias(), 2, 1);
  REQUIRE(y.same_shape(ref));
  for (std::size_t i = 0; i < y.numel(); ++i)
    CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("conv2d output size follows convolution arithmetic") {
  nn::Conv2d<float> conv(1, 1, 4, 2, 1);
  CHECK(conv.out_hw(128) == oracle::conv_chain_out(128, {{{4, 2, 1}}}));
  nn::Conv2d<float> s1(1, 1, 4, 1, 1);
  CHECK(s1.out_hw(16) == 15);
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  // <conv(x), y> == <x, conv_T(y)> when both share one kernel
  Rng rng(7);
  const std::size_t ci = 2, co = 3, k = 4;
  nn::Conv2d<double> conv(ci, co, k, 2, 1);
  nn::fill_normal(conv.weight(), 0.0, 0.5, rng);
  conv.bias().fill(0.0);

  nn::ConvTranspose2d<double> deconv(co, ci, k, 2, 1);
  for (std::size_t a = 0; a < co; ++a)
    for (std::size_t b = 0; b < ci; ++b)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          deconv.weight().at4(a, b, i, j) = conv.weight().at4(a, b, i, j);
  deconv.bias().fill(0.0);

  Tensor<double> x = random_tensor<double>({1, ci, 8, 8}, rng);
  Tensor<double> y = random_tensor<double>({1, co, 4, 4}, rng);
  Tensor<double> cx = conv.forward(x, false);
  Tensor<double> ty = deconv.forward(y, false);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx[i] * y[i];
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += x[i] * ty[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("conv_transpose2d doubles the spatial size at k4 s2 p1") {
  nn::ConvTranspose2d<float> deconv(4, 2, 4, 2, 1);
  CHECK(deconv.out_hw(16) == 32);
}

TEST_CASE("maxpool keeps maxima and routes gradients to them") {
  Tensor<float> x({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<float>(i);
  nn::MaxPool2<float> pool;
  Tensor<float> y = pool.forward(x, true);
  CHECK(y.dim(2) == 2);
  CHECK(y.at4(0, 0, 0, 0) == 5.0f);
  CHECK(y.at4(0, 0, 1, 1) == 15.0f);

  Tensor<float> gy({1, 1, 2, 2});
  gy.fill(1.0f);
  Tensor<float> gx = pool.backward(gy);
  CHECK(gx[5] == 1.0f);
  CHECK(gx[0] == 0.0f);
  float total = 0;
  for (auto v : gx.vec()) total += v;
  CHECK(total == 4.0f);
}

TEST_CASE("concat/split round-trip") {
  Rng rng(3);
  Tensor<float> a = random_tensor<float>({2, 3, 4, 4}, rng);
  Tensor<float> b = random_tensor<float>({2, 2, 4, 4}, rng);
  Tensor<float> c = nn::concat_channels(a, b);
  CHECK(c.dim(1) == 5);
  Tensor<float> ga, gb;
  nn::split_channels(c, 3, ga, gb);
  CHECK(ga.vec() == a.vec());
  CHECK(gb.vec() == b.vec());
}

TEST_CASE("dropout scales kept units and is identity at eval") {
  Rng rng(11);
  nn::Dropout<float> drop(0.5);
  Tensor<float> x = Tensor<float>::full({1, 1, 32, 32}, 1.0f);
  Tensor<float> eval_y = drop.forward(x, false, nullptr);
  CHECK(eval_y.vec() == x.vec());

  Tensor<float> y = drop.forward(x, true, &rng);
  std::size_t kept = 0;
  for (auto v : y.vec()) {
    CHECK((v == 0.0f || v == 2.0f));
    if (v != 0.0f) ++kept;
  }
  CHECK(kept > 400);
  CHECK(kept < 620);
}

TEST_CASE("identical dropout seeds give identical masks") {
  Tensor<float> x = Tensor<float>::full({1, 1, 8, 8}, 1.0f);
  nn::Dropout<float> d1(0.5), d2(0.5);
  Rng r1(99), r2(99);
  CHECK(d1.forward(x, true, &r1).vec() == d2.forward(x, true, &r2).vec());
}

TEST_CASE("linear layer matches explicit matrix algebra") {
  Rng rng(5);
  nn::Linear<double> lin(4, 3);
  nn::fill_normal(lin.weight(), 0.0, 1.0, rng);
  nn::fill_normal(lin.bias(), 0.0, 1.0, rng);
  Tensor<double> x = random_tensor<double>({2, 4}, rng);
  Tensor<double> y = lin.forward(x, false);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = lin.bias()[j];
      for (std::size_t d = 0; d < 4; ++d) acc += x.at2(i, d) * lin.weight().at2(j, d);
      CHECK(y.at2(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("tensor reshape and shape checks") {
  Tensor<float> t({2, 3});
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  Tensor<float> r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK_THROWS_AS(t.mat(5, 5), ShapeError);
}

TEST_CASE("rng shuffle and seed fan-out are deterministic") {
  std::vector<int> a{1, 2, 3, 4, 5, 6, 7, 8}, b = a;
  Rng r1(123), r2(123);
  r1.shuffle(a.begin(), a.end());
  r2.shuffle(b.begin(), b.end());
  CHECK(a == b);
  CHECK(derive_seed(1, "x") == derive_seed(1, "x"));
  CHECK(derive_seed(1, "x") != derive_seed(1, "y"));
  CHECK(derive_seed(1, "x") != derive_seed(2, "x"));
}

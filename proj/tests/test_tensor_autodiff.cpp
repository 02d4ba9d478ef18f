#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "agis/autodiff.hpp"
#include "agis/rng.hpp"

using namespace agis;

namespace {

// Central finite differences against the analytic gradient of a scalar loss.
void check_grad(Var& param, const std::function<Var()>& loss_fn, Scalar eps = 1e-6,
                Scalar tol = 1e-5) {
  Var loss = loss_fn();
  param.zero_grad();
  backward(loss);
  REQUIRE(param.has_grad());
  Tensor analytic = param.grad();
  for (Eigen::Index i = 0; i < param.value().size(); ++i) {
    Scalar orig = param.value()[i];
    param.mutable_value()[i] = orig + eps;
    Scalar up = loss_fn().item();
    param.mutable_value()[i] = orig - eps;
    Scalar dn = loss_fn().item();
    param.mutable_value()[i] = orig;
    Scalar numeric = (up - dn) / (2 * eps);
    Scalar denom = std::max<Scalar>(1.0, std::abs(numeric));
    CHECK(std::abs(analytic[i] - numeric) / denom < tol);
  }
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, Scalar stddev = 1.0) {
  Tensor t(std::move(shape));
  fill_normal(t, rng, stddev);
  return t;
}

}  // namespace

TEST_CASE("tensor shape accounting and accessors") {
  Tensor t({2, 3, 4, 5});
  CHECK(t.size() == 120);
  t.at4(1, 2, 3, 4) = 7.0;
  CHECK(t[119] == 7.0);
  CHECK(t.reshaped({6, 20}).dim(1) == 20);
  CHECK_THROWS(t.reshaped({7, 17}));
  CHECK_THROWS(Tensor({0, 3}));
  CHECK(Tensor::constant({2}, 3.0)[1] == 3.0);
}

TEST_CASE("elementwise ops and reductions match finite differences") {
  Rng rng(1);
  Var x(random_tensor({3, 4}, rng), true);
  Var y(random_tensor({3, 4}, rng), false);
  check_grad(x, [&] { return mean_all(mul(add(x, y), sub(x, y))); });
  check_grad(x, [&] { return sum_all(abs_elem(affine(x, 2.0, 0.3))); });
  check_grad(x, [&] { return mean_all(exp_elem(tanh_act(x))); });
  check_grad(x, [&] { return mean_all(leaky_relu(x, 0.2)); });
  check_grad(x, [&] { return mean_all(relu(x)); });
}

TEST_CASE("sigmoid cross-entropy values and gradient") {
  Var z(Tensor::zeros({1}), true);
  CHECK(sigmoid_ce(z, 1.0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(sigmoid_ce(z, 0.0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Var big(Tensor::constant({1}, 100.0), false);
  CHECK(sigmoid_ce(big, 1.0).item() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sigmoid_ce(big, 0.0).item() == doctest::Approx(100.0).epsilon(1e-12));
  Rng rng(2);
  Var x(random_tensor({2, 3}, rng), true);
  check_grad(x, [&] { return mean_all(sigmoid_ce(x, 1.0)); });
  check_grad(x, [&] { return mean_all(sigmoid_ce(x, 0.0)); });
}

TEST_CASE("matrix ops match finite differences") {
  Rng rng(3);
  Var a(random_tensor({3, 4}, rng), true);
  Var b(random_tensor({4, 2}, rng), true);
  check_grad(a, [&] { return mean_all(matmul(a, b)); });
  check_grad(b, [&] { return mean_all(matmul(a, b)); });
  check_grad(a, [&] { return mean_all(transpose(a)); });
  check_grad(a, [&] { return mean_all(rowwise_l2_normalize(a)); });
  check_grad(a, [&] { return sum_all(rowwise_sum(a)); });
  Var v(random_tensor({3, 1}, rng, 0.1), true);
  // keep v away from 0 so division stays smooth
  for (Eigen::Index i = 0; i < v.value().size(); ++i)
    v.mutable_value()[i] = 1.0 + std::abs(v.value()[i]);
  check_grad(a, [&] { return mean_all(div_colvec(a, v)); });
  check_grad(v, [&] { return mean_all(div_colvec(a, v)); });
}

TEST_CASE("min/max reductions route the subgradient to the extremum") {
  Rng rng(4);
  Var a(random_tensor({3, 5}, rng), true);
  check_grad(a, [&] { return sum_all(rowwise_min(a)); });
  check_grad(a, [&] { return sum_all(colwise_max(a)); });
}

TEST_CASE("shape ops match finite differences") {
  Rng rng(5);
  Var a(random_tensor({1, 2, 4, 4}, rng), true);
  Var b(random_tensor({1, 3, 4, 4}, rng), true);
  check_grad(a, [&] { return mean_all(concat_channels({a, b})); });
  check_grad(b, [&] { return mean_all(concat_channels({a, b})); });
  Var c(random_tensor({2, 2, 3, 3}, rng), true);
  check_grad(c, [&] { return mean_all(batch_slice(c, 1)); });
  check_grad(c, [&] { return mean_all(crop(c, 1, 0, 2, 2)); });
  Var d(random_tensor({1, 1, 3, 3}, rng), true);
  check_grad(d, [&] { return mean_all(replicate_channel(d, 3)); });
  check_grad(d, [&] { return mean_all(spatial_vectors(replicate_channel(d, 2))); });
  check_grad(a, [&] { return mean_all(slice_channels(a, 1, 2)); });
  check_grad(a, [&] { return mean_all(concat_batch({a, affine(a, 0.5, 0.0)})); });
}

TEST_CASE("conv2d matches finite differences") {
  Rng rng(6);
  Var x(random_tensor({2, 2, 5, 5}, rng), true);
  Var w(random_tensor({3, 2, 3, 3}, rng, 0.5), true);
  Var b(random_tensor({3}, rng, 0.5), true);
  auto loss = [&] { return mean_all(conv2d(x, w, b, 2, 1)); };
  check_grad(x, loss);
  check_grad(w, loss);
  check_grad(b, loss);
  // shape: (5 + 2*1 - 3)/2 + 1 = 3
  CHECK(conv2d(x, w, b, 2, 1).shape() == std::vector<int>{2, 3, 3, 3});
}

TEST_CASE("conv_transpose2d matches finite differences and doubles spatial size") {
  Rng rng(7);
  Var x(random_tensor({1, 3, 4, 4}, rng), true);
  Var w(random_tensor({3, 2, 4, 4}, rng, 0.3), true);
  Var b(random_tensor({2}, rng, 0.3), true);
  auto loss = [&] { return mean_all(conv_transpose2d(x, w, b, 2, 1)); };
  check_grad(x, loss);
  check_grad(w, loss);
  check_grad(b, loss);
  CHECK(conv_transpose2d(x, w, b, 2, 1).shape() == std::vector<int>{1, 2, 8, 8});
}

TEST_CASE("instance norm normalizes and matches finite differences") {
  Rng rng(8);
  Var x(random_tensor({2, 3, 4, 4}, rng), true);
  Var gamma(Tensor::constant({3}, 1.3), true);
  Var beta(Tensor::constant({3}, -0.2), true);
  Var y = instance_norm(x, gamma, beta);
  // per-(sample, channel) statistics after normalization
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      Scalar mean = 0, sq = 0;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          Scalar v = y.value().at4(n, c, i, j);
          mean += v;
          sq += v * v;
        }
      mean /= 16;
      CHECK(mean == doctest::Approx(-0.2).epsilon(1e-9));
      CHECK(sq / 16 - mean * mean == doctest::Approx(1.3 * 1.3).epsilon(1e-3));
    }
  auto loss = [&] { return mean_all(mul(instance_norm(x, gamma, beta),
                                        instance_norm(x, gamma, beta))); };
  check_grad(x, loss, 1e-5, 1e-4);
  check_grad(gamma, loss, 1e-5, 1e-4);
  check_grad(beta, loss, 1e-5, 1e-4);
}

TEST_CASE("requires_grad gates closure construction") {
  Var a(Tensor::constant({2}, 1.0), false);
  Var b(Tensor::constant({2}, 2.0), false);
  Var c = mul(a, b);
  CHECK_FALSE(c.requires_grad());
  Var d(Tensor::constant({2}, 1.0), true);
  CHECK(mul(a, d).requires_grad());
}

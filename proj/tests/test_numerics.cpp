#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "nvcs/tensor.hpp"

using namespace nvcs;

namespace {

Tensor make_matrix(int rows, int cols, std::vector<double> values) {
  Tensor t = Tensor::matrix(rows, cols);
  t.data = std::move(values);
  return t;
}

Tensor make_vec(std::vector<double> values) {
  Tensor t = Tensor::vec(static_cast<int>(values.size()));
  t.data = std::move(values);
  return t;
}

}  // namespace

TEST_CASE("affine identity, hand arithmetic and zero matrix") {
  Tensor eye = make_matrix(2, 2, {1, 0, 0, 1});
  Tensor x = make_vec({3, 4});
  Tensor zero_b = make_vec({0, 0});
  Tensor r = affine(eye, x, zero_b);
  CHECK(r.at(0) == doctest::Approx(3.0));
  CHECK(r.at(1) == doctest::Approx(4.0));

  // [[1,2],[3,4]] * [1,1] + [1,0] = [4,7]
  Tensor w = make_matrix(2, 2, {1, 2, 3, 4});
  Tensor b = make_vec({1, 0});
  Tensor ones = make_vec({1, 1});
  Tensor r2 = affine(w, ones, b);
  CHECK(r2.at(0) == doctest::Approx(4.0));
  CHECK(r2.at(1) == doctest::Approx(7.0));

  Tensor zero_w = Tensor::matrix(1, 3);
  Tensor any = make_vec({9, -2, 5});
  Tensor b5 = make_vec({5});
  CHECK(affine(zero_w, any, b5).at(0) == doctest::Approx(5.0));
}

TEST_CASE("affine rejects dimension mismatch and non-finite output") {
  Tensor w = Tensor::matrix(2, 3);
  Tensor x = Tensor::vec(2);
  Tensor b = Tensor::vec(2);
  CHECK_THROWS_AS(affine(w, x, b), ConfigError);

  Tensor w2 = make_matrix(1, 1, {1e308});
  Tensor x2 = make_vec({1e308});
  Tensor b2 = make_vec({0});
  CHECK_THROWS_AS(affine(w2, x2, b2), NumericError);
}

TEST_CASE("affine is linear in its input") {
  Rng rng(7);
  Tensor w = Tensor::matrix(4, 3);
  for (double& v : w.data) v = rng.uniform(-1, 1);
  Tensor zero_b = Tensor::vec(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = Tensor::vec(3), y = Tensor::vec(3);
    for (double& v : x.data) v = rng.uniform(-1, 1);
    for (double& v : y.data) v = rng.uniform(-1, 1);
    double alpha = rng.uniform(-2, 2), beta = rng.uniform(-2, 2);
    Tensor mix = Tensor::vec(3);
    for (int i = 0; i < 3; ++i) mix.at(i) = alpha * x.at(i) + beta * y.at(i);
    Tensor lhs = affine(w, mix, zero_b);
    Tensor rx = affine(w, x, zero_b), ry = affine(w, y, zero_b);
    for (int i = 0; i < 4; ++i)
      CHECK(lhs.at(i) == doctest::Approx(alpha * rx.at(i) + beta * ry.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("scaled_tanh values and shape") {
  CHECK(scaled_tanh(0.0) == 0.0);
  // 1.5 = 1/S, so f(1.5) = A * tanh(1)
  CHECK(scaled_tanh(1.5) == doctest::Approx(1.306819412204497).epsilon(1e-12));
  Rng rng(3);
  double prev = -10.0;
  for (double u = -9.0; u <= 9.0; u += 0.37) {
    double v = scaled_tanh(u);
    CHECK(v > scaled_tanh(prev));             // monotone increasing
    CHECK(std::abs(v) <= kScaledTanhA);       // bounded
    CHECK(scaled_tanh(-u) == doctest::Approx(-v).epsilon(1e-15)); // odd
    prev = u;
  }
  Tensor t = make_vec({0.0, 1.5, -1.5});
  Tensor ft = scaled_tanh(t);
  CHECK(ft.at(0) == 0.0);
  CHECK(ft.at(1) == doctest::Approx(1.306819412204497));
  CHECK(ft.at(2) == doctest::Approx(-1.306819412204497));
}

TEST_CASE("softmax fixtures") {
  Tensor two = make_vec({0, 0});
  Tensor r = softmax(two);
  CHECK(r.at(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.at(1) == doctest::Approx(0.5).epsilon(1e-15));

  Tensor constant = make_vec({4.2, 4.2, 4.2});
  Tensor rc = softmax(constant);
  for (int i = 0; i < 3; ++i) CHECK(rc.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Tensor logs = make_vec({std::log(1.0), std::log(2.0), std::log(3.0)});
  Tensor rl = softmax(logs);
  CHECK(rl.at(0) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(rl.at(1) == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
  CHECK(rl.at(2) == doctest::Approx(3.0 / 6.0).epsilon(1e-12));

  Tensor inf = make_vec({1.0, std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(softmax(inf), NumericError);
}

TEST_CASE("softmax sums to one and shifts away") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 1 + static_cast<int>(rng.below(8));
    Tensor z = Tensor::vec(n);
    for (double& v : z.data) v = rng.uniform(-30, 30);
    Tensor y = softmax(z);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(y.at(i) > 0.0);
      CHECK(y.at(i) <= 1.0);
      sum += y.at(i);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    double shift = rng.uniform(-5, 5);
    Tensor zs = z;
    for (double& v : zs.data) v += shift;
    Tensor ys = softmax(zs);
    for (int i = 0; i < n; ++i) CHECK(ys.at(i) == doctest::Approx(y.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("rng determinism") {
  Rng a(42), b(42), c(43);
  bool any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    auto va = a.next_u64();
    CHECK(va == b.next_u64());
    if (va != c.next_u64()) any_diff = true;
  }
  CHECK(any_diff);

  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("finite difference check on a quadratic") {
  Tensor theta = make_vec({3.0});
  Tensor grad = make_vec({6.0});
  auto loss = [&]() { return theta.at(0) * theta.at(0); };
  auto report = finite_diff_check(loss, {{"theta", &theta}}, {{"theta", &grad}}, 1e-5, 1e-4);
  CHECK(report.all_pass);
  CHECK(report.entry("theta").max_rel_err < 1e-8);
  CHECK(theta.at(0) == 3.0); // restored
}

TEST_CASE("finite difference check against the closed-form scaled_tanh derivative") {
  Tensor theta = make_vec({0.5});
  // d/du A tanh(S u) = A S (1 - tanh^2(S u))
  double analytic = kScaledTanhA * kScaledTanhS *
                    (1.0 - std::tanh(kScaledTanhS * 0.5) * std::tanh(kScaledTanhS * 0.5));
  CHECK(analytic == doctest::Approx(1.0256844408840484).epsilon(1e-12));
  Tensor grad = make_vec({analytic});
  auto loss = [&]() { return scaled_tanh(theta.at(0)); };
  auto report = finite_diff_check(loss, {{"theta", &theta}}, {{"theta", &grad}}, 1e-5, 1e-4);
  CHECK(report.all_pass);
  CHECK(report.entry("theta").max_rel_err < 1e-6);
}

TEST_CASE("finite difference check flags a doubled gradient") {
  Tensor theta = make_vec({3.0});
  Tensor wrong = make_vec({12.0}); // true gradient is 6
  auto loss = [&]() { return theta.at(0) * theta.at(0); };
  auto report = finite_diff_check(loss, {{"theta", &theta}}, {{"theta", &wrong}}, 1e-5, 1e-4);
  CHECK_FALSE(report.all_pass);
  CHECK(report.entry("theta").max_rel_err == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("finite difference check rejects a non-finite loss") {
  Tensor theta = make_vec({0.0});
  Tensor grad = make_vec({0.0});
  auto loss = [&]() { return theta.at(0) == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(
      finite_diff_check(loss, {{"theta", &theta}}, {{"theta", &grad}}, 1e-5, 1e-4),
      NumericError);
}

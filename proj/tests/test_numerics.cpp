#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "relkit/autodiff.hpp"
#include "relkit/errors.hpp"
#include "relkit/rng.hpp"
#include "relkit/tensor.hpp"

using namespace relkit;
using namespace relkit::numerics;
using testutil::grad_check;
using testutil::random_tensor;

TEST_CASE("tensor shape checks") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0, 2}), ShapeError);
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.rank() == 2);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.v.size() == 6);
}

TEST_CASE("derive_seed separates streams") {
  std::set<uint64_t> seen;
  seen.insert(derive_seed(0, "a"));
  seen.insert(derive_seed(0, "b"));
  seen.insert(derive_seed(1, "a"));
  seen.insert(derive_seed(0, "a", 1));
  seen.insert(derive_seed(0, "a", 0, 1));
  seen.insert(derive_seed(0, "a", 0, 0, 1));
  CHECK(seen.size() == 6);
  CHECK(derive_seed(7, "epoch", 3) == derive_seed(7, "epoch", 3));
}

TEST_CASE("uniform01 stays in [0,1)") {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("uniform_int covers its range") {
  Rng rng(3);
  std::set<uint64_t> seen;
  for (int i = 0; i < 2000; ++i) seen.insert(rng.uniform_int(7));
  CHECK(seen.size() == 7);
  CHECK(*seen.rbegin() == 6);
  CHECK_THROWS_AS(rng.uniform_int(0), UsageError);
}

TEST_CASE("poisson empirical mean tracks mu") {
  for (double mu : {4.0, 8.0}) {
    Rng rng(derive_seed(0, "poisson", static_cast<uint64_t>(mu)));
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += static_cast<double>(rng.poisson(mu));
    CHECK(std::abs(sum / n - mu) < 0.05);
  }
}

TEST_CASE("normal moments") {
  Rng rng(5);
  double s1 = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    s1 += x;
    s2 += x * x;
  }
  CHECK(std::abs(s1 / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("beta stays in (0,1) and matches its mean") {
  Rng rng(9);
  double sum = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    double b = rng.beta(0.2, 0.2);
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);
    sum += b;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.02);  // Beta(a,a) is symmetric
}

TEST_CASE("shuffle is a permutation and seed-stable") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[static_cast<size_t>(i)] = i;
  auto w = v;
  Rng a(42), b(42);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 50);
}

TEST_CASE("backward requires a scalar and runs once") {
  Tape tape;
  Var x = tape.leaf(Tensor::zeros({2, 2}), true);
  CHECK_THROWS_AS(tape.backward(x), UsageError);
  Var s = tape.sum(x);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), UsageError);
  tape.zero_grad();
  tape.backward(s);  // allowed again after zero_grad
  CHECK(tape.grad(x).v[0] == 1.0);
}

TEST_CASE("grad of an untouched leaf is lazy zeros") {
  Tape tape;
  Var x = tape.leaf(Tensor::full({2, 2}, 1.0), true);
  Var y = tape.leaf(Tensor::full({2, 2}, 1.0), true);
  tape.backward(tape.sum(x));
  CHECK(!tape.has_grad(y));
  for (double g : tape.grad(y).v) CHECK(g == 0.0);
  CHECK(tape.has_grad(x));
}

TEST_CASE("non-finite loss is rejected") {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(1e308), true);
  Var y = tape.add(x, x);  // overflows to inf
  CHECK_THROWS_AS(tape.backward(y), RuntimeFailure);
}

// Per-op gradient checks against central differences on random inputs.
TEST_CASE("op gradients match finite differences") {
  const double kTol = 1e-4;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(derive_seed(seed, "opgrad"));
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {3, 4});
    Tensor m = random_tensor(rng, {4, 2});

    auto check = [&](const char* name, auto build, const Tensor& x) {
      CAPTURE(name);
      CHECK(grad_check(build, x) < kTol);
    };

    check("add", [&](Tape& t, Var x) {
      return t.mean_all(t.add(x, t.constant(b)));
    }, a);
    check("sub", [&](Tape& t, Var x) {
      return t.mean_all(t.sub(t.constant(b), x));
    }, a);
    check("mul", [&](Tape& t, Var x) {
      return t.mean_all(t.mul(x, t.constant(b)));
    }, a);
    check("scale", [&](Tape& t, Var x) {
      return t.mean_all(t.scale(x, -1.7));
    }, a);
    check("add_scalar", [&](Tape& t, Var x) {
      return t.mean_all(t.add_scalar(x, 0.3));
    }, a);
    check("cmul", [&](Tape& t, Var x) { return t.mean_all(t.cmul(x, b)); },
          a);
    check("cadd", [&](Tape& t, Var x) { return t.mean_all(t.cadd(x, b)); },
          a);
    Tensor bias4 = random_tensor(rng, {4});
    check("add_row_bias (matrix side)", [&](Tape& t, Var x) {
      return t.mean_all(t.add_row_bias(x, t.constant(bias4)));
    }, a);
    check("add_row_bias (bias side)", [&](Tape& t, Var x) {
      return t.mean_all(t.add_row_bias(t.constant(a), x));
    }, random_tensor(rng, {4}));
    check("sum_of", [&](Tape& t, Var x) {
      std::vector<Var> xs = {x, t.constant(b), x};
      return t.mean_all(t.sum_of(xs));
    }, a);
    check("matmul (left)", [&](Tape& t, Var x) {
      return t.mean_all(t.matmul(x, t.constant(m)));
    }, a);
    check("matmul (right)", [&](Tape& t, Var x) {
      return t.mean_all(t.matmul(t.constant(a), x));
    }, m);
    check("matmul_nt", [&](Tape& t, Var x) {
      return t.mean_all(t.matmul_nt(x, t.constant(b)));
    }, a);
    check("slice_cols", [&](Tape& t, Var x) {
      return t.mean_all(t.slice_cols(x, 1, 3));
    }, a);
    check("concat_cols", [&](Tape& t, Var x) {
      std::vector<Var> xs = {x, t.constant(a)};
      return t.mean_all(t.concat_cols(xs));
    }, a);
    check("stack_rows", [&](Tape& t, Var x) {
      std::vector<Var> xs = {t.take_rows(x, {0}), t.take_rows(x, {2, 1})};
      return t.mean_all(t.stack_rows(xs));
    }, a);
    check("take_rows (repeats)", [&](Tape& t, Var x) {
      return t.mean_all(t.take_rows(x, {1, 1, 0}));
    }, a);
    check("embedding_rows", [&](Tape& t, Var x) {
      return t.mean_all(t.embedding_rows(x, {2, 0, 2}));
    }, a);
    check("mean_pool_bag", [&](Tape& t, Var x) {
      return t.mean_all(t.mean_pool_bag(x, {{0, 1, 1}, {2}}));
    }, a);
    check("tanh", [&](Tape& t, Var x) { return t.mean_all(t.tanh_(x)); }, a);
    check("gelu", [&](Tape& t, Var x) { return t.mean_all(t.gelu(x)); }, a);
    check("exp", [&](Tape& t, Var x) { return t.mean_all(t.exp_(x)); }, a);
    check("pow", [&](Tape& t, Var x) { return t.mean_all(t.pow_(x, 1.7)); },
          testutil::random_positive(rng, {3, 4}));
    check("softmax_rows", [&](Tape& t, Var x) {
      return t.mean_all(t.mul(t.softmax_rows(x), t.constant(b)));
    }, a);
    check("log_softmax_rows", [&](Tape& t, Var x) {
      return t.mean_all(t.mul(t.log_softmax_rows(x), t.constant(b)));
    }, a);
    check("layer_norm (input)", [&](Tape& t, Var x) {
      Var gain = t.constant(Tensor::full({4}, 1.3));
      Var bias = t.constant(Tensor::full({4}, 0.2));
      return t.mean_all(t.mul(t.layer_norm_rows(x, gain, bias, 1e-5),
                              t.constant(b)));
    }, a);
    check("layer_norm (gain)", [&](Tape& t, Var x) {
      Var bias = t.constant(Tensor::zeros({4}));
      return t.mean_all(t.mul(t.layer_norm_rows(t.constant(a), x, bias, 1e-5),
                              t.constant(b)));
    }, random_tensor(rng, {4}));
    check("l2_normalize_rows", [&](Tape& t, Var x) {
      return t.mean_all(t.mul(t.l2_normalize_rows(x), t.constant(b)));
    }, a);
    check("dropout", [&](Tape& t, Var x) {
      return t.mean_all(t.dropout(x, 0.4, 123));
    }, a);
    check("sum", [&](Tape& t, Var x) { return t.sum(x); }, a);
    check("mean_all", [&](Tape& t, Var x) { return t.mean_all(x); }, a);
    check("select", [&](Tape& t, Var x) { return t.select(x, 5); }, a);
  }
}

TEST_CASE("dropout scales by 1/keep and is seed-stable") {
  Tape tape;
  Var x = tape.leaf(Tensor::full({20, 20}, 1.0), true);
  Var d1 = tape.dropout(x, 0.5, 99);
  Var d2 = tape.dropout(x, 0.5, 99);
  CHECK(tape.val(d1).v == tape.val(d2).v);
  for (double v : tape.val(d1).v) CHECK((v == 0.0 || v == 2.0));
  Var d0 = tape.dropout(x, 0.0, 99);
  CHECK(tape.val(d0).v == tape.val(x).v);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(2);
  Tape tape;
  Var x = tape.leaf(random_tensor(rng, {5, 7}, 3.0), false);
  const Tensor& s = tape.val(tape.softmax_rows(x));
  for (int64_t r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (int64_t c = 0; c < 7; ++c) sum += s.v[static_cast<size_t>(r * 7 + c)];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("matmul matches a hand computation") {
  Tape tape;
  Var a = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}), false);
  Var b = tape.leaf(Tensor({2, 2}, {5, 6, 7, 8}), false);
  CHECK(tape.val(tape.matmul(a, b)).v == std::vector<double>{19, 22, 43, 50});
  CHECK(tape.val(tape.matmul_nt(a, b)).v ==
        std::vector<double>{17, 23, 39, 53});
}

TEST_CASE("embedding_rows rejects out-of-range ids") {
  Tape tape;
  Var table = tape.leaf(Tensor::zeros({3, 2}), true);
  CHECK_THROWS_AS(tape.embedding_rows(table, {3}), IndexError);
  CHECK_THROWS_AS(tape.embedding_rows(table, {-1}), IndexError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dialoglab/rng.hpp"
#include "dialoglab/tensor.hpp"

using namespace dialoglab;

namespace {

Tensor vec(std::vector<double> v, bool rg = false) {
  int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v), rg);
}

Tensor mat(int r, int c, std::vector<double> v, bool rg = false) {
  return Tensor({r, c}, std::move(v), rg);
}

Tensor random_tensor(Shape shape, std::mt19937_64& g, bool rg = false) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  size_t n = 1;
  for (int s : shape) n *= static_cast<size_t>(s);
  std::vector<double> v(n);
  for (double& x : v) x = d(g);
  return Tensor(shape, std::move(v), rg);
}

}  // namespace

TEST_CASE("matmul identity, zero and hand-computed cases") {
  Tensor i2 = mat(2, 2, {1, 0, 0, 1});
  Tensor a = mat(2, 2, {1, 2, 3, 4});
  Tensor r = ops::matmul(i2, a);
  for (int k = 0; k < 4; ++k) CHECK(r.at(k) == a.at(k));

  Tensor z = ops::matmul(a, mat(2, 1, {0, 0}));
  CHECK(z.at(0) == 0.0);
  CHECK(z.at(1) == 0.0);

  // [[1,2],[3,4]] x [[5],[6]] worked out by hand
  Tensor h = ops::matmul(a, mat(2, 1, {5, 6}));
  CHECK(h.at(0) == 17.0);
  CHECK(h.at(1) == 39.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = mat(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor b = mat(2, 2, {1, 2, 3, 4});
  try {
    ops::matmul(a, b);
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.code() == "dimension");
    std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("2x2") != std::string::npos);
  }
}

TEST_CASE("softmax trivial cases") {
  Tensor u = ops::softmax(vec({0, 0, 0}));
  for (int i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  CHECK(ops::softmax(vec({42.0})).at(0) == 1.0);
  CHECK(ops::softmax(vec({-7.5})).at(0) == 1.0);

  CHECK_THROWS_AS(ops::softmax(Tensor({0}, {})), Error);
}

TEST_CASE("softmax matches a long-double formula oracle") {
  std::vector<double> x = {1, 2, 3};
  Tensor s = ops::softmax(vec(x));
  long double z = 0;
  for (double v : x) z += expl(static_cast<long double>(v));
  double total = 0;
  for (int i = 0; i < 3; ++i) {
    long double want = expl(static_cast<long double>(x[static_cast<size_t>(i)])) / z;
    CHECK(s.at(i) == doctest::Approx(static_cast<double>(want)).epsilon(1e-12));
    CHECK(s.at(i) > 0);
    total += s.at(i);
  }
  CHECK(std::fabs(total - 1.0) < 1e-9);
}

TEST_CASE("softmax is permutation equivariant and stable for huge inputs") {
  Tensor a = ops::softmax(vec({3, 1, 2}));
  Tensor b = ops::softmax(vec({1, 2, 3}));
  CHECK(a.at(0) == doctest::Approx(b.at(2)).epsilon(1e-15));
  CHECK(a.at(1) == doctest::Approx(b.at(0)).epsilon(1e-15));
  CHECK(a.at(2) == doctest::Approx(b.at(1)).epsilon(1e-15));

  Tensor big = ops::softmax(vec({1e4, 1e4 + 1}));
  CHECK(big.all_finite());
  CHECK(big.at(0) + big.at(1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("elementwise basics") {
  CHECK(ops::sigmoid(vec({0})).at(0) == 0.5);
  CHECK(ops::tanh_(vec({0})).at(0) == 0.0);

  Tensor c = ops::concat({vec({1, 2}), vec({3})});
  CHECK(c.size() == 3);
  CHECK(c.at(2) == 3.0);

  Tensor s = ops::add(vec({1, 2}), vec({3, 4}));
  CHECK(s.at(1) == 6.0);
}

TEST_CASE("dropout: p=0 identity, eval identity, seeded scaling") {
  RngPool rng(7);
  Tensor x = vec({1, 2, 3, 4, 5, 6, 7, 8});
  Tensor same = ops::dropout(x, 0.0, rng, "d", true);
  for (int i = 0; i < 8; ++i) CHECK(same.at(i) == x.at(i));

  Tensor eval = ops::dropout(x, 0.5, rng, "d", false);
  for (int i = 0; i < 8; ++i) CHECK(eval.at(i) == x.at(i));

  RngPool r1(9), r2(9);
  Tensor a = ops::dropout(x, 0.5, r1, "d", true);
  Tensor b = ops::dropout(x, 0.5, r2, "d", true);
  for (int i = 0; i < 8; ++i) {
    CHECK(a.at(i) == b.at(i));  // deterministic given seed
    // survivors scaled by 1/(1-p), the rest zeroed
    bool zeroed = a.at(i) == 0.0;
    bool scaled = a.at(i) == doctest::Approx(x.at(i) * 2.0).epsilon(1e-15);
    CHECK((zeroed || scaled));
  }

  CHECK_THROWS_AS(ops::dropout(x, 1.0, rng, "d", true), Error);
}

TEST_CASE("embedding lookup bounds") {
  Tensor table = mat(3, 2, {1, 2, 3, 4, 5, 6});
  Tensor got = ops::embedding_lookup(table, {2, 0});
  CHECK(got.at(0, 0) == 5.0);
  CHECK(got.at(1, 1) == 2.0);
  try {
    ops::embedding_lookup(table, {3});
    FAIL("expected lookup error");
  } catch (const Error& e) {
    CHECK(e.code() == "lookup");
  }
}

TEST_CASE("backward: sum gives ones, dot(x,x) gives 2x") {
  Tensor x = vec({1, 2, 5}, true);
  {
    GradTape tape;
    tape.backward(ops::sum(x));
  }
  for (int i = 0; i < 3; ++i) CHECK(x.grad_at(i) == 1.0);

  Tensor y = vec({1, 2}, true);
  {
    GradTape tape;
    tape.backward(ops::dot(y, y));
  }
  CHECK(y.grad_at(0) == 2.0);
  CHECK(y.grad_at(1) == 4.0);
}

TEST_CASE("backward accumulates across multiple uses") {
  Tensor x = vec({3.0}, true);
  {
    GradTape tape;
    Tensor y = ops::add(x, x);  // dy/dx = 2
    tape.backward(ops::sum(y));
  }
  CHECK(x.grad_at(0) == 2.0);
}

TEST_CASE("backward twice and non-scalar loss are rejected") {
  Tensor x = vec({1, 2}, true);
  GradTape tape;
  Tensor s = ops::sum(x);
  tape.backward(s);
  try {
    tape.backward(s);
    FAIL("expected contract error");
  } catch (const Error& e) {
    CHECK(e.code() == "contract");
  }

  Tensor y = vec({1, 2}, true);
  GradTape tape2;
  Tensor v = ops::mul(y, y);
  CHECK_THROWS_AS(tape2.backward(v), Error);
}

TEST_CASE("random composite graph matches finite differences") {
  std::mt19937_64 g(11);
  Tensor x = random_tensor({4}, g);
  auto f = [](const Tensor& t) {
    Tensor a = ops::tanh_(t);
    Tensor b = ops::mul(a, ops::sigmoid(t));
    return ops::sum(b);
  };
  CHECK(grad_check(f, x, 1e-5) < 1e-6);
}

TEST_CASE("grad_check reference cases") {
  std::mt19937_64 g(13);
  CHECK(grad_check([](const Tensor& t) { return ops::sum(t); }, random_tensor({5}, g), 1e-5) <
        1e-10);

  auto pick_first = [](const Tensor& t) {
    Tensor s = ops::softmax(t);
    return ops::dot(s, Tensor({s.dim(0)}, {1, 0, 0}));
  };
  CHECK(grad_check(pick_first, vec({1, 2, 3}), 1e-5) < 1e-6);
}

TEST_CASE("every primitive passes grad_check at tiny dims") {
  std::mt19937_64 g(17);
  double h = 1e-5;
  auto ok = [&](const std::function<Tensor(const Tensor&)>& f, Tensor x) {
    CHECK(grad_check(f, x, h) < 1e-4);
  };

  Tensor m23 = random_tensor({2, 3}, g);
  Tensor m32 = random_tensor({3, 2}, g);
  Tensor v3 = random_tensor({3}, g);
  Tensor v3b = random_tensor({3}, g);

  ok([&](const Tensor& t) { return ops::sum(ops::matmul(t, m32)); }, m23);
  ok([&](const Tensor& t) { return ops::sum(ops::matmul(m23, t)); }, m32);
  ok([&](const Tensor& t) { return ops::sum(ops::matvec(m23, t)); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::matvec(t, v3)); }, m23);
  ok([&](const Tensor& t) { return ops::sum(ops::transpose(t)); }, m23);
  ok([&](const Tensor& t) { return ops::sum(ops::add(t, v3b)); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::sub(t, v3b)); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::mul(t, v3b)); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::scale(t, -2.5)); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::affine(t, 3.0, -1.0)); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::add_rowvec(m23, t)); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::add_rowvec(t, v3)); }, m23);
  ok([&](const Tensor& t) { return ops::sum(ops::tanh_(t)); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::sigmoid(t)); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::exp_(t)); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::relu(t)); }, vec({-1.3, 0.4, 2.0}));
  ok([&](const Tensor& t) { return ops::sum(ops::log_(t)); }, vec({0.5, 1.5, 2.5}));
  ok([&](const Tensor& t) { return ops::sum(ops::sqrt_(t)); }, vec({0.5, 1.5, 2.5}));
  ok([&](const Tensor& t) { return ops::sum(ops::div(t, vec({0.7, -1.2, 2.0}))); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::div(v3, t)); }, vec({0.7, -1.2, 2.0}));
  ok([&](const Tensor& t) { return ops::dot(ops::softmax(t), v3b); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::mul(ops::softmax_rows(t), ops::sigmoid(t))); },
     m23);
  ok([&](const Tensor& t) { return ops::sum(ops::concat({t, v3b})); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::stack_rows({t, v3b})); }, v3);
  ok([&](const Tensor& t) { return ops::sum(ops::row(t, 1)); }, m23);
  ok([&](const Tensor& t) { return ops::sum(ops::col_slice(t, 1, 3)); }, m23);
  ok([&](const Tensor& t) { return ops::sum(ops::concat_cols({t, m23})); }, m23);
  ok([&](const Tensor& t) { return ops::dot(t, v3b); }, v3);
  {
    Tensor gamma = vec({1.1, 0.9, 1.0});
    Tensor beta = vec({0.1, -0.2, 0.0});
    ok([&](const Tensor& t) { return ops::sum(ops::layer_norm_rows(t, gamma, beta)); }, m23);
    ok([&](const Tensor& t) { return ops::sum(ops::layer_norm_rows(m23, t, beta)); }, gamma);
    ok([&](const Tensor& t) { return ops::sum(ops::layer_norm_rows(m23, gamma, t)); }, beta);
  }
  ok([&](const Tensor& t) { return ops::cross_entropy_mean(t, {0, 2, 1}, 5); },
     random_tensor({3, 4}, g));
  // the PAD position must not contribute
  ok([&](const Tensor& t) { return ops::cross_entropy_mean(t, {0, 5, 1}, 5); },
     random_tensor({3, 4}, g));
  // dropout with a replayed mask
  ok([](const Tensor& t) {
       RngPool rng(123);
       return ops::sum(ops::dropout(t, 0.5, rng, "d", true));
     },
     random_tensor({6}, g));
  // embedding rows receive gradients, repeated ids accumulate
  ok([](const Tensor& t) {
       Tensor e = ops::embedding_lookup(t, {0, 2, 2});
       return ops::sum(ops::tanh_(e));
     },
     random_tensor({3, 2}, g));
}

TEST_CASE("two seeded forward+backward passes are bitwise identical") {
  auto run = [](std::vector<double>* data, std::vector<double>* grad) {
    RngPool rng(77);
    Tensor x = Tensor({6}, {0.3, -0.1, 0.7, 1.1, -0.6, 0.2}, true);
    GradTape tape;
    Tensor y = ops::dropout(ops::tanh_(x), 0.3, rng, "d", true);
    tape.backward(ops::sum(y));
    *data = y.data();
    *grad = x.grad();
  };
  std::vector<double> d1, g1, d2, g2;
  run(&d1, &g1);
  run(&d2, &g2);
  CHECK(d1 == d2);
  CHECK(g1 == g2);
}

TEST_CASE("cross entropy on uniform logits is ln(V)") {
  Tensor logits = mat(2, 4, std::vector<double>(8, 0.0));
  Tensor ce = ops::cross_entropy_mean(logits, {1, 3}, 0);
  CHECK(ce.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(ops::cross_entropy_mean(logits, {0, 0}, 0), Error);  // all PAD
}

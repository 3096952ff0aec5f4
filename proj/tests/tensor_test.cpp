#include <cmath>

#include <doctest.h>

#include "akd/tensor.hpp"
#include "test_support.hpp"

using namespace akd;
using akd::testing::grad_check;
using akd::testing::push_off_kinks;
using akd::testing::random_values;

namespace {

double entropy(const Tensor& p) {
  double h = 0.0;
  for (double v : p.values()) h -= v * std::log(v);
  return h;
}

/// Fixed random coefficients turn a tensor output into a scalar loss so the
/// finite-difference check exercises the whole Jacobian.
Tensor weighted_sum(Graph& g, const Tensor& out, const std::vector<double>& coeffs) {
  Tensor c = Tensor::from_values(out.dims(), coeffs);
  return g.sum(g.mul(out, c));
}

}  // namespace

TEST_CASE("matmul forward examples") {
  Graph g;
  Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  CHECK(g.matmul(eye, a).values() == std::vector<double>{1, 2, 3, 4});

  Tensor proj = Tensor::from_values({2, 2}, {1, 0, 0, 0});
  Tensor v = Tensor::from_values({2, 1}, {5, 7});
  CHECK(g.matmul(proj, v).values() == std::vector<double>{5, 0});

  CHECK_THROWS_AS(g.matmul(a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(101);
  Tensor a = Tensor::from_values({3, 4}, random_values(12, rng), true);
  Tensor b = Tensor::from_values({4, 2}, random_values(8, rng), true);
  auto loss = [&] {
    Graph g;
    return g.sum(g.matmul(a, b)).item();
  };
  auto analytic = [&] {
    Graph g;
    a.zero_grad();
    b.zero_grad();
    g.backward(g.sum(g.matmul(a, b)));
    return a.grad();
  };
  auto r = grad_check(a, loss, analytic);
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("elementwise examples and mul gradient") {
  Graph g;
  Tensor x = Tensor::from_values({3}, {1, 2, 3});
  Tensor zero = Tensor::zeros({3});
  CHECK(g.mul(x, zero).values() == std::vector<double>{0, 0, 0});
  CHECK(g.add(x, g.mul_scalar(x, -1.0)).values() == std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(g.add(x, Tensor::zeros({4})), ShapeError);

  Rng rng(102);
  Tensor a = Tensor::from_values({5}, random_values(5, rng), true);
  Tensor b = Tensor::from_values({5}, random_values(5, rng));
  {
    Graph g2;
    a.zero_grad();
    g2.backward(g2.sum(g2.mul(a, b)));
    for (int i = 0; i < 5; ++i) CHECK(a.grad()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
  }
  auto loss = [&] {
    Graph g2;
    return g2.sum(g2.mul(a, b)).item();
  };
  auto analytic = [&] {
    Graph g2;
    a.zero_grad();
    g2.backward(g2.sum(g2.mul(a, b)));
    return a.grad();
  };
  CHECK(grad_check(a, loss, analytic).max_rel_err < 1e-6);
}

TEST_CASE("relu examples, idempotence, gradient mask") {
  Graph g;
  Tensor x = Tensor::from_values({3}, {-1, 0, 2});
  Tensor y = g.relu(x);
  CHECK(y.values() == std::vector<double>{0, 0, 2});
  CHECK(g.relu(y).values() == y.values());

  Rng rng(103);
  auto vals = random_values(9, rng);
  push_off_kinks(vals);
  Tensor p = Tensor::from_values({9}, vals, true);
  Graph g2;
  p.zero_grad();
  g2.backward(g2.sum(g2.relu(p)));
  for (int i = 0; i < 9; ++i)
    CHECK(p.grad()[i] == (vals[static_cast<size_t>(i)] > 0 ? 1.0 : 0.0));

  auto loss = [&] {
    Graph g3;
    return g3.sum(g3.relu(p)).item();
  };
  auto analytic = [&] {
    Graph g3;
    p.zero_grad();
    g3.backward(g3.sum(g3.relu(p)));
    return p.grad();
  };
  CHECK(grad_check(p, loss, analytic).max_rel_err < 1e-6);
}

TEST_CASE("global_max_pool examples and gradient routing") {
  Graph g;
  Tensor fm = Tensor::from_values({2, 2, 2}, {1, 5, 3, 2, -1, -1, -1, -9});
  Tensor pooled = g.global_max_pool(fm);
  CHECK(pooled.values() == std::vector<double>{5, -1});

  Tensor flat = Tensor::full({3, 2, 2}, 4.25);
  CHECK(g.global_max_pool(flat).values() == std::vector<double>{4.25, 4.25, 4.25});

  CHECK_THROWS_AS(g.global_max_pool(Tensor::zeros({2, 2})), ShapeError);

  // Ties break at the first row-major index.
  Tensor x = Tensor::from_values({1, 2, 2}, {7, 7, 1, 2}, true);
  Graph g2;
  x.zero_grad();
  g2.backward(g2.sum(g2.global_max_pool(x)));
  CHECK(x.grad() == std::vector<double>{1, 0, 0, 0});

  Rng rng(104);
  Tensor p = Tensor::from_values({2, 3, 3}, random_values(18, rng), true);
  auto loss = [&] {
    Graph g3;
    return g3.sum(g3.global_max_pool(p)).item();
  };
  auto analytic = [&] {
    Graph g3;
    p.zero_grad();
    g3.backward(g3.sum(g3.global_max_pool(p)));
    return p.grad();
  };
  CHECK(grad_check(p, loss, analytic).max_rel_err < 1e-6);
}

TEST_CASE("softmax_t examples and invariants") {
  Graph g;
  Tensor uniform_soft = g.softmax_t(Tensor::full({3}, 2.5), 7.0);
  for (double v : uniform_soft.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-14));

  Tensor z = Tensor::from_values({2}, {std::log(2.0), 0.0});
  Tensor p = g.softmax_t(z, 1.0);
  CHECK(p.values()[0] == doctest::Approx(2.0 / 3).epsilon(1e-14));
  CHECK(p.values()[1] == doctest::Approx(1.0 / 3).epsilon(1e-14));

  Tensor skew = Tensor::from_values({4}, {3.0, -1.0, 0.5, 2.0});
  CHECK(entropy(g.softmax_t(skew, 10.0)) > entropy(g.softmax_t(skew, 1.0)));

  CHECK_THROWS_AS(g.softmax_t(z, 0.0), ParamError);
  CHECK_THROWS_AS(g.softmax_t(z, -2.0), ParamError);

  Rng rng(105);
  for (int trial = 0; trial < 200; ++trial) {
    int64_t k = 2 + static_cast<int64_t>(rng.bounded(6));
    Tensor logits = Tensor::from_values({k}, random_values(k, rng, -30.0, 30.0));
    Tensor soft = g.softmax_t(logits, rng.uniform(0.1, 10.0));
    double sum = 0.0;
    for (double v : soft.values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0 + 1e-15);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("backward basics: sum, quadratic, accumulation, non-scalar error") {
  Rng rng(106);
  Tensor x = Tensor::from_values({6}, random_values(6, rng), true);

  {
    Graph g;
    x.zero_grad();
    g.backward(g.sum(x));
    CHECK(x.grad() == std::vector<double>(6, 1.0));
  }
  {
    Graph g;
    x.zero_grad();
    g.backward(g.mul_scalar(g.sum(g.mul(x, x)), 0.5));
    for (int i = 0; i < 6; ++i) CHECK(x.grad()[i] == doctest::Approx(x.data()[i]).epsilon(1e-12));
  }
  {
    // Two backwards without zero_grad accumulate to exactly twice the grad.
    Graph g;
    x.zero_grad();
    Tensor loss = g.mul_scalar(g.sum(g.mul(x, x)), 0.5);
    g.backward(loss);
    std::vector<double> once = x.grad();
    g.backward(loss);
    for (int i = 0; i < 6; ++i) CHECK(x.grad()[i] == 2.0 * once[static_cast<size_t>(i)]);
  }
  {
    Graph g;
    CHECK_THROWS_AS(g.backward(g.mul(x, x)), ShapeError);
  }
}

TEST_CASE("composite graph gradient: matmul -> relu -> softmax -> KL") {
  Rng rng(107);
  auto wv = random_values(12, rng);
  push_off_kinks(wv, 2e-2);
  Tensor w = Tensor::from_values({4, 3}, wv, true);
  Tensor input = Tensor::from_values({2, 4}, random_values(8, rng));
  Tensor target = Tensor::from_values({2, 3}, {0.2, 0.3, 0.5, 0.6, 0.1, 0.3});

  auto build = [&](Graph& g) {
    Tensor logits = g.relu(g.matmul(input, w));
    Tensor q = g.softmax_t(logits, 2.0);
    // KL(target || q) summed over the batch
    return g.sum(g.mul(target, g.sub(g.log(target), g.log(q))));
  };
  auto loss = [&] {
    Graph g;
    return build(g).item();
  };
  auto analytic = [&] {
    Graph g;
    w.zero_grad();
    g.backward(build(g));
    return w.grad();
  };
  CHECK(grad_check(w, loss, analytic).max_rel_err < 1e-5);
}

TEST_CASE("finite-difference property across every differentiable op") {
  Rng rng(108);

  auto check_op = [&](const char* name, Tensor param,
                      const std::function<Tensor(Graph&)>& build, double tol = 1e-5) {
    auto loss = [&] {
      Graph g;
      return build(g).item();
    };
    auto analytic = [&] {
      Graph g;
      param.zero_grad();
      g.backward(build(g));
      return param.grad();
    };
    auto r = grad_check(param, loss, analytic);
    INFO(name);
    CHECK(r.max_rel_err < tol);
  };

  {
    Tensor a = Tensor::from_values({3, 3}, random_values(9, rng), true);
    Tensor b = Tensor::from_values({3, 3}, random_values(9, rng));
    auto c = random_values(9, rng);
    check_op("add", a, [&](Graph& g) { return weighted_sum(g, g.add(a, b), c); });
    check_op("sub", a, [&](Graph& g) { return weighted_sum(g, g.sub(b, a), c); });
    check_op("mul", a, [&](Graph& g) { return weighted_sum(g, g.mul(a, b), c); });
    check_op("mul_scalar", a, [&](Graph& g) { return weighted_sum(g, g.mul_scalar(a, -1.7), c); });
    check_op("add_scalar", a, [&](Graph& g) { return weighted_sum(g, g.add_scalar(a, 0.3), c); });
    check_op("mean", a, [&](Graph& g) { return g.mean(a); });
    check_op("reshape", a, [&](Graph& g) { return weighted_sum(g, g.reshape(a, {9}), c); });
  }
  {
    Tensor num = Tensor::from_values({6}, random_values(6, rng), true);
    Tensor den = Tensor::from_values({6}, random_values(6, rng, 0.5, 2.0), true);
    auto c = random_values(6, rng);
    check_op("divide/num", num, [&](Graph& g) { return weighted_sum(g, g.divide(num, den), c); });
    check_op("divide/den", den, [&](Graph& g) { return weighted_sum(g, g.divide(num, den), c); });
  }
  {
    Tensor x = Tensor::from_values({6}, random_values(6, rng, 0.2, 3.0), true);
    auto c = random_values(6, rng);
    check_op("log", x, [&](Graph& g) { return weighted_sum(g, g.log(x), c); });
    check_op("sqrt", x, [&](Graph& g) { return weighted_sum(g, g.sqrt(x), c); });
  }
  {
    Tensor z1 = Tensor::from_values({5}, random_values(5, rng, -2.0, 2.0), true);
    auto c1 = random_values(5, rng);
    check_op("softmax_t rank1", z1,
             [&](Graph& g) { return weighted_sum(g, g.softmax_t(z1, 5.0), c1); });
    Tensor z2 = Tensor::from_values({3, 4}, random_values(12, rng, -2.0, 2.0), true);
    auto c2 = random_values(12, rng);
    check_op("softmax_t rank2", z2,
             [&](Graph& g) { return weighted_sum(g, g.softmax_t(z2, 0.7), c2); });
    check_op("log_softmax_t", z2,
             [&](Graph& g) { return weighted_sum(g, g.log_softmax_t(z2, 5.0), c2); });
  }
  {
    Tensor x = Tensor::from_values({5}, random_values(5, rng, 0.1, 2.0), true);
    auto c = random_values(5, rng);
    check_op("xlogx", x, [&](Graph& g) { return weighted_sum(g, g.xlogx(x), c); });
  }
  {
    Tensor m = Tensor::from_values({4, 3}, random_values(12, rng), true);
    Tensor s = Tensor::from_values({4}, random_values(4, rng), true);
    Tensor b = Tensor::from_values({3}, random_values(3, rng), true);
    auto c = random_values(12, rng);
    auto c3 = random_values(3, rng);
    auto c4 = random_values(4, rng);
    check_op("row", m, [&](Graph& g) { return weighted_sum(g, g.row(m, 2), c3); });
    check_op("col", m, [&](Graph& g) { return weighted_sum(g, g.col(m, 1), c4); });
    check_op("scale_rows/m", m, [&](Graph& g) { return weighted_sum(g, g.scale_rows(m, s), c); });
    check_op("scale_rows/s", s, [&](Graph& g) { return weighted_sum(g, g.scale_rows(m, s), c); });
    check_op("bias_add/b", b, [&](Graph& g) { return weighted_sum(g, g.bias_add(m, b), c); });
    std::vector<int> labels = {2, 0, 1, 2};
    check_op("gather_classes", m,
             [&](Graph& g) { return weighted_sum(g, g.gather_classes(m, labels), c4); });
    Tensor v2 = Tensor::from_values({4}, random_values(4, rng), true);
    auto c8 = random_values(8, rng);
    check_op("concat_cols", v2, [&](Graph& g) {
      return weighted_sum(g, g.concat_cols({s, v2}), c8);
    });
  }
  {
    auto vals = random_values(2 * 2 * 3 * 3, rng);
    push_off_kinks(vals);  // keep argmax stable under the probe step
    Tensor x = Tensor::from_values({2, 2, 3, 3}, vals, true);
    auto c = random_values(4, rng);
    check_op("global_max_pool_batch", x,
             [&](Graph& g) { return weighted_sum(g, g.global_max_pool_batch(x), c); });
  }
  {
    Tensor x = Tensor::from_values({2, 2, 4, 4}, random_values(2 * 2 * 16, rng), true);
    Tensor w = Tensor::from_values({3, 2, 3, 3}, random_values(3 * 2 * 9, rng), true);
    Tensor b = Tensor::from_values({3}, random_values(3, rng), true);
    auto c = random_values(2 * 3 * 16, rng);
    check_op("conv2d/x", x, [&](Graph& g) { return weighted_sum(g, g.conv2d(x, w, b), c); });
    check_op("conv2d/w", w, [&](Graph& g) { return weighted_sum(g, g.conv2d(x, w, b), c); });
    check_op("conv2d/b", b, [&](Graph& g) { return weighted_sum(g, g.conv2d(x, w, b), c); });
  }
}

TEST_CASE("forward ops keep finite inputs finite") {
  Rng rng(109);
  Graph g;
  Tensor a = Tensor::from_values({4, 4}, random_values(16, rng, -100.0, 100.0));
  Tensor b = Tensor::from_values({4, 4}, random_values(16, rng, -100.0, 100.0));
  for (const Tensor& t :
       {g.matmul(a, b), g.add(a, b), g.sub(a, b), g.mul(a, b), g.relu(a), g.softmax_t(a, 5.0)})
    CHECK(all_finite(t.data(), t.numel()));
}

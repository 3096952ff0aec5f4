#include <cmath>
#include <sstream>

#include <doctest.h>

#include "akd/adapter.hpp"
#include "test_support.hpp"

using namespace akd;
using namespace akd::adapter;
using akd::testing::random_values;

namespace {
Tensor soft_rows(int64_t batch, int64_t k, Rng& rng) {
  Graph g;
  return g.softmax_t(Tensor::from_values({batch, k}, random_values(batch * k, rng, -2.0, 2.0)),
                     1.0);
}
}  // namespace

TEST_CASE("instance_repr pools images and passes flat features through") {
  Graph g;
  Tensor fm = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 0});
  CHECK(instance_repr(g, fm).values() == std::vector<double>{3});

  Rng rng(301);
  Tensor batch = Tensor::from_values({3, 2, 2, 2}, random_values(24, rng));
  Tensor pooled = instance_repr(g, batch);
  CHECK(pooled.dims() == Shape{3, 2});
  // Per-example loop through the single-image op gives the same values.
  for (int64_t i = 0; i < 3; ++i) {
    std::vector<double> one(batch.data() + i * 8, batch.data() + (i + 1) * 8);
    Tensor single = g.global_max_pool(Tensor::from_values({2, 2, 2}, one));
    for (int64_t c = 0; c < 2; ++c) CHECK(pooled.data()[i * 2 + c] == single.data()[c]);
  }

  Tensor flat = Tensor::from_values({2, 5}, random_values(10, rng));
  CHECK(instance_repr(g, flat).values() == flat.values());

  CHECK_THROWS_AS(instance_repr(g, Tensor::zeros({2, 2, 2})), ShapeError);
}

TEST_CASE("teacher_scores matches the triple loop and validates dims") {
  Rng rng(302);
  int64_t batch = 4, c = 6, m = 3;
  AdapterParams params = init_adapter(m, c, 11);
  for (Tensor& theta : params.thetas)
    for (double& v : theta.values()) v = rng.uniform(-1.0, 1.0);
  for (double& v : params.nu.values()) v = rng.uniform(-1.0, 1.0);
  Tensor delta = Tensor::from_values({batch, c}, random_values(batch * c, rng));

  Graph g;
  Tensor scores = teacher_scores(g, params, delta);
  CHECK(scores.dims() == Shape{batch, m});
  for (int64_t i = 0; i < batch; ++i) {
    for (int64_t t = 0; t < m; ++t) {
      double want = 0.0;
      for (int64_t j = 0; j < c; ++j)
        want += params.nu.data()[j] * params.thetas[static_cast<size_t>(t)].data()[j] *
                delta.data()[i * c + j];
      CHECK(std::abs(scores.data()[i * m + t] - want) < 1e-12);
    }
  }

  AdapterParams zero_nu = init_adapter(m, c, 12);
  for (double& v : zero_nu.nu.values()) v = 0.0;
  Tensor z = teacher_scores(g, zero_nu, delta);
  for (double v : z.values()) CHECK(v == 0.0);

  AdapterParams twin = init_adapter(2, c, 13, /*identical_theta=*/true);
  Tensor twin_scores = teacher_scores(g, twin, delta);
  for (int64_t i = 0; i < batch; ++i)
    CHECK(twin_scores.data()[i * 2] == twin_scores.data()[i * 2 + 1]);

  CHECK_THROWS_AS(teacher_scores(g, params, Tensor::zeros({batch, c + 1})), ShapeError);
}

TEST_CASE("teacher_weights: single teacher, symmetry, closed form, shift invariance") {
  Graph g;
  Tensor one_w = teacher_weights(g, Tensor::from_values({3, 1}, {0.3, -2.0, 5.0}));
  for (double v : one_w.values()) CHECK(v == 1.0);

  Tensor equal_w = teacher_weights(g, Tensor::full({2, 4}, 1.7));
  for (double v : equal_w.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));

  Tensor row = Tensor::from_values({1, 2}, {std::log(3.0), 0.0});
  Tensor w = teacher_weights(g, row);
  CHECK(w.data()[0] == doctest::Approx(0.75).epsilon(1e-13));
  CHECK(w.data()[1] == doctest::Approx(0.25).epsilon(1e-13));

  Rng rng(303);
  for (int trial = 0; trial < 30; ++trial) {
    auto base = random_values(6, rng, -3.0, 3.0);
    auto shifted = base;
    double shift = rng.uniform(-5.0, 5.0);
    for (int j = 0; j < 3; ++j) shifted[static_cast<size_t>(j)] += shift;  // first row only
    Tensor wa = teacher_weights(g, Tensor::from_values({2, 3}, base));
    Tensor wb = teacher_weights(g, Tensor::from_values({2, 3}, shifted));
    for (int j = 0; j < 3; ++j)
      CHECK(wa.data()[j] == doctest::Approx(wb.data()[j]).epsilon(1e-12));
  }
}

TEST_CASE("integrate_soft_targets: averaging, selection, oracle, invariants") {
  Rng rng(304);
  int64_t batch = 5, k = 4, m = 3;
  std::vector<Tensor> soft;
  for (int64_t t = 0; t < m; ++t) soft.push_back(soft_rows(batch, k, rng));

  Graph g;
  Tensor uniform = Tensor::full({batch, m}, 1.0 / 3.0);
  Tensor avg = integrate_soft_targets(g, uniform, soft);
  for (int64_t i = 0; i < batch; ++i)
    for (int64_t j = 0; j < k; ++j) {
      double want = (soft[0].data()[i * k + j] + soft[1].data()[i * k + j] +
                     soft[2].data()[i * k + j]) / 3.0;
      CHECK(std::abs(avg.data()[i * k + j] - want) < 1e-12);
    }

  std::vector<double> onehot(static_cast<size_t>(batch * m), 0.0);
  for (int64_t i = 0; i < batch; ++i) onehot[static_cast<size_t>(i * m + 1)] = 1.0;
  Tensor sel = integrate_soft_targets(g, Tensor::from_values({batch, m}, onehot), soft);
  CHECK(sel.values() == soft[1].values());

  // Random convex weights against the scalar loop.
  std::vector<double> wv(static_cast<size_t>(batch * m));
  for (int64_t i = 0; i < batch; ++i) {
    double sum = 0.0;
    for (int64_t t = 0; t < m; ++t) {
      wv[static_cast<size_t>(i * m + t)] = rng.uniform(0.05, 1.0);
      sum += wv[static_cast<size_t>(i * m + t)];
    }
    for (int64_t t = 0; t < m; ++t) wv[static_cast<size_t>(i * m + t)] /= sum;
  }
  Tensor weights = Tensor::from_values({batch, m}, wv);
  Tensor mixed = integrate_soft_targets(g, weights, soft);
  for (int64_t i = 0; i < batch; ++i) {
    double row_sum = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      double want = 0.0;
      for (int64_t t = 0; t < m; ++t)
        want += wv[static_cast<size_t>(i * m + t)] * soft[static_cast<size_t>(t)].data()[i * k + j];
      CHECK(std::abs(mixed.data()[i * k + j] - want) < 1e-12);
      CHECK(mixed.data()[i * k + j] >= 0.0);
      row_sum += mixed.data()[i * k + j];
    }
    CHECK(std::abs(row_sum - 1.0) < 1e-9);
  }

  // Permuting teachers permutes weight columns, fusion unchanged.
  std::vector<Tensor> permuted = {soft[2], soft[0], soft[1]};
  std::vector<double> pwv(static_cast<size_t>(batch * m));
  for (int64_t i = 0; i < batch; ++i) {
    pwv[static_cast<size_t>(i * m + 0)] = wv[static_cast<size_t>(i * m + 2)];
    pwv[static_cast<size_t>(i * m + 1)] = wv[static_cast<size_t>(i * m + 0)];
    pwv[static_cast<size_t>(i * m + 2)] = wv[static_cast<size_t>(i * m + 1)];
  }
  Tensor mixed_p = integrate_soft_targets(g, Tensor::from_values({batch, m}, pwv), permuted);
  for (int64_t i = 0; i < batch * k; ++i)
    CHECK(std::abs(mixed.data()[i] - mixed_p.data()[i]) < 1e-12);

  // Identical targets are a fixed point of any weighting.
  std::vector<Tensor> same = {soft[0], soft[0], soft[0]};
  Tensor fused_same = integrate_soft_targets(g, weights, same);
  for (int64_t i = 0; i < batch * k; ++i)
    CHECK(std::abs(fused_same.data()[i] - soft[0].data()[i]) < 1e-12);

  Tensor bad = Tensor::full({batch, m}, 0.4);
  CHECK_THROWS_AS(integrate_soft_targets(g, bad, soft), DataError);
}

TEST_CASE("fusion with identical thetas equals uniform averaging per instance") {
  Rng rng(305);
  int64_t batch = 6, c = 5, m = 4, k = 3;
  AdapterParams params = init_adapter(m, c, 21, /*identical_theta=*/true);
  Tensor delta = Tensor::from_values({batch, c}, random_values(batch * c, rng));
  std::vector<Tensor> soft;
  for (int64_t t = 0; t < m; ++t) soft.push_back(soft_rows(batch, k, rng));

  Graph g;
  Tensor w = teacher_weights(g, teacher_scores(g, params, delta));
  Tensor amtml = integrate_soft_targets(g, w, soft);
  Tensor avg = integrate_soft_targets(g, Tensor::full({batch, m}, 1.0 / static_cast<double>(m)), soft);
  for (int64_t i = 0; i < batch * k; ++i)
    CHECK(std::abs(amtml.data()[i] - avg.data()[i]) < 1e-15);
}

TEST_CASE("init_adapter starts near-uniform and validates arguments") {
  AdapterParams p = init_adapter(3, 8, 31);
  CHECK(p.thetas.size() == 3);
  CHECK(p.nu.values() == std::vector<double>(8, 1.0));
  for (const Tensor& t : p.thetas) CHECK(t.requires_grad());
  CHECK_THROWS_AS(init_adapter(0, 4, 1), ParamError);
  CHECK_THROWS_AS(init_adapter(2, 0, 1), ParamError);
}

TEST_CASE("inspect_weights emits uniform rows for equal factors and a sane CSV") {
  data::Dataset ds = data::gen_blobs(3, 10, 6, 5.0, 0.3, 71);
  nn::Model student = nn::build_model("dense:6:8,relu,dense:8:3", {6}, 3, 72);
  adapter::TeacherBundle teachers;
  for (int t = 0; t < 2; ++t) {
    nn::Model teacher = nn::build_model("dense:6:10,relu,dense:10:3", {6}, 3, 80 + t);
    nn::set_trainable(teacher, false);
    teachers.models.push_back(std::move(teacher));
    teachers.val_accuracy.push_back(0.5);
  }
  AdapterParams params = init_adapter(2, 8, 73, /*identical_theta=*/true);

  WeightTable table = inspect_weights(params, student, teachers, ds, 7);
  REQUIRE(table.rows.size() == 30);
  for (size_t i = 0; i < table.rows.size(); ++i) {
    CHECK(table.rows[i].example_id == static_cast<int64_t>(i));
    double sum = 0.0;
    for (double w : table.rows[i].weights) {
      CHECK(w == doctest::Approx(0.5).epsilon(1e-9));
      sum += w;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }

  std::ostringstream os;
  write_weight_csv(os, table);
  std::string csv = os.str();
  CHECK(csv.substr(0, csv.find('\n')) == "example_id,label,w_1,w_2");
  CHECK(csv.find("0.500000") != std::string::npos);

  AdapterParams wrong_d = init_adapter(2, 9, 74);
  CHECK_THROWS_AS(inspect_weights(wrong_d, student, teachers, ds), StateError);
  AdapterParams wrong_m = init_adapter(3, 8, 75);
  CHECK_THROWS_AS(inspect_weights(wrong_m, student, teachers, ds), StateError);
}

#include "akd/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "akd/rng.hpp"

namespace akd::adapter {

std::vector<Tensor> AdapterParams::param_tensors() const {
  std::vector<Tensor> out = thetas;
  out.push_back(nu);
  return out;
}

AdapterParams init_adapter(int64_t num_teachers, int64_t d, uint64_t seed, bool identical_theta) {
  if (num_teachers < 1) throw ParamError("init_adapter: need at least one teacher");
  if (d < 1) throw ParamError("init_adapter: feature dimension must be positive");
  AdapterParams params;
  params.d = d;
  Rng rng(seed);
  std::vector<double> shared;
  for (int64_t t = 0; t < num_teachers; ++t) {
    std::vector<double> v(static_cast<size_t>(d));
    if (identical_theta && t > 0) {
      v = shared;
    } else {
      for (double& x : v) x = rng.normal(0.0, 0.1);
      if (identical_theta) shared = v;
    }
    params.thetas.push_back(Tensor::from_values({d}, std::move(v), true));
  }
  params.nu = Tensor::full({d}, 1.0, true);
  return params;
}

Tensor instance_repr(Graph& g, const Tensor& student_feature_map) {
  if (student_feature_map.rank() == 4) return g.global_max_pool_batch(student_feature_map);
  if (student_feature_map.rank() == 2) return student_feature_map;
  throw ShapeError("instance_repr: expected [B,C,H,W] or [B,C], got " +
                   shape_str(student_feature_map.dims()));
}

Tensor teacher_scores(Graph& g, const AdapterParams& params, const Tensor& delta) {
  if (delta.rank() != 2)
    throw ShapeError("teacher_scores: delta must be [B,C], got " + shape_str(delta.dims()));
  if (delta.dims()[1] != params.d)
    throw ShapeError("teacher_scores: feature dim " + std::to_string(delta.dims()[1]) +
                     " does not match adapter d=" + std::to_string(params.d));
  std::vector<Tensor> cols;
  cols.reserve(params.thetas.size());
  for (const Tensor& theta : params.thetas) {
    Tensor weighted = g.mul(theta, params.nu);  // theta ⊙ nu, [C]
    Tensor score = g.matmul(delta, g.reshape(weighted, {params.d, 1}));
    cols.push_back(g.reshape(score, {delta.dims()[0]}));
  }
  return g.concat_cols(cols);
}

Tensor teacher_weights(Graph& g, const Tensor& scores) { return g.softmax_t(scores, 1.0); }

Tensor integrate_soft_targets(Graph& g, const Tensor& weights,
                              const std::vector<Tensor>& teacher_soft) {
  if (weights.rank() != 2)
    throw ShapeError("integrate_soft_targets: weights must be [B,m], got " +
                     shape_str(weights.dims()));
  int64_t batch = weights.dims()[0], m = weights.dims()[1];
  if (static_cast<int64_t>(teacher_soft.size()) != m)
    throw ShapeError("integrate_soft_targets: " + std::to_string(teacher_soft.size()) +
                     " teacher targets for m=" + std::to_string(m));
  for (int64_t i = 0; i < batch; ++i) {
    double sum = 0.0;
    for (int64_t t = 0; t < m; ++t) sum += weights.data()[i * m + t];
    if (std::abs(sum - 1.0) > 1e-6)
      throw DataError("integrate_soft_targets: weight row " + std::to_string(i) + " sums to " +
                      std::to_string(sum));
  }
  Tensor acc;
  for (int64_t t = 0; t < m; ++t) {
    const Tensor& soft = teacher_soft[static_cast<size_t>(t)];
    if (soft.rank() != 2 || soft.dims()[0] != batch)
      throw ShapeError("integrate_soft_targets: teacher " + std::to_string(t) + " targets " +
                       shape_str(soft.dims()) + " do not match batch " + std::to_string(batch));
    Tensor term = g.scale_rows(soft, g.col(weights, t));
    acc = acc.defined() ? g.add(acc, term) : term;
  }
  return acc;
}

WeightTable inspect_weights(const AdapterParams& params, const nn::Model& student,
                            const TeacherBundle& teachers, const data::Dataset& dataset,
                            int64_t batch_size) {
  if (static_cast<int64_t>(params.thetas.size()) != teachers.size())
    throw StateError("inspect_weights: adapter has " + std::to_string(params.thetas.size()) +
                     " teacher factors, bundle has " + std::to_string(teachers.size()));
  auto shapes = nn::layer_output_shapes(student);
  const Shape& feat = shapes[static_cast<size_t>(student.feature_layer)];
  int64_t c = feat[0];
  if (c != params.d)
    throw StateError("inspect_weights: student feature channels " + std::to_string(c) +
                     " do not match adapter d=" + std::to_string(params.d));

  WeightTable table;
  table.num_teachers = teachers.size();
  for (int64_t start = 0; start < dataset.n; start += batch_size) {
    int64_t end = std::min(dataset.n, start + batch_size);
    std::vector<int64_t> idx;
    for (int64_t i = start; i < end; ++i) idx.push_back(i);
    Tensor batch = data::batch_features(dataset, idx);
    Graph g;
    nn::ForwardTrace trace = nn::infer(student, batch);
    Tensor delta = instance_repr(g, trace.feature_map);
    Tensor weights = teacher_weights(g, teacher_scores(g, params, delta));
    int64_t m = weights.dims()[1];
    for (int64_t r = 0; r < end - start; ++r) {
      WeightRow row;
      row.example_id = start + r;
      row.label = static_cast<int>(dataset.labels[static_cast<size_t>(start + r)]);
      for (int64_t t = 0; t < m; ++t) row.weights.push_back(weights.data()[r * m + t]);
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

void write_weight_csv(std::ostream& os, const WeightTable& table) {
  os << "example_id,label";
  for (int64_t t = 1; t <= table.num_teachers; ++t) os << ",w_" << t;
  os << "\n";
  char buf[32];
  for (const WeightRow& row : table.rows) {
    os << row.example_id << ',' << row.label;
    for (double w : row.weights) {
      std::snprintf(buf, sizeof buf, ",%.6f", w);
      os << buf;
    }
    os << "\n";
  }
}

std::vector<std::vector<double>> summarize_by_class(const WeightTable& table,
                                                    const data::Dataset& dataset) {
  std::vector<std::vector<double>> sums(static_cast<size_t>(dataset.num_classes),
                                        std::vector<double>(static_cast<size_t>(table.num_teachers), 0.0));
  std::vector<int64_t> counts(static_cast<size_t>(dataset.num_classes), 0);
  for (const WeightRow& row : table.rows) {
    ++counts[static_cast<size_t>(row.label)];
    for (size_t t = 0; t < row.weights.size(); ++t)
      sums[static_cast<size_t>(row.label)][t] += row.weights[t];
  }
  for (int64_t k = 0; k < dataset.num_classes; ++k)
    if (counts[static_cast<size_t>(k)])
      for (double& v : sums[static_cast<size_t>(k)]) v /= static_cast<double>(counts[static_cast<size_t>(k)]);
  return sums;
}

}  // namespace akd::adapter

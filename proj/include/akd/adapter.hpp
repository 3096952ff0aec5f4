#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "akd/data.hpp"
#include "akd/nn.hpp"
#include "akd/tensor.hpp"

namespace akd::adapter {

/// Learned teacher-importance machinery: one latent factor per teacher plus
/// a global vector, both of dimension d = student feature channel count.
struct AdapterParams {
  std::vector<Tensor> thetas;
  Tensor nu;
  int64_t d = 0;

  std::vector<Tensor> param_tensors() const;
};

/// Frozen teachers with their held-out accuracies (used by the mapping
/// strategies). Per-batch soft targets and feature maps are produced on
/// demand by trainer::teacher_batch.
struct TeacherBundle {
  std::vector<nn::Model> models;
  std::vector<double> val_accuracy;

  int64_t size() const { return static_cast<int64_t>(models.size()); }
};

/// theta_t ~ N(0, 0.1) i.i.d. (or one shared draw when identical_theta),
/// nu = ones: initial weights start near uniform while delta can still break
/// the symmetry.
AdapterParams init_adapter(int64_t num_teachers, int64_t d, uint64_t seed,
                           bool identical_theta = false);

/// Instance representation delta: per-example global max-pool of a
/// [B,C,H,W] feature map; [B,C] inputs pass through unchanged.
Tensor instance_repr(Graph& g, const Tensor& student_feature_map);

/// score[i][t] = sum_c nu_c * theta_{t,c} * delta_{i,c} -> [B, m].
Tensor teacher_scores(Graph& g, const AdapterParams& params, const Tensor& delta);

/// Row-wise softmax of the scores -> per-instance weights summing to 1.
Tensor teacher_weights(Graph& g, const Tensor& scores);

/// Integrated soft-targets: out_i = sum_t w[i,t] * teacher_soft[t][i,:].
Tensor integrate_soft_targets(Graph& g, const Tensor& weights,
                              const std::vector<Tensor>& teacher_soft);

struct WeightRow {
  int64_t example_id;
  int label;
  std::vector<double> weights;
};

struct WeightTable {
  std::vector<WeightRow> rows;
  int64_t num_teachers = 0;
};

/// Per-example weight dump over the dataset, in dataset order.
WeightTable inspect_weights(const AdapterParams& params, const nn::Model& student,
                            const TeacherBundle& teachers, const data::Dataset& dataset,
                            int64_t batch_size = 128);

/// CSV: header example_id,label,w_1,...,w_m; floats with 6 decimals.
void write_weight_csv(std::ostream& os, const WeightTable& table);

/// Mean weight of each teacher on each class.
std::vector<std::vector<double>> summarize_by_class(const WeightTable& table,
                                                    const data::Dataset& dataset);

}  // namespace akd::adapter

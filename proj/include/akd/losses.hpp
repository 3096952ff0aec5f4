#pragma once

#include <array>
#include <optional>
#include <vector>

#include "akd/nn.hpp"
#include "akd/tensor.hpp"

namespace akd::losses {

/// The assembled objective. total = ce + lambda*kd_kl + alpha*angle +
/// beta*hint, composed on the graph so the identity holds exactly.
struct LossTerms {
  Tensor ce;
  Tensor kd_kl;
  Tensor angle;
  Tensor hint;
  Tensor total;
  double lambda = 0.7;
  double alpha = 1.0;
  double beta = 2.0;
};

/// Mean over the batch of -log softmax(logits)[label], at temperature 1.
Tensor cross_entropy(Graph& g, const Tensor& logits, const std::vector<int>& labels);

/// Mean over the batch of D_KL(target || softmax_t(student_logits, T)),
/// scaled by T^2 unless scale_t2 is false (strict-paper mode). Target rows
/// must be distributions (sum 1 within 1e-6, strictly positive); the target
/// side stays on the graph so learnable targets receive gradient.
Tensor kd_kl(Graph& g, const Tensor& target_probs, const Tensor& student_logits, double temperature,
             bool scale_t2 = true);

/// cos of the angle at b formed by a and c (Eq. of normalized difference
/// inner products). Returns nullopt when either difference norm is <= eps;
/// callers skip such triplets.
std::optional<Tensor> angle_metric(Graph& g, const Tensor& a, const Tensor& b, const Tensor& c,
                                   double eps = 1e-8);

/// Huber penalty between two scalars: quadratic within |x-y| <= 1, linear
/// outside, continuous at the knot.
Tensor huber(Graph& g, const Tensor& x, const Tensor& y);

/// Mean Huber distance between teacher-side and student-side triplet angles
/// over the given ordered triplets. Degenerate triplets (on either side) are
/// skipped; returns 0 when none survive.
Tensor angle_loss(Graph& g, const Tensor& teacher_targets, const Tensor& student_soft,
                  const std::vector<std::array<int64_t, 3>>& triplets);

/// Multi-group hint regression: sum over teachers t of
/// ||u_t - F_t(v_{mapping[t]})||^2, averaged over the batch. Teacher
/// features enter as constants; regressors are single dense layers mapping
/// flattened group outputs to flattened teacher features.
Tensor hint_loss(Graph& g, const std::vector<Tensor>& teacher_features,
                 const std::vector<Tensor>& student_group_outputs,
                 const std::vector<nn::Model>& regressors, const std::vector<int64_t>& mapping);

/// Combines the four components; throws NumericError naming any non-finite
/// component.
LossTerms total_loss(Graph& g, const Tensor& ce, const Tensor& kd, const Tensor& angle,
                     const Tensor& hint, double lambda, double alpha, double beta);

}  // namespace akd::losses

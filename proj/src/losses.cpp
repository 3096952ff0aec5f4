#include "akd/losses.hpp"

#include <cmath>
#include <unordered_set>

namespace akd::losses {

Tensor cross_entropy(Graph& g, const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw ShapeError("cross_entropy: logits must be [batch,K], got " + shape_str(logits.dims()));
  Tensor log_probs = g.log_softmax_t(logits, 1.0);
  Tensor picked = g.gather_classes(log_probs, labels);
  return g.mul_scalar(g.mean(picked), -1.0);
}

Tensor kd_kl(Graph& g, const Tensor& target_probs, const Tensor& student_logits, double temperature,
             bool scale_t2) {
  if (target_probs.rank() != 2 || target_probs.dims() != student_logits.dims())
    throw ShapeError("kd_kl: target " + shape_str(target_probs.dims()) + " vs student " +
                     shape_str(student_logits.dims()));
  int64_t batch = target_probs.dims()[0], k = target_probs.dims()[1];
  for (int64_t i = 0; i < batch; ++i) {
    double sum = 0.0;
    for (int64_t j = 0; j < k; ++j) sum += target_probs.data()[i * k + j];
    if (std::abs(sum - 1.0) > 1e-6)
      throw DataError("kd_kl: target row " + std::to_string(i) + " sums to " +
                      std::to_string(sum));
  }
  // sum p ln p - p ln q, averaged over the batch; the entropy side uses
  // the 0 ln 0 = 0 convention and the cross side a stable log-softmax.
  Tensor entropy = g.xlogx(target_probs);
  Tensor cross = g.mul(target_probs, g.log_softmax_t(student_logits, temperature));
  Tensor diff = g.sub(entropy, cross);
  double scale = (scale_t2 ? temperature * temperature : 1.0) / static_cast<double>(batch);
  return g.mul_scalar(g.sum(diff), scale);
}

std::optional<Tensor> angle_metric(Graph& g, const Tensor& a, const Tensor& b, const Tensor& c,
                                   double eps) {
  if (a.dims() != b.dims() || b.dims() != c.dims() || a.rank() != 1)
    throw ShapeError("angle_metric: points must be equal-length vectors");
  Tensor d_ab = g.sub(a, b);
  Tensor d_cb = g.sub(c, b);
  Tensor n_ab = g.sqrt(g.sum(g.mul(d_ab, d_ab)));
  Tensor n_cb = g.sqrt(g.sum(g.mul(d_cb, d_cb)));
  if (n_ab.item() <= eps || n_cb.item() <= eps) return std::nullopt;
  Tensor dot = g.sum(g.mul(d_ab, d_cb));
  return g.divide(dot, g.mul(n_ab, n_cb));
}

Tensor huber(Graph& g, const Tensor& x, const Tensor& y) {
  Tensor d = g.sub(x, y);
  double v = d.item();
  if (std::abs(v) <= 1.0) return g.mul_scalar(g.mul(d, d), 0.5);
  if (v > 0.0) return g.add_scalar(d, -0.5);
  return g.add_scalar(g.mul_scalar(d, -1.0), -0.5);
}

Tensor angle_loss(Graph& g, const Tensor& teacher_targets, const Tensor& student_soft,
                  const std::vector<std::array<int64_t, 3>>& triplets) {
  if (teacher_targets.rank() != 2 || teacher_targets.dims() != student_soft.dims())
    throw ShapeError("angle_loss: teacher " + shape_str(teacher_targets.dims()) + " vs student " +
                     shape_str(student_soft.dims()));
  int64_t batch = teacher_targets.dims()[0];
  Tensor acc;
  int64_t valid = 0;
  for (const auto& [i, j, k] : triplets) {
    if (i < 0 || i >= batch || j < 0 || j >= batch || k < 0 || k >= batch || i == j || j == k ||
        i == k)
      throw ShapeError("angle_loss: invalid triplet (" + std::to_string(i) + "," +
                       std::to_string(j) + "," + std::to_string(k) + ") for batch " +
                       std::to_string(batch));
    auto t_cos = angle_metric(g, g.row(teacher_targets, i), g.row(teacher_targets, j),
                              g.row(teacher_targets, k));
    if (!t_cos) continue;
    auto s_cos =
        angle_metric(g, g.row(student_soft, i), g.row(student_soft, j), g.row(student_soft, k));
    if (!s_cos) continue;
    Tensor term = huber(g, *t_cos, *s_cos);
    acc = acc.defined() ? g.add(acc, term) : term;
    ++valid;
  }
  if (!valid) return Tensor::scalar(0.0);
  return g.mul_scalar(acc, 1.0 / static_cast<double>(valid));
}

Tensor hint_loss(Graph& g, const std::vector<Tensor>& teacher_features,
                 const std::vector<Tensor>& student_group_outputs,
                 const std::vector<nn::Model>& regressors, const std::vector<int64_t>& mapping) {
  size_t m = teacher_features.size();
  if (m == 0) return Tensor::scalar(0.0);
  if (regressors.size() != m || mapping.size() != m)
    throw ShapeError("hint_loss: " + std::to_string(m) + " teachers, " +
                     std::to_string(regressors.size()) + " regressors, " +
                     std::to_string(mapping.size()) + " mappings");
  std::unordered_set<int64_t> seen;
  for (int64_t gi : mapping) {
    if (gi < 0 || gi >= static_cast<int64_t>(student_group_outputs.size()) || !seen.insert(gi).second)
      throw ShapeError("hint_loss: mapping is not one-to-one into group outputs");
  }
  Tensor acc;
  int64_t batch = 0;
  for (size_t t = 0; t < m; ++t) {
    Tensor v = student_group_outputs[static_cast<size_t>(mapping[t])];
    batch = v.dims()[0];
    if (v.rank() > 2) v = g.reshape(v, {batch, v.numel() / batch});
    Tensor u = teacher_features[t];
    if (u.rank() > 2) u = g.reshape(u, {u.dims()[0], u.numel() / u.dims()[0]});
    Tensor pred = nn::forward(regressors[t], g, v).logits;
    if (pred.dims() != u.dims())
      throw ShapeError("hint_loss: teacher " + std::to_string(t) + " regressed shape " +
                       shape_str(pred.dims()) + " does not match feature " + shape_str(u.dims()));
    Tensor d = g.sub(u, pred);
    Tensor term = g.sum(g.mul(d, d));
    acc = acc.defined() ? g.add(acc, term) : term;
  }
  return g.mul_scalar(acc, 1.0 / static_cast<double>(batch));
}

LossTerms total_loss(Graph& g, const Tensor& ce, const Tensor& kd, const Tensor& angle,
                     const Tensor& hint, double lambda, double alpha, double beta) {
  auto check = [](const Tensor& t, const char* name) {
    if (!std::isfinite(t.item()))
      throw NumericError(std::string("total_loss: component ") + name + " is " +
                         std::to_string(t.item()));
  };
  check(ce, "ce");
  check(kd, "kd_kl");
  check(angle, "angle");
  check(hint, "hint");
  LossTerms terms;
  terms.ce = ce;
  terms.kd_kl = kd;
  terms.angle = angle;
  terms.hint = hint;
  terms.lambda = lambda;
  terms.alpha = alpha;
  terms.beta = beta;
  Tensor total = g.add(ce, g.mul_scalar(kd, lambda));
  total = g.add(total, g.mul_scalar(angle, alpha));
  total = g.add(total, g.mul_scalar(hint, beta));
  terms.total = total;
  return terms;
}

}  // namespace akd::losses

#include "akd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include "akd/checkpoint.hpp"
#include "akd/rng.hpp"

namespace akd::trainer {

namespace {

// Independent RNG stream salts; method-specific draws must not shift the
// streams shared across methods, or paired-run oracles break.
enum Salt : uint64_t {
  kStudentInit = 1,
  kAdapterInit = 2,
  kRegressorInit = 16,  // + teacher index
  kShuffle = 100,
  kTriplets = 101,
  kRandomMapping = 102,
  kValSplit = 200,
  kTeacherInit = 201,
  kTeacherShuffle = 202,
  kExpertNoise = 300,  // + teacher index
  kExpertTrain = 400,  // + teacher index
};

data::Dataset subset_dataset(const data::Dataset& ds, const std::vector<int64_t>& idx) {
  data::Dataset out;
  out.num_classes = ds.num_classes;
  out.example_shape = ds.example_shape;
  int64_t esize = ds.example_size();
  for (int64_t i : idx) {
    out.features.insert(out.features.end(), ds.features.begin() + i * esize,
                        ds.features.begin() + (i + 1) * esize);
    out.labels.push_back(ds.labels[static_cast<size_t>(i)]);
    ++out.n;
  }
  return out;
}

struct TeacherOutputs {
  std::vector<Tensor> soft;      // per teacher, [B,K] at temperature T
  std::vector<Tensor> features;  // per teacher, feature-layer output
};

TeacherOutputs teacher_outputs_for_batch(const adapter::TeacherBundle& teachers,
                                         const Tensor& batch, double temperature) {
  TeacherOutputs out;
  Graph scratch;
  for (const nn::Model& teacher : teachers.models) {
    nn::ForwardTrace trace = nn::infer(teacher, batch);
    out.soft.push_back(scratch.softmax_t(trace.logits, temperature));
    out.features.push_back(trace.feature_map);
  }
  return out;
}

/// Whole-dataset teacher outputs, gathered per batch when caching is on.
struct TeacherCache {
  std::vector<std::vector<double>> soft;      // per teacher, N*K
  std::vector<std::vector<double>> features;  // per teacher, N*feat
  std::vector<Shape> feature_shape;           // per teacher, per-example
  int64_t k = 0;

  TeacherOutputs gather(const std::vector<int64_t>& idx) const {
    TeacherOutputs out;
    int64_t b = static_cast<int64_t>(idx.size());
    for (size_t t = 0; t < soft.size(); ++t) {
      std::vector<double> s(static_cast<size_t>(b * k));
      for (int64_t r = 0; r < b; ++r)
        std::copy_n(soft[t].begin() + idx[static_cast<size_t>(r)] * k, k, s.begin() + r * k);
      out.soft.push_back(Tensor::from_values({b, k}, std::move(s)));
      int64_t fsize = shape_numel(feature_shape[t]);
      std::vector<double> f(static_cast<size_t>(b * fsize));
      for (int64_t r = 0; r < b; ++r)
        std::copy_n(features[t].begin() + idx[static_cast<size_t>(r)] * fsize, fsize,
                    f.begin() + r * fsize);
      Shape dims = feature_shape[t];
      dims.insert(dims.begin(), b);
      out.features.push_back(Tensor::from_values(std::move(dims), std::move(f)));
    }
    return out;
  }
};

TeacherCache build_teacher_cache(const adapter::TeacherBundle& teachers,
                                 const data::Dataset& train, double temperature) {
  TeacherCache cache;
  cache.k = train.num_classes;
  cache.soft.resize(teachers.models.size());
  cache.features.resize(teachers.models.size());
  cache.feature_shape.resize(teachers.models.size());
  constexpr int64_t kChunk = 256;
  for (int64_t start = 0; start < train.n; start += kChunk) {
    std::vector<int64_t> idx;
    for (int64_t i = start; i < std::min(train.n, start + kChunk); ++i) idx.push_back(i);
    Tensor batch = data::batch_features(train, idx);
    TeacherOutputs outs = teacher_outputs_for_batch(teachers, batch, temperature);
    for (size_t t = 0; t < teachers.models.size(); ++t) {
      const auto& s = outs.soft[t].values();
      cache.soft[t].insert(cache.soft[t].end(), s.begin(), s.end());
      const auto& f = outs.features[t].values();
      cache.features[t].insert(cache.features[t].end(), f.begin(), f.end());
      if (cache.feature_shape[t].empty()) {
        Shape dims = outs.features[t].dims();
        cache.feature_shape[t].assign(dims.begin() + 1, dims.end());
      }
    }
  }
  return cache;
}

int64_t flat_size(const Shape& per_example) { return shape_numel(per_example); }

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "indep") return Method::indep;
  if (name == "okd") return Method::okd;
  if (name == "fitnet") return Method::fitnet;
  if (name == "avgmkd") return Method::avgmkd;
  if (name == "amtml") return Method::amtml;
  throw ConfigError("unknown method '" + name + "'");
}

MappingStrategy parse_mapping(const std::string& name) {
  if (name == "best_to_high") return MappingStrategy::best_to_high;
  if (name == "best_to_low") return MappingStrategy::best_to_low;
  if (name == "random") return MappingStrategy::random;
  throw ConfigError("unknown mapping strategy '" + name + "'");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::indep: return "indep";
    case Method::okd: return "okd";
    case Method::fitnet: return "fitnet";
    case Method::avgmkd: return "avgmkd";
    case Method::amtml: return "amtml";
  }
  return "?";
}

const char* mapping_name(MappingStrategy s) {
  switch (s) {
    case MappingStrategy::best_to_high: return "best_to_high";
    case MappingStrategy::best_to_low: return "best_to_low";
    case MappingStrategy::random: return "random";
  }
  return "?";
}

void DistillConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (alpha != 0.0 && batch_size < 3)
    throw ConfigError("angle loss needs batch size >= 3 (triplets of distinct examples)");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (triplet_budget < 0) throw ConfigError("triplet budget must be >= 0");
}

void write_report(std::ostream& os, const RunReport& report) {
  os << "epoch,ce,kd_kl,angle,hint,total,train_acc,test_acc\n";
  char buf[256];
  for (const EpochRecord& r : report.epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.6f,%.6f\n", r.epoch, r.ce,
                  r.kd_kl, r.angle, r.hint, r.total, r.train_acc, r.test_acc);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "final,test_acc=%.6f,seed=%llu\n", report.final_test_acc,
                static_cast<unsigned long long>(report.seed));
  os << buf;
}

std::vector<int64_t> assign_groups(const adapter::TeacherBundle& teachers,
                                   const nn::Model& student, MappingStrategy strategy,
                                   uint64_t seed) {
  int64_t m = teachers.size();
  if (static_cast<int64_t>(student.group_boundaries.size()) != m)
    throw ConfigError("assign_groups: student has " +
                      std::to_string(student.group_boundaries.size()) + " groups for " +
                      std::to_string(m) + " teachers");
  std::vector<int64_t> mapping(static_cast<size_t>(m));
  if (strategy == MappingStrategy::random) {
    std::vector<int64_t> perm(static_cast<size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(perm);
    for (int64_t t = 0; t < m; ++t) mapping[static_cast<size_t>(t)] = perm[static_cast<size_t>(t)];
    return mapping;
  }
  std::vector<int64_t> order(static_cast<size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return teachers.val_accuracy[static_cast<size_t>(a)] < teachers.val_accuracy[static_cast<size_t>(b)];
  });
  for (int64_t g = 0; g < m; ++g) {
    int64_t teacher = order[static_cast<size_t>(g)];
    mapping[static_cast<size_t>(teacher)] =
        strategy == MappingStrategy::best_to_high ? g : m - 1 - g;
  }
  return mapping;
}

std::vector<std::array<int64_t, 3>> sample_triplets(int64_t batch_size, int64_t budget, Rng& rng) {
  std::vector<std::array<int64_t, 3>> out;
  if (batch_size < 3 || budget <= 0) return out;
  int64_t total = batch_size * (batch_size - 1) * (batch_size - 2);
  if (total <= budget) {
    for (int64_t i = 0; i < batch_size; ++i)
      for (int64_t j = 0; j < batch_size; ++j)
        for (int64_t k = 0; k < batch_size; ++k)
          if (i != j && j != k && i != k) out.push_back({i, j, k});
    return out;
  }
  std::unordered_set<uint64_t> seen;
  uint64_t b = static_cast<uint64_t>(batch_size);
  while (static_cast<int64_t>(out.size()) < budget) {
    int64_t i = static_cast<int64_t>(rng.bounded(b));
    int64_t j = static_cast<int64_t>(rng.bounded(b));
    int64_t k = static_cast<int64_t>(rng.bounded(b));
    if (i == j || j == k || i == k) continue;
    uint64_t key = (static_cast<uint64_t>(i) * b + static_cast<uint64_t>(j)) * b +
                   static_cast<uint64_t>(k);
    if (seen.insert(key).second) out.push_back({i, j, k});
  }
  return out;
}

double evaluate(const nn::Model& model, const data::Dataset& dataset, int64_t batch_size) {
  if (dataset.n == 0) return 0.0;
  if (model.num_classes != dataset.num_classes)
    throw ConfigError("evaluate: model has " + std::to_string(model.num_classes) +
                      " classes, dataset has " + std::to_string(dataset.num_classes));
  int64_t correct = 0;
  for (int64_t start = 0; start < dataset.n; start += batch_size) {
    std::vector<int64_t> idx;
    for (int64_t i = start; i < std::min(dataset.n, start + batch_size); ++i) idx.push_back(i);
    Tensor batch = data::batch_features(dataset, idx);
    Tensor logits = nn::infer(model, batch).logits;
    int64_t k = logits.dims()[1];
    for (int64_t r = 0; r < logits.dims()[0]; ++r) {
      const double* row = logits.data() + r * k;
      int64_t best = 0;
      for (int64_t j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
      if (best == static_cast<int64_t>(dataset.labels[static_cast<size_t>(idx[static_cast<size_t>(r)])]))
        ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.n);
}

TeacherTrainResult train_teacher(const std::string& arch, const data::Dataset& dataset,
                                 uint64_t seed, const TrainTeacherOptions& options) {
  if (dataset.n < 2) throw DataError("train_teacher: dataset too small");
  std::vector<int64_t> perm(static_cast<size_t>(dataset.n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng split_rng(derive_seed(seed, kValSplit));
  split_rng.shuffle(perm);
  int64_t n_val = dataset.n / 10;
  std::vector<int64_t> val_idx(perm.begin(), perm.begin() + n_val);
  std::vector<int64_t> train_idx(perm.begin() + n_val, perm.end());

  TeacherTrainResult result;
  result.model = nn::build_model(arch, dataset.example_shape, dataset.num_classes,
                                 derive_seed(seed, kTeacherInit));
  std::vector<Tensor> params = result.model.param_tensors();
  nn::SgdState sgd = options.sgd;
  Rng shuffle_rng(derive_seed(seed, kTeacherShuffle));

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx);
    for (size_t start = 0; start < train_idx.size(); start += static_cast<size_t>(options.batch_size)) {
      size_t end = std::min(train_idx.size(), start + static_cast<size_t>(options.batch_size));
      std::vector<int64_t> idx(train_idx.begin() + static_cast<int64_t>(start),
                               train_idx.begin() + static_cast<int64_t>(end));
      Tensor batch = data::batch_features(dataset, idx);
      Graph g;
      Tensor logits = nn::forward(result.model, g, batch).logits;
      Tensor loss = losses::cross_entropy(g, logits, data::batch_labels(dataset, idx));
      for (Tensor& p : params) p.ensure_grad();
      g.backward(loss);
      nn::sgd_update(params, sgd, epoch);
    }
  }

  // Report at checkpoint precision so a saved-and-reloaded model evaluates
  // to exactly the reported numbers.
  checkpoint::round_params_float32(result.model);
  result.val_accuracy =
      n_val > 0 ? evaluate(result.model, subset_dataset(dataset, val_idx)) : 0.0;
  result.dataset_accuracy = evaluate(result.model, dataset);
  return result;
}

adapter::TeacherBundle make_expert_teachers(const data::ExpertSplitSpec& spec,
                                            const data::Dataset& base, const std::string& arch,
                                            uint64_t seed, const TrainTeacherOptions& options) {
  spec.validate(base.num_classes);
  adapter::TeacherBundle bundle;
  for (size_t t = 0; t < spec.subsets.size(); ++t) {
    const std::vector<int>& subset = spec.subsets[t];
    data::Dataset noised =
        data::noise_labels_outside(base, subset, derive_seed(seed, kExpertNoise + t));
    TeacherTrainResult result =
        train_teacher(arch, noised, derive_seed(seed, kExpertTrain + t), options);
    data::Dataset on = data::filter_by_labels(base, subset, true);
    data::Dataset off = data::filter_by_labels(base, subset, false);
    if (off.n > 0) {
      double gap = evaluate(result.model, on) - evaluate(result.model, off);
      if (gap < 0.20)
        throw GenError("expert teacher " + std::to_string(t) +
                       " is not expert enough: on/off accuracy gap " + std::to_string(gap) +
                       " < 0.20");
    }
    nn::set_trainable(result.model, false);
    bundle.models.push_back(std::move(result.model));
    bundle.val_accuracy.push_back(result.val_accuracy);
  }
  return bundle;
}

DistillResult distill(const DistillConfig& config, const adapter::TeacherBundle& teachers,
                      const std::string& student_arch, const data::Dataset& train,
                      const data::Dataset* test) {
  config.validate();
  int64_t m = teachers.size();
  switch (config.method) {
    case Method::indep:
      if (m != 0) throw ConfigError("indep takes no teachers, got " + std::to_string(m));
      break;
    case Method::okd:
    case Method::fitnet:
      if (m != 1)
        throw ConfigError(std::string(method_name(config.method)) + " takes exactly 1 teacher, got " +
                          std::to_string(m));
      break;
    case Method::avgmkd:
    case Method::amtml:
      if (m < 1)
        throw ConfigError(std::string(method_name(config.method)) + " needs teachers");
      break;
  }
  for (int64_t t = 0; t < m; ++t)
    if (teachers.models[static_cast<size_t>(t)].num_classes != train.num_classes)
      throw ConfigError("teacher " + std::to_string(t) + " has " +
                        std::to_string(teachers.models[static_cast<size_t>(t)].num_classes) +
                        " classes, dataset has " + std::to_string(train.num_classes));
  if (train.n == 0) throw DataError("distill: empty training set");

  double eff_lambda = config.lambda, eff_alpha = config.alpha, eff_beta = config.beta;
  switch (config.method) {
    case Method::indep: eff_lambda = eff_alpha = eff_beta = 0.0; break;
    case Method::okd: eff_alpha = eff_beta = 0.0; break;
    case Method::fitnet: eff_lambda = eff_alpha = 0.0; break;  // CE + hint only
    default: break;
  }

  DistillResult result;
  result.report.seed = config.seed;
  result.report.config = config;
  result.student = nn::build_model(student_arch, train.example_shape, train.num_classes,
                                   derive_seed(config.seed, kStudentInit));
  nn::Model& student = result.student;
  auto student_shapes = nn::layer_output_shapes(student);

  // Group wiring and hint regressors.
  std::vector<int64_t> hint_groups;  // teacher -> group
  if (config.method == Method::amtml || config.method == Method::avgmkd) {
    nn::partition_groups(student, m);
    hint_groups = assign_groups(teachers, student, config.mapping,
                                derive_seed(config.seed, kRandomMapping));
  } else if (config.method == Method::fitnet) {
    int64_t n_layers = static_cast<int64_t>(student.layers.size());
    if (student.feature_layer + 1 < n_layers)
      student.group_boundaries = {student.feature_layer + 1, n_layers};
    else
      student.group_boundaries = {n_layers};
    hint_groups = {0};
  }
  result.mapping = hint_groups;

  if (eff_beta != 0.0 && m > 0) {
    auto group_shape = [&](int64_t gi) {
      int64_t last_layer = student.group_boundaries[static_cast<size_t>(gi)] - 1;
      return student_shapes[static_cast<size_t>(last_layer)];
    };
    for (int64_t t = 0; t < m; ++t) {
      const nn::Model& teacher = teachers.models[static_cast<size_t>(t)];
      auto teacher_shapes = nn::layer_output_shapes(teacher);
      int64_t in = flat_size(group_shape(hint_groups[static_cast<size_t>(t)]));
      int64_t out = flat_size(teacher_shapes[static_cast<size_t>(teacher.feature_layer)]);
      result.regressors.push_back(
          nn::build_model("dense:" + std::to_string(in) + ":" + std::to_string(out), {in}, out,
                          derive_seed(config.seed, kRegressorInit + static_cast<uint64_t>(t))));
    }
  }

  // Adapter; d equals the student's feature channel count.
  if (config.method == Method::amtml) {
    const Shape& feat = student_shapes[static_cast<size_t>(student.feature_layer)];
    result.adapter_params = adapter::init_adapter(m, feat[0], derive_seed(config.seed, kAdapterInit),
                                                  config.identical_theta);
    if (config.freeze_adapter)
      for (Tensor& t : result.adapter_params.param_tensors()) t.set_requires_grad(false);
  }

  std::vector<Tensor> trainables = student.param_tensors();
  if (config.method == Method::amtml && !config.freeze_adapter)
    for (const Tensor& t : result.adapter_params.param_tensors()) trainables.push_back(t);
  for (const nn::Model& reg : result.regressors)
    for (const Tensor& t : reg.param_tensors()) trainables.push_back(t);

  std::optional<TeacherCache> cache;
  if (config.cache_teachers && m > 0)
    cache = build_teacher_cache(teachers, train, config.temperature);

  nn::SgdState sgd = config.sgd;
  Rng shuffle_rng(derive_seed(config.seed, kShuffle));
  Rng triplet_rng(derive_seed(config.seed, kTriplets));
  std::vector<int64_t> order(static_cast<size_t>(train.n));
  std::iota(order.begin(), order.end(), 0);

  auto t_start = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double sum_ce = 0, sum_kd = 0, sum_angle = 0, sum_hint = 0, sum_total = 0;
    int64_t batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      std::vector<int64_t> idx(order.begin() + static_cast<int64_t>(start),
                               order.begin() + static_cast<int64_t>(end));
      int64_t b = static_cast<int64_t>(idx.size());
      Tensor batch = data::batch_features(train, idx);
      std::vector<int> labels = data::batch_labels(train, idx);

      losses::LossTerms terms;
      try {
        Graph g;
        nn::ForwardTrace trace = nn::forward(student, g, batch);
        Tensor ce = losses::cross_entropy(g, trace.logits, labels);
        Tensor kd = Tensor::scalar(0.0);
        Tensor angle = Tensor::scalar(0.0);
        Tensor hint = Tensor::scalar(0.0);

        TeacherOutputs outs;
        if (m > 0 && (eff_lambda != 0.0 || eff_alpha != 0.0 || eff_beta != 0.0))
          outs = cache ? cache->gather(idx)
                       : teacher_outputs_for_batch(teachers, batch, config.temperature);

        Tensor target;
        if (m > 0 && (eff_lambda != 0.0 || eff_alpha != 0.0)) {
          if (config.method == Method::okd) {
            target = outs.soft[0];
          } else if (config.method == Method::avgmkd) {
            Tensor uniform = Tensor::full({b, m}, 1.0 / static_cast<double>(m));
            target = adapter::integrate_soft_targets(g, uniform, outs.soft);
          } else {  // amtml
            Tensor delta = adapter::instance_repr(g, trace.feature_map);
            if (config.detach_delta) delta = delta.detached_copy();
            Tensor scores = adapter::teacher_scores(g, result.adapter_params, delta);
            Tensor weights = adapter::teacher_weights(g, scores);
            target = adapter::integrate_soft_targets(g, weights, outs.soft);
          }
        }

        if (target.defined() && eff_lambda != 0.0)
          kd = losses::kd_kl(g, target, trace.logits, config.temperature, !config.strict_kl);
        if (target.defined() && eff_alpha != 0.0) {
          auto triplets = sample_triplets(b, config.triplet_budget, triplet_rng);
          Tensor student_soft = g.softmax_t(trace.logits, config.temperature);
          angle = losses::angle_loss(g, target, student_soft, triplets);
        }
        if (eff_beta != 0.0 && m > 0) {
          hint = losses::hint_loss(g, outs.features, trace.group_outputs, result.regressors,
                                   hint_groups);
          // The single-teacher FitNet form carries a 1/2 factor.
          if (config.method == Method::fitnet) hint = g.mul_scalar(hint, 0.5);
        }

        terms = losses::total_loss(g, ce, kd, angle, hint, eff_lambda, eff_alpha, eff_beta);

        for (Tensor& t : trainables) t.ensure_grad();
        g.backward(terms.total);
        nn::sgd_update(trainables, sgd, epoch);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) +
                           ": " + e.what());
      }

      sum_ce += terms.ce.item();
      sum_kd += terms.kd_kl.item();
      sum_angle += terms.angle.item();
      sum_hint += terms.hint.item();
      sum_total += terms.total.item();
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.ce = sum_ce / static_cast<double>(batches);
    rec.kd_kl = sum_kd / static_cast<double>(batches);
    rec.angle = sum_angle / static_cast<double>(batches);
    rec.hint = sum_hint / static_cast<double>(batches);
    rec.total = sum_total / static_cast<double>(batches);
    rec.train_acc = evaluate(student, train);
    rec.test_acc = test ? evaluate(student, *test) : rec.train_acc;
    result.report.epochs.push_back(rec);
  }
  auto t_end = std::chrono::steady_clock::now();
  result.report.wall_seconds = std::chrono::duration<double>(t_end - t_start).count();
  result.report.final_test_acc = result.report.epochs.empty()
                                     ? (test ? evaluate(student, *test) : evaluate(student, train))
                                     : result.report.epochs.back().test_acc;
  return result;
}

}  // namespace akd::trainer

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "akd/adapter.hpp"
#include "akd/data.hpp"
#include "akd/losses.hpp"
#include "akd/nn.hpp"
#include "akd/rng.hpp"

namespace akd::trainer {

enum class Method { indep, okd, fitnet, avgmkd, amtml };
enum class MappingStrategy { best_to_high, best_to_low, random };

Method parse_method(const std::string& name);
MappingStrategy parse_mapping(const std::string& name);
const char* method_name(Method m);
const char* mapping_name(MappingStrategy s);

/// Full experiment descriptor. Defaults follow the reference setup:
/// T=5.0, lambda=0.7, alpha=1, beta=2, batch 128, SGD 0.1 with decays at
/// epochs 100/150.
struct DistillConfig {
  Method method = Method::amtml;
  double temperature = 5.0;
  double lambda = 0.7;
  double alpha = 1.0;
  double beta = 2.0;
  int batch_size = 128;
  int epochs = 60;
  MappingStrategy mapping = MappingStrategy::best_to_high;
  int triplet_budget = 256;
  uint64_t seed = 0;
  bool detach_delta = false;
  /// Test hooks for the reduction oracles: stop adapter updates / start all
  /// teacher factors from one draw.
  bool freeze_adapter = false;
  bool identical_theta = false;
  /// Strict-paper mode: drop the T^2 scaling on the KL term.
  bool strict_kl = false;
  /// Compute teacher outputs once per run instead of per epoch.
  bool cache_teachers = false;
  nn::SgdState sgd;

  void validate() const;
};

struct EpochRecord {
  int epoch;
  double ce, kd_kl, angle, hint, total;
  double train_acc, test_acc;
};

struct RunReport {
  std::vector<EpochRecord> epochs;
  double final_test_acc = 0.0;
  double wall_seconds = 0.0;
  uint64_t seed = 0;
  DistillConfig config;
};

/// Line-delimited records: epoch,ce,kd_kl,angle,hint,total,train_acc,test_acc
/// plus a final summary line. Wall-clock time goes to stdout, not the file,
/// keeping report bytes reproducible for fixed seeds.
void write_report(std::ostream& os, const RunReport& report);

/// Teacher -> student-group assignment. best_to_high gives the best teacher
/// the deepest group; best_to_low is the exact reverse; random is a seeded
/// permutation. The student must have exactly one group per teacher.
std::vector<int64_t> assign_groups(const adapter::TeacherBundle& teachers,
                                   const nn::Model& student, MappingStrategy strategy,
                                   uint64_t seed);

/// Ordered distinct triplets within a batch: all of them when at most
/// budget exist, else a uniform sample without replacement. Batches smaller
/// than 3 yield no triplets.
std::vector<std::array<int64_t, 3>> sample_triplets(int64_t batch_size, int64_t budget, Rng& rng);

struct TeacherTrainResult {
  nn::Model model;
  double val_accuracy = 0.0;      // held-out 90/10 split
  double dataset_accuracy = 0.0;  // over the full input dataset
};

struct TrainTeacherOptions {
  int epochs = 50;
  int batch_size = 128;
  nn::SgdState sgd;
};

/// Cross-entropy-only training with a deterministic 90/10 validation split.
TeacherTrainResult train_teacher(const std::string& arch, const data::Dataset& dataset,
                                 uint64_t seed, const TrainTeacherOptions& options = {});

/// Trains one expert teacher per class subset on a label-noised copy of the
/// base dataset, then verifies each is at least 20 accuracy points better on
/// its own classes than off them (throws GenError otherwise).
adapter::TeacherBundle make_expert_teachers(const data::ExpertSplitSpec& spec,
                                            const data::Dataset& base, const std::string& arch,
                                            uint64_t seed,
                                            const TrainTeacherOptions& options = {});

struct DistillResult {
  nn::Model student;
  adapter::AdapterParams adapter_params;  // empty unless method == amtml
  std::vector<nn::Model> regressors;
  std::vector<int64_t> mapping;
  RunReport report;
};

/// Runs the full distillation loop for any method. test may be null, in
/// which case the reported test accuracy falls back to the train set.
DistillResult distill(const DistillConfig& config, const adapter::TeacherBundle& teachers,
                      const std::string& student_arch, const data::Dataset& train,
                      const data::Dataset* test);

/// Top-1 accuracy; argmax ties break toward the lowest class index.
double evaluate(const nn::Model& model, const data::Dataset& dataset, int64_t batch_size = 256);

}  // namespace akd::trainer

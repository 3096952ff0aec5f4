#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "akd/tensor.hpp"

namespace akd::data {

/// Labeled examples with float32 storage (matching the on-disk payload, so
/// round-trips are bit-exact). example_shape is [dim] for vectors or
/// [C,H,W] for images.
struct Dataset {
  int64_t n = 0;
  int64_t num_classes = 0;
  Shape example_shape;
  std::vector<float> features;
  std::vector<uint32_t> labels;

  int64_t example_size() const { return shape_numel(example_shape); }
  bool operator==(const Dataset&) const = default;
};

/// Gaussian clusters around seeded random centers with pairwise center
/// distance >= separation. Examples are laid out class-major.
Dataset gen_blobs(int64_t num_classes, int64_t samples_per_class, int64_t dim, double separation,
                  double noise, uint64_t seed);

/// Class-conditional sinusoidal textures plus noise, giving conv models a
/// learnable [C,H,W] task.
Dataset gen_tiny_images(int64_t num_classes, int64_t samples_per_class, int64_t channels,
                        int64_t height, int64_t width, uint64_t seed);

/// Splits off the first head_per_class examples of every class as the first
/// dataset; the remainder becomes the second. Examples are i.i.d. within a
/// class, so the head split is an unbiased holdout.
std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, int64_t head_per_class);

/// Copy with labels outside the given class subset replaced by uniform
/// random labels. The expert-teacher construction: the teacher stays
/// reliable only on its own classes while seeing every input.
Dataset noise_labels_outside(const Dataset& ds, const std::vector<int>& subset, uint64_t seed);

/// Examples whose label is (in_subset ? within : outside) the subset.
Dataset filter_by_labels(const Dataset& ds, const std::vector<int>& subset, bool in_subset);

/// Disjoint class subsets, one per teacher, covering all classes.
struct ExpertSplitSpec {
  std::vector<std::vector<int>> subsets;

  void validate(int64_t num_classes) const;
};

/// Rows indexed by idx as a [B, ...] tensor of doubles.
Tensor batch_features(const Dataset& ds, const std::vector<int64_t>& idx);
std::vector<int> batch_labels(const Dataset& ds, const std::vector<int64_t>& idx);

/// AKDD binary format, little-endian. Round-trips are bit-exact; malformed
/// files raise FormatError with the byte offset.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

}  // namespace akd::data

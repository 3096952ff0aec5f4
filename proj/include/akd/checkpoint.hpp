#pragma once

#include <string>
#include <utility>
#include <vector>

#include "akd/adapter.hpp"
#include "akd/nn.hpp"

namespace akd::checkpoint {

/// Raw AKDC contents: a descriptor string plus named float32 tensors.
struct Archive {
  std::string descriptor;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_archive(const std::string& path, const Archive& archive);
Archive read_archive(const std::string& path);

/// Rounds every parameter through float32, the checkpoint payload
/// precision, so in-memory state matches what a save/load would produce.
void round_params_float32(nn::Model& model);

/// Saves model parameters plus reserved metadata entries (__input_shape,
/// __val_accuracy) under the architecture descriptor.
void save_model(const std::string& path, const nn::Model& model, double val_accuracy);

struct LoadedModel {
  nn::Model model;
  double val_accuracy = 0.0;
};

LoadedModel load_model(const std::string& path);

void save_adapter(const std::string& path, const adapter::AdapterParams& params);
adapter::AdapterParams load_adapter(const std::string& path);

}  // namespace akd::checkpoint

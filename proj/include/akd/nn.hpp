#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "akd/tensor.hpp"

namespace akd::nn {

enum class LayerKind { dense, conv2d, relu, flatten, global_max_pool };

/// One parsed layer token. conv2d is fixed to kernel 3, stride 1, pad 1.
struct LayerSpec {
  LayerKind kind;
  int64_t in = 0;   // dense: in features; conv2d: in channels
  int64_t out = 0;  // dense: out features; conv2d: out channels
};

/// Ordered layer list with parameters. Serves as teacher, student, and hint
/// regressor alike. group_boundaries partitions the layers into contiguous
/// groups (each entry is one past the group's last layer; the final entry
/// equals the layer count). feature_layer is the layer whose output acts as
/// the model's last feature map.
struct Model {
  std::string descriptor;
  Shape input_shape;  // per-example shape, no batch dim
  std::vector<LayerSpec> layers;
  std::vector<Tensor> weights;  // empty tensor for parameterless layers
  std::vector<Tensor> biases;
  std::vector<int64_t> group_boundaries;
  int64_t feature_layer = 0;
  int64_t num_classes = 0;

  std::vector<std::pair<std::string, Tensor>> named_params() const;
  std::vector<Tensor> param_tensors() const;
};

/// Logits plus everything captured along one forward pass.
struct ForwardTrace {
  Tensor logits;                      // [B, K]
  std::vector<Tensor> group_outputs;  // one per group
  Tensor feature_map;                 // [B,C,H,W] or [B,C]
};

/// Step-decay SGD schedule: lr(epoch) = base_lr * decay_factor^(#decays <= epoch).
struct SgdState {
  double base_lr = 0.1;
  std::vector<int> decay_epochs = {100, 150};
  double decay_factor = 0.1;
  double momentum = 0.9;
};

/// Parses "dense:4:8,relu,dense:8:3"-style descriptors, validates the shape
/// chain against input_shape and num_classes, and initializes parameters
/// uniform(-b, b), b = sqrt(6/(fan_in+fan_out)), deterministically per seed.
Model build_model(const std::string& descriptor, const Shape& input_shape, int64_t num_classes,
                  uint64_t seed);

/// Per-layer output shapes (per example) under the model's input shape.
std::vector<Shape> layer_output_shapes(const Model& model);

/// Final per-example output shape of a descriptor under an input shape.
Shape descriptor_output_shape(const std::string& descriptor, const Shape& input_shape);

/// Repartitions layers into m near-equal contiguous groups.
void partition_groups(Model& model, int64_t m);

/// Runs a batch through the model on the given graph, capturing group
/// outputs and the feature map.
ForwardTrace forward(const Model& model, Graph& g, const Tensor& batch);

/// Forward without gradient tracking; outputs are plain constants.
ForwardTrace infer(const Model& model, const Tensor& batch);

int64_t count_params(const Model& model);

void set_trainable(Model& model, bool trainable);

double learning_rate(const SgdState& state, int epoch);

/// One SGD-with-momentum step over the given tensors; gradients must be
/// populated and are zeroed after the update.
void sgd_update(const std::vector<Tensor>& params, SgdState& state, int epoch);

}  // namespace akd::nn

#include "akd/nn.hpp"

#include <cctype>
#include <cmath>

#include "akd/rng.hpp"

namespace akd::nn {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      parts.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur += ch;
    }
  }
  parts.push_back(cur);
  return parts;
}

int64_t parse_size(const std::string& tok, const std::string& field) {
  try {
    size_t pos = 0;
    long long v = std::stoll(field, &pos);
    if (pos != field.size() || v <= 0) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw DescriptorError("bad layer token '" + tok + "': '" + field +
                          "' is not a positive integer");
  }
}

LayerSpec parse_token(const std::string& tok) {
  auto fields = split(tok, ':');
  const std::string& name = fields[0];
  auto expect_sizes = [&](LayerKind kind) {
    if (fields.size() != 3)
      throw DescriptorError("bad layer token '" + tok + "': expected " + name + ":in:out");
    return LayerSpec{kind, parse_size(tok, fields[1]), parse_size(tok, fields[2])};
  };
  if (name == "dense") return expect_sizes(LayerKind::dense);
  if (name == "conv2d") return expect_sizes(LayerKind::conv2d);
  if (fields.size() != 1) throw DescriptorError("bad layer token '" + tok + "': takes no sizes");
  if (name == "relu") return LayerSpec{LayerKind::relu};
  if (name == "flatten") return LayerSpec{LayerKind::flatten};
  if (name == "global_max_pool") return LayerSpec{LayerKind::global_max_pool};
  throw DescriptorError("unknown layer token '" + tok + "'");
}

Shape chain_shape(const LayerSpec& spec, const Shape& in, int64_t layer_idx) {
  auto fail = [&](const std::string& why) {
    throw ShapeError("layer " + std::to_string(layer_idx) + ": " + why + " (input " +
                     shape_str(in) + ")");
  };
  switch (spec.kind) {
    case LayerKind::dense:
      if (in.size() != 1) fail("dense expects a flat input");
      if (in[0] != spec.in)
        fail("dense expects " + std::to_string(spec.in) + " features, got " +
             std::to_string(in[0]));
      return {spec.out};
    case LayerKind::conv2d:
      if (in.size() != 3) fail("conv2d expects [C,H,W] input");
      if (in[0] != spec.in)
        fail("conv2d expects " + std::to_string(spec.in) + " channels, got " +
             std::to_string(in[0]));
      return {spec.out, in[1], in[2]};
    case LayerKind::relu:
      return in;
    case LayerKind::flatten:
      return {shape_numel(in)};
    case LayerKind::global_max_pool:
      if (in.size() != 3) fail("global_max_pool expects [C,H,W] input");
      return {in[0]};
  }
  fail("unreachable");
  return {};
}

/// Last layer producing the model's feature map: the layer before the first
/// flatten/global_max_pool when one exists (the last spatial activation),
/// else the layer before the final dense head.
int64_t default_feature_layer(const std::vector<LayerSpec>& layers) {
  int64_t n = static_cast<int64_t>(layers.size());
  for (int64_t i = 0; i < n; ++i)
    if (layers[i].kind == LayerKind::flatten || layers[i].kind == LayerKind::global_max_pool)
      return i > 0 ? i - 1 : 0;
  for (int64_t i = n - 1; i >= 0; --i)
    if (layers[i].kind == LayerKind::dense) return i > 0 ? i - 1 : 0;
  return n > 0 ? n - 1 : 0;
}

}  // namespace

Model build_model(const std::string& descriptor, const Shape& input_shape, int64_t num_classes,
                  uint64_t seed) {
  Model m;
  m.descriptor = descriptor;
  m.input_shape = input_shape;
  m.num_classes = num_classes;
  for (const std::string& tok : split(descriptor, ',')) {
    if (tok.empty()) throw DescriptorError("empty layer token in '" + descriptor + "'");
    m.layers.push_back(parse_token(tok));
  }

  auto shapes = [&] {
    std::vector<Shape> out;
    Shape cur = input_shape;
    for (size_t i = 0; i < m.layers.size(); ++i) {
      cur = chain_shape(m.layers[i], cur, static_cast<int64_t>(i));
      out.push_back(cur);
    }
    return out;
  }();
  if (shapes.empty()) throw DescriptorError("descriptor '" + descriptor + "' has no layers");
  if (shapes.back() != Shape{num_classes})
    throw ShapeError("model output " + shape_str(shapes.back()) + " does not match " +
                     std::to_string(num_classes) + " classes");

  Rng rng(seed);
  for (const LayerSpec& spec : m.layers) {
    Tensor w, b;
    if (spec.kind == LayerKind::dense) {
      double bound = std::sqrt(6.0 / static_cast<double>(spec.in + spec.out));
      std::vector<double> wv(static_cast<size_t>(spec.in * spec.out));
      for (double& v : wv) v = rng.uniform(-bound, bound);
      std::vector<double> bv(static_cast<size_t>(spec.out));
      for (double& v : bv) v = rng.uniform(-bound, bound);
      w = Tensor::from_values({spec.in, spec.out}, std::move(wv), true);
      b = Tensor::from_values({spec.out}, std::move(bv), true);
    } else if (spec.kind == LayerKind::conv2d) {
      int64_t fan_in = spec.in * 9, fan_out = spec.out * 9;
      double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::vector<double> wv(static_cast<size_t>(spec.out * spec.in * 9));
      for (double& v : wv) v = rng.uniform(-bound, bound);
      std::vector<double> bv(static_cast<size_t>(spec.out));
      for (double& v : bv) v = rng.uniform(-bound, bound);
      w = Tensor::from_values({spec.out, spec.in, 3, 3}, std::move(wv), true);
      b = Tensor::from_values({spec.out}, std::move(bv), true);
    }
    m.weights.push_back(w);
    m.biases.push_back(b);
  }
  m.group_boundaries = {static_cast<int64_t>(m.layers.size())};
  m.feature_layer = default_feature_layer(m.layers);
  return m;
}

Shape descriptor_output_shape(const std::string& descriptor, const Shape& input_shape) {
  Shape cur = input_shape;
  int64_t idx = 0;
  for (const std::string& tok : split(descriptor, ',')) {
    if (tok.empty()) throw DescriptorError("empty layer token in '" + descriptor + "'");
    cur = chain_shape(parse_token(tok), cur, idx++);
  }
  return cur;
}

std::vector<Shape> layer_output_shapes(const Model& model) {
  std::vector<Shape> out;
  Shape cur = model.input_shape;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    cur = chain_shape(model.layers[i], cur, static_cast<int64_t>(i));
    out.push_back(cur);
  }
  return out;
}

void partition_groups(Model& model, int64_t m) {
  int64_t n = static_cast<int64_t>(model.layers.size());
  if (m < 1 || m > n)
    throw ConfigError("cannot split " + std::to_string(n) + " layers into " + std::to_string(m) +
                      " groups");
  model.group_boundaries.clear();
  int64_t base = n / m, rem = n % m, at = 0;
  for (int64_t g = 0; g < m; ++g) {
    at += base + (g < rem ? 1 : 0);
    model.group_boundaries.push_back(at);
  }
}

std::vector<std::pair<std::string, Tensor>> Model::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (!weights[i].defined()) continue;
    out.emplace_back("layer" + std::to_string(i) + ".weight", weights[i]);
    out.emplace_back("layer" + std::to_string(i) + ".bias", biases[i]);
  }
  return out;
}

std::vector<Tensor> Model::param_tensors() const {
  std::vector<Tensor> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (!weights[i].defined()) continue;
    out.push_back(weights[i]);
    out.push_back(biases[i]);
  }
  return out;
}

ForwardTrace forward(const Model& model, Graph& g, const Tensor& batch) {
  Shape expected = model.input_shape;
  expected.insert(expected.begin(), batch.defined() ? batch.dims()[0] : 0);
  if (!batch.defined() || batch.dims() != expected)
    throw ShapeError("forward: batch " + (batch.defined() ? shape_str(batch.dims()) : "undefined") +
                     " does not match input shape " + shape_str(expected));
  int64_t b = batch.dims()[0];

  ForwardTrace trace;
  Tensor cur = batch;
  size_t next_boundary = 0;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& spec = model.layers[i];
    switch (spec.kind) {
      case LayerKind::dense:
        cur = g.bias_add(g.matmul(cur, model.weights[i]), model.biases[i]);
        break;
      case LayerKind::conv2d:
        cur = g.conv2d(cur, model.weights[i], model.biases[i]);
        break;
      case LayerKind::relu:
        cur = g.relu(cur);
        break;
      case LayerKind::flatten:
        cur = g.reshape(cur, {b, cur.numel() / b});
        break;
      case LayerKind::global_max_pool:
        cur = g.global_max_pool_batch(cur);
        break;
    }
    if (static_cast<int64_t>(i) == model.feature_layer) trace.feature_map = cur;
    if (next_boundary < model.group_boundaries.size() &&
        static_cast<int64_t>(i + 1) == model.group_boundaries[next_boundary]) {
      trace.group_outputs.push_back(cur);
      ++next_boundary;
    }
  }
  trace.logits = cur;
  return trace;
}

ForwardTrace infer(const Model& model, const Tensor& batch) {
  bool any_trainable = false;
  for (const Tensor& t : model.param_tensors()) any_trainable |= t.requires_grad();
  if (!any_trainable) {
    Graph scratch;
    return forward(model, scratch, batch);
  }
  // Disable tracking for the pass so the scratch graph records nothing.
  Graph scratch;
  std::vector<Tensor> params = model.param_tensors();
  std::vector<bool> saved;
  for (Tensor& t : params) {
    saved.push_back(t.requires_grad());
    t.set_requires_grad(false);
  }
  ForwardTrace trace = forward(model, scratch, batch);
  for (size_t i = 0; i < params.size(); ++i) params[i].set_requires_grad(saved[i]);
  return trace;
}

int64_t count_params(const Model& model) {
  int64_t n = 0;
  for (const Tensor& t : model.param_tensors()) n += t.numel();
  return n;
}

void set_trainable(Model& model, bool trainable) {
  for (Tensor& t : model.param_tensors()) t.set_requires_grad(trainable);
}

double learning_rate(const SgdState& state, int epoch) {
  double lr = state.base_lr;
  for (int e : state.decay_epochs)
    if (e <= epoch) lr *= state.decay_factor;
  return lr;
}

void sgd_update(const std::vector<Tensor>& params, SgdState& state, int epoch) {
  double lr = learning_rate(state, epoch);
  for (const Tensor& p : params) {
    Tensor t = p;
    if (!t.has_grad())
      throw StateError("sgd_update: parameter " + shape_str(t.dims()) +
                       " has no gradient; run backward first");
    auto& impl = *t.impl();
    if (impl.velocity.size() != impl.values.size()) impl.velocity.assign(impl.values.size(), 0.0);
    for (size_t i = 0; i < impl.values.size(); ++i) {
      impl.velocity[i] = state.momentum * impl.velocity[i] + impl.grad[i];
      impl.values[i] -= lr * impl.velocity[i];
    }
    t.zero_grad();
  }
}

}  // namespace akd::nn

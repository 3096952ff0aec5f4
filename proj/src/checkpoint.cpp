#include "akd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace akd::checkpoint {

namespace {

constexpr char kMagic[4] = {'A', 'K', 'D', 'C'};
constexpr uint32_t kVersion = 1;
const std::string kAdapterDescriptor = "adapter";

struct Writer {
  std::ofstream os;
  explicit Writer(const std::string& path) : os(path, std::ios::binary) {
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
  }
  void bytes(const void* p, size_t n) { os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  std::ifstream is;
  std::string path;
  size_t offset = 0;
  explicit Reader(const std::string& p) : is(p, std::ios::binary), path(p) {
    if (!is) throw FormatError("cannot open '" + p + "' for reading");
  }
  void bytes(void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
      throw FormatError(path + ": truncated reading " + what + " at offset " +
                        std::to_string(offset) + ": expected " + std::to_string(n) +
                        " bytes, got " + std::to_string(is.gcount()));
    offset += n;
  }
  uint32_t u32(const char* what) {
    uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  std::string str(const char* what) {
    uint32_t len = u32(what);
    if (len > (1u << 20))
      throw FormatError(path + ": implausible string length " + std::to_string(len) +
                        " at offset " + std::to_string(offset - 4));
    std::string s(len, '\0');
    bytes(s.data(), len, what);
    return s;
  }
};

}  // namespace

void write_archive(const std::string& path, const Archive& archive) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.str(archive.descriptor);
  w.u32(static_cast<uint32_t>(archive.tensors.size()));
  for (const auto& [name, tensor] : archive.tensors) {
    w.str(name);
    w.u32(static_cast<uint32_t>(tensor.rank()));
    for (int64_t d : tensor.dims()) w.u32(static_cast<uint32_t>(d));
    std::vector<float> payload(tensor.values().begin(), tensor.values().end());
    w.bytes(payload.data(), payload.size() * sizeof(float));
  }
  if (!w.os) throw FormatError("write failed for '" + path + "'");
}

Archive read_archive(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad magic at offset 0, expected AKDC");
  uint32_t version = r.u32("version");
  if (version != kVersion)
    throw FormatError(path + ": unsupported version " + std::to_string(version) + " at offset 4");
  Archive archive;
  archive.descriptor = r.str("descriptor");
  uint32_t count = r.u32("tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str("tensor name");
    uint32_t rank = r.u32("tensor rank");
    if (rank > 8)
      throw FormatError(path + ": implausible rank " + std::to_string(rank) + " at offset " +
                        std::to_string(r.offset - 4));
    Shape dims;
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      uint32_t v = r.u32("tensor dims");
      if (v == 0) throw FormatError(path + ": zero dim at offset " + std::to_string(r.offset - 4));
      dims.push_back(v);
      numel *= v;
    }
    std::vector<float> payload(static_cast<size_t>(numel));
    r.bytes(payload.data(), payload.size() * sizeof(float), "tensor payload");
    std::vector<double> values(payload.begin(), payload.end());
    archive.tensors.emplace_back(std::move(name), Tensor::from_values(std::move(dims), std::move(values)));
  }
  return archive;
}

void round_params_float32(nn::Model& model) {
  for (Tensor& t : model.param_tensors())
    for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

void save_model(const std::string& path, const nn::Model& model, double val_accuracy) {
  Archive archive;
  archive.descriptor = model.descriptor;
  std::vector<double> shape_vals(model.input_shape.begin(), model.input_shape.end());
  int64_t shape_rank = static_cast<int64_t>(shape_vals.size());
  archive.tensors.emplace_back("__input_shape",
                               Tensor::from_values({shape_rank}, std::move(shape_vals)));
  archive.tensors.emplace_back("__val_accuracy", Tensor::scalar(val_accuracy));
  for (const auto& [name, tensor] : model.named_params()) archive.tensors.emplace_back(name, tensor);
  write_archive(path, archive);
}

LoadedModel load_model(const std::string& path) {
  Archive archive = read_archive(path);
  std::map<std::string, Tensor> by_name(archive.tensors.begin(), archive.tensors.end());

  auto shape_it = by_name.find("__input_shape");
  if (shape_it == by_name.end())
    throw StateError(path + ": checkpoint lacks __input_shape metadata");
  Shape input_shape;
  for (double v : shape_it->second.values()) input_shape.push_back(static_cast<int64_t>(v));

  Shape out_shape = nn::descriptor_output_shape(archive.descriptor, input_shape);
  if (out_shape.size() != 1)
    throw StateError(path + ": descriptor '" + archive.descriptor + "' does not end in logits");

  // Skeleton with throwaway init; every parameter is overwritten below.
  LoadedModel loaded;
  loaded.model = nn::build_model(archive.descriptor, input_shape, out_shape[0], 0);
  auto acc_it = by_name.find("__val_accuracy");
  if (acc_it != by_name.end()) loaded.val_accuracy = acc_it->second.item();

  for (auto& [name, tensor] : loaded.model.named_params()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw StateError(path + ": checkpoint missing tensor '" + name + "'");
    if (it->second.dims() != tensor.dims())
      throw StateError(path + ": tensor '" + name + "' has shape " + shape_str(it->second.dims()) +
                       ", model expects " + shape_str(tensor.dims()));
    tensor.values() = it->second.values();
  }
  return loaded;
}

void save_adapter(const std::string& path, const adapter::AdapterParams& params) {
  Archive archive;
  archive.descriptor = kAdapterDescriptor;
  for (size_t t = 0; t < params.thetas.size(); ++t)
    archive.tensors.emplace_back("theta_" + std::to_string(t), params.thetas[t]);
  archive.tensors.emplace_back("nu", params.nu);
  write_archive(path, archive);
}

adapter::AdapterParams load_adapter(const std::string& path) {
  Archive archive = read_archive(path);
  if (archive.descriptor != kAdapterDescriptor)
    throw StateError(path + ": not an adapter checkpoint (descriptor '" + archive.descriptor +
                     "')");
  adapter::AdapterParams params;
  std::map<std::string, Tensor> by_name(archive.tensors.begin(), archive.tensors.end());
  auto nu_it = by_name.find("nu");
  if (nu_it == by_name.end()) throw StateError(path + ": adapter checkpoint missing nu");
  params.nu = nu_it->second;
  params.nu.set_requires_grad(true);
  params.d = params.nu.numel();
  for (size_t t = 0;; ++t) {
    auto it = by_name.find("theta_" + std::to_string(t));
    if (it == by_name.end()) break;
    if (it->second.numel() != params.d)
      throw StateError(path + ": theta_" + std::to_string(t) + " has dim " +
                       std::to_string(it->second.numel()) + ", nu has " + std::to_string(params.d));
    Tensor theta = it->second;
    theta.set_requires_grad(true);
    params.thetas.push_back(theta);
  }
  if (params.thetas.empty()) throw StateError(path + ": adapter checkpoint has no teacher factors");
  return params;
}

}  // namespace akd::checkpoint

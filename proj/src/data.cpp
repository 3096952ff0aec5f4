#include "akd/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "akd/rng.hpp"

namespace akd::data {

Dataset gen_blobs(int64_t num_classes, int64_t samples_per_class, int64_t dim, double separation,
                  double noise, uint64_t seed) {
  if (num_classes < 2) throw ParamError("gen_blobs: need at least 2 classes");
  if (samples_per_class < 1 || dim < 1) throw ParamError("gen_blobs: empty spec");
  if (!(separation > 0.0)) throw ParamError("gen_blobs: separation must be > 0");

  Rng rng(seed);
  std::vector<std::vector<double>> centers;
  // Placement box scales with the separation alone so feature magnitude
  // stays O(separation) regardless of the class count.
  double box = separation * 1.25;
  for (int64_t k = 0; k < num_classes; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      std::vector<double> c(static_cast<size_t>(dim));
      for (double& v : c) v = rng.uniform(-box, box);
      placed = true;
      for (const auto& other : centers) {
        double d2 = 0.0;
        for (int64_t i = 0; i < dim; ++i) d2 += (c[i] - other[i]) * (c[i] - other[i]);
        if (d2 < separation * separation) {
          placed = false;
          break;
        }
      }
      if (placed) centers.push_back(std::move(c));
    }
    if (!placed)
      throw GenError("gen_blobs: could not place center " + std::to_string(k) +
                     " with separation " + std::to_string(separation) +
                     " after 1000 attempts");
  }

  Dataset ds;
  ds.num_classes = num_classes;
  ds.example_shape = {dim};
  ds.n = num_classes * samples_per_class;
  ds.features.reserve(static_cast<size_t>(ds.n * dim));
  ds.labels.reserve(static_cast<size_t>(ds.n));
  for (int64_t k = 0; k < num_classes; ++k) {
    for (int64_t s = 0; s < samples_per_class; ++s) {
      for (int64_t i = 0; i < dim; ++i)
        ds.features.push_back(static_cast<float>(centers[static_cast<size_t>(k)][static_cast<size_t>(i)] +
                                                 noise * rng.normal()));
      ds.labels.push_back(static_cast<uint32_t>(k));
    }
  }
  return ds;
}

Dataset gen_tiny_images(int64_t num_classes, int64_t samples_per_class, int64_t channels,
                        int64_t height, int64_t width, uint64_t seed) {
  if (num_classes < 2) throw ParamError("gen_tiny_images: need at least 2 classes");
  if (channels < 1 || height < 1 || width < 1) throw ParamError("gen_tiny_images: bad shape");

  Rng rng(seed);
  // Per class and channel: a frequency pair and phases defining its texture.
  struct Pattern {
    double fy, fx, py, px, amp;
  };
  std::vector<Pattern> patterns(static_cast<size_t>(num_classes * channels));
  for (Pattern& p : patterns) {
    p.fy = rng.uniform(0.5, 3.0);
    p.fx = rng.uniform(0.5, 3.0);
    p.py = rng.uniform(0.0, 6.283185307179586);
    p.px = rng.uniform(0.0, 6.283185307179586);
    p.amp = rng.uniform(0.6, 1.4);
  }

  Dataset ds;
  ds.num_classes = num_classes;
  ds.example_shape = {channels, height, width};
  ds.n = num_classes * samples_per_class;
  ds.features.reserve(static_cast<size_t>(ds.n * channels * height * width));
  ds.labels.reserve(static_cast<size_t>(ds.n));
  for (int64_t k = 0; k < num_classes; ++k) {
    for (int64_t s = 0; s < samples_per_class; ++s) {
      for (int64_t c = 0; c < channels; ++c) {
        const Pattern& p = patterns[static_cast<size_t>(k * channels + c)];
        for (int64_t y = 0; y < height; ++y) {
          for (int64_t x = 0; x < width; ++x) {
            double v = p.amp * std::sin(p.fy * y + p.py) * std::cos(p.fx * x + p.px);
            ds.features.push_back(static_cast<float>(v + 0.25 * rng.normal()));
          }
        }
      }
      ds.labels.push_back(static_cast<uint32_t>(k));
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, int64_t head_per_class) {
  Dataset head, tail;
  head.num_classes = tail.num_classes = ds.num_classes;
  head.example_shape = tail.example_shape = ds.example_shape;
  int64_t esize = ds.example_size();
  std::vector<int64_t> taken(static_cast<size_t>(ds.num_classes), 0);
  for (int64_t i = 0; i < ds.n; ++i) {
    uint32_t label = ds.labels[static_cast<size_t>(i)];
    Dataset& dst = taken[label]++ < head_per_class ? head : tail;
    dst.features.insert(dst.features.end(), ds.features.begin() + i * esize,
                        ds.features.begin() + (i + 1) * esize);
    dst.labels.push_back(label);
    ++dst.n;
  }
  return {std::move(head), std::move(tail)};
}

Dataset noise_labels_outside(const Dataset& ds, const std::vector<int>& subset, uint64_t seed) {
  Dataset out = ds;
  Rng rng(seed);
  std::vector<bool> keep(static_cast<size_t>(ds.num_classes), false);
  for (int c : subset) {
    if (c < 0 || c >= ds.num_classes)
      throw DataError("noise_labels_outside: class " + std::to_string(c) + " not in dataset");
    keep[static_cast<size_t>(c)] = true;
  }
  for (uint32_t& label : out.labels)
    if (!keep[label]) label = static_cast<uint32_t>(rng.bounded(static_cast<uint64_t>(ds.num_classes)));
  return out;
}

Dataset filter_by_labels(const Dataset& ds, const std::vector<int>& subset, bool in_subset) {
  std::vector<bool> mark(static_cast<size_t>(ds.num_classes), false);
  for (int c : subset) mark[static_cast<size_t>(c)] = true;
  Dataset out;
  out.num_classes = ds.num_classes;
  out.example_shape = ds.example_shape;
  int64_t esize = ds.example_size();
  for (int64_t i = 0; i < ds.n; ++i) {
    if (mark[ds.labels[static_cast<size_t>(i)]] != in_subset) continue;
    out.features.insert(out.features.end(), ds.features.begin() + i * esize,
                        ds.features.begin() + (i + 1) * esize);
    out.labels.push_back(ds.labels[static_cast<size_t>(i)]);
    ++out.n;
  }
  return out;
}

void ExpertSplitSpec::validate(int64_t num_classes) const {
  std::vector<int> seen(static_cast<size_t>(num_classes), 0);
  for (const auto& subset : subsets) {
    if (subset.empty()) throw DataError("expert spec: empty class subset");
    for (int c : subset) {
      if (c < 0 || c >= num_classes)
        throw DataError("expert spec: class " + std::to_string(c) + " out of range");
      if (seen[static_cast<size_t>(c)]++)
        throw DataError("expert spec: class " + std::to_string(c) + " in two subsets");
    }
  }
  for (int64_t c = 0; c < num_classes; ++c)
    if (!seen[static_cast<size_t>(c)])
      throw DataError("expert spec: class " + std::to_string(c) + " not covered");
}

Tensor batch_features(const Dataset& ds, const std::vector<int64_t>& idx) {
  int64_t b = static_cast<int64_t>(idx.size());
  int64_t esize = ds.example_size();
  Shape dims = ds.example_shape;
  dims.insert(dims.begin(), b);
  std::vector<double> values(static_cast<size_t>(b * esize));
  for (int64_t r = 0; r < b; ++r) {
    const float* src = ds.features.data() + idx[static_cast<size_t>(r)] * esize;
    for (int64_t i = 0; i < esize; ++i) values[static_cast<size_t>(r * esize + i)] = src[i];
  }
  return Tensor::from_values(std::move(dims), std::move(values));
}

std::vector<int> batch_labels(const Dataset& ds, const std::vector<int64_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int64_t i : idx) out.push_back(static_cast<int>(ds.labels[static_cast<size_t>(i)]));
  return out;
}

namespace {

constexpr char kMagic[4] = {'A', 'K', 'D', 'D'};
constexpr uint32_t kVersion = 1;

struct Writer {
  std::ofstream os;
  explicit Writer(const std::string& path) : os(path, std::ios::binary) {
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
  }
  void bytes(const void* p, size_t n) { os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u32(uint32_t v) { bytes(&v, 4); }
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
  uint8_t u8(const char* what) {
    uint8_t v;
    bytes(&v, 1, what);
    return v;
  }
  uint32_t u32(const char* what) {
    uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
};

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  uint8_t rank = static_cast<uint8_t>(ds.example_shape.size());
  w.u8(rank);
  for (int64_t d : ds.example_shape) w.u32(static_cast<uint32_t>(d));
  w.u32(static_cast<uint32_t>(ds.n));
  w.u32(static_cast<uint32_t>(ds.num_classes));
  w.bytes(ds.features.data(), ds.features.size() * sizeof(float));
  w.bytes(ds.labels.data(), ds.labels.size() * sizeof(uint32_t));
  if (!w.os) throw FormatError("write failed for '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad magic at offset 0, expected AKDD");
  uint32_t version = r.u32("version");
  if (version != kVersion)
    throw FormatError(path + ": unsupported version " + std::to_string(version) + " at offset 4");
  uint8_t rank = r.u8("rank");
  if (rank != 1 && rank != 3)
    throw FormatError(path + ": rank must be 1 or 3, got " + std::to_string(rank) +
                      " at offset 8");
  Dataset ds;
  for (int i = 0; i < rank; ++i) {
    uint32_t d = r.u32("dims");
    if (d == 0) throw FormatError(path + ": zero dim at offset " + std::to_string(r.offset - 4));
    ds.example_shape.push_back(d);
  }
  ds.n = r.u32("example count");
  ds.num_classes = r.u32("class count");
  if (ds.num_classes == 0)
    throw FormatError(path + ": zero classes at offset " + std::to_string(r.offset - 4));
  ds.features.resize(static_cast<size_t>(ds.n * ds.example_size()));
  r.bytes(ds.features.data(), ds.features.size() * sizeof(float), "features");
  ds.labels.resize(static_cast<size_t>(ds.n));
  r.bytes(ds.labels.data(), ds.labels.size() * sizeof(uint32_t), "labels");
  for (size_t i = 0; i < ds.labels.size(); ++i)
    if (ds.labels[i] >= static_cast<uint32_t>(ds.num_classes))
      throw FormatError(path + ": label " + std::to_string(ds.labels[i]) + " out of range at row " +
                        std::to_string(i));
  return ds;
}

}  // namespace akd::data

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "akd/checkpoint.hpp"
#include "akd/data.hpp"
#include "test_support.hpp"

using namespace akd;
using namespace akd::data;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("gen_blobs: determinism, exact centers at zero noise, errors") {
  Dataset a = gen_blobs(4, 20, 8, 10.0, 0.5, 42);
  Dataset b = gen_blobs(4, 20, 8, 10.0, 0.5, 42);
  CHECK(a == b);
  CHECK(a.n == 80);
  CHECK(a.num_classes == 4);
  CHECK(a.example_shape == Shape{8});
  Dataset c = gen_blobs(4, 20, 8, 10.0, 0.5, 43);
  CHECK_FALSE(a == c);

  // noise 0: all examples of a class coincide, and nearest-center is exact.
  Dataset clean = gen_blobs(3, 5, 4, 6.0, 0.0, 7);
  for (int64_t k = 0; k < 3; ++k)
    for (int64_t s = 1; s < 5; ++s)
      for (int64_t d = 0; d < 4; ++d)
        CHECK(clean.features[static_cast<size_t>((k * 5 + s) * 4 + d)] ==
              clean.features[static_cast<size_t>(k * 5 * 4 + d)]);

  CHECK_THROWS_AS(gen_blobs(1, 5, 4, 6.0, 0.0, 7), ParamError);
  CHECK_THROWS_AS(gen_blobs(3, 5, 4, -1.0, 0.0, 7), ParamError);
  // Separation far beyond the placement box is infeasible.
  CHECK_THROWS_AS(gen_blobs(20, 1, 1, 1e12, 0.0, 7), GenError);
}

TEST_CASE("gen_tiny_images: determinism and balanced labels") {
  Dataset a = gen_tiny_images(4, 25, 2, 6, 6, 9);
  Dataset b = gen_tiny_images(4, 25, 2, 6, 6, 9);
  CHECK(a == b);
  CHECK(a.example_shape == Shape{2, 6, 6});
  std::vector<int> counts(4, 0);
  for (uint32_t label : a.labels) ++counts[label];
  for (int cnt : counts) CHECK(cnt == 25);
}

TEST_CASE("split_per_class keeps classes balanced and preserves bytes") {
  Dataset ds = gen_blobs(3, 10, 4, 8.0, 0.4, 5);
  auto [head, tail] = split_per_class(ds, 7);
  CHECK(head.n == 21);
  CHECK(tail.n == 9);
  std::vector<int> head_counts(3, 0), tail_counts(3, 0);
  for (uint32_t label : head.labels) ++head_counts[label];
  for (uint32_t label : tail.labels) ++tail_counts[label];
  for (int cnt : head_counts) CHECK(cnt == 7);
  for (int cnt : tail_counts) CHECK(cnt == 3);
  // First head example of class 0 is the dataset's first example.
  for (int64_t d = 0; d < 4; ++d) CHECK(head.features[static_cast<size_t>(d)] == ds.features[static_cast<size_t>(d)]);
}

TEST_CASE("noise_labels_outside keeps subset labels and randomizes the rest") {
  Dataset ds = gen_blobs(4, 30, 4, 8.0, 0.4, 6);
  Dataset noised = noise_labels_outside(ds, {0, 1}, 99);
  CHECK(noised.features == ds.features);
  int changed = 0;
  for (size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] <= 1) CHECK(noised.labels[i] == ds.labels[i]);
    if (noised.labels[i] != ds.labels[i]) ++changed;
  }
  CHECK(changed > 20);  // 60 noised labels, 1/4 land on the original by chance
  CHECK(noise_labels_outside(ds, {0, 1}, 99) == noised);
  CHECK_THROWS_AS(noise_labels_outside(ds, {7}, 1), DataError);
}

TEST_CASE("filter_by_labels partitions a dataset") {
  Dataset ds = gen_blobs(4, 10, 4, 8.0, 0.4, 8);
  Dataset in = filter_by_labels(ds, {1, 3}, true);
  Dataset out = filter_by_labels(ds, {1, 3}, false);
  CHECK(in.n == 20);
  CHECK(out.n == 20);
  for (uint32_t label : in.labels) CHECK((label == 1 || label == 3));
  for (uint32_t label : out.labels) CHECK((label == 0 || label == 2));
}

TEST_CASE("ExpertSplitSpec validation") {
  ExpertSplitSpec good{{{0, 1}, {2, 3}}};
  good.validate(4);
  CHECK_THROWS_AS((ExpertSplitSpec{{{0, 1}, {1, 2}}}).validate(3), DataError);
  CHECK_THROWS_AS((ExpertSplitSpec{{{0, 1}}}).validate(3), DataError);
  CHECK_THROWS_AS((ExpertSplitSpec{{{0, 5}}}).validate(3), DataError);
}

TEST_CASE("dataset round-trip is bitwise exact; corrupt files are rejected with offsets") {
  std::string path = temp_path("akd_data_test.akdd");
  Rng rng(404);
  for (int trial = 0; trial < 40; ++trial) {
    Dataset ds = trial % 2 == 0
                     ? gen_blobs(2 + static_cast<int64_t>(rng.bounded(4)),
                                 1 + static_cast<int64_t>(rng.bounded(20)),
                                 2 + static_cast<int64_t>(rng.bounded(9)), 1.0, 0.3,
                                 rng.next_u64())
                     : gen_tiny_images(2 + static_cast<int64_t>(rng.bounded(3)),
                                       1 + static_cast<int64_t>(rng.bounded(10)),
                                       1 + static_cast<int64_t>(rng.bounded(3)),
                                       2 + static_cast<int64_t>(rng.bounded(5)),
                                       2 + static_cast<int64_t>(rng.bounded(5)), rng.next_u64());
    write_dataset(path, ds);
    CHECK(read_dataset(path) == ds);
  }

  Dataset ds = gen_blobs(3, 4, 2, 5.0, 0.2, 1);
  write_dataset(path, ds);
  auto bytes = slurp(path);

  auto corrupted = bytes;
  corrupted[0] = 'X';
  spit(path, corrupted);
  CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains("offset 0"), FormatError);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 7);
  spit(path, truncated);
  CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains("expected"), FormatError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  spit(path, bad_version);
  CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains("offset 4"), FormatError);

  CHECK_THROWS_AS(read_dataset(temp_path("akd_no_such_file.akdd")), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint round-trip restores parameters and metadata") {
  std::string path = temp_path("akd_ckpt_test.akdc");
  nn::Model model = nn::build_model("dense:5:7,relu,dense:7:3", {5}, 3, 55);
  checkpoint::round_params_float32(model);
  checkpoint::save_model(path, model, 0.875);

  checkpoint::LoadedModel loaded = checkpoint::load_model(path);
  CHECK(loaded.val_accuracy == doctest::Approx(0.875));
  CHECK(loaded.model.descriptor == model.descriptor);
  CHECK(loaded.model.input_shape == model.input_shape);
  CHECK(loaded.model.num_classes == 3);
  auto want = model.param_tensors(), got = loaded.model.param_tensors();
  REQUIRE(want.size() == got.size());
  for (size_t i = 0; i < want.size(); ++i) CHECK(want[i].values() == got[i].values());

  // Save -> load -> save is byte-stable.
  std::string path2 = temp_path("akd_ckpt_test2.akdc");
  checkpoint::save_model(path2, loaded.model, loaded.val_accuracy);
  CHECK(slurp(path) == slurp(path2));

  auto bytes = slurp(path);
  bytes[2] = 'X';
  spit(path, bytes);
  CHECK_THROWS_WITH_AS(checkpoint::load_model(path), doctest::Contains("offset 0"), FormatError);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("adapter checkpoint round-trip") {
  std::string path = temp_path("akd_adapter_test.akdc");
  adapter::AdapterParams params = adapter::init_adapter(3, 6, 77);
  for (Tensor& t : params.thetas)
    for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
  checkpoint::save_adapter(path, params);
  adapter::AdapterParams loaded = checkpoint::load_adapter(path);
  CHECK(loaded.d == 6);
  REQUIRE(loaded.thetas.size() == 3);
  for (size_t t = 0; t < 3; ++t) CHECK(loaded.thetas[t].values() == params.thetas[t].values());
  CHECK(loaded.nu.values() == params.nu.values());
  CHECK(loaded.nu.requires_grad());
  std::remove(path.c_str());
}

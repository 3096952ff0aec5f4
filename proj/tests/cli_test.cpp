#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <doctest.h>

#include "akd/checkpoint.hpp"
#include "akd/cli.hpp"
#include "akd/data.hpp"

using namespace akd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "akd_cli_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"akd"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

/// Runs with stdout captured; returns {exit code, stdout text}.
std::pair<int, std::string> run_captured(const std::vector<std::string>& args) {
  std::ostringstream captured;
  std::streambuf* saved = std::cout.rdbuf(captured.rdbuf());
  int code = run_cli(args);
  std::cout.rdbuf(saved);
  return {code, captured.str()};
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("gen-data: writes datasets, reproducible bytes, validation exit codes") {
  TempDir dir;
  std::string out = dir.file("d.akdd");
  auto [code, text] = run_captured({"gen-data", "--kind", "blobs", "--classes", "4", "--per-class",
                                    "50", "--dim", "8", "--seed", "1", "--out", out});
  CHECK(code == 0);
  CHECK(text.find("N=200") != std::string::npos);
  data::Dataset ds = data::read_dataset(out);
  CHECK(ds.n == 200);
  CHECK(ds.num_classes == 4);

  std::string out2 = dir.file("d2.akdd");
  run_captured({"gen-data", "--kind", "blobs", "--classes", "4", "--per-class", "50", "--dim", "8",
                "--seed", "1", "--out", out2});
  CHECK(slurp(out) == slurp(out2));

  CHECK(run_captured({"gen-data", "--classes", "1", "--per-class", "5", "--dim", "4", "--out",
                      dir.file("bad.akdd")})
            .first == 2);
  CHECK(run_captured({"gen-data", "--no-such-flag", "--out", out}).first == 2);
  CHECK(run_captured({"definitely-not-a-subcommand"}).first == 2);

  // Separate held-out split from the same generation.
  auto [split_code, split_text] =
      run_captured({"gen-data", "--classes", "3", "--per-class", "30", "--dim", "4", "--seed", "2",
                    "--out", dir.file("train.akdd"), "--test-out", dir.file("test.akdd"),
                    "--test-per-class", "10"});
  CHECK(split_code == 0);
  CHECK(data::read_dataset(dir.file("train.akdd")).n == 90);
  CHECK(data::read_dataset(dir.file("test.akdd")).n == 30);
}

TEST_CASE("config files fill unset flags; command line wins") {
  TempDir dir;
  std::string cfg = dir.file("gen.cfg");
  {
    std::ofstream os(cfg);
    os << "classes=3\nper-class=20\ndim=4\nseed=9\n";
  }
  std::string out = dir.file("cfg.akdd");
  auto [code, text] =
      run_captured({"gen-data", "--config", cfg, "--out", out, "--per-class", "10"});
  CHECK(code == 0);
  data::Dataset ds = data::read_dataset(out);
  CHECK(ds.num_classes == 3);  // from config
  CHECK(ds.n == 30);           // per-class from the command line
}

TEST_CASE("train-teacher and eval agree on the reported accuracy") {
  TempDir dir;
  std::string dataset = dir.file("t.akdd");
  run_captured({"gen-data", "--classes", "3", "--per-class", "40", "--dim", "6", "--separation",
                "2", "--noise", "0.3", "--seed", "3", "--out", dataset});

  std::string ckpt = dir.file("teacher.akdc");
  auto [code, text] = run_captured({"train-teacher", "--data", dataset, "--arch",
                                    "dense:6:12,relu,dense:12:3", "--epochs", "20", "--batch",
                                    "32", "--seed", "4", "--out", ckpt});
  CHECK(code == 0);
  size_t at = text.find("train_acc=");
  REQUIRE(at != std::string::npos);
  double reported = std::stod(text.substr(at + 10, 6));

  auto [eval_code, eval_text] = run_captured({"eval", "--model", ckpt, "--data", dataset});
  CHECK(eval_code == 0);
  double evaluated = std::stod(eval_text);
  CHECK(std::abs(reported - evaluated) < 1e-4);

  // epochs=0 still writes a loadable checkpoint.
  std::string blank = dir.file("blank.akdc");
  CHECK(run_captured({"train-teacher", "--data", dataset, "--arch", "dense:6:12,relu,dense:12:3",
                      "--epochs", "0", "--seed", "4", "--out", blank})
            .first == 0);
  CHECK(checkpoint::load_model(blank).model.num_classes == 3);

  CHECK(run_captured({"eval", "--model", dir.file("missing.akdc"), "--data", dataset}).first == 2);
  CHECK(run_captured({"train-teacher", "--data", dir.file("missing.akdd"), "--out", blank}).first ==
        2);
}

TEST_CASE("distill validates teacher counts and runs okd end to end") {
  TempDir dir;
  std::string dataset = dir.file("t.akdd");
  run_captured({"gen-data", "--classes", "3", "--per-class", "30", "--dim", "6", "--separation",
                "2", "--noise", "0.3", "--seed", "5", "--out", dataset});
  std::string t1 = dir.file("t1.akdc"), t2 = dir.file("t2.akdc");
  for (auto& [path, seed] : std::vector<std::pair<std::string, std::string>>{{t1, "6"}, {t2, "7"}})
    run_captured({"train-teacher", "--data", dataset, "--arch", "dense:6:12,relu,dense:12:3",
                  "--epochs", "10", "--batch", "32", "--seed", seed, "--out", path});

  CHECK(run_captured({"distill", "--data", dataset, "--method", "okd", "--teachers",
                      t1 + "," + t2, "--student-arch", "dense:6:8,relu,dense:8:3", "--epochs", "1",
                      "--out", dir.file("s.akdc")})
            .first == 2);
  CHECK(run_captured({"distill", "--data", dataset, "--method", "amtml", "--teachers", t1,
                      "--student-arch", "dense:6:8,relu,dense:8:3", "--epochs", "1", "--out",
                      dir.file("s.akdc")})
            .first == 2);

  std::string student = dir.file("student.akdc");
  auto [code, text] = run_captured({"distill", "--data", dataset, "--method", "okd", "--teachers",
                                    t1, "--student-arch", "dense:6:8,relu,dense:8:3", "--epochs",
                                    "3", "--batch", "16", "--seed", "8", "--out", student});
  CHECK(code == 0);
  CHECK(text.find("config method=okd") != std::string::npos);
  CHECK(text.find("config lambda=0.7") != std::string::npos);
  CHECK(text.find("config temp=5") != std::string::npos);
  CHECK(fs::exists(student));
  CHECK(fs::exists(student + ".report.csv"));

  std::ifstream report(student + ".report.csv");
  std::string header;
  std::getline(report, header);
  CHECK(header == "epoch,ce,kd_kl,angle,hint,total,train_acc,test_acc");
}

TEST_CASE("distill amtml writes an adapter and inspect-weights reads it back") {
  TempDir dir;
  std::string dataset = dir.file("t.akdd");
  run_captured({"gen-data", "--classes", "3", "--per-class", "30", "--dim", "6", "--separation",
                "2", "--noise", "0.3", "--seed", "9", "--out", dataset});
  std::string t1 = dir.file("t1.akdc"), t2 = dir.file("t2.akdc");
  for (auto& [path, seed] : std::vector<std::pair<std::string, std::string>>{{t1, "10"}, {t2, "11"}})
    run_captured({"train-teacher", "--data", dataset, "--arch", "dense:6:12,relu,dense:12:3",
                  "--epochs", "10", "--batch", "32", "--seed", seed, "--out", path});

  std::string student = dir.file("student.akdc");
  auto [code, text] =
      run_captured({"distill", "--data", dataset, "--method", "amtml", "--teachers",
                    t1 + "," + t2, "--student-arch", "dense:6:8,relu,dense:8:3", "--epochs", "2",
                    "--batch", "16", "--triplet-budget", "16", "--lr", "0.02", "--seed", "12",
                    "--out", student});
  CHECK(code == 0);
  CHECK(fs::exists(student + ".adapter"));

  std::string csv = dir.file("weights.csv");
  auto [icode, itext] =
      run_captured({"inspect-weights", "--student", student, "--adapter", student + ".adapter",
                    "--teachers", t1 + "," + t2, "--data", dataset, "--out", csv, "--summary"});
  CHECK(icode == 0);
  CHECK(itext.find("class=0") != std::string::npos);

  std::ifstream is(csv);
  std::string header;
  std::getline(is, header);
  CHECK(header == "example_id,label,w_1,w_2");
  std::string row;
  int rows = 0;
  while (std::getline(is, row)) {
    if (row.empty()) continue;
    ++rows;
    // weights per row sum to ~1
    size_t first = row.find(',', row.find(',') + 1);
    double w1 = std::stod(row.substr(first + 1));
    double w2 = std::stod(row.substr(row.rfind(',') + 1));
    CHECK(std::abs(w1 + w2 - 1.0) < 1e-6);
  }
  CHECK(rows == 90);
}

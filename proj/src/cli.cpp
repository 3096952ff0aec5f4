#include "akd/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "akd/checkpoint.hpp"
#include "akd/data.hpp"
#include "akd/trainer.hpp"

namespace akd::cli {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  for (const std::string& tok : split_list(s)) {
    try {
      size_t pos = 0;
      out.push_back(std::stoi(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": '" + tok + "' is not an integer");
    }
  }
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

/// Flat key=value config files. Entries become --key=value arguments placed
/// before the explicit flags, so the command line always wins.
std::vector<std::string> config_file_args(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string entry = trim(line);
    if (entry.empty() || entry[0] == '#') continue;
    size_t eq = entry.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                        entry + "'");
    args.push_back("--" + trim(entry.substr(0, eq)) + "=" + trim(entry.substr(eq + 1)));
  }
  return args;
}

/// Splices config-file entries in after the subcommand token.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string config_path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size())
      config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      config_path = args[i].substr(9);
  }
  if (config_path.empty() || args.empty() || args[0].empty() || args[0][0] == '-') return args;
  std::vector<std::string> expanded = {args[0]};
  for (const std::string& injected : config_file_args(config_path)) expanded.push_back(injected);
  expanded.insert(expanded.end(), args.begin() + 1, args.end());
  return expanded;
}

void take_last_everywhere(CLI::App* cmd) {
  for (CLI::Option* opt : cmd->get_options())
    opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

adapter::TeacherBundle load_teachers(const std::vector<std::string>& paths) {
  adapter::TeacherBundle bundle;
  for (const std::string& path : paths) {
    checkpoint::LoadedModel loaded = checkpoint::load_model(path);
    nn::set_trainable(loaded.model, false);
    bundle.models.push_back(std::move(loaded.model));
    bundle.val_accuracy.push_back(loaded.val_accuracy);
  }
  return bundle;
}

void echo(const std::string& key, const std::string& value) {
  std::cout << "config " << key << "=" << value << "\n";
}
void echo(const std::string& key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", value);
  echo(key, std::string(buf));
}
void echo(const std::string& key, int64_t value) { echo(key, std::to_string(value)); }
void echo(const std::string& key, bool value) { echo(key, std::string(value ? "true" : "false")); }

struct GenDataArgs {
  std::string kind = "blobs";
  int64_t classes = 4;
  int64_t per_class = 500;
  int64_t dim = 16;
  int64_t channels = 1, height = 8, width = 8;
  double separation = 10.0;
  double noise = 0.5;
  uint64_t seed = 0;
  std::string out;
  std::string test_out;
  int64_t test_per_class = 0;
};

int cmd_gen_data(const GenDataArgs& a) {
  echo("kind", a.kind);
  echo("classes", a.classes);
  echo("per_class", a.per_class);
  echo("seed", static_cast<int64_t>(a.seed));
  if (!a.test_out.empty() && a.test_per_class <= 0)
    throw ConfigError("--test-out needs --test-per-class > 0");

  int64_t gen_per_class = a.per_class + (a.test_out.empty() ? 0 : a.test_per_class);
  data::Dataset ds;
  if (a.kind == "blobs") {
    echo("dim", a.dim);
    echo("separation", a.separation);
    echo("noise", a.noise);
    ds = data::gen_blobs(a.classes, gen_per_class, a.dim, a.separation, a.noise, a.seed);
  } else if (a.kind == "images") {
    echo("channels", a.channels);
    echo("height", a.height);
    echo("width", a.width);
    ds = data::gen_tiny_images(a.classes, gen_per_class, a.channels, a.height, a.width, a.seed);
  } else {
    throw ConfigError("unknown --kind '" + a.kind + "' (blobs|images)");
  }

  if (a.test_out.empty()) {
    data::write_dataset(a.out, ds);
    std::cout << "wrote " << a.out << ": N=" << ds.n << " K=" << ds.num_classes
              << " shape=" << shape_str(ds.example_shape) << "\n";
  } else {
    auto [train, test] = data::split_per_class(ds, a.per_class);
    data::write_dataset(a.out, train);
    data::write_dataset(a.test_out, test);
    std::cout << "wrote " << a.out << ": N=" << train.n << " K=" << train.num_classes
              << " shape=" << shape_str(train.example_shape) << "\n";
    std::cout << "wrote " << a.test_out << ": N=" << test.n << " K=" << test.num_classes
              << " shape=" << shape_str(test.example_shape) << "\n";
  }
  return 0;
}

struct TrainTeacherArgs {
  std::string data;
  std::string arch = "dense:16:64,relu,dense:64:32,relu,dense:32:4";
  int epochs = 50;
  int batch = 128;
  double lr = 0.1;
  std::string decay_epochs = "100,150";
  double decay_factor = 0.1;
  double momentum = 0.9;
  std::string expert_classes;
  uint64_t seed = 0;
  std::string out;
};

int cmd_train_teacher(const TrainTeacherArgs& a) {
  echo("data", a.data);
  echo("arch", a.arch);
  echo("epochs", static_cast<int64_t>(a.epochs));
  echo("batch", static_cast<int64_t>(a.batch));
  echo("lr", a.lr);
  echo("decay_epochs", a.decay_epochs);
  echo("decay_factor", a.decay_factor);
  echo("momentum", a.momentum);
  echo("expert_classes", a.expert_classes.empty() ? "-" : a.expert_classes);
  echo("seed", static_cast<int64_t>(a.seed));

  data::Dataset original = data::read_dataset(a.data);
  data::Dataset train_set = original;
  if (!a.expert_classes.empty()) {
    std::vector<int> subset = parse_int_list(a.expert_classes, "--expert-classes");
    train_set = data::noise_labels_outside(original, subset, derive_seed(a.seed, 77));
  }

  trainer::TrainTeacherOptions options;
  options.epochs = a.epochs;
  options.batch_size = a.batch;
  options.sgd.base_lr = a.lr;
  options.sgd.decay_epochs = parse_int_list(a.decay_epochs, "--decay-epochs");
  options.sgd.decay_factor = a.decay_factor;
  options.sgd.momentum = a.momentum;

  trainer::TeacherTrainResult result = trainer::train_teacher(a.arch, train_set, a.seed, options);
  double report_acc = a.expert_classes.empty() ? result.dataset_accuracy
                                               : trainer::evaluate(result.model, original);
  checkpoint::save_model(a.out, result.model, result.val_accuracy);
  char buf[128];
  std::snprintf(buf, sizeof buf, "train_acc=%.4f val_acc=%.4f params=%lld\n", report_acc,
                result.val_accuracy, static_cast<long long>(nn::count_params(result.model)));
  std::cout << buf << "wrote " << a.out << "\n";
  return 0;
}

struct DistillArgs {
  std::string data;
  std::string test_data;
  std::string teachers;
  std::string student_arch = "dense:16:32,relu,dense:32:16,relu,dense:16:4";
  std::string method = "amtml";
  double temp = 5.0;
  double lambda = 0.7;
  double alpha = 1.0;
  double beta = 2.0;
  int batch = 128;
  int epochs = 60;
  std::string mapping = "best_to_high";
  int triplet_budget = 256;
  bool detach_delta = false;
  bool freeze_adapter = false;
  bool identical_theta = false;
  bool strict_kl = false;
  bool cache_teachers = false;
  double lr = 0.1;
  std::string decay_epochs = "100,150";
  double decay_factor = 0.1;
  double momentum = 0.9;
  uint64_t seed = 0;
  std::string out;
  std::string adapter_out;
  std::string report;
};

int cmd_distill(const DistillArgs& a) {
  trainer::DistillConfig config;
  config.method = trainer::parse_method(a.method);
  config.temperature = a.temp;
  config.lambda = a.lambda;
  config.alpha = a.alpha;
  config.beta = a.beta;
  config.batch_size = a.batch;
  config.epochs = a.epochs;
  config.mapping = trainer::parse_mapping(a.mapping);
  config.triplet_budget = a.triplet_budget;
  config.seed = a.seed;
  config.detach_delta = a.detach_delta;
  config.freeze_adapter = a.freeze_adapter;
  config.identical_theta = a.identical_theta;
  config.strict_kl = a.strict_kl;
  config.cache_teachers = a.cache_teachers;
  config.sgd.base_lr = a.lr;
  config.sgd.decay_epochs = parse_int_list(a.decay_epochs, "--decay-epochs");
  config.sgd.decay_factor = a.decay_factor;
  config.sgd.momentum = a.momentum;

  echo("method", a.method);
  echo("student_arch", a.student_arch);
  echo("temp", a.temp);
  echo("lambda", a.lambda);
  echo("alpha", a.alpha);
  echo("beta", a.beta);
  echo("batch", static_cast<int64_t>(a.batch));
  echo("epochs", static_cast<int64_t>(a.epochs));
  echo("mapping", a.mapping);
  echo("triplet_budget", static_cast<int64_t>(a.triplet_budget));
  echo("detach_delta", a.detach_delta);
  echo("freeze_adapter", a.freeze_adapter);
  echo("identical_theta", a.identical_theta);
  echo("strict_kl", a.strict_kl);
  echo("cache_teachers", a.cache_teachers);
  echo("lr", a.lr);
  echo("decay_epochs", a.decay_epochs);
  echo("decay_factor", a.decay_factor);
  echo("momentum", a.momentum);
  echo("seed", static_cast<int64_t>(a.seed));

  std::vector<std::string> teacher_paths = split_list(a.teachers);
  size_t m = teacher_paths.size();
  switch (config.method) {
    case trainer::Method::indep:
      if (m != 0) throw ConfigError("indep takes no --teachers");
      break;
    case trainer::Method::okd:
    case trainer::Method::fitnet:
      if (m != 1) throw ConfigError(a.method + " takes exactly 1 teacher, got " + std::to_string(m));
      break;
    case trainer::Method::avgmkd:
    case trainer::Method::amtml:
      if (m < 2) throw ConfigError(a.method + " needs at least 2 teachers, got " + std::to_string(m));
      break;
  }
  adapter::TeacherBundle teachers = load_teachers(teacher_paths);
  for (size_t t = 0; t < m; ++t)
    echo("teacher_" + std::to_string(t),
         teacher_paths[t] + " val_acc=" + std::to_string(teachers.val_accuracy[t]));

  data::Dataset train = data::read_dataset(a.data);
  data::Dataset test;
  bool have_test = !a.test_data.empty();
  if (have_test) test = data::read_dataset(a.test_data);

  trainer::DistillResult result =
      trainer::distill(config, teachers, a.student_arch, train, have_test ? &test : nullptr);

  checkpoint::round_params_float32(result.student);
  double final_acc = trainer::evaluate(result.student, have_test ? test : train);
  checkpoint::save_model(a.out, result.student, final_acc);
  std::cout << "wrote " << a.out << "\n";
  if (config.method == trainer::Method::amtml) {
    std::string adapter_path = a.adapter_out.empty() ? a.out + ".adapter" : a.adapter_out;
    checkpoint::save_adapter(adapter_path, result.adapter_params);
    std::cout << "wrote " << adapter_path << "\n";
  }
  std::string report_path = a.report.empty() ? a.out + ".report.csv" : a.report;
  {
    std::ofstream os(report_path);
    if (!os) throw FormatError("cannot open '" + report_path + "' for writing");
    trainer::write_report(os, result.report);
  }
  std::cout << "wrote " << report_path << "\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "final test_acc=%.4f wall_s=%.1f\n", final_acc,
                result.report.wall_seconds);
  std::cout << buf;
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
};

int cmd_eval(const EvalArgs& a) {
  checkpoint::LoadedModel loaded = checkpoint::load_model(a.model);
  data::Dataset ds = data::read_dataset(a.data);
  double acc = trainer::evaluate(loaded.model, ds);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f\n", acc);
  std::cout << buf;
  return 0;
}

struct InspectArgs {
  std::string student;
  std::string adapter_path;
  std::string teachers;
  std::string data;
  std::string out;
  bool summary = false;
};

int cmd_inspect_weights(const InspectArgs& a) {
  checkpoint::LoadedModel student = checkpoint::load_model(a.student);
  adapter::AdapterParams params = checkpoint::load_adapter(a.adapter_path);
  adapter::TeacherBundle teachers = load_teachers(split_list(a.teachers));
  data::Dataset ds = data::read_dataset(a.data);

  adapter::WeightTable table = adapter::inspect_weights(params, student.model, teachers, ds);
  if (a.out.empty()) {
    adapter::write_weight_csv(std::cout, table);
  } else {
    std::ofstream os(a.out);
    if (!os) throw FormatError("cannot open '" + a.out + "' for writing");
    adapter::write_weight_csv(os, table);
    std::cout << "wrote " << a.out << "\n";
  }
  if (a.summary) {
    auto means = adapter::summarize_by_class(table, ds);
    for (int64_t k = 0; k < ds.num_classes; ++k) {
      std::cout << "class=" << k;
      char buf[32];
      for (size_t t = 0; t < means[static_cast<size_t>(k)].size(); ++t) {
        std::snprintf(buf, sizeof buf, " w_%zu=%.4f", t + 1, means[static_cast<size_t>(k)][t]);
        std::cout << buf;
      }
      std::cout << "\n";
    }
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"adaptive multi-teacher knowledge distillation harness"};
  app.require_subcommand(1);
  std::string config_path;

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen_cmd->add_option("--kind", gen.kind, "blobs|images");
  gen_cmd->add_option("--classes", gen.classes, "number of classes");
  gen_cmd->add_option("--per-class", gen.per_class, "training examples per class");
  gen_cmd->add_option("--dim", gen.dim, "feature dimension (blobs)");
  gen_cmd->add_option("--channels", gen.channels, "channels (images)");
  gen_cmd->add_option("--height", gen.height, "height (images)");
  gen_cmd->add_option("--width", gen.width, "width (images)");
  gen_cmd->add_option("--separation", gen.separation, "minimum center distance (blobs)");
  gen_cmd->add_option("--noise", gen.noise, "noise stddev (blobs)");
  gen_cmd->add_option("--seed", gen.seed, "rng seed");
  gen_cmd->add_option("--out", gen.out, "output dataset path")->required();
  gen_cmd->add_option("--test-out", gen.test_out, "held-out dataset path");
  gen_cmd->add_option("--test-per-class", gen.test_per_class, "held-out examples per class");
  gen_cmd->add_option("--config", config_path, "flat key=value config file");

  TrainTeacherArgs tt;
  CLI::App* tt_cmd = app.add_subcommand("train-teacher", "train a teacher with cross-entropy");
  tt_cmd->add_option("--data", tt.data, "training dataset")->required();
  tt_cmd->add_option("--arch", tt.arch, "architecture descriptor");
  tt_cmd->add_option("--epochs", tt.epochs, "training epochs");
  tt_cmd->add_option("--batch", tt.batch, "mini-batch size");
  tt_cmd->add_option("--lr", tt.lr, "base learning rate");
  tt_cmd->add_option("--decay-epochs", tt.decay_epochs, "comma-separated decay epochs");
  tt_cmd->add_option("--decay-factor", tt.decay_factor, "lr decay factor");
  tt_cmd->add_option("--momentum", tt.momentum, "SGD momentum");
  tt_cmd->add_option("--expert-classes", tt.expert_classes,
                     "label-noise all classes outside this comma list");
  tt_cmd->add_option("--seed", tt.seed, "rng seed");
  tt_cmd->add_option("--out", tt.out, "checkpoint path")->required();
  tt_cmd->add_option("--config", config_path, "flat key=value config file");

  DistillArgs di;
  CLI::App* di_cmd = app.add_subcommand("distill", "distill teachers into a student");
  di_cmd->add_option("--data", di.data, "training dataset")->required();
  di_cmd->add_option("--test-data", di.test_data, "held-out dataset");
  di_cmd->add_option("--teachers", di.teachers, "comma-separated teacher checkpoints");
  di_cmd->add_option("--student-arch", di.student_arch, "student architecture descriptor");
  di_cmd->add_option("--method", di.method, "indep|okd|fitnet|avgmkd|amtml");
  di_cmd->add_option("--temp", di.temp, "soft-target temperature");
  di_cmd->add_option("--lambda", di.lambda, "KL weight");
  di_cmd->add_option("--alpha", di.alpha, "angle loss weight");
  di_cmd->add_option("--beta", di.beta, "hint loss weight");
  di_cmd->add_option("--batch", di.batch, "mini-batch size");
  di_cmd->add_option("--epochs", di.epochs, "training epochs");
  di_cmd->add_option("--mapping", di.mapping, "best_to_high|best_to_low|random");
  di_cmd->add_option("--triplet-budget", di.triplet_budget, "triplets per batch");
  di_cmd->add_flag("--detach-delta", di.detach_delta, "cut the adapter->student gradient path");
  di_cmd->add_flag("--freeze-adapter", di.freeze_adapter, "disable adapter learning");
  di_cmd->add_flag("--identical-theta", di.identical_theta, "share one theta draw across teachers");
  di_cmd->add_flag("--strict-kl", di.strict_kl, "drop the T^2 scaling on the KL term");
  di_cmd->add_flag("--cache-teachers", di.cache_teachers, "compute teacher outputs once per run");
  di_cmd->add_option("--lr", di.lr, "base learning rate");
  di_cmd->add_option("--decay-epochs", di.decay_epochs, "comma-separated decay epochs");
  di_cmd->add_option("--decay-factor", di.decay_factor, "lr decay factor");
  di_cmd->add_option("--momentum", di.momentum, "SGD momentum");
  di_cmd->add_option("--seed", di.seed, "rng seed");
  di_cmd->add_option("--out", di.out, "student checkpoint path")->required();
  di_cmd->add_option("--adapter-out", di.adapter_out, "adapter checkpoint path (amtml)");
  di_cmd->add_option("--report", di.report, "per-epoch report path");
  di_cmd->add_option("--config", config_path, "flat key=value config file");

  EvalArgs ev;
  CLI::App* ev_cmd = app.add_subcommand("eval", "top-1 accuracy of a checkpoint on a dataset");
  ev_cmd->add_option("--model", ev.model, "model checkpoint")->required();
  ev_cmd->add_option("--data", ev.data, "dataset path")->required();
  ev_cmd->add_option("--config", config_path, "flat key=value config file");

  InspectArgs in;
  CLI::App* in_cmd = app.add_subcommand("inspect-weights", "dump per-example teacher weights");
  in_cmd->add_option("--student", in.student, "student checkpoint")->required();
  in_cmd->add_option("--adapter", in.adapter_path, "adapter checkpoint")->required();
  in_cmd->add_option("--teachers", in.teachers, "comma-separated teacher checkpoints")->required();
  in_cmd->add_option("--data", in.data, "dataset path")->required();
  in_cmd->add_option("--out", in.out, "CSV output path (default stdout)");
  in_cmd->add_flag("--summary", in.summary, "print per-teacher mean weight per class");
  in_cmd->add_option("--config", config_path, "flat key=value config file");

  for (CLI::App* cmd : {gen_cmd, tt_cmd, di_cmd, ev_cmd, in_cmd}) take_last_everywhere(cmd);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(args);
    std::reverse(args.begin(), args.end());  // CLI11's vector overload wants reversed args
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (tt_cmd->parsed()) return cmd_train_teacher(tt);
    if (di_cmd->parsed()) return cmd_distill(di);
    if (ev_cmd->parsed()) return cmd_eval(ev);
    if (in_cmd->parsed()) return cmd_inspect_weights(in);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace akd::cli

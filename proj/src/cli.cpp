#include "patchcraft/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "patchcraft/checkpoint.hpp"
#include "patchcraft/dataset.hpp"
#include "patchcraft/errors.hpp"
#include "patchcraft/harness.hpp"
#include "patchcraft/serialization.hpp"
#include "patchcraft/svm.hpp"
#include "patchcraft/trainer.hpp"
#include "patchcraft/vit.hpp"

namespace patchcraft {

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

struct Options {
  std::string data;
  std::size_t patch = 8;
  std::size_t heads = 2;
  std::size_t layers = 8;
  std::vector<std::size_t> patch_list{8, 12, 16};
  std::vector<std::size_t> heads_list{2, 4, 8};
  std::vector<std::size_t> layers_list{8, 12};
  std::size_t image_size = 72;
  std::size_t proj_dim = 64;
  std::vector<std::size_t> head_hidden{2048, 1024};
  std::vector<std::size_t> mlp_hidden;
  float dropout = 0.0f;
  std::size_t epochs = 25;
  float lr = 1e-4f;
  float weight_decay = 1e-4f;
  std::size_t batch = 32;
  bool no_augment = false;
  std::optional<std::uint64_t> seed;
  double split = 0.2;
  std::size_t jobs = 1;
  std::string out;
  std::string report;
  std::string checkpoint;
  std::string image;
  std::string sweep_csv;
  std::string config_file;
  std::size_t svm_size = 200;
  std::size_t svm_epochs = 25;
  float svm_lambda = 1e-4f;
  float svm_lr = 1e-3f;
};

struct UsageError : Error {
  using Error::Error;
};

void add_model_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--image-size", o.image_size, "Model input resolution")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--proj-dim", o.proj_dim, "Token width")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--head-hidden", o.head_hidden, "Classifier hidden widths")
      ->delimiter(',')
      ->capture_default_str();
  cmd->add_option("--mlp-hidden", o.mlp_hidden, "Encoder MLP widths (default 2D,D)")
      ->delimiter(',');
  cmd->add_option("--dropout", o.dropout, "Dropout rate")->check(CLI::Range(0.0, 0.99));
}

void add_train_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--epochs", o.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--lr", o.lr)->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--weight-decay", o.weight_decay)->capture_default_str();
  cmd->add_option("--batch", o.batch)->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_flag("--no-augment", o.no_augment, "Disable flip/rotation augmentation");
}

void add_data_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--data", o.data, "Dataset root with one directory per class")->required();
  cmd->add_option("--split", o.split, "Held-out fraction per class (0 trains on everything)")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 0.95));
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.seed, "Base seed (falls back to PATCHCRAFT_SEED, then 42)");
  cmd->add_option("--config", o.config_file, "Flat key=value file; flags take precedence");
}

void add_svm_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--svm-size", o.svm_size, "SVM feature image side")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--svm-epochs", o.svm_epochs)->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--svm-lambda", o.svm_lambda)->capture_default_str();
  cmd->add_option("--svm-lr", o.svm_lr)->capture_default_str()->check(CLI::PositiveNumber);
}

std::uint64_t resolve_seed(const Options& o) {
  if (o.seed) {
    return *o.seed;
  }
  const char* env = std::getenv("PATCHCRAFT_SEED");
  if (env == nullptr || *env == '\0') {
    return kDefaultSeed;
  }
  const std::string_view text(env);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw UsageError("PATCHCRAFT_SEED is not an unsigned integer: '" + std::string(text) + "'");
  }
  return value;
}

ViTConfig model_config(const Options& o, std::size_t num_classes) {
  ViTConfig c;
  c.image_size = o.image_size;
  c.patch_size = o.patch;
  c.projection_dim = o.proj_dim;
  c.num_heads = o.heads;
  c.num_layers = o.layers;
  c.num_classes = num_classes;
  c.mlp_hidden = o.mlp_hidden;
  c.head_hidden = o.head_hidden;
  c.dropout_rate = o.dropout;
  return c;
}

TrainConfig train_config(const Options& o, std::uint64_t seed) {
  TrainConfig c;
  c.learning_rate = o.lr;
  c.weight_decay = o.weight_decay;
  c.batch_size = o.batch;
  c.epochs = o.epochs;
  c.seed = seed;
  c.augment = !o.no_augment;
  return c;
}

SvmConfig svm_config(const Options& o, std::uint64_t seed) {
  SvmConfig c;
  c.feature_size = o.svm_size;
  c.epochs = o.svm_epochs;
  c.reg_lambda = o.svm_lambda;
  c.learning_rate = o.svm_lr;
  c.seed = seed;
  return c;
}

std::pair<Dataset, Dataset> load_split(const Options& o, std::uint64_t seed) {
  Dataset all = load_dataset(o.data);
  if (o.split <= 0.0) {
    Dataset empty;
    empty.class_names = all.class_names;
    empty.split_seed = seed;
    return {std::move(all), std::move(empty)};
  }
  return stratified_split(all, o.split, seed);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::string fmt(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.4f", v);
  return buffer;
}

int cmd_train(const Options& o, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(o);
  const auto [train_set, test_set] = load_split(o, seed);
  const ViTConfig model = model_config(o, train_set.num_classes());
  const TrainConfig tc = train_config(o, seed);
  out << "training on " << train_set.size() << " images (" << test_set.size()
      << " held out), " << parameter_count(model) << " parameters\n";
  const TrainResult result =
      train(model, tc, train_set, test_set, [&](std::size_t epoch, const EpochStats& s) {
        out << "epoch " << epoch + 1 << "/" << tc.epochs << " loss " << fmt(s.mean_loss)
            << " acc " << fmt(s.train_accuracy) << "\n";
        out.flush();
      });

  const std::filesystem::path ckpt = o.out.empty() ? "model.vitc" : o.out;
  save_checkpoint(ckpt, {model, tc, train_set.class_names, result.norm_stats, result.params});
  std::filesystem::path report_path = o.report;
  if (report_path.empty()) {
    report_path = ckpt;
    report_path.replace_extension(".json");
  }
  nlohmann::json report = result.report;
  report["class_names"] = train_set.class_names;
  report["checkpoint"] = ckpt.string();
  report["train_size"] = train_set.size();
  report["test_size"] = test_set.size();
  report["norm_stats"] = result.norm_stats;
  write_json(report_path, report);

  out << "train_acc " << fmt(result.report.final_train_accuracy);
  if (result.report.test_accuracy) {
    out << " test_acc " << fmt(*result.report.test_accuracy);
  }
  out << "\ncheckpoint " << ckpt.string() << "\nreport " << report_path.string() << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Dataset data = load_dataset(o.data);
  if (data.class_names != ckpt.class_names) {
    throw InputError("dataset classes do not match the checkpoint's classes");
  }
  const PreparedSet prepared = prepare(data, ckpt.model_config.image_size);
  const double acc =
      evaluate(ckpt.params, ckpt.model_config, prepared, ckpt.norm_stats, ckpt.train_config.batch_size);
  out << "accuracy " << fmt(acc) << " on " << data.size() << " images\n";
  if (!o.out.empty()) {
    write_json(o.out, {{"accuracy", acc}, {"images", data.size()}, {"checkpoint", o.checkpoint}});
  }
  return kExitOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Image img = normalize(
      resize(read_image(o.image), ckpt.model_config.image_size),
      ckpt.norm_stats);
  const auto probs = predict_probabilities(ckpt.params, ckpt.model_config, std::span(&img, 1));
  const std::vector<double>& p = probs.front();
  const std::size_t best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  out << "class " << ckpt.class_names.at(best) << "\n";
  for (std::size_t c = 0; c < p.size(); ++c) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.9f", p[c]);
    out << ckpt.class_names.at(c) << " " << buffer << "\n";
  }
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(o);
  const auto [train_set, test_set] = load_split(o, seed);
  SweepGrid grid;
  grid.patch_sizes = o.patch_list;
  grid.heads = o.heads_list;
  grid.layers = o.layers_list;
  grid.base_model = model_config(o, train_set.num_classes());
  grid.base_train = train_config(o, seed);
  grid.base_seed = seed;
  const std::filesystem::path csv = o.out.empty() ? "sweep.csv" : o.out;

  std::size_t failures = 0;
  const auto rows = run_sweep(grid, make_vit_runner(grid, train_set, test_set), csv, o.jobs,
                              [&](const SweepRow& r) {
                                out << "layers " << r.layers << " patch " << r.patch_size
                                    << " heads " << r.heads << " train_acc " << fmt(r.train_acc)
                                    << " test_acc " << fmt(r.test_acc) << " " << r.status << "\n";
                                out.flush();
                              });
  for (const SweepRow& r : rows) {
    failures += r.ok() ? 0 : 1;
  }
  out << rows.size() << " rows in " << csv.string() << "\n";
  if (failures > 0) {
    out << failures << " runs failed\n";
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(o);
  const auto [train_set, test_set] = load_split(o, seed);
  CompareOptions options;
  options.patch_sizes = o.patch_list;
  options.heads = o.heads;
  options.layers = o.layers;
  options.base_model = model_config(o, train_set.num_classes());
  options.base_train = train_config(o, seed);
  options.svm = svm_config(o, seed);
  if (!o.sweep_csv.empty()) {
    options.sweep_rows = read_sweep_csv(o.sweep_csv);
  }
  const auto rows = run_compare(options, train_set, test_set);
  const std::string csv = format_compare_csv(rows);
  write_text_file(o.out.empty() ? "compare.csv" : o.out, csv);
  out << csv;
  const bool failed =
      std::any_of(rows.begin(), rows.end(), [](const CompareRow& r) { return r.status != kStatusOk; });
  return failed ? kExitFailure : kExitOk;
}

int cmd_plot(const Options& o, std::ostream& out) {
  const auto rows = read_sweep_csv(o.sweep_csv);
  const std::filesystem::path svg = o.out.empty() ? "accuracy.svg" : o.out;
  write_text_file(svg, render_accuracy_svg(rows));
  out << "wrote " << svg.string() << "\n";
  return kExitOk;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

// Expands `--config FILE` into `--key=value` tokens for every key the command
// line does not set itself.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::optional<std::string> file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    }
  }
  if (!file || args.empty()) {
    return args;
  }
  std::ifstream in(*file);
  if (!in) {
    throw UsageError("cannot read config file " + *file);
  }
  auto given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
  };
  std::vector<std::string> expanded{args.front()};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text.front() == '#') {
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw UsageError(*file + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(std::string_view(text).substr(0, eq));
    const std::string value = trim(std::string_view(text).substr(eq + 1));
    if (key.empty() || key == "config") {
      throw UsageError(*file + ":" + std::to_string(line_no) + ": bad key '" + key + "'");
    }
    if (!given(key)) {
      expanded.push_back("--" + key + "=" + value);
    }
  }
  expanded.insert(expanded.end(), args.begin() + 1, args.end());
  return expanded;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Vision transformer image classification toolkit", "patchcraft"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "Train a ViT and write a checkpoint plus JSON report");
  add_data_options(train_cmd, o);
  train_cmd->add_option("--patch", o.patch)->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--heads", o.heads)->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--layers", o.layers)->capture_default_str()->check(CLI::PositiveNumber);
  add_model_options(train_cmd, o);
  add_train_options(train_cmd, o);
  train_cmd->add_option("--out", o.out, "Checkpoint path (default model.vitc)");
  train_cmd->add_option("--report", o.report, "Report path (default: checkpoint with .json)");
  add_common(train_cmd, o);

  auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a checkpoint on a dataset directory");
  eval_cmd->add_option("--checkpoint", o.checkpoint)->required();
  eval_cmd->add_option("--data", o.data)->required();
  eval_cmd->add_option("--out", o.out, "Optional JSON result path");
  eval_cmd->add_option("--config", o.config_file);

  auto* predict_cmd = app.add_subcommand("predict", "Classify one image");
  predict_cmd->add_option("--checkpoint", o.checkpoint)->required();
  predict_cmd->add_option("--image", o.image)->required();
  predict_cmd->add_option("--config", o.config_file);

  auto* sweep_cmd = app.add_subcommand("sweep", "Train every (layers, patch, heads) grid point");
  add_data_options(sweep_cmd, o);
  sweep_cmd->add_option("--patch", o.patch_list)->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--heads", o.heads_list)->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--layers", o.layers_list)->delimiter(',')->capture_default_str();
  add_model_options(sweep_cmd, o);
  add_train_options(sweep_cmd, o);
  sweep_cmd->add_option("--jobs", o.jobs, "Concurrent runs")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out", o.out, "CSV path (default sweep.csv); existing rows are kept");
  add_common(sweep_cmd, o);

  auto* compare_cmd = app.add_subcommand("compare", "ViT variants against the linear SVM");
  add_data_options(compare_cmd, o);
  compare_cmd->add_option("--patch", o.patch_list)->delimiter(',')->capture_default_str();
  compare_cmd->add_option("--heads", o.heads)->capture_default_str()->check(CLI::PositiveNumber);
  compare_cmd->add_option("--layers", o.layers)->capture_default_str()->check(CLI::PositiveNumber);
  compare_cmd->add_option("--sweep", o.sweep_csv, "Use the best setting per patch size from a sweep CSV");
  add_model_options(compare_cmd, o);
  add_train_options(compare_cmd, o);
  add_svm_options(compare_cmd, o);
  compare_cmd->add_option("--out", o.out, "CSV path (default compare.csv)");
  add_common(compare_cmd, o);

  auto* plot_cmd = app.add_subcommand("plot", "SVG of test accuracy against heads from a sweep CSV");
  plot_cmd->add_option("csv", o.sweep_csv, "Sweep CSV")->required();
  plot_cmd->add_option("--out", o.out, "SVG path (default accuracy.svg)");
  plot_cmd->add_option("--config", o.config_file);

  try {
    std::vector<std::string> reversed = expand_config(args);
    std::reverse(reversed.begin(), reversed.end());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      return cmd_train(o, out);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(o, out);
    }
    if (predict_cmd->parsed()) {
      return cmd_predict(o, out);
    }
    if (sweep_cmd->parsed()) {
      return cmd_sweep(o, out);
    }
    if (compare_cmd->parsed()) {
      return cmd_compare(o, out);
    }
    if (plot_cmd->parsed()) {
      return cmd_plot(o, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace patchcraft

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "patchcraft/errors.hpp"
#include "patchcraft/harness.hpp"
#include "patchcraft/random.hpp"

namespace patchcraft {

namespace {

std::string sanitize_status(std::string status) {
  for (char& c : status) {
    if (c == ',' || c == '\n' || c == '\r') {
      c = ';';
    }
  }
  return status;
}

std::string format_double(double v, int precision) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", precision, v);
  return buffer;
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    fields.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(const std::string& field, std::size_t line, const char* column) {
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || field.empty()) {
    throw ParseError("line " + std::to_string(line) + ": bad " + column + " value '" + field +
                     "'");
  }
  return value;
}

void check_nonempty(const std::vector<std::size_t>& values, const char* what) {
  if (values.empty()) {
    throw ConfigError(std::string("sweep grid: empty ") + what + " list");
  }
  if (std::set<std::size_t>(values.begin(), values.end()).size() != values.size()) {
    throw ConfigError(std::string("sweep grid: duplicate ") + what + " values");
  }
}

}  // namespace

void SweepGrid::validate() const {
  check_nonempty(patch_sizes, "patch size");
  check_nonempty(heads, "heads");
  check_nonempty(layers, "layers");
  base_train.validate();
}

std::vector<SweepPoint> SweepGrid::points() const {
  std::vector<std::size_t> l = layers;
  std::vector<std::size_t> p = patch_sizes;
  std::vector<std::size_t> h = heads;
  std::sort(l.begin(), l.end());
  std::sort(p.begin(), p.end());
  std::sort(h.begin(), h.end());
  std::vector<SweepPoint> out;
  for (std::size_t layer : l) {
    for (std::size_t patch : p) {
      for (std::size_t head : h) {
        out.push_back({layer, patch, head});
      }
    }
  }
  return out;
}

std::uint64_t run_seed(std::uint64_t base_seed, const SweepPoint& point) {
  return derive_seed(base_seed, {point.layers, point.patch_size, point.heads});
}

std::string format_sweep_csv(std::span<const SweepRow> rows) {
  std::string out(kSweepHeader);
  out += '\n';
  for (const SweepRow& r : rows) {
    out += std::to_string(r.layers) + ',' + std::to_string(r.patch_size) + ',' +
           std::to_string(r.heads) + ',' + format_double(r.train_acc, 6) + ',' +
           format_double(r.test_acc, 6) + ',' + std::to_string(r.epochs) + ',' +
           std::to_string(r.seed) + ',' + format_double(r.wall_seconds, 3) + ',' +
           sanitize_status(r.status) + '\n';
  }
  return out;
}

std::vector<SweepRow> parse_sweep_csv(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      end = text.size();
    }
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    lines.push_back(std::move(line));
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) {
    lines.pop_back();
  }
  if (lines.empty()) {
    throw ParseError("line 1: empty CSV, expected header '" + std::string(kSweepHeader) + "'");
  }
  if (lines.front() != kSweepHeader) {
    throw ParseError("line 1: unexpected header '" + lines.front() + "'");
  }
  std::vector<SweepRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != 9) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 9 fields, found " +
                       std::to_string(fields.size()));
    }
    SweepRow row;
    row.layers = parse_number<std::size_t>(fields[0], line_no, "layers");
    row.patch_size = parse_number<std::size_t>(fields[1], line_no, "patch_size");
    row.heads = parse_number<std::size_t>(fields[2], line_no, "heads");
    row.train_acc = parse_number<double>(fields[3], line_no, "train_acc");
    row.test_acc = parse_number<double>(fields[4], line_no, "test_acc");
    row.epochs = parse_number<std::size_t>(fields[5], line_no, "epochs");
    row.seed = parse_number<std::uint64_t>(fields[6], line_no, "seed");
    row.wall_seconds = parse_number<double>(fields[7], line_no, "wall_seconds");
    row.status = fields[8];
    for (double acc : {row.train_acc, row.test_acc}) {
      if (!(acc >= 0.0 && acc <= 1.0)) {
        throw ParseError("line " + std::to_string(line_no) + ": accuracy outside [0, 1]");
      }
    }
    if (row.status.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty status");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_sweep_csv(buffer.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot write " + tmp.string());
    }
    out << text;
    if (!out) {
      throw Error("failed writing " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::vector<SweepRow> run_sweep(const SweepGrid& grid, const SweepRunner& runner,
                                const std::filesystem::path& csv_path, std::size_t jobs,
                                const std::function<void(const SweepRow&)>& on_row) {
  grid.validate();
  const auto points = grid.points();
  const std::set<SweepPoint> wanted(points.begin(), points.end());

  std::map<SweepPoint, SweepRow> finished;
  if (std::filesystem::exists(csv_path)) {
    for (SweepRow& row : read_sweep_csv(csv_path)) {
      if (row.ok() && wanted.contains(row.point())) {
        finished[row.point()] = std::move(row);
      }
    }
  }
  std::vector<SweepPoint> pending;
  for (const auto& p : points) {
    if (!finished.contains(p)) {
      pending.push_back(p);
    }
  }

  std::mutex mutex;
  auto ordered_rows = [&] {
    std::vector<SweepRow> rows;
    for (const auto& p : points) {
      if (auto it = finished.find(p); it != finished.end()) {
        rows.push_back(it->second);
      }
    }
    return rows;
  };
  // Caller holds the mutex.
  auto flush = [&] { write_text_file(csv_path, format_sweep_csv(ordered_rows())); };

  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      SweepPoint point;
      {
        std::lock_guard lock(mutex);
        if (next >= pending.size()) {
          return;
        }
        point = pending[next++];
      }
      const std::uint64_t seed = run_seed(grid.base_seed, point);
      SweepRow row;
      try {
        row = runner(point, seed);
      } catch (const std::exception& e) {
        row = SweepRow{};
        row.epochs = grid.base_train.epochs;
        row.status = std::string("failed: ") + e.what();
      }
      row.layers = point.layers;
      row.patch_size = point.patch_size;
      row.heads = point.heads;
      row.seed = seed;
      std::lock_guard lock(mutex);
      finished[point] = row;
      flush();
      if (on_row) {
        on_row(row);
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, pending.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) {
      pool.emplace_back(worker);
    }
    for (auto& t : pool) {
      t.join();
    }
  }
  std::lock_guard lock(mutex);
  flush();
  return ordered_rows();
}

SweepRunner make_vit_runner(const SweepGrid& grid, const Dataset& train_set,
                            const Dataset& test_set) {
  return [base_model = grid.base_model, base_train = grid.base_train, train_ptr = &train_set,
          test_ptr = &test_set](const SweepPoint& point, std::uint64_t seed) {
    ViTConfig model = base_model;
    model.patch_size = point.patch_size;
    model.num_heads = point.heads;
    model.num_layers = point.layers;
    model.num_classes = train_ptr->num_classes();
    TrainConfig train_cfg = base_train;
    train_cfg.seed = seed;
    const TrainResult result = train(model, train_cfg, *train_ptr, *test_ptr);
    SweepRow row;
    row.train_acc = result.report.final_train_accuracy;
    row.test_acc = result.report.test_accuracy.value_or(0.0);
    row.epochs = train_cfg.epochs;
    row.wall_seconds = result.report.wall_seconds;
    return row;
  };
}

std::vector<CompareRow> run_compare(const CompareOptions& options, const Dataset& train_set,
                                    const Dataset& test_set) {
  if (options.patch_sizes.empty()) {
    throw ConfigError("compare: no patch sizes given");
  }
  std::vector<CompareRow> rows;
  for (std::size_t patch : options.patch_sizes) {
    SweepPoint point{options.layers, patch, options.heads};
    if (options.sweep_rows) {
      const SweepRow* best = nullptr;
      for (const SweepRow& r : *options.sweep_rows) {
        if (r.ok() && r.patch_size == patch && (best == nullptr || r.test_acc > best->test_acc)) {
          best = &r;
        }
      }
      if (best != nullptr) {
        point = best->point();
      }
    }
    CompareRow row;
    row.model = "ViT-" + std::to_string(patch);
    try {
      ViTConfig model = options.base_model;
      model.patch_size = point.patch_size;
      model.num_heads = point.heads;
      model.num_layers = point.layers;
      model.num_classes = train_set.num_classes();
      TrainConfig train_cfg = options.base_train;
      train_cfg.seed = run_seed(options.base_train.seed, point);
      const TrainResult result = train(model, train_cfg, train_set, test_set);
      row.train_acc = result.report.final_train_accuracy;
      row.test_acc = result.report.test_accuracy.value_or(0.0);
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
    rows.push_back(std::move(row));
  }
  CompareRow svm_row;
  svm_row.model = "SVM";
  try {
    const SvmClassifier classifier = train_svm_classifier(train_set, options.svm);
    svm_row.train_acc = evaluate_svm(classifier, train_set);
    svm_row.test_acc = test_set.empty() ? 0.0 : evaluate_svm(classifier, test_set);
  } catch (const std::exception& e) {
    svm_row.status = std::string("failed: ") + e.what();
  }
  rows.push_back(std::move(svm_row));
  return rows;
}

std::string format_compare_csv(std::span<const CompareRow> rows) {
  std::string out(kCompareHeader);
  out += '\n';
  for (const CompareRow& r : rows) {
    out += r.model + ',' + format_double(r.train_acc, 6) + ',' + format_double(r.test_acc, 6) +
           ',' + sanitize_status(r.status) + '\n';
  }
  return out;
}

}  // namespace patchcraft

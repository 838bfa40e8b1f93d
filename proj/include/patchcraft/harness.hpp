#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchcraft/dataset.hpp"
#include "patchcraft/svm.hpp"
#include "patchcraft/trainer.hpp"
#include "patchcraft/vit.hpp"

namespace patchcraft {

inline constexpr std::string_view kSweepHeader =
    "layers,patch_size,heads,train_acc,test_acc,epochs,seed,wall_seconds,status";
inline constexpr std::string_view kCompareHeader = "model,train_acc,test_acc,status";
inline constexpr std::string_view kStatusOk = "ok";

struct SweepPoint {
  std::size_t layers = 0;
  std::size_t patch_size = 0;
  std::size_t heads = 0;

  auto operator<=>(const SweepPoint&) const = default;
};

struct SweepRow {
  std::size_t layers = 0;
  std::size_t patch_size = 0;
  std::size_t heads = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::string status{kStatusOk};

  SweepPoint point() const { return {layers, patch_size, heads}; }
  bool ok() const { return status == kStatusOk; }
};

struct SweepGrid {
  std::vector<std::size_t> patch_sizes{8, 12, 16};
  std::vector<std::size_t> heads{2, 4, 8};
  std::vector<std::size_t> layers{8, 12};
  ViTConfig base_model;  // patch/heads/layers are overridden per point
  TrainConfig base_train;
  std::uint64_t base_seed = 42;

  void validate() const;
  // Cartesian product ordered by (layers, patch_size, heads).
  std::vector<SweepPoint> points() const;
};

// Per-run seed: the base seed hashed with the grid coordinates.
std::uint64_t run_seed(std::uint64_t base_seed, const SweepPoint& point);

std::string format_sweep_csv(std::span<const SweepRow> rows);
// Throws ParseError naming the offending line.
std::vector<SweepRow> parse_sweep_csv(std::string_view text);
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);
// Writes through a temporary file and renames it into place.
void write_text_file(const std::filesystem::path& path, const std::string& text);

using SweepRunner = std::function<SweepRow(const SweepPoint& point, std::uint64_t seed)>;

// Runs every grid point that has no completed row in `csv_path` yet, with up
// to `jobs` runs in flight. The CSV is rewritten in grid order after every
// finished run. A run that throws is recorded with a failure status and the
// sweep continues.
std::vector<SweepRow> run_sweep(const SweepGrid& grid, const SweepRunner& runner,
                                const std::filesystem::path& csv_path, std::size_t jobs,
                                const std::function<void(const SweepRow&)>& on_row = {});

// Trains and scores one ViT variant per grid point on a fixed split.
SweepRunner make_vit_runner(const SweepGrid& grid, const Dataset& train_set,
                            const Dataset& test_set);

struct CompareRow {
  std::string model;
  double train_acc = 0.0;
  double test_acc = 0.0;
  std::string status{kStatusOk};
};

struct CompareOptions {
  std::vector<std::size_t> patch_sizes{8, 12, 16};
  std::size_t heads = 2;
  std::size_t layers = 8;
  ViTConfig base_model;
  TrainConfig base_train;
  SvmConfig svm;
  // When present, each ViT variant uses its best (by test accuracy) completed
  // sweep setting; variants absent from the sweep fall back to heads/layers.
  std::optional<std::vector<SweepRow>> sweep_rows;
};

// One row per ViT patch size ("ViT-8", ...) followed by "SVM".
std::vector<CompareRow> run_compare(const CompareOptions& options, const Dataset& train_set,
                                    const Dataset& test_set);
std::string format_compare_csv(std::span<const CompareRow> rows);

// Test accuracy against head count, one polyline per (patch size, layers)
// variant, as a standalone SVG document.
std::string render_accuracy_svg(std::span<const SweepRow> rows);

}  // namespace patchcraft

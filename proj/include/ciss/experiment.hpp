#pragma once

// Experiment drivers shared by the command-line tool and the acceptance suite.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ciss/config.hpp"
#include "ciss/metrics.hpp"
#include "ciss/uda.hpp"

namespace ciss {

/// Loads `cfg.dataset_dir`, or generates the dataset in memory when it is empty.
Dataset open_dataset(const ExperimentConfig& cfg);
Manifest dataset_manifest(const ExperimentConfig& cfg);

/// Confusion matrix of the student's predictions over a labelled split.
ConfusionMatrix evaluate(const SegNetParams<float>& params, const Dataset& data, Split split);

struct RunResult {
  std::vector<MetricsRow> metrics;
  TrainState<float> state;
  double miou = 0.0;  // target_val, in [0, 1]
};

using ProgressFn = std::function<void(const MetricsRow&)>;

/// Trains from scratch for cfg.iterations and evaluates on target_val.
RunResult run_training(const TrainConfig& cfg, const Dataset& data, const ProgressFn& progress = {});

/// One independently seeded training run inside a table.
struct Cell {
  std::string row;
  std::string value;  // swept value, or empty
  std::uint64_t seed = 0;
  TrainConfig train;
};

struct CellResult {
  Cell cell;
  double miou = 0.0;
  std::vector<MetricsRow> metrics;
};

/// Worker count from CISS_THREADS, else the hardware concurrency.
std::size_t thread_count();

/// Runs cells on up to `threads` workers; results keep the input order.
std::vector<CellResult> run_cells(const std::vector<Cell>& cells, const Dataset& data, std::size_t threads,
                                  const std::function<void(const CellResult&)>& done = {});

/// Seed k of a table uses master seed base + k.
std::uint64_t cell_seed(const ExperimentConfig& cfg, std::size_t k);

/// Rows basic, fda, ce_full, ciss_source, ciss_target, ciss, times cfg.seeds.
std::vector<Cell> ablation_cells(const ExperimentConfig& cfg);

/// `param` is one of lambda_s, lambda_t, beta.
std::vector<Cell> sweep_cells(const ExperimentConfig& cfg, const std::string& param, const std::vector<double>& values);

/// Rows encoder and output, one per lambda_s value and seed.
std::vector<Cell> invariance_point_cells(const ExperimentConfig& cfg, const std::vector<double>& lambdas);

/// One table line: a cell (seed set) or an aggregate over seeds (seed empty).
struct TableEntry {
  std::string row;
  std::string value;
  std::string seed;
  double miou = 0.0;      // percent
  double miou_std = 0.0;  // aggregates only, sample deviation over seeds

  friend bool operator==(const TableEntry&, const TableEntry&) = default;
};

inline constexpr const char* kTableHeader = "row,value,seed,miou,miou_std";

/// Cell lines in input order, then one mean/std line per (row, value).
std::vector<TableEntry> summarize(const std::vector<CellResult>& results);
std::string table_csv(const std::vector<TableEntry>& entries);
std::vector<TableEntry> parse_table_csv(const std::string& text);

/// Block means of consecutive metrics rows; each output row carries the
/// last iteration of its block.
std::vector<MetricsRow> block_means(const std::vector<MetricsRow>& rows, std::size_t window);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ciss

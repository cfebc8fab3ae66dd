#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adareg/config.hpp"
#include "adareg/dataset.hpp"
#include "adareg/metrics.hpp"
#include "adareg/model.hpp"
#include "adareg/optim.hpp"

namespace adareg {

// Time-ordered split: train is the first split_fraction of the rows. With a
// validation selection split, validation is the tail of that training range.
struct SplitData {
  Dataset train;
  Dataset test;
  std::optional<Dataset> validation;
};

// Loads or generates the dataset, applies the configured frequency filter
// and splits it.
SplitData prepare_data(const ExperimentConfig& cfg);
Dataset load_dataset(const DataConfig& data);

struct EpochSummary {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  double train_loss = 0.0;  // mean batch loss over the epoch
  double test_auc = 0.0;
  double test_logloss = 0.0;
  std::optional<double> validation_auc;
  double emb_l2_sum = 0.0;
  double emb_sq_sum = 0.0;
  std::vector<double> emb_sq_per_feature;
  double rademacher_bound = 0.0;
};

struct ExperimentReport {
  nlohmann::ordered_json config;
  std::vector<EpochSummary> epochs;
  std::vector<EvalRecord> records;
  FeatureStats feature_stats;
  std::vector<RemapNote> remaps;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  std::vector<StepDiagnostics> step_diagnostics;  // filled when enabled
  double wall_clock_seconds = 0.0;  // the only non-deterministic field

  // Selection metric at a 1-based epoch: validation AUC when a validation
  // split exists, test AUC otherwise.
  double selection_auc(std::size_t epoch) const;
};

// Instrumentation points for tests and tools. All optional.
struct RunHooks {
  // After any MEDA reinitialization, before the first batch of the epoch.
  std::function<void(std::uint64_t epoch, const Model&, const OptimizerState&)> on_epoch_start;
  std::function<void(std::uint64_t step, const Model&, const StepDiagnostics&)> on_step;
  UpdateObserver on_update;
};

struct TrainingResult {
  ExperimentReport report;
  Model model;
  OptimizerState state;
};

// Trains on already prepared data; writes nothing to disk.
TrainingResult train_model(const ExperimentConfig& cfg, const SplitData& data,
                           const RunHooks& hooks = {});

// Full run: prepare data, train, and write metrics.jsonl, curves.csv,
// report.json, feature_stats.csv and config.json (plus step_diagnostics.jsonl
// when enabled) into cfg.output_dir if it is non-empty.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

nlohmann::ordered_json to_json(const ExperimentReport& report);
void write_report_files(const ExperimentReport& report, const std::string& output_dir);

struct MethodSpec {
  std::string name;
  OptimizerConfig optimizer;
};

struct MethodRow {
  std::string name;
  std::vector<double> auc;  // per epoch, test split
  double final_emb_sq_sum = 0.0;
  double final_bound = 0.0;
};

struct ComparisonTable {
  std::vector<MethodRow> rows;
  std::vector<std::size_t> best_row;  // per epoch column, first maximum

  std::string to_markdown() const;
};

// Runs every method on identical data and seeds. Needs at least two methods.
// Per-method output goes to <output_dir>/<name> when output_dir is set.
ComparisonTable compare_methods(const ExperimentConfig& base, const std::vector<MethodSpec>& methods);

enum class GridParameter { alpha, weight_decay };

struct GridRow {
  double value = 0.0;
  std::vector<double> auc;  // per epoch, test split
  double selection_auc = 0.0;
  double final_emb_sq_sum = 0.0;
};

struct GridResult {
  double best_value = 0.0;
  std::vector<GridRow> rows;  // ascending by value

  std::string to_csv() const;
};

// Decades 1e-7 ... 1e-1.
std::vector<double> default_alpha_grid();

// Picks the value with the best selection AUC at selection_epoch (1-based);
// ties go to the smaller value.
GridResult grid_search(const ExperimentConfig& base, std::vector<double> grid,
                       std::size_t selection_epoch, GridParameter parameter);
GridResult grid_search_alpha(const ExperimentConfig& base, std::vector<double> grid,
                             std::size_t selection_epoch);

struct FilterRow {
  double ratio = 1.0;
  std::size_t kept_ids = 0;
  std::vector<double> auc;
  double final_emb_sq_sum = 0.0;
  double final_feature_sq_sum = 0.0;  // the filtered feature's table only
  double final_emb_l2_sum = 0.0;
};

struct FilterSweep {
  std::size_t feature_index = 0;
  std::vector<FilterRow> rows;  // in the order given

  std::string to_csv() const;
};

FilterSweep filter_ratio_sweep(const ExperimentConfig& base, std::size_t feature_index,
                               const std::vector<double>& ratios);

}  // namespace adareg

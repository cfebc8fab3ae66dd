#include "adareg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adareg/error.hpp"

namespace adareg {
namespace {

namespace fs = std::filesystem;

EvalRecord evaluate(const Model& model, const Dataset& ds, const std::string& split,
                    std::uint64_t epoch, std::uint64_t step, std::size_t chunk,
                    const NormSummary& norms) {
  const auto logits = predict_logits(model, ds, chunk);
  EvalRecord r;
  r.epoch = epoch;
  r.step = step;
  r.split = split;
  r.auc = auc(logits, ds.labels);
  r.logloss = logloss(logits, ds.labels);
  r.emb_l2_sum = norms.l2_sum;
  r.emb_sq_sum = norms.sq_sum;
  return r;
}

nlohmann::ordered_json diagnostics_json(const StepDiagnostics& d) {
  nlohmann::ordered_json j;
  j["step"] = d.step;
  j["touched_rows"] = d.touched_rows;
  j["max_interval"] = d.max_interval;
  j["decay_mass"] = d.decay_mass;
  j["lambda_hist"] = d.lambda_histogram;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw RuntimeFailure(path.string() + ": write failed");
}

SplitData split_dataset(const ExperimentConfig& cfg, const Dataset& ds) {
  const std::size_t n = ds.num_samples();
  const auto n_train = static_cast<std::size_t>(std::floor(cfg.split_fraction * static_cast<double>(n)));
  if (n_train < 1 || n_train >= n)
    throw ValidationError("split_fraction: leaves an empty train or test split for T=" + std::to_string(n));
  SplitData out;
  out.test = ds.slice(n_train, n);
  if (cfg.selection.split == SelectionSplit::validation) {
    const auto n_val = static_cast<std::size_t>(
        std::floor(cfg.selection.validation_fraction * static_cast<double>(n_train)));
    if (n_val < 1 || n_val >= n_train)
      throw ValidationError("selection.validation_fraction: leaves an empty split");
    out.train = ds.slice(0, n_train - n_val);
    out.validation = ds.slice(n_train - n_val, n_train);
  } else {
    out.train = ds.slice(0, n_train);
  }
  return out;
}

std::string format_number(double x) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << x;
  return os.str();
}

}  // namespace

double ExperimentReport::selection_auc(std::size_t epoch) const {
  if (epoch < 1 || epoch > epochs.size())
    throw ValidationError("selection_epoch: must lie in [1, " + std::to_string(epochs.size()) + "]");
  const auto& e = epochs[epoch - 1];
  return e.validation_auc ? *e.validation_auc : e.test_auc;
}

Dataset load_dataset(const DataConfig& data) {
  Dataset ds = data.source == DataSource::synthetic ? generate_synthetic(data.synthetic)
                                                    : load_csv(data.csv_path, data.has_header);
  if (data.filter) ds = filter_by_frequency(ds, data.filter->feature_index, data.filter->ratio);
  return ds;
}

SplitData prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  return split_dataset(cfg, load_dataset(cfg.data));
}

TrainingResult train_model(const ExperimentConfig& cfg, const SplitData& data, const RunHooks& hooks) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const Dataset& train = data.train;

  TrainingResult result;
  ExperimentReport& report = result.report;
  report.config = to_json(cfg);
  report.remaps = train.remaps;
  report.train_samples = train.num_samples();
  report.test_samples = data.test.num_samples();
  report.feature_stats = feature_stats(train, cfg.batch_size);

  Model& model = result.model;
  model = init_model(cfg.arch.resolve(train.num_features()), train.feature_cards, cfg.seeds.init);
  OptimizerState& state = result.state;
  state = init_optimizer_state(model.mlp);

  EvalRecord last_test;
  std::optional<double> last_validation_auc;
  auto eval_point = [&](std::uint64_t epoch, std::uint64_t step) {
    const NormSummary norms = embedding_norms(model.tables);
    if (cfg.eval_train)
      report.records.push_back(evaluate(model, train, "train", epoch, step, cfg.eval_batch_size, norms));
    if (data.validation) {
      report.records.push_back(
          evaluate(model, *data.validation, "validation", epoch, step, cfg.eval_batch_size, norms));
      last_validation_auc = report.records.back().auc;
    }
    last_test = evaluate(model, data.test, "test", epoch, step, cfg.eval_batch_size, norms);
    report.records.push_back(last_test);
  };

  std::vector<std::size_t> rows;
  for (std::uint64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (epoch >= 2 && cfg.optimizer.meda_enabled) meda_reinit(model.tables);
    if (hooks.on_epoch_start) hooks.on_epoch_start(epoch, model, state);

    const auto order = epoch_order(train.num_samples(), cfg.seeds.shuffle, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    bool evaluated_at_end = false;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      rows.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                  order.begin() + static_cast<std::ptrdiff_t>(end));
      const Batch batch = gather_batch(train, rows);

      auto g = compute_gradients(model, batch);
      if (!std::isfinite(g.loss))
        throw RuntimeFailure("non-finite training loss at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(state.step + 1));
      const StepDiagnostics diag = optimizer_step(model, state, g.grads, cfg.optimizer, hooks.on_update);
      if (cfg.step_diagnostics) report.step_diagnostics.push_back(diag);
      if (hooks.on_step) hooks.on_step(state.step, model, diag);
      loss_sum += g.loss;
      ++batches;

      if (cfg.eval_every > 0 && state.step % cfg.eval_every == 0) {
        eval_point(epoch, state.step);
        evaluated_at_end = end == order.size();
      }
    }

    if (!evaluated_at_end) eval_point(epoch, state.step);
    EpochSummary summary;
    summary.epoch = epoch;
    summary.step = state.step;
    summary.train_loss = loss_sum / static_cast<double>(batches);
    summary.test_auc = last_test.auc;
    summary.test_logloss = last_test.logloss;
    summary.validation_auc = last_validation_auc;
    const NormSummary norms = embedding_norms(model.tables);
    summary.emb_l2_sum = norms.l2_sum;
    summary.emb_sq_sum = norms.sq_sum;
    summary.emb_sq_per_feature = norms.sq_per_feature;
    summary.rademacher_bound = rademacher_bound(bound_inputs(model, train.num_samples()));
    report.epochs.push_back(std::move(summary));
  }

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

nlohmann::ordered_json to_json(const ExperimentReport& report) {
  nlohmann::ordered_json j;
  j["config"] = report.config;
  j["train_samples"] = report.train_samples;
  j["test_samples"] = report.test_samples;
  auto& epochs = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : report.epochs) {
    nlohmann::ordered_json x;
    x["epoch"] = e.epoch;
    x["step"] = e.step;
    x["train_loss"] = e.train_loss;
    x["test_auc"] = e.test_auc;
    x["test_logloss"] = e.test_logloss;
    if (e.validation_auc) x["validation_auc"] = *e.validation_auc;
    x["emb_l2_sum"] = e.emb_l2_sum;
    x["emb_sq_sum"] = e.emb_sq_sum;
    x["emb_sq_per_feature"] = e.emb_sq_per_feature;
    x["rademacher_bound"] = e.rademacher_bound;
    epochs.push_back(std::move(x));
  }
  auto& stats = j["feature_stats"] = nlohmann::ordered_json::array();
  for (const auto& s : report.feature_stats)
    stats.push_back({{"feature_index", s.feature_index},
                     {"unique_ids", s.unique_ids},
                     {"mean_occurrences", s.mean_occurrences},
                     {"mean_update_interval", s.mean_update_interval}});
  auto& remaps = j["remaps"] = nlohmann::ordered_json::array();
  for (const auto& r : report.remaps)
    remaps.push_back({{"feature_index", r.feature_index},
                      {"original_cardinality", r.original_cardinality},
                      {"default_id", r.default_id},
                      {"ratio", r.ratio},
                      {"unique_ids", r.unique_ids},
                      {"kept_ids", r.kept_ids}});
  j["wall_clock_seconds"] = report.wall_clock_seconds;
  return j;
}

void write_report_files(const ExperimentReport& report, const std::string& output_dir) {
  const fs::path dir(output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw RuntimeFailure(output_dir + ": cannot create directory (" + ec.message() + ")");

  std::string metrics;
  std::string curves = std::string(kCurvesCsvHeader) + "\n";
  for (const auto& r : report.records) {
    metrics += to_jsonl(r) + "\n";
    curves += to_csv_row(r) + "\n";
  }
  write_text(dir / "metrics.jsonl", metrics);
  write_text(dir / "curves.csv", curves);
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  write_text(dir / "config.json", report.config.dump(2) + "\n");
  std::ostringstream stats;
  write_feature_stats_csv(report.feature_stats, stats);
  write_text(dir / "feature_stats.csv", stats.str());
  if (!report.step_diagnostics.empty()) {
    std::string diag;
    for (const auto& d : report.step_diagnostics) diag += diagnostics_json(d).dump() + "\n";
    write_text(dir / "step_diagnostics.jsonl", diag);
  }
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const SplitData data = prepare_data(cfg);
  auto result = train_model(cfg, data);
  if (!cfg.output_dir.empty()) write_report_files(result.report, cfg.output_dir);
  return std::move(result.report);
}

std::string ComparisonTable::to_markdown() const {
  if (rows.empty()) return {};
  const std::size_t epochs = rows.front().auc.size();
  std::string out = "| method |";
  for (std::size_t e = 0; e < epochs; ++e) out += " E" + std::to_string(e + 1) + " |";
  out += " final emb_sq_sum |\n|---|";
  for (std::size_t e = 0; e <= epochs; ++e) out += "---|";
  out += "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += "| " + rows[r].name + " |";
    for (std::size_t e = 0; e < epochs; ++e) {
      const std::string v = format_number(rows[r].auc[e]);
      out += " " + (best_row[e] == r ? "**" + v + "**" : v) + " |";
    }
    out += " " + format_number(rows[r].final_emb_sq_sum) + " |\n";
  }
  return out;
}

ComparisonTable compare_methods(const ExperimentConfig& base, const std::vector<MethodSpec>& methods) {
  if (methods.size() < 2) throw ValidationError("compare: need at least two methods");
  for (const auto& m : methods) m.optimizer.validate();
  const SplitData data = prepare_data(base);
  ComparisonTable table;
  for (const auto& m : methods) {
    ExperimentConfig cfg = base;
    cfg.optimizer = m.optimizer;
    auto result = train_model(cfg, data);
    if (!base.output_dir.empty())
      write_report_files(result.report, (fs::path(base.output_dir) / m.name).string());
    MethodRow row;
    row.name = m.name;
    for (const auto& e : result.report.epochs) row.auc.push_back(e.test_auc);
    row.final_emb_sq_sum = result.report.epochs.back().emb_sq_sum;
    row.final_bound = result.report.epochs.back().rademacher_bound;
    table.rows.push_back(std::move(row));
  }
  table.best_row.assign(base.epochs, 0);
  for (std::size_t e = 0; e < base.epochs; ++e)
    for (std::size_t r = 1; r < table.rows.size(); ++r)
      if (table.rows[r].auc[e] > table.rows[table.best_row[e]].auc[e]) table.best_row[e] = r;
  return table;
}

std::vector<double> default_alpha_grid() { return {1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1}; }

GridResult grid_search(const ExperimentConfig& base, std::vector<double> grid,
                       std::size_t selection_epoch, GridParameter parameter) {
  if (grid.empty()) throw ValidationError("grid: must be non-empty");
  if (selection_epoch < 1 || selection_epoch > base.epochs)
    throw ValidationError("selection_epoch: must lie in [1, " + std::to_string(base.epochs) + "]");
  for (double v : grid) {
    if (parameter == GridParameter::alpha && !(v >= 0.0 && v < 1.0))
      throw ValidationError("grid: alpha values must lie in [0, 1)");
    if (parameter == GridParameter::weight_decay && !(v >= 0.0 && std::isfinite(v)))
      throw ValidationError("grid: weight_decay values must be finite and >= 0");
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const SplitData data = prepare_data(base);
  GridResult result;
  double best = -1.0;
  for (double v : grid) {
    ExperimentConfig cfg = base;
    (parameter == GridParameter::alpha ? cfg.optimizer.alpha : cfg.optimizer.weight_decay) = v;
    auto run = train_model(cfg, data);
    GridRow row;
    row.value = v;
    for (const auto& e : run.report.epochs) row.auc.push_back(e.test_auc);
    row.selection_auc = run.report.selection_auc(selection_epoch);
    row.final_emb_sq_sum = run.report.epochs.back().emb_sq_sum;
    if (row.selection_auc > best) {
      best = row.selection_auc;
      result.best_value = v;
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

GridResult grid_search_alpha(const ExperimentConfig& base, std::vector<double> grid,
                             std::size_t selection_epoch) {
  return grid_search(base, std::move(grid), selection_epoch, GridParameter::alpha);
}

std::string GridResult::to_csv() const {
  std::ostringstream os;
  os << "value,selection_auc,final_emb_sq_sum";
  const std::size_t epochs = rows.empty() ? 0 : rows.front().auc.size();
  for (std::size_t e = 0; e < epochs; ++e) os << ",auc_e" << e + 1;
  os << ",best\n";
  for (const auto& r : rows) {
    os << nlohmann::json(r.value).dump() << ',' << nlohmann::json(r.selection_auc).dump() << ','
       << nlohmann::json(r.final_emb_sq_sum).dump();
    for (double a : r.auc) os << ',' << nlohmann::json(a).dump();
    os << ',' << (r.value == best_value ? 1 : 0) << '\n';
  }
  return os.str();
}

FilterSweep filter_ratio_sweep(const ExperimentConfig& base, std::size_t feature_index,
                               const std::vector<double>& ratios) {
  if (ratios.empty()) throw ValidationError("ratios: must be non-empty");
  for (double r : ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("ratios: must lie in [0, 1]");
  base.validate();
  DataConfig unfiltered = base.data;
  unfiltered.filter.reset();
  const Dataset full = load_dataset(unfiltered);
  if (feature_index >= full.num_features())
    throw ValidationError("feature_index: out of range (S=" + std::to_string(full.num_features()) + ")");

  FilterSweep sweep;
  sweep.feature_index = feature_index;
  for (double r : ratios) {
    ExperimentConfig cfg = base;
    cfg.data.filter = FilterConfig{feature_index, r};
    const SplitData data = split_dataset(cfg, filter_by_frequency(full, feature_index, r));
    auto run = train_model(cfg, data);
    if (!base.output_dir.empty()) {
      std::ostringstream name;
      name << "ratio_" << r;
      write_report_files(run.report, (fs::path(base.output_dir) / name.str()).string());
    }
    FilterRow row;
    row.ratio = r;
    row.kept_ids = data.train.remaps.back().kept_ids;
    for (const auto& e : run.report.epochs) row.auc.push_back(e.test_auc);
    const auto& last = run.report.epochs.back();
    row.final_emb_sq_sum = last.emb_sq_sum;
    row.final_emb_l2_sum = last.emb_l2_sum;
    row.final_feature_sq_sum = last.emb_sq_per_feature[feature_index];
    sweep.rows.push_back(std::move(row));
  }
  return sweep;
}

std::string FilterSweep::to_csv() const {
  std::ostringstream os;
  os << "ratio,kept_ids,final_emb_sq_sum,final_emb_l2_sum,final_feature_sq_sum";
  const std::size_t epochs = rows.empty() ? 0 : rows.front().auc.size();
  for (std::size_t e = 0; e < epochs; ++e) os << ",auc_e" << e + 1;
  os << '\n';
  for (const auto& r : rows) {
    os << nlohmann::json(r.ratio).dump() << ',' << r.kept_ids << ','
       << nlohmann::json(r.final_emb_sq_sum).dump() << ',' << nlohmann::json(r.final_emb_l2_sum).dump()
       << ',' << nlohmann::json(r.final_feature_sq_sum).dump();
    for (double a : r.auc) os << ',' << nlohmann::json(a).dump();
    os << '\n';
  }
  return os.str();
}

}  // namespace adareg

#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "adareg/config.hpp"
#include "adareg/error.hpp"
#include "adareg/harness.hpp"
#include "adareg/metrics.hpp"
#include "adareg/model.hpp"

namespace adareg::cli {
namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_is_file = false) {
  cmd->add_option("-c,--config", args.config_path, "JSON config file")->required();
  cmd->add_option("-s,--set", args.overrides, "Override as dotted.key=value (repeatable)");
  cmd->add_option("-o,--out", args.out,
                  out_is_file ? "Output file" : "Output directory (overrides output_dir)");
}

ExperimentConfig resolve_config(const CommonArgs& args, const std::string& default_dir) {
  ExperimentConfig cfg = apply_overrides(load_config(args.config_path), args.overrides);
  if (!args.out.empty()) cfg.output_dir = args.out;
  if (cfg.output_dir.empty()) cfg.output_dir = default_dir;
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw RuntimeFailure(path.string() + ": write failed");
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (tok.empty() || used != tok.size()) throw ValidationError(what + ": bad number '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError(what + ": empty list");
  return out;
}

// Method tokens are optimizer family names, optionally suffixed with "+meda".
MethodSpec parse_method(const std::string& token, const OptimizerConfig& base) {
  MethodSpec m;
  m.name = token;
  m.optimizer = base;
  std::string family = token;
  m.optimizer.meda_enabled = false;
  if (const auto plus = token.find('+'); plus != std::string::npos) {
    if (token.substr(plus + 1) != "meda")
      throw ValidationError("methods: unknown modifier in '" + token + "'");
    family = token.substr(0, plus);
    m.optimizer.meda_enabled = true;
  }
  const auto f = parse_family(family);
  if (!f) throw ValidationError("methods: unknown optimizer family '" + family + "'");
  m.optimizer.family = *f;
  return m;
}

int run_gen_data(const CommonArgs& args, bool no_header, std::ostream& out) {
  ExperimentConfig cfg = resolve_config(args, "runs/gen-data");
  const Dataset ds = load_dataset(cfg.data);
  const fs::path path = args.out.empty() ? fs::path(cfg.output_dir) / "data.csv" : fs::path(args.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_csv(ds, path, !no_header);
  out << "wrote " << ds.num_samples() << " rows x " << ds.num_features() << " features to "
      << path.string() << "\n";
  return kExitOk;
}

int run_train(const CommonArgs& args, bool snapshot, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(args, "runs/train");
  const SplitData data = prepare_data(cfg);
  const TrainingResult result = train_model(cfg, data);
  write_report_files(result.report, cfg.output_dir);
  if (snapshot) write_snapshot(result.model, fs::path(cfg.output_dir) / "model.bin");
  out << "epoch,test_auc,test_logloss,emb_sq_sum\n";
  for (const auto& e : result.report.epochs)
    out << e.epoch << ',' << std::setprecision(6) << e.test_auc << ',' << e.test_logloss << ','
        << e.emb_sq_sum << "\n";
  out << "outputs in " << cfg.output_dir << "\n";
  return kExitOk;
}

int run_compare(const CommonArgs& args, const std::string& methods_arg, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(args, "runs/compare");
  std::vector<MethodSpec> methods;
  std::stringstream ss(methods_arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) methods.push_back(parse_method(tok, cfg.optimizer));
  const ComparisonTable table = compare_methods(cfg, methods);
  const std::string md = table.to_markdown();
  write_file(fs::path(cfg.output_dir) / "compare.md", md);
  write_file(fs::path(cfg.output_dir) / "config.json", to_json(cfg).dump(2) + "\n");
  out << md;
  return kExitOk;
}

int run_sweep_alpha(const CommonArgs& args, const std::string& grid_arg, std::size_t selection_epoch,
                    const std::string& param, std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(args, "runs/sweep-alpha");
  std::vector<double> grid = grid_arg.empty() ? default_alpha_grid() : parse_double_list(grid_arg, "grid");
  if (selection_epoch == 0) selection_epoch = cfg.epochs;
  GridParameter which = GridParameter::alpha;
  if (param == "weight_decay") which = GridParameter::weight_decay;
  else if (param != "alpha") throw ValidationError("param: expected alpha or weight_decay");
  const GridResult result = grid_search(cfg, std::move(grid), selection_epoch, which);
  const std::string csv = result.to_csv();
  write_file(fs::path(cfg.output_dir) / "grid.csv", csv);
  write_file(fs::path(cfg.output_dir) / "config.json", to_json(cfg).dump(2) + "\n");
  out << csv << "best " << param << " = " << nlohmann::json(result.best_value).dump() << "\n";
  return kExitOk;
}

int run_sweep_filter(const CommonArgs& args, std::size_t feature, const std::string& ratios_arg,
                     std::ostream& out) {
  const ExperimentConfig cfg = resolve_config(args, "runs/sweep-filter");
  const FilterSweep sweep = filter_ratio_sweep(cfg, feature, parse_double_list(ratios_arg, "ratios"));
  const std::string csv = sweep.to_csv();
  write_file(fs::path(cfg.output_dir) / "filter_sweep.csv", csv);
  write_file(fs::path(cfg.output_dir) / "config.json", to_json(cfg).dump(2) + "\n");
  out << csv;
  return kExitOk;
}

int run_stats(const CommonArgs& args, std::ostream& out) {
  ExperimentConfig cfg = apply_overrides(load_config(args.config_path), args.overrides);
  cfg.validate();
  const FeatureStats stats = feature_stats(load_dataset(cfg.data), cfg.batch_size);
  std::ostringstream csv;
  write_feature_stats_csv(stats, csv);
  if (args.out.empty()) out << csv.str();
  else write_file(args.out, csv.str());
  return kExitOk;
}

struct BoundArgs {
  std::vector<double> mf;
  std::size_t s = 0;
  std::size_t t = 0;
  std::size_t l = 0;
  double sum_tau = 0.0;
  std::string snapshot;
};

int run_bound(const BoundArgs& a, std::ostream& out) {
  BoundInputs in;
  if (!a.snapshot.empty()) {
    if (a.t == 0) throw ValidationError("bound: --T is required with --snapshot");
    in = bound_inputs(read_snapshot(a.snapshot), a.t);
  } else {
    if (a.mf.empty()) throw ValidationError("bound: --mf is required without --snapshot");
    in.frobenius_norms = a.mf;
    in.num_features = a.s;
    in.num_samples = a.t;
    in.num_layers = a.l == 0 ? a.mf.size() : a.l;
    in.sum_tau = a.sum_tau;
  }
  out << std::setprecision(12) << rademacher_bound(in) << "\n";
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive-regularization training laboratory for sparse CTR models", "adareg"};
  app.require_subcommand(1);

  CommonArgs common;
  bool no_header = false;
  bool snapshot = false;
  std::string methods = "adam,adam_ar";
  std::string grid;
  std::size_t selection_epoch = 0;
  std::string param = "alpha";
  std::size_t feature = 0;
  std::string ratios = "1,0.5,0.1,0";
  BoundArgs bound;

  auto* gen = app.add_subcommand("gen-data", "Write the configured dataset as CSV");
  add_common(gen, common, true);
  gen->add_flag("--no-header", no_header, "Omit the header line");

  auto* train = app.add_subcommand("train", "Run one experiment");
  add_common(train, common);
  train->add_flag("--snapshot", snapshot, "Also write model.bin");

  auto* compare = app.add_subcommand("compare", "Compare optimizers on identical data");
  add_common(compare, common);
  compare->add_option("-m,--methods", methods, "Comma list of families, '+meda' suffix allowed")
      ->capture_default_str();

  auto* sweep_alpha = app.add_subcommand("sweep-alpha", "Grid search over alpha (or weight_decay)");
  add_common(sweep_alpha, common);
  sweep_alpha->add_option("--grid", grid, "Comma list of values (default 1e-7..1e-1 decades)");
  sweep_alpha->add_option("--selection-epoch", selection_epoch, "1-based epoch (default: last)");
  sweep_alpha->add_option("--param", param, "alpha or weight_decay")->capture_default_str();

  auto* sweep_filter = app.add_subcommand("sweep-filter", "Frequency-filter ratio sweep");
  add_common(sweep_filter, common);
  sweep_filter->add_option("-f,--feature", feature, "Feature index to filter")->required();
  sweep_filter->add_option("-r,--ratios", ratios, "Comma list of ratios")->capture_default_str();

  auto* stats = app.add_subcommand("stats", "Per-feature sparsity statistics as CSV");
  add_common(stats, common, true);

  auto* bound_cmd = app.add_subcommand("bound", "Evaluate the norm-based complexity bound");
  bound_cmd->add_option("--mf", bound.mf, "Frobenius norm per layer")->delimiter(',');
  bound_cmd->add_option("--S", bound.s, "Number of features");
  bound_cmd->add_option("--T", bound.t, "Number of samples");
  bound_cmd->add_option("--L", bound.l, "Number of layers (default: count of --mf)");
  bound_cmd->add_option("--sum-tau", bound.sum_tau, "Sum of squared embedding row norms");
  bound_cmd->add_option("--snapshot", bound.snapshot, "Read norms from a model snapshot");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << "\n" << app.help();
    return kExitValidation;
  }

  try {
    if (gen->parsed()) return run_gen_data(common, no_header, out);
    if (train->parsed()) return run_train(common, snapshot, out);
    if (compare->parsed()) return run_compare(common, methods, out);
    if (sweep_alpha->parsed()) return run_sweep_alpha(common, grid, selection_epoch, param, out);
    if (sweep_filter->parsed()) return run_sweep_filter(common, feature, ratios, out);
    if (stats->parsed()) return run_stats(common, out);
    if (bound_cmd->parsed()) return run_bound(bound, out);
  } catch (const ValidationError& e) {
    err << "error[validation]: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error[runtime]: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << "error[usage]: no subcommand\n" << app.help();
  return kExitValidation;
}

}  // namespace adareg::cli

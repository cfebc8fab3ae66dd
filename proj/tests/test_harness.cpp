#include <gtest/gtest.h>

#include <limits>
#include <set>

#include "adareg/error.hpp"
#include "adareg/harness.hpp"
#include "test_util.hpp"

namespace adareg {
namespace {

using test::tiny_config;

TEST(Split, TimeOrderedAndValidationTail) {
  auto cfg = tiny_config();
  const Dataset full = load_dataset(cfg.data);
  auto d = prepare_data(cfg);
  EXPECT_EQ(d.train.num_samples(), 960u);
  EXPECT_EQ(d.test.num_samples(), 240u);
  EXPECT_EQ(d.train.columns[1][5], full.columns[1][5]);
  EXPECT_EQ(d.test.columns[1][0], full.columns[1][960]);
  EXPECT_FALSE(d.validation);
  cfg.selection.split = SelectionSplit::validation;
  d = prepare_data(cfg);
  ASSERT_TRUE(d.validation);
  EXPECT_EQ(d.validation->num_samples(), 96u);
  EXPECT_EQ(d.train.num_samples(), 864u);
  EXPECT_EQ(d.validation->columns[1][0], full.columns[1][864]);
}

TEST(Run, SingleEpochOneRecordAtEnd) {
  auto cfg = tiny_config();
  cfg.epochs = 1;
  cfg.eval_every = 0;
  const auto report = run_experiment(cfg);
  ASSERT_EQ(report.records.size(), 1u);
  EXPECT_EQ(report.records[0].split, "test");
  EXPECT_EQ(report.records[0].epoch, 1u);
  EXPECT_EQ(report.records[0].step, 15u);  // ceil(960 / 64)
  EXPECT_EQ(report.epochs.size(), 1u);
}

TEST(Run, EvalEveryAddsPointsWithoutDuplicatingEpochEnd) {
  auto cfg = tiny_config();
  cfg.eval_every = 5;
  cfg.eval_train = true;
  const auto report = run_experiment(cfg);
  std::vector<std::uint64_t> test_steps;
  for (const auto& r : report.records)
    if (r.split == "test") test_steps.push_back(r.step);
  EXPECT_EQ(test_steps, (std::vector<std::uint64_t>{5, 10, 15, 20, 25, 30}));
  EXPECT_EQ(report.records.size(), 12u);
  EXPECT_EQ(report.records[0].split, "train");
}

TEST(Run, DeterministicReports) {
  auto cfg = tiny_config();
  cfg.optimizer.family = Family::adam_ar;
  cfg.optimizer.alpha = 0.01;
  test::TempDir a("det"), b("det");
  cfg.output_dir = a.str();
  run_experiment(cfg);
  cfg.output_dir = b.str();
  run_experiment(cfg);
  for (const char* f : {"metrics.jsonl", "curves.csv", "feature_stats.csv"})
    EXPECT_EQ(test::read_file(a.path() / f), test::read_file(b.path() / f)) << f;
  // Only the output directory and the wall clock may differ.
  auto strip = [](std::string s) {
    auto j = nlohmann::json::parse(s);
    j.erase("wall_clock_seconds");
    if (j.contains("config")) j["config"].erase("output_dir");
    j.erase("output_dir");
    return j.dump();
  };
  EXPECT_EQ(strip(test::read_file(a.path() / "config.json")),
            strip(test::read_file(b.path() / "config.json")));
  EXPECT_EQ(strip(test::read_file(a.path() / "report.json")),
            strip(test::read_file(b.path() / "report.json")));
}

TEST(Run, OutputFilesAndCurvesHeader) {
  auto cfg = tiny_config();
  cfg.step_diagnostics = true;
  test::TempDir dir("out");
  cfg.output_dir = dir.str();
  const auto report = run_experiment(cfg);
  for (const char* f : {"metrics.jsonl", "curves.csv", "report.json", "config.json",
                        "feature_stats.csv", "step_diagnostics.jsonl"})
    EXPECT_TRUE(std::filesystem::exists(dir.path() / f)) << f;
  const std::string curves = test::read_file(dir.path() / "curves.csv");
  EXPECT_EQ(curves.substr(0, curves.find('\n')), kCurvesCsvHeader);
  EXPECT_EQ(report.step_diagnostics.size(), 30u);
  const auto j = nlohmann::json::parse(test::read_file(dir.path() / "report.json"));
  EXPECT_EQ(j["epochs"].size(), 2u);
  EXPECT_EQ(nlohmann::json::parse(test::read_file(dir.path() / "config.json")), nlohmann::json::parse(to_json(cfg).dump()));
}

TEST(Run, BoundUsesSameNormsAsRecords) {
  const auto cfg = tiny_config();
  const auto data = prepare_data(cfg);
  const auto result = train_model(cfg, data);
  const auto& last = result.report.epochs.back();
  EXPECT_EQ(last.emb_sq_sum, result.report.records.back().emb_sq_sum);
  EXPECT_EQ(last.rademacher_bound, rademacher_bound(bound_inputs(result.model, data.train.num_samples())));
}

TEST(Run, TestOnlyIdsAreNeverTouched) {
  auto cfg = tiny_config();
  cfg.data.synthetic.features[1] = {5000, 0.3, 0.5};
  const auto data = prepare_data(cfg);
  std::set<FeatureId> train_ids(data.train.columns[1].begin(), data.train.columns[1].end());
  std::vector<FeatureId> test_only;
  for (auto id : data.test.columns[1])
    if (!train_ids.count(id)) test_only.push_back(id);
  ASSERT_FALSE(test_only.empty());
  const auto result = train_model(cfg, data);
  for (auto id : test_only) {
    EXPECT_EQ(result.model.tables[1].touch_count[id], 0u);
    EXPECT_EQ(result.model.tables[1].row(id)[0], 0.0);
  }
}

TEST(Run, MedaResetsExactlyAtEpochStarts) {
  auto cfg = tiny_config();
  cfg.epochs = 3;
  cfg.optimizer.meda_enabled = true;
  const auto data = prepare_data(cfg);
  std::vector<std::uint64_t> starts;
  MlpParams mlp_at_end_of_epoch;
  const std::uint64_t steps_per_epoch = 15;
  RunHooks hooks;
  hooks.on_step = [&](std::uint64_t step, const Model& m, const StepDiagnostics&) {
    if (step % steps_per_epoch == 0) mlp_at_end_of_epoch = m.mlp;
  };
  hooks.on_epoch_start = [&](std::uint64_t epoch, const Model& m, const OptimizerState&) {
    starts.push_back(epoch);
    if (epoch == 1) return;
    for (const auto& t : m.tables) {
      for (double v : t.values) ASSERT_EQ(v, 0.0);
      for (double v : t.moment1) ASSERT_EQ(v, 0.0);
      for (double v : t.moment2) ASSERT_EQ(v, 0.0);
      for (auto s : t.last_update) ASSERT_EQ(s, 0u);
    }
    ASSERT_EQ(m.mlp.weights.size(), mlp_at_end_of_epoch.weights.size());
    for (std::size_t l = 0; l < m.mlp.weights.size(); ++l)
      ASSERT_EQ(m.mlp.weights[l].data, mlp_at_end_of_epoch.weights[l].data);
  };
  train_model(cfg, data, hooks);
  EXPECT_EQ(starts, (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(Run, PlainAdamNormsGrowAfterFirstEpoch) {
  auto cfg = tiny_config();
  cfg.epochs = 4;
  cfg.eval_every = 5;
  const auto report = run_experiment(cfg);
  double prev = -1.0;
  for (const auto& r : report.records) {
    if (r.split != "test" || r.epoch < 2) continue;
    EXPECT_GE(r.emb_sq_sum, prev);
    prev = r.emb_sq_sum;
  }
}

TEST(Run, NonFiniteLossAborts) {
  auto cfg = tiny_config();
  cfg.optimizer.learning_rate = std::numeric_limits<double>::max();
  EXPECT_THROW(run_experiment(cfg), RuntimeFailure);
}

TEST(Compare, ShapeDuplicatesAndBest) {
  const auto cfg = tiny_config();
  OptimizerConfig adam = cfg.optimizer;
  OptimizerConfig ar = cfg.optimizer;
  ar.family = Family::adam_ar;
  ar.alpha = 0.05;
  const auto table = compare_methods(cfg, {{"adam", adam}, {"adam_ar", ar}, {"adam_again", adam}});
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_EQ(table.rows[0].auc.size(), 2u);
  EXPECT_EQ(table.rows[0].auc, table.rows[2].auc);
  EXPECT_EQ(table.rows[0].final_emb_sq_sum, table.rows[2].final_emb_sq_sum);
  for (std::size_t e = 0; e < 2; ++e)
    for (const auto& r : table.rows) EXPECT_LE(r.auc[e], table.rows[table.best_row[e]].auc[e]);
  const std::string md = table.to_markdown();
  EXPECT_NE(md.find("| adam_ar |"), std::string::npos);
  EXPECT_NE(md.find("**"), std::string::npos);
  EXPECT_THROW(compare_methods(cfg, {{"adam", adam}}), ValidationError);
}

TEST(Grid, DefaultGridAndSingleton) {
  EXPECT_EQ(default_alpha_grid(), (std::vector<double>{1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1}));
  auto cfg = tiny_config();
  cfg.epochs = 1;
  cfg.optimizer.family = Family::adam_ar;
  const auto r = grid_search_alpha(cfg, {0.003}, 1);
  EXPECT_EQ(r.best_value, 0.003);
  EXPECT_THROW(grid_search_alpha(cfg, {}, 1), ValidationError);
  EXPECT_THROW(grid_search_alpha(cfg, {1.0}, 1), ValidationError);
  EXPECT_THROW(grid_search_alpha(cfg, {0.1}, 2), ValidationError);
}

TEST(Grid, ZeroAlphaRowEqualsPlainRun) {
  auto cfg = tiny_config();
  cfg.optimizer.family = Family::adam_ar;
  const auto grid = grid_search_alpha(cfg, {0.05, 0.0}, 2);
  ASSERT_EQ(grid.rows.front().value, 0.0);
  auto plain = cfg;
  plain.optimizer.family = Family::adam;
  const auto report = run_experiment(plain);
  EXPECT_EQ(grid.rows.front().auc, (std::vector<double>{report.epochs[0].test_auc, report.epochs[1].test_auc}));
  EXPECT_EQ(grid.rows.front().final_emb_sq_sum, report.epochs.back().emb_sq_sum);
}

TEST(Grid, TiesGoToSmallerValue) {
  // weight_decay on plain Adam is ignored, so every row ties.
  auto cfg = tiny_config();
  cfg.epochs = 1;
  const auto r = grid_search(cfg, {0.3, 0.1, 0.2}, 1, GridParameter::weight_decay);
  EXPECT_EQ(r.best_value, 0.1);
  EXPECT_EQ(r.rows.size(), 3u);
}

TEST(Grid, ValidationSplitSelection) {
  auto cfg = tiny_config();
  cfg.selection.split = SelectionSplit::validation;
  cfg.optimizer.family = Family::adam_ar;
  const auto data = prepare_data(cfg);
  const auto result = train_model(cfg, data);
  ASSERT_TRUE(result.report.epochs[0].validation_auc);
  EXPECT_EQ(result.report.selection_auc(1), *result.report.epochs[0].validation_auc);
  bool saw_validation = false;
  for (const auto& r : result.report.records) saw_validation |= r.split == "validation";
  EXPECT_TRUE(saw_validation);
}

TEST(Filter, RatioOneMatchesUnfilteredRun) {
  auto cfg = tiny_config();
  const auto plain = run_experiment(cfg);
  const auto sweep = filter_ratio_sweep(cfg, 1, {1.0, 0.5, 0.0});
  ASSERT_EQ(sweep.rows.size(), 3u);
  EXPECT_EQ(sweep.rows[0].auc[0], plain.epochs[0].test_auc);
  EXPECT_EQ(sweep.rows[0].auc[1], plain.epochs[1].test_auc);
  EXPECT_EQ(sweep.rows[0].final_emb_sq_sum, plain.epochs.back().emb_sq_sum);
  EXPECT_EQ(sweep.rows[2].kept_ids, 0u);
  EXPECT_LT(sweep.rows[2].final_feature_sq_sum, sweep.rows[0].final_feature_sq_sum);
  EXPECT_THROW(filter_ratio_sweep(cfg, 5, {0.5}), ValidationError);
  EXPECT_THROW(filter_ratio_sweep(cfg, 1, {1.5}), ValidationError);
  const std::string csv = sweep.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "ratio,kept_ids,final_emb_sq_sum,final_emb_l2_sum,final_feature_sq_sum,auc_e1,auc_e2");
}

TEST(Filter, SmallerRatioSmallerFeatureNorm) {
  auto cfg = tiny_config();
  cfg.epochs = 3;
  const auto sweep = filter_ratio_sweep(cfg, 1, {1.0, 0.5, 0.1, 0.0});
  for (std::size_t i = 1; i < sweep.rows.size(); ++i)
    EXPECT_LT(sweep.rows[i].final_feature_sq_sum, sweep.rows[i - 1].final_feature_sq_sum)
        << "ratio " << sweep.rows[i].ratio;
}

TEST(Csv, ExperimentFromCsvSource) {
  test::TempDir dir("csvrun");
  auto cfg = tiny_config();
  save_csv(load_dataset(cfg.data), dir.path() / "d.csv");
  auto csv_cfg = cfg;
  csv_cfg.data.source = DataSource::csv;
  csv_cfg.data.csv_path = dir.str("d.csv");
  const auto r = run_experiment(csv_cfg);
  EXPECT_EQ(r.epochs.size(), 2u);
  EXPECT_GT(r.epochs.back().test_auc, 0.5);
}

}  // namespace
}  // namespace adareg

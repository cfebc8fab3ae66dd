#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adareg/dataset.hpp"
#include "adareg/model.hpp"
#include "adareg/optim.hpp"

namespace adareg {

enum class DataSource { synthetic, csv };
enum class SelectionSplit { test, validation };

struct FilterConfig {
  std::size_t feature_index = 0;
  double ratio = 1.0;
};

struct DataConfig {
  DataSource source = DataSource::synthetic;
  SynthSpec synthetic;
  std::string csv_path;
  bool has_header = true;
  std::optional<FilterConfig> filter;
};

struct ArchSettings {
  std::vector<std::size_t> hidden_layers{64, 32};
  std::size_t embedding_dim = 32;
  std::vector<std::size_t> embedding_dims;  // overrides embedding_dim when non-empty
  bool use_bias = false;

  ArchConfig resolve(std::size_t num_features) const;
};

struct Seeds {
  std::uint64_t init = 1;
  std::uint64_t shuffle = 2;
};

struct SelectionConfig {
  SelectionSplit split = SelectionSplit::test;
  double validation_fraction = 0.1;  // tail of the training range
};

// Defaults follow the reference protocol: B = 2048, d = 32, 4 epochs,
// Adam at 1e-3.
struct ExperimentConfig {
  DataConfig data;
  double split_fraction = 0.8;
  ArchSettings arch;
  OptimizerConfig optimizer;
  std::size_t epochs = 4;
  std::size_t batch_size = 2048;
  std::uint64_t eval_every = 0;  // 0: evaluate only at epoch ends
  std::size_t eval_batch_size = 4096;
  bool eval_train = false;
  bool step_diagnostics = false;
  Seeds seeds;
  SelectionConfig selection;
  std::string output_dir;

  void validate() const;
};

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
nlohmann::ordered_json to_json(const OptimizerConfig& cfg);
// Strict: unknown keys and wrong types throw ValidationError naming the key.
// Missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
OptimizerConfig optimizer_from_json(const nlohmann::json& j,
                                    const OptimizerConfig& base = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies "dotted.path=value" overrides. The key must already exist in the
// fully resolved config and the value must parse as that key's type.
ExperimentConfig apply_overrides(const ExperimentConfig& cfg,
                                 const std::vector<std::string>& overrides);

}  // namespace adareg

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "adareg/config.hpp"
#include "adareg/dataset.hpp"
#include "adareg/random.hpp"

namespace adareg::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("adareg_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& leaf = {}) const {
    return leaf.empty() ? path_.string() : (path_ / leaf).string();
  }

 private:
  static std::uint64_t& counter() {
    static std::uint64_t c = 0;
    return c;
  }
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Small, fast experiment used by harness and CLI tests.
inline ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.data.synthetic.num_samples = 1200;
  cfg.data.synthetic.features = {{8, 1.0, 1.0}, {300, 1.1, 0.5}};
  cfg.data.synthetic.teacher_seed = 3;
  cfg.data.synthetic.data_seed = 4;
  cfg.arch.hidden_layers = {8};
  cfg.arch.embedding_dim = 4;
  cfg.optimizer.learning_rate = 0.01;
  cfg.epochs = 2;
  cfg.batch_size = 64;
  cfg.eval_batch_size = 256;
  return cfg;
}

inline Dataset random_dataset(std::uint64_t seed, std::size_t n,
                              const std::vector<std::uint32_t>& cards) {
  SplitMix64 rng(seed);
  Dataset ds;
  ds.feature_cards = cards;
  ds.labels.resize(n);
  ds.columns.assign(cards.size(), std::vector<FeatureId>(n));
  for (std::size_t t = 0; t < n; ++t) {
    ds.labels[t] = static_cast<std::uint8_t>(rng.below(2));
    for (std::size_t i = 0; i < cards.size(); ++i)
      ds.columns[i][t] = static_cast<FeatureId>(rng.below(cards[i]));
  }
  return ds;
}

}  // namespace adareg::test

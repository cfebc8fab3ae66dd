#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adareg {

using FeatureId = std::uint32_t;

struct FeatureSpec {
  std::uint32_t cardinality = 1;
  double zipf_exponent = 0.0;  // 0 = uniform
  // Standard deviation of the teacher's per-ID logit contribution.
  double teacher_scale = 1.0;
};

struct SynthSpec {
  std::size_t num_samples = 1;
  std::vector<FeatureSpec> features;
  double label_noise = 0.0;
  double teacher_bias = 0.0;
  std::uint64_t teacher_seed = 0;
  std::uint64_t data_seed = 0;

  // Throws ValidationError naming the offending field.
  void validate() const;
};

// Written by filter_by_frequency so a run can say which vocabulary it saw.
struct RemapNote {
  std::size_t feature_index = 0;
  std::uint32_t original_cardinality = 0;
  std::uint32_t default_id = 0;
  double ratio = 1.0;
  std::size_t unique_ids = 0;
  std::size_t kept_ids = 0;
};

// Column-major sample store. Immutable once built; share by const reference.
struct Dataset {
  std::vector<std::uint8_t> labels;
  std::vector<std::vector<FeatureId>> columns;
  std::vector<std::uint32_t> feature_cards;
  std::vector<RemapNote> remaps;

  std::size_t num_samples() const noexcept { return labels.size(); }
  std::size_t num_features() const noexcept { return columns.size(); }

  // Rows [begin, end), keeping cardinalities and remap notes.
  Dataset slice(std::size_t begin, std::size_t end) const;

  // Checks column lengths, label domain, and ID bounds.
  void validate() const;

  bool operator==(const Dataset& other) const {
    return labels == other.labels && columns == other.columns &&
           feature_cards == other.feature_cards;
  }
};

struct Batch {
  std::vector<std::uint8_t> labels;
  std::vector<std::vector<FeatureId>> ids;  // ids[feature][sample]

  std::size_t size() const noexcept { return labels.size(); }
};

// Zipf-weighted categorical columns with labels from a hidden logistic
// teacher over per-ID random scores. Deterministic in (spec, seeds).
Dataset generate_synthetic(const SynthSpec& spec);

// Normalized Zipf probabilities p(k) ∝ (k+1)^-s over k in [0, cardinality).
std::vector<double> zipf_pmf(std::uint32_t cardinality, double exponent);

// Rows `label,f0,...,f{S-1}`; optional header; LF or CRLF.
// feature_cards are per-column (max ID + 1).
Dataset load_csv(const std::filesystem::path& path, bool has_header);
void save_csv(const Dataset& ds, const std::filesystem::path& path,
              bool write_header = true);

// Keeps the ceil(r * U) most frequent IDs of one feature (ties -> smaller
// ID first) and maps every other occurrence to a fresh default ID equal to
// the original cardinality. The feature's cardinality grows by one.
Dataset filter_by_frequency(const Dataset& ds, std::size_t feature_index,
                            double ratio);

// Order in which rows are visited for one epoch.
std::vector<std::size_t> epoch_order(std::size_t num_samples,
                                     std::optional<std::uint64_t> shuffle_seed,
                                     std::uint64_t epoch);

Batch gather_batch(const Dataset& ds, std::span<const std::size_t> rows);

// Slices the (optionally permuted) dataset into consecutive batches.
// The final partial batch is kept.
std::vector<Batch> batch_iter(const Dataset& ds, std::size_t batch_size,
                              std::optional<std::uint64_t> shuffle_seed,
                              std::uint64_t epoch);

}  // namespace adareg

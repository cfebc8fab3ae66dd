#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "adareg/dataset.hpp"
#include "adareg/model.hpp"

namespace adareg {

// Mann-Whitney AUC via average ranks, ties credited 1/2. O(n log n).
// Throws ValidationError when either class is missing.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Mean binary cross-entropy of logits against labels.
double logloss(std::span<const double> logits, std::span<const std::uint8_t> labels);

struct NormSummary {
  double l2_sum = 0.0;  // sum_ij ||e_ij||
  double sq_sum = 0.0;  // sum_ij ||e_ij||^2
  std::vector<double> l2_per_feature;
  std::vector<double> sq_per_feature;
};

NormSummary embedding_norms(std::span<const EmbeddingTable> tables);

struct FeatureStat {
  std::size_t feature_index = 0;
  std::size_t unique_ids = 0;
  double mean_occurrences = 0.0;
  double mean_update_interval = 0.0;
};
using FeatureStats = std::vector<FeatureStat>;

// Replays the unshuffled batch stream. Each touch of an ID at step k with
// previous touch s (0 before the first) contributes k - s - 1; an ID
// repeated inside one batch counts once.
FeatureStats feature_stats(const Dataset& ds, std::size_t batch_size);

// Mean update interval for one ID touched at the given 1-based steps.
double mean_interval(std::span<const std::uint64_t> touch_steps);

void write_feature_stats_csv(const FeatureStats& stats, std::ostream& out);

struct BoundInputs {
  std::vector<double> frobenius_norms;  // M_F(l), one per layer
  double sum_tau = 0.0;                 // sum of squared embedding row norms
  std::size_t num_features = 0;         // S
  std::size_t num_samples = 0;          // T
  std::size_t num_layers = 0;           // L
};

// prod(M_F) * sqrt(S) / sqrt(T) * sqrt(sum_tau) * (sqrt(2 ln 2 * L) + 1)
double rademacher_bound(const BoundInputs& in);

double frobenius_norm(const Matrix& m);

// Bound inputs taken from a model: M_F from its weights, sum_tau from
// embedding_norms (the same routine that feeds the eval records).
BoundInputs bound_inputs(const Model& model, std::size_t num_samples);

struct EvalRecord {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::string split = "test";
  double auc = 0.0;
  double logloss = 0.0;
  double emb_l2_sum = 0.0;
  double emb_sq_sum = 0.0;
};

// One JSON object, keys in the fixed order epoch, step, split, auc, logloss,
// emb_l2_sum, emb_sq_sum.
std::string to_jsonl(const EvalRecord& r);
std::string to_csv_row(const EvalRecord& r);
inline constexpr const char* kCurvesCsvHeader =
    "epoch,step,split,auc,logloss,emb_l2_sum,emb_sq_sum";

}  // namespace adareg

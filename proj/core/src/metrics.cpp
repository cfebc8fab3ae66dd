#include "adareg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "adareg/error.hpp"

namespace adareg {

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw ValidationError("auc: scores and labels differ in length");
  std::size_t positives = 0;
  for (auto y : labels) {
    if (y > 1) throw ValidationError("auc: label outside {0,1}");
    positives += y;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0)
    throw ValidationError("auc: undefined without both classes");
  for (double s : scores)
    if (std::isnan(s)) throw ValidationError("auc: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are doubled so tied groups get integral average ranks; every sum
  // below is an exact integer in double precision for n < 2^26.
  double twice_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_avg_rank = static_cast<double>(i + 1 + j);  // 2 * (i+1 + j) / 2
    std::size_t group_pos = 0;
    for (std::size_t t = i; t < j; ++t) group_pos += labels[order[t]];
    twice_rank_sum += twice_avg_rank * static_cast<double>(group_pos);
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double twice_u = twice_rank_sum - p * (p + 1.0);
  return twice_u / (2.0 * p * static_cast<double>(negatives));
}

double logloss(std::span<const double> logits, std::span<const std::uint8_t> labels) {
  if (logits.size() != labels.size())
    throw ValidationError("logloss: logits and labels differ in length");
  if (logits.empty()) throw ValidationError("logloss: empty input");
  double total = 0.0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const double z = logits[t];
    total += std::max(z, 0.0) - z * labels[t] + std::log1p(std::exp(-std::abs(z)));
  }
  return total / static_cast<double>(logits.size());
}

NormSummary embedding_norms(std::span<const EmbeddingTable> tables) {
  NormSummary s;
  for (const auto& t : tables) {
    double l2 = 0.0;
    double sq = 0.0;
    for (std::size_t j = 0; j < t.num_rows; ++j) {
      double row_sq = 0.0;
      for (double x : t.row(j)) row_sq += x * x;
      sq += row_sq;
      l2 += std::sqrt(row_sq);
    }
    s.l2_per_feature.push_back(l2);
    s.sq_per_feature.push_back(sq);
    s.l2_sum += l2;
    s.sq_sum += sq;
  }
  return s;
}

double mean_interval(std::span<const std::uint64_t> touch_steps) {
  if (touch_steps.empty()) return 0.0;
  std::uint64_t prev = 0;
  double total = 0.0;
  for (std::uint64_t k : touch_steps) {
    if (k <= prev) throw ValidationError("mean_interval: steps must be strictly increasing and >= 1");
    total += static_cast<double>(k - prev - 1);
    prev = k;
  }
  return total / static_cast<double>(touch_steps.size());
}

FeatureStats feature_stats(const Dataset& ds, std::size_t batch_size) {
  if (batch_size == 0) throw ValidationError("feature_stats: batch_size must be >= 1");
  if (ds.num_samples() == 0) throw ValidationError("feature_stats: empty dataset");
  FeatureStats out;
  const std::size_t n = ds.num_samples();
  for (std::size_t i = 0; i < ds.num_features(); ++i) {
    const auto& col = ds.columns[i];
    std::vector<std::uint64_t> last(ds.feature_cards[i], 0);
    std::size_t unique = 0;
    std::size_t touches = 0;
    double interval_sum = 0.0;
    std::uint64_t step = 0;
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
      ++step;
      const std::size_t end = std::min(n, begin + batch_size);
      for (std::size_t t = begin; t < end; ++t) {
        const FeatureId id = col[t];
        if (last[id] == step) continue;
        if (last[id] == 0) ++unique;
        interval_sum += static_cast<double>(step - last[id] - 1);
        ++touches;
        last[id] = step;
      }
    }
    FeatureStat fs;
    fs.feature_index = i;
    fs.unique_ids = unique;
    fs.mean_occurrences = static_cast<double>(n) / static_cast<double>(unique);
    fs.mean_update_interval = interval_sum / static_cast<double>(touches);
    out.push_back(fs);
  }
  return out;
}

void write_feature_stats_csv(const FeatureStats& stats, std::ostream& out) {
  out << "feature_index,unique_ids,mean_occurrences,mean_update_interval\n";
  for (const auto& s : stats) {
    out << s.feature_index << ',' << s.unique_ids << ','
        << nlohmann::json(s.mean_occurrences).dump() << ','
        << nlohmann::json(s.mean_update_interval).dump() << '\n';
  }
}

double rademacher_bound(const BoundInputs& in) {
  if (in.num_samples == 0) throw ValidationError("bound: T must be positive");
  if (in.num_features == 0) throw ValidationError("bound: S must be positive");
  if (in.num_layers == 0) throw ValidationError("bound: L must be positive");
  if (in.frobenius_norms.size() != in.num_layers)
    throw ValidationError("bound: need one Frobenius norm per layer");
  if (!(in.sum_tau >= 0.0)) throw ValidationError("bound: sum_tau must be >= 0");
  double prod = 1.0;
  for (double m : in.frobenius_norms) {
    if (!(m > 0.0)) throw ValidationError("bound: Frobenius norms must be positive");
    prod *= m;
  }
  const double s = static_cast<double>(in.num_features);
  const double t = static_cast<double>(in.num_samples);
  const double l = static_cast<double>(in.num_layers);
  return prod * std::sqrt(s) / std::sqrt(t) * std::sqrt(in.sum_tau) *
         (std::sqrt(2.0 * std::log(2.0) * l) + 1.0);
}

double frobenius_norm(const Matrix& m) {
  double sq = 0.0;
  for (double x : m.data) sq += x * x;
  return std::sqrt(sq);
}

BoundInputs bound_inputs(const Model& model, std::size_t num_samples) {
  BoundInputs in;
  for (const auto& w : model.mlp.weights) in.frobenius_norms.push_back(frobenius_norm(w));
  in.sum_tau = embedding_norms(model.tables).sq_sum;
  in.num_features = model.tables.size();
  in.num_samples = num_samples;
  in.num_layers = model.mlp.weights.size();
  return in;
}

std::string to_jsonl(const EvalRecord& r) {
  // ordered_json keeps the documented key order.
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["split"] = r.split;
  j["auc"] = r.auc;
  j["logloss"] = r.logloss;
  j["emb_l2_sum"] = r.emb_l2_sum;
  j["emb_sq_sum"] = r.emb_sq_sum;
  return j.dump();
}

std::string to_csv_row(const EvalRecord& r) {
  using nlohmann::json;
  return std::to_string(r.epoch) + ',' + std::to_string(r.step) + ',' + r.split + ',' +
         json(r.auc).dump() + ',' + json(r.logloss).dump() + ',' + json(r.emb_l2_sum).dump() +
         ',' + json(r.emb_sq_sum).dump();
}

}  // namespace adareg

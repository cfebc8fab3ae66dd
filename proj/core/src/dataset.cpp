#include "adareg/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>

#include "adareg/error.hpp"
#include "adareg/random.hpp"

namespace adareg {
namespace {

// Stream tags keep the independent random sources apart.
constexpr std::uint64_t kTeacherStream = 0x7465616368ULL;
constexpr std::uint64_t kFeatureStream = 0x66656174ULL;
constexpr std::uint64_t kLabelStream = 0x6c6162656cULL;
constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

[[noreturn]] void csv_error(const std::filesystem::path& path, std::size_t line,
                            const std::string& what) {
  throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

void SynthSpec::validate() const {
  if (num_samples < 1) throw ValidationError("num_samples: must be >= 1");
  if (features.empty()) throw ValidationError("features: must be non-empty");
  if (!(label_noise >= 0.0 && label_noise <= 1.0))
    throw ValidationError("label_noise: must lie in [0, 1]");
  if (!std::isfinite(teacher_bias)) throw ValidationError("teacher_bias: must be finite");
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    const std::string where = "features[" + std::to_string(i) + "].";
    if (f.cardinality < 1) throw ValidationError(where + "cardinality: must be >= 1");
    if (!(f.zipf_exponent >= 0.0) || !std::isfinite(f.zipf_exponent))
      throw ValidationError(where + "zipf_exponent: must be finite and >= 0");
    if (!(f.teacher_scale >= 0.0) || !std::isfinite(f.teacher_scale))
      throw ValidationError(where + "teacher_scale: must be finite and >= 0");
  }
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > num_samples())
    throw ValidationError("slice: range out of bounds");
  Dataset out;
  out.labels.assign(labels.begin() + begin, labels.begin() + end);
  out.columns.reserve(columns.size());
  for (const auto& col : columns) out.columns.emplace_back(col.begin() + begin, col.begin() + end);
  out.feature_cards = feature_cards;
  out.remaps = remaps;
  return out;
}

void Dataset::validate() const {
  if (columns.size() != feature_cards.size())
    throw ValidationError("dataset: column count differs from feature_cards");
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].size() != labels.size())
      throw ValidationError("dataset: column " + std::to_string(i) + " length mismatch");
    for (FeatureId id : columns[i])
      if (id >= feature_cards[i])
        throw ValidationError("dataset: feature " + std::to_string(i) + " id " +
                              std::to_string(id) + " >= cardinality");
  }
  for (auto y : labels)
    if (y > 1) throw ValidationError("dataset: label outside {0,1}");
}

std::vector<double> zipf_pmf(std::uint32_t cardinality, double exponent) {
  std::vector<double> pmf(cardinality);
  double total = 0.0;
  for (std::uint32_t k = 0; k < cardinality; ++k) {
    pmf[k] = std::pow(static_cast<double>(k) + 1.0, -exponent);
    total += pmf[k];
  }
  for (double& p : pmf) p /= total;
  return pmf;
}

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.num_samples;
  const std::size_t s = spec.features.size();

  Dataset ds;
  ds.labels.resize(n);
  ds.columns.assign(s, std::vector<FeatureId>(n));
  ds.feature_cards.reserve(s);

  std::vector<std::vector<double>> teacher(s);
  for (std::size_t i = 0; i < s; ++i) {
    const auto& f = spec.features[i];
    ds.feature_cards.push_back(f.cardinality);

    auto cdf = zipf_pmf(f.cardinality, f.zipf_exponent);
    std::partial_sum(cdf.begin(), cdf.end(), cdf.begin());
    cdf.back() = 1.0;

    auto& col = ds.columns[i];
    for (std::size_t t = 0; t < n; ++t) {
      const double u = counter_uniform(spec.data_seed, kFeatureStream + i, t);
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      col[t] = static_cast<FeatureId>(std::min<std::ptrdiff_t>(
          it - cdf.begin(), static_cast<std::ptrdiff_t>(f.cardinality) - 1));
    }

    teacher[i].resize(f.cardinality);
    for (std::uint32_t j = 0; j < f.cardinality; ++j)
      teacher[i][j] = f.teacher_scale * counter_normal(spec.teacher_seed, kTeacherStream + i, j);
  }

  for (std::size_t t = 0; t < n; ++t) {
    double logit = spec.teacher_bias;
    for (std::size_t i = 0; i < s; ++i) logit += teacher[i][ds.columns[i][t]];
    std::uint8_t y = counter_uniform(spec.data_seed, kLabelStream, t) < sigmoid(logit) ? 1 : 0;
    if (counter_uniform(spec.data_seed, kNoiseStream, t) < spec.label_noise) y ^= 1;
    ds.labels[t] = y;
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");

  Dataset ds;
  std::string raw;
  std::size_t line_no = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> max_id;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim_cr(raw);
    if (line_no == 1 && line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF")
      line.remove_prefix(3);
    if (has_header && line_no == 1) continue;
    if (line.empty()) continue;

    std::vector<std::uint64_t> fields;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string_view tok =
          line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
      std::uint64_t value = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
      if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size())
        csv_error(path, line_no, "malformed field '" + std::string(tok) + "'");
      fields.push_back(value);
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (fields.size() < 2) csv_error(path, line_no, "expected label and at least one feature");
    if (width == 0) {
      width = fields.size();
      ds.columns.resize(width - 1);
      max_id.assign(width - 1, 0);
    } else if (fields.size() != width) {
      csv_error(path, line_no, "expected " + std::to_string(width) + " fields, got " +
                                   std::to_string(fields.size()));
    }
    if (fields[0] > 1) csv_error(path, line_no, "label must be 0 or 1");
    ds.labels.push_back(static_cast<std::uint8_t>(fields[0]));
    for (std::size_t i = 1; i < width; ++i) {
      if (fields[i] >= UINT32_MAX) csv_error(path, line_no, "id out of range");
      const auto id = static_cast<FeatureId>(fields[i]);
      ds.columns[i - 1].push_back(id);
      max_id[i - 1] = std::max(max_id[i - 1], id);
    }
  }
  if (ds.labels.empty()) throw ValidationError(path.string() + ": no data rows");
  for (auto m : max_id) ds.feature_cards.push_back(m + 1);
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path, bool write_header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure(path.string() + ": cannot open for writing");
  if (write_header) {
    out << "label";
    for (std::size_t i = 0; i < ds.num_features(); ++i) out << ",f" << i;
    out << '\n';
  }
  for (std::size_t t = 0; t < ds.num_samples(); ++t) {
    out << static_cast<int>(ds.labels[t]);
    for (const auto& col : ds.columns) out << ',' << col[t];
    out << '\n';
  }
  if (!out) throw RuntimeFailure(path.string() + ": write failed");
}

Dataset filter_by_frequency(const Dataset& ds, std::size_t feature_index, double ratio) {
  if (feature_index >= ds.num_features())
    throw ValidationError("filter: feature_index " + std::to_string(feature_index) +
                          " out of range (S=" + std::to_string(ds.num_features()) + ")");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ValidationError("filter: ratio must lie in [0, 1]");

  const auto& col = ds.columns[feature_index];
  const std::uint32_t card = ds.feature_cards[feature_index];
  std::vector<std::size_t> freq(card, 0);
  for (FeatureId id : col) ++freq[id];

  std::vector<FeatureId> present;
  for (FeatureId id = 0; id < card; ++id)
    if (freq[id] > 0) present.push_back(id);
  std::stable_sort(present.begin(), present.end(),
                   [&](FeatureId a, FeatureId b) { return freq[a] > freq[b]; });

  const std::size_t unique = present.size();
  // The small offset keeps e.g. 0.7 * 10 from rounding up to 8.
  const double want = std::ceil(ratio * static_cast<double>(unique) - 1e-9);
  const auto keep = static_cast<std::size_t>(std::clamp(want, 0.0, static_cast<double>(unique)));

  std::vector<bool> kept(card, false);
  for (std::size_t r = 0; r < keep; ++r) kept[present[r]] = true;

  Dataset out = ds;
  const FeatureId default_id = card;
  for (FeatureId& id : out.columns[feature_index])
    if (!kept[id]) id = default_id;
  out.feature_cards[feature_index] = card + 1;
  out.remaps.push_back({feature_index, card, default_id, ratio, unique, keep});
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t num_samples,
                                     std::optional<std::uint64_t> shuffle_seed,
                                     std::uint64_t epoch) {
  std::vector<std::size_t> order(num_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    SplitMix64 rng(mix_key(*shuffle_seed, kShuffleStream, epoch));
    for (std::size_t i = num_samples; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  return order;
}

Batch gather_batch(const Dataset& ds, std::span<const std::size_t> rows) {
  Batch b;
  b.labels.reserve(rows.size());
  for (std::size_t r : rows) b.labels.push_back(ds.labels[r]);
  b.ids.resize(ds.num_features());
  for (std::size_t i = 0; i < ds.num_features(); ++i) {
    b.ids[i].reserve(rows.size());
    for (std::size_t r : rows) b.ids[i].push_back(ds.columns[i][r]);
  }
  return b;
}

std::vector<Batch> batch_iter(const Dataset& ds, std::size_t batch_size,
                              std::optional<std::uint64_t> shuffle_seed, std::uint64_t epoch) {
  if (batch_size == 0) throw ValidationError("batch_size: must be >= 1");
  const auto order = epoch_order(ds.num_samples(), shuffle_seed, epoch);
  std::vector<Batch> batches;
  batches.reserve((order.size() + batch_size - 1) / batch_size);
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    batches.push_back(gather_batch(ds, std::span(order).subspan(begin, end - begin)));
  }
  return batches;
}

}  // namespace adareg

#include "adareg/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>

#include "adareg/error.hpp"
#include "adareg/random.hpp"

namespace adareg {

EmbeddingTable::EmbeddingTable(std::size_t rows, std::size_t d)
    : num_rows(rows),
      dim(d),
      values(rows * d, 0.0),
      moment1(rows * d, 0.0),
      moment2(rows * d, 0.0),
      last_update(rows, 0),
      touch_count(rows, 0) {}

void EmbeddingTable::reset() {
  std::fill(values.begin(), values.end(), 0.0);
  std::fill(moment1.begin(), moment1.end(), 0.0);
  std::fill(moment2.begin(), moment2.end(), 0.0);
  std::fill(last_update.begin(), last_update.end(), 0);
  std::fill(touch_count.begin(), touch_count.end(), 0);
}

std::size_t Model::embedded_dim() const noexcept {
  std::size_t d = 0;
  for (const auto& t : tables) d += t.dim;
  return d;
}

Model init_model(const ArchConfig& arch, std::span<const std::uint32_t> cardinalities,
                 std::uint64_t init_seed) {
  if (arch.embedding_dims.size() != cardinalities.size())
    throw ValidationError("arch: need one embedding dim per feature (got " +
                          std::to_string(arch.embedding_dims.size()) + " dims for " +
                          std::to_string(cardinalities.size()) + " features)");
  Model model;
  std::size_t input = 0;
  for (std::size_t i = 0; i < cardinalities.size(); ++i) {
    if (arch.embedding_dims[i] == 0)
      throw ValidationError("arch: embedding_dims[" + std::to_string(i) + "] must be >= 1");
    if (cardinalities[i] == 0)
      throw ValidationError("arch: cardinality of feature " + std::to_string(i) + " is 0");
    model.tables.emplace_back(cardinalities[i], arch.embedding_dims[i]);
    input += arch.embedding_dims[i];
  }
  if (input == 0) throw ValidationError("arch: model has no inputs");

  std::vector<std::size_t> widths{input};
  for (std::size_t h : arch.hidden_layers) {
    if (h == 0) throw ValidationError("arch: hidden layer width must be >= 1");
    widths.push_back(h);
  }
  widths.push_back(1);

  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    SplitMix64 rng(mix_key(init_seed, 0x696e6974ULL, l));
    for (double& x : w.data) x = (2.0 * rng.uniform() - 1.0) * bound;
    model.mlp.weights.push_back(std::move(w));
    if (arch.use_bias) model.mlp.biases.emplace_back(fan_out, 0.0);
  }
  return model;
}

Matrix embed_lookup(std::span<const EmbeddingTable> tables, const Batch& batch) {
  if (batch.ids.size() != tables.size())
    throw ValidationError("embed_lookup: batch has " + std::to_string(batch.ids.size()) +
                          " features, model has " + std::to_string(tables.size()));
  std::size_t width = 0;
  for (const auto& t : tables) width += t.dim;
  Matrix out(batch.size(), width);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto& table = tables[i];
    const auto& ids = batch.ids[i];
    if (ids.size() != batch.size())
      throw ValidationError("embed_lookup: feature " + std::to_string(i) + " length mismatch");
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (ids[t] >= table.num_rows)
        throw ValidationError("embed_lookup: feature " + std::to_string(i) + " row " +
                              std::to_string(ids[t]) + " out of range (N=" +
                              std::to_string(table.num_rows) + ")");
      const auto src = table.row(ids[t]);
      std::copy(src.begin(), src.end(), out.row(t).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += table.dim;
  }
  return out;
}

ForwardResult forward(const MlpParams& params, Matrix embedded) {
  if (params.weights.empty()) throw ValidationError("forward: no layers");
  if (embedded.cols != params.input_dim())
    throw ValidationError("forward: input width " + std::to_string(embedded.cols) +
                          " != layer-1 input dim " + std::to_string(params.input_dim()));
  const std::size_t batch = embedded.rows;
  const std::size_t layers = params.num_layers();

  ForwardResult result;
  auto& cache = result.cache;
  cache.input = std::move(embedded);
  cache.pre.reserve(layers);
  cache.post.reserve(layers - 1);

  const Matrix* in = &cache.input;
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& w = params.weights[l];
    if (w.cols != in->cols) throw ValidationError("forward: layer " + std::to_string(l) + " shape mismatch");
    Matrix z(batch, w.rows);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* x = in->data.data() + b * in->cols;
      for (std::size_t o = 0; o < w.rows; ++o) {
        const double* wr = w.data.data() + o * w.cols;
        double acc = params.has_bias() ? params.biases[l][o] : 0.0;
        for (std::size_t k = 0; k < w.cols; ++k) acc += wr[k] * x[k];
        z(b, o) = acc;
      }
    }
    cache.pre.push_back(std::move(z));
    if (l + 1 < layers) {
      Matrix a = cache.pre.back();
      for (double& v : a.data) v = v > 0.0 ? v : 0.0;
      cache.post.push_back(std::move(a));
      in = &cache.post.back();
    }
  }
  const Matrix& out = cache.pre.back();
  if (out.cols != 1) throw ValidationError("forward: last layer must have width 1");
  result.logits.assign(out.data.begin(), out.data.end());
  return result;
}

LossResult loss_bce(std::span<const double> logits, std::span<const std::uint8_t> labels) {
  if (logits.size() != labels.size())
    throw ValidationError("loss_bce: logits and labels differ in length");
  if (logits.empty()) throw ValidationError("loss_bce: empty batch");
  const double n = static_cast<double>(logits.size());
  LossResult r;
  r.dlogits.resize(logits.size());
  double total = 0.0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const double z = logits[t];
    const double y = labels[t];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    r.dlogits[t] = (p - y) / n;
  }
  r.loss = total / n;
  return r;
}

SparseGrads backward(const MlpParams& params, std::span<const EmbeddingTable> tables,
                     const Batch& batch, const ForwardCache& cache,
                     std::span<const double> dlogits) {
  const std::size_t n = batch.size();
  const std::size_t layers = params.num_layers();
  if (cache.input.rows != n || dlogits.size() != n || cache.pre.size() != layers ||
      batch.ids.size() != tables.size())
    throw ValidationError("backward: cache, batch and dlogits do not match");

  SparseGrads grads;
  grads.weights.reserve(layers);
  for (const auto& w : params.weights) grads.weights.emplace_back(w.rows, w.cols);
  if (params.has_bias())
    for (const auto& b : params.biases) grads.biases.emplace_back(b.size(), 0.0);

  Matrix delta(n, 1);
  std::copy(dlogits.begin(), dlogits.end(), delta.data.begin());

  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& w = params.weights[l];
    const Matrix& in = l == 0 ? cache.input : cache.post[l - 1];
    Matrix& gw = grads.weights[l];
    for (std::size_t b = 0; b < n; ++b) {
      const double* x = in.data.data() + b * in.cols;
      for (std::size_t o = 0; o < w.rows; ++o) {
        const double d = delta(b, o);
        if (d == 0.0) continue;
        double* g = gw.data.data() + o * gw.cols;
        for (std::size_t k = 0; k < w.cols; ++k) g[k] += d * x[k];
      }
    }
    if (params.has_bias())
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < w.rows; ++o) grads.biases[l][o] += delta(b, o);

    Matrix prev(n, w.cols);
    for (std::size_t b = 0; b < n; ++b) {
      double* p = prev.data.data() + b * prev.cols;
      for (std::size_t o = 0; o < w.rows; ++o) {
        const double d = delta(b, o);
        if (d == 0.0) continue;
        const double* wr = w.data.data() + o * w.cols;
        for (std::size_t k = 0; k < w.cols; ++k) p[k] += d * wr[k];
      }
    }
    if (l > 0) {
      // ReLU'(0) = 1: with zero-initialized embeddings every pre-activation
      // starts at exactly 0, and a zero subgradient would never let a
      // gradient reach the tables.
      const Matrix& z = cache.pre[l - 1];
      for (std::size_t idx = 0; idx < prev.data.size(); ++idx)
        if (z.data[idx] < 0.0) prev.data[idx] = 0.0;
    }
    delta = std::move(prev);
  }

  // delta now holds d(loss)/d(embedded input); scatter it into table rows.
  grads.tables.resize(tables.size());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const std::size_t d = tables[i].dim;
    RowGrads& rg = grads.tables[i];
    rg.dim = d;
    std::unordered_map<FeatureId, std::size_t> slot;
    slot.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
      const FeatureId id = batch.ids[i][t];
      auto [it, inserted] = slot.try_emplace(id, rg.rows.size());
      if (inserted) {
        rg.rows.push_back(id);
        rg.values.resize(rg.values.size() + d, 0.0);
      }
      double* g = rg.values.data() + it->second * d;
      const double* src = delta.data.data() + t * delta.cols + offset;
      for (std::size_t k = 0; k < d; ++k) g[k] += src[k];
    }
    offset += d;
  }
  return grads;
}

BatchGradient compute_gradients(const Model& model, const Batch& batch) {
  auto fwd = forward(model.mlp, embed_lookup(model.tables, batch));
  auto loss = loss_bce(fwd.logits, batch.labels);
  BatchGradient out;
  out.loss = loss.loss;
  out.grads = backward(model.mlp, model.tables, batch, fwd.cache, loss.dlogits);
  return out;
}

std::vector<double> predict_logits(const Model& model, const Dataset& ds, std::size_t chunk) {
  if (chunk == 0) chunk = 4096;
  std::vector<double> out;
  out.reserve(ds.num_samples());
  std::vector<std::size_t> rows;
  for (std::size_t begin = 0; begin < ds.num_samples(); begin += chunk) {
    const std::size_t end = std::min(ds.num_samples(), begin + chunk);
    rows.resize(end - begin);
    for (std::size_t r = begin; r < end; ++r) rows[r - begin] = r;
    const Batch b = gather_batch(ds, rows);
    auto fwd = forward(model.mlp, embed_lookup(model.tables, b));
    out.insert(out.end(), fwd.logits.begin(), fwd.logits.end());
  }
  return out;
}

namespace {

constexpr std::array<char, 8> kMagic{'A', 'D', 'R', 'G', 'S', 'N', 'P', '1'};
constexpr std::uint32_t kSnapshotVersion = 1;

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw ValidationError("snapshot: truncated file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

void put_doubles(std::ostream& out, std::span<const double> xs) {
  for (double x : xs) put_le(out, std::bit_cast<std::uint64_t>(x));
}

std::vector<double> get_doubles(std::istream& in, std::uint64_t n) {
  std::vector<double> xs(n);
  for (auto& x : xs) x = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return xs;
}

}  // namespace

void write_snapshot(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure(path.string() + ": cannot open for writing");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kSnapshotVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.tables.size()));
  for (const auto& t : model.tables) {
    put_le<std::uint64_t>(out, t.num_rows);
    put_le<std::uint64_t>(out, t.dim);
    put_doubles(out, t.values);
  }
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.mlp.weights.size()));
  for (const auto& w : model.mlp.weights) {
    put_le<std::uint64_t>(out, w.rows);
    put_le<std::uint64_t>(out, w.cols);
    put_doubles(out, w.data);
  }
  put_le<std::uint8_t>(out, model.mlp.has_bias() ? 1 : 0);
  for (const auto& b : model.mlp.biases) {
    put_le<std::uint64_t>(out, b.size());
    put_doubles(out, b);
  }
  if (!out) throw RuntimeFailure(path.string() + ": write failed");
}

Model read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ValidationError(path.string() + ": not a snapshot");
  if (get_le<std::uint32_t>(in) != kSnapshotVersion)
    throw ValidationError(path.string() + ": unsupported snapshot version");

  Model model;
  const auto tables = get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < tables; ++i) {
    const auto rows = get_le<std::uint64_t>(in);
    const auto dim = get_le<std::uint64_t>(in);
    EmbeddingTable t(rows, dim);
    t.values = get_doubles(in, rows * dim);
    model.tables.push_back(std::move(t));
  }
  const auto layers = get_le<std::uint32_t>(in);
  for (std::uint32_t l = 0; l < layers; ++l) {
    Matrix w;
    w.rows = get_le<std::uint64_t>(in);
    w.cols = get_le<std::uint64_t>(in);
    w.data = get_doubles(in, w.rows * w.cols);
    model.mlp.weights.push_back(std::move(w));
  }
  if (get_le<std::uint8_t>(in) != 0)
    for (std::uint32_t l = 0; l < layers; ++l)
      model.mlp.biases.push_back(get_doubles(in, get_le<std::uint64_t>(in)));
  return model;
}

}  // namespace adareg

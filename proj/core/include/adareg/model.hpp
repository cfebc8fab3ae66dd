#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "adareg/dataset.hpp"

namespace adareg {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) noexcept { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

// One categorical feature: the N x d table plus the per-row state the sparse
// optimizers need. Moments hold (m, v) for Adam families; Adagrad keeps its
// accumulator in moment2 and leaves moment1 at zero.
struct EmbeddingTable {
  std::size_t num_rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<double> moment1;
  std::vector<double> moment2;
  std::vector<std::uint64_t> last_update;  // LVS; 0 = never
  std::vector<std::uint64_t> touch_count;

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t rows, std::size_t d);

  std::span<double> row(std::size_t j) noexcept { return {values.data() + j * dim, dim}; }
  std::span<const double> row(std::size_t j) const noexcept {
    return {values.data() + j * dim, dim};
  }

  // Zeroes values, moments, LVS and touch counts.
  void reset();
};

struct MlpParams {
  std::vector<Matrix> weights;              // W_l is (out_l x in_l)
  std::vector<std::vector<double>> biases;  // empty when biases are disabled

  bool has_bias() const noexcept { return !biases.empty(); }
  std::size_t num_layers() const noexcept { return weights.size(); }
  std::size_t input_dim() const noexcept { return weights.empty() ? 0 : weights.front().cols; }
};

struct Model {
  std::vector<EmbeddingTable> tables;
  MlpParams mlp;

  std::size_t embedded_dim() const noexcept;
};

struct ArchConfig {
  std::vector<std::size_t> hidden_layers;    // output layer of width 1 is implicit
  std::vector<std::size_t> embedding_dims;   // one per feature
  bool use_bias = false;
};

// Zero embeddings; Glorot-uniform MLP weights from init_seed; zero biases.
Model init_model(const ArchConfig& arch, std::span<const std::uint32_t> cardinalities,
                 std::uint64_t init_seed);

// Row t is the concatenation over features of tables[i].row(batch.ids[i][t]).
Matrix embed_lookup(std::span<const EmbeddingTable> tables, const Batch& batch);

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activation of each layer
  std::vector<Matrix> post;  // ReLU output of each hidden layer
};

struct ForwardResult {
  std::vector<double> logits;
  ForwardCache cache;
};

ForwardResult forward(const MlpParams& params, Matrix embedded);

struct LossResult {
  double loss = 0.0;
  std::vector<double> dlogits;  // d(mean loss)/d(logit)
};

// Mean binary cross-entropy on logits, in the overflow-free form.
LossResult loss_bce(std::span<const double> logits, std::span<const std::uint8_t> labels);

// Gradient rows for one feature, in first-appearance order within the batch.
struct RowGrads {
  std::size_t dim = 0;
  std::vector<FeatureId> rows;
  std::vector<double> values;  // rows.size() x dim

  std::span<const double> grad(std::size_t k) const noexcept {
    return {values.data() + k * dim, dim};
  }
};

struct SparseGrads {
  std::vector<RowGrads> tables;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

SparseGrads backward(const MlpParams& params, std::span<const EmbeddingTable> tables,
                     const Batch& batch, const ForwardCache& cache,
                     std::span<const double> dlogits);

// Convenience: lookup + forward + loss + backward for one batch.
struct BatchGradient {
  double loss = 0.0;
  SparseGrads grads;
};
BatchGradient compute_gradients(const Model& model, const Batch& batch);

// Logits for every row of a dataset, evaluated in chunks.
std::vector<double> predict_logits(const Model& model, const Dataset& ds,
                                   std::size_t chunk = 4096);

// Little-endian snapshot: "ADRGSNP1", u32 version, u32 table count, per table
// (u64 rows, u64 dim, f64 payload), u32 layer count, per layer (u64 rows,
// u64 cols, f64 payload), u8 bias flag, then per layer (u64 n, f64 payload).
void write_snapshot(const Model& model, const std::filesystem::path& path);
Model read_snapshot(const std::filesystem::path& path);

}  // namespace adareg

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adareg/model.hpp"

namespace adareg {

enum class Family { adam, adamw, adam_ar, adagrad, adagradw, adagrad_ar };

// lazy: a sparse row is processed only at steps where its ID is in the batch.
// dense_faithful: every row is processed every step, untouched rows with g = 0.
enum class UpdateMode { lazy, dense_faithful };

std::string_view to_string(Family f) noexcept;
std::string_view to_string(UpdateMode m) noexcept;
std::optional<Family> parse_family(std::string_view name) noexcept;
std::optional<UpdateMode> parse_update_mode(std::string_view name) noexcept;

constexpr bool uses_adam(Family f) noexcept {
  return f == Family::adam || f == Family::adamw || f == Family::adam_ar;
}
constexpr bool uses_adaptive_decay(Family f) noexcept {
  return f == Family::adam_ar || f == Family::adagrad_ar;
}
constexpr bool uses_constant_decay(Family f) noexcept {
  return f == Family::adamw || f == Family::adagradw;
}

struct OptimizerConfig {
  Family family = Family::adam;
  double learning_rate = 0.001;
  double alpha = 0.0;         // adaptive families only
  double weight_decay = 0.0;  // adamw / adagradw only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool meda_enabled = false;
  UpdateMode update_mode = UpdateMode::lazy;

  void validate() const;
};

// Adaptive decoupled decay strength min(1, alpha * (k - s_prev - 1)).
// Throws ValidationError when s_prev >= k.
double lambda_adaptive(std::uint64_t k, std::uint64_t s_prev, double alpha);

// The epoch-boundary interval under which adaptive decay reduces to
// reinitialization: 1/alpha when k*B is a multiple of T, else 0.
double meda_schedule_interval(std::uint64_t k, std::uint64_t batch_size,
                              std::uint64_t num_samples, double alpha);

// Optimizer state for one dense parameter block. Adagrad keeps its
// accumulator in moment2.
struct DenseSlot {
  std::vector<double> moment1;
  std::vector<double> moment2;
  std::uint64_t touch_count = 0;
};

struct OptimizerState {
  std::uint64_t step = 0;  // global k
  std::vector<DenseSlot> weights;
  std::vector<DenseSlot> biases;
};

OptimizerState init_optimizer_state(const MlpParams& params);

// One parameter-block update, reported to an observer when one is attached.
// For embedding rows `feature` is the table index; dense blocks use
// kDenseWeight / kDenseBias with `row` set to the layer index.
struct UpdateEvent {
  static constexpr std::ptrdiff_t kDenseWeight = -1;
  static constexpr std::ptrdiff_t kDenseBias = -2;

  std::ptrdiff_t feature = 0;
  std::size_t row = 0;
  bool touched = true;
  std::uint64_t interval = 0;
  double decay = 0.0;
  std::span<const double> before;
  std::span<const double> after;
  std::span<const double> step;  // the gradient term eta * update
};
using UpdateObserver = std::function<void(const UpdateEvent&)>;

struct StepDiagnostics {
  std::uint64_t step = 0;
  std::size_t touched_rows = 0;
  std::uint64_t max_interval = 0;
  double decay_mass = 0.0;  // sum over rows of ||decay * theta_old||
  // decay == 0, (0, .25], (.25, .5], (.5, .75], (.75, 1), == 1
  std::array<std::size_t, 6> lambda_histogram{};
};

// Each step function expects k == state.step + 1, applies the update and sets
// state.step = k. Gradients are checked for finiteness before anything is
// written; a non-finite entry throws RuntimeFailure and leaves state intact.
StepDiagnostics adam_ar_step(Model& model, OptimizerState& state, const SparseGrads& grads,
                             std::uint64_t k, const OptimizerConfig& config,
                             const UpdateObserver& observer = {});
StepDiagnostics adagrad_ar_step(Model& model, OptimizerState& state, const SparseGrads& grads,
                                std::uint64_t k, const OptimizerConfig& config,
                                const UpdateObserver& observer = {});
// adam / adamw / adagrad / adagradw.
StepDiagnostics baseline_step(Model& model, OptimizerState& state, const SparseGrads& grads,
                              std::uint64_t k, const OptimizerConfig& config,
                              const UpdateObserver& observer = {});

// Increments the global step and dispatches on config.family.
StepDiagnostics optimizer_step(Model& model, OptimizerState& state, const SparseGrads& grads,
                               const OptimizerConfig& config,
                               const UpdateObserver& observer = {});

// Resets every embedding row, its moments, LVS and touch count to zero.
// MLP parameters and their optimizer state are left alone.
void meda_reinit(std::span<EmbeddingTable> tables);

}  // namespace adareg

#include "adareg/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "adareg/error.hpp"

namespace adareg {
namespace {

constexpr std::array<std::pair<Family, std::string_view>, 6> kFamilyNames{{
    {Family::adam, "adam"},
    {Family::adamw, "adamw"},
    {Family::adam_ar, "adam_ar"},
    {Family::adagrad, "adagrad"},
    {Family::adagradw, "adagradw"},
    {Family::adagrad_ar, "adagrad_ar"},
}};

std::size_t histogram_bucket(double lambda) {
  if (lambda <= 0.0) return 0;
  if (lambda >= 1.0) return 5;
  if (lambda <= 0.25) return 1;
  if (lambda <= 0.5) return 2;
  if (lambda <= 0.75) return 3;
  return 4;
}

// Element-wise update of one parameter block. `grad` empty means g = 0.
// Decay and gradient term both read theta from before the step.
class BlockKernel {
 public:
  explicit BlockKernel(const OptimizerConfig& config)
      : config_(config), adam_(uses_adam(config.family)) {}

  void apply(std::span<double> theta, std::span<double> m, std::span<double> v,
             std::span<const double> grad, double decay, std::uint64_t count,
             std::span<double> step_out) const {
    const double lr = config_.learning_rate;
    const double eps = config_.epsilon;
    if (adam_) {
      const double b1 = config_.beta1;
      const double b2 = config_.beta2;
      const double c = static_cast<double>(count);
      const double bc1 = 1.0 - std::pow(b1, c);
      const double bc2 = 1.0 - std::pow(b2, c);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad.empty() ? 0.0 : grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        const double u = lr * m_hat / (std::sqrt(v_hat) + eps);
        if (!step_out.empty()) step_out[i] = u;
        theta[i] = theta[i] - decay * theta[i] - u;
      }
    } else {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad.empty() ? 0.0 : grad[i];
        v[i] = v[i] + g * g;
        const double u = lr * g / (std::sqrt(v[i]) + eps);
        if (!step_out.empty()) step_out[i] = u;
        theta[i] = theta[i] - decay * theta[i] - u;
      }
    }
  }

 private:
  const OptimizerConfig& config_;
  bool adam_;
};

void check_finite(std::span<const double> xs, const std::string& where) {
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!std::isfinite(xs[i]))
      throw RuntimeFailure("non-finite gradient at " + where + " entry " + std::to_string(i) +
                           " (value " + std::to_string(xs[i]) + ")");
}

void check_gradients(const Model& model, const SparseGrads& grads) {
  if (grads.tables.size() != model.tables.size())
    throw ValidationError("optimizer: gradient has " + std::to_string(grads.tables.size()) +
                          " tables, model has " + std::to_string(model.tables.size()));
  if (grads.weights.size() != model.mlp.weights.size() ||
      grads.biases.size() != model.mlp.biases.size())
    throw ValidationError("optimizer: dense gradient count mismatch");
  for (std::size_t i = 0; i < grads.tables.size(); ++i) {
    const auto& rg = grads.tables[i];
    const auto& table = model.tables[i];
    if (rg.dim != table.dim || rg.values.size() != rg.rows.size() * rg.dim)
      throw ValidationError("optimizer: table " + std::to_string(i) + " gradient shape mismatch");
    for (std::size_t k = 0; k < rg.rows.size(); ++k) {
      if (rg.rows[k] >= table.num_rows)
        throw ValidationError("optimizer: table " + std::to_string(i) + " row " +
                              std::to_string(rg.rows[k]) + " out of range");
      check_finite(rg.grad(k), "table " + std::to_string(i) + " row " + std::to_string(rg.rows[k]));
    }
  }
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    const auto& g = grads.weights[l];
    const auto& w = model.mlp.weights[l];
    if (g.rows != w.rows || g.cols != w.cols)
      throw ValidationError("optimizer: layer " + std::to_string(l) + " gradient shape mismatch");
    check_finite(g.data, "layer " + std::to_string(l) + " weight");
  }
  for (std::size_t l = 0; l < grads.biases.size(); ++l) {
    if (grads.biases[l].size() != model.mlp.biases[l].size())
      throw ValidationError("optimizer: layer " + std::to_string(l) + " bias shape mismatch");
    check_finite(grads.biases[l], "layer " + std::to_string(l) + " bias");
  }
}

enum class DecayRule { none, constant, adaptive };

DecayRule decay_rule(Family f) {
  if (uses_adaptive_decay(f)) return DecayRule::adaptive;
  if (uses_constant_decay(f)) return DecayRule::constant;
  return DecayRule::none;
}

double row_decay(DecayRule rule, const OptimizerConfig& config, std::uint64_t k,
                 std::uint64_t s_prev) {
  switch (rule) {
    case DecayRule::adaptive:
      return lambda_adaptive(k, s_prev, config.alpha);
    case DecayRule::constant:
      return config.weight_decay;
    case DecayRule::none:
      break;
  }
  return 0.0;
}

StepDiagnostics apply_step(Model& model, OptimizerState& state, const SparseGrads& grads,
                           std::uint64_t k, const OptimizerConfig& config,
                           const UpdateObserver& observer) {
  config.validate();
  if (k != state.step + 1)
    throw ValidationError("optimizer: step " + std::to_string(k) + " does not follow " +
                          std::to_string(state.step));
  if (state.weights.size() != model.mlp.weights.size() ||
      state.biases.size() != model.mlp.biases.size())
    throw ValidationError("optimizer: state does not match model");
  check_gradients(model, grads);

  const BlockKernel kernel(config);
  const DecayRule rule = decay_rule(config.family);
  const bool dense_faithful = config.update_mode == UpdateMode::dense_faithful;
  StepDiagnostics diag;
  diag.step = k;

  std::vector<double> before;
  std::vector<double> step_term;

  auto emit = [&](std::ptrdiff_t feature, std::size_t row, bool touched, std::uint64_t interval,
                  double decay, std::span<const double> after) {
    UpdateEvent ev;
    ev.feature = feature;
    ev.row = row;
    ev.touched = touched;
    ev.interval = interval;
    ev.decay = decay;
    ev.before = before;
    ev.after = after;
    ev.step = step_term;
    observer(ev);
  };

  auto update_row = [&](std::size_t feature, EmbeddingTable& table, std::size_t row,
                        std::span<const double> grad, bool touched) {
    const std::uint64_t s_prev = table.last_update[row];
    const std::uint64_t interval = k - s_prev - 1;
    const double decay = row_decay(rule, config, k, s_prev);
    std::uint64_t count = k;
    if (touched) {
      count = ++table.touch_count[row];
      table.last_update[row] = k;
      if (dense_faithful) count = k;
    }
    const std::size_t off = row * table.dim;
    auto theta = std::span(table.values).subspan(off, table.dim);

    double theta_norm = 0.0;
    for (double x : theta) theta_norm += x * x;
    diag.decay_mass += decay * std::sqrt(theta_norm);
    diag.max_interval = std::max(diag.max_interval, interval);
    ++diag.lambda_histogram[histogram_bucket(decay)];
    if (touched) ++diag.touched_rows;

    if (observer) {
      before.assign(theta.begin(), theta.end());
      step_term.assign(table.dim, 0.0);
    }
    kernel.apply(theta, std::span(table.moment1).subspan(off, table.dim),
                 std::span(table.moment2).subspan(off, table.dim), grad, decay, count,
                 observer ? std::span<double>(step_term) : std::span<double>());
    if (observer) emit(static_cast<std::ptrdiff_t>(feature), row, touched, interval, decay, theta);
  };

  for (std::size_t i = 0; i < model.tables.size(); ++i) {
    EmbeddingTable& table = model.tables[i];
    const RowGrads& rg = grads.tables[i];
    if (!dense_faithful) {
      for (std::size_t r = 0; r < rg.rows.size(); ++r)
        update_row(i, table, rg.rows[r], rg.grad(r), true);
    } else {
      std::vector<std::ptrdiff_t> slot(table.num_rows, -1);
      for (std::size_t r = 0; r < rg.rows.size(); ++r)
        slot[rg.rows[r]] = static_cast<std::ptrdiff_t>(r);
      for (std::size_t row = 0; row < table.num_rows; ++row) {
        if (slot[row] >= 0)
          update_row(i, table, row, rg.grad(static_cast<std::size_t>(slot[row])), true);
        else
          update_row(i, table, row, {}, false);
      }
    }
  }

  // Dense blocks are touched every step, so their LVS is always k - 1.
  auto update_dense = [&](std::ptrdiff_t tag, std::size_t layer, DenseSlot& slot,
                          std::span<double> theta, std::span<const double> grad) {
    if (slot.moment1.size() != theta.size() || slot.moment2.size() != theta.size())
      throw ValidationError("optimizer: dense state shape mismatch at layer " + std::to_string(layer));
    const double decay = row_decay(rule, config, k, k - 1);
    std::uint64_t count = ++slot.touch_count;
    if (dense_faithful) count = k;
    if (observer) {
      before.assign(theta.begin(), theta.end());
      step_term.assign(theta.size(), 0.0);
    }
    kernel.apply(theta, slot.moment1, slot.moment2, grad, decay, count,
                 observer ? std::span<double>(step_term) : std::span<double>());
    if (observer) emit(tag, layer, true, 0, decay, theta);
  };

  for (std::size_t l = 0; l < model.mlp.weights.size(); ++l)
    update_dense(UpdateEvent::kDenseWeight, l, state.weights[l], model.mlp.weights[l].data,
                 grads.weights[l].data);
  for (std::size_t l = 0; l < model.mlp.biases.size(); ++l)
    update_dense(UpdateEvent::kDenseBias, l, state.biases[l], model.mlp.biases[l],
                 grads.biases[l]);

  state.step = k;
  return diag;
}

}  // namespace

std::string_view to_string(Family f) noexcept {
  for (const auto& [family, name] : kFamilyNames)
    if (family == f) return name;
  return "unknown";
}

std::string_view to_string(UpdateMode m) noexcept {
  return m == UpdateMode::lazy ? "lazy" : "dense_faithful";
}

std::optional<Family> parse_family(std::string_view name) noexcept {
  for (const auto& [family, n] : kFamilyNames)
    if (n == name) return family;
  return std::nullopt;
}

std::optional<UpdateMode> parse_update_mode(std::string_view name) noexcept {
  if (name == "lazy") return UpdateMode::lazy;
  if (name == "dense_faithful") return UpdateMode::dense_faithful;
  return std::nullopt;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("optimizer.learning_rate: must be a positive finite number");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("optimizer.alpha: must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw ValidationError("optimizer.weight_decay: must be finite and >= 0");
  if (uses_adam(family)) {
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("optimizer.beta1: must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("optimizer.beta2: must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ValidationError("optimizer.epsilon: must be > 0");
}

double lambda_adaptive(std::uint64_t k, std::uint64_t s_prev, double alpha) {
  if (k < 1) throw ValidationError("lambda_adaptive: step must be >= 1");
  if (s_prev >= k)
    throw ValidationError("lambda_adaptive: last update step " + std::to_string(s_prev) +
                          " is not before step " + std::to_string(k));
  const auto interval = static_cast<double>(k - s_prev - 1);
  return std::min(1.0, alpha * interval);
}

double meda_schedule_interval(std::uint64_t k, std::uint64_t batch_size,
                              std::uint64_t num_samples, double alpha) {
  if (batch_size == 0 || num_samples == 0 || !(alpha > 0.0))
    throw ValidationError("meda_schedule_interval: need B >= 1, T >= 1, alpha > 0");
  if ((k * batch_size) % num_samples == 0) return 1.0 / alpha;
  return 0.0;
}

OptimizerState init_optimizer_state(const MlpParams& params) {
  OptimizerState state;
  for (const auto& w : params.weights)
    state.weights.push_back({std::vector<double>(w.data.size(), 0.0),
                             std::vector<double>(w.data.size(), 0.0), 0});
  for (const auto& b : params.biases)
    state.biases.push_back({std::vector<double>(b.size(), 0.0), std::vector<double>(b.size(), 0.0), 0});
  return state;
}

StepDiagnostics adam_ar_step(Model& model, OptimizerState& state, const SparseGrads& grads,
                             std::uint64_t k, const OptimizerConfig& config,
                             const UpdateObserver& observer) {
  if (config.family != Family::adam_ar)
    throw ValidationError("adam_ar_step: optimizer.family must be adam_ar");
  return apply_step(model, state, grads, k, config, observer);
}

StepDiagnostics adagrad_ar_step(Model& model, OptimizerState& state, const SparseGrads& grads,
                                std::uint64_t k, const OptimizerConfig& config,
                                const UpdateObserver& observer) {
  if (config.family != Family::adagrad_ar)
    throw ValidationError("adagrad_ar_step: optimizer.family must be adagrad_ar");
  return apply_step(model, state, grads, k, config, observer);
}

StepDiagnostics baseline_step(Model& model, OptimizerState& state, const SparseGrads& grads,
                              std::uint64_t k, const OptimizerConfig& config,
                              const UpdateObserver& observer) {
  if (uses_adaptive_decay(config.family))
    throw ValidationError("baseline_step: family must be adam, adamw, adagrad or adagradw");
  return apply_step(model, state, grads, k, config, observer);
}

StepDiagnostics optimizer_step(Model& model, OptimizerState& state, const SparseGrads& grads,
                               const OptimizerConfig& config, const UpdateObserver& observer) {
  const std::uint64_t k = state.step + 1;
  switch (config.family) {
    case Family::adam_ar:
      return adam_ar_step(model, state, grads, k, config, observer);
    case Family::adagrad_ar:
      return adagrad_ar_step(model, state, grads, k, config, observer);
    default:
      return baseline_step(model, state, grads, k, config, observer);
  }
}

void meda_reinit(std::span<EmbeddingTable> tables) {
  for (auto& t : tables) t.reset();
}

}  // namespace adareg

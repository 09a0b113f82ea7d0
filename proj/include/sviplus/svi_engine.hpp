#pragma once

// Batch VI, SVI and SVI+ updates for conjugate-exponential-family models.
//
// One iteration of SVI+ at batch size |S| and effective batch size M:
//   1. sample |S| distinct indices uniformly (all of them, in order, when |S| = N);
//   2. draw eps_n ~ N(0, |S|/M - 1) and form weights w_n = 1 + eps_n - mean(eps);
//   3. grad = (N/|S|) sum_n w_n E_q[t(theta_n)];
//   4. lambda <- project((1 - rho) lambda + rho (eta + grad)).
// With M = |S| no noise is drawn and the weights are exactly one, which is SVI;
// with |S| = N and rho = 1 it is a batch VI sweep.

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "sviplus/expfam.hpp"
#include "sviplus/model.hpp"
#include "sviplus/rng.hpp"

namespace sviplus::svi {

// --------------------------------------------------------------- schedules

struct ConstantStep {
  double rho = 1.0;
};
/// rho_t = (tau0 + t)^(-kappa)
struct PowerDecayStep {
  double tau0 = 1.0;
  double kappa = 0.7;
};
using StepSchedule = std::variant<ConstantStep, PowerDecayStep>;

/// Throws ContractError when the schedule violates its invariants.
void validate(const StepSchedule& schedule);
/// t is 1-based.
double step_size(std::size_t t, const StepSchedule& schedule);

struct ConstantM {
  std::size_t m = 1;
};
/// M_t = min(slope * t, cap)
struct LinearRampM {
  std::size_t slope = 50;
  std::size_t cap = SIZE_MAX;
};
using EffectiveBatchSchedule = std::variant<ConstantM, LinearRampM>;

void validate(const EffectiveBatchSchedule& schedule);
/// Schedule value at 1-based t, clamped to [1, batch_size].
std::size_t effective_m(std::size_t t, const EffectiveBatchSchedule& schedule, std::size_t batch_size);

// ------------------------------------------------------------------ noise

/// (|S| - M) / (M |S|): the added variance multiplier, so that 1/M = alpha + 1/|S|.
double alpha(std::size_t actual_batch, std::size_t effective_batch);

struct NoiseWeights {
  std::vector<double> weights;  // 1 + eps_n - eps_bar
  std::vector<double> eps;      // raw draws; empty when M = |S|
  double eps_mean = 0.0;
  double sigma2 = 0.0;          // |S|/M - 1
};

/// Draws the per-datum annealing multipliers. When M equals the batch size no
/// values are taken from rng and every weight is exactly 1.
NoiseWeights draw_noise_weights(std::size_t batch_size, std::size_t m, Rng& rng);

/// Uniform sample of distinct indices in [0, n), ascending. The full range
/// is returned without touching rng when batch_size == n.
std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch_size, Rng& rng);

// --------------------------------------------------------------- gradients

/// Fixed-order weighted reduction sum_n w_n s_n into a dense vector.
class GradientAccumulator {
 public:
  explicit GradientAccumulator(std::size_t length) : acc_(length, 0.0) {}
  void add(double weight, std::span<const double> dense);
  void add(double weight, std::span<const std::uint32_t> index, std::span<const double> values);
  void add(double weight, const Contribution& c);
  void scale(double factor);
  std::span<const double> values() const { return acc_; }

 private:
  std::vector<double> acc_;
};

/// (N/|S|) sum_n w_n stats_n.
expfam::SuffStat svi_plus_gradient(std::span<const expfam::SuffStat> stats, const NoiseWeights& weights,
                                   std::size_t n_total);

/// Same gradient written as the unweighted SVI gradient plus centered
/// statistics times the raw draws: (N/|S|) [sum_n s_n + sum_n (s_n - mean_s) eps_n].
expfam::SuffStat svi_plus_gradient_centered(std::span<const expfam::SuffStat> stats, std::span<const double> eps,
                                            std::size_t n_total);

// ----------------------------------------------------------------- updates

struct UpdateState {
  expfam::NaturalParam lambda;
  expfam::NaturalParam eta;
  std::size_t t = 0;
  std::size_t n = 1;
};

/// lambda <- project((1 - rho) lambda + rho (eta + grad)), t <- t + 1.
UpdateState apply_update(const UpdateState& state, const expfam::SuffStat& grad, double rho,
                         const expfam::DomainFloor& floor = {});

/// The blend-and-project step shared by apply_update and the engine.
expfam::NaturalParam blend_update(const expfam::NaturalParam& lambda, const expfam::NaturalParam& eta,
                                  std::span<const double> grad, double rho, const expfam::DomainFloor& floor,
                                  std::size_t iteration);

// ------------------------------------------------------------------ engine

struct EngineOptions {
  std::size_t batch_size = 0;  // 0 means the full dataset
  StepSchedule step = ConstantStep{1.0};
  EffectiveBatchSchedule effective = ConstantM{SIZE_MAX};
  std::uint64_t seed = 0;
  unsigned threads = 1;
  expfam::DomainFloor floor{};
};

struct IterationInfo {
  std::size_t t = 0;
  std::size_t batch_size = 0;
  std::size_t m = 0;
  double rho = 0.0;
};

/// Per-datum local statistics for a batch, computed in parallel when threads > 1.
std::vector<LocalStats> compute_local_stats(const Model& model, const LocalContext& ctx, std::size_t phase,
                                            std::span<const std::size_t> batch, unsigned threads);

/// Per-global gradients (N/|S|) sum_n w_n s_{n,g}, reduced in batch order.
/// Entry g is empty when no datum contributed to global g.
std::vector<std::vector<double>> reduce_gradients(const ModelState& state, std::span<const LocalStats> stats,
                                                  const NoiseWeights& weights, std::size_t n_total);

class Engine {
 public:
  Engine(const Model& model, ModelState initial, EngineOptions options);

  /// One SVI+ iteration (SVI when M = |S|, batch VI when |S| = N and rho = 1).
  IterationInfo step();

  const ModelState& state() const { return state_; }
  std::size_t iteration() const { return t_; }
  const EngineOptions& options() const { return options_; }

 private:
  const Model& model_;
  ModelState state_;
  EngineOptions options_;
  std::size_t t_ = 0;
};

}  // namespace sviplus::svi

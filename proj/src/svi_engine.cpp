#include "sviplus/svi_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <iterator>
#include <string>

#include "sviplus/error.hpp"
#include "sviplus/kernels.hpp"
#include "sviplus/parallel.hpp"

namespace sviplus::svi {

// --------------------------------------------------------------- schedules

void validate(const StepSchedule& schedule) {
  if (const auto* c = std::get_if<ConstantStep>(&schedule)) {
    if (!(c->rho > 0.0 && c->rho <= 1.0)) throw ContractError("constant step size must lie in (0, 1]");
  } else {
    const auto& p = std::get<PowerDecayStep>(schedule);
    if (!(p.tau0 >= 0.0)) throw ContractError("power-decay tau0 must be >= 0");
    if (!(p.kappa > 0.5 && p.kappa <= 1.0)) throw ContractError("power-decay kappa must lie in (0.5, 1]");
  }
}

double step_size(std::size_t t, const StepSchedule& schedule) {
  if (t < 1) throw ContractError("step_size: t is 1-based");
  if (const auto* c = std::get_if<ConstantStep>(&schedule)) return c->rho;
  const auto& p = std::get<PowerDecayStep>(schedule);
  return std::pow(p.tau0 + static_cast<double>(t), -p.kappa);
}

void validate(const EffectiveBatchSchedule& schedule) {
  if (const auto* c = std::get_if<ConstantM>(&schedule)) {
    if (c->m < 1) throw ContractError("effective batch size M must be >= 1");
  } else {
    const auto& r = std::get<LinearRampM>(schedule);
    if (r.slope < 1) throw ContractError("M ramp slope must be >= 1");
    if (r.cap < 1) throw ContractError("M ramp cap must be >= 1");
  }
}

std::size_t effective_m(std::size_t t, const EffectiveBatchSchedule& schedule, std::size_t batch_size) {
  if (t < 1) throw ContractError("effective_m: t is 1-based");
  std::size_t m = 0;
  if (const auto* c = std::get_if<ConstantM>(&schedule)) {
    m = c->m;
  } else {
    const auto& r = std::get<LinearRampM>(schedule);
    // slope * t saturates instead of wrapping.
    m = t > r.cap / r.slope ? r.cap : std::min(r.slope * t, r.cap);
  }
  return std::clamp<std::size_t>(m, 1, std::max<std::size_t>(batch_size, 1));
}

// ------------------------------------------------------------------ noise

double alpha(std::size_t actual_batch, std::size_t effective_batch) {
  if (effective_batch < 1 || effective_batch > actual_batch)
    throw ContractError("alpha: need 1 <= M <= |S| (M=" + std::to_string(effective_batch) +
                        ", |S|=" + std::to_string(actual_batch) + ")");
  const auto s = static_cast<double>(actual_batch);
  const auto m = static_cast<double>(effective_batch);
  return (s - m) / (m * s);
}

NoiseWeights draw_noise_weights(std::size_t batch_size, std::size_t m, Rng& rng) {
  if (m < 1 || m > batch_size)
    throw ContractError("draw_noise_weights: need 1 <= M <= |S| (M=" + std::to_string(m) +
                        ", |S|=" + std::to_string(batch_size) + ")");
  NoiseWeights out;
  out.weights.assign(batch_size, 1.0);
  if (m == batch_size) return out;

  out.sigma2 = static_cast<double>(batch_size) / static_cast<double>(m) - 1.0;
  std::normal_distribution<double> normal(0.0, std::sqrt(out.sigma2));
  out.eps.resize(batch_size);
  for (double& e : out.eps) e = normal(rng);
  out.eps_mean = std::accumulate(out.eps.begin(), out.eps.end(), 0.0) / static_cast<double>(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) out.weights[i] = 1.0 + (out.eps[i] - out.eps_mean);
  return out;
}

std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size < 1 || batch_size > n)
    throw ContractError("sample_batch: need 1 <= batch_size <= N (batch_size=" + std::to_string(batch_size) +
                        ", N=" + std::to_string(n) + ")");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  if (batch_size == n) {
    out.resize(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  // Selection sampling: uniform without replacement, output already ascending.
  std::vector<std::size_t> population(n);
  std::iota(population.begin(), population.end(), std::size_t{0});
  std::sample(population.begin(), population.end(), std::back_inserter(out), batch_size, rng);
  return out;
}

// --------------------------------------------------------------- gradients

namespace {

void add_dense(std::span<double> acc, double weight, std::span<const double> dense) {
  if (dense.size() != acc.size()) throw ContractError("gradient accumulator: layout length mismatch");
  kernels::active().axpy(weight, dense.data(), acc.data(), dense.size());
}

void add_sparse(std::span<double> acc, double weight, std::span<const std::uint32_t> index,
                std::span<const double> values) {
  if (index.size() != values.size()) throw ContractError("gradient accumulator: index/value length mismatch");
  for (std::uint32_t i : index)
    if (i >= acc.size()) throw ContractError("gradient accumulator: index out of range");
  kernels::active().scatter_axpy(weight, values.data(), index.data(), acc.data(), values.size());
}

void add_contribution(std::span<double> acc, double weight, const Contribution& c) {
  if (c.index.empty())
    add_dense(acc, weight, c.values);
  else
    add_sparse(acc, weight, c.index, c.values);
}

}  // namespace

void GradientAccumulator::add(double weight, std::span<const double> dense) { add_dense(acc_, weight, dense); }

void GradientAccumulator::add(double weight, std::span<const std::uint32_t> index, std::span<const double> values) {
  add_sparse(acc_, weight, index, values);
}

void GradientAccumulator::add(double weight, const Contribution& c) { add_contribution(acc_, weight, c); }

void GradientAccumulator::scale(double factor) { kernels::active().scale(factor, acc_.data(), acc_.size()); }

namespace {

void check_batch(std::span<const expfam::SuffStat> stats, std::size_t weights) {
  if (stats.empty()) throw ContractError("svi_plus_gradient: empty batch");
  if (weights != stats.size())
    throw ContractError("svi_plus_gradient: " + std::to_string(weights) + " weights for " +
                        std::to_string(stats.size()) + " statistics");
  for (const auto& s : stats)
    if (!(s.family == stats.front().family) || static_cast<std::size_t>(s.values.size()) != s.family.length())
      throw ContractError("svi_plus_gradient: statistics do not share one layout");
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

expfam::SuffStat svi_plus_gradient(std::span<const expfam::SuffStat> stats, const NoiseWeights& weights,
                                   std::size_t n_total) {
  check_batch(stats, weights.weights.size());
  const expfam::Family family = stats.front().family;
  GradientAccumulator acc(family.length());
  for (std::size_t i = 0; i < stats.size(); ++i) acc.add(weights.weights[i], as_span(stats[i].values));
  acc.scale(static_cast<double>(n_total) / static_cast<double>(stats.size()));
  expfam::SuffStat out{family, Eigen::Map<const Eigen::VectorXd>(acc.values().data(), acc.values().size())};
  return out;
}

expfam::SuffStat svi_plus_gradient_centered(std::span<const expfam::SuffStat> stats, std::span<const double> eps,
                                            std::size_t n_total) {
  const bool no_noise = eps.empty();
  check_batch(stats, no_noise ? stats.size() : eps.size());
  const expfam::Family family = stats.front().family;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(family.length());
  for (const auto& s : stats) mean += s.values;
  Eigen::VectorXd total = mean;
  mean /= static_cast<double>(stats.size());
  if (!no_noise)
    for (std::size_t i = 0; i < stats.size(); ++i) total += (stats[i].values - mean) * eps[i];
  return {family, total * (static_cast<double>(n_total) / static_cast<double>(stats.size()))};
}

// ----------------------------------------------------------------- updates

expfam::NaturalParam blend_update(const expfam::NaturalParam& lambda, const expfam::NaturalParam& eta,
                                  std::span<const double> grad, double rho, const expfam::DomainFloor& floor,
                                  std::size_t iteration) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ContractError("step size must lie in (0, 1]");
  if (!(lambda.family == eta.family)) throw ContractError("lambda and eta families differ");
  const std::size_t len = lambda.family.length();
  if (grad.size() != len || static_cast<std::size_t>(eta.values.size()) != len)
    throw ContractError("gradient layout does not match " + lambda.family.name());
  for (double g : grad)
    if (!std::isfinite(g))
      throw NumericalError("non-finite gradient for " + lambda.family.name() + " at iteration " +
                           std::to_string(iteration));
  expfam::NaturalParam next{lambda.family, Eigen::VectorXd(len)};
  kernels::active().blend(rho, lambda.values.data(), eta.values.data(), grad.data(), next.values.data(), len);
  return expfam::project_to_domain(next, floor);
}

UpdateState apply_update(const UpdateState& state, const expfam::SuffStat& grad, double rho,
                         const expfam::DomainFloor& floor) {
  if (!(grad.family == state.lambda.family)) throw ContractError("apply_update: gradient family mismatch");
  UpdateState next = state;
  next.t = state.t + 1;
  next.lambda = blend_update(state.lambda, state.eta, as_span(grad.values), rho, floor, next.t);
  return next;
}

// ------------------------------------------------------------------ engine

std::vector<LocalStats> compute_local_stats(const Model& model, const LocalContext& ctx, std::size_t phase,
                                            std::span<const std::size_t> batch, unsigned threads) {
  std::vector<LocalStats> out(batch.size());
  // Each slot is written by exactly one worker; the reduction happens later in batch order.
  parallel_chunks(batch.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) model.local_stats(batch[i], ctx, phase, out[i]);
  });
  return out;
}

std::vector<std::vector<double>> reduce_gradients(const ModelState& state, std::span<const LocalStats> stats,
                                                  const NoiseWeights& weights, std::size_t n_total) {
  if (weights.weights.size() != stats.size())
    throw ContractError("reduce_gradients: " + std::to_string(weights.weights.size()) + " weights for batch of " +
                        std::to_string(stats.size()));
  std::vector<std::vector<double>> grads(state.globals.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    for (const Contribution& c : stats[i]) {
      if (c.global >= state.globals.size()) throw ContractError("contribution targets unknown global");
      auto& g = grads[c.global];
      if (g.empty()) g.assign(state.globals[c.global].lambda.family.length(), 0.0);
      add_contribution(g, weights.weights[i], c);
    }
  }
  const double scale = static_cast<double>(n_total) / static_cast<double>(stats.size());
  for (auto& g : grads)
    if (!g.empty()) kernels::active().scale(scale, g.data(), g.size());
  return grads;
}

Engine::Engine(const Model& model, ModelState initial, EngineOptions options)
    : model_(model), state_(std::move(initial)), options_(options) {
  const std::size_t n = model_.num_data();
  if (n == 0) throw ContractError("engine: model has no data");
  if (options_.batch_size == 0) options_.batch_size = n;
  if (options_.batch_size > n)
    throw ContractError("engine: batch size " + std::to_string(options_.batch_size) + " exceeds N=" +
                        std::to_string(n));
  validate(options_.step);
  validate(options_.effective);
}

IterationInfo Engine::step() {
  IterationInfo info;
  info.t = ++t_;
  info.rho = step_size(info.t, options_.step);
  info.batch_size = options_.batch_size;
  info.m = effective_m(info.t, options_.effective, info.batch_size);
  const std::size_t n = model_.num_data();

  Rng batch_rng = make_stream(options_.seed, "batch", info.t);
  const std::vector<std::size_t> batch = sample_batch(n, info.batch_size, batch_rng);
  Rng noise_rng = make_stream(options_.seed, "noise", info.t);
  const NoiseWeights weights = draw_noise_weights(info.batch_size, info.m, noise_rng);

  for (std::size_t phase = 0; phase < model_.num_phases(); ++phase) {
    const auto ctx = model_.context(state_);
    const auto stats = compute_local_stats(model_, *ctx, phase, batch, options_.threads);
    const auto grads = reduce_gradients(state_, stats, weights, n);
    for (std::size_t g : model_.phase_globals(phase, state_)) {
      GlobalVariable& gv = state_.globals[g];
      if (grads[g].empty()) {
        const std::vector<double> zero(gv.lambda.family.length(), 0.0);
        gv.lambda = blend_update(gv.lambda, gv.prior, zero, info.rho, options_.floor, info.t);
      } else {
        gv.lambda = blend_update(gv.lambda, gv.prior, grads[g], info.rho, options_.floor, info.t);
      }
    }
  }
  return info;
}

}  // namespace sviplus::svi

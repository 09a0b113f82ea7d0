#include "sviplus/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sviplus/error.hpp"
#include "sviplus/kernels.hpp"
#include "sviplus/parallel.hpp"
#include "sviplus/rng.hpp"
#include "sviplus/svi_engine.hpp"

namespace sviplus::diag {
namespace {

constexpr std::size_t kUnselected = static_cast<std::size_t>(-1);

struct Layout {
  std::vector<std::size_t> globals;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> column_of;  // per global, kUnselected if not recorded
  std::size_t width = 0;
};

Layout make_layout(const ModelState& state, const std::vector<std::size_t>& selected) {
  Layout lay;
  if (selected.empty()) {
    lay.globals.resize(state.globals.size());
    std::iota(lay.globals.begin(), lay.globals.end(), std::size_t{0});
  } else {
    lay.globals = selected;
  }
  lay.column_of.assign(state.globals.size(), kUnselected);
  for (std::size_t g : lay.globals) {
    if (g >= state.globals.size()) throw ContractError("diagnostics: global index out of range");
    if (lay.column_of[g] != kUnselected) throw ContractError("diagnostics: global selected twice");
    lay.column_of[g] = lay.width;
    lay.offsets.push_back(lay.width);
    lay.width += state.globals[g].lambda.family.length();
  }
  return lay;
}

// One datum's statistic in flattened coordinates.
struct SparseStat {
  std::vector<unsigned> idx;
  std::vector<double> val;
};

std::vector<SparseStat> flatten_stats(const Model& model, const ModelState& state, const Layout& lay) {
  const std::size_t n = model.num_data();
  std::vector<SparseStat> out(n);
  const auto ctx = model.context(state);
  for (std::size_t phase = 0; phase < model.num_phases(); ++phase) {
    LocalStats local;
    for (std::size_t i = 0; i < n; ++i) {
      model.local_stats(i, *ctx, phase, local);
      for (const Contribution& c : local) {
        if (c.global >= lay.column_of.size()) throw ContractError("diagnostics: contribution targets unknown global");
        const std::size_t base = lay.column_of[c.global];
        if (base == kUnselected) continue;
        for (std::size_t j = 0; j < c.values.size(); ++j) {
          out[i].idx.push_back(static_cast<unsigned>(base + (c.index.empty() ? j : c.index[j])));
          out[i].val.push_back(c.values[j]);
        }
      }
    }
  }
  return out;
}

std::uint64_t mix(std::uint64_t seed, std::string_view name, std::uint64_t t) { return stream_seed(seed, name, t); }

}  // namespace

Eigen::MatrixXd per_datum_stats(const Model& model, const ModelState& state, const std::vector<std::size_t>& globals) {
  const Layout lay = make_layout(state, globals);
  const auto stats = flatten_stats(model, state, lay);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(stats.size()), static_cast<Eigen::Index>(lay.width));
  for (std::size_t i = 0; i < stats.size(); ++i)
    for (std::size_t j = 0; j < stats[i].idx.size(); ++j)
      out(static_cast<Eigen::Index>(i), stats[i].idx[j]) += stats[i].val[j];
  return out;
}

GradientSample collect_gradients(const Model& model, const ModelState& state, const CollectOptions& options) {
  const std::size_t n = model.num_data();
  const std::size_t s = options.batch_size == 0 ? n : options.batch_size;
  const std::size_t m = options.m == 0 ? s : options.m;
  if (s > n) throw ContractError("collect_gradients: batch size exceeds N");
  if (m < 1 || m > s) throw ContractError("collect_gradients: M must lie in [1, |S|]");
  if (options.replicates < 2) throw ContractError("collect_gradients: need at least two replicates");

  const Layout lay = make_layout(state, options.globals);
  const auto stats = flatten_stats(model, state, lay);

  GradientSample out;
  out.batch_size = s;
  out.m = m;
  out.t = options.t;
  out.model_id = std::string(model.id());
  out.globals = lay.globals;
  out.offsets = lay.offsets;
  // row-major while filling so each replicate writes a contiguous row
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(
      static_cast<Eigen::Index>(options.replicates), static_cast<Eigen::Index>(lay.width));
  rows.setZero();
  const auto& k = kernels::active();
  parallel_chunks(options.replicates, options.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng = make_stream(options.seed, "replicate", r);
      const auto batch = svi::sample_batch(n, s, rng);
      const auto w = svi::draw_noise_weights(s, m, rng);
      double* row = rows.row(static_cast<Eigen::Index>(r)).data();
      // (N/|S|) sum w s / N
      for (std::size_t b = 0; b < s; ++b) {
        const SparseStat& st = stats[batch[b]];
        k.scatter_axpy(w.weights[b] / static_cast<double>(s), st.val.data(), st.idx.data(), row, st.idx.size());
      }
    }
  });
  out.values = rows;
  if (!out.values.allFinite()) throw NumericalError("collect_gradients: non-finite replicate");
  return out;
}

ModelState warm_state(const Model& model, std::uint64_t seed, std::size_t sweeps) {
  svi::EngineOptions opts;
  opts.seed = seed;
  svi::Engine engine(model, model.init_globals(seed), opts);
  for (std::size_t i = 0; i < sweeps; ++i) engine.step();
  return engine.state();
}

Eigen::VectorXd column_mean(const Eigen::MatrixXd& x) { return x.colwise().mean().transpose(); }

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw ContractError("covariance: need at least two rows");
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

double relative_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double denom = b.norm();
  if (denom == 0.0) throw ContractError("relative_frobenius: reference is zero");
  return (a - b).norm() / denom;
}

// ----------------------------------------------------------- gaussianity

double ks_normal(std::vector<double> sample, double mean, double sd) {
  if (sample.empty()) throw ContractError("ks_normal: empty sample");
  if (!(sd > 0.0)) throw ContractError("ks_normal: sd must be positive");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = 0.5 * std::erfc(-(sample[i] - mean) / (sd * std::sqrt(2.0)));
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double energy_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.cols() != y.cols()) throw ContractError("energy_distance: dimension mismatch");
  if (x.rows() == 0 || y.rows() == 0) throw ContractError("energy_distance: empty sample");
  auto mean_dist = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      acc += (b.rowwise() - a.row(i)).rowwise().norm().sum();
    return acc / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
  };
  return std::max(0.0, 2.0 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y));
}

GaussianityReport gaussianity(const GradientSample& sample, std::uint64_t reference_seed,
                              const GaussianityOptions& options) {
  return gaussianity(sample.values, reference_seed, options);
}

GaussianityReport gaussianity(const Eigen::MatrixXd& x, std::uint64_t reference_seed,
                              const GaussianityOptions& options) {
  if (x.rows() < 2) throw ContractError("gaussianity: need at least two replicates");
  const Eigen::Index r = x.rows();
  const Eigen::Index dim = x.cols();
  GaussianityReport rep;
  rep.ks.assign(static_cast<std::size_t>(dim), 0.0);
  rep.degenerate.assign(static_cast<std::size_t>(dim), false);

  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::RowVectorXd sd = (centered.colwise().squaredNorm() / static_cast<double>(r)).cwiseSqrt();
  std::vector<Eigen::Index> live;
  for (Eigen::Index c = 0; c < dim; ++c) {
    const double scale = std::max(std::abs(mean[c]), 1.0);
    if (!(sd[c] > 1e-14 * scale)) {
      rep.degenerate[static_cast<std::size_t>(c)] = true;
      continue;
    }
    live.push_back(c);
    const Eigen::VectorXd col = x.col(c);
    rep.ks[static_cast<std::size_t>(c)] = ks_normal({col.data(), col.data() + col.size()}, mean[c], sd[c]);
    rep.max_ks = std::max(rep.max_ks, rep.ks[static_cast<std::size_t>(c)]);
  }

  if (!options.energy || live.empty()) return rep;
  const Eigen::Index rows = std::min<Eigen::Index>(r, static_cast<Eigen::Index>(std::max<std::size_t>(options.energy_max, 2)));
  const auto width = static_cast<Eigen::Index>(live.size());
  Eigen::MatrixXd z(r, width);
  for (Eigen::Index j = 0; j < width; ++j) z.col(j) = centered.col(live[j]) / sd[live[j]];
  // Reference: Gaussian with the sample's correlation, sampled through a
  // symmetric square root so rank-deficient correlations are fine.
  const Eigen::MatrixXd corr = z.transpose() * z / static_cast<double>(r);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  const Eigen::MatrixXd root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  Rng rng(reference_seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(rows, width);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < width; ++j) g(i, j) = normal(rng);
  const Eigen::MatrixXd ref = g * root;
  rep.energy = energy_distance(z.topRows(rows), ref);
  return rep;
}

std::vector<TrendRow> theorem1_trend(const Model& model, const ModelState& state, const TrendOptions& options) {
  if (options.m < 1) throw ContractError("theorem1_trend: M must be >= 1");
  if (options.repeats < 1) throw ContractError("theorem1_trend: repeats must be >= 1");
  const std::size_t n = model.num_data();
  for (std::size_t tau : options.taus) {
    if (tau < 1) throw ContractError("theorem1_trend: tau must be >= 1");
    if (tau * options.m > n)
      throw ContractError("theorem1_trend: tau*M = " + std::to_string(tau * options.m) + " exceeds N = " +
                          std::to_string(n));
  }
  std::vector<TrendRow> out;
  for (std::size_t tau : options.taus) {
    TrendRow row;
    row.tau = tau;
    row.batch_size = tau * options.m;
    for (std::size_t rep = 0; rep < options.repeats; ++rep) {
      CollectOptions c;
      c.batch_size = row.batch_size;
      c.m = options.m;
      c.replicates = options.replicates;
      c.seed = mix(options.seed, "trend", tau * 1000003ULL + rep);
      c.globals = options.globals;
      c.threads = options.threads;
      const GradientSample sample = collect_gradients(model, state, c);
      const GaussianityReport g = gaussianity(sample, mix(options.seed, "reference", tau * 1000003ULL + rep),
                                              options.gaussianity);
      row.mean_max_ks += g.max_ks;
      row.mean_energy += g.energy;
      const Eigen::MatrixXd cov = covariance(sample.values);
      if (rep == 0) row.covariance = cov;
      else row.covariance += cov;
    }
    const double reps = static_cast<double>(options.repeats);
    row.mean_max_ks /= reps;
    row.mean_energy /= reps;
    row.covariance /= reps;
    out.push_back(std::move(row));
  }
  return out;
}

// ------------------------------------------------------------- occupancy

std::vector<double> sorted_shares(const std::vector<int>& labels, std::size_t k) {
  if (labels.empty()) throw ContractError("sorted_shares: no data");
  std::vector<double> counts(k, 0.0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= k) throw ContractError("sorted_shares: label out of range");
    counts[static_cast<std::size_t>(l)] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(labels.size());
  std::sort(counts.begin(), counts.end(), std::greater<>());
  return counts;
}

std::size_t effective_cluster_count(const std::vector<double>& shares, double threshold) {
  return static_cast<std::size_t>(std::count_if(shares.begin(), shares.end(), [&](double s) { return s > threshold; }));
}

double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw ContractError("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ContractError("quantile: q must lie in [0, 1]");
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

OccupancyReport cluster_occupancy(const std::vector<std::vector<int>>& labelings, std::size_t k, double threshold) {
  if (labelings.empty()) throw ContractError("cluster_occupancy: need at least one run");
  if (k < 1) throw ContractError("cluster_occupancy: k must be >= 1");
  OccupancyReport rep;
  rep.mean_shares.assign(k, 0.0);
  std::vector<std::vector<double>> cumulative(k);
  for (const auto& labels : labelings) {
    const auto shares = sorted_shares(labels, k);
    rep.effective_counts.push_back(effective_cluster_count(shares, threshold));
    double run = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      rep.mean_shares[i] += shares[i];
      run += shares[i];
      cumulative[i].push_back(run);
    }
  }
  for (double& s : rep.mean_shares) s /= static_cast<double>(labelings.size());
  for (const auto& c : cumulative)
    rep.cumulative.push_back({quantile(c, 0.0), quantile(c, 0.25), quantile(c, 0.5), quantile(c, 0.75), quantile(c, 1.0)});
  return rep;
}

OccupancyReport cluster_occupancy(const models::GmmModel& model, const std::vector<ModelState>& runs,
                                  double threshold) {
  std::vector<std::vector<int>> labelings;
  labelings.reserve(runs.size());
  for (const auto& s : runs) labelings.push_back(model.hard_assignments(s));
  return cluster_occupancy(labelings, model.k(), threshold);
}

}  // namespace sviplus::diag

#pragma once

// Empirical checks of the SVI+ gradient: replicate collection at a frozen
// state, Gaussianity proxies, the batch-ratio trend, and cluster occupancy
// summaries for mixture fits.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sviplus/model.hpp"
#include "sviplus/models/gmm.hpp"

namespace sviplus::diag {

/// Replicates of lambda'/N, one per row. Columns are the selected globals'
/// natural-parameter entries, concatenated in selection order.
struct GradientSample {
  Eigen::MatrixXd values;
  std::size_t batch_size = 0;
  std::size_t m = 0;
  std::size_t t = 0;
  std::string model_id;
  std::vector<std::size_t> globals;
  std::vector<std::size_t> offsets;  // column where each selected global starts
};

struct CollectOptions {
  std::size_t batch_size = 0;
  std::size_t m = 0;  // 0 means m = batch_size
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  std::vector<std::size_t> globals;  // empty selects every global
  unsigned threads = 1;
  std::size_t t = 0;  // recorded only
};

/// Per-datum statistics at the given state, one row per datum, flattened the
/// same way as GradientSample.
Eigen::MatrixXd per_datum_stats(const Model& model, const ModelState& state,
                                const std::vector<std::size_t>& globals = {});

/// Draws independent (batch, noise) pairs with globals held fixed. Replicate r
/// uses its own stream keyed by r, so results do not depend on threads.
GradientSample collect_gradients(const Model& model, const ModelState& state, const CollectOptions& options);

/// Runs `sweeps` full-batch coordinate-ascent iterations from init_globals(seed).
ModelState warm_state(const Model& model, std::uint64_t seed, std::size_t sweeps = 5);

/// Column means and unbiased covariance of a replicate matrix.
Eigen::VectorXd column_mean(const Eigen::MatrixXd& x);
Eigen::MatrixXd covariance(const Eigen::MatrixXd& x);
/// ||a - b||_F / ||b||_F
double relative_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// ------------------------------------------------------------ gaussianity

struct GaussianityOptions {
  bool energy = true;
  std::size_t energy_max = 500;  // rows used for the O(R^2) energy distance
};

struct GaussianityReport {
  std::vector<double> ks;         // per coordinate
  std::vector<bool> degenerate;   // zero-variance coordinates (ks = 0)
  double max_ks = 0.0;
  double energy = 0.0;            // 0 when disabled
};

/// Two-sided KS distance between a sample and N(mean, var) with the sample's
/// own mean and maximum-likelihood variance.
double ks_normal(std::vector<double> sample, double mean, double sd);

/// Energy distance (V-statistic) between two equally sized point clouds.
double energy_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

GaussianityReport gaussianity(const GradientSample& sample, std::uint64_t reference_seed,
                              const GaussianityOptions& options = {});
GaussianityReport gaussianity(const Eigen::MatrixXd& replicates, std::uint64_t reference_seed,
                              const GaussianityOptions& options = {});

struct TrendRow {
  std::size_t tau = 0;
  std::size_t batch_size = 0;
  double mean_max_ks = 0.0;
  double mean_energy = 0.0;
  Eigen::MatrixXd covariance;  // averaged over repeats
};

struct TrendOptions {
  std::size_t m = 25;
  std::vector<std::size_t> taus{1, 2, 4, 8};
  std::size_t replicates = 2000;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> globals;
  unsigned threads = 1;
  GaussianityOptions gaussianity{};
};

/// For each tau, collects replicates at |S| = tau M with effective size M and
/// averages the Gaussianity metrics over repeats.
std::vector<TrendRow> theorem1_trend(const Model& model, const ModelState& state, const TrendOptions& options);

// -------------------------------------------------------------- occupancy

struct RankSummary {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

struct OccupancyReport {
  std::vector<double> mean_shares;       // size-sorted, averaged over runs
  std::vector<RankSummary> cumulative;   // per rank, across runs
  std::vector<std::size_t> effective_counts;  // per run
};

/// Shares sorted descending for one labeling with k clusters.
std::vector<double> sorted_shares(const std::vector<int>& labels, std::size_t k);
std::size_t effective_cluster_count(const std::vector<double>& shares, double threshold = 0.01);
/// Linear-interpolation quantile of an unsorted sample.
double quantile(std::vector<double> x, double q);

OccupancyReport cluster_occupancy(const std::vector<std::vector<int>>& labelings, std::size_t k,
                                  double threshold = 0.01);
OccupancyReport cluster_occupancy(const models::GmmModel& model, const std::vector<ModelState>& runs,
                                  double threshold = 0.01);

}  // namespace sviplus::diag

#pragma once

// Probabilistic matrix factorization with Gaussian factors:
//   u_i ~ N(0, c I), v_j ~ N(0, c I), y_ij ~ N(u_i^T v_j, sigma2).
// Every user and item factor is a global MVN variable: globals [0, U) are
// users, [U, U + I) are items. One rating is one datum.

#include <Eigen/Dense>
#include <vector>

#include "sviplus/data.hpp"
#include "sviplus/expfam.hpp"
#include "sviplus/model.hpp"

namespace sviplus::models {

struct PmfHyper {
  std::size_t rank = 5;
  double prior_var = 1.0;  // c
  double noise_var = 0.5;  // sigma2
  // Update users then items within an iteration, each against fresh
  // expectations of the other side. false updates both sides at once.
  bool alternating = true;
};

/// First and second moments of every factor under q.
class PmfExpectations : public LocalContext {
 public:
  PmfExpectations(const ModelState& state, std::size_t n_users);

  std::size_t n_users = 0;
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::MatrixXd> second;  // E[v v^T]
};

struct PmfLocal {
  expfam::SuffStat user;  // sigma^-2 (y E[v_j], -1/2 E[v_j v_j^T])
  expfam::SuffStat item;  // sigma^-2 (y E[u_i], -1/2 E[u_i u_i^T])
};

/// Statistic contributions of rating (user, item, y). Indices are dense ids.
PmfLocal pmf_local_step(std::uint32_t user, std::uint32_t item, double y, const PmfExpectations& ctx,
                        double noise_var);

class PmfModel : public Model {
 public:
  PmfModel(data::RatingsDataset data, PmfHyper hyper);

  std::string_view id() const override { return "pmf"; }
  std::size_t num_data() const override { return data_.n_ratings(); }
  std::size_t num_phases() const override { return hyper_.alternating ? 2 : 1; }
  std::vector<std::size_t> phase_globals(std::size_t phase, const ModelState& state) const override;
  ModelState init_globals(std::uint64_t seed) const override;
  std::unique_ptr<LocalContext> context(const ModelState& state) const override;
  void local_stats(std::size_t n, const LocalContext& ctx, std::size_t phase, LocalStats& out) const override;
  double elbo(const ModelState& state) const override;

  /// E[u_i]^T E[v_j]
  double predict(const ModelState& state, std::uint32_t user, std::uint32_t item) const;
  /// Root mean squared error of predict() over the given ratings.
  double rmse(const ModelState& state, const std::vector<data::Rating>& ratings) const;
  double rmse(const ModelState& state) const { return rmse(state, data_.ratings); }

  const data::RatingsDataset& data() const { return data_; }
  const PmfHyper& hyper() const { return hyper_; }
  const expfam::NaturalParam& prior() const { return prior_; }

 private:
  data::RatingsDataset data_;
  PmfHyper hyper_;
  expfam::NaturalParam prior_;
};

}  // namespace sviplus::models

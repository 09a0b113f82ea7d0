#pragma once

// Bayesian Gaussian mixture with conjugate priors:
//   pi ~ Dirichlet(a_0), (mu_k, Lambda_k) ~ NormalWishart(m_0, beta_0, W_0, nu_0),
//   z_n ~ Discrete(pi), x_n | z_n = k ~ N(mu_k, Lambda_k^-1).
// Global 0 is q(pi); global 1 + k is q(mu_k, Lambda_k). Responsibilities are
// the local parameters.

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "sviplus/data.hpp"
#include "sviplus/expfam.hpp"
#include "sviplus/model.hpp"

namespace sviplus::models {

struct GmmHyper {
  std::size_t k = 4;
  /// Symmetric Dirichlet concentration per component (ignored when mixing_prior is set).
  double dirichlet = 1.0;
  /// Explicit prior on the mixing weights, e.g. from dp_gmm_prior.
  std::optional<expfam::NaturalParam> mixing_prior;
  // Normal-Wishart prior. Unset fields default to data-derived values: mean =
  // data mean, dof = d + 2, and W chosen so that E[Lambda] = inverse data covariance.
  std::optional<Eigen::VectorXd> prior_mean;
  double prior_beta = 1.0;
  std::optional<double> prior_dof;
  std::optional<Eigen::MatrixXd> prior_scale;
};

/// Symmetric Dirichlet with concentration mass / k_trunc per component, the
/// finite stand-in for a Dirichlet process with the given mass.
expfam::NaturalParam dp_gmm_prior(std::size_t k_trunc, double mass);

/// Per-component expectations under q, shared by every local step of a pass.
class GmmExpectations : public LocalContext {
 public:
  explicit GmmExpectations(const ModelState& state);

  std::size_t k() const { return static_cast<std::size_t>(e_log_pi.size()); }
  std::size_t d() const { return static_cast<std::size_t>(means.front().size()); }

  /// Unnormalized log responsibilities for x.
  Eigen::VectorXd log_weights(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  Eigen::VectorXd e_log_pi;
  Eigen::VectorXd half_e_logdet;  // 1/2 E[ln |Lambda_k|]
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> scaled_w;  // nu_k W_k = E[Lambda_k]
  Eigen::VectorXd d_over_beta;
};

struct GmmLocal {
  Eigen::VectorXd responsibilities;
  expfam::SuffStat mixing;                  // r_n
  std::vector<expfam::SuffStat> components;  // r_nk (x, 1, x x^T, 1) in Normal-Wishart layout
};

GmmLocal gmm_local_step(const Eigen::Ref<const Eigen::VectorXd>& x, const GmmExpectations& ctx);

class GmmModel : public Model {
 public:
  GmmModel(Eigen::MatrixXd x, GmmHyper hyper);

  std::string_view id() const override { return "gmm"; }
  std::size_t num_data() const override { return static_cast<std::size_t>(x_.rows()); }
  ModelState init_globals(std::uint64_t seed) const override;
  std::unique_ptr<LocalContext> context(const ModelState& state) const override;
  void local_stats(std::size_t n, const LocalContext& ctx, std::size_t phase, LocalStats& out) const override;
  double elbo(const ModelState& state) const override;

  /// The state whose q equals the prior.
  ModelState prior_state() const;
  /// N x K responsibilities under the given globals.
  Eigen::MatrixXd responsibilities(const ModelState& state) const;
  /// argmax-responsibility component of each datum.
  std::vector<int> hard_assignments(const ModelState& state) const;
  /// Contribution of one datum to the objective, with its optimal responsibilities:
  /// sum_k r_k (E[ln pi_k] + E[ln N(x | mu_k, Lambda_k)]) - sum_k r_k ln r_k.
  double datum_elbo(const Eigen::Ref<const Eigen::VectorXd>& x, const GmmExpectations& ctx) const;

  const Eigen::MatrixXd& x() const { return x_; }
  std::size_t k() const { return k_; }
  const expfam::NaturalParam& mixing_prior() const { return mixing_prior_; }
  const expfam::NaturalParam& component_prior() const { return component_prior_; }

 private:
  Eigen::MatrixXd x_;
  std::size_t k_;
  expfam::NaturalParam mixing_prior_;
  expfam::NaturalParam component_prior_;
};

}  // namespace sviplus::models

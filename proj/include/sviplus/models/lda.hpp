#pragma once

// Latent Dirichlet allocation with K topics over a vocabulary of V words:
//   beta_k ~ Dirichlet(eta), theta_d ~ Dirichlet(alpha),
//   z_dn ~ Discrete(theta_d), w_dn ~ Discrete(beta_{z_dn}).
// Globals are the K topic Dirichlets. A document is one datum; gamma_d and
// the token responsibilities phi are its local parameters.

#include <Eigen/Dense>
#include <vector>

#include "sviplus/data.hpp"
#include "sviplus/expfam.hpp"
#include "sviplus/model.hpp"

namespace sviplus::models {

struct LdaHyper {
  std::size_t k = 10;
  double alpha = 0.0;  // document-topic concentration; <= 0 means 1/K
  double eta = 0.01;   // topic-word concentration
  std::size_t max_iters = 100;
  double tol = 1e-3;   // mean absolute change in gamma
};

/// E[ln beta_kw] and exp of it, stored word-major (row w holds all K topics).
class LdaExpectations : public LocalContext {
 public:
  explicit LdaExpectations(const ModelState& state);

  std::size_t k = 0;
  std::size_t v = 0;
  std::vector<double> elog_beta;
  std::vector<double> exp_elog_beta;

  const double* elog_row(std::size_t w) const { return elog_beta.data() + w * k; }
  const double* exp_row(std::size_t w) const { return exp_elog_beta.data() + w * k; }
};

struct LdaLocal {
  Eigen::VectorXd gamma;
  Eigen::MatrixXd phi;  // one row per distinct word of the document
  std::size_t iterations = 0;
};

/// Alternates phi and gamma updates from gamma = alpha + N_d / K until the
/// mean absolute change of gamma drops below tol or max_iters is reached.
LdaLocal lda_local_step(const data::BowDoc& doc, const LdaExpectations& ctx, double alpha, std::size_t max_iters,
                        double tol);

/// The document's share of the objective at the given locals:
/// E[ln p(w, z | theta, beta)] + E[ln p(theta)] - E[ln q(z)] - E[ln q(theta)].
double lda_doc_elbo(const data::BowDoc& doc, const LdaExpectations& ctx, const LdaLocal& local, double alpha);

class LdaModel : public Model {
 public:
  LdaModel(data::BowCorpus corpus, LdaHyper hyper);

  std::string_view id() const override { return "lda"; }
  std::size_t num_data() const override { return corpus_.docs.size(); }
  ModelState init_globals(std::uint64_t seed) const override;
  std::unique_ptr<LocalContext> context(const ModelState& state) const override;
  void local_stats(std::size_t n, const LocalContext& ctx, std::size_t phase, LocalStats& out) const override;
  double elbo(const ModelState& state) const override;

  /// Sum of per-document objectives on unseen documents, fitting only their
  /// locals against the frozen topics.
  double heldout_elbo(const ModelState& state, const data::BowCorpus& test) const;
  /// heldout_elbo divided by the test token count.
  double heldout_per_token(const ModelState& state, const data::BowCorpus& test) const;

  ModelState prior_state() const;
  double alpha() const { return alpha_; }
  const LdaHyper& hyper() const { return hyper_; }
  const data::BowCorpus& corpus() const { return corpus_; }
  const expfam::NaturalParam& prior() const { return prior_; }

 private:
  data::BowCorpus corpus_;
  LdaHyper hyper_;
  double alpha_;
  expfam::NaturalParam prior_;
};

}  // namespace sviplus::models

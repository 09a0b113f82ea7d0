#include "sviplus/models/lda.hpp"

#include <cmath>
#include <random>

#include "sviplus/error.hpp"
#include "sviplus/kernels.hpp"
#include "sviplus/rng.hpp"

namespace sviplus::models {
namespace {

Eigen::VectorXd elog_dirichlet(const Eigen::VectorXd& gamma) {
  const double total = expfam::digamma(gamma.sum());
  Eigen::VectorXd out(gamma.size());
  for (Eigen::Index k = 0; k < gamma.size(); ++k) out[k] = expfam::digamma(gamma[k]) - total;
  return out;
}

// phi for one word given E[ln theta] and its exp. Falls back to log space
// when every topic's weight underflows.
void word_phi(const LdaExpectations& ctx, std::size_t w, const Eigen::VectorXd& elog_theta,
              const Eigen::VectorXd& exp_theta, double* row) {
  const std::size_t k = ctx.k;
  const double* eb = ctx.exp_row(w);
  const double norm = kernels::dot({exp_theta.data(), k}, {eb, k});
  if (norm > 1e-280 && std::isfinite(norm)) {
    for (std::size_t i = 0; i < k; ++i) row[i] = exp_theta[static_cast<Eigen::Index>(i)] * eb[i] / norm;
    return;
  }
  const double* lb = ctx.elog_row(w);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    row[i] = elog_theta[static_cast<Eigen::Index>(i)] + lb[i];
    top = std::max(top, row[i]);
  }
  if (!std::isfinite(top)) throw NumericalError("LDA local step: word has no finite topic weight");
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    row[i] = std::exp(row[i] - top);
    total += row[i];
  }
  for (std::size_t i = 0; i < k; ++i) row[i] /= total;
}

}  // namespace

LdaExpectations::LdaExpectations(const ModelState& state) {
  k = state.globals.size();
  if (k == 0) throw ContractError("LDA state has no topics");
  v = state.globals.front().lambda.family.dim;
  elog_beta.resize(k * v);
  exp_elog_beta.resize(k * v);
  for (std::size_t t = 0; t < k; ++t) {
    const auto& q = state.globals[t].lambda;
    if (q.family != expfam::Family::dirichlet(v)) throw ContractError("LDA topics must share one vocabulary");
    const Eigen::VectorXd e = expfam::expected_suff_stats(q).values;
    for (std::size_t w = 0; w < v; ++w) {
      elog_beta[w * k + t] = e[static_cast<Eigen::Index>(w)];
      exp_elog_beta[w * k + t] = std::exp(e[static_cast<Eigen::Index>(w)]);
    }
  }
}

LdaLocal lda_local_step(const data::BowDoc& doc, const LdaExpectations& ctx, double alpha, std::size_t max_iters,
                        double tol) {
  if (doc.words.empty()) throw ContractError("lda_local_step: empty document");
  if (doc.words.size() != doc.counts.size()) throw ContractError("lda_local_step: malformed document");
  if (max_iters < 1) throw ContractError("lda_local_step: max_iters must be >= 1");
  const std::size_t k = ctx.k;
  const auto kk = static_cast<Eigen::Index>(k);
  const auto nw = static_cast<Eigen::Index>(doc.words.size());
  for (std::size_t i = 0; i < doc.words.size(); ++i) {
    if (doc.words[i] >= ctx.v) throw ContractError("lda_local_step: word id out of range");
    if (doc.counts[i] == 0) throw ContractError("lda_local_step: zero count");
  }

  LdaLocal out;
  out.gamma = Eigen::VectorXd::Constant(kk, alpha + static_cast<double>(doc.total()) / static_cast<double>(k));
  // row-major so each word's topic weights are contiguous
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> phi(nw, kk);
  Eigen::VectorXd next(kk);
  for (out.iterations = 1; out.iterations <= max_iters; ++out.iterations) {
    const Eigen::VectorXd elog_theta = elog_dirichlet(out.gamma);
    const Eigen::VectorXd exp_theta = elog_theta.array().exp();
    next.setConstant(alpha);
    for (Eigen::Index i = 0; i < nw; ++i) {
      double* row = phi.row(i).data();
      word_phi(ctx, doc.words[static_cast<std::size_t>(i)], elog_theta, exp_theta, row);
      kernels::axpy(static_cast<double>(doc.counts[static_cast<std::size_t>(i)]), {row, k}, {next.data(), k});
    }
    const double change = (next - out.gamma).cwiseAbs().mean();
    out.gamma = next;
    if (change < tol) break;
  }
  out.iterations = std::min(out.iterations, max_iters);
  out.phi = phi;
  return out;
}

double lda_doc_elbo(const data::BowDoc& doc, const LdaExpectations& ctx, const LdaLocal& local, double alpha) {
  const std::size_t k = ctx.k;
  const auto kk = static_cast<Eigen::Index>(k);
  const Eigen::VectorXd elog_theta = elog_dirichlet(local.gamma);
  double acc = 0.0;
  for (std::size_t i = 0; i < doc.words.size(); ++i) {
    const double* lb = ctx.elog_row(doc.words[i]);
    double word = 0.0;
    for (Eigen::Index t = 0; t < kk; ++t) {
      const double p = local.phi(static_cast<Eigen::Index>(i), t);
      if (p > 0.0) word += p * (elog_theta[t] + lb[t] - std::log(p));
    }
    acc += static_cast<double>(doc.counts[i]) * word;
  }
  // E[ln p(theta | alpha)] - E[ln q(theta | gamma)]
  acc += std::lgamma(static_cast<double>(k) * alpha) - static_cast<double>(k) * std::lgamma(alpha) +
         (alpha - 1.0) * elog_theta.sum();
  acc -= std::lgamma(local.gamma.sum());
  for (Eigen::Index t = 0; t < kk; ++t) acc += std::lgamma(local.gamma[t]) - (local.gamma[t] - 1.0) * elog_theta[t];
  return acc;
}

LdaModel::LdaModel(data::BowCorpus corpus, LdaHyper hyper) : corpus_(std::move(corpus)), hyper_(hyper) {
  if (hyper_.k < 1) throw ContractError("LDA needs K >= 1");
  if (corpus_.vocab_size < 2) throw ContractError("LDA needs a vocabulary of at least two words");
  if (!(hyper_.eta > 0.0)) throw ContractError("LDA topic concentration must be positive");
  if (hyper_.max_iters < 1) throw ContractError("LDA local iterations must be >= 1");
  if (!(hyper_.tol >= 0.0)) throw ContractError("LDA local tolerance must be >= 0");
  alpha_ = hyper_.alpha > 0.0 ? hyper_.alpha : 1.0 / static_cast<double>(hyper_.k);
  for (const auto& doc : corpus_.docs)
    if (doc.words.empty()) throw ContractError("LDA corpus contains an empty document");
  prior_ = expfam::dirichlet_from_concentration(
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(corpus_.vocab_size), hyper_.eta));
}

ModelState LdaModel::prior_state() const {
  ModelState s;
  s.globals.assign(hyper_.k, GlobalVariable{prior_, prior_});
  return s;
}

ModelState LdaModel::init_globals(std::uint64_t seed) const {
  Rng rng = make_stream(seed, "lda-init", 0);
  std::gamma_distribution<double> perturb(100.0, 0.01);
  const auto v = static_cast<Eigen::Index>(corpus_.vocab_size);
  ModelState s;
  s.globals.reserve(hyper_.k);
  for (std::size_t t = 0; t < hyper_.k; ++t) {
    Eigen::VectorXd conc(v);
    for (Eigen::Index w = 0; w < v; ++w) conc[w] = hyper_.eta + perturb(rng) / static_cast<double>(v);
    s.globals.push_back({expfam::dirichlet_from_concentration(conc), prior_});
  }
  return s;
}

std::unique_ptr<LocalContext> LdaModel::context(const ModelState& state) const {
  return std::make_unique<LdaExpectations>(state);
}

void LdaModel::local_stats(std::size_t n, const LocalContext& ctx, std::size_t /*phase*/, LocalStats& out) const {
  const auto& e = static_cast<const LdaExpectations&>(ctx);
  const data::BowDoc& doc = corpus_.docs[n];
  const LdaLocal local = lda_local_step(doc, e, alpha_, hyper_.max_iters, hyper_.tol);
  out.clear();
  out.reserve(e.k);
  for (std::size_t t = 0; t < e.k; ++t) {
    Contribution c{static_cast<std::uint32_t>(t), doc.words, std::vector<double>(doc.words.size())};
    for (std::size_t i = 0; i < doc.words.size(); ++i)
      c.values[i] = static_cast<double>(doc.counts[i]) * local.phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
    out.push_back(std::move(c));
  }
}

double LdaModel::heldout_elbo(const ModelState& state, const data::BowCorpus& test) const {
  if (test.vocab_size > corpus_.vocab_size) throw ContractError("held-out corpus has a larger vocabulary");
  const LdaExpectations e(state);
  double acc = 0.0;
  for (const auto& doc : test.docs) {
    const LdaLocal local = lda_local_step(doc, e, alpha_, hyper_.max_iters, hyper_.tol);
    acc += lda_doc_elbo(doc, e, local, alpha_);
  }
  return acc;
}

double LdaModel::heldout_per_token(const ModelState& state, const data::BowCorpus& test) const {
  const std::size_t tokens = test.total_tokens();
  if (tokens == 0) throw ContractError("held-out corpus is empty");
  return heldout_elbo(state, test) / static_cast<double>(tokens);
}

double LdaModel::elbo(const ModelState& state) const {
  double acc = heldout_elbo(state, corpus_);
  for (const auto& g : state.globals) acc -= expfam::kl_divergence(g.lambda, g.prior);
  return acc;
}

}  // namespace sviplus::models

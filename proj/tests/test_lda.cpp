#include <gtest/gtest.h>

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <random>

#include "sviplus/data.hpp"
#include "sviplus/error.hpp"
#include "sviplus/models/lda.hpp"
#include "sviplus/svi_engine.hpp"

using namespace sviplus;
using models::LdaExpectations;
using models::LdaHyper;
using models::LdaModel;

namespace {

ModelState topics_state(const std::vector<Eigen::VectorXd>& conc) {
  ModelState s;
  for (const auto& c : conc) {
    const auto p = expfam::dirichlet_from_concentration(c);
    s.globals.push_back({p, p});
  }
  return s;
}

data::BowDoc doc_of(std::vector<std::uint32_t> words, std::vector<std::uint32_t> counts) {
  return {std::move(words), std::move(counts)};
}

// plain fixed-point iteration of the textbook local updates, many rounds
Eigen::VectorXd oracle_gamma(const data::BowDoc& doc, const std::vector<Eigen::VectorXd>& lambda, double alpha,
                             int rounds) {
  using boost::math::digamma;
  const auto k = static_cast<Eigen::Index>(lambda.size());
  Eigen::VectorXd gamma = Eigen::VectorXd::Ones(k);
  for (int r = 0; r < rounds; ++r) {
    Eigen::VectorXd next = Eigen::VectorXd::Constant(k, alpha);
    const double gsum = digamma(gamma.sum());
    for (std::size_t i = 0; i < doc.words.size(); ++i) {
      Eigen::VectorXd logit(k);
      for (Eigen::Index t = 0; t < k; ++t)
        logit[t] = digamma(gamma[t]) - gsum + digamma(lambda[t][doc.words[i]]) - digamma(lambda[t].sum());
      const Eigen::VectorXd phi = (logit.array() - logit.maxCoeff()).exp();
      next += doc.counts[i] * phi / phi.sum();
    }
    gamma = next;
  }
  return gamma;
}

}  // namespace

TEST(Lda, SingleTopicTakesAllTokens) {
  const ModelState s = topics_state({Eigen::VectorXd::Constant(5, 0.7)});
  const LdaExpectations ctx(s);
  const auto doc = doc_of({0, 3}, {2, 5});
  const auto local = models::lda_local_step(doc, ctx, 0.5, 100, 1e-10);
  EXPECT_NEAR(local.phi(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(local.phi(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(local.gamma[0], 0.5 + 7.0, 1e-12);

  data::BowCorpus corpus;
  corpus.vocab_size = 5;
  corpus.docs = {doc};
  LdaHyper h;
  h.k = 1;
  const LdaModel m(corpus, h);
  LocalStats out;
  m.local_stats(0, ctx, 0, out);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].index, (std::vector<std::uint32_t>{0, 3}));
  EXPECT_NEAR(out[0].values[0], 2.0, 1e-12);
  EXPECT_NEAR(out[0].values[1], 5.0, 1e-12);
}

TEST(Lda, IdenticalTopicsSplitEvenly) {
  Eigen::VectorXd c(4);
  c << 1.0, 2.0, 0.5, 3.0;
  const ModelState s = topics_state({c, c});
  const LdaExpectations ctx(s);
  const auto local = models::lda_local_step(doc_of({0, 1, 3}, {1, 4, 2}), ctx, 0.1, 100, 1e-12);
  for (Eigen::Index i = 0; i < local.phi.rows(); ++i) {
    EXPECT_NEAR(local.phi(i, 0), 0.5, 1e-12);
    EXPECT_NEAR(local.phi(i, 1), 0.5, 1e-12);
  }
}

TEST(Lda, LocalStepMatchesFixedPointOracle) {
  std::mt19937_64 rng(13);
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<Eigen::VectorXd> lambda(3, Eigen::VectorXd(10));
  for (auto& l : lambda)
    for (auto& v : l) v = 0.1 + 3.0 * g(rng);
  const ModelState s = topics_state(lambda);
  const LdaExpectations ctx(s);
  const auto doc = doc_of({0, 2, 3, 5, 9}, {3, 1, 7, 2, 4});
  const auto local = models::lda_local_step(doc, ctx, 1.0 / 3.0, 10000, 1e-14);
  const Eigen::VectorXd expect = oracle_gamma(doc, lambda, 1.0 / 3.0, 10000);
  for (Eigen::Index t = 0; t < 3; ++t) EXPECT_NEAR(local.gamma[t], expect[t], 1e-6);
}

TEST(Lda, StatisticsConserveTokens) {
  const auto syn = data::gen_lda_synthetic(20, 50, 4, 60, 9);
  LdaHyper h;
  h.k = 4;
  const LdaModel m(syn.corpus, h);
  const ModelState s = m.init_globals(1);
  const auto ctx = m.context(s);
  for (std::size_t n = 0; n < m.num_data(); ++n) {
    LocalStats out;
    m.local_stats(n, *ctx, 0, out);
    double total = 0.0;
    for (const auto& c : out)
      for (double v : c.values) total += v;
    EXPECT_NEAR(total, static_cast<double>(syn.corpus.docs[n].total()), 1e-8);
  }
}

TEST(Lda, ContractErrors) {
  const ModelState s = topics_state({Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3)});
  const LdaExpectations ctx(s);
  EXPECT_THROW(models::lda_local_step(data::BowDoc{}, ctx, 0.5, 10, 1e-3), ContractError);
  EXPECT_THROW(models::lda_local_step(doc_of({7}, {1}), ctx, 0.5, 10, 1e-3), ContractError);
  EXPECT_THROW(models::lda_local_step(doc_of({1}, {0}), ctx, 0.5, 10, 1e-3), ContractError);

  data::BowCorpus corpus;
  corpus.vocab_size = 3;
  corpus.docs = {doc_of({0}, {1}), data::BowDoc{}};
  EXPECT_THROW(LdaModel(corpus, LdaHyper{}), ContractError);
  corpus.docs.pop_back();
  LdaHyper bad;
  bad.k = 0;
  EXPECT_THROW(LdaModel(corpus, bad), ContractError);
}

TEST(Lda, DefaultAlphaIsOneOverK) {
  data::BowCorpus corpus;
  corpus.vocab_size = 3;
  corpus.docs = {doc_of({0}, {1})};
  LdaHyper h;
  h.k = 4;
  EXPECT_DOUBLE_EQ(LdaModel(corpus, h).alpha(), 0.25);
}

TEST(Lda, BatchObjectiveNeverDecreases) {
  const auto syn = data::gen_lda_synthetic(40, 30, 3, 50, 4);
  LdaHyper h;
  h.k = 3;
  h.max_iters = 1000;
  h.tol = 1e-10;
  const LdaModel m(syn.corpus, h);
  svi::Engine engine(m, m.init_globals(2), svi::EngineOptions{});
  double prev = m.elbo(engine.state());
  for (int t = 0; t < 30; ++t) {
    engine.step();
    const double cur = m.elbo(engine.state());
    EXPECT_GE(cur, prev - 1e-8) << "sweep " << t;
    prev = cur;
  }
}

TEST(Lda, HeldoutPerTokenIsNegativeAndFinite) {
  const auto syn = data::gen_lda_synthetic(30, 40, 3, 40, 6);
  const auto [train, test] = data::split_heldout(syn.corpus, 5);
  LdaHyper h;
  h.k = 3;
  const LdaModel m(train, h);
  const double v = m.heldout_per_token(m.init_globals(0), test);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_LT(v, 0.0);
}

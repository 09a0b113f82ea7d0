#include <gtest/gtest.h>

#include <random>

#include "gmm_oracle.hpp"
#include "sviplus/data.hpp"
#include "sviplus/error.hpp"
#include "sviplus/models/gmm.hpp"
#include "sviplus/svi_engine.hpp"

using namespace sviplus;
using namespace sviplus::models;

namespace {

oracle::GmmPosterior to_oracle(const ModelState& s) {
  oracle::GmmPosterior q;
  q.alpha = expfam::dirichlet_concentration(s.globals[0].lambda);
  for (std::size_t c = 1; c < s.globals.size(); ++c) {
    const auto p = expfam::normal_wishart_params(s.globals[c].lambda);
    q.comps.push_back({p.mean, p.beta, p.scale, p.dof});
  }
  return q;
}

oracle::NwComponent to_oracle(const expfam::NaturalParam& nw) {
  const auto p = expfam::normal_wishart_params(nw);
  return {p.mean, p.beta, p.scale, p.dof};
}

expfam::NaturalParam nw(const Eigen::VectorXd& m, double beta, const Eigen::MatrixXd& w, double nu) {
  return expfam::normal_wishart_from({m, beta, w, nu});
}

ModelState random_state(std::size_t k, std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 3.0);
  std::normal_distribution<double> nd(0.0, 2.0);
  ModelState s;
  Eigen::VectorXd a(static_cast<Eigen::Index>(k));
  for (auto& v : a) v = u(rng);
  const auto dir = expfam::dirichlet_from_concentration(a);
  s.globals.push_back({dir, dir});
  for (std::size_t c = 0; c < k; ++c) {
    Eigen::VectorXd m(static_cast<Eigen::Index>(d));
    for (auto& v : m) v = nd(rng);
    Eigen::MatrixXd b(d, d);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = nd(rng);
    const Eigen::MatrixXd w = (b * b.transpose() + Eigen::MatrixXd::Identity(d, d)) / 10.0;
    const auto q = nw(m, u(rng), w, static_cast<double>(d) + u(rng));
    s.globals.push_back({q, q});
  }
  return s;
}

}  // namespace

TEST(Gmm, DpPrior) {
  const auto p = dp_gmm_prior(50, 1.0);
  const auto c = expfam::dirichlet_concentration(p);
  ASSERT_EQ(c.size(), 50);
  for (double v : c) EXPECT_NEAR(v, 0.02, 1e-15);
  const auto u = expfam::dirichlet_concentration(dp_gmm_prior(2, 2.0));
  EXPECT_EQ(u[0], 1.0);
  EXPECT_EQ(u[1], 1.0);
  // E[pi_k] = a_k / sum a
  EXPECT_NEAR(c[7] / c.sum(), 1.0 / 50, 1e-15);
  EXPECT_THROW(dp_gmm_prior(1, 1.0), ContractError);
  EXPECT_THROW(dp_gmm_prior(10, 0.0), ContractError);
}

TEST(Gmm, SingleComponentTakesEverything) {
  std::mt19937_64 rng(1);
  GmmExpectations ctx(random_state(2, 2, rng));
  // keep only the first component
  ctx.e_log_pi.conservativeResize(1);
  ctx.half_e_logdet.conservativeResize(1);
  ctx.d_over_beta.conservativeResize(1);
  ctx.means.resize(1);
  ctx.scaled_w.resize(1);
  for (const Eigen::Vector2d& x : {Eigen::Vector2d(0, 0), Eigen::Vector2d(100, -40), Eigen::Vector2d(-3, 1e3)}) {
    const auto local = gmm_local_step(x, ctx);
    ASSERT_EQ(local.responsibilities.size(), 1);
    EXPECT_EQ(local.responsibilities[0], 1.0);
  }
}

TEST(Gmm, MirrorComponentsSplitEvenly) {
  const Eigen::Matrix2d w = Eigen::Matrix2d::Identity() * 0.5;
  ModelState s;
  const auto dir = expfam::dirichlet_from_concentration(Eigen::Vector2d(3, 3));
  s.globals.push_back({dir, dir});
  const auto a = nw(Eigen::Vector2d(-1.5, 2), 2.0, w, 4.0);
  const auto b = nw(Eigen::Vector2d(1.5, 2), 2.0, w, 4.0);
  s.globals.push_back({a, a});
  s.globals.push_back({b, b});
  const GmmExpectations ctx(s);
  for (double y : {-5.0, 0.0, 2.0, 17.0}) {
    const auto r = gmm_local_step(Eigen::Vector2d(0, y), ctx).responsibilities;
    EXPECT_NEAR(r[0], 0.5, 1e-10);
    EXPECT_NEAR(r[1], 0.5, 1e-10);
  }
}

TEST(Gmm, ResponsibilitiesMatchIndependentFormulas) {
  std::mt19937_64 rng(2);
  const ModelState s = random_state(3, 2, rng);
  const GmmExpectations ctx(s);
  std::normal_distribution<double> nd(0.0, 3.0);
  Eigen::MatrixXd x(20, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
  const Eigen::MatrixXd expect = oracle::responsibilities(to_oracle(s), x);
  for (Eigen::Index n = 0; n < 20; ++n) {
    const auto r = gmm_local_step(x.row(n).transpose(), ctx).responsibilities;
    EXPECT_NEAR(r.sum(), 1.0, 1e-12);
    for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(r[k], expect(n, k), 1e-8);
  }
}

TEST(Gmm, StatisticsLayout) {
  std::mt19937_64 rng(3);
  const GmmExpectations ctx(random_state(2, 2, rng));
  const Eigen::Vector2d x(0.3, -1.2);
  const auto local = gmm_local_step(x, ctx);
  EXPECT_EQ(local.mixing.values, local.responsibilities);
  for (int k = 0; k < 2; ++k) {
    const double r = local.responsibilities[k];
    const auto& v = local.components[static_cast<std::size_t>(k)].values;
    ASSERT_EQ(v.size(), 7);
    EXPECT_DOUBLE_EQ(v[0], r * 0.3);
    EXPECT_DOUBLE_EQ(v[1], r * -1.2);
    EXPECT_DOUBLE_EQ(v[2], r);
    EXPECT_DOUBLE_EQ(v[3], r * 0.09);
    EXPECT_DOUBLE_EQ(v[4], r * 0.3 * -1.2);
    EXPECT_DOUBLE_EQ(v[5], r * 1.44);
    EXPECT_DOUBLE_EQ(v[6], r);
  }
  EXPECT_THROW(gmm_local_step(Eigen::Vector3d(1, 2, 3), ctx), ContractError);
}

TEST(Gmm, ExtremeDistanceStaysFinite) {
  std::mt19937_64 rng(4);
  const GmmExpectations ctx(random_state(3, 2, rng));
  const auto r = gmm_local_step(Eigen::Vector2d(1e6, -1e6), ctx).responsibilities;
  EXPECT_TRUE(r.allFinite());
  EXPECT_NEAR(r.sum(), 1.0, 1e-12);
}

TEST(Gmm, EmptyDataAtPriorHasZeroObjective) {
  GmmHyper h;
  h.k = 3;
  h.prior_mean = Eigen::Vector2d(0, 0);
  h.prior_scale = Eigen::Matrix2d::Identity();
  GmmModel model(Eigen::MatrixXd(0, 2), h);
  EXPECT_EQ(model.elbo(model.prior_state()), 0.0);
}

TEST(Gmm, DuplicateDatumAddsItsOwnTerm) {
  const auto data = data::gen_gmm_synthetic(40, data::GmmClusterSpec::four_corners(), 3);
  GmmHyper h;
  h.prior_mean = Eigen::Vector2d(0, 0);
  h.prior_scale = Eigen::Matrix2d::Identity() / 40.0;
  GmmModel a(data.x, h);
  Eigen::MatrixXd more(41, 2);
  more.topRows(40) = data.x;
  more.row(40) = data.x.row(7);
  GmmModel b(more, h);
  const ModelState s = a.init_globals(9);
  const GmmExpectations ctx(s);
  EXPECT_NEAR(b.elbo(s) - a.elbo(s), a.datum_elbo(data.x.row(7).transpose(), ctx), 1e-9);
}

TEST(Gmm, ObjectiveMatchesMonteCarlo) {
  // K = 2, 10 points in 1-D
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd x(10, 1);
  for (Eigen::Index i = 0; i < 10; ++i) x(i, 0) = (i % 2 ? 2.0 : -2.0) + nd(rng);
  GmmHyper h;
  h.k = 2;
  GmmModel model(x, h);
  svi::Engine e(model, model.init_globals(1), svi::EngineOptions{});
  e.step();
  const ModelState s = e.state();
  const auto mc = oracle::mc_elbo(to_oracle(s), expfam::dirichlet_concentration(model.mixing_prior()),
                                  to_oracle(model.component_prior()), x, 1'000'000, 123);
  EXPECT_NEAR(model.elbo(s), mc.mean, 3.0 * mc.stderr_) << "mc " << mc.mean << " se " << mc.stderr_;
}

TEST(Gmm, BatchSweepMatchesTextbookUpdates) {
  const auto data = data::gen_gmm_synthetic(60, data::GmmClusterSpec::four_corners(), 2);
  GmmHyper h;
  h.k = 3;
  GmmModel model(data.x, h);
  svi::Engine e(model, model.init_globals(4), svi::EngineOptions{});
  oracle::GmmPosterior q = to_oracle(e.state());
  const Eigen::VectorXd a0 = expfam::dirichlet_concentration(model.mixing_prior());
  const auto p0 = to_oracle(model.component_prior());
  for (int sweep = 0; sweep < 3; ++sweep) {
    e.step();
    q = oracle::batch_step(q, a0, p0, data.x);
    const auto got = to_oracle(e.state());
    EXPECT_LT((got.alpha - q.alpha).cwiseAbs().maxCoeff(), 1e-8);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(got.comps[k].beta, q.comps[k].beta, 1e-8);
      EXPECT_NEAR(got.comps[k].nu, q.comps[k].nu, 1e-8);
      EXPECT_LT((got.comps[k].m - q.comps[k].m).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LT((got.comps[k].w - q.comps[k].w).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Gmm, InitDeterministicAndUsable) {
  const auto data = data::gen_gmm_synthetic(250, data::GmmClusterSpec::four_corners(), 1);
  GmmModel model(data.x, GmmHyper{});
  const ModelState a = model.init_globals(17);
  const ModelState b = model.init_globals(17);
  const ModelState c = model.init_globals(18);
  ASSERT_EQ(a.globals.size(), 5u);
  bool differs = false;
  for (std::size_t g = 0; g < a.globals.size(); ++g) {
    EXPECT_EQ(a.globals[g].lambda.values, b.globals[g].lambda.values);
    differs |= a.globals[g].lambda.values != c.globals[g].lambda.values;
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(a.globals[0].lambda.values, model.mixing_prior().values);
  const Eigen::MatrixXd r = model.responsibilities(a);
  for (Eigen::Index n = 0; n < r.rows(); ++n) {
    EXPECT_NEAR(r.row(n).sum(), 1.0, 1e-10);
    EXPECT_GE(r.row(n).minCoeff(), 0.0);
  }
}

TEST(Gmm, DefaultPriorTracksDataScale) {
  Eigen::MatrixXd x(4, 2);
  x << 0, 0, 2, 0, 0, 4, 2, 4;
  GmmModel model(x, GmmHyper{});
  const auto p = expfam::normal_wishart_params(model.component_prior());
  EXPECT_LT((p.mean - Eigen::Vector2d(1, 2)).norm(), 1e-12);
  EXPECT_EQ(p.dof, 4.0);
  EXPECT_EQ(p.beta, 1.0);
  // E[Lambda] = nu W = inverse population covariance diag(1, 4)
  const Eigen::Matrix2d expect = Eigen::Vector2d(1.0, 0.25).asDiagonal();
  EXPECT_LT((p.dof * p.scale - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gmm, ContractErrors) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 2);
  GmmHyper one;
  one.k = 1;
  EXPECT_THROW(GmmModel(x, one), ContractError);
  GmmHyper mismatch;
  mismatch.k = 3;
  mismatch.mixing_prior = dp_gmm_prior(4, 1.0);
  EXPECT_THROW(GmmModel(x, mismatch), ContractError);
  x(3, 1) = NAN;
  EXPECT_THROW(GmmModel(x, GmmHyper{}), ContractError);
}

TEST(Gmm, HardAssignmentsRecoverSeparatedClusters) {
  const auto data = data::gen_gmm_synthetic(250, data::GmmClusterSpec::four_corners(), 1);
  GmmModel model(data.x, GmmHyper{});
  svi::Engine e(model, model.init_globals(0), svi::EngineOptions{});
  for (int t = 0; t < 100; ++t) e.step();
  const auto z = model.hard_assignments(e.state());
  // the fitted partition agrees with the generating labels up to relabeling
  Eigen::Matrix4i table = Eigen::Matrix4i::Zero();
  for (std::size_t n = 0; n < z.size(); ++n) ++table(data.labels[n], z[n]);
  int agree = 0;
  for (int r = 0; r < 4; ++r) agree += table.row(r).maxCoeff();
  EXPECT_GE(agree, 245);
}

#include "sviplus/models/gmm.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "sviplus/error.hpp"
#include "sviplus/rng.hpp"
#include "sviplus/svi_engine.hpp"

namespace sviplus::models {
namespace {

constexpr double kLn2Pi = 1.8378770664093453;

Eigen::MatrixXd population_covariance(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(x.rows());
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

}  // namespace

expfam::NaturalParam dp_gmm_prior(std::size_t k_trunc, double mass) {
  if (k_trunc < 2) throw ContractError("dp_gmm_prior: truncation level must be >= 2");
  if (!(mass > 0.0)) throw ContractError("dp_gmm_prior: mass must be positive");
  return expfam::dirichlet_from_concentration(
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(k_trunc), mass / static_cast<double>(k_trunc)));
}

// ----------------------------------------------------------- expectations

GmmExpectations::GmmExpectations(const ModelState& state) {
  if (state.globals.size() < 2) throw ContractError("GMM state needs a mixing global and components");
  const std::size_t k = state.globals.size() - 1;
  e_log_pi = expfam::expected_suff_stats(state.globals[0].lambda).values;
  if (static_cast<std::size_t>(e_log_pi.size()) != k) throw ContractError("GMM mixing weights do not match K");
  half_e_logdet.resize(static_cast<Eigen::Index>(k));
  d_over_beta.resize(static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < k; ++c) {
    const auto& q = state.globals[c + 1].lambda;
    const auto p = expfam::normal_wishart_params(q);
    const auto stats = expfam::expected_suff_stats(q);
    half_e_logdet[c] = stats.values[stats.values.size() - 1];
    means.push_back(p.mean);
    scaled_w.push_back(p.dof * p.scale);
    d_over_beta[c] = static_cast<double>(q.family.dim) / p.beta;
  }
}

Eigen::VectorXd GmmExpectations::log_weights(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const std::size_t kk = k();
  const double dd = static_cast<double>(d());
  Eigen::VectorXd out(static_cast<Eigen::Index>(kk));
  for (std::size_t c = 0; c < kk; ++c) {
    const Eigen::VectorXd diff = x - means[c];
    const double quad = d_over_beta[c] + diff.dot(scaled_w[c] * diff);
    out[c] = e_log_pi[c] + half_e_logdet[c] - 0.5 * dd * kLn2Pi - 0.5 * quad;
  }
  return out;
}

GmmLocal gmm_local_step(const Eigen::Ref<const Eigen::VectorXd>& x, const GmmExpectations& ctx) {
  const std::size_t k = ctx.k();
  const std::size_t d = ctx.d();
  if (static_cast<std::size_t>(x.size()) != d) throw ContractError("gmm_local_step: datum dimension mismatch");
  const Eigen::VectorXd logw = ctx.log_weights(x);
  const double norm = log_sum_exp(logw);
  if (!std::isfinite(norm)) throw NumericalError("gmm_local_step: all log responsibilities are -inf or NaN");

  GmmLocal out;
  out.responsibilities = (logw.array() - norm).exp();
  // built directly so a single-component context (r = 1) still works
  out.mixing = {expfam::Family{expfam::FamilyKind::Dirichlet, k}, out.responsibilities};
  const expfam::Family nw = expfam::Family::normal_wishart(d);
  const Eigen::VectorXd outer = expfam::pack_symmetric(x * x.transpose());
  Eigen::VectorXd unit(nw.length());
  unit.head(d) = x;
  unit[d] = 1.0;
  unit.segment(d + 1, expfam::packed_size(d)) = outer;
  unit[unit.size() - 1] = 1.0;
  out.components.reserve(k);
  for (std::size_t c = 0; c < k; ++c) out.components.push_back({nw, out.responsibilities[c] * unit});
  return out;
}

// ------------------------------------------------------------------- model

GmmModel::GmmModel(Eigen::MatrixXd x, GmmHyper hyper) : x_(std::move(x)), k_(hyper.k) {
  // the mixing weights are a Dirichlet, which needs at least two categories
  if (k_ < 2) throw ContractError("GMM needs K >= 2");
  if (!x_.allFinite()) throw ContractError("GMM data contains non-finite values");
  const auto d = static_cast<std::size_t>(x_.cols());
  if (d < 1) throw ContractError("GMM data needs at least one column");

  if (hyper.mixing_prior) {
    mixing_prior_ = *hyper.mixing_prior;
    if (mixing_prior_.family != expfam::Family::dirichlet(k_))
      throw ContractError("GMM mixing prior does not match K");
  } else {
    if (!(hyper.dirichlet > 0.0)) throw ContractError("GMM Dirichlet concentration must be positive");
    mixing_prior_ = expfam::dirichlet_from_concentration(Eigen::VectorXd::Constant(k_, hyper.dirichlet));
  }

  expfam::NormalWishartParams p;
  const bool have_data = x_.rows() >= 2;
  if (!hyper.prior_mean && !have_data) throw ContractError("GMM prior mean needs data or an explicit value");
  p.mean = hyper.prior_mean ? *hyper.prior_mean : Eigen::VectorXd(x_.colwise().mean().transpose());
  p.beta = hyper.prior_beta;
  p.dof = hyper.prior_dof ? *hyper.prior_dof : static_cast<double>(d) + 2.0;
  if (hyper.prior_scale) {
    p.scale = *hyper.prior_scale;
  } else {
    if (!have_data) throw ContractError("GMM prior scale needs data or an explicit value");
    Eigen::MatrixXd cov = population_covariance(x_);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) cov = Eigen::MatrixXd::Identity(d, d) * std::max(cov.trace() / d, 1.0);
    // E[Lambda] = nu W = cov^-1.
    p.scale = cov.inverse() / p.dof;
  }
  if (static_cast<std::size_t>(p.mean.size()) != d) throw ContractError("GMM prior mean has the wrong dimension");
  component_prior_ = expfam::normal_wishart_from(p);
  expfam::validate(component_prior_);
}

ModelState GmmModel::prior_state() const {
  ModelState s;
  s.globals.push_back({mixing_prior_, mixing_prior_});
  for (std::size_t c = 0; c < k_; ++c) s.globals.push_back({component_prior_, component_prior_});
  return s;
}

ModelState GmmModel::init_globals(std::uint64_t seed) const {
  const auto n = static_cast<std::size_t>(x_.rows());
  if (n == 0) throw ContractError("GMM init needs data");
  Rng rng = make_stream(seed, "gmm-init", 0);
  const std::size_t sub_n = std::min(n, 25 * k_);
  const std::vector<std::size_t> sub = svi::sample_batch(n, sub_n, rng);

  // k-means++ seeding on the subsample.
  std::vector<Eigen::VectorXd> centers;
  centers.push_back(x_.row(static_cast<Eigen::Index>(sub[std::uniform_int_distribution<std::size_t>(0, sub_n - 1)(rng)]))
                        .transpose());
  std::vector<double> dist2(sub_n, std::numeric_limits<double>::infinity());
  while (centers.size() < k_) {
    double total = 0.0;
    for (std::size_t i = 0; i < sub_n; ++i) {
      dist2[i] = std::min(dist2[i], (x_.row(static_cast<Eigen::Index>(sub[i])).transpose() - centers.back()).squaredNorm());
      total += dist2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> by_distance(dist2.begin(), dist2.end());
      pick = by_distance(rng);
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, sub_n - 1)(rng);
    }
    centers.push_back(x_.row(static_cast<Eigen::Index>(sub[pick])).transpose());
  }

  const auto prior = expfam::normal_wishart_params(component_prior_);
  ModelState s;
  s.globals.push_back({mixing_prior_, mixing_prior_});
  for (const auto& c : centers) {
    expfam::NormalWishartParams p = prior;
    p.mean = c;
    s.globals.push_back({expfam::normal_wishart_from(p), component_prior_});
  }
  return s;
}

std::unique_ptr<LocalContext> GmmModel::context(const ModelState& state) const {
  return std::make_unique<GmmExpectations>(state);
}

void GmmModel::local_stats(std::size_t n, const LocalContext& ctx, std::size_t /*phase*/, LocalStats& out) const {
  const auto& e = static_cast<const GmmExpectations&>(ctx);
  const GmmLocal local = gmm_local_step(x_.row(static_cast<Eigen::Index>(n)).transpose(), e);
  out.clear();
  out.reserve(k_ + 1);
  auto push = [&out](std::uint32_t g, const Eigen::VectorXd& v) {
    out.push_back({g, {}, std::vector<double>(v.data(), v.data() + v.size())});
  };
  push(0, local.mixing.values);
  for (std::size_t c = 0; c < k_; ++c) push(static_cast<std::uint32_t>(c + 1), local.components[c].values);
}

double GmmModel::datum_elbo(const Eigen::Ref<const Eigen::VectorXd>& x, const GmmExpectations& ctx) const {
  const Eigen::VectorXd logw = ctx.log_weights(x);
  const double norm = log_sum_exp(logw);
  const Eigen::VectorXd r = (logw.array() - norm).exp();
  double acc = 0.0;
  for (Eigen::Index c = 0; c < r.size(); ++c)
    if (r[c] > 0.0) acc += r[c] * (logw[c] - std::log(r[c]));
  return acc;
}

double GmmModel::elbo(const ModelState& state) const {
  double acc = -expfam::kl_divergence(state.globals[0].lambda, state.globals[0].prior);
  for (std::size_t c = 1; c < state.globals.size(); ++c)
    acc -= expfam::kl_divergence(state.globals[c].lambda, state.globals[c].prior);
  if (x_.rows() == 0) return acc;
  const GmmExpectations ctx(state);
  for (Eigen::Index n = 0; n < x_.rows(); ++n) acc += datum_elbo(x_.row(n).transpose(), ctx);
  return acc;
}

Eigen::MatrixXd GmmModel::responsibilities(const ModelState& state) const {
  const GmmExpectations ctx(state);
  Eigen::MatrixXd r(x_.rows(), static_cast<Eigen::Index>(k_));
  for (Eigen::Index n = 0; n < x_.rows(); ++n) r.row(n) = gmm_local_step(x_.row(n).transpose(), ctx).responsibilities.transpose();
  return r;
}

std::vector<int> GmmModel::hard_assignments(const ModelState& state) const {
  const Eigen::MatrixXd r = responsibilities(state);
  std::vector<int> out(static_cast<std::size_t>(r.rows()));
  for (Eigen::Index n = 0; n < r.rows(); ++n) {
    Eigen::Index best = 0;
    r.row(n).maxCoeff(&best);
    out[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace sviplus::models

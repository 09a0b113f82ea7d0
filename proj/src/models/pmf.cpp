#include "sviplus/models/pmf.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "sviplus/error.hpp"
#include "sviplus/rng.hpp"

namespace sviplus::models {
namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

PmfExpectations::PmfExpectations(const ModelState& state, std::size_t users) : n_users(users) {
  mean.reserve(state.globals.size());
  second.reserve(state.globals.size());
  for (const auto& g : state.globals) {
    const expfam::MvnMoments m = expfam::mvn_moments(g.lambda);
    second.push_back(m.covariance + m.mean * m.mean.transpose());
    mean.push_back(m.mean);
  }
}

PmfLocal pmf_local_step(std::uint32_t user, std::uint32_t item, double y, const PmfExpectations& ctx,
                        double noise_var) {
  const std::size_t u = user;
  const std::size_t v = ctx.n_users + item;
  if (u >= ctx.n_users || v >= ctx.mean.size()) throw ContractError("pmf_local_step: index out of range");
  if (!std::isfinite(y)) throw ContractError("pmf_local_step: rating is not finite");
  const double prec = 1.0 / noise_var;
  const std::size_t d = static_cast<std::size_t>(ctx.mean[u].size());
  const expfam::Family fam = expfam::Family::mvn(d);

  auto stat = [&](std::size_t other) {
    expfam::SuffStat s{fam, Eigen::VectorXd(fam.length())};
    s.values.head(d) = prec * y * ctx.mean[other];
    s.values.tail(expfam::packed_size(d)) = -0.5 * prec * expfam::pack_symmetric(ctx.second[other]);
    return s;
  };
  return {stat(v), stat(u)};
}

PmfModel::PmfModel(data::RatingsDataset data, PmfHyper hyper) : data_(std::move(data)), hyper_(hyper) {
  if (hyper_.rank < 1) throw ContractError("PMF rank must be >= 1");
  if (!(hyper_.prior_var > 0.0) || !std::isfinite(hyper_.prior_var))
    throw ContractError("PMF prior variance must be positive");
  if (!(hyper_.noise_var > 0.0) || !std::isfinite(hyper_.noise_var))
    throw ContractError("PMF noise variance must be positive");
  for (const auto& r : data_.ratings) {
    if (r.user >= data_.n_users() || r.item >= data_.n_items()) throw ContractError("PMF rating index out of range");
    if (!std::isfinite(r.value)) throw ContractError("PMF rating is not finite");
  }
  const auto d = static_cast<Eigen::Index>(hyper_.rank);
  prior_ = expfam::mvn_from_mean_precision(Eigen::VectorXd::Zero(d),
                                           Eigen::MatrixXd::Identity(d, d) / hyper_.prior_var);
}

std::vector<std::size_t> PmfModel::phase_globals(std::size_t phase, const ModelState& state) const {
  if (!hyper_.alternating) return Model::phase_globals(phase, state);
  const std::size_t users = data_.n_users();
  std::vector<std::size_t> out(phase == 0 ? users : data_.n_items());
  std::iota(out.begin(), out.end(), phase == 0 ? std::size_t{0} : users);
  return out;
}

ModelState PmfModel::init_globals(std::uint64_t seed) const {
  Rng rng = make_stream(seed, "pmf-init", 0);
  std::normal_distribution<double> draw(0.0, std::sqrt(0.1));
  const auto d = static_cast<Eigen::Index>(hyper_.rank);
  const Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(d, d) / hyper_.prior_var;
  ModelState s;
  const std::size_t total = data_.n_users() + data_.n_items();
  s.globals.reserve(total);
  for (std::size_t g = 0; g < total; ++g) {
    Eigen::VectorXd mean(d);
    for (Eigen::Index i = 0; i < d; ++i) mean[i] = draw(rng);
    s.globals.push_back({expfam::mvn_from_mean_precision(mean, precision), prior_});
  }
  return s;
}

std::unique_ptr<LocalContext> PmfModel::context(const ModelState& state) const {
  return std::make_unique<PmfExpectations>(state, data_.n_users());
}

void PmfModel::local_stats(std::size_t n, const LocalContext& ctx, std::size_t phase, LocalStats& out) const {
  const auto& e = static_cast<const PmfExpectations&>(ctx);
  const data::Rating& r = data_.ratings[n];
  const PmfLocal local = pmf_local_step(r.user, r.item, r.value, e, hyper_.noise_var);
  out.clear();
  const bool users = !hyper_.alternating || phase == 0;
  const bool items = !hyper_.alternating || phase == 1;
  if (users) out.push_back({r.user, {}, to_std(local.user.values)});
  if (items) out.push_back({static_cast<std::uint32_t>(data_.n_users() + r.item), {}, to_std(local.item.values)});
}

double PmfModel::elbo(const ModelState& state) const {
  const PmfExpectations e(state, data_.n_users());
  const double s2 = hyper_.noise_var;
  const double norm = -0.5 * std::log(2.0 * std::numbers::pi * s2);
  double acc = 0.0;
  for (const auto& r : data_.ratings) {
    const std::size_t u = r.user;
    const std::size_t v = data_.n_users() + r.item;
    const double sq = r.value * r.value - 2.0 * r.value * e.mean[u].dot(e.mean[v]) +
                      (e.second[u].cwiseProduct(e.second[v])).sum();
    acc += norm - sq / (2.0 * s2);
  }
  for (const auto& g : state.globals) acc -= expfam::kl_divergence(g.lambda, g.prior);
  return acc;
}

double PmfModel::predict(const ModelState& state, std::uint32_t user, std::uint32_t item) const {
  const auto mu = expfam::mvn_moments(state.globals.at(user).lambda).mean;
  const auto mv = expfam::mvn_moments(state.globals.at(data_.n_users() + item).lambda).mean;
  return mu.dot(mv);
}

double PmfModel::rmse(const ModelState& state, const std::vector<data::Rating>& ratings) const {
  if (ratings.empty()) return 0.0;
  const PmfExpectations e(state, data_.n_users());
  double sse = 0.0;
  for (const auto& r : ratings) {
    const double diff = r.value - e.mean.at(r.user).dot(e.mean.at(data_.n_users() + r.item));
    sse += diff * diff;
  }
  return std::sqrt(sse / static_cast<double>(ratings.size()));
}

}  // namespace sviplus::models

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sviplus/data.hpp"
#include "sviplus/error.hpp"
#include "sviplus/rng.hpp"

namespace sviplus::data {
namespace {

Eigen::VectorXd draw_dirichlet(std::size_t k, double concentration, Rng& rng) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  Eigen::VectorXd v(k);
  for (std::size_t i = 0; i < k; ++i) v[i] = gamma(rng);
  const double total = v.sum();
  if (total > 0.0) {
    v /= total;
  } else {
    // Every draw underflowed; fall back to a single random atom.
    v.setZero();
    v[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
  }
  return v;
}

}  // namespace

GmmClusterSpec GmmClusterSpec::four_corners() {
  GmmClusterSpec spec;
  for (double sx : {-3.0, 3.0})
    for (double sy : {-3.0, 3.0}) {
      spec.means.push_back(Eigen::Vector2d(sx, sy));
      spec.covariances.push_back(Eigen::Matrix2d::Identity());
      spec.weights.push_back(0.25);
    }
  return spec;
}

FeatureMatrix gen_gmm_synthetic(std::size_t n, const GmmClusterSpec& spec, std::uint64_t seed) {
  const std::size_t k = spec.k();
  if (k == 0 || spec.covariances.size() != k || spec.weights.size() != k)
    throw ContractError("gen_gmm_synthetic: inconsistent cluster spec");
  if (n < k) throw ContractError("gen_gmm_synthetic: need n >= K");
  const auto d = spec.means.front().size();

  Rng rng = make_stream(seed, "gmm-synthetic", 0);
  std::discrete_distribution<std::size_t> pick(spec.weights.begin(), spec.weights.end());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[pick(rng)];

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  FeatureMatrix out;
  out.x.resize(static_cast<Eigen::Index>(n), d);
  out.labels.resize(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t row = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::MatrixXd chol = spec.covariances[c].llt().matrixL();
    for (std::size_t j = 0; j < counts[c]; ++j, ++row) {
      Eigen::VectorXd z(d);
      for (Eigen::Index i = 0; i < d; ++i) z[i] = normal(rng);
      out.x.row(static_cast<Eigen::Index>(order[row])) = (spec.means[c] + chol * z).transpose();
      out.labels[order[row]] = static_cast<int>(c);
    }
  }
  return out;
}

SyntheticRatings gen_ratings_synthetic(const RatingsGenOptions& o) {
  if (!(o.density > 0.0 && o.density <= 1.0)) throw ContractError("gen_ratings_synthetic: density must lie in (0, 1]");
  if (o.n_users == 0 || o.n_items == 0 || o.rank == 0) throw ContractError("gen_ratings_synthetic: empty shape");
  if (o.sigma2 < 0.0) throw ContractError("gen_ratings_synthetic: sigma2 must be >= 0");

  Rng rng = make_stream(o.seed, "ratings-synthetic", 0);
  std::normal_distribution<double> factor(0.0, std::pow(static_cast<double>(o.rank), -0.25));
  SyntheticRatings out;
  out.user_factors.resize(o.n_users, o.rank);
  out.item_factors.resize(o.n_items, o.rank);
  for (Eigen::Index i = 0; i < out.user_factors.size(); ++i) out.user_factors.data()[i] = factor(rng);
  for (Eigen::Index i = 0; i < out.item_factors.size(); ++i) out.item_factors.data()[i] = factor(rng);

  const std::size_t cells = o.n_users * o.n_items;
  const auto observed = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(o.density * cells)));
  std::vector<std::size_t> grid(cells);
  std::iota(grid.begin(), grid.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  chosen.reserve(observed);
  std::sample(grid.begin(), grid.end(), std::back_inserter(chosen), std::min(observed, cells), rng);

  std::normal_distribution<double> noise(0.0, std::sqrt(o.sigma2));
  out.data.user_ids.resize(o.n_users);
  out.data.item_ids.resize(o.n_items);
  std::iota(out.data.user_ids.begin(), out.data.user_ids.end(), 0LL);
  std::iota(out.data.item_ids.begin(), out.data.item_ids.end(), 0LL);
  out.data.ratings.reserve(chosen.size());
  for (std::size_t cell : chosen) {
    const auto u = static_cast<std::uint32_t>(cell / o.n_items);
    const auto v = static_cast<std::uint32_t>(cell % o.n_items);
    double y = out.user_factors.row(u).dot(out.item_factors.row(v)) + o.offset;
    if (o.sigma2 > 0.0) y += noise(rng);
    if (o.round_and_clip) y = std::clamp(std::round(y), 1.0, 5.0);
    out.data.ratings.push_back({u, v, y});
  }
  return out;
}

SyntheticCorpus gen_lda_synthetic(std::size_t docs, std::size_t vocab, std::size_t topics, std::size_t doc_len,
                                  std::uint64_t seed) {
  if (topics < 1 || vocab < topics) throw ContractError("gen_lda_synthetic: need V >= K >= 1");
  if (docs < 1 || doc_len < 1) throw ContractError("gen_lda_synthetic: need at least one token");
  Rng rng = make_stream(seed, "lda-synthetic", 0);
  SyntheticCorpus out;
  out.topics.resize(topics, vocab);
  std::vector<std::discrete_distribution<std::uint32_t>> word_of_topic;
  for (std::size_t k = 0; k < topics; ++k) {
    const Eigen::VectorXd beta = draw_dirichlet(vocab, 0.1, rng);
    out.topics.row(k) = beta.transpose();
    word_of_topic.emplace_back(beta.data(), beta.data() + beta.size());
  }
  out.corpus.vocab_size = vocab;
  out.corpus.docs.resize(docs);
  std::vector<std::uint32_t> counts(vocab);
  for (auto& doc : out.corpus.docs) {
    const Eigen::VectorXd theta = topics == 1 ? Eigen::VectorXd::Ones(1) : draw_dirichlet(topics, 0.5, rng);
    std::discrete_distribution<std::size_t> topic_of_token(theta.data(), theta.data() + theta.size());
    std::fill(counts.begin(), counts.end(), 0U);
    for (std::size_t i = 0; i < doc_len; ++i) ++counts[word_of_topic[topic_of_token(rng)](rng)];
    for (std::uint32_t w = 0; w < vocab; ++w)
      if (counts[w] > 0) {
        doc.words.push_back(w);
        doc.counts.push_back(counts[w]);
      }
  }
  return out;
}

}  // namespace sviplus::data

#include "sviplus/expfam.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <numbers>

#include "sviplus/error.hpp"

namespace sviplus::expfam {
namespace {

constexpr double kLn2 = std::numbers::ln2;
constexpr double kLnPi = 1.1447298858494002;  // ln(pi)
constexpr double kLn2Pi = 1.8378770664093453;  // ln(2 pi)

void require_kind(const NaturalParam& q, FamilyKind kind, const char* what) {
  if (q.family.kind != kind) throw ContractError(std::string(what) + ": wrong family " + q.family.name());
  if (static_cast<std::size_t>(q.values.size()) != q.family.length())
    throw ContractError(std::string(what) + ": layout length mismatch for " + q.family.name());
}

// Offsets into the Normal-Wishart layout.
struct NwLayout {
  std::size_t d;
  std::size_t lin() const { return 0; }
  std::size_t beta() const { return d; }
  std::size_t mat() const { return d + 1; }
  std::size_t dof() const { return d + 1 + packed_size(d); }
};

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

double log_det_spd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw InvalidParameter("matrix block is not positive definite");
  const auto& l = llt.matrixLLT();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) acc += std::log(l(i, i));
  return 2.0 * acc;
}

bool is_spd(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

}  // namespace

Family Family::dirichlet(std::size_t k) {
  if (k < 2) throw ContractError("Dirichlet family needs K >= 2");
  return {FamilyKind::Dirichlet, k};
}
Family Family::mvn(std::size_t d) {
  if (d < 1) throw ContractError("Gaussian family needs d >= 1");
  return {FamilyKind::MultivariateGaussian, d};
}
Family Family::normal_wishart(std::size_t d) {
  if (d < 1) throw ContractError("Normal-Wishart family needs d >= 1");
  return {FamilyKind::NormalWishart, d};
}

std::size_t Family::length() const {
  switch (kind) {
    case FamilyKind::Dirichlet:
      return dim;
    case FamilyKind::MultivariateGaussian:
      return dim + packed_size(dim);
    case FamilyKind::NormalWishart:
      return dim + 2 + packed_size(dim);
  }
  return 0;
}

std::string Family::name() const {
  switch (kind) {
    case FamilyKind::Dirichlet:
      return "dirichlet(" + std::to_string(dim) + ")";
    case FamilyKind::MultivariateGaussian:
      return "mvn(" + std::to_string(dim) + ")";
    case FamilyKind::NormalWishart:
      return "normal_wishart(" + std::to_string(dim) + ")";
  }
  return "unknown";
}

Eigen::VectorXd pack_symmetric(const Eigen::MatrixXd& m) {
  const auto d = static_cast<std::size_t>(m.rows());
  Eigen::VectorXd out(packed_size(d));
  std::size_t k = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) out[k++] = 0.5 * (m(i, j) + m(j, i));
  return out;
}

Eigen::MatrixXd unpack_symmetric(const Eigen::Ref<const Eigen::VectorXd>& packed, std::size_t d) {
  Eigen::MatrixXd m(d, d);
  std::size_t k = 0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      m(i, j) = packed[k];
      m(j, i) = packed[k];
      ++k;
    }
  return m;
}

// ---------------------------------------------------------------- conversions

NaturalParam dirichlet_from_concentration(const Eigen::VectorXd& concentration) {
  NaturalParam q{Family::dirichlet(concentration.size()), concentration.array() - 1.0};
  return q;
}

Eigen::VectorXd dirichlet_concentration(const NaturalParam& q) {
  require_kind(q, FamilyKind::Dirichlet, "dirichlet_concentration");
  return q.values.array() + 1.0;
}

NaturalParam mvn_from_mean_precision(const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision) {
  const auto d = static_cast<std::size_t>(mean.size());
  if (precision.rows() != mean.size() || precision.cols() != mean.size())
    throw ContractError("mvn_from_mean_precision: dimension mismatch");
  NaturalParam q{Family::mvn(d), Eigen::VectorXd(Family::mvn(d).length())};
  q.values.head(d) = precision * mean;
  q.values.tail(packed_size(d)) = -0.5 * pack_symmetric(precision);
  return q;
}

MvnMoments mvn_moments(const NaturalParam& q) {
  require_kind(q, FamilyKind::MultivariateGaussian, "mvn_moments");
  const std::size_t d = q.family.dim;
  MvnMoments m;
  m.precision = -2.0 * unpack_symmetric(q.values.tail(packed_size(d)), d);
  Eigen::LLT<Eigen::MatrixXd> llt(m.precision);
  if (llt.info() != Eigen::Success) throw InvalidParameter("Gaussian precision block is not positive definite");
  m.covariance = llt.solve(Eigen::MatrixXd::Identity(d, d));
  m.mean = llt.solve(q.values.head(d));
  return m;
}

NaturalParam normal_wishart_from(const NormalWishartParams& p) {
  const auto d = static_cast<std::size_t>(p.mean.size());
  const Family fam = Family::normal_wishart(d);
  const NwLayout lay{d};
  Eigen::LLT<Eigen::MatrixXd> llt(p.scale);
  if (llt.info() != Eigen::Success) throw InvalidParameter("Normal-Wishart scale matrix is not positive definite");
  const Eigen::MatrixXd scale_inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
  NaturalParam q{fam, Eigen::VectorXd(fam.length())};
  q.values.segment(lay.lin(), d) = p.beta * p.mean;
  q.values[lay.beta()] = p.beta;
  q.values.segment(lay.mat(), packed_size(d)) = pack_symmetric(scale_inv + p.beta * p.mean * p.mean.transpose());
  q.values[lay.dof()] = p.dof - static_cast<double>(d);
  return q;
}

NormalWishartParams normal_wishart_params(const NaturalParam& q) {
  require_kind(q, FamilyKind::NormalWishart, "normal_wishart_params");
  const std::size_t d = q.family.dim;
  const NwLayout lay{d};
  NormalWishartParams p;
  p.beta = q.values[lay.beta()];
  if (!(p.beta > 0.0)) throw InvalidParameter("Normal-Wishart mean-precision scalar must be positive");
  p.mean = q.values.segment(lay.lin(), d) / p.beta;
  const Eigen::MatrixXd scale_inv =
      unpack_symmetric(q.values.segment(lay.mat(), packed_size(d)), d) - p.beta * p.mean * p.mean.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(scale_inv);
  if (llt.info() != Eigen::Success) throw InvalidParameter("Normal-Wishart scale block is not positive definite");
  p.scale = llt.solve(Eigen::MatrixXd::Identity(d, d));
  p.dof = q.values[lay.dof()] + static_cast<double>(d);
  return p;
}

// ------------------------------------------------------------------ validity

void validate(const NaturalParam& q) {
  if (static_cast<std::size_t>(q.values.size()) != q.family.length())
    throw ContractError("layout length mismatch for " + q.family.name());
  if (!all_finite(q.values)) throw InvalidParameter("non-finite natural parameter for " + q.family.name());
  const std::size_t d = q.family.dim;
  switch (q.family.kind) {
    case FamilyKind::Dirichlet:
      for (Eigen::Index k = 0; k < q.values.size(); ++k)
        if (!(q.values[k] > -1.0)) throw InvalidParameter("Dirichlet concentration must be positive");
      return;
    case FamilyKind::MultivariateGaussian:
      if (!is_spd(-2.0 * unpack_symmetric(q.values.tail(packed_size(d)), d)))
        throw InvalidParameter("Gaussian precision block is not positive definite");
      return;
    case FamilyKind::NormalWishart: {
      const NwLayout lay{d};
      const double beta = q.values[lay.beta()];
      if (!(beta > 0.0)) throw InvalidParameter("Normal-Wishart mean-precision scalar must be positive");
      if (!(q.values[lay.dof()] > -1.0)) throw InvalidParameter("Normal-Wishart degrees of freedom must exceed d - 1");
      const Eigen::VectorXd lin = q.values.segment(lay.lin(), d);
      const Eigen::MatrixXd scale_inv =
          unpack_symmetric(q.values.segment(lay.mat(), packed_size(d)), d) - lin * lin.transpose() / beta;
      if (!is_spd(scale_inv)) throw InvalidParameter("Normal-Wishart scale block is not positive definite");
      return;
    }
  }
}

bool is_valid(const NaturalParam& q) noexcept {
  try {
    validate(q);
    return true;
  } catch (...) {
    return false;
  }
}

// ----------------------------------------------------------------- functions

double digamma(double x) { return boost::math::digamma(x); }

double log_multigamma(double a, std::size_t d) {
  double acc = 0.25 * static_cast<double>(d * (d - 1)) * kLnPi;
  for (std::size_t j = 1; j <= d; ++j) acc += std::lgamma(a + 0.5 * (1.0 - static_cast<double>(j)));
  return acc;
}

double pairing(const Family& family, const Eigen::Ref<const Eigen::VectorXd>& natural,
               const Eigen::Ref<const Eigen::VectorXd>& stat) {
  if (static_cast<std::size_t>(natural.size()) != family.length() ||
      static_cast<std::size_t>(stat.size()) != family.length())
    throw ContractError("pairing: layout length mismatch for " + family.name());
  const std::size_t d = family.dim;
  auto packed_dot = [d](const auto& a, const auto& b) {
    double acc = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j, ++k) acc += (i == j ? 1.0 : 2.0) * a[k] * b[k];
    return acc;
  };
  switch (family.kind) {
    case FamilyKind::Dirichlet:
      return natural.dot(stat);
    case FamilyKind::MultivariateGaussian:
      return natural.head(d).dot(stat.head(d)) + packed_dot(natural.tail(packed_size(d)), stat.tail(packed_size(d)));
    case FamilyKind::NormalWishart: {
      const NwLayout lay{d};
      return natural.segment(lay.lin(), d).dot(stat.segment(lay.lin(), d)) + natural[lay.beta()] * stat[lay.beta()] +
             packed_dot(natural.segment(lay.mat(), packed_size(d)), stat.segment(lay.mat(), packed_size(d))) +
             natural[lay.dof()] * stat[lay.dof()];
    }
  }
  return 0.0;
}

SuffStat expected_suff_stats(const NaturalParam& q) {
  validate(q);
  const std::size_t d = q.family.dim;
  SuffStat s{q.family, Eigen::VectorXd(q.family.length())};
  switch (q.family.kind) {
    case FamilyKind::Dirichlet: {
      const Eigen::VectorXd alpha = q.values.array() + 1.0;
      const double psi_total = digamma(alpha.sum());
      for (Eigen::Index k = 0; k < alpha.size(); ++k) s.values[k] = digamma(alpha[k]) - psi_total;
      break;
    }
    case FamilyKind::MultivariateGaussian: {
      const MvnMoments m = mvn_moments(q);
      s.values.head(d) = m.mean;
      s.values.tail(packed_size(d)) = pack_symmetric(m.covariance + m.mean * m.mean.transpose());
      break;
    }
    case FamilyKind::NormalWishart: {
      const NormalWishartParams p = normal_wishart_params(q);
      const NwLayout lay{d};
      const Eigen::MatrixXd e_lambda = p.dof * p.scale;
      s.values.segment(lay.lin(), d) = e_lambda * p.mean;
      s.values[lay.beta()] = -0.5 * (static_cast<double>(d) / p.beta + p.mean.dot(e_lambda * p.mean));
      s.values.segment(lay.mat(), packed_size(d)) = -0.5 * pack_symmetric(e_lambda);
      double e_logdet = static_cast<double>(d) * kLn2 + log_det_spd(p.scale);
      for (std::size_t i = 1; i <= d; ++i) e_logdet += digamma(0.5 * (p.dof + 1.0 - static_cast<double>(i)));
      s.values[lay.dof()] = 0.5 * e_logdet;
      break;
    }
  }
  return s;
}

double log_partition(const NaturalParam& q) {
  validate(q);
  const std::size_t d = q.family.dim;
  const auto dd = static_cast<double>(d);
  switch (q.family.kind) {
    case FamilyKind::Dirichlet: {
      const Eigen::VectorXd alpha = q.values.array() + 1.0;
      double acc = -std::lgamma(alpha.sum());
      for (Eigen::Index k = 0; k < alpha.size(); ++k) acc += std::lgamma(alpha[k]);
      return acc;
    }
    case FamilyKind::MultivariateGaussian: {
      const MvnMoments m = mvn_moments(q);
      return 0.5 * m.mean.dot(m.precision * m.mean) - 0.5 * log_det_spd(m.precision);
    }
    case FamilyKind::NormalWishart: {
      const NormalWishartParams p = normal_wishart_params(q);
      return -0.5 * dd * std::log(p.beta) + 0.5 * p.dof * dd * kLn2 + 0.5 * p.dof * log_det_spd(p.scale) +
             log_multigamma(0.5 * p.dof, d);
    }
  }
  return 0.0;
}

double entropy(const NaturalParam& q) {
  const SuffStat s = expected_suff_stats(q);
  // Base measure: 1 for the Dirichlet, (2 pi)^(-d/2) for the Gaussian and Normal-Wishart.
  const double e_log_base =
      q.family.kind == FamilyKind::Dirichlet ? 0.0 : -0.5 * static_cast<double>(q.family.dim) * kLn2Pi;
  return log_partition(q) - pairing(q.family, q.values, s.values) - e_log_base;
}

double kl_divergence(const NaturalParam& q, const NaturalParam& p) {
  if (!(q.family == p.family))
    throw ContractError("kl_divergence: family mismatch " + q.family.name() + " vs " + p.family.name());
  const SuffStat s = expected_suff_stats(q);
  const Eigen::VectorXd diff = q.values - p.values;
  return pairing(q.family, diff, s.values) - log_partition(q) + log_partition(p);
}

// ---------------------------------------------------------------- projection

Eigen::MatrixXd repair_spd(const Eigen::MatrixXd& m, double eig_min) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  Eigen::VectorXd values = eig.eigenvalues();
  // Relative floor keeps the rebuilt matrix factorizable at large scales.
  const double floor = std::max(eig_min, 1e-12 * values.cwiseAbs().maxCoeff());
  values = values.cwiseMax(floor);
  const Eigen::MatrixXd& vecs = eig.eigenvectors();
  Eigen::MatrixXd out = vecs * values.asDiagonal() * vecs.transpose();
  return 0.5 * (out + out.transpose());
}

NaturalParam project_to_domain(const NaturalParam& lambda, const DomainFloor& floor) {
  if (static_cast<std::size_t>(lambda.values.size()) != lambda.family.length())
    throw ContractError("project_to_domain: layout length mismatch for " + lambda.family.name());
  if (!all_finite(lambda.values)) throw InvalidParameter("project_to_domain: non-finite input for " + lambda.family.name());
  if (is_valid(lambda)) return lambda;

  NaturalParam out = lambda;
  const std::size_t d = lambda.family.dim;
  switch (lambda.family.kind) {
    case FamilyKind::Dirichlet:
      for (Eigen::Index k = 0; k < out.values.size(); ++k)
        out.values[k] = std::max(out.values[k], floor.dirichlet_min - 1.0);
      break;
    case FamilyKind::MultivariateGaussian: {
      // The linear block is kept as is.
      const Eigen::MatrixXd precision = -2.0 * unpack_symmetric(out.values.tail(packed_size(d)), d);
      out.values.tail(packed_size(d)) = -0.5 * pack_symmetric(repair_spd(precision, floor.eig_min));
      break;
    }
    case FamilyKind::NormalWishart: {
      const NwLayout lay{d};
      double beta = out.values[lay.beta()];
      if (!(beta > 0.0)) {
        // A nonpositive pseudo-count leaves no usable mean; restart it at the origin.
        beta = floor.eig_min;
        out.values.segment(lay.lin(), d).setZero();
        out.values[lay.beta()] = beta;
      }
      out.values[lay.dof()] = std::max(out.values[lay.dof()], -1.0 + floor.dof_margin);
      const Eigen::VectorXd lin = out.values.segment(lay.lin(), d);
      const Eigen::MatrixXd outer = lin * lin.transpose() / beta;
      const Eigen::MatrixXd scale_inv = unpack_symmetric(out.values.segment(lay.mat(), packed_size(d)), d) - outer;
      // Adding the outer product back can cancel a floor that is tiny relative
      // to it, so the floor is raised until the stored block round-trips.
      double eig_floor = floor.eig_min;
      for (int attempt = 0; attempt < 12 && !is_valid(out); ++attempt, eig_floor *= 100.0)
        out.values.segment(lay.mat(), packed_size(d)) = pack_symmetric(repair_spd(scale_inv, eig_floor) + outer);
      break;
    }
  }
  if (!is_valid(out)) throw InvalidParameter("project_to_domain: could not repair " + lambda.family.name());
  return out;
}

}  // namespace sviplus::expfam

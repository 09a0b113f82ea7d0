#pragma once

// Exponential-family primitives for the three conjugate families the models
// use. Parameters live in flat vectors so that conjugate updates are plain
// vector arithmetic. Layouts (version 1):
//
//   Dirichlet(K)              natural  [alpha_k - 1]                      (K)
//                             stat     [ln pi_k]
//   MultivariateGaussian(d)   natural  [Lambda mu | -1/2 Lambda]          (d + d(d+1)/2)
//                             stat     [x | x x^T]
//   NormalWishart(d)          natural  [beta m | beta | W^-1 + beta m m^T | nu - d]
//                             stat     [Lambda mu | -1/2 mu^T Lambda mu | -1/2 Lambda | 1/2 ln|Lambda|]
//                             length   d + 1 + d(d+1)/2 + 1
//
// Symmetric d x d blocks are packed as the upper triangle, row-major:
// (0,0) (0,1) ... (0,d-1) (1,1) ... (d-1,d-1). A packed block stores matrix
// entries, so the pairing <eta, t> counts off-diagonal products twice.
//
// The Normal-Wishart places mu | Lambda ~ N(m, (beta Lambda)^-1) and
// Lambda ~ Wishart(W, nu) with E[Lambda] = nu W.

#include <Eigen/Dense>
#include <cstddef>
#include <string>

namespace sviplus::expfam {

inline constexpr int kLayoutVersion = 1;

enum class FamilyKind { Dirichlet, MultivariateGaussian, NormalWishart };

struct Family {
  FamilyKind kind = FamilyKind::Dirichlet;
  /// K for Dirichlet, d otherwise.
  std::size_t dim = 2;

  static Family dirichlet(std::size_t k);
  static Family mvn(std::size_t d);
  static Family normal_wishart(std::size_t d);

  /// Number of entries in the flat natural-parameter / statistic vector.
  std::size_t length() const;
  std::string name() const;

  friend bool operator==(const Family&, const Family&) = default;
};

inline std::size_t packed_size(std::size_t d) { return d * (d + 1) / 2; }

Eigen::VectorXd pack_symmetric(const Eigen::MatrixXd& m);
Eigen::MatrixXd unpack_symmetric(const Eigen::Ref<const Eigen::VectorXd>& packed, std::size_t d);

struct NaturalParam {
  Family family;
  Eigen::VectorXd values;
};

struct SuffStat {
  Family family;
  Eigen::VectorXd values;
};

/// Floors used by project_to_domain.
struct DomainFloor {
  double dirichlet_min = 1e-6;
  double dof_margin = 1e-3;
  double eig_min = 1e-8;
};

// Construction from / conversion to the usual parameterizations.

NaturalParam dirichlet_from_concentration(const Eigen::VectorXd& concentration);
Eigen::VectorXd dirichlet_concentration(const NaturalParam& q);

NaturalParam mvn_from_mean_precision(const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision);
struct MvnMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
  Eigen::MatrixXd covariance;
};
MvnMoments mvn_moments(const NaturalParam& q);

struct NormalWishartParams {
  Eigen::VectorXd mean;   // m
  double beta = 1.0;      // mean-precision scalar
  Eigen::MatrixXd scale;  // W
  double dof = 0.0;       // nu
};
NaturalParam normal_wishart_from(const NormalWishartParams& p);
NormalWishartParams normal_wishart_params(const NaturalParam& q);

/// Throws InvalidParameter when q violates its family's domain.
void validate(const NaturalParam& q);
bool is_valid(const NaturalParam& q) noexcept;

/// Inner product of a natural parameter and a statistic in the shared layout.
double pairing(const Family& family, const Eigen::Ref<const Eigen::VectorXd>& natural,
               const Eigen::Ref<const Eigen::VectorXd>& stat);

SuffStat expected_suff_stats(const NaturalParam& q);
double log_partition(const NaturalParam& q);
/// Differential entropy in nats.
double entropy(const NaturalParam& q);
/// KL(q || p). Throws ContractError when the families differ.
double kl_divergence(const NaturalParam& q, const NaturalParam& p);

/// Symmetrize, then raise eigenvalues below eig_min to eig_min.
Eigen::MatrixXd repair_spd(const Eigen::MatrixXd& m, double eig_min);

/// Nearest valid parameter under the clamping rules. Valid input is returned
/// unchanged; non-finite input throws InvalidParameter.
NaturalParam project_to_domain(const NaturalParam& lambda, const DomainFloor& floor = {});

// Special functions.
double digamma(double x);
/// ln Gamma_d(a), the multivariate log-gamma function.
double log_multigamma(double a, std::size_t d);

}  // namespace sviplus::expfam

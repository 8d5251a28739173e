#pragma once

#include <Eigen/Dense>

namespace pve {

// Observed data matrix with rows as observations.  Tall orientation (n >= p)
// is required throughout; callers with wide data should transpose first.
struct DataMatrix {
  Eigen::MatrixXd values;

  int n() const { return static_cast<int>(values.rows()); }
  int p() const { return static_cast<int>(values.cols()); }

  // Validates finiteness and orientation.
  static DataMatrix from(Eigen::MatrixXd m);
};

// Thin SVD x = u * diag(s) * v^T with s sorted descending and each column of
// v oriented so its largest-magnitude entry is positive (fixes the sign
// ambiguity deterministically).
struct SvdFactorization {
  Eigen::MatrixXd u;  // n x p
  Eigen::VectorXd s;  // p, descending, nonnegative
  Eigen::MatrixXd v;  // p x p
};

enum class NoiseSource { known, estimated };

// Per-entry noise variance of the matrix under analysis.
struct NoiseModel {
  double sigma2 = 1.0;
  NoiseSource source = NoiseSource::known;
};

SvdFactorization compute_svd(const DataMatrix& x);

// Removes column means without breaking the white-noise model: multiplies by
// the transpose of the orthonormal complement of the constant direction, so
// the result has n-1 rows and the same nonzero spectrum as the centered data.
DataMatrix center_reduce(const DataMatrix& x);

// Share of total squared spectrum carried by component k (1-based).
double sample_pve(const Eigen::VectorXd& s, int k);

// Population counterpart along the direction pair (u_k, v_k); zero when the
// mean matrix is zero.
double population_pve(const Eigen::VectorXd& u_k, const Eigen::VectorXd& v_k,
                      const Eigen::MatrixXd& theta);

}  // namespace pve

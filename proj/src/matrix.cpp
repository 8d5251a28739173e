#include "pve/matrix.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <string>

#include "pve/errors.hpp"

namespace pve {

DataMatrix DataMatrix::from(Eigen::MatrixXd m) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw DimensionError("data matrix must be non-empty");
  }
  if (m.rows() < m.cols()) {
    throw DimensionError("data matrix has more columns (" +
                         std::to_string(m.cols()) + ") than rows (" +
                         std::to_string(m.rows()) +
                         "); transpose so observations are rows");
  }
  if (!m.allFinite()) {
    throw InvalidInputError("data matrix contains non-finite entries");
  }
  return DataMatrix{std::move(m)};
}

SvdFactorization compute_svd(const DataMatrix& x) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x.values,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw NumericalError("SVD failed to converge");
  }
  SvdFactorization f{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  // Resolve the per-component sign ambiguity: orient each right singular
  // vector so its largest-magnitude entry is positive.
  for (int j = 0; j < f.v.cols(); ++j) {
    int arg_max = 0;
    f.v.col(j).cwiseAbs().maxCoeff(&arg_max);
    if (f.v(arg_max, j) < 0) {
      f.v.col(j) = -f.v.col(j);
      f.u.col(j) = -f.u.col(j);
    }
  }
  return f;
}

DataMatrix center_reduce(const DataMatrix& x) {
  const int n = x.n();
  if (n < 2) {
    throw DimensionError("centering needs at least two rows");
  }
  // Householder reflector P mapping the unit constant direction to e_1; its
  // trailing n-1 columns span the orthogonal complement of the constant
  // direction, so those rows of P*x carry the centered spectrum.
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(double(n)));
  w(0) -= 1.0;
  const double scale = 2.0 / w.squaredNorm();
  Eigen::MatrixXd px = x.values - scale * w * (w.transpose() * x.values);
  return DataMatrix::from(px.bottomRows(n - 1));
}

double sample_pve(const Eigen::VectorXd& s, int k) {
  if (k < 1 || k > s.size()) {
    throw InvalidInputError("component index out of range");
  }
  const double total = s.squaredNorm();
  if (total <= 0.0) {
    throw InvalidInputError("variance share undefined: all singular values are zero");
  }
  const double sk = s(k - 1);
  return sk * sk / total;
}

double population_pve(const Eigen::VectorXd& u_k, const Eigen::VectorXd& v_k,
                      const Eigen::MatrixXd& theta) {
  if (u_k.size() != theta.rows() || v_k.size() != theta.cols()) {
    throw DimensionError("singular vector lengths do not match the mean matrix");
  }
  const double total = theta.squaredNorm();
  if (total == 0.0) return 0.0;
  const double along = u_k.dot(theta * v_k);
  return along * along / total;
}

}  // namespace pve

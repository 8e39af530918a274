#include "elastinv/error.hpp"
#include "elastinv/inverse.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <random>

namespace elastinv {

namespace {

// Orthonormal basis of the column space, with column signs fixed by R so
// the map is deterministic.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& v) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(v);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(v.rows(), v.cols());
  const Eigen::MatrixXd r = qr.matrixQR().topRows(v.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < v.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace

SingularPairs smallest_singular_pairs(const SparseOperator& a, int k, Eigen::Index first_block_size) {
  const Eigen::Index n = a.cols();
  ELASTINV_REQUIRE(k >= 1 && k <= n, InvalidArgument, "smallest_singular_pairs: need 1 <= k <= columns");
  ELASTINV_REQUIRE(a.rows() >= 1, InvalidArgument, "smallest_singular_pairs: empty matrix");
  if (first_block_size <= 0 || first_block_size > n) first_block_size = n;

  const SparseOperator at = a.transpose();
  SparseOperator g = at * a;
  const double gmax = std::max(g.diagonal().maxCoeff(), 1e-300);
  // The shift keeps the factorization definite when A has a kernel; it is
  // far below the spectrum we care to separate.
  const double shift = 1e-10 * gmax;
  SparseOperator eye(n, n);
  eye.setIdentity();
  const SparseOperator shifted = g + shift * eye;
  Eigen::SimplicialLDLT<SparseOperator> ldlt(shifted);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
    throw SolverError("smallest_singular_pairs: factorization of the shifted normal matrix failed");

  const Eigen::Index p = std::min<Eigen::Index>(n, k + 4);
  std::mt19937_64 rng(0x5eed5eedULL);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Eigen::MatrixXd v(n, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i) v(i, j) = uni(rng);
  v = orthonormalize(v);

  SingularPairs out;
  Eigen::VectorXd sigma(p);
  Eigen::VectorXd prev = Eigen::VectorXd::Constant(p, -1.0);
  constexpr int kMaxIter = 400;
  for (int it = 0; it < kMaxIter; ++it) {
    v = orthonormalize(ldlt.solve(v));
    // Rayleigh-Ritz through A itself: the small SVD of A V avoids squaring
    // the condition number when reading off singular values.
    const Eigen::MatrixXd av = a * v;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(av, Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();  // descending
    Eigen::MatrixXd rot = svd.matrixV().rowwise().reverse();
    v = v * rot;
    sigma = s.reverse();
    out.iterations = it + 1;

    // Converged when the wanted Ritz vectors have small residuals on A^T A.
    double worst = 0.0;
    for (int j = 0; j < k; ++j) {
      const Eigen::VectorXd r = at * (a * v.col(j)) - sigma[j] * sigma[j] * v.col(j);
      worst = std::max(worst, r.norm());
    }
    const bool settled = ((sigma.head(k) - prev.head(k)).array().abs() <=
                          1e-15 * std::sqrt(gmax) + 1e-13 * sigma.head(k).array())
                             .all();
    prev = sigma;
    if (worst <= 1e-13 * gmax || (settled && it > 2)) break;
  }

  out.values.assign(sigma.data(), sigma.data() + k);
  out.vectors = v.leftCols(k);
  for (int j = 0; j < k; ++j) {
    out.vectors.col(j).normalize();
    if (out.vectors.col(j).head(first_block_size).sum() < 0.0) out.vectors.col(j) = -out.vectors.col(j);
  }
  return out;
}

SingularPairs smallest_singular_pairs(const InverseSystem& sys, int k) {
  return smallest_singular_pairs(sys.matrix, k, sys.num_triangles());
}

}  // namespace elastinv

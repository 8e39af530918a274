#include "elastinv/sparse.hpp"

#include "elastinv/error.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <cmath>

namespace elastinv {

SparseOperator consolidate(Eigen::Index rows, Eigen::Index cols, const std::vector<Triplet>& triplets) {
  SparseOperator m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  double max_abs = 0.0;
  for (Eigen::Index k = 0; k < m.nonZeros(); ++k) max_abs = std::max(max_abs, std::abs(m.valuePtr()[k]));
  const double cut = 1e-14 * max_abs;
  m.prune([cut](Eigen::Index, Eigen::Index, double v) { return std::abs(v) > cut; });
  m.makeCompressed();
  return m;
}

SpdSolver::SpdSolver(const SparseOperator& a, double rel_tol) : a_(a), rel_tol_(rel_tol) {
  ELASTINV_REQUIRE(a.rows() == a.cols(), InvalidArgument, "SpdSolver: matrix is not square");
  ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SparseOperator>>();
  ldlt_->analyzePattern(a_);
  refactor(a);
}

void SpdSolver::refactor(const SparseOperator& a) {
  a_ = a;
  ldlt_->factorize(a_);
  factor_ok_ = ldlt_->info() == Eigen::Success;
  if (factor_ok_) {
    // Reject factorizations that went indefinite.
    const auto d = ldlt_->vectorD();
    factor_ok_ = d.size() == 0 || d.minCoeff() > 0.0;
  }
}

Eigen::VectorXd SpdSolver::solve(const Eigen::VectorXd& b) const {
  ELASTINV_REQUIRE(b.size() == a_.rows(), InvalidArgument, "SpdSolver: rhs size mismatch");
  const double bnorm = b.norm();
  if (bnorm == 0.0) return Eigen::VectorXd::Zero(b.size());
  if (factor_ok_) {
    Eigen::VectorXd x = ldlt_->solve(b);
    if (ldlt_->info() == Eigen::Success && (a_ * x - b).norm() <= rel_tol_ * bnorm) return x;
    // One step of iterative refinement before giving up on the direct path.
    x += ldlt_->solve(Eigen::VectorXd(b - a_ * x));
    if ((a_ * x - b).norm() <= rel_tol_ * bnorm) return x;
  }
  Eigen::ConjugateGradient<SparseOperator, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(rel_tol_);
  cg.setMaxIterations(std::max<Eigen::Index>(1000, 20 * a_.rows()));
  cg.compute(a_);
  Eigen::VectorXd x = cg.solve(b);
  if (cg.info() != Eigen::Success || (a_ * x - b).norm() > 10.0 * rel_tol_ * bnorm) {
    throw SolverError("SpdSolver: direct and CG solves both failed to reach tolerance");
  }
  return x;
}

Eigen::MatrixXd SpdSolver::solve(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd x(b.rows(), b.cols());
  for (Eigen::Index c = 0; c < b.cols(); ++c) x.col(c) = solve(Eigen::VectorXd(b.col(c)));
  return x;
}

Eigen::VectorXd solve_spd(const SparseOperator& a, const Eigen::VectorXd& b, double rel_tol) {
  return SpdSolver(a, rel_tol).solve(b);
}

}  // namespace elastinv

#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <memory>
#include <vector>

namespace elastinv {

/// Compressed column-major sparse matrix used for every assembled operator.
using SparseOperator = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Sums duplicate (row, col) triplets and drops entries below
/// 1e-14 * max|entry|. The result is independent of triplet order up to
/// floating-point summation order, which is fixed by the input order.
SparseOperator consolidate(Eigen::Index rows, Eigen::Index cols, const std::vector<Triplet>& triplets);

/// Factorization of a symmetric positive (semi)definite operator with a
/// preconditioned conjugate-gradient fallback when the factorization fails
/// or its residual misses `rel_tol`.
class SpdSolver {
 public:
  explicit SpdSolver(const SparseOperator& a, double rel_tol = 1e-10);

  /// Refactors with new values on the same sparsity pattern.
  void refactor(const SparseOperator& a);

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

  Eigen::Index size() const { return a_.rows(); }
  bool used_fallback() const { return !factor_ok_; }

 private:
  SparseOperator a_;
  double rel_tol_;
  bool factor_ok_ = false;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseOperator>> ldlt_;
};

/// One-shot SPD solve.
Eigen::VectorXd solve_spd(const SparseOperator& a, const Eigen::VectorXd& b, double rel_tol = 1e-10);

}  // namespace elastinv

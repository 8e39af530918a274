#pragma once

// Discrete inverse problem: the block stiffness-to-force matrix acting on
// P0 coefficients and tested against interior P1 functions, the edge-jump
// TV operator, and a box-constrained TV-regularized least-squares solver.

#include "elastinv/fem.hpp"
#include "elastinv/forward.hpp"
#include "elastinv/sparse.hpp"
#include "elastinv/tensor_algebra.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace elastinv {

/// Block (2 N_int x N_T): entry (i, j) = area(T_j) (C^k : S_j) : e(phi_i)|T_j
/// for interior vector DOF i. `interior_dofs` comes from
/// interior_restriction(m).
SparseOperator assemble_A(const Mesh& m, const StrainFieldP0& strain, const Tensor4Sym& ck,
                          std::span<const int> interior_dofs);

/// Exact pairing <f, phi_i> for a per-triangle constant vector source
/// (N_T x 2) against interior vector DOFs.
Eigen::VectorXd assemble_F(const Mesh& m, const Eigen::MatrixXd& force, std::span<const int> interior_dofs);

struct SystemOptions {
  /// Divide each measurement's rows by the RMS strain of its field so the
  /// system does not depend on the displacement amplitude.
  bool normalize = true;
};

/// Stacked system AM = F with row blocks per measurement and column blocks
/// per basis tensor.
struct InverseSystem {
  MeshPtr mesh;
  std::vector<Tensor4Sym> model;
  std::vector<int> interior_dofs;
  std::vector<StrainFieldP0> strains;
  /// Row scale applied to each measurement (1 when not normalized).
  std::vector<double> row_scale;
  /// blocks[l][k] is the (already scaled) block for measurement l, tensor k.
  std::vector<std::vector<SparseOperator>> blocks;
  SparseOperator matrix;
  Eigen::VectorXd rhs;

  int num_measurements() const { return static_cast<int>(blocks.size()); }
  int num_coefficients() const { return static_cast<int>(model.size()); }
  int num_triangles() const { return mesh->num_triangles(); }
  int num_interior_nodes() const { return mesh->num_interior_nodes(); }
  Eigen::Index rows() const { return matrix.rows(); }
  Eigen::Index cols() const { return matrix.cols(); }
};

/// Assembles the system for displacement fields on one mesh. `forces`, when
/// given, holds one per-triangle source (N_T x 2) per measurement; the
/// static case uses F = 0.
InverseSystem assemble_system(const MeshPtr& mesh, std::span<const VectorFieldP1> displacements,
                              std::span<const Tensor4Sym> model, std::span<const Eigen::MatrixXd> forces = {},
                              const SystemOptions& opts = {});
InverseSystem assemble_system(const ForwardDataset& dataset, std::span<const Tensor4Sym> model,
                              const SystemOptions& opts = {});

/// Edge-jump operator: one row per internal edge with +length at tri_i and
/// -length at tri_j. Each edge is stored once, so ||L mu||_1 is the total
/// variation of the P0 function mu.
struct TVOperator {
  SparseOperator matrix;

  Eigen::Index num_edges() const { return matrix.rows(); }
  double seminorm(const Eigen::VectorXd& mu) const { return (matrix * mu).lpNorm<1>(); }
};

TVOperator build_tv(const Mesh& m);

struct RegParams {
  /// Per-coefficient TV weight (a single value is broadcast).
  std::vector<double> eps_tv{1e-4};
  /// Per-coefficient lower bound (a single value is broadcast).
  std::vector<double> mu_min{1.0};
  double tol_primal = 1e-6;
  double tol_dual = 1e-6;
  int max_iterations = 5000;
  /// Initial penalty; <= 0 picks one from the diagonal of 2 A^T A.
  double rho = 0.0;
  /// Residual balancing: rho is multiplied (divided) by `rho_factor` when
  /// the primal (dual) residual exceeds `rho_ratio` times the other.
  bool adaptive_rho = true;
  double rho_ratio = 10.0;
  double rho_factor = 2.0;
  /// Over-relaxation parameter in (0, 2).
  double relaxation = 1.0;

  void validate(int num_coefficients) const;
  double eps_for(int k) const { return eps_tv.size() == 1 ? eps_tv[0] : eps_tv[k]; }
  double min_for(int k) const { return mu_min.size() == 1 ? mu_min[0] : mu_min[k]; }
};

struct SolveReport {
  /// Stacked solution M, N blocks of N_T values.
  Eigen::VectorXd solution;
  /// One field per coefficient when solved through an InverseSystem.
  std::vector<ScalarFieldP0> fields;
  /// J at the box-feasible iterate, one entry per iteration.
  std::vector<double> objective_history;
  std::vector<double> primal_residuals;
  std::vector<double> dual_residuals;
  std::vector<double> rho_history;
  double objective = 0.0;
  double data_misfit = 0.0;
  double tv_term = 0.0;
  /// Relative stationarity residual of the KKT conditions at the solution.
  double kkt_stationarity = 0.0;
  /// Largest bound violation (0 for the returned iterate).
  double kkt_feasibility = 0.0;
  int iterations = 0;
  bool converged = false;
  double wall_seconds = 0.0;
  /// Smallest singular values of A, filled on request by the caller.
  std::vector<double> singular_values;
};

/// J(M) = ||A M - F||^2 + sum_k eps_k ||L mu_k||_1.
double objective(const SparseOperator& a, const Eigen::VectorXd& f, const SparseOperator& tv, int num_blocks,
                 const RegParams& reg, const Eigen::VectorXd& m);

/// Minimizes J subject to M >= M_min by alternating direction splitting:
/// z_k = L mu_k (soft-thresholded), w = M (box-projected), and an M-update
/// with the factored matrix 2 A^T A + rho (L^T L + I). `tv` acts on one
/// coefficient block; `num_blocks` copies are applied block-diagonally.
/// Returns the best box-feasible iterate; `converged` is false when the
/// iteration limit was hit first.
SolveReport solve(const SparseOperator& a, const Eigen::VectorXd& f, const SparseOperator& tv, int num_blocks,
                  const RegParams& reg);
SolveReport solve(const InverseSystem& sys, const TVOperator& tv, const RegParams& reg);

struct SingularPairs {
  std::vector<double> values;
  /// Right singular vectors as columns, unit Euclidean norm.
  Eigen::MatrixXd vectors;
  int iterations = 0;
};

/// k smallest singular values of A with right vectors, by shifted block
/// inverse iteration on A^T A from a fixed start and a Rayleigh-Ritz step
/// through A. Each vector's first coefficient block has positive mean.
SingularPairs smallest_singular_pairs(const SparseOperator& a, int k, Eigen::Index first_block_size = 0);
SingularPairs smallest_singular_pairs(const InverseSystem& sys, int k);

}  // namespace elastinv

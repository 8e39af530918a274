#pragma once

// P0 / P1 finite element spaces on a triangulation, strains, and the
// assembled operators of the forward problem and the elastic smoother.
//
// Vector P1 fields store their coefficients node-interleaved: entry 2i is
// the x-component at node i and entry 2i+1 the y-component.

#include "elastinv/mesh.hpp"
#include "elastinv/sparse.hpp"
#include "elastinv/tensor_algebra.hpp"

#include <Eigen/Core>

#include <array>
#include <memory>
#include <span>
#include <vector>

namespace elastinv {

using MeshPtr = std::shared_ptr<const Mesh>;

/// One value per triangle.
struct ScalarFieldP0 {
  MeshPtr mesh;
  Eigen::VectorXd values;

  ScalarFieldP0() = default;
  ScalarFieldP0(MeshPtr m, Eigen::VectorXd v);
  static ScalarFieldP0 constant(MeshPtr m, double value);
};

/// Continuous piecewise-linear vector field, two values per node.
struct VectorFieldP1 {
  MeshPtr mesh;
  Eigen::VectorXd values;

  VectorFieldP1() = default;
  VectorFieldP1(MeshPtr m, Eigen::VectorXd v);

  Point2 at_node(int i) const { return {values[2 * i], values[2 * i + 1]}; }
  /// Interpolates an analytic field at the nodes.
  template <class F>
  static VectorFieldP1 from_function(MeshPtr m, F&& f) {
    Eigen::VectorXd v(2 * m->num_nodes());
    for (int i = 0; i < m->num_nodes(); ++i) {
      const Point2 val = f(m->nodes()[i]);
      v[2 * i] = val.x();
      v[2 * i + 1] = val.y();
    }
    return VectorFieldP1(std::move(m), std::move(v));
  }
};

/// Piecewise-constant symmetric strain, one SymMat2 per triangle.
struct StrainFieldP0 {
  MeshPtr mesh;
  std::vector<SymMat2> values;
};

/// Gradients of the three hat functions on triangle t, in vertex order.
std::array<Point2, 3> grad_basis(const Mesh& m, int t);

/// Symmetric gradient of vector basis function (local vertex k, component
/// c) on a triangle whose hat-function gradients are `grads`.
SymMat2 basis_strain(const std::array<Point2, 3>& grads, int k, int c);

/// Exact symmetric gradient of a P1 field on every triangle.
StrainFieldP0 strain_field(const VectorFieldP1& u);

/// Element stiffness sum_T area(T) (C_T : e(phi_j)) : e(phi_i) assembled
/// over the 2 N_n vector DOFs. `per_triangle` holds one tensor per triangle
/// (or a single tensor for a homogeneous medium). Throws InvalidArgument for
/// a tensor that is not positive definite on symmetric matrices.
SparseOperator assemble_elastic_stiffness(const Mesh& m, std::span<const Tensor4Sym> per_triangle);
SparseOperator assemble_elastic_stiffness(const Mesh& m, const Tensor4Sym& homogeneous);

/// Consistent P1 mass matrix on both components (2 N_n x 2 N_n).
SparseOperator assemble_mass_vec(const Mesh& m);

/// Stiffness for C = 2 Ident, i.e. u^T L u = 2 sum_T area(T) |e(u)|^2.
SparseOperator assemble_stiffness_vec(const Mesh& m);

/// Elastic smoothing: solves (M + eps L) v = M u over the whole mesh with
/// no boundary condition. eps = 0 returns u unchanged.
VectorFieldP1 elastic_smooth(const VectorFieldP1& u, double eps);

/// Vector DOF indices (2i, 2i+1) of the interior nodes, in node order.
std::vector<int> interior_restriction(const Mesh& m);

/// Per-triangle tensors C_T = sum_k mu_k[T] C^k.
std::vector<Tensor4Sym> combine_tensors(std::span<const Tensor4Sym> basis,
                                        std::span<const ScalarFieldP0> coefficients);

/// L2 norm and inner product of P0 fields, weighted by triangle area.
double l2_norm(const ScalarFieldP0& f);
double l2_inner(const ScalarFieldP0& a, const ScalarFieldP0& b);

}  // namespace elastinv

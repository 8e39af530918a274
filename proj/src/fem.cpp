#include "elastinv/fem.hpp"

#include "elastinv/error.hpp"

#include <cmath>

namespace elastinv {

ScalarFieldP0::ScalarFieldP0(MeshPtr m, Eigen::VectorXd v) : mesh(std::move(m)), values(std::move(v)) {
  ELASTINV_REQUIRE(mesh && values.size() == mesh->num_triangles(), InvalidArgument,
                   "ScalarFieldP0: one value per triangle required");
}

ScalarFieldP0 ScalarFieldP0::constant(MeshPtr m, double value) {
  const int nt = m->num_triangles();
  return ScalarFieldP0(std::move(m), Eigen::VectorXd::Constant(nt, value));
}

VectorFieldP1::VectorFieldP1(MeshPtr m, Eigen::VectorXd v) : mesh(std::move(m)), values(std::move(v)) {
  ELASTINV_REQUIRE(mesh && values.size() == 2 * mesh->num_nodes(), InvalidArgument,
                   "VectorFieldP1: two values per node required");
}

std::array<Point2, 3> grad_basis(const Mesh& m, int t) {
  const auto& tri = m.triangles()[t];
  const double area = m.area(t);
  ELASTINV_REQUIRE(area >= 1e-14, InvalidArgument, "grad_basis: degenerate triangle");
  const Point2& a = m.nodes()[tri[0]];
  const Point2& b = m.nodes()[tri[1]];
  const Point2& c = m.nodes()[tri[2]];
  const double inv = 1.0 / (2.0 * area);
  return {Point2(b.y() - c.y(), c.x() - b.x()) * inv, Point2(c.y() - a.y(), a.x() - c.x()) * inv,
          Point2(a.y() - b.y(), b.x() - a.x()) * inv};
}

SymMat2 basis_strain(const std::array<Point2, 3>& grads, int k, int c) {
  const Point2& g = grads[k];
  return c == 0 ? SymMat2{g.x(), 0.0, 0.5 * g.y()} : SymMat2{0.0, g.y(), 0.5 * g.x()};
}

StrainFieldP0 strain_field(const VectorFieldP1& u) {
  const Mesh& m = *u.mesh;
  StrainFieldP0 s{u.mesh, std::vector<SymMat2>(m.num_triangles())};
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto g = grad_basis(m, t);
    const auto& tri = m.triangles()[t];
    Eigen::Matrix2d grad = Eigen::Matrix2d::Zero();
    for (int k = 0; k < 3; ++k) {
      const Point2 uk = u.at_node(tri[k]);
      grad += uk * g[k].transpose();
    }
    s.values[t] = symmetric_part(grad);
  }
  return s;
}

namespace {

// 3x6 matrix whose columns are the Voigt strains of the six local DOFs
// (vertex k, component c) -> column 2k + c.
Eigen::Matrix<double, 3, 6> strain_voigt_matrix(const std::array<Point2, 3>& g) {
  Eigen::Matrix<double, 3, 6> b;
  for (int k = 0; k < 3; ++k)
    for (int c = 0; c < 2; ++c) b.col(2 * k + c) = basis_strain(g, k, c).voigt();
  return b;
}

}  // namespace

SparseOperator assemble_elastic_stiffness(const Mesh& m, std::span<const Tensor4Sym> per_triangle) {
  const int nt = m.num_triangles();
  ELASTINV_REQUIRE(per_triangle.size() == 1 || static_cast<int>(per_triangle.size()) == nt,
                   InvalidArgument, "assemble_elastic_stiffness: need one tensor per triangle");
  for (const auto& c : per_triangle) {
    ELASTINV_REQUIRE(c.is_elliptic(), InvalidArgument,
                     "assemble_elastic_stiffness: tensor is not elliptic");
  }
  std::vector<Triplet> trips;
  trips.reserve(36 * static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t) {
    const Tensor4Sym& c = per_triangle.size() == 1 ? per_triangle[0] : per_triangle[t];
    const auto b = strain_voigt_matrix(grad_basis(m, t));
    const Eigen::Matrix<double, 6, 6> ke = m.area(t) * (b.transpose() * c.voigt() * b);
    const auto& tri = m.triangles()[t];
    for (int a = 0; a < 6; ++a)
      for (int bb = 0; bb < 6; ++bb)
        trips.emplace_back(2 * tri[a / 2] + a % 2, 2 * tri[bb / 2] + bb % 2, ke(a, bb));
  }
  const Eigen::Index n = 2 * m.num_nodes();
  return consolidate(n, n, trips);
}

SparseOperator assemble_elastic_stiffness(const Mesh& m, const Tensor4Sym& homogeneous) {
  return assemble_elastic_stiffness(m, std::span<const Tensor4Sym>(&homogeneous, 1));
}

SparseOperator assemble_mass_vec(const Mesh& m) {
  std::vector<Triplet> trips;
  trips.reserve(18 * static_cast<std::size_t>(m.num_triangles()));
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles()[t];
    const double a = m.area(t) / 12.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const double v = (i == j ? 2.0 : 1.0) * a;
        trips.emplace_back(2 * tri[i], 2 * tri[j], v);
        trips.emplace_back(2 * tri[i] + 1, 2 * tri[j] + 1, v);
      }
    }
  }
  const Eigen::Index n = 2 * m.num_nodes();
  return consolidate(n, n, trips);
}

SparseOperator assemble_stiffness_vec(const Mesh& m) {
  return assemble_elastic_stiffness(m, canonical(CanonicalTensor::Ident) + canonical(CanonicalTensor::Ident));
}

VectorFieldP1 elastic_smooth(const VectorFieldP1& u, double eps) {
  ELASTINV_REQUIRE(eps >= 0.0 && std::isfinite(eps), InvalidArgument,
                   "elastic_smooth: eps must be non-negative");
  if (eps == 0.0) return u;
  const Mesh& m = *u.mesh;
  const SparseOperator mass = assemble_mass_vec(m);
  const SparseOperator stiff = assemble_stiffness_vec(m);
  const SparseOperator lhs = mass + eps * stiff;
  const Eigen::VectorXd rhs = mass * u.values;
  return VectorFieldP1(u.mesh, SpdSolver(lhs).solve(rhs));
}

std::vector<int> interior_restriction(const Mesh& m) {
  std::vector<int> dofs;
  dofs.reserve(2 * m.num_interior_nodes());
  for (int i = 0; i < m.num_nodes(); ++i) {
    if (m.is_interior_node(i)) {
      dofs.push_back(2 * i);
      dofs.push_back(2 * i + 1);
    }
  }
  return dofs;
}

std::vector<Tensor4Sym> combine_tensors(std::span<const Tensor4Sym> basis,
                                        std::span<const ScalarFieldP0> coefficients) {
  ELASTINV_REQUIRE(!basis.empty() && basis.size() == coefficients.size(), InvalidArgument,
                   "combine_tensors: one coefficient field per basis tensor required");
  const Eigen::Index nt = coefficients[0].values.size();
  std::vector<Tensor4Sym> out(nt);
  for (std::size_t k = 0; k < basis.size(); ++k) {
    ELASTINV_REQUIRE(coefficients[k].values.size() == nt, InvalidArgument,
                     "combine_tensors: coefficient fields differ in length");
    for (Eigen::Index t = 0; t < nt; ++t) out[t] += coefficients[k].values[t] * basis[k];
  }
  return out;
}

double l2_inner(const ScalarFieldP0& a, const ScalarFieldP0& b) {
  ELASTINV_REQUIRE(a.mesh && a.values.size() == b.values.size(), InvalidArgument,
                   "l2_inner: fields live on different meshes");
  double s = 0.0;
  for (Eigen::Index t = 0; t < a.values.size(); ++t) s += a.mesh->area(t) * a.values[t] * b.values[t];
  return s;
}

double l2_norm(const ScalarFieldP0& f) { return std::sqrt(l2_inner(f, f)); }

}  // namespace elastinv

#include "elastinv/error.hpp"
#include "elastinv/inverse.hpp"
#include "solver_oracle.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <map>
#include <random>

using namespace elastinv;
using elastinv::testing::dual_reference;
using elastinv::testing::Instance;
using elastinv::testing::max_abs;
using elastinv::testing::random_graph_tv;
using elastinv::testing::random_instance;
using elastinv::testing::random_vector;
using elastinv::testing::share;
using elastinv::testing::two_triangle_square;

namespace {

const Rect kSquare{-1.0, 1.0, -1.0, 1.0};

DatasetParams small_params(bool crime = false) {
  DatasetParams p;
  p.h_forward = crime ? 0.1 : 0.05;
  p.h_inverse = 0.2;
  p.seed = 2;
  p.inverse_crime = crime;
  p.dirichlet = Segment{Side::Bottom, -1.0, 0.0};
  return p;
}

ForwardDataset small_dataset(const char* phantom, ModelKind model, int loads, bool crime = false,
                             DatasetParams p = small_params()) {
  p.inverse_crime = crime;
  if (crime) p.h_forward = 0.1;
  const auto all = default_loads(2.0);
  return make_dataset(phantom_by_id(phantom), model, std::span(all).first(loads), p);
}

/// Full-mesh P1 field with `interior` values on the interior DOFs, zero elsewhere.
VectorFieldP1 extend(const MeshPtr& m, std::span<const int> dofs, const Eigen::VectorXd& interior) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(2 * m->num_nodes());
  for (std::size_t i = 0; i < dofs.size(); ++i) v[dofs[i]] = interior[static_cast<Eigen::Index>(i)];
  return VectorFieldP1(m, v);
}

}  // namespace

// ---------------------------------------------------------------- assembly

TEST(AssembleA, AdjointMatchesElementOracle) {
  const auto d = small_dataset("a", ModelKind::Shear, 1);
  const MeshPtr m = d.mesh;
  const auto dofs = interior_restriction(*m);
  const auto s = strain_field(d.displacements[0]);
  std::mt19937_64 rng(4);
  for (const auto& ck : {canonical(CanonicalTensor::Ident), canonical(CanonicalTensor::Dilat),
                         canonical(CanonicalTensor::C3)}) {
    const SparseOperator a = assemble_A(*m, s, ck, dofs);
    ASSERT_EQ(a.rows(), static_cast<Eigen::Index>(dofs.size()));
    ASSERT_EQ(a.cols(), m->num_triangles());
    for (int trial = 0; trial < 3; ++trial) {
      const Eigen::VectorXd mu = random_vector(rng, m->num_triangles());
      const Eigen::VectorXd v = random_vector(rng, a.rows());
      const auto ev = strain_field(extend(m, dofs, v));
      double ref = 0.0;
      for (int t = 0; t < m->num_triangles(); ++t) ref += mu[t] * m->area(t) * frob_dd(ck.apply(s.values[t]), ev.values[t]);
      const double got = mu.dot(a.transpose() * v);
      EXPECT_NEAR(got, ref, 1e-12 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST(AssembleA, LinearInStrainAndTensorAndZeroForZeroStrain) {
  const auto d = small_dataset("a", ModelKind::Shear, 2);
  const MeshPtr m = d.mesh;
  const auto dofs = interior_restriction(*m);
  const auto s1 = strain_field(d.displacements[0]);
  const auto s2 = strain_field(d.displacements[1]);
  StrainFieldP0 sum{m, {}};
  for (int t = 0; t < m->num_triangles(); ++t) sum.values.push_back(s1.values[t] + 2.0 * s2.values[t]);
  const Tensor4Sym c1 = canonical(CanonicalTensor::Ident), c2 = canonical(CanonicalTensor::Dilat);
  const Eigen::MatrixXd lhs(assemble_A(*m, sum, c1, dofs));
  const Eigen::MatrixXd rhs = Eigen::MatrixXd(assemble_A(*m, s1, c1, dofs)) + 2.0 * Eigen::MatrixXd(assemble_A(*m, s2, c1, dofs));
  EXPECT_LE(max_abs(lhs - rhs), 1e-13 * max_abs(rhs));
  const Eigen::MatrixXd lt(assemble_A(*m, s1, c1 + c2, dofs));
  const Eigen::MatrixXd rt = Eigen::MatrixXd(assemble_A(*m, s1, c1, dofs)) + Eigen::MatrixXd(assemble_A(*m, s1, c2, dofs));
  EXPECT_LE(max_abs(lt - rt), 1e-13 * max_abs(rt));

  StrainFieldP0 zero{m, std::vector<SymMat2>(m->num_triangles())};
  EXPECT_EQ(assemble_A(*m, zero, c1, dofs).nonZeros(), 0);
}

TEST(AssembleA, SparsityFollowsVertexTriangleIncidence) {
  const auto d = small_dataset("a", ModelKind::Shear, 1);
  const MeshPtr m = d.mesh;
  const auto dofs = interior_restriction(*m);
  const SparseOperator a = assemble_A(*m, strain_field(d.displacements[0]), canonical(CanonicalTensor::Ident), dofs);
  for (int col = 0; col < a.outerSize(); ++col) {
    for (SparseOperator::InnerIterator it(a, col); it; ++it) {
      const int node = dofs[it.row()] / 2;
      const auto& tri = m->triangles()[it.col()];
      EXPECT_TRUE(tri[0] == node || tri[1] == node || tri[2] == node);
    }
  }
}

TEST(AssembleA, InverseCrimeIdentity) {
  const auto d = small_dataset("a", ModelKind::Shear, 2, true);
  const auto truth = rasterize(phantom_by_id("a"), d.mesh)[0];
  const auto dofs = interior_restriction(*d.mesh);
  for (const auto& u : d.displacements) {
    const SparseOperator a = assemble_A(*d.mesh, strain_field(u), canonical(CanonicalTensor::Ident), dofs);
    const Eigen::VectorXd r = a * truth.values;
    EXPECT_LE(max_abs(r), 1e-10 * max_abs(Eigen::MatrixXd(a)));
  }
}

TEST(AssembleF, ConstantSourcePairsWithHatIntegrals) {
  const MeshPtr m = share(build_structured(DomainSpec::free(kSquare), 0.25, 0.2, 6));
  const auto dofs = interior_restriction(*m);
  Eigen::MatrixXd force(m->num_triangles(), 2);
  force.col(0).setConstant(2.0);
  force.col(1).setConstant(-1.0);
  const Eigen::VectorXd f = assemble_F(*m, force, dofs);
  std::map<int, double> patch;
  for (int t = 0; t < m->num_triangles(); ++t)
    for (int v : m->triangles()[t]) patch[v] += m->area(t) / 3.0;
  for (std::size_t i = 0; i < dofs.size(); ++i) {
    const int node = dofs[i] / 2;
    const double g = dofs[i] % 2 == 0 ? 2.0 : -1.0;
    EXPECT_NEAR(f[static_cast<Eigen::Index>(i)], g * patch[node], 1e-14);
  }
}

TEST(AssembleSystem, BlockLayouts) {
  {
    const auto d = small_dataset("a", ModelKind::Shear, 1);
    const auto sys = assemble_system(d, model_basis(ModelKind::Shear));
    EXPECT_EQ(sys.rows(), 2 * sys.num_interior_nodes());
    EXPECT_EQ(sys.cols(), sys.num_triangles());
    EXPECT_EQ(sys.rhs.size(), sys.rows());
    EXPECT_EQ(sys.rhs.norm(), 0.0);
  }
  {
    const auto d = small_dataset("lame1", ModelKind::Lame, 2);
    const auto sys = assemble_system(d, model_basis(ModelKind::Lame));
    ASSERT_EQ(sys.num_measurements(), 2);
    ASSERT_EQ(sys.num_coefficients(), 2);
    const Eigen::Index r = 2 * sys.num_interior_nodes(), c = sys.num_triangles();
    const Eigen::MatrixXd full(sys.matrix);
    for (int l = 0; l < 2; ++l) {
      for (int k = 0; k < 2; ++k) {
        const Eigen::MatrixXd blk(sys.blocks[l][k]);
        EXPECT_EQ(max_abs(full.block(l * r, k * c, r, c) - blk), 0.0);
      }
    }
    // Lame blocks: 2 Ident acting on the mu block, Dilat on the lambda block.
    const auto dofs = interior_restriction(*sys.mesh);
    const Eigen::MatrixXd ref = sys.row_scale[1] * 2.0 *
        Eigen::MatrixXd(assemble_A(*sys.mesh, strain_field(d.displacements[1]), canonical(CanonicalTensor::Ident), dofs));
    EXPECT_LE(max_abs(Eigen::MatrixXd(sys.blocks[1][0]) - ref), 1e-14 * max_abs(ref));
  }
  {
    const auto d = small_dataset("aniso", ModelKind::Aniso, 4);
    const auto sys = assemble_system(d, model_basis(ModelKind::Aniso));
    EXPECT_EQ(sys.rows(), 8 * sys.num_interior_nodes());
    EXPECT_EQ(sys.cols(), 3 * sys.num_triangles());
  }
}

TEST(AssembleSystem, RejectsMismatchedInput) {
  const auto d = small_dataset("a", ModelKind::Shear, 1);
  EXPECT_THROW(assemble_system(d.mesh, {}, model_basis(ModelKind::Shear)), InvalidArgument);
  EXPECT_THROW(assemble_system(d.mesh, d.displacements, {}), InvalidArgument);
  const std::vector<Eigen::MatrixXd> two_forces(2, Eigen::MatrixXd::Zero(d.mesh->num_triangles(), 2));
  EXPECT_THROW(assemble_system(d.mesh, d.displacements, model_basis(ModelKind::Shear), two_forces), InvalidArgument);
  const MeshPtr other = share(build_structured(DomainSpec::free(kSquare), 0.5));
  const std::vector<VectorFieldP1> foreign{VectorFieldP1(other, Eigen::VectorXd::Zero(2 * other->num_nodes()))};
  EXPECT_THROW(assemble_system(d.mesh, foreign, model_basis(ModelKind::Shear)), InvalidArgument);
}

TEST(AssembleSystem, HomogeneityInDisplacementScale) {
  const auto d = small_dataset("a", ModelKind::Shear, 1);
  const auto basis = model_basis(ModelKind::Shear);
  const auto base = assemble_system(d, basis);
  const auto raw = assemble_system(d, basis, {.normalize = false});
  const auto tv = build_tv(*d.mesh);
  RegParams reg;
  reg.tol_primal = reg.tol_dual = 1e-10;
  reg.max_iterations = 100000;
  const auto ref = solve(base, tv, reg);
  for (double s : {0.5, 2.0, 10.0}) {
    std::vector<VectorFieldP1> scaled;
    for (const auto& u : d.displacements) scaled.emplace_back(u.mesh, s * u.values);
    const auto sys = assemble_system(d.mesh, scaled, basis);
    EXPECT_LE(max_abs(Eigen::MatrixXd(sys.matrix - base.matrix)), 1e-13 * max_abs(Eigen::MatrixXd(base.matrix)));
    const auto sraw = assemble_system(d.mesh, scaled, basis, {}, {.normalize = false});
    EXPECT_LE(max_abs(Eigen::MatrixXd(sraw.matrix - s * raw.matrix)), 1e-13 * s * max_abs(Eigen::MatrixXd(raw.matrix)));
    const auto rep = solve(sys, tv, reg);
    EXPECT_LE(max_abs(rep.solution - ref.solution), 1e-8 * max_abs(ref.solution)) << "s=" << s;
  }
}

// ---------------------------------------------------------------------- TV

TEST(TV, TwoTriangleExample) {
  const Mesh m = two_triangle_square();
  const TVOperator tv = build_tv(m);
  ASSERT_EQ(tv.num_edges(), 1);
  const Eigen::VectorXd lmu = tv.matrix * Eigen::Vector2d(2, 5);
  EXPECT_NEAR(lmu[0], -3.0 * std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(tv.seminorm(Eigen::Vector2d(2, 5)), 3.0 * std::sqrt(2.0), 1e-14);
  EXPECT_EQ(tv.seminorm(Eigen::Vector2d(4, 4)), 0.0);
}

TEST(TV, RowStructureAndJumpSumIdentity) {
  const Mesh m = build_structured(DomainSpec::free(kSquare), 0.2, 0.25, 8);
  const TVOperator tv = build_tv(m);
  const Eigen::MatrixXd l(tv.matrix);
  for (Eigen::Index r = 0; r < l.rows(); ++r) {
    int nz = 0;
    double pos = 0.0, neg = 0.0;
    for (Eigen::Index c = 0; c < l.cols(); ++c) {
      if (l(r, c) != 0.0) ++nz;
      if (l(r, c) > 0.0) pos = l(r, c);
      if (l(r, c) < 0.0) neg = l(r, c);
    }
    EXPECT_EQ(nz, 2);
    EXPECT_EQ(pos, -neg);
  }
  EXPECT_EQ(max_abs(l * Eigen::VectorXd::Ones(l.cols())), 0.0);

  // Direct traversal: triangles sharing two vertices, jump times edge length.
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd mu = random_vector(rng, m.num_triangles(), 1.0, 10.0);
    double direct = 0.0;
    for (int i = 0; i < m.num_triangles(); ++i) {
      for (int j = i + 1; j < m.num_triangles(); ++j) {
        std::vector<int> shared;
        for (int a : m.triangles()[i])
          for (int b : m.triangles()[j])
            if (a == b) shared.push_back(a);
        if (shared.size() != 2) continue;
        direct += std::abs(mu[i] - mu[j]) * (m.nodes()[shared[0]] - m.nodes()[shared[1]]).norm();
      }
    }
    EXPECT_NEAR(tv.seminorm(mu), direct, 1e-12 * direct);
  }
}

TEST(TV, GridAlignedInterfaceGivesContrastTimesLength) {
  // y = 0.2 is a grid line of the unjittered h = 0.1 mesh on (-1, 1)^2.
  const MeshPtr m = share(build_structured(DomainSpec::free(kSquare), 0.1));
  Phantom ph;
  ph.id = "step";
  ph.background = {1.0};
  ph.shapes = {Shape::half_plane({0.0, 1.0}, 0.2, {4.0})};
  const auto mu = rasterize(ph, m)[0];
  EXPECT_NEAR(build_tv(*m).seminorm(mu.values), 3.0 * 2.0, 1e-12);
}

// ------------------------------------------------------------------ solver

TEST(Solve, IdentityToyHitsBound) {
  SparseOperator a(2, 2);
  a.setIdentity();
  const Mesh m = two_triangle_square();
  const TVOperator tv = build_tv(m);
  for (double eps : {0.0, 1e-4, 1.0, 100.0}) {
    RegParams reg;
    reg.eps_tv = {eps};
    const auto rep = solve(a, Eigen::Vector2d::Zero(), tv.matrix, 1, reg);
    EXPECT_TRUE(rep.converged);
    EXPECT_NEAR(rep.solution[0], 1.0, 1e-9);
    EXPECT_NEAR(rep.solution[1], 1.0, 1e-9);
    EXPECT_GE(rep.solution.minCoeff(), 1.0 - 1e-9);
  }
  // Grid search confirms (1, 1) minimizes J over the box.
  RegParams reg;
  reg.eps_tv = {0.5};
  const double j11 = objective(a, Eigen::Vector2d::Zero(), tv.matrix, 1, reg, Eigen::Vector2d(1, 1));
  for (double x = 1.0; x <= 3.0; x += 0.05)
    for (double y = 1.0; y <= 3.0; y += 0.05)
      EXPECT_LE(j11, objective(a, Eigen::Vector2d::Zero(), tv.matrix, 1, reg, Eigen::Vector2d(x, y)));
}

TEST(Solve, UnregularizedLeastSquares) {
  std::mt19937_64 rng(21);
  const int n = 6;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) * 3.0;
  a += 0.5 * Eigen::MatrixXd::NullaryExpr(n, n, [&] { return std::normal_distribution<double>()(rng); });
  const Eigen::VectorXd x_true = random_vector(rng, n, 2.0, 5.0);
  const Eigen::VectorXd f = a * x_true;
  RegParams reg;
  reg.eps_tv = {0.0};
  reg.tol_primal = reg.tol_dual = 1e-12;
  reg.max_iterations = 100000;
  const auto rep = solve(a.sparseView(), f, random_graph_tv(rng, n), 1, reg);
  const Eigen::VectorXd direct = a.colPivHouseholderQr().solve(f);
  EXPECT_LE(max_abs(rep.solution - direct), 1e-8);
}

TEST(Solve, MatchesDualReferenceOnRandomInstances) {
  std::mt19937_64 rng(20240917);
  int active = 0;
  for (int trial = 0; trial < 24; ++trial) {
    const Instance in = random_instance(rng);
    ASSERT_LE(in.a.cols(), 10);
    const auto rep = solve(in.a, in.f, in.tv, in.blocks, in.reg);
    const auto [j_ref, dual] = dual_reference(in);
    EXPECT_LE(dual, j_ref * (1 + 1e-9));
    EXPECT_NEAR(rep.objective, j_ref, 1e-6 * j_ref) << "trial " << trial;
    EXPECT_GE(rep.objective, dual - 1e-9 * std::abs(dual));
    EXPECT_EQ(rep.kkt_feasibility, 0.0);
    EXPECT_LE(rep.kkt_stationarity, 1e-6) << "trial " << trial;
    active += (rep.solution.array() <= 1.0 + 1e-9).any();
  }
  EXPECT_GT(active, 0);  // the suite exercises the lower bound
}

TEST(Solve, ObjectiveHistoryAndResiduals) {
  const auto d = small_dataset("a", ModelKind::Shear, 1);
  const auto sys = assemble_system(d, model_basis(ModelKind::Shear));
  RegParams reg;
  reg.max_iterations = 50000;
  const auto rep = solve(sys, build_tv(*d.mesh), reg);
  ASSERT_TRUE(rep.converged);
  EXPECT_EQ(static_cast<int>(rep.objective_history.size()), rep.iterations);
  EXPECT_EQ(rep.primal_residuals.size(), rep.objective_history.size());
  EXPECT_LE(rep.primal_residuals.back(), reg.tol_primal);
  EXPECT_LE(rep.dual_residuals.back(), reg.tol_dual);
  EXPECT_NEAR(rep.objective, rep.data_misfit + rep.tv_term, 1e-14 * rep.objective);
  EXPECT_LE(rep.objective, *std::min_element(rep.objective_history.begin(), rep.objective_history.end()) + 1e-15);
  EXPECT_GE(rep.solution.minCoeff(), reg.mu_min[0] - 1e-9);
  ASSERT_EQ(rep.fields.size(), 1u);
  EXPECT_EQ(rep.fields[0].values, rep.solution);
}

TEST(Solve, IterationLimitReturnsFeasibleBestIterate) {
  const auto d = small_dataset("a", ModelKind::Shear, 1);
  const auto sys = assemble_system(d, model_basis(ModelKind::Shear));
  RegParams reg;
  reg.max_iterations = 3;
  const auto rep = solve(sys, build_tv(*d.mesh), reg);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.iterations, 3);
  EXPECT_GE(rep.solution.minCoeff(), 1.0);
  EXPECT_LE(rep.objective, *std::min_element(rep.objective_history.begin(), rep.objective_history.end()) + 1e-15);
}

TEST(Solve, RejectsInvalidParameters) {
  SparseOperator a(2, 2);
  a.setIdentity();
  const TVOperator tv = build_tv(two_triangle_square());
  auto bad = [&](auto mutate) {
    RegParams reg;
    mutate(reg);
    EXPECT_THROW(solve(a, Eigen::Vector2d::Zero(), tv.matrix, 1, reg), InvalidArgument);
  };
  bad([](RegParams& r) { r.eps_tv = {-1.0}; });
  bad([](RegParams& r) { r.mu_min = {0.0}; });
  bad([](RegParams& r) { r.tol_primal = 0.0; });
  bad([](RegParams& r) { r.eps_tv = {1.0, 2.0, 3.0}; });
  bad([](RegParams& r) { r.relaxation = 2.0; });
  EXPECT_THROW(solve(a, Eigen::Vector3d::Zero(), tv.matrix, 1, RegParams{}), InvalidArgument);
}

// ---------------------------------------------------------------- spectral

TEST(SingularPairs, DuplicatedColumnBlock) {
  std::mt19937_64 rng(31);
  const Eigen::MatrixXd b = Eigen::MatrixXd::NullaryExpr(40, 8, [&] { return std::normal_distribution<double>()(rng); });
  // Appending a copy of column 3 leaves the one-dimensional kernel (e_3 - e_8)/sqrt(2).
  Eigen::MatrixXd c(40, 9);
  c << b, b.col(3);
  const auto sp2 = smallest_singular_pairs(SparseOperator(c.sparseView()), 2, 8);
  Eigen::VectorXd null = Eigen::VectorXd::Zero(9);
  null[3] = 1.0;
  null[8] = -1.0;
  null /= std::sqrt(2.0);
  EXPECT_LE(sp2.values[0], 1e-8);
  EXPECT_GT(sp2.values[1], 1e-3);
  EXPECT_LE((sp2.vectors.col(0) - null).norm(), 1e-8);
  EXPECT_NEAR(sp2.vectors.col(0).norm(), 1.0, 1e-12);
}

TEST(SingularPairs, MatchDenseSvdOnAssembledSystem) {
  DatasetParams p = small_params();
  p.h_inverse = 0.225;  // 8 x 8 cells: 392 rows, 256 columns for Lame, n = 4
  const auto d = small_dataset("lame1", ModelKind::Lame, 4, false, p);
  const auto sys = assemble_system(d, model_basis(ModelKind::Lame));
  ASSERT_LE(sys.rows(), 500);
  ASSERT_LE(sys.cols(), 500);
  ASSERT_GE(sys.rows(), sys.cols());
  const int k = 4;
  const auto sp = smallest_singular_pairs(sys, k);
  const Eigen::MatrixXd dense(sys.matrix);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const Eigen::Index n = s.size();
  for (int i = 0; i < k; ++i) {
    EXPECT_NEAR(sp.values[i], s[n - 1 - i], 1e-9 * s[0]) << "i=" << i;
    const double overlap = std::abs(sp.vectors.col(i).dot(svd.matrixV().col(n - 1 - i)));
    EXPECT_NEAR(overlap, 1.0, 1e-6) << "i=" << i;
  }
  EXPECT_NEAR((sp.vectors.transpose() * sp.vectors - Eigen::MatrixXd::Identity(k, k)).norm(), 0.0, 1e-10);
  for (int i = 0; i < k; ++i) EXPECT_GT(sp.vectors.col(i).head(sys.num_triangles()).sum(), 0.0);
}

TEST(SingularPairs, InverseCrimeNullVector) {
  const auto d = small_dataset("a", ModelKind::Shear, 2, true);
  const auto sys = assemble_system(d, model_basis(ModelKind::Shear));
  const auto sp = smallest_singular_pairs(sys, 2);
  EXPECT_LE(sp.values[0] / sp.values[1], 1e-6);
  EXPECT_GT(sp.values[1], 0.0);
  Eigen::VectorXd truth = rasterize(phantom_by_id("a"), d.mesh)[0].values;
  truth.normalize();
  EXPECT_LE((sp.vectors.col(0) - truth).norm(), 1e-6);
}

TEST(SingularPairs, RejectsBadRank) {
  SparseOperator a(3, 2);
  a.setIdentity();
  EXPECT_THROW(smallest_singular_pairs(a, 0), InvalidArgument);
  EXPECT_THROW(smallest_singular_pairs(a, 3), InvalidArgument);
}

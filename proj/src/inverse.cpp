#include "elastinv/inverse.hpp"

#include "elastinv/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace elastinv {

SparseOperator assemble_A(const Mesh& m, const StrainFieldP0& strain, const Tensor4Sym& ck,
                          std::span<const int> interior_dofs) {
  ELASTINV_REQUIRE(static_cast<int>(strain.values.size()) == m.num_triangles(), InvalidArgument,
                   "assemble_A: strain field does not match mesh");
  std::vector<int> row_of(2 * m.num_nodes(), -1);
  for (std::size_t r = 0; r < interior_dofs.size(); ++r) row_of[interior_dofs[r]] = static_cast<int>(r);

  std::vector<Triplet> trips;
  trips.reserve(6 * static_cast<std::size_t>(m.num_triangles()));
  for (int t = 0; t < m.num_triangles(); ++t) {
    const SymMat2 stress = ck.apply(strain.values[t]);
    const auto g = grad_basis(m, t);
    const auto& tri = m.triangles()[t];
    for (int k = 0; k < 3; ++k) {
      for (int c = 0; c < 2; ++c) {
        const int row = row_of[2 * tri[k] + c];
        if (row < 0) continue;
        trips.emplace_back(row, t, m.area(t) * frob_dd(stress, basis_strain(g, k, c)));
      }
    }
  }
  return consolidate(static_cast<Eigen::Index>(interior_dofs.size()), m.num_triangles(), trips);
}

Eigen::VectorXd assemble_F(const Mesh& m, const Eigen::MatrixXd& force, std::span<const int> interior_dofs) {
  ELASTINV_REQUIRE(force.rows() == m.num_triangles() && force.cols() == 2, InvalidArgument,
                   "assemble_F: force needs one 2-vector per triangle");
  Eigen::VectorXd full = Eigen::VectorXd::Zero(2 * m.num_nodes());
  for (int t = 0; t < m.num_triangles(); ++t) {
    // Each hat function integrates to area/3 over the triangle.
    for (int v : m.triangles()[t]) {
      full[2 * v] += force(t, 0) * m.area(t) / 3.0;
      full[2 * v + 1] += force(t, 1) * m.area(t) / 3.0;
    }
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(interior_dofs.size()));
  for (std::size_t r = 0; r < interior_dofs.size(); ++r) out[r] = full[interior_dofs[r]];
  return out;
}

namespace {

double rms_strain(const Mesh& m, const StrainFieldP0& s) {
  double num = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) num += m.area(t) * frob_dd(s.values[t], s.values[t]);
  return std::sqrt(num / m.total_area());
}

SparseOperator stack_blocks(const std::vector<std::vector<SparseOperator>>& blocks) {
  const Eigen::Index br = blocks[0][0].rows();
  const Eigen::Index bc = blocks[0][0].cols();
  std::vector<Triplet> trips;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    for (std::size_t k = 0; k < blocks[l].size(); ++k) {
      const auto& b = blocks[l][k];
      for (int col = 0; col < b.outerSize(); ++col)
        for (SparseOperator::InnerIterator it(b, col); it; ++it)
          trips.emplace_back(l * br + it.row(), k * bc + it.col(), it.value());
    }
  }
  SparseOperator out(br * static_cast<Eigen::Index>(blocks.size()), bc * static_cast<Eigen::Index>(blocks[0].size()));
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

}  // namespace

InverseSystem assemble_system(const MeshPtr& mesh, std::span<const VectorFieldP1> displacements,
                              std::span<const Tensor4Sym> model, std::span<const Eigen::MatrixXd> forces,
                              const SystemOptions& opts) {
  ELASTINV_REQUIRE(!displacements.empty(), InvalidArgument, "assemble_system: at least one measurement required");
  ELASTINV_REQUIRE(!model.empty(), InvalidArgument, "assemble_system: empty model");
  ELASTINV_REQUIRE(forces.empty() || forces.size() == displacements.size(), InvalidArgument,
                   "assemble_system: one force per measurement required");
  InverseSystem sys;
  sys.mesh = mesh;
  sys.model.assign(model.begin(), model.end());
  sys.interior_dofs = interior_restriction(*mesh);
  ELASTINV_REQUIRE(!sys.interior_dofs.empty(), InvalidArgument, "assemble_system: mesh has no interior nodes");
  std::vector<Eigen::VectorXd> rhs_parts;
  for (std::size_t l = 0; l < displacements.size(); ++l) {
    ELASTINV_REQUIRE(displacements[l].mesh.get() == mesh.get() ||
                         displacements[l].values.size() == 2 * mesh->num_nodes(),
                     InvalidArgument, "assemble_system: measurement lives on another mesh");
    VectorFieldP1 u(mesh, displacements[l].values);
    sys.strains.push_back(strain_field(u));
    double scale = 1.0;
    if (opts.normalize) {
      const double r = rms_strain(*mesh, sys.strains.back());
      if (r > 0.0) scale = 1.0 / r;
    }
    sys.row_scale.push_back(scale);
    std::vector<SparseOperator> row;
    for (const auto& ck : model) row.push_back(scale * assemble_A(*mesh, sys.strains.back(), ck, sys.interior_dofs));
    sys.blocks.push_back(std::move(row));
    rhs_parts.push_back(forces.empty() ? Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.interior_dofs.size()))
                                       : Eigen::VectorXd(scale * assemble_F(*mesh, forces[l], sys.interior_dofs)));
  }
  sys.matrix = stack_blocks(sys.blocks);
  sys.rhs.resize(sys.matrix.rows());
  Eigen::Index off = 0;
  for (const auto& part : rhs_parts) {
    sys.rhs.segment(off, part.size()) = part;
    off += part.size();
  }
  return sys;
}

InverseSystem assemble_system(const ForwardDataset& dataset, std::span<const Tensor4Sym> model,
                              const SystemOptions& opts) {
  return assemble_system(dataset.mesh, dataset.displacements, model, {}, opts);
}

TVOperator build_tv(const Mesh& m) {
  const auto& edges = internal_edge_set(m);
  std::vector<Triplet> trips;
  trips.reserve(2 * edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    trips.emplace_back(static_cast<Eigen::Index>(e), edges[e].tri_i, edges[e].length);
    trips.emplace_back(static_cast<Eigen::Index>(e), edges[e].tri_j, -edges[e].length);
  }
  TVOperator tv;
  tv.matrix.resize(static_cast<Eigen::Index>(edges.size()), m.num_triangles());
  tv.matrix.setFromTriplets(trips.begin(), trips.end());
  tv.matrix.makeCompressed();
  return tv;
}

// ------------------------------------------------------------------ solver

void RegParams::validate(int num_coefficients) const {
  auto sized = [&](const std::vector<double>& v) {
    return v.size() == 1 || static_cast<int>(v.size()) == num_coefficients;
  };
  ELASTINV_REQUIRE(sized(eps_tv) && sized(mu_min), InvalidArgument,
                   "RegParams: eps_tv and mu_min need one value or one per coefficient");
  for (double e : eps_tv) ELASTINV_REQUIRE(e >= 0.0, InvalidArgument, "RegParams: eps_tv must be >= 0");
  for (double m : mu_min) ELASTINV_REQUIRE(m > 0.0, InvalidArgument, "RegParams: mu_min must be > 0");
  ELASTINV_REQUIRE(tol_primal > 0.0 && tol_dual > 0.0, InvalidArgument, "RegParams: tolerances must be > 0");
  ELASTINV_REQUIRE(max_iterations > 0, InvalidArgument, "RegParams: max_iterations must be > 0");
  ELASTINV_REQUIRE(relaxation > 0.0 && relaxation < 2.0, InvalidArgument, "RegParams: relaxation outside (0, 2)");
  ELASTINV_REQUIRE(rho_ratio > 1.0 && rho_factor > 1.0, InvalidArgument, "RegParams: bad residual balancing");
}

namespace {

SparseOperator block_diagonal(const SparseOperator& b, int copies) {
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(b.nonZeros()) * copies);
  for (int c = 0; c < copies; ++c)
    for (int col = 0; col < b.outerSize(); ++col)
      for (SparseOperator::InnerIterator it(b, col); it; ++it)
        trips.emplace_back(c * b.rows() + it.row(), c * b.cols() + it.col(), it.value());
  SparseOperator out(b.rows() * copies, b.cols() * copies);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

double soft(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

double objective(const SparseOperator& a, const Eigen::VectorXd& f, const SparseOperator& tv, int num_blocks,
                 const RegParams& reg, const Eigen::VectorXd& m) {
  double j = (a * m - f).squaredNorm();
  const Eigen::Index nt = tv.cols();
  for (int k = 0; k < num_blocks; ++k) {
    const double e = reg.eps_for(k);
    if (e > 0.0) j += e * (tv * m.segment(k * nt, nt)).lpNorm<1>();
  }
  return j;
}

SolveReport solve(const SparseOperator& a, const Eigen::VectorXd& f, const SparseOperator& tv, int num_blocks,
                  const RegParams& reg) {
  const auto start = std::chrono::steady_clock::now();
  reg.validate(num_blocks);
  const Eigen::Index nt = tv.cols();
  const Eigen::Index n = nt * num_blocks;
  const Eigen::Index ne = tv.rows();
  ELASTINV_REQUIRE(a.cols() == n && a.rows() == f.size(), InvalidArgument, "solve: dimension mismatch");

  // Rows of L are rescaled to unit jumps and the edge weight moves into the
  // soft-threshold, so the TV and box penalties act on comparable scales.
  Eigen::VectorXd row_weight = Eigen::VectorXd::Zero(ne);
  for (int col = 0; col < tv.outerSize(); ++col)
    for (SparseOperator::InnerIterator it(tv, col); it; ++it)
      row_weight[it.row()] = std::max(row_weight[it.row()], std::abs(it.value()));
  Eigen::VectorXd inv_weight = Eigen::VectorXd::Ones(ne);
  for (Eigen::Index e = 0; e < ne; ++e)
    if (row_weight[e] > 0.0) inv_weight[e] = 1.0 / row_weight[e];
  const SparseOperator unit_tv = inv_weight.asDiagonal() * tv;
  const SparseOperator lbig = block_diagonal(unit_tv, num_blocks);
  const SparseOperator lt = lbig.transpose();
  const SparseOperator at = a.transpose();
  const SparseOperator ata2 = 2.0 * SparseOperator(at * a);
  SparseOperator eye(n, n);
  eye.setIdentity();
  const SparseOperator penalty = SparseOperator(lt * lbig) + eye;
  const Eigen::VectorXd atf2 = 2.0 * (at * f);

  Eigen::VectorXd lower(n), thresh_eps(num_blocks * ne);
  for (int k = 0; k < num_blocks; ++k) {
    lower.segment(k * nt, nt).setConstant(reg.min_for(k));
    thresh_eps.segment(k * ne, ne) = reg.eps_for(k) * row_weight.cwiseMax(0.0);
  }

  double rho = reg.rho;
  if (rho <= 0.0) {
    const double d = ata2.diagonal().mean();
    rho = d > 0.0 ? d : 1.0;
  }
  // Penalty and factorization share one sparsity pattern for every rho.
  auto system_for = [&](double r) { return SparseOperator(ata2 + r * penalty); };
  SpdSolver solver(system_for(rho), 1e-9);

  Eigen::VectorXd x = lower;
  Eigen::VectorXd z = lbig * x;
  Eigen::VectorXd w = x;
  Eigen::VectorXd yz = Eigen::VectorXd::Zero(z.size());
  Eigen::VectorXd yw = Eigen::VectorXd::Zero(n);

  SolveReport rep;
  Eigen::VectorXd best = w;
  double best_j = objective(a, f, tv, num_blocks, reg, w);
  const double alpha = reg.relaxation;
  constexpr double kAbsTol = 1e-12;
  constexpr int kBalanceEvery = 5;
  constexpr int kMaxRhoUpdates = 60;
  int rho_updates = 0;

  for (int it = 0; it < reg.max_iterations; ++it) {
    const Eigen::VectorXd rhs = atf2 + rho * (lt * (z - yz) + (w - yw));
    x = solver.solve(rhs);
    const Eigen::VectorXd lx = lbig * x;
    const Eigen::VectorXd z_old = z;
    const Eigen::VectorXd w_old = w;
    const Eigen::VectorXd hz = alpha * lx + (1.0 - alpha) * z_old;
    const Eigen::VectorXd hw = alpha * x + (1.0 - alpha) * w_old;
    for (Eigen::Index e = 0; e < z.size(); ++e) z[e] = soft(hz[e] + yz[e], thresh_eps[e] / rho);
    w = (hw + yw).cwiseMax(lower);
    yz += hz - z;
    yw += hw - w;

    const double r_primal = std::sqrt((lx - z).squaredNorm() + (x - w).squaredNorm());
    const double r_dual = rho * (lt * (z - z_old) + (w - w_old)).norm();
    const double primal_scale = std::max(std::sqrt(lx.squaredNorm() + x.squaredNorm()),
                                         std::sqrt(z.squaredNorm() + w.squaredNorm()));
    const double dual_scale = rho * (lt * yz + yw).norm();
    const double rp = r_primal / std::max(primal_scale, kAbsTol);
    const double rd = r_dual / std::max(dual_scale, kAbsTol);

    const double j = objective(a, f, tv, num_blocks, reg, w);
    rep.objective_history.push_back(j);
    rep.primal_residuals.push_back(rp);
    rep.dual_residuals.push_back(rd);
    rep.rho_history.push_back(rho);
    if (j < best_j) {
      best_j = j;
      best = w;
    }
    rep.iterations = it + 1;
    if (rp <= reg.tol_primal && rd <= reg.tol_dual) {
      rep.converged = true;
      break;
    }

    if (reg.adaptive_rho && rho_updates < kMaxRhoUpdates && (it + 1) % kBalanceEvery == 0) {
      double scale = 1.0;
      if (rp > reg.rho_ratio * rd) {
        scale = reg.rho_factor;
      } else if (rd > reg.rho_ratio * rp) {
        scale = 1.0 / reg.rho_factor;
      }
      if (scale != 1.0) {
        rho *= scale;
        yz /= scale;
        yw /= scale;
        solver.refactor(system_for(rho));
        ++rho_updates;
      }
    }
  }

  rep.solution = rep.converged ? w : best;
  // Report the best feasible point seen: J at the final iterate may sit
  // slightly above an earlier one while the residuals settle.
  if (best_j < objective(a, f, tv, num_blocks, reg, rep.solution)) rep.solution = best;
  rep.objective = objective(a, f, tv, num_blocks, reg, rep.solution);
  rep.data_misfit = (a * rep.solution - f).squaredNorm();
  rep.tv_term = rep.objective - rep.data_misfit;

  // KKT: 2 A^T (A M - F) + L^T p + q = 0 with |p| <= eps and q <= 0
  // supported on the active bounds. Multipliers come from the scaled duals.
  Eigen::VectorXd p = rho * yz;
  for (Eigen::Index e = 0; e < p.size(); ++e) p[e] = std::clamp(p[e], -thresh_eps[e], thresh_eps[e]);
  Eigen::VectorXd q = (rho * yw).cwiseMin(0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    if (rep.solution[i] > lower[i] + 1e-9 * std::max(1.0, lower[i])) q[i] = 0.0;
  const Eigen::VectorXd grad = 2.0 * (at * (a * rep.solution - f));
  const Eigen::VectorXd stat = grad + lt * p + q;
  const double stat_scale = std::max({grad.norm(), (lt * p).norm(), q.norm(), atf2.norm(), kAbsTol});
  rep.kkt_stationarity = stat.norm() / stat_scale;
  rep.kkt_feasibility = std::max(0.0, (lower - rep.solution).maxCoeff());

  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

SolveReport solve(const InverseSystem& sys, const TVOperator& tv, const RegParams& reg) {
  ELASTINV_REQUIRE(tv.matrix.cols() == sys.num_triangles(), InvalidArgument,
                   "solve: TV operator does not match the system mesh");
  SolveReport rep = solve(sys.matrix, sys.rhs, tv.matrix, sys.num_coefficients(), reg);
  const Eigen::Index nt = sys.num_triangles();
  for (int k = 0; k < sys.num_coefficients(); ++k)
    rep.fields.emplace_back(sys.mesh, Eigen::VectorXd(rep.solution.segment(k * nt, nt)));
  return rep;
}

}  // namespace elastinv

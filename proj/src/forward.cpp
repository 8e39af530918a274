#include "elastinv/forward.hpp"

#include "elastinv/error.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <random>
#include <string>

namespace elastinv {

ModelKind parse_model(std::string_view name) {
  if (name == "shear") return ModelKind::Shear;
  if (name == "lame") return ModelKind::Lame;
  if (name == "aniso") return ModelKind::Aniso;
  throw InvalidArgument("unknown model '" + std::string(name) + "' (expected shear, lame or aniso)");
}

std::string_view to_string(ModelKind m) {
  switch (m) {
    case ModelKind::Shear: return "shear";
    case ModelKind::Lame: return "lame";
    case ModelKind::Aniso: return "aniso";
  }
  return "?";
}

std::vector<Tensor4Sym> model_basis(ModelKind m) {
  switch (m) {
    case ModelKind::Shear:
      return {canonical(CanonicalTensor::Ident)};
    case ModelKind::Lame:
      return {2.0 * canonical(CanonicalTensor::Ident), canonical(CanonicalTensor::Dilat)};
    case ModelKind::Aniso:
      return {canonical(CanonicalTensor::C1), canonical(CanonicalTensor::C2), canonical(CanonicalTensor::C3)};
  }
  return {};
}

std::vector<std::string> coefficient_names(ModelKind m) {
  switch (m) {
    case ModelKind::Shear: return {"mu"};
    case ModelKind::Lame: return {"mu", "lambda"};
    case ModelKind::Aniso: return {"mu1", "mu2", "mu3"};
  }
  return {};
}

// ---------------------------------------------------------------- phantoms

bool Shape::contains(const Point2& p) const {
  switch (kind) {
    case Kind::Disc: return (p - center).squaredNorm() <= radius * radius;
    case Kind::Box: return box.contains(p);
    case Kind::HalfPlane: return normal.dot(p) >= offset;
  }
  return false;
}

Shape Shape::disc(Point2 c, double r, std::vector<double> v) {
  Shape s;
  s.kind = Kind::Disc;
  s.center = c;
  s.radius = r;
  s.values = std::move(v);
  return s;
}

Shape Shape::rect(Rect b, std::vector<double> v) {
  Shape s;
  s.kind = Kind::Box;
  s.box = b;
  s.values = std::move(v);
  return s;
}

Shape Shape::half_plane(Point2 n, double off, std::vector<double> v) {
  Shape s;
  s.kind = Kind::HalfPlane;
  s.normal = n.normalized();
  s.offset = off;
  s.values = std::move(v);
  return s;
}

void Phantom::validate() const {
  ELASTINV_REQUIRE(!background.empty(), InvalidArgument, "Phantom: no coefficients");
  ELASTINV_REQUIRE(floor > 0.0, InvalidArgument, "Phantom: floor must be positive");
  for (double v : background)
    ELASTINV_REQUIRE(v >= floor, InvalidArgument, "Phantom: background below floor");
  for (const auto& s : shapes) {
    ELASTINV_REQUIRE(s.values.size() == background.size(), InvalidArgument,
                     "Phantom: shape value count differs from background");
    for (double v : s.values) ELASTINV_REQUIRE(v >= floor, InvalidArgument, "Phantom: value below floor");
    if (s.kind == Shape::Kind::Disc)
      ELASTINV_REQUIRE(s.radius > 0.0, InvalidArgument, "Phantom: disc radius must be positive");
  }
}

double Phantom::value(int k, const Point2& p) const {
  double v = background[k];
  for (const auto& s : shapes)
    if (s.contains(p)) v = s.values[k];
  return v;
}

Phantom phantom_by_id(std::string_view id) {
  Phantom p;
  p.id = std::string(id);
  if (id == "a") {
    p.background = {1.0};
    p.shapes = {Shape::disc({0.0, 0.0}, 0.4, {10.0})};
  } else if (id == "b") {
    p.background = {1.0};
    p.shapes = {Shape::disc({-0.35, 0.3}, 0.3, {6.4}), Shape::disc({0.35, -0.3}, 0.25, {3.0})};
  } else if (id == "c") {
    p.background = {1.0};
    p.shapes = {Shape::half_plane({0.0, 1.0}, 0.3, {4.0}), Shape::half_plane({0.3, -1.0}, 0.3, {2.5})};
  } else if (id == "lame1") {
    p.background = {1.0, 1.0};
    p.shapes = {Shape::disc({-0.3, 0.25}, 0.3, {4.0, 1.0}),
                Shape::rect({0.1, 0.6, -0.6, -0.1}, {1.0, 5.0})};
  } else if (id == "lame2") {
    p.background = {1.0, 1.0};
    p.shapes = {Shape::half_plane({0.0, 1.0}, 0.45, {2.0, 1.0}), Shape::disc({0.0, -0.1}, 0.35, {3.0, 6.0})};
  } else if (id == "aniso") {
    p.background = {1.0, 1.0, 1.0};
    p.shapes = {Shape::disc({-0.35, 0.3}, 0.3, {4.0, 1.0, 1.0}),
                Shape::rect({0.1, 0.6, -0.6, -0.1}, {1.0, 3.0, 1.0}),
                Shape::disc({0.35, 0.4}, 0.25, {1.0, 1.0, 5.0})};
  } else {
    throw InvalidArgument("unknown phantom id '" + std::string(id) + "'");
  }
  p.validate();
  return p;
}

std::vector<std::string> phantom_ids() { return {"a", "b", "c", "lame1", "lame2", "aniso"}; }

std::vector<ScalarFieldP0> rasterize(const Phantom& ph, const MeshPtr& m) {
  ph.validate();
  std::vector<ScalarFieldP0> out;
  for (int k = 0; k < ph.num_coefficients(); ++k) {
    Eigen::VectorXd v(m->num_triangles());
    for (int t = 0; t < m->num_triangles(); ++t) v[t] = ph.value(k, m->centroid(t));
    out.emplace_back(m, std::move(v));
  }
  return out;
}

// ------------------------------------------------------------------- loads

Point2 BoundaryLoad::at(double s) const {
  if (s <= knots.front()) return traction.front();
  if (s >= knots.back()) return traction.back();
  const auto it = std::upper_bound(knots.begin(), knots.end(), s);
  const std::size_t k = static_cast<std::size_t>(it - knots.begin());
  const double w = (s - knots[k - 1]) / (knots[k] - knots[k - 1]);
  return (1.0 - w) * traction[k - 1] + w * traction[k];
}

void BoundaryLoad::validate() const {
  ELASTINV_REQUIRE(!knots.empty() && knots.size() == traction.size(), InvalidArgument,
                   "BoundaryLoad: knots and traction values must pair up");
  for (std::size_t k = 1; k < knots.size(); ++k)
    ELASTINV_REQUIRE(knots[k] > knots[k - 1], InvalidArgument, "BoundaryLoad: knots must increase");
  for (const auto& g : traction)
    ELASTINV_REQUIRE(g.allFinite(), InvalidArgument, "BoundaryLoad: non-finite traction");
}

BoundaryLoad BoundaryLoad::uniform(std::string label, Point2 g, double length) {
  return {std::move(label), {0.0, length}, {g, g}};
}

std::vector<BoundaryLoad> default_loads(double length) {
  std::vector<BoundaryLoad> loads;
  loads.push_back(BoundaryLoad::uniform("oblique", Point2(1.0, -1.0) / std::sqrt(2.0), length));
  loads.push_back(BoundaryLoad::uniform("normal", Point2(0.0, -1.0), length));
  loads.push_back({"ramp", {0.0, length}, {Point2(0.0, 0.0), Point2(0.0, -1.0)}});
  BoundaryLoad sine{"sine_lateral", {}, {}};
  constexpr int kPieces = 64;
  for (int k = 0; k <= kPieces; ++k) {
    const double s = length * k / kPieces;
    sine.knots.push_back(s);
    sine.traction.emplace_back(std::sin(2.0 * std::numbers::pi * s / length), 0.0);
  }
  loads.push_back(std::move(sine));
  return loads;
}

Eigen::VectorXd assemble_traction(const Mesh& m, const BoundaryLoad& load) {
  load.validate();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(2 * m.num_nodes());
  const auto& seg = m.domain().neumann;
  if (!seg) return b;
  const bool horizontal = seg->side == Side::Bottom || seg->side == Side::Top;
  auto arclength = [&](const Point2& p) { return (horizontal ? p.x() : p.y()) - seg->lo; };
  for (const auto& e : m.boundary_edges()) {
    if (e.tag != BoundaryTag::Neumann) continue;
    const double sa = arclength(m.nodes()[e.a]);
    const double sb = arclength(m.nodes()[e.b]);
    // Break the edge at load knots; g.phi is quadratic on each piece, so
    // Simpson's rule is exact.
    std::vector<double> cuts{std::min(sa, sb), std::max(sa, sb)};
    for (double k : load.knots)
      if (k > cuts[0] && k < cuts[1]) cuts.push_back(k);
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double s0 = cuts[c], s1 = cuts[c + 1], sm = 0.5 * (s0 + s1);
      const double len = s1 - s0;
      for (const double s : {s0, sm, s1}) {
        const double w = (s == sm ? 4.0 : 1.0) * len / 6.0;
        const Point2 g = load.at(s);
        const double phi_b = (s - sa) / (sb - sa);
        const double phi_a = 1.0 - phi_b;
        b[2 * e.a] += w * phi_a * g.x();
        b[2 * e.a + 1] += w * phi_a * g.y();
        b[2 * e.b] += w * phi_b * g.x();
        b[2 * e.b + 1] += w * phi_b * g.y();
      }
    }
  }
  return b;
}

// --------------------------------------------------------- forward problem

ElasticProblem::ElasticProblem(MeshPtr mesh, std::span<const Tensor4Sym> per_triangle,
                               std::vector<int> constrained_dofs)
    : mesh_(std::move(mesh)), constrained_(std::move(constrained_dofs)) {
  k_ = assemble_elastic_stiffness(*mesh_, per_triangle);
  const int n = static_cast<int>(k_.rows());
  std::sort(constrained_.begin(), constrained_.end());
  constrained_.erase(std::unique(constrained_.begin(), constrained_.end()), constrained_.end());
  std::vector<int> local(n, -1);
  for (std::size_t k = 0; k < constrained_.size(); ++k) {
    ELASTINV_REQUIRE(constrained_[k] >= 0 && constrained_[k] < n, InvalidArgument,
                     "ElasticProblem: constrained DOF out of range");
    local[constrained_[k]] = -2 - static_cast<int>(k);
  }
  for (int i = 0; i < n; ++i) {
    if (local[i] == -1) {
      local[i] = static_cast<int>(free_.size());
      free_.push_back(i);
    }
  }
  std::vector<Triplet> ff, fc;
  for (int col = 0; col < k_.outerSize(); ++col) {
    for (SparseOperator::InnerIterator it(k_, col); it; ++it) {
      const int r = local[it.row()];
      const int c = local[it.col()];
      if (r < 0) continue;
      if (c >= 0) {
        ff.emplace_back(r, c, it.value());
      } else {
        fc.emplace_back(r, -2 - c, it.value());
      }
    }
  }
  k_ff_.resize(free_.size(), free_.size());
  k_ff_.setFromTriplets(ff.begin(), ff.end());
  k_fc_.resize(free_.size(), constrained_.size());
  k_fc_.setFromTriplets(fc.begin(), fc.end());
  solver_ = std::make_unique<SpdSolver>(k_ff_);
}

VectorFieldP1 ElasticProblem::solve(const Eigen::VectorXd& rhs, const Eigen::VectorXd& constrained_values) const {
  ELASTINV_REQUIRE(rhs.size() == k_.rows(), InvalidArgument, "ElasticProblem: rhs size mismatch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(constrained_.size()));
  if (constrained_values.size() > 0) {
    ELASTINV_REQUIRE(constrained_values.size() == g.size(), InvalidArgument,
                     "ElasticProblem: constrained value count mismatch");
    g = constrained_values;
  }
  Eigen::VectorXd bf(static_cast<Eigen::Index>(free_.size()));
  for (std::size_t k = 0; k < free_.size(); ++k) bf[k] = rhs[free_[k]];
  if (g.size() > 0) bf -= k_fc_ * g;
  const Eigen::VectorXd uf = solver_->solve(bf);
  Eigen::VectorXd u(k_.rows());
  for (std::size_t k = 0; k < free_.size(); ++k) u[free_[k]] = uf[k];
  for (std::size_t k = 0; k < constrained_.size(); ++k) u[constrained_[k]] = g[k];
  return VectorFieldP1(mesh_, std::move(u));
}

std::vector<int> dirichlet_dofs(const Mesh& m) {
  std::vector<int> dofs;
  for (int i = 0; i < m.num_nodes(); ++i) {
    if (m.is_dirichlet_node(i)) {
      dofs.push_back(2 * i);
      dofs.push_back(2 * i + 1);
    }
  }
  return dofs;
}

VectorFieldP1 solve_forward(const MeshPtr& m, std::span<const Tensor4Sym> per_triangle, const BoundaryLoad& load) {
  auto fixed = dirichlet_dofs(*m);
  ELASTINV_REQUIRE(!fixed.empty(), InvalidArgument,
                   "solve_forward: no Dirichlet nodes, the system is singular");
  ElasticProblem problem(m, per_triangle, std::move(fixed));
  return problem.solve(assemble_traction(*m, load));
}

// ----------------------------------------------------------------- dataset

std::uint64_t derived_seed(std::uint64_t master, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32), stream};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

void add_noise(Eigen::MatrixXd& samples, double std_dev, std::uint64_t seed) {
  if (std_dev <= 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, std_dev);
  for (Eigen::Index r = 0; r < samples.rows(); ++r)
    for (Eigen::Index c = 0; c < samples.cols(); ++c) samples(r, c) += n(rng);
}

double max_norm(const Eigen::MatrixXd& samples) {
  return samples.rows() == 0 ? 0.0 : samples.rowwise().norm().maxCoeff();
}

}  // namespace

ForwardDataset make_dataset(const Phantom& ph, ModelKind model, std::span<const BoundaryLoad> loads,
                            const DatasetParams& params) {
  ELASTINV_REQUIRE(!loads.empty(), InvalidArgument, "make_dataset: at least one load required");
  ELASTINV_REQUIRE(params.noise >= 0.0, InvalidArgument, "make_dataset: noise must be non-negative");
  const auto basis = model_basis(model);
  ELASTINV_REQUIRE(static_cast<int>(basis.size()) == ph.num_coefficients(), InvalidArgument,
                   "make_dataset: phantom '" + ph.id + "' does not match model " + std::string(to_string(model)));

  auto fwd_domain = DomainSpec::clamped_bottom_loaded_top(params.forward_box);
  if (params.dirichlet) {
    ELASTINV_REQUIRE(params.dirichlet->side == Side::Bottom, InvalidArgument,
                     "make_dataset: the clamped segment must lie on the bottom side");
    fwd_domain.dirichlet = params.dirichlet;
    fwd_domain.validate();
  }
  auto fwd_mesh = std::make_shared<const Mesh>(build_structured(
      fwd_domain, params.h_forward, params.forward_jitter, derived_seed(params.seed, kSeedStreamForwardMesh)));
  const auto coeffs = rasterize(ph, fwd_mesh);
  const auto tensors = combine_tensors(basis, coeffs);
  ElasticProblem problem(fwd_mesh, tensors, dirichlet_dofs(*fwd_mesh));

  ForwardDataset d;
  d.params = params;
  d.phantom_id = ph.id;
  d.model = model;
  if (params.inverse_crime) {
    d.mesh = fwd_mesh;
  } else {
    d.mesh = std::make_shared<const Mesh>(build_structured(DomainSpec::free(params.inverse_box), params.h_inverse,
                                                           params.inverse_jitter,
                                                           derived_seed(params.seed, kSeedStreamInverseMesh)));
    ELASTINV_REQUIRE(params.forward_box.contains(Point2(params.inverse_box.xmin, params.inverse_box.ymin)) &&
                         params.forward_box.contains(Point2(params.inverse_box.xmax, params.inverse_box.ymax)),
                     InvalidArgument, "make_dataset: inversion box must lie inside the forward box");
  }

  struct Measurement {
    double max_displacement = 0.0;
    VectorFieldP1 unsmoothed;
    VectorFieldP1 smoothed;
  };
  // Loads share the factorization and own their noise streams.
  auto measure = [&](std::size_t l) {
    const VectorFieldP1 u = problem.solve(assemble_traction(*fwd_mesh, loads[l]));
    const std::uint64_t noise_seed = derived_seed(params.seed, kSeedStreamNoise + static_cast<std::uint32_t>(l));
    Measurement r;
    Eigen::VectorXd on_inverse;
    if (params.inverse_crime) {
      Eigen::MatrixXd nodal = u.values.reshaped(2, fwd_mesh->num_nodes()).transpose();
      r.max_displacement = max_norm(nodal);
      add_noise(nodal, params.noise * r.max_displacement, noise_seed);
      on_inverse = Eigen::MatrixXd(nodal.transpose()).reshaped();
    } else {
      CartesianGrid grid = CartesianGrid::covering(params.forward_box, params.h_forward);
      const auto pts = grid.points();
      Eigen::MatrixXd nodal = u.values.reshaped(2, fwd_mesh->num_nodes()).transpose();
      grid.values = interpolate_p1(*fwd_mesh, nodal, pts);
      r.max_displacement = max_norm(grid.values);
      add_noise(grid.values, params.noise * r.max_displacement, noise_seed);
      const Eigen::MatrixXd on_nodes = grid.interpolate(d.mesh->nodes());
      on_inverse = Eigen::MatrixXd(on_nodes.transpose()).reshaped();
    }
    r.unsmoothed = VectorFieldP1(d.mesh, std::move(on_inverse));
    r.smoothed = elastic_smooth(r.unsmoothed, params.eps_elas);
    return r;
  };
  std::vector<std::future<Measurement>> jobs;
  for (std::size_t l = 0; l < loads.size(); ++l) jobs.push_back(std::async(std::launch::async, measure, l));
  for (std::size_t l = 0; l < loads.size(); ++l) {
    Measurement r = jobs[l].get();
    d.max_displacement.push_back(r.max_displacement);
    d.unsmoothed.push_back(std::move(r.unsmoothed));
    d.displacements.push_back(std::move(r.smoothed));
    d.load_labels.push_back(loads[l].label);
  }
  return d;
}

ForwardDataset with_smoothing(const ForwardDataset& d, double eps_elas) {
  ForwardDataset out = d;
  out.params.eps_elas = eps_elas;
  for (std::size_t l = 0; l < d.unsmoothed.size(); ++l)
    out.displacements[l] = elastic_smooth(d.unsmoothed[l], eps_elas);
  return out;
}

// ------------------------------------------------------ baseline comparator

Eigen::MatrixXd discrete_strain_divergence(const VectorFieldP1& u) {
  const Mesh& m = *u.mesh;
  const SparseOperator k = assemble_elastic_stiffness(m, canonical(CanonicalTensor::Ident));
  const Eigen::VectorXd ku = k * u.values;
  Eigen::VectorXd lumped = Eigen::VectorXd::Zero(m.num_nodes());
  for (int t = 0; t < m.num_triangles(); ++t)
    for (int v : m.triangles()[t]) lumped[v] += m.area(t) / 3.0;
  Eigen::MatrixXd out(m.num_triangles(), 2);
  for (int t = 0; t < m.num_triangles(); ++t) {
    Point2 avg = Point2::Zero();
    for (int v : m.triangles()[t]) avg += Point2(ku[2 * v], ku[2 * v + 1]) / lumped[v];
    out.row(t) = (avg / 3.0).transpose();
  }
  return out;
}

AlgebraicEstimate baseline_algebraic(const VectorFieldP1& u, const Eigen::MatrixXd& force, double tau) {
  const Mesh& m = *u.mesh;
  ELASTINV_REQUIRE(force.rows() == m.num_triangles() && force.cols() == 2, InvalidArgument,
                   "baseline_algebraic: force needs one 2-vector per triangle");
  const Eigen::MatrixXd div = discrete_strain_divergence(u);
  AlgebraicEstimate est{ScalarFieldP0::constant(u.mesh, 0.0), std::vector<std::uint8_t>(m.num_triangles(), 0)};
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles()[t];
    const bool interior = m.is_interior_node(tri[0]) && m.is_interior_node(tri[1]) && m.is_interior_node(tri[2]);
    const double dn = div.row(t).norm();
    const double fn = force.row(t).norm();
    if (!interior || dn <= tau || fn <= tau) continue;
    est.mu.values[t] = fn / dn;
    est.defined[t] = 1;
  }
  return est;
}

}  // namespace elastinv

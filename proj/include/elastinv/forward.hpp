#pragma once

// Synthetic data generation: phantom coefficient fields, the static forward
// boundary-value problem, grid sampling, noise and resampling onto the
// inversion mesh.

#include "elastinv/fem.hpp"
#include "elastinv/mesh.hpp"
#include "elastinv/sparse.hpp"
#include "elastinv/tensor_algebra.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace elastinv {

/// Coefficient model C(x) = sum_k mu_k(x) C^k.
enum class ModelKind { Shear, Lame, Aniso };

ModelKind parse_model(std::string_view name);
std::string_view to_string(ModelKind m);

/// Basis tensors of a model: shear {Ident}, Lame {2 Ident, Dilat}
/// (coefficients mu, lambda), anisotropic {C1, C2, C3}.
std::vector<Tensor4Sym> model_basis(ModelKind m);
std::vector<std::string> coefficient_names(ModelKind m);

struct Shape {
  enum class Kind { Disc, Box, HalfPlane };

  Kind kind = Kind::Disc;
  Point2 center = Point2::Zero();  // disc
  double radius = 0.0;             // disc
  Rect box;                        // box
  Point2 normal = Point2::UnitY();  // half-plane {x : normal . x >= offset}
  double offset = 0.0;
  std::vector<double> values;  // one per coefficient

  bool contains(const Point2& p) const;

  static Shape disc(Point2 c, double r, std::vector<double> v);
  static Shape rect(Rect b, std::vector<double> v);
  static Shape half_plane(Point2 n, double off, std::vector<double> v);
};

/// Piecewise-constant coefficient phantom. The value at a point is that of
/// the last shape containing it, or the background.
struct Phantom {
  std::string id;
  std::vector<double> background;
  std::vector<Shape> shapes;
  double floor = 1.0;

  int num_coefficients() const { return static_cast<int>(background.size()); }
  /// Throws InvalidArgument if any value is below `floor` or value counts
  /// disagree.
  void validate() const;
  double value(int k, const Point2& p) const;
};

/// Built-in phantoms: "a" (single disc), "b" (two discs), "c" (layers) for
/// the shear model; "lame1", "lame2" for (mu, lambda); "aniso" for
/// (mu1, mu2, mu3).
Phantom phantom_by_id(std::string_view id);
std::vector<std::string> phantom_ids();

/// Per-triangle values from centroid membership, one field per coefficient.
std::vector<ScalarFieldP0> rasterize(const Phantom& ph, const MeshPtr& m);

/// Traction density on the Neumann segment as a piecewise-linear function
/// of arclength s measured from the segment's `lo` end.
struct BoundaryLoad {
  std::string label;
  std::vector<double> knots;
  std::vector<Point2> traction;

  /// Piecewise-linear value at s, held constant past the end knots.
  Point2 at(double s) const;
  void validate() const;

  static BoundaryLoad uniform(std::string label, Point2 g, double length);
};

/// The four default traction profiles on a segment of the given length:
/// oblique, normal, ramp, sinusoidal lateral.
std::vector<BoundaryLoad> default_loads(double length);

/// Exact load vector b_i = int_{Neumann} g . phi_i ds (2 N_n entries).
Eigen::VectorXd assemble_traction(const Mesh& m, const BoundaryLoad& load);

/// Linear elastic problem K u = b with prescribed values on a set of DOFs.
/// Factors the free block once so several right-hand sides share it.
class ElasticProblem {
 public:
  ElasticProblem(MeshPtr mesh, std::span<const Tensor4Sym> per_triangle, std::vector<int> constrained_dofs);

  /// Solves with u = `constrained_values` on the constrained DOFs (zero when
  /// empty). `rhs` has 2 N_n entries; constrained rows are ignored.
  VectorFieldP1 solve(const Eigen::VectorXd& rhs, const Eigen::VectorXd& constrained_values = {}) const;

  const SparseOperator& stiffness() const { return k_; }
  const MeshPtr& mesh() const { return mesh_; }

 private:
  MeshPtr mesh_;
  SparseOperator k_;
  std::vector<int> constrained_;
  std::vector<int> free_;
  SparseOperator k_ff_;
  SparseOperator k_fc_;
  std::unique_ptr<SpdSolver> solver_;
};

/// DOFs of every node on a Dirichlet-tagged edge.
std::vector<int> dirichlet_dofs(const Mesh& m);

/// Clamped on the Dirichlet segment, traction `load` on the Neumann
/// segment, traction-free elsewhere. Throws InvalidArgument without
/// Dirichlet nodes.
VectorFieldP1 solve_forward(const MeshPtr& m, std::span<const Tensor4Sym> per_triangle, const BoundaryLoad& load);

struct DatasetParams {
  Rect forward_box{-1.0, 1.0, -1.0, 1.0};
  Rect inverse_box{-0.9, 0.9, -0.9, 0.9};
  double h_forward = 0.01;
  double h_inverse = 0.03;
  double forward_jitter = 0.2;
  double inverse_jitter = 0.2;
  double noise = 0.0;
  double eps_elas = 0.0;
  std::uint64_t seed = 0;
  /// Clamped stretch of the forward bottom side; the whole side when empty.
  std::optional<Segment> dirichlet;
  /// Invert on the forward mesh without grid sampling.
  bool inverse_crime = false;
};

struct ForwardDataset {
  MeshPtr mesh;  // inversion mesh
  std::vector<VectorFieldP1> displacements;
  std::vector<std::string> load_labels;
  DatasetParams params;
  std::string phantom_id;
  ModelKind model = ModelKind::Shear;
  /// max |u| on the sampling grid, per load (before noise).
  std::vector<double> max_displacement;
  /// Resampled fields before elastic smoothing.
  std::vector<VectorFieldP1> unsmoothed;

  int num_measurements() const { return static_cast<int>(displacements.size()); }
};

/// Independent seed for one random stream of a master seed.
std::uint64_t derived_seed(std::uint64_t master, std::uint32_t stream);

inline constexpr std::uint32_t kSeedStreamForwardMesh = 1;
inline constexpr std::uint32_t kSeedStreamInverseMesh = 2;
/// Noise for load l uses stream kSeedStreamNoise + l.
inline constexpr std::uint32_t kSeedStreamNoise = 100;

/// rasterize -> solve_forward per load -> sample on a Cartesian grid ->
/// Gaussian noise (std = noise * max|u|) -> resample to the inversion mesh
/// -> elastic_smooth. Deterministic in `params.seed`.
ForwardDataset make_dataset(const Phantom& ph, ModelKind model, std::span<const BoundaryLoad> loads,
                            const DatasetParams& params);

/// Same dataset smoothed with a different eps_elas.
ForwardDataset with_smoothing(const ForwardDataset& d, double eps_elas);

/// Discrete -div(e(u)) per triangle: the lumped-mass nodal field
/// M_L^{-1} K(Ident) u averaged over each triangle's vertices.
Eigen::MatrixXd discrete_strain_divergence(const VectorFieldP1& u);

struct AlgebraicEstimate {
  ScalarFieldP0 mu;
  std::vector<std::uint8_t> defined;
};

/// Locally-homogeneous estimate mu ~ |f| / |div e(u)| per triangle, where
/// `force` holds one 2-vector per triangle. Triangles touching the
/// boundary, or where either magnitude is at most `tau`, are undefined.
AlgebraicEstimate baseline_algebraic(const VectorFieldP1& u, const Eigen::MatrixXd& force, double tau = 1e-10);

}  // namespace elastinv

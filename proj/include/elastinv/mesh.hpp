#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace elastinv {

using Point2 = Eigen::Vector2d;
using Triangle = std::array<int, 3>;

enum class BoundaryTag : std::uint8_t { Dirichlet, Neumann, Free };
enum class Side : std::uint8_t { Bottom, Right, Top, Left };

struct Rect {
  double xmin = -1.0;
  double xmax = 1.0;
  double ymin = -1.0;
  double ymax = 1.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  bool contains(const Point2& p, double tol = 0.0) const {
    return p.x() >= xmin - tol && p.x() <= xmax + tol && p.y() >= ymin - tol &&
           p.y() <= ymax + tol;
  }
};

/// Part of one rectangle side. `lo`/`hi` run along the side's free
/// coordinate (x for bottom/top, y for left/right).
struct Segment {
  Side side = Side::Bottom;
  double lo = -1.0;
  double hi = 1.0;

  double length() const { return hi - lo; }
};

struct DomainSpec {
  Rect box;
  std::optional<Segment> dirichlet;
  std::optional<Segment> neumann;

  /// Clamped bottom, loaded top: the layout of the forward experiments.
  static DomainSpec clamped_bottom_loaded_top(const Rect& box);
  /// Rectangle with every boundary edge tagged Free.
  static DomainSpec free(const Rect& box);

  /// Throws InvalidArgument when a segment leaves its side or the two
  /// segments overlap.
  void validate() const;
};

struct BoundaryEdge {
  int a = 0;
  int b = 0;
  BoundaryTag tag = BoundaryTag::Free;
};

/// Edge shared by triangles tri_i < tri_j; `normal` is the unit normal
/// pointing from tri_i into tri_j.
struct InternalEdge {
  int tri_i = 0;
  int tri_j = 0;
  int node_a = 0;
  int node_b = 0;
  double length = 0.0;
  Point2 normal = Point2::Zero();
};

struct Location {
  int triangle = -1;
  Eigen::Vector3d bary = Eigen::Vector3d::Zero();
};

/// Conforming triangulation of a rectangle. Immutable after construction.
class Mesh {
 public:
  /// Builds connectivity and boundary tags. Clockwise triangles are
  /// reoriented; degenerate triangles, non-manifold edges and indices out
  /// of range throw InvalidArgument.
  Mesh(std::vector<Point2> nodes, std::vector<Triangle> triangles, const DomainSpec& domain);

  const std::vector<Point2>& nodes() const { return nodes_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }
  const std::vector<InternalEdge>& internal_edges() const { return internal_edges_; }
  const DomainSpec& domain() const { return domain_; }

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  int num_interior_nodes() const { return num_interior_; }
  bool is_interior_node(int i) const { return interior_[i] != 0; }
  /// Nodes lying on at least one Dirichlet-tagged edge.
  bool is_dirichlet_node(int i) const { return dirichlet_[i] != 0; }

  double area(int t) const { return areas_[t]; }
  const std::vector<double>& areas() const { return areas_; }
  Point2 centroid(int t) const;
  double total_area() const;
  /// Longest edge over the mesh.
  double max_edge_length() const;

  /// Triangle containing `p` with its barycentric coordinates. Points on
  /// shared edges or vertices go to the lowest-indexed candidate.
  /// Barycentric coordinates down to -tol are accepted and then clipped.
  std::optional<Location> locate(const Point2& p, double tol = 1e-12) const;

  /// Like locate, but falls back to the nearest triangle when `p` lies
  /// within `snap` (Euclidean distance) of the mesh.
  std::optional<Location> locate_snapped(const Point2& p, double snap) const;

 private:
  void build_edges();
  void build_bins();
  Eigen::Vector3d barycentric(int t, const Point2& p) const;
  std::span<const int> bin_candidates(const Point2& p) const;

  std::vector<Point2> nodes_;
  std::vector<Triangle> triangles_;
  DomainSpec domain_;
  std::vector<double> areas_;
  std::vector<BoundaryEdge> boundary_edges_;
  std::vector<InternalEdge> internal_edges_;
  std::vector<std::uint8_t> interior_;
  std::vector<std::uint8_t> dirichlet_;
  int num_interior_ = 0;

  Point2 bin_origin_ = Point2::Zero();
  double bin_dx_ = 1.0;
  double bin_dy_ = 1.0;
  int bins_x_ = 1;
  int bins_y_ = 1;
  std::vector<int> bin_start_;
  std::vector<int> bin_items_;
};

/// Right-triangle grid over `spec.box` with cells of size at most h.
/// Cell diagonals point toward the nearest domain corner so that no
/// triangle has all three vertices on the boundary. Interior nodes are
/// shifted by seeded uniform offsets of at most jitter*h per coordinate.
Mesh build_structured(const DomainSpec& spec, double h, double jitter = 0.0,
                      std::uint64_t seed = 0);

/// Number of cells along a side of length `len` for target size h.
int cells_for(double len, double h);

/// The oriented internal-edge set, one entry per adjacent triangle pair.
const std::vector<InternalEdge>& internal_edge_set(const Mesh& m);

/// Same geometry with nodes and triangles renumbered: new node k is old
/// node node_order[k], new triangle k is old triangle tri_order[k].
Mesh renumbered(const Mesh& m, std::span<const int> node_order, std::span<const int> tri_order);

/// P1 interpolation of nodal data (num_nodes x components) at points.
/// Throws InvalidArgument when a point is farther than `snap` from the mesh.
Eigen::MatrixXd interpolate_p1(const Mesh& source, const Eigen::MatrixXd& nodal,
                               std::span<const Point2> points, double snap = 1e-10);

/// Resamples a P1 field stored node-interleaved (`components` values per
/// node) from `source` onto the nodes of `target`.
Eigen::VectorXd resample_p1(const Mesh& source, const Eigen::VectorXd& values,
                            const Mesh& target, int components = 2);

/// Samples recorded on a structured Cartesian grid. Node (i, j) sits at
/// origin + (i hx, j hy); values are stored row-major with i fastest, one
/// column per component.
struct CartesianGrid {
  Point2 origin = Point2::Zero();
  double hx = 1.0;
  double hy = 1.0;
  int nx = 0;
  int ny = 0;
  Eigen::MatrixXd values;

  static CartesianGrid covering(const Rect& box, double h, int components = 2);

  int num_points() const { return nx * ny; }
  int index(int i, int j) const { return j * nx + i; }
  Point2 point(int i, int j) const { return origin + Point2(i * hx, j * hy); }
  std::vector<Point2> points() const;
  Rect bounds() const;

  /// Piecewise-linear interpolation on the grid split into triangles.
  Eigen::MatrixXd interpolate(std::span<const Point2> pts, double snap = 1e-10) const;
};

}  // namespace elastinv

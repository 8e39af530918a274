#include "elastinv/mesh.hpp"

#include "elastinv/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <tuple>

namespace elastinv {

namespace {

constexpr double kTagTol = 1e-12;
constexpr double kMinArea = 1e-14;

double cross(const Point2& a, const Point2& b) { return a.x() * b.y() - a.y() * b.x(); }

double signed_area(const Point2& a, const Point2& b, const Point2& c) {
  return 0.5 * cross(b - a, c - a);
}

bool on_side(const Rect& box, Side side, const Point2& p) {
  switch (side) {
    case Side::Bottom: return std::abs(p.y() - box.ymin) <= kTagTol;
    case Side::Top: return std::abs(p.y() - box.ymax) <= kTagTol;
    case Side::Left: return std::abs(p.x() - box.xmin) <= kTagTol;
    case Side::Right: return std::abs(p.x() - box.xmax) <= kTagTol;
  }
  return false;
}

double along(Side side, const Point2& p) {
  return (side == Side::Bottom || side == Side::Top) ? p.x() : p.y();
}

bool edge_on_segment(const Rect& box, const Segment& seg, const Point2& a, const Point2& b) {
  if (!on_side(box, seg.side, a) || !on_side(box, seg.side, b)) return false;
  const double sa = along(seg.side, a);
  const double sb = along(seg.side, b);
  return std::min(sa, sb) >= seg.lo - kTagTol && std::max(sa, sb) <= seg.hi + kTagTol;
}

double side_lo(const Rect& box, Side s) {
  return (s == Side::Bottom || s == Side::Top) ? box.xmin : box.ymin;
}
double side_hi(const Rect& box, Side s) {
  return (s == Side::Bottom || s == Side::Top) ? box.xmax : box.ymax;
}

// Distance from p to segment [a, b] and the parameter of the closest point.
std::pair<double, double> segment_distance(const Point2& p, const Point2& a, const Point2& b) {
  const Point2 d = b - a;
  const double len2 = d.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return {(a + t * d - p).norm(), t};
}

}  // namespace

DomainSpec DomainSpec::clamped_bottom_loaded_top(const Rect& box) {
  DomainSpec d;
  d.box = box;
  d.dirichlet = Segment{Side::Bottom, box.xmin, box.xmax};
  d.neumann = Segment{Side::Top, box.xmin, box.xmax};
  return d;
}

DomainSpec DomainSpec::free(const Rect& box) {
  DomainSpec d;
  d.box = box;
  return d;
}

void DomainSpec::validate() const {
  ELASTINV_REQUIRE(box.xmax > box.xmin && box.ymax > box.ymin, InvalidArgument,
                   "DomainSpec: empty rectangle");
  for (const auto* seg : {&dirichlet, &neumann}) {
    if (!seg->has_value()) continue;
    const Segment& s = **seg;
    ELASTINV_REQUIRE(s.lo < s.hi, InvalidArgument, "DomainSpec: segment has no length");
    ELASTINV_REQUIRE(s.lo >= side_lo(box, s.side) - kTagTol && s.hi <= side_hi(box, s.side) + kTagTol,
                     InvalidArgument, "DomainSpec: segment leaves its side");
  }
  if (dirichlet && neumann && dirichlet->side == neumann->side) {
    const bool disjoint = dirichlet->hi <= neumann->lo + kTagTol || neumann->hi <= dirichlet->lo + kTagTol;
    ELASTINV_REQUIRE(disjoint, InvalidArgument, "DomainSpec: Dirichlet and Neumann segments overlap");
  }
}

Mesh::Mesh(std::vector<Point2> nodes, std::vector<Triangle> triangles, const DomainSpec& domain)
    : nodes_(std::move(nodes)), triangles_(std::move(triangles)), domain_(domain) {
  const int nn = num_nodes();
  ELASTINV_REQUIRE(!triangles_.empty(), InvalidArgument, "Mesh: no triangles");
  areas_.resize(triangles_.size());
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    auto& tri = triangles_[t];
    for (int v : tri) {
      ELASTINV_REQUIRE(v >= 0 && v < nn, InvalidArgument, "Mesh: node index out of range");
    }
    ELASTINV_REQUIRE(tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2], InvalidArgument,
                     "Mesh: repeated vertex in triangle " + std::to_string(t));
    double a = signed_area(nodes_[tri[0]], nodes_[tri[1]], nodes_[tri[2]]);
    if (a < 0.0) {
      std::swap(tri[1], tri[2]);
      a = -a;
    }
    ELASTINV_REQUIRE(a >= kMinArea, InvalidArgument,
                     "Mesh: degenerate triangle " + std::to_string(t));
    areas_[t] = a;
  }
  build_edges();
  build_bins();
}

void Mesh::build_edges() {
  // (lo node, hi node, triangle), sorted so that equal edges are adjacent.
  std::vector<std::tuple<int, int, int>> half;
  half.reserve(3 * triangles_.size());
  for (int t = 0; t < num_triangles(); ++t) {
    const auto& tri = triangles_[t];
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k];
      const int b = tri[(k + 1) % 3];
      half.emplace_back(std::min(a, b), std::max(a, b), t);
    }
  }
  std::sort(half.begin(), half.end());

  interior_.assign(nodes_.size(), 1);
  dirichlet_.assign(nodes_.size(), 0);
  for (std::size_t k = 0; k < half.size();) {
    std::size_t e = k + 1;
    while (e < half.size() && std::get<0>(half[e]) == std::get<0>(half[k]) &&
           std::get<1>(half[e]) == std::get<1>(half[k])) {
      ++e;
    }
    const auto [a, b, ti] = half[k];
    const std::size_t count = e - k;
    ELASTINV_REQUIRE(count <= 2, InvalidArgument, "Mesh: edge shared by more than two triangles");
    if (count == 1) {
      BoundaryEdge be{a, b, BoundaryTag::Free};
      if (domain_.dirichlet && edge_on_segment(domain_.box, *domain_.dirichlet, nodes_[a], nodes_[b])) {
        be.tag = BoundaryTag::Dirichlet;
        dirichlet_[a] = dirichlet_[b] = 1;
      } else if (domain_.neumann &&
                 edge_on_segment(domain_.box, *domain_.neumann, nodes_[a], nodes_[b])) {
        be.tag = BoundaryTag::Neumann;
      }
      boundary_edges_.push_back(be);
      interior_[a] = interior_[b] = 0;
    } else {
      const int tj = std::get<2>(half[k + 1]);
      InternalEdge ie;
      ie.tri_i = std::min(ti, tj);
      ie.tri_j = std::max(ti, tj);
      ie.node_a = a;
      ie.node_b = b;
      const Point2 d = nodes_[b] - nodes_[a];
      ie.length = d.norm();
      Point2 n(d.y(), -d.x());
      n /= ie.length;
      if (n.dot(centroid(ie.tri_j) - centroid(ie.tri_i)) < 0.0) n = -n;
      ie.normal = n;
      internal_edges_.push_back(ie);
    }
    k = e;
  }
  std::sort(internal_edges_.begin(), internal_edges_.end(), [](const auto& x, const auto& y) {
    return std::tie(x.tri_i, x.tri_j) < std::tie(y.tri_i, y.tri_j);
  });
  num_interior_ = static_cast<int>(std::count(interior_.begin(), interior_.end(), 1));
}

void Mesh::build_bins() {
  Point2 lo = nodes_.front();
  Point2 hi = nodes_.front();
  for (const auto& p : nodes_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const int per_side = std::max(1, static_cast<int>(std::sqrt(0.5 * num_triangles())));
  bins_x_ = bins_y_ = per_side;
  bin_origin_ = lo;
  bin_dx_ = std::max(hi.x() - lo.x(), 1e-300) / bins_x_;
  bin_dy_ = std::max(hi.y() - lo.y(), 1e-300) / bins_y_;

  auto bin_range = [&](double v0, double v1, double o, double d, int n) {
    const int a = std::clamp(static_cast<int>(std::floor((v0 - o) / d)), 0, n - 1);
    const int b = std::clamp(static_cast<int>(std::floor((v1 - o) / d)), 0, n - 1);
    return std::pair{a, b};
  };

  std::vector<int> counts(bins_x_ * bins_y_ + 1, 0);
  std::vector<std::array<int, 4>> ranges(triangles_.size());
  for (int t = 0; t < num_triangles(); ++t) {
    const auto& tri = triangles_[t];
    Point2 tlo = nodes_[tri[0]].cwiseMin(nodes_[tri[1]]).cwiseMin(nodes_[tri[2]]);
    Point2 thi = nodes_[tri[0]].cwiseMax(nodes_[tri[1]]).cwiseMax(nodes_[tri[2]]);
    const double pad = 1e-9 * std::max(bin_dx_, bin_dy_);
    auto [i0, i1] = bin_range(tlo.x() - pad, thi.x() + pad, lo.x(), bin_dx_, bins_x_);
    auto [j0, j1] = bin_range(tlo.y() - pad, thi.y() + pad, lo.y(), bin_dy_, bins_y_);
    ranges[t] = {i0, i1, j0, j1};
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) ++counts[j * bins_x_ + i + 1];
  }
  for (std::size_t k = 1; k < counts.size(); ++k) counts[k] += counts[k - 1];
  bin_start_ = counts;
  bin_items_.assign(counts.back(), 0);
  std::vector<int> fill(counts.begin(), counts.end() - 1);
  for (int t = 0; t < num_triangles(); ++t) {
    const auto& r = ranges[t];
    for (int j = r[2]; j <= r[3]; ++j)
      for (int i = r[0]; i <= r[1]; ++i) bin_items_[fill[j * bins_x_ + i]++] = t;
  }
}

Point2 Mesh::centroid(int t) const {
  const auto& tri = triangles_[t];
  return (nodes_[tri[0]] + nodes_[tri[1]] + nodes_[tri[2]]) / 3.0;
}

double Mesh::total_area() const {
  double s = 0.0;
  for (double a : areas_) s += a;
  return s;
}

double Mesh::max_edge_length() const {
  double m = 0.0;
  for (const auto& e : internal_edges_) m = std::max(m, e.length);
  for (const auto& e : boundary_edges_) m = std::max(m, (nodes_[e.a] - nodes_[e.b]).norm());
  return m;
}

Eigen::Vector3d Mesh::barycentric(int t, const Point2& p) const {
  const auto& tri = triangles_[t];
  const Point2& a = nodes_[tri[0]];
  const Point2& b = nodes_[tri[1]];
  const Point2& c = nodes_[tri[2]];
  const double inv = 1.0 / (2.0 * areas_[t]);
  const double l0 = cross(b - p, c - p) * inv;
  const double l1 = cross(c - p, a - p) * inv;
  return {l0, l1, 1.0 - l0 - l1};
}

std::span<const int> Mesh::bin_candidates(const Point2& p) const {
  const int i = std::clamp(static_cast<int>(std::floor((p.x() - bin_origin_.x()) / bin_dx_)), 0, bins_x_ - 1);
  const int j = std::clamp(static_cast<int>(std::floor((p.y() - bin_origin_.y()) / bin_dy_)), 0, bins_y_ - 1);
  const int b = j * bins_x_ + i;
  return {bin_items_.data() + bin_start_[b], static_cast<std::size_t>(bin_start_[b + 1] - bin_start_[b])};
}

std::optional<Location> Mesh::locate(const Point2& p, double tol) const {
  const Point2 hi = bin_origin_ + Point2(bin_dx_ * bins_x_, bin_dy_ * bins_y_);
  const double slack = tol * std::max(bin_dx_, bin_dy_) + 1e-14;
  if (p.x() < bin_origin_.x() - slack || p.y() < bin_origin_.y() - slack || p.x() > hi.x() + slack ||
      p.y() > hi.y() + slack) {
    return std::nullopt;
  }
  for (int t : bin_candidates(p)) {
    Eigen::Vector3d l = barycentric(t, p);
    if (l.minCoeff() >= -tol) {
      l = l.cwiseMax(0.0);
      l /= l.sum();
      return Location{t, l};
    }
  }
  return std::nullopt;
}

std::optional<Location> Mesh::locate_snapped(const Point2& p, double snap) const {
  if (auto loc = locate(p)) return loc;
  const auto i0 = std::clamp(static_cast<int>(std::floor((p.x() - snap - bin_origin_.x()) / bin_dx_)), 0, bins_x_ - 1);
  const auto i1 = std::clamp(static_cast<int>(std::floor((p.x() + snap - bin_origin_.x()) / bin_dx_)), 0, bins_x_ - 1);
  const auto j0 = std::clamp(static_cast<int>(std::floor((p.y() - snap - bin_origin_.y()) / bin_dy_)), 0, bins_y_ - 1);
  const auto j1 = std::clamp(static_cast<int>(std::floor((p.y() + snap - bin_origin_.y()) / bin_dy_)), 0, bins_y_ - 1);
  double best = std::numeric_limits<double>::infinity();
  Location out;
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      const int b = j * bins_x_ + i;
      for (int k = bin_start_[b]; k < bin_start_[b + 1]; ++k) {
        const int t = bin_items_[k];
        const auto& tri = triangles_[t];
        for (int e = 0; e < 3; ++e) {
          const int va = tri[e];
          const int vb = tri[(e + 1) % 3];
          const auto [dist, s] = segment_distance(p, nodes_[va], nodes_[vb]);
          if (dist < best || (dist == best && t < out.triangle)) {
            best = dist;
            out.triangle = t;
            out.bary.setZero();
            out.bary[e] = 1.0 - s;
            out.bary[(e + 1) % 3] = s;
          }
        }
      }
    }
  }
  if (best <= snap) return out;
  return std::nullopt;
}

int cells_for(double len, double h) {
  ELASTINV_REQUIRE(h > 0.0 && len > 0.0, InvalidArgument, "cells_for: non-positive length");
  return std::max(1, static_cast<int>(std::ceil(len / h - 1e-9)));
}

Mesh build_structured(const DomainSpec& spec, double h, double jitter, std::uint64_t seed) {
  spec.validate();
  const Rect& box = spec.box;
  ELASTINV_REQUIRE(h > 0.0 && h <= std::min(box.width(), box.height()) * (1.0 + 1e-12), InvalidArgument,
                   "build_structured: h must lie in (0, shortest side]");
  ELASTINV_REQUIRE(jitter >= 0.0 && jitter < 0.5, InvalidArgument,
                   "build_structured: jitter must lie in [0, 0.5)");
  const int nx = cells_for(box.width(), h);
  const int ny = cells_for(box.height(), h);
  const double hx = box.width() / nx;
  const double hy = box.height() / ny;
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };

  std::vector<Point2> grid((nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j) {
    const double y = (j == ny) ? box.ymax : box.ymin + j * hy;
    for (int i = 0; i <= nx; ++i) {
      const double x = (i == nx) ? box.xmax : box.xmin + i * hx;
      grid[id(i, j)] = Point2(x, y);
    }
  }

  std::vector<Triangle> tris;
  tris.reserve(2 * nx * ny);
  const double xc = 0.5 * (box.xmin + box.xmax);
  const double yc = 0.5 * (box.ymin + box.ymax);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int p00 = id(i, j), p10 = id(i + 1, j), p11 = id(i + 1, j + 1), p01 = id(i, j + 1);
      const double cx = box.xmin + (i + 0.5) * hx - xc;
      const double cy = box.ymin + (j + 0.5) * hy - yc;
      if (cx * cy >= 0.0) {
        tris.push_back({p00, p10, p11});
        tris.push_back({p00, p11, p01});
      } else {
        tris.push_back({p00, p10, p01});
        tris.push_back({p10, p11, p01});
      }
    }
  }

  if (jitter > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(-jitter * hx, jitter * hx);
    std::uniform_real_distribution<double> uy(-jitter * hy, jitter * hy);
    constexpr int kMaxAttempts = 32;
    std::vector<Point2> moved;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
      moved = grid;
      for (int j = 1; j < ny; ++j) {
        for (int i = 1; i < nx; ++i) {
          const double dx = ux(rng);
          const double dy = uy(rng);
          moved[id(i, j)] += Point2(dx, dy);
        }
      }
      ok = std::all_of(tris.begin(), tris.end(), [&](const Triangle& t) {
        return signed_area(moved[t[0]], moved[t[1]], moved[t[2]]) > kMinArea;
      });
    }
    ELASTINV_REQUIRE(ok, InvalidArgument, "build_structured: jitter keeps producing inverted triangles");
    grid = std::move(moved);
  }
  return Mesh(std::move(grid), std::move(tris), spec);
}

const std::vector<InternalEdge>& internal_edge_set(const Mesh& m) { return m.internal_edges(); }

Mesh renumbered(const Mesh& m, std::span<const int> node_order, std::span<const int> tri_order) {
  ELASTINV_REQUIRE(static_cast<int>(node_order.size()) == m.num_nodes() &&
                       static_cast<int>(tri_order.size()) == m.num_triangles(),
                   InvalidArgument, "renumbered: permutation size mismatch");
  std::vector<int> old_to_new(m.num_nodes(), -1);
  std::vector<Point2> nodes(m.num_nodes());
  for (int k = 0; k < m.num_nodes(); ++k) {
    old_to_new[node_order[k]] = k;
    nodes[k] = m.nodes()[node_order[k]];
  }
  std::vector<Triangle> tris(m.num_triangles());
  for (int k = 0; k < m.num_triangles(); ++k) {
    const auto& t = m.triangles()[tri_order[k]];
    tris[k] = {old_to_new[t[0]], old_to_new[t[1]], old_to_new[t[2]]};
  }
  return Mesh(std::move(nodes), std::move(tris), m.domain());
}

Eigen::MatrixXd interpolate_p1(const Mesh& source, const Eigen::MatrixXd& nodal,
                               std::span<const Point2> points, double snap) {
  ELASTINV_REQUIRE(nodal.rows() == source.num_nodes(), InvalidArgument,
                   "interpolate_p1: nodal data does not match mesh");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), nodal.cols());
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto loc = source.locate_snapped(points[k], snap);
    ELASTINV_REQUIRE(loc.has_value(), InvalidArgument, "interpolate_p1: point outside source mesh");
    const auto& tri = source.triangles()[loc->triangle];
    out.row(k) = loc->bary[0] * nodal.row(tri[0]) + loc->bary[1] * nodal.row(tri[1]) +
                 loc->bary[2] * nodal.row(tri[2]);
  }
  return out;
}

Eigen::VectorXd resample_p1(const Mesh& source, const Eigen::VectorXd& values, const Mesh& target,
                            int components) {
  ELASTINV_REQUIRE(values.size() == static_cast<Eigen::Index>(components) * source.num_nodes(),
                   InvalidArgument, "resample_p1: value count does not match source mesh");
  Eigen::MatrixXd nodal = values.reshaped(components, source.num_nodes()).transpose();
  Eigen::MatrixXd out = interpolate_p1(source, nodal, target.nodes());
  Eigen::MatrixXd t = out.transpose();
  return t.reshaped();
}

CartesianGrid CartesianGrid::covering(const Rect& box, double h, int components) {
  CartesianGrid g;
  g.origin = Point2(box.xmin, box.ymin);
  g.nx = cells_for(box.width(), h) + 1;
  g.ny = cells_for(box.height(), h) + 1;
  g.hx = box.width() / (g.nx - 1);
  g.hy = box.height() / (g.ny - 1);
  g.values = Eigen::MatrixXd::Zero(g.num_points(), components);
  return g;
}

std::vector<Point2> CartesianGrid::points() const {
  std::vector<Point2> pts;
  pts.reserve(num_points());
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) pts.push_back(point(i, j));
  return pts;
}

Rect CartesianGrid::bounds() const {
  return {origin.x(), origin.x() + (nx - 1) * hx, origin.y(), origin.y() + (ny - 1) * hy};
}

Eigen::MatrixXd CartesianGrid::interpolate(std::span<const Point2> pts, double snap) const {
  ELASTINV_REQUIRE(nx >= 2 && ny >= 2 && values.rows() == num_points(), InvalidArgument,
                   "CartesianGrid: inconsistent grid");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(pts.size()), values.cols());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double sx = (pts[k].x() - origin.x()) / hx;
    const double sy = (pts[k].y() - origin.y()) / hy;
    ELASTINV_REQUIRE(sx >= -snap / hx && sy >= -snap / hy && sx <= (nx - 1) + snap / hx &&
                         sy <= (ny - 1) + snap / hy,
                     InvalidArgument, "CartesianGrid: point outside the sampled rectangle");
    const int i = std::clamp(static_cast<int>(std::floor(sx)), 0, nx - 2);
    const int j = std::clamp(static_cast<int>(std::floor(sy)), 0, ny - 2);
    const double fx = std::clamp(sx - i, 0.0, 1.0);
    const double fy = std::clamp(sy - j, 0.0, 1.0);
    const auto v00 = values.row(index(i, j));
    const auto v10 = values.row(index(i + 1, j));
    const auto v11 = values.row(index(i + 1, j + 1));
    const auto v01 = values.row(index(i, j + 1));
    if (fx >= fy) {
      out.row(k) = v00 + fx * (v10 - v00) + fy * (v11 - v10);
    } else {
      out.row(k) = v00 + fx * (v11 - v01) + fy * (v01 - v00);
    }
  }
  return out;
}

}  // namespace elastinv

#pragma once

// File formats: VTK legacy ASCII unstructured grids, CSV tables and
// MatrixMarket coordinate matrices. Numbers are written with 17 significant
// digits so files round-trip exactly and repeat bitwise.

#include "elastinv/mesh.hpp"
#include "elastinv/sparse.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace elastinv {

/// Named array attached to points or cells: one row per entity, one column
/// for scalars, two or three for vectors.
struct NamedField {
  std::string name;
  Eigen::MatrixXd values;
};

struct VtkData {
  std::vector<Point2> nodes;
  std::vector<Triangle> triangles;
  std::vector<NamedField> point_data;
  std::vector<NamedField> cell_data;
};

std::string format_double(double v);

void write_vtk(const std::filesystem::path& path, const Mesh& m, const std::vector<NamedField>& point_data,
               const std::vector<NamedField>& cell_data, const std::string& title = "elastinv");
/// Reads files produced by write_vtk (SCALARS with LOOKUP_TABLE and VECTORS).
VtkData read_vtk(const std::filesystem::path& path);

/// node,x,y followed by one column per field component.
void write_nodes_csv(const std::filesystem::path& path, const Mesh& m, const std::vector<NamedField>& fields = {});
/// triangle,n0,n1,n2,cx,cy,area followed by one column per field component.
void write_triangles_csv(const std::filesystem::path& path, const Mesh& m,
                         const std::vector<NamedField>& fields = {});

/// Generic table: header row then rows of numbers.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

void write_matrix_market(const std::filesystem::path& path, const SparseOperator& a);
void write_matrix_market(const std::filesystem::path& path, const Eigen::VectorXd& v);
SparseOperator read_matrix_market(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace elastinv

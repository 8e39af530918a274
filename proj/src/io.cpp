#include "elastinv/io.hpp"

#include "elastinv/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace elastinv {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void check_rows(const std::vector<NamedField>& fields, Eigen::Index rows, const char* what) {
  for (const auto& f : fields) {
    ELASTINV_REQUIRE(f.values.rows() == rows, InvalidArgument,
                     std::string(what) + " field '" + f.name + "' has the wrong number of rows");
    ELASTINV_REQUIRE(f.values.cols() >= 1 && f.values.cols() <= 3, InvalidArgument,
                     std::string(what) + " field '" + f.name + "' needs 1 to 3 columns");
    ELASTINV_REQUIRE(!f.name.empty() && f.name.find_first_of(" \t\n,") == std::string::npos, InvalidArgument,
                     std::string(what) + " field names must be non-empty without spaces or commas");
  }
}

void write_attributes(std::ostream& out, const std::vector<NamedField>& fields) {
  for (const auto& f : fields) {
    if (f.values.cols() == 1) {
      out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      for (Eigen::Index i = 0; i < f.values.rows(); ++i) out << format_double(f.values(i, 0)) << '\n';
    } else {
      out << "VECTORS " << f.name << " double\n";
      for (Eigen::Index i = 0; i < f.values.rows(); ++i) {
        out << format_double(f.values(i, 0)) << ' ' << format_double(f.values(i, 1)) << ' '
            << format_double(f.values.cols() > 2 ? f.values(i, 2) : 0.0) << '\n';
      }
    }
  }
}

std::vector<std::string> column_names(const std::vector<NamedField>& fields) {
  std::vector<std::string> names;
  for (const auto& f : fields) {
    if (f.values.cols() == 1) {
      names.push_back(f.name);
    } else {
      static const char* suffix[] = {"_x", "_y", "_z"};
      for (Eigen::Index c = 0; c < f.values.cols(); ++c) names.push_back(f.name + suffix[c]);
    }
  }
  return names;
}

}  // namespace

void write_vtk(const fs::path& path, const Mesh& m, const std::vector<NamedField>& point_data,
               const std::vector<NamedField>& cell_data, const std::string& title) {
  check_rows(point_data, m.num_nodes(), "point");
  check_rows(cell_data, m.num_triangles(), "cell");
  std::ostringstream out;
  out << "# vtk DataFile Version 2.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << m.num_nodes() << " double\n";
  for (const auto& p : m.nodes()) out << format_double(p.x()) << ' ' << format_double(p.y()) << " 0\n";
  out << "CELLS " << m.num_triangles() << ' ' << 4 * m.num_triangles() << '\n';
  for (const auto& t : m.triangles()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "CELL_TYPES " << m.num_triangles() << '\n';
  for (int t = 0; t < m.num_triangles(); ++t) out << "5\n";
  if (!point_data.empty()) {
    out << "POINT_DATA " << m.num_nodes() << '\n';
    write_attributes(out, point_data);
  }
  if (!cell_data.empty()) {
    out << "CELL_DATA " << m.num_triangles() << '\n';
    write_attributes(out, cell_data);
  }
  write_text(path, out.str());
}

VtkData read_vtk(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  if (line.rfind("# vtk DataFile", 0) != 0) throw IoError(path.string() + ": not a VTK legacy file");
  std::getline(in, line);  // title
  std::getline(in, line);
  if (line.rfind("ASCII", 0) != 0) throw IoError(path.string() + ": only ASCII VTK is supported");

  VtkData d;
  std::vector<NamedField>* section = nullptr;
  Eigen::Index section_rows = 0;
  std::string word;
  while (in >> word) {
    if (word == "DATASET") {
      in >> word;
      if (word != "UNSTRUCTURED_GRID") throw IoError(path.string() + ": expected UNSTRUCTURED_GRID");
    } else if (word == "POINTS") {
      std::size_t n;
      in >> n >> word;
      d.nodes.resize(n);
      for (auto& p : d.nodes) {
        double z;
        in >> p.x() >> p.y() >> z;
      }
    } else if (word == "CELLS") {
      std::size_t n, total;
      in >> n >> total;
      d.triangles.resize(n);
      for (auto& t : d.triangles) {
        int k;
        in >> k;
        if (k != 3) throw IoError(path.string() + ": only triangle cells are supported");
        in >> t[0] >> t[1] >> t[2];
      }
    } else if (word == "CELL_TYPES") {
      std::size_t n;
      in >> n;
      for (std::size_t i = 0; i < n; ++i) {
        int type;
        in >> type;
        if (type != 5) throw IoError(path.string() + ": unexpected cell type");
      }
    } else if (word == "POINT_DATA" || word == "CELL_DATA") {
      in >> section_rows;
      section = word == "POINT_DATA" ? &d.point_data : &d.cell_data;
    } else if (word == "SCALARS" || word == "VECTORS") {
      if (!section) throw IoError(path.string() + ": attribute outside a data section");
      NamedField f;
      std::string type;
      in >> f.name >> type;
      int comps = 3;
      if (word == "SCALARS") {
        std::getline(in, line);
        std::istringstream rest(line);
        comps = 1;
        rest >> comps;
        in >> word >> type;  // LOOKUP_TABLE default
      }
      f.values.resize(section_rows, comps);
      for (Eigen::Index i = 0; i < section_rows; ++i)
        for (int c = 0; c < comps; ++c) in >> f.values(i, c);
      section->push_back(std::move(f));
    } else {
      throw IoError(path.string() + ": unexpected keyword '" + word + "'");
    }
    if (!in && !in.eof()) throw IoError(path.string() + ": malformed file");
  }
  return d;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : rows) {
    ELASTINV_REQUIRE(r.size() == header.size(), InvalidArgument, "write_csv: row width differs from header");
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << format_double(r[i]);
    out << '\n';
  }
  write_text(path, out.str());
}

void write_nodes_csv(const fs::path& path, const Mesh& m, const std::vector<NamedField>& fields) {
  check_rows(fields, m.num_nodes(), "node");
  std::vector<std::string> header{"node", "x", "y"};
  for (auto& n : column_names(fields)) header.push_back(std::move(n));
  std::vector<std::vector<double>> rows(m.num_nodes());
  for (int i = 0; i < m.num_nodes(); ++i) {
    rows[i] = {static_cast<double>(i), m.nodes()[i].x(), m.nodes()[i].y()};
    for (const auto& f : fields)
      for (Eigen::Index c = 0; c < f.values.cols(); ++c) rows[i].push_back(f.values(i, c));
  }
  write_csv(path, header, rows);
}

void write_triangles_csv(const fs::path& path, const Mesh& m, const std::vector<NamedField>& fields) {
  check_rows(fields, m.num_triangles(), "triangle");
  std::vector<std::string> header{"triangle", "n0", "n1", "n2", "cx", "cy", "area"};
  for (auto& n : column_names(fields)) header.push_back(std::move(n));
  std::vector<std::vector<double>> rows(m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles()[t];
    const Point2 c = m.centroid(t);
    rows[t] = {static_cast<double>(t), static_cast<double>(tri[0]), static_cast<double>(tri[1]),
               static_cast<double>(tri[2]), c.x(), c.y(), m.area(t)};
    for (const auto& f : fields)
      for (Eigen::Index c2 = 0; c2 < f.values.cols(); ++c2) rows[t].push_back(f.values(t, c2));
  }
  write_csv(path, header, rows);
}

void write_matrix_market(const fs::path& path, const SparseOperator& a) {
  std::ostringstream out;
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
  for (int col = 0; col < a.outerSize(); ++col)
    for (SparseOperator::InnerIterator it(a, col); it; ++it)
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << format_double(it.value()) << '\n';
  write_text(path, out.str());
}

void write_matrix_market(const fs::path& path, const Eigen::VectorXd& v) {
  std::ostringstream out;
  out << "%%MatrixMarket matrix array real general\n" << v.size() << " 1\n";
  for (Eigen::Index i = 0; i < v.size(); ++i) out << format_double(v[i]) << '\n';
  write_text(path, out.str());
}

SparseOperator read_matrix_market(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  if (line.rfind("%%MatrixMarket matrix", 0) != 0) throw IoError(path.string() + ": missing MatrixMarket banner");
  const bool coordinate = line.find("coordinate") != std::string::npos;
  const bool symmetric = line.find("symmetric") != std::string::npos;
  if (line.find("real") == std::string::npos) throw IoError(path.string() + ": only real matrices are supported");
  while (std::getline(in, line) && !line.empty() && line[0] == '%') {
  }
  std::istringstream dims(line);
  Eigen::Index rows = 0, cols = 0, nnz = 0;
  dims >> rows >> cols;
  if (coordinate) dims >> nnz;
  if (!dims) throw IoError(path.string() + ": malformed size line");
  std::vector<Triplet> trips;
  if (coordinate) {
    for (Eigen::Index k = 0; k < nnz; ++k) {
      Eigen::Index i, j;
      double v;
      if (!(in >> i >> j >> v)) throw IoError(path.string() + ": truncated entries");
      trips.emplace_back(i - 1, j - 1, v);
      if (symmetric && i != j) trips.emplace_back(j - 1, i - 1, v);
    }
  } else {
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        double v;
        if (!(in >> v)) throw IoError(path.string() + ": truncated entries");
        if (v != 0.0) trips.emplace_back(i, j, v);
      }
    }
  }
  SparseOperator a(rows, cols);
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  return a;
}

}  // namespace elastinv

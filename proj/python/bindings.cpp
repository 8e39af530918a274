#include "elastinv/error.hpp"
#include "elastinv/experiment.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace elastinv;

namespace {

Rect to_rect(const std::array<double, 4>& b) { return Rect{b[0], b[1], b[2], b[3]}; }

ExperimentConfig config_from(const py::dict& settings) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : settings) {
    std::string text;
    if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      for (const auto& item : v) text += (text.empty() ? "" : ",") + py::str(item).cast<std::string>();
    } else if (py::isinstance<py::bool_>(v)) {
      text = v.cast<bool>() ? "true" : "false";
    } else {
      text = py::str(v).cast<std::string>();
    }
    apply_setting(cfg, k.cast<std::string>(), text);
  }
  cfg.validate();
  return cfg;
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["names"] = m.names;
  d["rel_l2"] = m.rel_l2;
  d["linf"] = m.linf;
  d["tv"] = m.tv;
  d["rel_l2_total"] = m.rel_l2_total;
  d["objective"] = m.objective;
  d["iterations"] = m.iterations;
  d["converged"] = m.converged;
  d["sigma"] = m.sigma;
  return d;
}

Eigen::MatrixXd nodes_array(const Mesh& m) {
  Eigen::MatrixXd x(m.num_nodes(), 2);
  for (int i = 0; i < m.num_nodes(); ++i) x.row(i) = m.nodes()[i].transpose();
  return x;
}

Eigen::MatrixXi triangles_array(const Mesh& m) {
  Eigen::MatrixXi t(m.num_triangles(), 3);
  for (int i = 0; i < m.num_triangles(); ++i)
    for (int k = 0; k < 3; ++k) t(i, k) = m.triangles()[i][k];
  return t;
}

}  // namespace

PYBIND11_MODULE(_elastinv, mod) {
  mod.doc() = "Elastic coefficient reconstruction core";

  py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
  py::register_exception<InvalidArgument>(mod, "InvalidArgument", PyExc_ValueError);
  py::register_exception<SolverError>(mod, "SolverError", PyExc_RuntimeError);

  py::class_<Mesh, std::shared_ptr<Mesh>>(mod, "Mesh")
      .def_property_readonly("nodes", &nodes_array)
      .def_property_readonly("triangles", &triangles_array)
      .def_property_readonly("areas", [](const Mesh& m) { return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(m.areas().data(), m.num_triangles())); })
      .def_property_readonly("num_nodes", &Mesh::num_nodes)
      .def_property_readonly("num_triangles", &Mesh::num_triangles)
      .def_property_readonly("num_interior_nodes", &Mesh::num_interior_nodes)
      .def_property_readonly("num_internal_edges", [](const Mesh& m) { return m.internal_edges().size(); })
      .def("total_area", &Mesh::total_area)
      .def("locate",
           [](const Mesh& m, double x, double y) -> py::object {
             const auto loc = m.locate(Point2(x, y));
             if (!loc) return py::none();
             return py::make_tuple(loc->triangle, Eigen::Vector3d(loc->bary));
           },
           py::arg("x"), py::arg("y"));

  mod.def(
      "build_mesh",
      [](std::array<double, 4> box, double h, double jitter, std::uint64_t seed, bool clamped) {
        const Rect r = to_rect(box);
        const DomainSpec spec = clamped ? DomainSpec::clamped_bottom_loaded_top(r) : DomainSpec::free(r);
        return std::make_shared<Mesh>(build_structured(spec, h, jitter, seed));
      },
      py::arg("box") = std::array<double, 4>{-1.0, 1.0, -1.0, 1.0}, py::arg("h") = 0.1, py::arg("jitter") = 0.0,
      py::arg("seed") = 0, py::arg("clamped") = false,
      "Jittered right-triangle mesh of a rectangle (xmin, xmax, ymin, ymax).");

  mod.def(
      "canonical", [](const std::string& name) { return canonical(parse_canonical(name)).voigt(); },
      py::arg("name"), "Orthonormal Voigt matrix of a canonical tensor: ident, dilat, c1, c2, c3.");
  mod.def(
      "make_isotropic", [](double mu, double lambda) { return make_isotropic({mu, lambda}).voigt(); },
      py::arg("mu"), py::arg("lam"));

  mod.def("phantom_ids", &phantom_ids);
  mod.def(
      "rasterize",
      [](const std::string& id, const std::shared_ptr<Mesh>& m) {
        const auto fields = rasterize(phantom_by_id(id), m);
        Eigen::MatrixXd out(m->num_triangles(), fields.size());
        for (std::size_t k = 0; k < fields.size(); ++k) out.col(k) = fields[k].values;
        return out;
      },
      py::arg("phantom"), py::arg("mesh"), "Per-triangle phantom values, one column per coefficient.");

  mod.def(
      "build_tv", [](const std::shared_ptr<Mesh>& m) { return build_tv(*m).matrix; }, py::arg("mesh"));

  mod.def(
      "rel_l2_error",
      [](const Eigen::VectorXd& recon, const Eigen::VectorXd& truth, const std::shared_ptr<Mesh>& m) {
        return rel_l2_error(ScalarFieldP0(m, recon), ScalarFieldP0(m, truth));
      },
      py::arg("recon"), py::arg("truth"), py::arg("mesh"));

  mod.def(
      "solve",
      [](const SparseOperator& a, const Eigen::VectorXd& f, const SparseOperator& tv, int num_blocks,
         std::vector<double> eps_tv, std::vector<double> mu_min, double tol, int max_iterations) {
        RegParams reg;
        reg.eps_tv = std::move(eps_tv);
        reg.mu_min = std::move(mu_min);
        reg.tol_primal = reg.tol_dual = tol;
        reg.max_iterations = max_iterations;
        SolveReport rep;
        {
          py::gil_scoped_release release;
          rep = solve(a, f, tv, num_blocks, reg);
        }
        py::dict d;
        d["solution"] = rep.solution;
        d["objective"] = rep.objective;
        d["objective_history"] = rep.objective_history;
        d["iterations"] = rep.iterations;
        d["converged"] = rep.converged;
        d["kkt_stationarity"] = rep.kkt_stationarity;
        return d;
      },
      py::arg("A"), py::arg("F"), py::arg("L"), py::arg("num_blocks") = 1,
      py::arg("eps_tv") = std::vector<double>{1e-4}, py::arg("mu_min") = std::vector<double>{1.0},
      py::arg("tol") = 1e-6, py::arg("max_iterations") = 20000,
      "Minimize ||A M - F||^2 + sum eps_k ||L mu_k||_1 subject to M >= mu_min.");

  mod.def(
      "smallest_singular_pairs",
      [](const SparseOperator& a, int k, Eigen::Index first_block) {
        const auto sp = smallest_singular_pairs(a, k, first_block);
        return py::make_tuple(sp.values, sp.vectors);
      },
      py::arg("A"), py::arg("k"), py::arg("first_block") = 0);

  mod.def(
      "make_dataset",
      [](const py::dict& settings) {
        const ExperimentConfig cfg = config_from(settings);
        const ForwardDataset d = build_dataset(cfg, cfg.loads);
        py::dict out;
        out["mesh"] = std::const_pointer_cast<Mesh>(d.mesh);
        std::vector<Eigen::MatrixXd> u;
        for (const auto& f : d.displacements) u.push_back(f.values.reshaped(2, d.mesh->num_nodes()).transpose());
        out["displacements"] = u;
        out["labels"] = d.load_labels;
        return out;
      },
      py::arg("settings") = py::dict(), "Synthetic dataset from experiment settings (config keys).");

  mod.def(
      "assemble_system",
      [](const py::dict& settings) {
        const ExperimentConfig cfg = config_from(settings);
        const ForwardDataset d = build_dataset(cfg, cfg.loads);
        const InverseSystem sys = assemble_system(d, model_basis(cfg.model));
        return py::make_tuple(sys.matrix, sys.rhs, std::const_pointer_cast<Mesh>(d.mesh));
      },
      py::arg("settings") = py::dict(), "Stacked system (A, F, mesh) for experiment settings.");

  mod.def(
      "run_experiment",
      [](const py::dict& settings) {
        const ExperimentConfig cfg = config_from(settings);
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg);
        }
        py::dict out = metrics_dict(r.metrics);
        Eigen::MatrixXd recon(r.dataset.mesh->num_triangles(), r.report.fields.size());
        for (std::size_t k = 0; k < r.report.fields.size(); ++k) recon.col(k) = r.report.fields[k].values;
        out["reconstruction"] = recon;
        return out;
      },
      py::arg("settings") = py::dict(), "End-to-end run; returns metrics and the reconstructed fields.");
}

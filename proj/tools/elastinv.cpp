// Command-line front end: mesh, forward, invert, sweep, probe, export.
//
// Exit codes: 0 success, 1 runtime failure, 2 solver did not converge,
// 3 invalid configuration or arguments.

#include "elastinv/error.hpp"
#include "elastinv/experiment.hpp"
#include "elastinv/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace elastinv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitNotConverged = 2;
constexpr int kExitBadConfig = 3;

struct CommonOptions {
  std::string config;
  std::vector<std::string> settings;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool out_required) {
  cmd->add_option("-c,--config", o.config, "key = value file or provenance JSON");
  cmd->add_option("-s,--set", o.settings, "override one key, e.g. --set eps_tv=1e-3")->allow_extra_args(false);
  auto* out = cmd->add_option("-o,--out", o.out, "output directory");
  if (out_required) out->required();
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  for (const auto& s : o.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  return cfg;
}

std::vector<double> parse_numbers(const std::string& text) {
  ExperimentConfig scratch;
  apply_setting(scratch, "eps_tv", text);
  return scratch.eps_tv;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"elastinv: elastic coefficient reconstruction from internal displacement data"};
  app.require_subcommand(1);

  // mesh
  auto* mesh_cmd = app.add_subcommand("mesh", "build a jittered structured mesh and write VTK and CSV");
  std::string mesh_box = "-1,1,-1,1";
  double mesh_h = 0.03, mesh_jitter = 0.2;
  std::uint64_t mesh_seed = 1;
  std::string mesh_out;
  bool mesh_clamped = false;
  mesh_cmd->add_option("--box", mesh_box, "xmin,xmax,ymin,ymax");
  mesh_cmd->add_option("--size", mesh_h, "target cell size");
  mesh_cmd->add_option("--jitter", mesh_jitter, "interior node jitter as a fraction of h");
  mesh_cmd->add_option("--seed", mesh_seed, "jitter seed");
  mesh_cmd->add_flag("--clamped", mesh_clamped, "tag the bottom side Dirichlet and the top Neumann");
  mesh_cmd->add_option("-o,--out", mesh_out, "output directory")->required();

  CommonOptions fwd, inv, swp, prb, exp;
  auto* fwd_cmd = app.add_subcommand("forward", "generate a synthetic dataset");
  add_common(fwd_cmd, fwd, true);

  auto* inv_cmd = app.add_subcommand("invert", "run one reconstruction and write artifacts");
  add_common(inv_cmd, inv, false);

  auto* sweep_cmd = app.add_subcommand("sweep", "sweep eps_tv, eps_elas or the number of loads");
  add_common(sweep_cmd, swp, true);
  std::string sweep_param;
  std::string sweep_values;
  sweep_cmd->add_option("--param", sweep_param, "tv | elas | n")->required()->check(CLI::IsMember({"tv", "elas", "n"}));
  sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();

  auto* probe_cmd = app.add_subcommand("probe", "spectral or stability probe of the discrete system");
  add_common(probe_cmd, prb, true);
  std::string probe_kind = "spectral";
  int probe_k = 2;
  std::string probe_deltas = "1e-4,3e-4,1e-3,3e-3,1e-2";
  std::uint64_t direction_seed = 7;
  probe_cmd->add_option("--kind", probe_kind, "spectral | stability")->check(CLI::IsMember({"spectral", "stability"}));
  probe_cmd->add_option("--k", probe_k, "number of singular pairs");
  probe_cmd->add_option("--deltas", probe_deltas, "perturbation amplitudes");
  probe_cmd->add_option("--direction-seed", direction_seed, "seed of the smooth perturbation");

  auto* export_cmd = app.add_subcommand("export", "write the assembled system in MatrixMarket format");
  add_common(export_cmd, exp, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadConfig;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (*mesh_cmd) {
      ExperimentConfig scratch;
      apply_setting(scratch, "forward_box", mesh_box);
      const Rect box = scratch.forward_box;
      const DomainSpec spec = mesh_clamped ? DomainSpec::clamped_bottom_loaded_top(box) : DomainSpec::free(box);
      Mesh m = [&] {
        try {
          return build_structured(spec, mesh_h, mesh_jitter, mesh_seed);
        } catch (const InvalidArgument& e) {
          throw ConfigError(e.what());
        }
      }();
      write_vtk(fs::path(mesh_out) / "mesh.vtk", m, {}, {});
      write_nodes_csv(fs::path(mesh_out) / "nodes.csv", m);
      write_triangles_csv(fs::path(mesh_out) / "triangles.csv", m);
      std::printf("nodes %d triangles %d internal_edges %zu\n", m.num_nodes(), m.num_triangles(),
                  m.internal_edges().size());
      return kExitOk;
    }
    if (*fwd_cmd) {
      const ExperimentConfig cfg = resolve(fwd);
      const ForwardDataset d = build_dataset(cfg, cfg.loads);
      write_dataset(d, cfg, cfg.output_dir);
      std::printf("%d measurements on %d nodes written to %s\n", d.num_measurements(), d.mesh->num_nodes(),
                  cfg.output_dir.c_str());
      return kExitOk;
    }
    if (*inv_cmd) {
      const ExperimentConfig cfg = resolve(inv);
      const ExperimentResult r = run_experiment(cfg);
      std::cout << r.metrics.to_json().dump(2) << '\n';
      std::fprintf(stderr, "wall time %.2f s\n", seconds_since(t0));
      return r.metrics.converged ? kExitOk : kExitNotConverged;
    }
    if (*sweep_cmd) {
      const ExperimentConfig cfg = resolve(swp);
      const auto values = parse_numbers(sweep_values);
      SweepResult s;
      if (sweep_param == "tv") {
        s = sweep_tv(cfg, values);
      } else if (sweep_param == "elas") {
        s = sweep_elas(cfg, values);
      } else {
        std::vector<int> counts;
        for (double v : values) {
          if (v != std::floor(v)) throw ConfigError("load counts must be integers");
          counts.push_back(static_cast<int>(v));
        }
        s = sweep_n(cfg, counts);
      }
      write_sweep(s, cfg, cfg.output_dir);
      std::cout << s.to_json().dump(2) << '\n';
      std::fprintf(stderr, "wall time %.2f s\n", seconds_since(t0));
      bool all = true;
      for (const auto& r : s.rows) all = all && r.metrics.converged;
      return all ? kExitOk : kExitNotConverged;
    }
    if (*probe_cmd) {
      const ExperimentConfig cfg = resolve(prb);
      if (probe_kind == "stability") {
        const auto deltas = parse_numbers(probe_deltas);
        const StabilityResult s = stability_probe(cfg, deltas, direction_seed);
        write_text(fs::path(cfg.output_dir) / "stability.json", s.to_json().dump(2) + "\n");
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < s.deltas.size(); ++i) rows.push_back({s.deltas[i], s.errors[i]});
        write_csv(fs::path(cfg.output_dir) / "stability.csv", {"delta", "error"}, rows);
        std::cout << s.to_json().dump(2) << '\n';
        return kExitOk;
      }
      if (probe_k < 1) throw ConfigError("--k must be at least 1");
      const ForwardDataset d = build_dataset(cfg, cfg.loads);
      const InverseSystem sys = assemble_system(d, model_basis(cfg.model));
      const SingularPairs sp = smallest_singular_pairs(sys, std::min<int>(probe_k, sys.cols()));
      nlohmann::json j;
      j["sigma"] = sp.values;
      j["iterations"] = sp.iterations;
      if (sp.values.size() >= 2 && sp.values[1] > 0.0) j["gap_ratio"] = sp.values[0] / sp.values[1];
      write_text(fs::path(cfg.output_dir) / "spectrum.json", j.dump(2) + "\n");
      std::vector<NamedField> cells;
      const Eigen::Index nt = sys.num_triangles();
      for (Eigen::Index c = 0; c < sp.vectors.cols(); ++c)
        for (int k = 0; k < sys.num_coefficients(); ++k)
          cells.push_back({"v" + std::to_string(c) + "_" + coefficient_names(cfg.model)[k],
                           Eigen::VectorXd(sp.vectors.col(c).segment(k * nt, nt))});
      write_vtk(fs::path(cfg.output_dir) / "singular_vectors.vtk", *d.mesh, {}, cells);
      write_triangles_csv(fs::path(cfg.output_dir) / "singular_vectors.csv", *d.mesh, cells);
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }
    if (*export_cmd) {
      const ExperimentConfig cfg = resolve(exp);
      const ForwardDataset d = build_dataset(cfg, cfg.loads);
      const InverseSystem sys = assemble_system(d, model_basis(cfg.model));
      const fs::path dir = cfg.output_dir;
      write_matrix_market(dir / "A.mtx", sys.matrix);
      write_matrix_market(dir / "F.mtx", sys.rhs);
      write_matrix_market(dir / "L.mtx", build_tv(*d.mesh).matrix);
      for (int l = 0; l < sys.num_measurements(); ++l)
        for (int k = 0; k < sys.num_coefficients(); ++k)
          write_matrix_market(dir / ("A_" + std::to_string(l) + "_" + std::to_string(k) + ".mtx"), sys.blocks[l][k]);
      write_vtk(dir / "mesh.vtk", *d.mesh, {}, {});
      write_text(dir / "provenance.json", provenance(cfg, d, "export").dump(2) + "\n");
      std::printf("A %ld x %ld, %ld nonzeros\n", static_cast<long>(sys.rows()), static_cast<long>(sys.cols()),
                  static_cast<long>(sys.matrix.nonZeros()));
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}

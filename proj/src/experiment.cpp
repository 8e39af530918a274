#include "elastinv/experiment.hpp"

#include "elastinv/error.hpp"
#include "elastinv/io.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>
#include <random>

namespace elastinv {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- metrics

double rel_l2_error(const ScalarFieldP0& recon, const ScalarFieldP0& truth) {
  return rel_l2_error(std::span<const ScalarFieldP0>(&recon, 1), std::span<const ScalarFieldP0>(&truth, 1));
}

double rel_l2_error(std::span<const ScalarFieldP0> recon, std::span<const ScalarFieldP0> truth) {
  ELASTINV_REQUIRE(!truth.empty() && recon.size() == truth.size(), InvalidArgument,
                   "rel_l2_error: one reconstruction per truth field required");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    ELASTINV_REQUIRE(truth[k].mesh && recon[k].values.size() == truth[k].values.size(), InvalidArgument,
                     "rel_l2_error: fields live on different meshes");
    const Mesh& m = *truth[k].mesh;
    for (int t = 0; t < m.num_triangles(); ++t) {
      const double d = recon[k].values[t] - truth[k].values[t];
      num += m.area(t) * d * d;
      den += m.area(t) * truth[k].values[t] * truth[k].values[t];
    }
  }
  ELASTINV_REQUIRE(den > 0.0, InvalidArgument, "rel_l2_error: truth is identically zero");
  return std::sqrt(num / den);
}

double linf_error(const ScalarFieldP0& recon, const ScalarFieldP0& truth) {
  ELASTINV_REQUIRE(recon.values.size() == truth.values.size(), InvalidArgument,
                   "linf_error: fields live on different meshes");
  return (recon.values - truth.values).lpNorm<Eigen::Infinity>();
}

nlohmann::json Metrics::to_json() const {
  nlohmann::json j;
  nlohmann::json fields = nlohmann::json::array();
  for (std::size_t k = 0; k < names.size(); ++k)
    fields.push_back({{"name", names[k]}, {"rel_l2", rel_l2[k]}, {"linf", linf[k]}, {"tv", tv[k]}});
  j["coefficients"] = fields;
  j["rel_l2_total"] = rel_l2_total;
  j["objective"] = objective;
  j["kkt_stationarity"] = kkt_stationarity;
  j["iterations"] = iterations;
  j["converged"] = converged;
  j["sigma"] = sigma;
  return j;
}

Metrics compute_metrics(std::span<const ScalarFieldP0> recon, std::span<const ScalarFieldP0> truth,
                        const TVOperator& tv, const SolveReport& report) {
  Metrics m;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    m.rel_l2.push_back(rel_l2_error(recon[k], truth[k]));
    m.linf.push_back(linf_error(recon[k], truth[k]));
    m.tv.push_back(tv.seminorm(recon[k].values));
  }
  m.rel_l2_total = rel_l2_error(recon, truth);
  m.objective = report.objective;
  m.kkt_stationarity = report.kkt_stationarity;
  m.iterations = report.iterations;
  m.converged = report.converged;
  m.sigma = report.singular_values;
  return m;
}

// ------------------------------------------------------------- pipeline

namespace {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::vector<BoundaryLoad> first_loads(const ExperimentConfig& cfg, int n) {
  auto all = default_loads(cfg.forward_box.width());
  ELASTINV_REQUIRE(n >= 1 && n <= static_cast<int>(all.size()), ConfigError,
                   "load count must be between 1 and " + std::to_string(all.size()));
  all.resize(n);
  return all;
}

ForwardDataset first_measurements(const ForwardDataset& d, int n) {
  ForwardDataset out = d;
  out.displacements.resize(n);
  out.unsmoothed.resize(n);
  out.load_labels.resize(n);
  out.max_displacement.resize(n);
  return out;
}

struct Solved {
  SolveReport report;
  Metrics metrics;
};

Solved solve_and_score(const ForwardDataset& d, const ExperimentConfig& cfg, const RegParams& reg,
                       const std::vector<ScalarFieldP0>& truth) {
  const auto basis = model_basis(cfg.model);
  const InverseSystem sys = stage("system", [&] { return assemble_system(d, basis); });
  const TVOperator tv = build_tv(*d.mesh);
  Solved s;
  s.report = stage("solve", [&] { return solve(sys, tv, reg); });
  if (cfg.probe_k > 0) {
    s.report.singular_values =
        stage("probe", [&] { return smallest_singular_pairs(sys, std::min<int>(cfg.probe_k, sys.cols())).values; });
  }
  s.metrics = compute_metrics(s.report.fields, truth, tv, s.report);
  s.metrics.names = coefficient_names(cfg.model);
  return s;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace

ForwardDataset build_dataset(const ExperimentConfig& cfg, int loads) {
  cfg.validate();
  const auto l = first_loads(cfg, loads);
  return stage("dataset", [&] { return make_dataset(phantom_by_id(cfg.phantom), cfg.model, l, cfg.dataset_params()); });
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult r;
  r.config = cfg;
  r.dataset = build_dataset(cfg, cfg.loads);
  r.truth = stage("truth", [&] { return rasterize(phantom_by_id(cfg.phantom), r.dataset.mesh); });
  Solved s = solve_and_score(r.dataset, cfg, cfg.reg_params(), r.truth);
  r.report = std::move(s.report);
  r.metrics = std::move(s.metrics);
  if (!cfg.output_dir.empty()) stage("write", [&] { write_artifacts(r, cfg.output_dir); });
  return r;
}

nlohmann::json provenance(const ExperimentConfig& cfg, const ForwardDataset& dataset, std::string_view command) {
  nlohmann::json j;
  j["tool"] = "elastinv";
  j["format"] = 1;
  j["command"] = std::string(command);
  j["config"] = to_json(cfg);
  nlohmann::json seeds;
  seeds["master"] = cfg.seed;
  seeds["forward_mesh"] = derived_seed(cfg.seed, kSeedStreamForwardMesh);
  seeds["inverse_mesh"] = derived_seed(cfg.seed, kSeedStreamInverseMesh);
  std::vector<std::uint64_t> noise;
  for (int l = 0; l < dataset.num_measurements(); ++l)
    noise.push_back(derived_seed(cfg.seed, kSeedStreamNoise + static_cast<std::uint32_t>(l)));
  seeds["noise"] = noise;
  j["seeds"] = seeds;
  nlohmann::json ds;
  ds["load_labels"] = dataset.load_labels;
  ds["max_displacement"] = dataset.max_displacement;
  ds["inverse_nodes"] = dataset.mesh->num_nodes();
  ds["inverse_triangles"] = dataset.mesh->num_triangles();
  ds["inverse_interior_nodes"] = dataset.mesh->num_interior_nodes();
  j["dataset"] = ds;
  return j;
}

namespace {

std::vector<NamedField> displacement_fields(const ForwardDataset& d) {
  std::vector<NamedField> out;
  for (int l = 0; l < d.num_measurements(); ++l) {
    const Eigen::MatrixXd nodal = d.displacements[l].values.reshaped(2, d.mesh->num_nodes()).transpose();
    out.push_back({"u_" + d.load_labels[l], nodal});
  }
  return out;
}

}  // namespace

void write_artifacts(const ExperimentResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  const auto names = coefficient_names(r.config.model);
  std::vector<NamedField> cells;
  for (std::size_t k = 0; k < names.size(); ++k) {
    cells.push_back({"truth_" + names[k], r.truth[k].values});
    cells.push_back({"recon_" + names[k], r.report.fields[k].values});
  }
  const auto points = displacement_fields(r.dataset);
  write_vtk(dir / "mesh.vtk", *r.dataset.mesh, points, cells);
  write_triangles_csv(dir / "fields.csv", *r.dataset.mesh, cells);
  write_nodes_csv(dir / "nodes.csv", *r.dataset.mesh, points);
  write_text(dir / "metrics.json", dump(r.metrics.to_json()));

  nlohmann::json rep;
  rep["converged"] = r.report.converged;
  rep["iterations"] = r.report.iterations;
  rep["objective"] = r.report.objective;
  rep["data_misfit"] = r.report.data_misfit;
  rep["tv_term"] = r.report.tv_term;
  rep["kkt_stationarity"] = r.report.kkt_stationarity;
  rep["kkt_feasibility"] = r.report.kkt_feasibility;
  rep["objective_history"] = r.report.objective_history;
  rep["primal_residuals"] = r.report.primal_residuals;
  rep["dual_residuals"] = r.report.dual_residuals;
  rep["rho_history"] = r.report.rho_history;
  rep["singular_values"] = r.report.singular_values;
  write_text(dir / "report.json", dump(rep));
  write_text(dir / "provenance.json", dump(provenance(r.config, r.dataset, "invert")));
}

void write_dataset(const ForwardDataset& d, const ExperimentConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  const auto points = displacement_fields(d);
  const auto truth = rasterize(phantom_by_id(cfg.phantom), d.mesh);
  const auto names = coefficient_names(cfg.model);
  std::vector<NamedField> cells;
  for (std::size_t k = 0; k < names.size(); ++k) cells.push_back({"truth_" + names[k], truth[k].values});
  write_vtk(dir / "dataset.vtk", *d.mesh, points, cells);
  for (const auto& f : points) write_nodes_csv(dir / (f.name + ".csv"), *d.mesh, {f});
  write_triangles_csv(dir / "truth.csv", *d.mesh, cells);
  write_text(dir / "provenance.json", dump(provenance(cfg, d, "forward")));
}

// ----------------------------------------------------------------- sweeps

nlohmann::json SweepResult::to_json() const {
  nlohmann::json j;
  j["parameter"] = parameter;
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) rows_j.push_back({{"value", r.value}, {"metrics", r.metrics.to_json()}});
  j["rows"] = rows_j;
  return j;
}

namespace {

template <class T>
std::vector<T> sorted_values(std::span<const T> values) {
  ELASTINV_REQUIRE(values.size() >= 2, ConfigError, "a sweep needs at least two values");
  std::vector<T> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  ELASTINV_REQUIRE(std::adjacent_find(v.begin(), v.end()) == v.end(), ConfigError, "sweep values must be distinct");
  return v;
}

/// Evaluates fn(i) for every point concurrently; rows keep the point order.
template <class F>
std::vector<SweepRow> parallel_rows(std::size_t count, F&& fn) {
  std::vector<std::future<SweepRow>> jobs;
  jobs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) jobs.push_back(std::async(std::launch::async, [&fn, i] { return fn(i); }));
  std::vector<SweepRow> rows;
  rows.reserve(count);
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

}  // namespace

SweepResult sweep_tv(const ExperimentConfig& cfg, std::span<const double> values) {
  const auto v = sorted_values(values);
  for (double e : v) ELASTINV_REQUIRE(e >= 0.0, ConfigError, "eps_tv values must be non-negative");
  const ForwardDataset d = build_dataset(cfg, cfg.loads);
  const auto truth = rasterize(phantom_by_id(cfg.phantom), d.mesh);
  const auto basis = model_basis(cfg.model);
  const InverseSystem sys = stage("system", [&] { return assemble_system(d, basis); });
  const TVOperator tv = build_tv(*d.mesh);
  SweepResult out{"eps_tv", {}};
  out.rows = parallel_rows(v.size(), [&](std::size_t i) {
    RegParams reg = cfg.reg_params();
    reg.eps_tv = {v[i]};
    const SolveReport rep = stage("solve", [&] { return solve(sys, tv, reg); });
    Metrics m = compute_metrics(rep.fields, truth, tv, rep);
    m.names = coefficient_names(cfg.model);
    return SweepRow{v[i], std::move(m)};
  });
  return out;
}

SweepResult sweep_elas(const ExperimentConfig& cfg, std::span<const double> values) {
  const auto v = sorted_values(values);
  for (double e : v) ELASTINV_REQUIRE(e >= 0.0, ConfigError, "eps_elas values must be non-negative");
  ExperimentConfig raw = cfg;
  raw.eps_elas = 0.0;
  const ForwardDataset base = build_dataset(raw, cfg.loads);
  const auto truth = rasterize(phantom_by_id(cfg.phantom), base.mesh);
  SweepResult out{"eps_elas", {}};
  out.rows = parallel_rows(v.size(), [&](std::size_t i) {
    const ForwardDataset d = stage("smooth", [&] { return with_smoothing(base, v[i]); });
    return SweepRow{v[i], solve_and_score(d, cfg, cfg.reg_params(), truth).metrics};
  });
  return out;
}

SweepResult sweep_n(const ExperimentConfig& cfg, std::span<const int> counts) {
  const auto v = sorted_values(counts);
  const ForwardDataset full = build_dataset(cfg, v.back());
  ELASTINV_REQUIRE(v.front() >= 1, ConfigError, "measurement counts must be at least 1");
  const auto truth = rasterize(phantom_by_id(cfg.phantom), full.mesh);
  SweepResult out{"loads", {}};
  out.rows = parallel_rows(v.size(), [&](std::size_t i) {
    return SweepRow{static_cast<double>(v[i]),
                    solve_and_score(first_measurements(full, v[i]), cfg, cfg.reg_params(), truth).metrics};
  });
  return out;
}

void write_sweep(const SweepResult& sweep, const ExperimentConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::string> header{"value", "rel_l2_total", "objective", "converged", "iterations"};
  const auto names = coefficient_names(cfg.model);
  for (const auto& n : names) {
    header.push_back("rel_l2_" + n);
    header.push_back("linf_" + n);
    header.push_back("tv_" + n);
  }
  std::vector<std::vector<double>> rows;
  for (const auto& r : sweep.rows) {
    std::vector<double> row{r.value, r.metrics.rel_l2_total, r.metrics.objective, r.metrics.converged ? 1.0 : 0.0,
                            static_cast<double>(r.metrics.iterations)};
    for (std::size_t k = 0; k < names.size(); ++k) {
      row.push_back(r.metrics.rel_l2[k]);
      row.push_back(r.metrics.linf[k]);
      row.push_back(r.metrics.tv[k]);
    }
    rows.push_back(std::move(row));
  }
  write_csv(dir / "sweep.csv", header, rows);
  write_text(dir / "sweep.json", dump(sweep.to_json()));
  nlohmann::json prov;
  prov["tool"] = "elastinv";
  prov["format"] = 1;
  prov["command"] = "sweep";
  prov["config"] = to_json(cfg);
  prov["sweep"] = {{"parameter", sweep.parameter}, {"values", nlohmann::json::array()}};
  for (const auto& r : sweep.rows) prov["sweep"]["values"].push_back(r.value);
  write_text(dir / "provenance.json", dump(prov));
}

// -------------------------------------------------------------- stability

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  ELASTINV_REQUIRE(x.size() == y.size() && x.size() >= 2, InvalidArgument, "fit_line: need two or more points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  ELASTINV_REQUIRE(sxx > 0.0, InvalidArgument, "fit_line: abscissae are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : (ss_res == 0.0 ? 1.0 : 0.0);
  return f;
}

nlohmann::json StabilityResult::to_json() const {
  nlohmann::json j;
  j["deltas"] = deltas;
  j["errors"] = errors;
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["r2"] = fit.r2;
  j["degenerate"] = degenerate;
  j["sigma1"] = sigma1;
  j["sigma2"] = sigma2;
  return j;
}

VectorFieldP1 smooth_direction(const MeshPtr& mesh, const Rect& box, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  struct Mode {
    int p, q;
    double a, phx, phy;
  };
  std::array<std::vector<Mode>, 2> modes;
  for (int c = 0; c < 2; ++c) {
    for (int p = 1; p <= 2; ++p) {
      for (int q = 1; q <= 2; ++q) {
        const double a = amp(rng);
        const double phx = phase(rng);
        const double phy = phase(rng);
        modes[c].push_back({p, q, a, phx, phy});
      }
    }
  }
  return VectorFieldP1::from_function(mesh, [&](const Point2& x) {
    const double xi = (x.x() - box.xmin) / box.width();
    const double eta = (x.y() - box.ymin) / box.height();
    Point2 out = Point2::Zero();
    for (int c = 0; c < 2; ++c)
      for (const auto& m : modes[c])
        out[c] += m.a * std::sin(m.p * std::numbers::pi * xi + m.phx) * std::sin(m.q * std::numbers::pi * eta + m.phy);
    return out;
  });
}

namespace {

double max_strain(const VectorFieldP1& u) {
  double m = 0.0;
  for (const auto& s : strain_field(u).values) m = std::max(m, s.frobenius_norm());
  return m;
}

Eigen::VectorXd l2_normalized(const MeshPtr& mesh, const Eigen::VectorXd& v) {
  const double n = l2_norm(ScalarFieldP0(mesh, v));
  ELASTINV_REQUIRE(n > 0.0, SolverError, "stability_probe: zero singular vector");
  return v / n;
}

}  // namespace

StabilityResult stability_probe(const ExperimentConfig& cfg, std::span<const double> deltas,
                                std::uint64_t direction_seed) {
  ELASTINV_REQUIRE(cfg.model == ModelKind::Shear, ConfigError, "stability_probe needs the shear model");
  ELASTINV_REQUIRE(deltas.size() >= 2, ConfigError, "stability_probe needs at least two deltas");
  for (double d : deltas) ELASTINV_REQUIRE(d >= 0.0 && std::isfinite(d), ConfigError, "deltas must be >= 0");
  ExperimentConfig clean = cfg;
  clean.noise = 0.0;
  const ForwardDataset d = build_dataset(clean, clean.loads);
  const MeshPtr& mesh = d.mesh;
  const auto basis = model_basis(ModelKind::Shear);

  StabilityResult out;
  const InverseSystem sys0 = stage("system", [&] { return assemble_system(d, basis); });
  const SingularPairs base = stage("probe", [&] { return smallest_singular_pairs(sys0, 2); });
  out.sigma1 = base.values[0];
  out.sigma2 = base.values[1];
  const Eigen::VectorXd mu0 = l2_normalized(mesh, base.vectors.col(0));

  const VectorFieldP1 w = smooth_direction(mesh, cfg.inverse_crime ? cfg.forward_box : cfg.inverse_box, direction_seed);
  const double w_strain = max_strain(w);
  ELASTINV_REQUIRE(w_strain > 0.0, InvalidArgument, "stability_probe: perturbation has no strain");
  std::vector<double> scale;
  for (const auto& u : d.displacements) scale.push_back(max_strain(u) / w_strain);

  std::vector<double> lx, ly;
  for (double delta : deltas) {
    out.deltas.push_back(delta);
    if (delta == 0.0) {
      out.errors.push_back(0.0);
      continue;
    }
    std::vector<VectorFieldP1> perturbed;
    for (std::size_t l = 0; l < d.displacements.size(); ++l)
      perturbed.emplace_back(mesh, d.displacements[l].values + delta * scale[l] * w.values);
    const InverseSystem sys = stage("system", [&] { return assemble_system(mesh, perturbed, basis); });
    const SingularPairs sp = stage("probe", [&] { return smallest_singular_pairs(sys, 1); });
    Eigen::VectorXd mu = l2_normalized(mesh, sp.vectors.col(0));
    if (l2_inner(ScalarFieldP0(mesh, mu), ScalarFieldP0(mesh, mu0)) < 0.0) mu = -mu;
    const double e = l2_norm(ScalarFieldP0(mesh, mu - mu0));
    out.errors.push_back(e);
    if (e > 0.0) {
      lx.push_back(std::log(delta));
      ly.push_back(std::log(e));
    }
  }
  if (lx.size() < 2 || std::adjacent_find(lx.begin(), lx.end(), std::not_equal_to<>()) == lx.end()) {
    out.degenerate = true;
    return out;
  }
  out.fit = fit_line(lx, ly);
  out.degenerate = !std::isfinite(out.fit.slope) || !std::isfinite(out.fit.r2);
  return out;
}

}  // namespace elastinv

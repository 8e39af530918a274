// Acceptance suite. Prints one PASS/FAIL line per criterion; `--only N`
// runs a single criterion. Exit status is 1 when any selected criterion
// fails.

#include "elastinv/error.hpp"
#include "elastinv/experiment.hpp"
#include "elastinv/io.hpp"
#include "solver_oracle.hpp"

#include <CLI11.hpp>

#include <Eigen/Dense>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

using namespace elastinv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.phantom = "a";
  c.model = ModelKind::Shear;
  c.h_forward = 0.01;
  c.h_inverse = 0.03;
  c.eps_tv = {1e-4};
  c.eps_elas = 1e-4;
  c.seed = 1;
  return c;
}

// ---------------------------------------------------------------- 1: algebra

Outcome exact_algebra() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.1, 3.0);
  auto rand_sym = [&] { return SymMat2{u(rng), u(rng), u(rng)}; };
  auto sym_err = [](const SymMat2& a, const SymMat2& b) { return (a - b).frobenius_norm(); };

  double tensor = 0.0;
  const Tensor4Sym c1 = canonical(CanonicalTensor::C1), c2 = canonical(CanonicalTensor::C2),
                   c3 = canonical(CanonicalTensor::C3);
  for (int trial = 0; trial < 200; ++trial) {
    const SymMat2 a = rand_sym(), b = rand_sym();
    const IsoParams p{pos(rng), u(rng)};
    const SymMat2 iso = 2.0 * p.mu * a + p.lambda * a.trace() * SymMat2::identity();
    tensor = std::max(tensor, sym_err(make_isotropic(p).apply(a), iso));
    tensor = std::max(tensor, sym_err((c1 + c2 + c3).apply(a), a));
    Eigen::Matrix3d r = Eigen::Matrix3d::NullaryExpr([&] { return u(rng); });
    const Tensor4Sym t(r + r.transpose());
    tensor = std::max(tensor, std::abs(frob_dd(t.apply(a), b) - frob_dd(a, t.apply(b))));
    Eigen::Matrix2d g;
    g << u(rng), u(rng), u(rng), u(rng);
    const Eigen::Matrix2d skew = g - g.transpose();
    tensor = std::max(tensor, t.apply(skew).frobenius_norm());
  }

  const MeshPtr m = std::make_shared<const Mesh>(
      build_structured(DomainSpec::clamped_bottom_loaded_top({-1, 1, -1, 1}), 0.1, 0.25, 7));
  double rigid = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const double ax = u(rng), ay = u(rng), w = u(rng);
    const auto v = VectorFieldP1::from_function(m, [&](const Point2& p) { return Point2(ax - w * p.y(), ay + w * p.x()); });
    for (const SymMat2& e : strain_field(v).values) rigid = std::max(rigid, e.frobenius_norm());
  }

  std::vector<Tensor4Sym> per_tri(m->num_triangles());
  for (auto& t : per_tri) t = make_isotropic({pos(rng), pos(rng)}) + pos(rng) * c3;
  const Eigen::MatrixXd k = Eigen::MatrixXd(assemble_elastic_stiffness(*m, per_tri));
  Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(k.rows(), k.cols());
  for (int t = 0; t < m->num_triangles(); ++t) {
    const auto& tri = m->triangles()[t];
    Eigen::Matrix3d vm;
    for (int a = 0; a < 3; ++a) vm.row(a) << 1.0, m->nodes()[tri[a]].x(), m->nodes()[tri[a]].y();
    const Eigen::Matrix3d coef = vm.inverse();  // column a holds the hat function of vertex a
    const double area = 0.5 * std::abs(vm.determinant());
    auto strain = [&](int a, int c) {
      Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
      g.row(c) = coef.block<2, 1>(1, a).transpose();
      return symmetric_part(g);
    };
    // Three edge-midpoint quadrature, exact for the constant integrand.
    for (int q = 0; q < 3; ++q)
      for (int a = 0; a < 3; ++a)
        for (int ca = 0; ca < 2; ++ca)
          for (int b = 0; b < 3; ++b)
            for (int cb = 0; cb < 2; ++cb)
              oracle(2 * tri[a] + ca, 2 * tri[b] + cb) +=
                  area / 3.0 * frob_dd(per_tri[t].apply(strain(b, cb)), strain(a, ca));
  }
  const double quad = (k - oracle).cwiseAbs().maxCoeff() / oracle.cwiseAbs().maxCoeff();

  const TVOperator tv = build_tv(*m);
  Eigen::VectorXd mu(m->num_triangles());
  for (auto& x : mu) x = pos(rng);
  double jumps = 0.0;
  for (const auto& e : m->internal_edges()) jumps += e.length * std::abs(mu[e.tri_i] - mu[e.tri_j]);
  const double tv_err = std::abs(tv.seminorm(mu) - jumps) / jumps;

  const bool pass = tensor <= 1e-12 && rigid <= 1e-12 && quad <= 1e-12 && tv_err <= 1e-14;
  return {pass, "tensor " + fmt(tensor) + ", rigid strain " + fmt(rigid) + ", stiffness vs quadrature " + fmt(quad) +
                    ", TV vs jump sum " + fmt(tv_err)};
}

// ------------------------------------------------------------ 2: inverse crime

Outcome inverse_crime() {
  DatasetParams p;
  p.h_forward = 0.1;
  p.seed = 1;
  p.inverse_crime = true;
  p.dirichlet = Segment{Side::Bottom, -1.0, 0.0};
  const auto loads = default_loads(2.0);
  const ForwardDataset d = make_dataset(phantom_by_id("a"), ModelKind::Shear, std::span(loads).first(2), p);
  const InverseSystem sys = assemble_system(d, model_basis(ModelKind::Shear));
  const Eigen::VectorXd truth = rasterize(phantom_by_id("a"), d.mesh)[0].values;
  const double residual = (sys.matrix * truth).lpNorm<Eigen::Infinity>();
  const SingularPairs sp = smallest_singular_pairs(sys, 2);
  const double gap = sp.values[0] / sp.values[1];
  Eigen::VectorXd v = sp.vectors.col(0);
  if (v.dot(truth) < 0) v = -v;
  const double vec_err = (v - truth.normalized()).norm();
  const bool pass = residual <= 1e-10 && gap <= 1e-6 && vec_err <= 1e-6;
  return {pass, "|A mu|_inf " + fmt(residual) + ", s1/s2 " + fmt(gap) + ", null vector error " + fmt(vec_err)};
}

// ------------------------------------------------------------ 3: solver oracle

Outcome solver_oracle() {
  std::mt19937_64 rng(20240917);
  double worst = 0.0;
  int passed = 0;
  const int trials = 24;
  for (int trial = 0; trial < trials; ++trial) {
    const auto in = testing::random_instance(rng);
    const auto rep = solve(in.a, in.f, in.tv, in.blocks, in.reg);
    const double ref = testing::dual_reference(in).first;
    const double rel = std::abs(rep.objective - ref) / ref;
    worst = std::max(worst, rel);
    passed += rel <= 1e-6;
  }
  return {passed == trials, std::to_string(passed) + "/" + std::to_string(trials) +
                                " instances within 1e-6, worst relative objective gap " + fmt(worst)};
}

// ------------------------------------------------------- 4: shear reconstruction

Outcome shear_reconstruction(const fs::path& out) {
  ExperimentConfig c = desk_config();
  c.eps_elas = 1e-5;
  c.output_dir = (out / "shear").string();
  const auto r = run_experiment(c);
  const double e = r.metrics.rel_l2[0];
  return {r.report.converged && e <= 0.15,
          "relative L2 error " + fmt(e) + " (target 0.15), converged " + (r.report.converged ? "yes" : "no")};
}

// ---------------------------------------------------------------- 5: TV sweep

Outcome tv_sweep(const fs::path& out) {
  ExperimentConfig c = desk_config();
  c.noise = 0.01;
  const std::vector<double> values{1e-6, 1e-4, 1e-3};
  const auto s = sweep_tv(c, values);
  write_sweep(s, c, out / "tv_sweep");
  const auto& m6 = s.rows[0].metrics;
  const auto& m4 = s.rows[1].metrics;
  const auto& m3 = s.rows[2].metrics;
  const bool pass = m4.rel_l2[0] <= m6.rel_l2[0] && m3.tv[0] < m4.tv[0];
  return {pass, "error " + fmt(m6.rel_l2[0]) + " / " + fmt(m4.rel_l2[0]) + " / " + fmt(m3.rel_l2[0]) +
                    " at eps 1e-6 / 1e-4 / 1e-3, TV " + fmt(m4.tv[0]) + " -> " + fmt(m3.tv[0])};
}

// ------------------------------------------------------- 6: multi-measurement

Outcome multi_measurement(const fs::path& out) {
  ExperimentConfig lame = desk_config();
  lame.phantom = "lame1";
  lame.model = ModelKind::Lame;
  const std::vector<int> counts{1, 2, 4};
  const auto s = sweep_n(lame, counts);
  write_sweep(s, lame, out / "lame_n_sweep");
  const double e1 = s.rows[0].metrics.rel_l2_total, e2 = s.rows[1].metrics.rel_l2_total,
               e4 = s.rows[2].metrics.rel_l2_total;
  const bool trend = e4 <= 1.05 * e2 && e2 <= 1.05 * e1;

  ExperimentConfig aniso = desk_config();
  aniso.phantom = "aniso";
  aniso.model = ModelKind::Aniso;
  aniso.loads = 4;
  aniso.output_dir = (out / "aniso").string();
  const auto r = run_experiment(aniso);
  double worst = 0.0;
  std::string per;
  for (std::size_t k = 0; k < r.metrics.rel_l2.size(); ++k) {
    worst = std::max(worst, r.metrics.rel_l2[k]);
    per += (k ? " / " : "") + fmt(r.metrics.rel_l2[k]);
  }
  const bool fields = worst <= 0.2;
  return {trend && fields, "Lame error n=1/2/4 " + fmt(e1) + " / " + fmt(e2) + " / " + fmt(e4) + " (trend " +
                               (trend ? "ok" : "violated") + "), aniso n=4 errors " + per + " (target 0.2)"};
}

// -------------------------------------------------------------- 7: stability

Outcome stability(const fs::path& out) {
  ExperimentConfig c = desk_config();
  c.loads = 4;
  const std::vector<double> deltas{1e-4, 3.1622776601683794e-4, 1e-3, 3.1622776601683795e-3, 1e-2};
  const auto r = stability_probe(c, deltas, 1);
  write_text(out / "stability" / "stability.json", r.to_json().dump(2) + "\n");
  const bool pass = !r.degenerate && r.fit.slope >= 0.8 && r.fit.slope <= 1.2 && r.fit.r2 >= 0.9;
  return {pass, "slope " + fmt(r.fit.slope) + ", R2 " + fmt(r.fit.r2) + ", s1/s2 " + fmt(r.sigma1 / r.sigma2)};
}

// ------------------------------------------------------------ 8: determinism

Outcome determinism(const fs::path& out) {
  ExperimentConfig c = desk_config();
  c.noise = 0.01;
  c.loads = 2;
  c.output_dir = (out / "determinism_a").string();
  run_experiment(c);
  ExperimentConfig again = load_config(out / "determinism_a" / "provenance.json");
  again.output_dir = (out / "determinism_b").string();
  run_experiment(again);
  int compared = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(out / "determinism_a")) {
    const auto ext = entry.path().extension();
    if (ext != ".csv" && ext != ".json") continue;
    ++compared;
    const fs::path other = out / "determinism_b" / entry.path().filename();
    if (!fs::exists(other) || read_text(entry.path()) != read_text(other)) ++differing;
  }
  return {compared > 0 && differing == 0,
          std::to_string(compared) + " CSV/JSON files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string out = "acceptance_runs";
  int only = 0;
  app.add_option("-o,--out", out, "Directory for run artifacts");
  app.add_option("--only", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const fs::path dir(out);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"exact algebra", exact_algebra},
      {"inverse crime identity", inverse_crime},
      {"solver oracle", solver_oracle},
      {"shear reconstruction", [&] { return shear_reconstruction(dir); }},
      {"TV sweep trend", [&] { return tv_sweep(dir); }},
      {"multi-measurement trends", [&] { return multi_measurement(dir); }},
      {"stability slope", [&] { return stability(dir); }},
      {"determinism", [&] { return determinism(dir); }},
  };

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i) + 1 != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail
              << " (" << fmt(secs) << " s)" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}

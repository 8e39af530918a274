#pragma once

// Experiment orchestration: configuration, metrics, end-to-end runs with
// on-disk artifacts, parameter sweeps and the stability probe.

#include "elastinv/forward.hpp"
#include "elastinv/inverse.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace elastinv {

/// Flat experiment description. The text form is one `key = value` per
/// line, `#` starts a comment, lists are comma separated:
///
///   phantom = a              model = shear | lame | aniso
///   loads = 1                seed = 1
///   h_forward = 0.01         h_inverse = 0.03
///   forward_jitter = 0.2     inverse_jitter = 0.2
///   eps_tv = 1e-4            (one value or one per coefficient)
///   mu_min = 1               (one value or one per coefficient)
///   eps_elas = 1e-4          noise = 0
///   forward_box = -1,1,-1,1  inverse_box = -0.9,0.9,-0.9,0.9
///   dirichlet = full         (or lo,hi along the bottom side)
///   inverse_crime = false    tol = 1e-6
///   max_iterations = 20000   probe_k = 0
///   output_dir = out
struct ExperimentConfig {
  std::string phantom = "a";
  ModelKind model = ModelKind::Shear;
  int loads = 1;
  double h_forward = 0.01;
  double h_inverse = 0.03;
  double forward_jitter = 0.2;
  double inverse_jitter = 0.2;
  std::vector<double> eps_tv{1e-4};
  std::vector<double> mu_min{1.0};
  double eps_elas = 1e-4;
  double noise = 0.0;
  std::uint64_t seed = 1;
  Rect forward_box{-1.0, 1.0, -1.0, 1.0};
  Rect inverse_box{-0.9, 0.9, -0.9, 0.9};
  /// Clamped stretch [lo, hi] of the forward bottom side; whole side if empty.
  std::optional<std::pair<double, double>> dirichlet;
  bool inverse_crime = false;
  double tol = 1e-6;
  int max_iterations = 20000;
  /// Number of smallest singular values of the system to report (0: none).
  int probe_k = 0;
  std::string output_dir;

  /// Throws ConfigError on any inconsistent or unresolvable value.
  void validate() const;
  int num_coefficients() const;
  DatasetParams dataset_params() const;
  RegParams reg_params() const;
};

/// Sets one key from its text value. Throws ConfigError for unknown keys or
/// unparsable values.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);
ExperimentConfig parse_config(std::string_view text);
std::string to_config_text(const ExperimentConfig& cfg);

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Reads a key-value text file, or a provenance JSON written by an earlier
/// run (detected by a leading '{').
ExperimentConfig load_config(const std::filesystem::path& path);

/// sqrt(sum area (r - t)^2) / sqrt(sum area t^2). Throws InvalidArgument
/// for a zero truth or mismatched meshes.
double rel_l2_error(const ScalarFieldP0& recon, const ScalarFieldP0& truth);
/// Same ratio with the sums running over all coefficient fields.
double rel_l2_error(std::span<const ScalarFieldP0> recon, std::span<const ScalarFieldP0> truth);
double linf_error(const ScalarFieldP0& recon, const ScalarFieldP0& truth);

struct Metrics {
  std::vector<std::string> names;
  std::vector<double> rel_l2;
  std::vector<double> linf;
  std::vector<double> tv;
  double rel_l2_total = 0.0;
  double objective = 0.0;
  double kkt_stationarity = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> sigma;

  nlohmann::json to_json() const;
};

Metrics compute_metrics(std::span<const ScalarFieldP0> recon, std::span<const ScalarFieldP0> truth,
                        const TVOperator& tv, const SolveReport& report);

/// Dataset for the configuration using the first `loads` default tractions.
ForwardDataset build_dataset(const ExperimentConfig& cfg, int loads);

struct ExperimentResult {
  ExperimentConfig config;
  ForwardDataset dataset;
  std::vector<ScalarFieldP0> truth;
  SolveReport report;
  Metrics metrics;
};

/// dataset -> system -> solve -> metrics. Writes artifacts when
/// cfg.output_dir is set. Stage failures surface as StageError.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Provenance record: the full configuration plus derived seeds and
/// dataset summaries. Feeding it back to load_config reproduces the run.
nlohmann::json provenance(const ExperimentConfig& cfg, const ForwardDataset& dataset, std::string_view command);

/// mesh.vtk, fields.csv, nodes.csv, metrics.json, report.json and
/// provenance.json in `dir`.
void write_artifacts(const ExperimentResult& result, const std::filesystem::path& dir);

/// Dataset files: inversion mesh with every displacement as point data,
/// per-load CSV tables and the provenance record.
void write_dataset(const ForwardDataset& dataset, const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct SweepRow {
  double value = 0.0;
  Metrics metrics;
};

struct SweepResult {
  std::string parameter;
  std::vector<SweepRow> rows;  // sorted by value

  nlohmann::json to_json() const;
};

/// TV weight sweep on one shared dataset and system.
SweepResult sweep_tv(const ExperimentConfig& cfg, std::span<const double> values);
/// Smoothing sweep: one noisy dataset re-smoothed per value.
SweepResult sweep_elas(const ExperimentConfig& cfg, std::span<const double> values);
/// Measurement-count sweep: the first n loads of one dataset.
SweepResult sweep_n(const ExperimentConfig& cfg, std::span<const int> counts);

/// sweep.csv, sweep.json and provenance.json in `dir`.
void write_sweep(const SweepResult& sweep, const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least-squares line through (x, y).
LineFit fit_line(std::span<const double> x, std::span<const double> y);

struct StabilityResult {
  std::vector<double> deltas;
  std::vector<double> errors;
  /// Fit of log(error) against log(delta) over the positive deltas.
  LineFit fit;
  bool degenerate = false;
  double sigma1 = 0.0;
  double sigma2 = 0.0;

  nlohmann::json to_json() const;
};

/// Smooth perturbation field from a seed: a few low-frequency sine modes
/// per component over the inversion box.
VectorFieldP1 smooth_direction(const MeshPtr& mesh, const Rect& box, std::uint64_t seed);

/// Perturbs each measurement by delta * w, where w is the smooth direction
/// scaled to the largest strain of that measurement, and records the L2
/// drift of the normalized smallest singular vector. Shear model only; the
/// baseline dataset is taken noise-free.
StabilityResult stability_probe(const ExperimentConfig& cfg, std::span<const double> deltas,
                                std::uint64_t direction_seed);

}  // namespace elastinv

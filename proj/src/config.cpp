#include "elastinv/error.hpp"
#include "elastinv/experiment.hpp"
#include "elastinv/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace elastinv {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': cannot read '" + std::string(value) + "' as " +
                    std::string(expected));
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string_view s = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) bad_value(key, text, "a number");
  return v;
}

std::int64_t parse_int(std::string_view key, std::string_view text) {
  const std::string_view s = trim(text);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) bad_value(key, text, "an integer");
  return v;
}

std::uint64_t parse_uint(std::string_view key, std::string_view text) {
  const std::string_view s = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) bad_value(key, text, "a non-negative integer");
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string_view s = trim(text);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, text, "a boolean");
}

std::vector<double> parse_list(std::string_view key, std::string_view text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(parse_double(key, text.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Rect parse_box(std::string_view key, std::string_view text) {
  const auto v = parse_list(key, text);
  if (v.size() != 4) bad_value(key, text, "xmin,xmax,ymin,ymax");
  return Rect{v[0], v[1], v[2], v[3]};
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::string box_text(const Rect& r) { return join({r.xmin, r.xmax, r.ymin, r.ymax}); }

}  // namespace

void apply_setting(ExperimentConfig& cfg, std::string_view key_in, std::string_view value_in) {
  const std::string_view key = trim(key_in);
  const std::string_view value = trim(value_in);
  if (key == "phantom") {
    if (value.empty()) bad_value(key, value, "a phantom id");
    cfg.phantom = std::string(value);
  } else if (key == "model") {
    try {
      cfg.model = parse_model(value);
    } catch (const InvalidArgument&) {
      bad_value(key, value, "shear, lame or aniso");
    }
  } else if (key == "loads") {
    cfg.loads = static_cast<int>(parse_int(key, value));
  } else if (key == "h_forward") {
    cfg.h_forward = parse_double(key, value);
  } else if (key == "h_inverse") {
    cfg.h_inverse = parse_double(key, value);
  } else if (key == "forward_jitter") {
    cfg.forward_jitter = parse_double(key, value);
  } else if (key == "inverse_jitter") {
    cfg.inverse_jitter = parse_double(key, value);
  } else if (key == "eps_tv") {
    cfg.eps_tv = parse_list(key, value);
  } else if (key == "mu_min") {
    cfg.mu_min = parse_list(key, value);
  } else if (key == "eps_elas") {
    cfg.eps_elas = parse_double(key, value);
  } else if (key == "noise") {
    cfg.noise = parse_double(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_uint(key, value);
  } else if (key == "forward_box") {
    cfg.forward_box = parse_box(key, value);
  } else if (key == "inverse_box") {
    cfg.inverse_box = parse_box(key, value);
  } else if (key == "dirichlet") {
    if (value == "full") {
      cfg.dirichlet.reset();
    } else {
      const auto v = parse_list(key, value);
      if (v.size() != 2) bad_value(key, value, "'full' or lo,hi");
      cfg.dirichlet = std::make_pair(v[0], v[1]);
    }
  } else if (key == "inverse_crime") {
    cfg.inverse_crime = parse_bool(key, value);
  } else if (key == "tol") {
    cfg.tol = parse_double(key, value);
  } else if (key == "max_iterations") {
    cfg.max_iterations = static_cast<int>(parse_int(key, value));
  } else if (key == "probe_k") {
    cfg.probe_k = static_cast<int>(parse_int(key, value));
  } else if (key == "output_dir") {
    cfg.output_dir = std::string(value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

std::string to_config_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "phantom = " << cfg.phantom << '\n'
      << "model = " << to_string(cfg.model) << '\n'
      << "loads = " << cfg.loads << '\n'
      << "h_forward = " << format_double(cfg.h_forward) << '\n'
      << "h_inverse = " << format_double(cfg.h_inverse) << '\n'
      << "forward_jitter = " << format_double(cfg.forward_jitter) << '\n'
      << "inverse_jitter = " << format_double(cfg.inverse_jitter) << '\n'
      << "eps_tv = " << join(cfg.eps_tv) << '\n'
      << "mu_min = " << join(cfg.mu_min) << '\n'
      << "eps_elas = " << format_double(cfg.eps_elas) << '\n'
      << "noise = " << format_double(cfg.noise) << '\n'
      << "seed = " << cfg.seed << '\n'
      << "forward_box = " << box_text(cfg.forward_box) << '\n'
      << "inverse_box = " << box_text(cfg.inverse_box) << '\n'
      << "dirichlet = " << (cfg.dirichlet ? join({cfg.dirichlet->first, cfg.dirichlet->second}) : "full") << '\n'
      << "inverse_crime = " << (cfg.inverse_crime ? "true" : "false") << '\n'
      << "tol = " << format_double(cfg.tol) << '\n'
      << "max_iterations = " << cfg.max_iterations << '\n'
      << "probe_k = " << cfg.probe_k << '\n';
  if (!cfg.output_dir.empty()) out << "output_dir = " << cfg.output_dir << '\n';
  return out.str();
}

int ExperimentConfig::num_coefficients() const { return static_cast<int>(model_basis(model).size()); }

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  const auto ids = phantom_ids();
  if (std::find(ids.begin(), ids.end(), phantom) == ids.end()) fail("unknown phantom '" + phantom + "'");
  const int nk = num_coefficients();
  if (phantom_by_id(phantom).num_coefficients() != nk)
    fail("phantom '" + phantom + "' does not belong to model " + std::string(to_string(model)));
  if (loads < 1 || loads > 4) fail("loads must be between 1 and 4");
  if (!(h_forward > 0.0) || !(h_inverse > 0.0)) fail("mesh sizes must be positive");
  if (forward_jitter < 0.0 || forward_jitter >= 0.5 || inverse_jitter < 0.0 || inverse_jitter >= 0.5)
    fail("jitter must lie in [0, 0.5)");
  auto sized = [nk](const std::vector<double>& v) { return v.size() == 1 || static_cast<int>(v.size()) == nk; };
  if (!sized(eps_tv)) fail("eps_tv needs one value or one per coefficient");
  if (!sized(mu_min)) fail("mu_min needs one value or one per coefficient");
  for (double e : eps_tv)
    if (e < 0.0) fail("eps_tv must be non-negative");
  for (double m : mu_min)
    if (!(m > 0.0)) fail("mu_min must be positive");
  if (eps_elas < 0.0) fail("eps_elas must be non-negative");
  if (noise < 0.0) fail("noise must be non-negative");
  auto box_ok = [](const Rect& r) { return r.xmin < r.xmax && r.ymin < r.ymax; };
  if (!box_ok(forward_box) || !box_ok(inverse_box)) fail("boxes need xmin < xmax and ymin < ymax");
  if (!inverse_crime && !(forward_box.contains(Point2(inverse_box.xmin, inverse_box.ymin)) &&
                          forward_box.contains(Point2(inverse_box.xmax, inverse_box.ymax))))
    fail("inverse_box must lie inside forward_box");
  if (h_forward > std::min(forward_box.width(), forward_box.height())) fail("h_forward exceeds the forward box");
  if (!inverse_crime && h_inverse > std::min(inverse_box.width(), inverse_box.height()))
    fail("h_inverse exceeds the inverse box");
  if (dirichlet && !(dirichlet->first >= forward_box.xmin && dirichlet->second <= forward_box.xmax &&
                     dirichlet->first < dirichlet->second))
    fail("dirichlet must be an interval inside the bottom side");
  if (!(tol > 0.0)) fail("tol must be positive");
  if (max_iterations < 1) fail("max_iterations must be at least 1");
  if (probe_k < 0) fail("probe_k must be non-negative");
}

DatasetParams ExperimentConfig::dataset_params() const {
  DatasetParams p;
  p.forward_box = forward_box;
  p.inverse_box = inverse_box;
  p.h_forward = h_forward;
  p.h_inverse = h_inverse;
  p.forward_jitter = forward_jitter;
  p.inverse_jitter = inverse_jitter;
  p.noise = noise;
  p.eps_elas = eps_elas;
  p.seed = seed;
  p.inverse_crime = inverse_crime;
  if (dirichlet) p.dirichlet = Segment{Side::Bottom, dirichlet->first, dirichlet->second};
  return p;
}

RegParams ExperimentConfig::reg_params() const {
  RegParams r;
  r.eps_tv = eps_tv;
  r.mu_min = mu_min;
  r.tol_primal = tol;
  r.tol_dual = tol;
  r.max_iterations = max_iterations;
  return r;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["phantom"] = cfg.phantom;
  j["model"] = std::string(to_string(cfg.model));
  j["loads"] = cfg.loads;
  j["h_forward"] = cfg.h_forward;
  j["h_inverse"] = cfg.h_inverse;
  j["forward_jitter"] = cfg.forward_jitter;
  j["inverse_jitter"] = cfg.inverse_jitter;
  j["eps_tv"] = cfg.eps_tv;
  j["mu_min"] = cfg.mu_min;
  j["eps_elas"] = cfg.eps_elas;
  j["noise"] = cfg.noise;
  j["seed"] = cfg.seed;
  j["forward_box"] = {cfg.forward_box.xmin, cfg.forward_box.xmax, cfg.forward_box.ymin, cfg.forward_box.ymax};
  j["inverse_box"] = {cfg.inverse_box.xmin, cfg.inverse_box.xmax, cfg.inverse_box.ymin, cfg.inverse_box.ymax};
  if (cfg.dirichlet) {
    j["dirichlet"] = {cfg.dirichlet->first, cfg.dirichlet->second};
  } else {
    j["dirichlet"] = "full";
  }
  j["inverse_crime"] = cfg.inverse_crime;
  j["tol"] = cfg.tol;
  j["max_iterations"] = cfg.max_iterations;
  j["probe_k"] = cfg.probe_k;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j_in) {
  const nlohmann::json& j = j_in.contains("config") ? j_in.at("config") : j_in;
  if (!j.is_object()) throw ConfigError("configuration JSON must be an object");
  ExperimentConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      std::string text;
      if (value.is_array()) {
        for (std::size_t i = 0; i < value.size(); ++i) text += (i ? "," : "") + format_double(value[i].get<double>());
      } else if (value.is_string()) {
        text = value.get<std::string>();
      } else if (value.is_boolean()) {
        text = value.get<bool>() ? "true" : "false";
      } else if (value.is_number_unsigned()) {
        text = std::to_string(value.get<std::uint64_t>());
      } else if (value.is_number_integer()) {
        text = std::to_string(value.get<std::int64_t>());
      } else if (value.is_number()) {
        text = format_double(value.get<double>());
      } else {
        throw ConfigError("config key '" + key + "' has an unsupported JSON type");
      }
      apply_setting(cfg, key, text);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed configuration JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
  }
  return parse_config(text);
}

}  // namespace elastinv

// SPDX-License-Identifier: Apache-2.0
#include "json_fields.hpp"
#include "toaloc/harness.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace toaloc {

using detail::Fields;
using detail::Json;
using detail::fail;

std::string_view to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::ep: return "ep";
    case SolverKind::linear: return "linear";
    case SolverKind::nonlinear: return "nonlinear";
  }
  return "unknown";
}

std::optional<SolverKind> parse_solver(std::string_view text) {
  if (text == "ep") return SolverKind::ep;
  if (text == "linear") return SolverKind::linear;
  if (text == "nonlinear") return SolverKind::nonlinear;
  return std::nullopt;
}

namespace {

constexpr std::string_view kSolverChoices = "ep, linear, nonlinear";

void add_solver(std::vector<SolverKind>& out, std::string_view name, std::string_view path) {
  const auto kind = parse_solver(name);
  if (!kind) fail(path, "unknown solver '" + std::string(name) + "' (valid: " + std::string(kSolverChoices) + ")");
  for (SolverKind k : out)
    if (k == *kind) fail(path, "solver '" + std::string(name) + "' listed twice");
  out.push_back(*kind);
}

std::string read_file(const std::filesystem::path& path, std::string_view what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error(std::string(what) + ": cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

std::vector<SolverKind> parse_solver_list(std::string_view text) {
  std::vector<SolverKind> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = text.find(',', start);
    std::string_view item = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    add_solver(out, item, "solvers");
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

NlosPrior SolverSettings::prior() const {
  return line_of_sight ? NlosPrior::line_of_sight(sigma_clk) : NlosPrior::build(sigma_clk, K, L);
}

// Scenario generators.

namespace {

GeneratorSpec generator_defaults(const std::string& kind) {
  GeneratorSpec g;
  g.kind = kind;
  if (kind == "metro") {
    g.n_aps = 19;
    g.n_positions = 14;
  } else if (kind == "uniform") {
    g.n_aps = 5;
    g.n_positions = 20;
    g.width = 60.0;
    g.height = 60.0;
  }
  return g;
}

Scenario go_kart(const GeneratorSpec& g) {
  Scenario s;
  s.dimension = 2;
  // APs evenly spaced along the site perimeter, starting at a corner.
  const double perimeter = 2.0 * (g.width + g.height);
  for (int j = 0; j < g.n_aps; ++j) {
    double t = perimeter * j / g.n_aps;
    Point p;
    if (t < g.width) {
      p = {t, 0.0};
    } else if ((t -= g.width) < g.height) {
      p = {g.width, t};
    } else if ((t -= g.height) < g.width) {
      p = {g.width - t, g.height};
    } else {
      p = {0.0, g.height - (t - g.width)};
    }
    s.aps.push_back({j + 1, p, {}, 0.0});
  }
  // Oval circuit inside the site.
  for (int i = 0; i < g.n_positions; ++i) {
    const double a = 2.0 * std::numbers::pi * i / g.n_positions;
    s.device_positions.push_back({0.5 * g.width + 0.35 * g.width * std::cos(a), 0.5 * g.height + 0.3 * g.height * std::sin(a)});
  }
  return s;
}

Scenario metro(const GeneratorSpec& g, Rng& rng) {
  Scenario s;
  s.dimension = 2;
  // Hexagonal rings around the central site.
  std::vector<Point> sites{{0.0, 0.0}};
  for (int ring = 1; static_cast<int>(sites.size()) < g.n_aps; ++ring) {
    for (int side = 0; side < 6; ++side) {
      const double a0 = std::numbers::pi / 3.0 * side;
      const double a1 = std::numbers::pi / 3.0 * (side + 1);
      for (int k = 0; k < ring; ++k) {
        const double f = static_cast<double>(k) / ring;
        const double x = ring * g.spacing * ((1.0 - f) * std::cos(a0) + f * std::cos(a1));
        const double y = ring * g.spacing * ((1.0 - f) * std::sin(a0) + f * std::sin(a1));
        sites.push_back({x, y});
      }
    }
  }
  for (int j = 0; j < g.n_aps; ++j) s.aps.push_back({j + 1, sites[j], {}, 0.0});

  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < g.n_positions; ++i) {
    const double r = g.spacing * std::sqrt(u(rng));
    const double a = 2.0 * std::numbers::pi * u(rng);
    s.device_positions.push_back({r * std::cos(a), r * std::sin(a)});
  }
  return s;
}

Scenario uniform(const GeneratorSpec& g, Rng& rng) {
  Scenario s;
  s.dimension = 2;
  std::uniform_real_distribution<double> ux(0.0, g.width);
  std::uniform_real_distribution<double> uy(0.0, g.height);
  for (int j = 0; j < g.n_aps; ++j) s.aps.push_back({j + 1, Point{ux(rng), uy(rng)}, {}, 0.0});
  std::uniform_real_distribution<double> cx(0.25 * g.width, 0.75 * g.width);
  std::uniform_real_distribution<double> cy(0.25 * g.height, 0.75 * g.height);
  for (int i = 0; i < g.n_positions; ++i) s.device_positions.push_back({cx(rng), cy(rng)});
  return s;
}

}  // namespace

Scenario generate_scenario(const GeneratorSpec& g, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x5ce7a410});
  Scenario s;
  if (g.kind == "go_kart") {
    s = go_kart(g);
  } else if (g.kind == "metro") {
    s = metro(g, rng);
  } else if (g.kind == "uniform") {
    s = uniform(g, rng);
  } else {
    throw config_error("scenario.generator.kind: unknown generator '" + g.kind + "' (valid: go_kart, metro, uniform)");
  }
  s.fit_bounding_box(g.margin);
  return s;
}

// Config sections.

namespace {

GeneratorSpec parse_generator(const Json& j, const std::string& path) {
  Fields f(j, path);
  const std::string kind = f.string("kind", "go_kart");
  if (kind != "go_kart" && kind != "metro" && kind != "uniform")
    fail(f.at("kind"), "unknown generator '" + kind + "' (valid: go_kart, metro, uniform)");
  GeneratorSpec g = generator_defaults(kind);
  g.n_aps = f.integer("n_aps", g.n_aps);
  g.n_positions = f.integer("n_positions", g.n_positions);
  g.width = f.number("width", g.width);
  g.height = f.number("height", g.height);
  g.spacing = f.number("spacing", g.spacing);
  g.margin = f.number("margin", g.margin);
  f.finish();
  if (g.n_aps < 3) fail(f.at("n_aps"), "must be >= 3");
  if (g.n_positions < 1) fail(f.at("n_positions"), "must be >= 1");
  if (!(g.width > 0.0)) fail(f.at("width"), "must be positive");
  if (!(g.height > 0.0)) fail(f.at("height"), "must be positive");
  if (!(g.spacing > 0.0)) fail(f.at("spacing"), "must be positive");
  if (!(g.margin >= 0.0)) fail(f.at("margin"), "must be >= 0");
  return g;
}

ErrorModel parse_error_model(const Json& j, const std::string& path) {
  Fields f(j, path);
  ErrorModel m;
  m.sigma_clk = f.number("sigma_clk", m.sigma_clk);
  m.quant_step = f.number("quant_step", m.quant_step);
  m.quant_enabled = f.boolean("quant_enabled", m.quant_enabled);
  m.frozen_nlos = f.boolean("frozen_nlos", m.frozen_nlos);
  m.sigma_dT = f.number("sigma_dT", m.sigma_dT);
  m.sigma_dx = f.number("sigma_dx", m.sigma_dx);
  m.p_hear = f.number("p_hear", m.p_hear);
  if (const Json* v = f.find("max_heard")) m.max_heard = detail::as_int(*v, f.at("max_heard"));
  m.explicit_terms = f.boolean("explicit_terms", m.explicit_terms);
  m.sigma_thermal = f.number("sigma_thermal", m.sigma_thermal);
  m.sigma_sync = f.number("sigma_sync", m.sigma_sync);

  if (const Json* nlos = f.find("nlos")) {
    if (nlos->is_string() && nlos->get<std::string>() == "none") {
      m.nlos.reset();
    } else {
      Fields n(*nlos, f.at("nlos"));
      const int K = n.integer("K", 10);
      const int L = n.integer("L", 1000);
      const double scale = n.number("scale", m.sigma_clk);
      n.finish();
      if (K < 1) fail(n.at("K"), "must be >= 1");
      if (L < 2) fail(n.at("L"), "must be >= 2");
      if (!(scale > 0.0)) fail(n.at("scale"), "must be positive (set it when sigma_clk is 0)");
      m.nlos = NlosPrior::build(scale, K, L);
    }
  }

  if (const Json* fixed = f.find("fixed_bias")) {
    if (!fixed->is_object()) fail(f.at("fixed_bias"), "expected an object mapping AP id to meters");
    for (auto it = fixed->begin(); it != fixed->end(); ++it) {
      const std::string p = f.at("fixed_bias") + "." + it.key();
      int id = 0;
      try {
        std::size_t used = 0;
        id = std::stoi(it.key(), &used);
        if (used != it.key().size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        fail(p, "key must be an AP id");
      }
      m.fixed_bias[id] = detail::as_number(*it, p);
    }
  }
  f.finish();

  if (auto bad = check_error_model(m)) fail(path, *bad);
  return m;
}

SolverSettings parse_solver_settings(const Json& j, const std::string& path) {
  Fields f(j, path);
  SolverSettings s;
  s.sigma_clk = f.number("sigma_clk", s.sigma_clk);
  s.K = f.integer("K", s.K);
  s.L = f.integer("L", s.L);
  const std::string prior = f.string("prior", "nlos");
  if (prior != "nlos" && prior != "los") fail(f.at("prior"), "must be 'nlos' or 'los'");
  s.line_of_sight = prior == "los";
  if (!(s.sigma_clk > 0.0)) fail(f.at("sigma_clk"), "must be positive");
  if (s.K < 1) fail(f.at("K"), "must be >= 1");
  if (s.L < 2) fail(f.at("L"), "must be >= 2");

  if (const Json* ep = f.find("ep")) {
    Fields e(*ep, f.at("ep"));
    EpConfig& c = s.ep;
    c.max_iters = e.integer("max_iters", c.max_iters);
    c.tol = e.number("tol", c.tol);
    c.damping = e.number("damping", c.damping);
    c.parallel = e.boolean("parallel", c.parallel);
    c.clip_negative_precision = e.boolean("clip_negative_precision", c.clip_negative_precision);
    const std::string weights = e.string("weight_mode", std::string(to_string(c.weight_mode)));
    const auto wm = parse_weight_mode(weights);
    if (!wm) fail(e.at("weight_mode"), "must be 'corrected' or 'paper'");
    c.weight_mode = *wm;
    // weight_mode 'paper' is only defined for the linearized tilted moments.
    const std::string default_tilted = c.weight_mode == WeightMode::paper ? "linearized" : "radial";
    const std::string tilted = e.string("tilted", default_tilted);
    const auto tm = parse_tilted_method(tilted);
    if (!tm) fail(e.at("tilted"), "must be 'radial' or 'linearized'");
    c.tilted = *tm;
    if (c.weight_mode == WeightMode::paper && c.tilted != TiltedMethod::linearized)
      fail(e.at("tilted"), "weight_mode 'paper' requires 'linearized'");
    c.init.spatial_variance = e.optional_number("init_spatial_variance");
    c.init.tau_variance = e.optional_number("init_tau_variance");
    e.finish();
    if (c.max_iters < 1) fail(e.at("max_iters"), "must be >= 1");
    if (!(c.tol > 0.0)) fail(e.at("tol"), "must be positive");
    if (!(c.damping > 0.0 && c.damping <= 1.0)) fail(e.at("damping"), "must be in (0, 1]");
    if (c.init.spatial_variance && !(*c.init.spatial_variance > 0.0)) fail(e.at("init_spatial_variance"), "must be positive");
    if (c.init.tau_variance && !(*c.init.tau_variance > 0.0)) fail(e.at("init_tau_variance"), "must be positive");
  }

  if (const Json* nl = f.find("nonlinear")) {
    Fields n(*nl, f.at("nonlinear"));
    s.nonlinear.max_iters = n.integer("max_iters", s.nonlinear.max_iters);
    s.nonlinear.step_tol = n.number("step_tol", s.nonlinear.step_tol);
    n.finish();
    if (s.nonlinear.max_iters < 1) fail(n.at("max_iters"), "must be >= 1");
    if (!(s.nonlinear.step_tol > 0.0)) fail(n.at("step_tol"), "must be positive");
  }
  f.finish();
  return s;
}

CalibrationSettings parse_calibration(const Json& j, const std::string& path, int dimension) {
  Fields f(j, path);
  CalibrationSettings c;
  c.train_epochs = f.integer("train_epochs", c.train_epochs);
  c.known_position = detail::as_point(f.require("known_position"), f.at("known_position"));
  c.min_obs = f.integer("min_obs", c.min_obs);
  const std::string est = f.string("estimator", "mean");
  if (est == "mean") {
    c.estimator = CalibrationEstimator::mean;
  } else if (est == "median") {
    c.estimator = CalibrationEstimator::median;
  } else {
    fail(f.at("estimator"), "must be 'mean' or 'median'");
  }
  c.line_of_sight = f.boolean("line_of_sight", c.line_of_sight);
  c.sigma_clk = f.optional_number("sigma_clk");
  f.finish();
  if (c.sigma_clk && !(*c.sigma_clk >= 0.0)) fail(f.at("sigma_clk"), "must be >= 0");
  if (c.train_epochs < 1) fail(f.at("train_epochs"), "must be >= 1");
  if (c.min_obs < 1) fail(f.at("min_obs"), "must be >= 1");
  if (dimension > 0 && c.known_position.dimension() != dimension)
    fail(f.at("known_position"), "dimension differs from the scenario");
  return c;
}

TrackingSettings parse_tracking(const Json& j, const std::string& path) {
  Fields f(j, path);
  TrackingSettings t;
  const std::string solver = f.string("solver", "ep");
  const auto kind = parse_solver(solver);
  if (!kind) fail(f.at("solver"), "unknown solver '" + solver + "' (valid: " + std::string(kSolverChoices) + ")");
  t.solver = *kind;
  t.dt = f.number("dt", t.dt);
  t.q = f.number("q", t.q);
  t.v_var = f.number("v_var", t.v_var);
  t.fixed_r = f.optional_number("fixed_r");
  f.finish();
  if (!(t.dt > 0.0)) fail(f.at("dt"), "must be positive");
  if (!(t.q >= 0.0)) fail(f.at("q"), "must be >= 0");
  if (!(t.v_var >= 0.0)) fail(f.at("v_var"), "must be >= 0");
  if (t.fixed_r && !(*t.fixed_r > 0.0)) fail(f.at("fixed_r"), "must be positive");
  if (t.solver != SolverKind::ep && !t.fixed_r)
    fail(f.at("fixed_r"), "required when tracking a solver without a covariance");
  return t;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  const Json j = detail::parse_json(text, "config");
  Fields f(j, "");
  ExperimentConfig cfg;

  if (const Json* seed = f.find("seed")) {
    if (!seed->is_number_unsigned() && !(seed->is_number_integer() && seed->get<long long>() >= 0))
      fail("seed", "expected a non-negative 64-bit integer");
    cfg.seed = seed->get<std::uint64_t>();
  }
  cfg.output_dir = f.string("output_dir", cfg.output_dir.string());
  const int threads = f.integer("threads", 1);
  if (threads < 1) fail("threads", "must be >= 1");
  cfg.threads = static_cast<unsigned>(threads);

  const Json& scen = f.require("scenario");
  if (!scen.is_object()) fail("scenario", "expected an object");
  int dimension = 0;
  if (scen.contains("file")) {
    Fields s(scen, "scenario");
    const std::string file = s.string("file", "");
    s.finish();
    std::filesystem::path p(file);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    const std::string body = read_file(p, "scenario.file");
    try {
      Scenario sc = scenario_from_json(body);
      dimension = sc.dimension;
      cfg.scenario = std::move(sc);
    } catch (const Error& e) {
      throw config_error(std::string("scenario.file (") + p.string() + "): " + e.what());
    }
    cfg.scenario_source = "file:" + p.string();
  } else if (scen.contains("generator")) {
    Fields s(scen, "scenario");
    cfg.scenario = parse_generator(s.require("generator"), s.at("generator"));
    s.finish();
    dimension = 2;
    cfg.scenario_source = "generator:" + std::get<GeneratorSpec>(cfg.scenario).kind;
  } else {
    Fields s(scen, "scenario");
    Scenario sc = detail::scenario_from_fields(s);
    dimension = sc.dimension;
    cfg.scenario = std::move(sc);
  }

  if (const Json* em = f.find("error_model")) cfg.error_model = parse_error_model(*em, "error_model");

  if (const Json* solvers = f.find("solvers")) {
    cfg.solvers.clear();
    if (solvers->is_string()) {
      cfg.solvers = parse_solver_list(solvers->get<std::string>());
    } else if (solvers->is_array()) {
      for (std::size_t i = 0; i < solvers->size(); ++i) {
        const std::string p = detail::index_path("solvers", i);
        if (!(*solvers)[i].is_string()) fail(p, "expected a solver name (valid: " + std::string(kSolverChoices) + ")");
        add_solver(cfg.solvers, (*solvers)[i].get<std::string>(), p);
      }
    } else {
      fail("solvers", "expected a list of solver names");
    }
    if (cfg.solvers.empty()) fail("solvers", "at least one solver is required (valid: " + std::string(kSolverChoices) + ")");
  }

  if (const Json* s = f.find("solver")) cfg.solver = parse_solver_settings(*s, "solver");

  cfg.epochs_per_position = f.integer("epochs_per_position", cfg.epochs_per_position);
  if (cfg.epochs_per_position < 1) fail("epochs_per_position", "must be >= 1");
  cfg.min_heard = f.integer("min_heard", cfg.min_heard);
  if (cfg.min_heard < 0) fail("min_heard", "must be >= 0");

  if (const Json* c = f.find("calibration")) cfg.calibration = parse_calibration(*c, "calibration", dimension);
  if (const Json* t = f.find("tracking")) cfg.tracking = parse_tracking(*t, "tracking");
  f.finish();

  if (const auto* sc = std::get_if<Scenario>(&cfg.scenario)) {
    for (const auto& [id, bias] : cfg.error_model.fixed_bias)
      if (sc->find_ap(id) == nullptr) fail("error_model.fixed_bias." + std::to_string(id), "no AP with this id");
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path, "config"), path.parent_path());
}

}  // namespace toaloc

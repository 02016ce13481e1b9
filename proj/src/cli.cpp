#include "multilink/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "multilink/config.hpp"
#include "multilink/errors.hpp"

namespace multilink {

using nlohmann::json;

namespace {

enum class LogLevel { kQuiet, kInfo, kDebug };

LogLevel log_level() {
  const char* v = std::getenv("MULTILINK_LOG");
  if (v == nullptr) return LogLevel::kInfo;
  const std::string s(v);
  if (s == "quiet" || s == "0") return LogLevel::kQuiet;
  if (s == "debug" || s == "2") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

VecX parse_list(const std::string& text, const std::string& what) {
  std::vector<double> values;
  std::string token;
  std::stringstream ss(text);
  while (std::getline(ss, token, ',')) {
    token.erase(0, token.find_first_not_of(" \t[]"));
    token.erase(token.find_last_not_of(" \t[]") + 1);
    if (token.empty()) continue;
    try {
      std::size_t used = 0;
      const double x = std::stod(token, &used);
      if (used == token.size()) {
        values.push_back(x);
        continue;
      }
    } catch (const std::exception&) {
    }
    values.push_back(parse_angle(json(token)));
  }
  if (values.empty()) throw ConfigError("--" + what + " is empty");
  return Eigen::Map<VecX>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json to_json(const VecX& v) { return std::vector<double>(v.begin(), v.end()); }

json plan_json(const PlanResult& r) {
  return {{"psi_bar", to_json(r.psi_bar)}, {"objective", r.objective}, {"tau_min", r.tau_min},
          {"lambda_s", to_json(r.lambda_s)}, {"alpha", {r.alpha_x, r.alpha_y}}, {"feasible", r.feasible},
          {"iterations", r.iterations}, {"max_violation", r.max_violation}};
}

void emit(const json& doc, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << doc.dump(2) << "\n";
    return;
  }
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << doc.dump(2) << "\n";
}

struct Common {
  std::string config;
  std::string out_path;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
};

ProjectConfig load(const Common& c) {
  if (c.config.empty()) {
    if (!c.overrides.empty()) {
      json doc = json::object();
      for (const auto& o : c.overrides) apply_override(doc, o);
      return parse_config(doc);
    }
    return ProjectConfig{};
  }
  return load_config(c.config, c.overrides);
}

Configuration config_from(const ProjectConfig& pc, const std::string& q, const std::string& psi) {
  Configuration cfg{parse_list(q, "q"), parse_list(psi, "psi")};
  cfg.check_dimensions(pc.robot);
  return cfg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Planning, control and simulation for planar multilinked aerial robots", "multilink"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config,-c", common.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out,-o", common.out_path, "output file (or prefix for simulate)");
  app.add_option("--seed", common.seed, "random seed")->default_val(0);
  app.add_option("--set", common.overrides, "override a config value, key.path=value")->take_all();

  std::string q, psi, warm, vertices;
  auto* hover = app.add_subcommand("hover", "static thrust and CoG tilt at (q, psi)");
  hover->add_option("--q", q, "joint angles, comma separated")->required();
  hover->add_option("--psi", psi, "vectoring angles")->required();

  auto* tau = app.add_subcommand("tau-min", "guaranteed minimum torque at (q, psi)");
  tau->add_option("--q", q, "joint angles")->required();
  tau->add_option("--psi", psi, "vectoring angles")->required();
  tau->add_option("--vertices", vertices, "write zonotope vertices as CSV");

  auto* plan = app.add_subcommand("plan", "optimal vectoring angles for q");
  plan->add_option("--q", q, "joint angles")->required();
  plan->add_option("--warm", warm, "previous vectoring angles (enables the step bound)");

  std::string from, to;
  double speed = 0.25, rate = 20.0, collapse = 0.05;
  bool break_on_collapse = false;
  auto* deform = app.add_subcommand("plan-deform", "plan along a joint schedule; CSV output");
  deform->add_option("--from", from, "linear schedule start (otherwise scenario.joints)");
  deform->add_option("--to", to, "linear schedule end");
  deform->add_option("--speed", speed, "joint rate, rad/s")->default_val(0.25);
  deform->add_option("--rate", rate, "planning rate, Hz")->default_val(20.0);
  deform->add_option("--collapse-ratio", collapse, "warn when tau_min drops below this fraction")->default_val(0.05);
  deform->add_flag("--break-on-collapse", break_on_collapse, "treat a collapse as a plan break");
  std::string initial_psi;
  deform->add_option("--initial-psi", initial_psi, "start from these vectoring angles instead of a global solve");
  bool lookahead = false;
  deform->add_flag("--lookahead", lookahead, "start on whichever of the primal/dual branches keeps tau_min higher");

  double g1 = 0, g2 = 0, l = 0, d = 0;
  auto* design = app.add_subcommand("design-beta", "smallest tilt angle meeting both bounds");
  design->add_option("--gamma1", g1, "thrust overhead bound")->required();
  design->add_option("--gamma2", g2, "lateral torque ratio bound")->required();
  design->add_option("--l", l, "link length, m")->required();
  design->add_option("--d", d, "CoG to propeller plane, m")->required();

  std::string scenario_path;
  auto* simulate = app.add_subcommand("simulate", "run a scenario; telemetry CSV and metrics JSON");
  simulate->add_option("--scenario", scenario_path, "scenario config (same schema as --config)")->check(CLI::ExistingFile);

  double scan_from = 0.0, scan_to = 0.3;
  int scan_steps = 31;
  double threshold = 1e-3;
  auto* corner = app.add_subcommand("corner-scan", "primal/dual tau_min over q_i = s for all joints");
  corner->add_option("--from", scan_from, "first s")->default_val(0.0);
  corner->add_option("--to", scan_to, "last s")->default_val(0.3);
  corner->add_option("--steps", scan_steps, "samples")->default_val(31)->check(CLI::PositiveNumber);
  corner->add_option("--threshold", threshold, "minimum primal tau_min")->default_val(1e-3);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  const LogLevel level = log_level();
  try {
    if (hover->parsed()) {
      const ProjectConfig pc = load(common);
      const FormState form = evaluate_form(pc.robot, config_from(pc, q, psi));
      const double sum = form.alloc.lambda_s.sum();
      emit({{"lambda_s", to_json(form.alloc.lambda_s)}, {"alpha", {form.alloc.alpha_x, form.alloc.alpha_y}},
            {"thrust_sum", sum}, {"thrust_ratio", sum / (pc.robot.total_mass() * pc.robot.gravity)},
            {"feasible", form.alloc.feasible}},
           common.out_path, out);
      out << "hover: sum(lambda_s)=" << sum << " N alpha=(" << form.alloc.alpha_x << ", " << form.alloc.alpha_y << ")"
          << (form.alloc.feasible ? "" : " infeasible") << "\n";
      return form.alloc.feasible ? kExitOk : kExitInfeasible;
    }
    if (tau->parsed()) {
      const ProjectConfig pc = load(common);
      const Configuration cfg = config_from(pc, q, psi);
      const TorqueBasis basis = torque_basis(pc.robot, cfg);
      FeasibilityReport rep = tau_min(basis);
      if (pc.robot.n_links == 4) rep.singular_class = detect_singular_class(cfg.q);
      json faces = json::array();
      for (const auto& f : rep.face_distances) faces.push_back({{"i", f.i}, {"j", f.j}, {"distance", f.distance}});
      json degenerate = json::array();
      for (const auto& [i, j] : rep.degenerate_pairs) degenerate.push_back({i, j});
      emit({{"tau_min", rep.tau_min}, {"face_distances", faces}, {"degenerate_pairs", degenerate},
            {"singular_class", std::string(to_string(rep.singular_class))}, {"all_degenerate", rep.all_degenerate}},
           common.out_path, out);
      if (!vertices.empty()) {
        std::ofstream f(vertices);
        if (!f) throw ConfigError("cannot write '" + vertices + "'");
        f << std::setprecision(12) << "tx,ty,tz\n";
        for (const Vec3& v : zonotope_vertices(basis)) f << v.x() << "," << v.y() << "," << v.z() << "\n";
      }
      out << "tau_min = " << rep.tau_min << " N m (" << to_string(rep.singular_class) << ")\n";
      return kExitOk;
    }
    if (plan->parsed()) {
      const ProjectConfig pc = load(common);
      const VecX qv = parse_list(q, "q");
      std::optional<VecX> w;
      if (!warm.empty()) w = parse_list(warm, "warm");
      const PlanResult r = optimize_vectoring(pc.robot, qv, pc.plan_weights, pc.plan_constraints, w);
      emit(plan_json(r), common.out_path, out);
      out << "plan: psi=" << format_joints(r.psi_bar) << " tau_min=" << r.tau_min << " objective=" << r.objective
          << (r.feasible ? "" : " infeasible") << "\n";
      return r.feasible ? kExitOk : kExitInfeasible;
    }
    if (deform->parsed()) {
      const ProjectConfig pc = load(common);
      JointSchedule schedule;
      if (!from.empty() || !to.empty()) {
        if (from.empty() || to.empty()) throw CLI::ValidationError("--from and --to go together");
        schedule = linear_schedule(parse_list(from, "from"), parse_list(to, "to"), speed, rate);
      } else {
        if (!pc.has_scenario) throw CLI::ValidationError("plan-deform needs --from/--to or a scenario with joints");
        const JointPlan& jp = pc.scenario.joints;
        const double end = jp.end_time();
        const int n = static_cast<int>(std::floor(end * rate + 1e-9));
        for (int k = 0; k <= n; ++k) schedule.emplace_back(k / rate, jp.at(k / rate));
        if (n / rate < end - 1e-12) schedule.emplace_back(end, jp.at(end));
      }
      const std::string path = common.out_path.empty() ? "plan_deform.csv" : common.out_path;
      std::ofstream csv(path);
      if (!csv) throw ConfigError("cannot write '" + path + "'");
      csv << std::setprecision(12);
      const int nj = pc.robot.n_joints();
      csv << "t";
      for (int i = 0; i < nj; ++i) csv << ",q" << i + 1;
      for (int i = 0; i < pc.robot.n_links; ++i) csv << ",psi" << i + 1;
      csv << ",tau_min,alpha_x,alpha_y,lambda_sum\n";
      DeformationOptions opts{collapse, break_on_collapse, std::nullopt};
      if (!initial_psi.empty()) {
        opts.initial_psi = parse_list(initial_psi, "initial-psi");
      } else if (lookahead) {
        const BranchChoice b = choose_branch(pc.robot, schedule, pc.plan_weights, pc.plan_constraints);
        opts.initial_psi = b.initial_psi;
        if (level != LogLevel::kQuiet) err << "branch: " << (b.dual ? "dual" : "primal") << " start, worst tau_min " << b.min_tau << "\n";
      }
      try {
        const PlanTrace trace = plan_deformation(pc.robot, schedule, pc.plan_weights, pc.plan_constraints, opts);
        double min_tau = std::numeric_limits<double>::infinity();
        for (const PlanStep& s : trace.steps) {
          csv << s.t;
          for (double v : s.q) csv << "," << v;
          for (double v : s.result.psi_bar) csv << "," << v;
          csv << "," << s.result.tau_min << "," << s.result.alpha_x << "," << s.result.alpha_y << ","
              << s.result.lambda_s.sum() << "\n";
          min_tau = std::min(min_tau, s.result.tau_min);
        }
        if (level != LogLevel::kQuiet) {
          for (const CollapseWarning& w : trace.warnings)
            err << "warning: tau_min collapse at t=" << w.t << " q=" << format_joints(w.q) << " tau_min=" << w.tau_min
                << " (initial " << w.tau_initial << ")\n";
        }
        out << "plan-deform: " << trace.steps.size() << " steps, min tau_min=" << min_tau << " N m, "
            << trace.warnings.size() << " collapse warnings -> " << path << "\n";
        return trace.warnings.empty() ? kExitOk : kExitInfeasible;
      } catch (const PlanBreak& e) {
        out << "plan-deform: " << e.what() << "\n";
        return kExitInfeasible;
      }
    }
    if (design->parsed()) {
      const double beta = design_tilt_angle(g1, g2, l, d);
      out << std::setprecision(10) << "beta = " << beta << " rad\n";
      return kExitOk;
    }
    if (simulate->parsed()) {
      if (!scenario_path.empty()) common.config = scenario_path;
      if (common.config.empty()) throw CLI::ValidationError("simulate needs --scenario");
      ProjectConfig pc = load(common);
      if (!pc.has_scenario) throw ConfigError("config has no scenario section");
      if (simulate->get_parent()->get_option("--seed")->count() > 0) pc.scenario.seed = common.seed;
      const SimulationResult res = run_scenario(pc.robot, pc.scenario, pc.settings());
      const std::string prefix = common.out_path.empty() ? pc.scenario.name : common.out_path;
      {
        std::ofstream csv(prefix + ".csv");
        if (!csv) throw ConfigError("cannot write '" + prefix + ".csv'");
        write_telemetry_csv(csv, res.telemetry);
      }
      if (level == LogLevel::kDebug) {
        for (const TelemetryRecord& r : res.telemetry) {
          if (r.clamped > 0) err << "debug: t=" << r.t << " " << r.clamped << " rotor(s) clamped\n";
          if (r.replanned) err << "debug: t=" << r.t << " replanned psi=" << format_joints(r.psi_bar) << "\n";
        }
      }
      if (res.telemetry.empty()) {
        out << "simulate: aborted before the first control tick: " << res.abort_reason << "\n";
        return kExitInfeasible;
      }
      const Metrics m = compute_metrics(res.telemetry);
      {
        std::ofstream js(prefix + ".json");
        if (!js) throw ConfigError("cannot write '" + prefix + ".json'");
        js << metrics_json(m, res) << "\n";
      }
      out << std::setprecision(4) << "simulate " << pc.scenario.name << ": rms=[" << m.position_rms.x() << ", "
          << m.position_rms.y() << ", " << m.position_rms.z() << "] m yaw_rms=" << m.yaw_rms << " min_tau=" << m.min_tau
          << (res.aborted ? " ABORTED at t=" + std::to_string(res.abort_time) + ": " + res.abort_reason : "") << "\n";
      return res.aborted ? kExitInfeasible : kExitOk;
    }
    if (corner->parsed()) {
      const ProjectConfig pc = load(common);
      json rows = json::array();
      int corners = 0;
      for (int k = 0; k < scan_steps; ++k) {
        const double s = scan_steps == 1 ? scan_from : scan_from + (scan_to - scan_from) * k / (scan_steps - 1);
        const VecX qv = VecX::Constant(pc.robot.n_joints(), s);
        const CornerReport c = detect_corner_case(pc.robot, qv, pc.plan_weights, pc.plan_constraints, threshold);
        corners += c.is_corner ? 1 : 0;
        rows.push_back({{"s", s}, {"is_corner", c.is_corner}, {"tau_primal", c.tau_primal}, {"tau_dual", c.tau_dual},
                        {"psi_bar", to_json(c.psi_bar)}});
        if (level == LogLevel::kDebug) err << "debug: s=" << s << " primal=" << c.tau_primal << " dual=" << c.tau_dual << "\n";
      }
      emit(rows, common.out_path, out);
      out << "corner-scan: " << corners << " of " << scan_steps << " samples are corner cases\n";
      return kExitOk;
    }
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace multilink

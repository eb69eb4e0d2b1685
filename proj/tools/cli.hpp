#pragma once

// affsys command-line front end. Exit codes: 0 success, 1 a check failed,
// 2 usage or input error, 3 numerical failure.

#include "affsys/conjugation.hpp"
#include "affsys/controllability.hpp"
#include "affsys/sysdsl.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace affsys::cli {

using nlohmann::json;

enum Exit { ok = 0, check_failed = 1, usage = 2, numerical = 3 };

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_real(std::string_view s, const char* what) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw InvalidInput(std::string("bad number in ") + what + ": '" + std::string(s) + "'");
  return v;
}

/// "dur:u1,u2;dur:u1,u2" into a control signal with m channels.
inline ControlSignal parse_signal(std::string_view spec, std::size_t m) {
  std::vector<Segment> segs;
  while (!spec.empty()) {
    const auto semi = spec.find(';');
    std::string_view part = spec.substr(0, semi);
    spec = semi == std::string_view::npos ? std::string_view{} : spec.substr(semi + 1);
    const auto colon = part.find(':');
    const double dur = parse_real(part.substr(0, colon), "signal duration");
    std::vector<double> u;
    if (colon != std::string_view::npos) {
      std::string_view rest = part.substr(colon + 1);
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        u.push_back(parse_real(rest.substr(0, comma), "signal control"));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
    }
    if (u.size() != m)
      throw InvalidInput("signal segment has " + std::to_string(u.size()) + " controls, system has " + std::to_string(m));
    segs.push_back({dur, Eigen::Map<const Vector>(u.data(), static_cast<Eigen::Index>(u.size()))});
  }
  if (segs.empty()) throw InvalidInput("empty signal");
  return ControlSignal(std::move(segs));
}

/// Reads and parses a .sys file; parse errors go to err as path:line:col lines.
inline AffineSystem load_system(const std::string& path, std::ostream& err) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  auto r = parse_system(ss.str());
  if (!r.ok()) {
    for (const auto& e : r.errors) err << path << ":" << format_error(e) << "\n";
    throw ParseFailure(std::move(r.errors));
  }
  return std::move(*r.system);
}

inline std::string csv_header(const GroupSpec& g, const char* first) {
  std::string h = first;
  for (Eigen::Index i = 1; i <= g.elem_rows(); ++i)
    for (Eigen::Index j = 1; j <= g.elem_cols(); ++j) h += ",e" + std::to_string(i) + std::to_string(j);
  return h;
}

inline std::string csv_row(const std::string& first, const Matrix& m) {
  std::string row = first;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) row += "," + fmt(m(i, j));
  return row;
}

/// Writes to the file at path, or to out when path is empty.
inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + path);
  f << text;
}

inline json condition_json(const ConditionResult& c) {
  return {{"pass", c.pass}, {"worst_error", c.worst_error}, {"witnesses", c.witnesses}};
}

struct Options {
  std::string file;
  std::string file_h;
  std::string signal;
  std::string method = "auto";
  std::string out;
  std::string hom = "det";
  int samples_per_segment = 1;
  double horizon = 1.0;
  int segments = 4;
  int samples = 500;
  std::uint64_t seed = 42;
  unsigned threads = 1;
  int points = 3;
  double tol = 1e-8;
  double compare_tol = 1e-6;
  double rk4_dt = 1e-4;
  double convergence_tol = 1e-10;
  long n_max = 1L << 20;
  bool no_extrapolate = false;
  bool force = false;
};

inline SolveOptions solve_options(const Options& o) {
  SolveOptions s;
  s.rk4_dt = o.rk4_dt;
  s.convergence_tol = o.convergence_tol;
  s.n_max = o.n_max;
  s.extrapolate = !o.no_extrapolate;
  s.force = o.force;
  if (o.method == "auto") s.method = Method::automatic;
  else if (o.method == "product") s.method = Method::product_formula;
  else if (o.method == "closed") s.method = Method::closed_inner;
  else if (o.method == "rk4") s.method = Method::rk4;
  else throw InvalidInput("unknown method " + o.method);
  s.check();
  return s;
}

inline int cmd_check(const Options& o, std::ostream& out, std::ostream& err) {
  const auto sys = load_system(o.file, err);
  const auto report = validate(sys);
  json j{{"commuting", report.commuting}, {"inner", report.inner}};
  json offending = json::array();
  for (const auto& [a, b] : report.offending) offending.push_back({a, b});
  j["offending"] = offending;
  j["messages"] = report.messages;
  j["group"] = sys.group()->name();
  j["m"] = sys.m();
  out << j.dump() << "\n";
  return report.commuting ? ok : check_failed;
}

inline int cmd_simulate(const Options& o, std::ostream& out, std::ostream& err) {
  const auto sys = load_system(o.file, err);
  const auto signal = parse_signal(o.signal, sys.m());
  const auto traj = solve_piecewise(sys, sys.group()->identity(), signal, solve_options(o), o.samples_per_segment);
  std::string text = csv_header(*sys.group(), "t") + "\n";
  for (std::size_t k = 0; k < traj.points.size(); ++k) text += csv_row(fmt(traj.times[k]), traj.points[k]) + "\n";
  emit(o.out, text, out);
  if (traj.forced) err << "warning: product formula forced on non-commuting linear fields\n";
  return ok;
}

inline int cmd_compare(const Options& o, std::ostream& out, std::ostream& err) {
  const auto sys = load_system(o.file, err);
  const auto signal = parse_signal(o.signal, sys.m());
  const Matrix e = sys.group()->identity();
  Options base = o;
  std::vector<std::pair<std::string, Matrix>> ends;
  for (const char* m : {"product", "closed", "rk4"}) {
    if (std::string(m) == "closed") {
      const auto rep = validate(sys);
      if (!(rep.inner && rep.commuting)) continue;
    }
    base.method = m;
    ends.emplace_back(m, solve_piecewise(sys, e, signal, solve_options(base)).endpoint());
  }
  json j{{"methods", json::array()}, {"distances", json::object()}};
  bool all_close = true;
  for (std::size_t a = 0; a < ends.size(); ++a) {
    j["methods"].push_back(ends[a].first);
    for (std::size_t b = a + 1; b < ends.size(); ++b) {
      const double d = frobenius_distance(ends[a].second, ends[b].second);
      j["distances"][ends[a].first + "_" + ends[b].first] = d;
      all_close = all_close && d <= o.compare_tol;
    }
  }
  j["pass"] = all_close;
  out << j.dump() << "\n";
  return all_close ? ok : check_failed;
}

inline int cmd_reach(const Options& o, std::ostream& out, std::ostream& err) {
  const auto sys = load_system(o.file, err);
  SamplerConfig cfg;
  cfg.k_segments = o.segments;
  cfg.n_samples = o.samples;
  cfg.threads = o.threads;
  cfg.solve = solve_options(o);
  const auto cloud = sample_reachable(sys, sys.group()->identity(), o.horizon, cfg, o.seed);
  std::string text = csv_header(*sys.group(), "index") + "\n";
  for (std::size_t k = 0; k < cloud.points.size(); ++k) text += csv_row(std::to_string(k), cloud.points[k]) + "\n";
  emit(o.out, text, out);
  return ok;
}

inline int cmd_conjugate(const Options& o, std::ostream& out, std::ostream& err) {
  const auto sys_g = load_system(o.file, err);
  const auto sys_h = load_system(o.file_h, err);
  Homomorphism f = o.hom == "identity" ? Homomorphism::identity(sys_g.group())
                   : o.hom == "det"    ? Homomorphism::determinant(sys_g.group())
                                       : throw InvalidInput("unknown homomorphism " + o.hom);
  if (!same_group(f.target(), sys_h.group()))
    throw InvalidInput("homomorphism target " + f.target()->name() + " does not match " + sys_h.group()->name());
  const auto signal = parse_signal(o.signal, sys_g.m());
  const auto r = check_system_conjugation(f, sys_g, sys_h, {signal}, o.points, o.tol, o.seed, solve_options(o));
  json conds = json::object();
  for (const auto& c : r.conditions) conds[c.name] = condition_json(c);
  json j{{"pass", r.pass},
         {"worst_error", r.worst_error},
         {"trajectory", r.trajectory},
         {"structural", r.structural},
         {"anomaly", r.anomaly},
         {"conditions", conds}};
  out << j.dump() << "\n";
  return r.pass ? ok : check_failed;
}

inline int cmd_larc(const Options& o, std::ostream& out, std::ostream& err) {
  const auto sys = load_system(o.file, err);
  const auto inv = associated_invariant_system(sys);
  const int rank = larc_rank(inv);
  const int dim = sys.group()->dim();
  out << json{{"rank", rank}, {"dim", dim}, {"full", rank == dim}}.dump() << "\n";
  return ok;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Affine control systems on matrix Lie groups", "affsys"};
  app.require_subcommand(1);
  Options o;

  auto file_arg = [&](CLI::App* sub) { sub->add_option("file", o.file, ".sys file")->required()->check(CLI::ExistingFile); };
  auto solver_flags = [&](CLI::App* sub) {
    sub->add_option("--rk4-dt", o.rk4_dt, "RK4 step")->check(CLI::PositiveNumber);
    sub->add_option("--convergence-tol", o.convergence_tol, "product formula tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--n-max", o.n_max, "largest product formula n")->check(CLI::PositiveNumber);
    sub->add_flag("--no-extrapolate", o.no_extrapolate, "use raw product iterates");
    sub->add_flag("--force", o.force, "run the product formula on non-commuting fields");
  };

  auto* check = app.add_subcommand("check", "validate a system");
  file_arg(check);

  auto* simulate = app.add_subcommand("simulate", "trajectory from the identity as CSV");
  file_arg(simulate);
  simulate->add_option("--signal", o.signal, "segments dur:u1,u2;...")->required();
  simulate->add_option("--method", o.method)->check(CLI::IsMember({"auto", "product", "closed", "rk4"}));
  simulate->add_option("--samples-per-segment", o.samples_per_segment)->check(CLI::PositiveNumber);
  simulate->add_option("--out", o.out, "CSV path (default stdout)");
  solver_flags(simulate);

  auto* compare = app.add_subcommand("compare", "endpoint distances between solvers");
  file_arg(compare);
  compare->add_option("--signal", o.signal)->required();
  compare->add_option("--tol", o.compare_tol)->check(CLI::PositiveNumber);
  solver_flags(compare);

  auto* reach = app.add_subcommand("reach", "sampled reachable set as CSV");
  file_arg(reach);
  reach->add_option("--T", o.horizon, "horizon")->check(CLI::PositiveNumber);
  reach->add_option("--segments", o.segments)->check(CLI::PositiveNumber);
  reach->add_option("--samples", o.samples)->check(CLI::NonNegativeNumber);
  reach->add_option("--seed", o.seed);
  reach->add_option("--threads", o.threads)->check(CLI::PositiveNumber);
  reach->add_option("--method", o.method)->check(CLI::IsMember({"auto", "product", "closed", "rk4"}));
  reach->add_option("--out", o.out);
  solver_flags(reach);

  auto* conjugate = app.add_subcommand("conjugate", "conjugation report as JSON");
  conjugate->add_option("file", o.file)->required()->check(CLI::ExistingFile);
  conjugate->add_option("target", o.file_h)->required()->check(CLI::ExistingFile);
  conjugate->add_option("--hom", o.hom)->check(CLI::IsMember({"det", "identity"}));
  conjugate->add_option("--signal", o.signal)->required();
  conjugate->add_option("--points", o.points)->check(CLI::NonNegativeNumber);
  conjugate->add_option("--tol", o.tol)->check(CLI::PositiveNumber);
  conjugate->add_option("--seed", o.seed);
  solver_flags(conjugate);

  auto* larc = app.add_subcommand("larc", "Lie algebra rank of the associated invariant system");
  file_arg(larc);

  std::vector<const char*> argv{"affsys"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return usage;
  }

  try {
    if (check->parsed()) return cmd_check(o, out, err);
    if (simulate->parsed()) return cmd_simulate(o, out, err);
    if (compare->parsed()) return cmd_compare(o, out, err);
    if (reach->parsed()) return cmd_reach(o, out, err);
    if (conjugate->parsed()) return cmd_conjugate(o, out, err);
    if (larc->parsed()) return cmd_larc(o, out, err);
  } catch (const ConvergenceError& e) {
    err << json{{"error", "convergence"}, {"message", e.what()}, {"n", e.n()}, {"delta", e.delta()}}.dump() << "\n";
    return numerical;
  } catch (const NumericalError& e) {
    err << json{{"error", "numerical"}, {"message", e.what()}}.dump() << "\n";
    return numerical;
  } catch (const ParseFailure&) {
    return usage;
  } catch (const ValidationError& e) {
    err << "check failed: " << e.what() << "\n";
    return check_failed;
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return usage;
  } catch (const std::exception& e) {
    err << json{{"error", "numerical"}, {"message", e.what()}}.dump() << "\n";
    return numerical;
  }
  return usage;
}

}  // namespace affsys::cli

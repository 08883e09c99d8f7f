#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsm/dsm.hpp"

namespace {

using dsm::Json;
using dsm::Vec;

// ---------------------------------------------------------------------------
// config file support: values act as defaults, explicit flags win

Json load_config(const std::string& path, const std::string& command) {
  if (path.empty()) return Json::object();
  std::ifstream in(path);
  if (!in) throw dsm::InputError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw dsm::ParseError("config '" + path + "': " + e.what());
  }
  if (j.contains("config") && j["config"].is_object()) j = j["config"];  // accept emitted artifacts
  if (j.contains("command") && j["command"].get<std::string>() != command) {
    throw dsm::InputError("config is for command '" + j["command"].get<std::string>() + "', not '" + command + "'");
  }
  return j;
}

std::string vector_value_to_spec(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return dsm::fmt17(v.get<double>());
  if (!v.is_array()) throw dsm::ParseError("config: vector value must be a number, string, or array");
  std::string s;
  for (const auto& x : v) {
    if (!s.empty()) s += ',';
    s += dsm::fmt17(x.get<double>());
  }
  return s;
}

struct Overrides {
  CLI::App* sub = nullptr;
  Json cfg;

  bool wins(const std::string& key, const std::string& flag) const {
    return cfg.contains(key) && !cfg.at(key).is_null() && sub->count(flag) == 0;
  }
  template <typename T>
  void get(const std::string& key, const std::string& flag, T& var) const {
    if (wins(key, flag)) {
      try {
        var = cfg.at(key).get<T>();
      } catch (const std::exception& e) {
        throw dsm::ParseError("config key '" + key + "': " + e.what());
      }
    }
  }
  void get_opt(const std::string& key, const std::string& flag, std::optional<double>& var) const {
    if (wins(key, flag)) var = cfg.at(key).get<double>();
  }
  void get_vec_spec(const std::string& key, const std::string& flag, std::string& var) const {
    if (wins(key, flag)) var = vector_value_to_spec(cfg.at(key));
  }
};

// ---------------------------------------------------------------------------
// shared option groups

struct ProblemOpts {
  std::string problem = "linear-diag";
  int n = 0;  // 0 = registry default
  std::string norm = "l2";
  std::uint64_t seed = 12345;
  std::string csv_path;
  std::optional<double> lambda_min, lambda_max, ball_radius, beta, psi_norm, bilinear, d_min, d_max;
};

void add_problem_options(CLI::App* sub, ProblemOpts& po) {
  sub->add_option("--problem", po.problem, "registry problem name (see `problems`)");
  sub->add_option("--n", po.n, "problem dimension (0 = registry default)");
  sub->add_option("--norm", po.norm, "norm: l1, l2, or linf")->check(CLI::IsMember({"l1", "l2", "linf"}));
  sub->add_option("--seed", po.seed, "seed for every sampled quantity in this run");
  sub->add_option("--csv", po.csv_path, "load F(u) = A u - f from a CSV file instead of the registry");
  sub->add_option("--lambda-min", po.lambda_min, "linear-diag: smallest eigenvalue");
  sub->add_option("--lambda-max", po.lambda_max, "linear-diag: largest eigenvalue");
  sub->add_option("--ball-radius", po.ball_radius, "cubic: radius of the analytic-bound ball");
  sub->add_option("--beta", po.beta, "counterexample: data decay exponent");
  sub->add_option("--psi-norm", po.psi_norm, "manufactured: ||psi||");
  sub->add_option("--bilinear", po.bilinear, "manufactured: quadratic term strength (M2 = 2*bilinear)");
  sub->add_option("--d-min", po.d_min, "manufactured: smallest spectrum point");
  sub->add_option("--d-max", po.d_max, "manufactured: largest spectrum point");
}

void apply_problem_config(const Overrides& ov, ProblemOpts& po) {
  ov.get("problem", "--problem", po.problem);
  ov.get("n", "--n", po.n);
  ov.get("norm", "--norm", po.norm);
  ov.get("seed", "--seed", po.seed);
  ov.get("csv", "--csv", po.csv_path);
  ov.get_opt("lambda_min", "--lambda-min", po.lambda_min);
  ov.get_opt("lambda_max", "--lambda-max", po.lambda_max);
  ov.get_opt("ball_radius", "--ball-radius", po.ball_radius);
  ov.get_opt("beta", "--beta", po.beta);
  ov.get_opt("psi_norm", "--psi-norm", po.psi_norm);
  ov.get_opt("bilinear", "--bilinear", po.bilinear);
  ov.get_opt("d_min", "--d-min", po.d_min);
  ov.get_opt("d_max", "--d-max", po.d_max);
}

dsm::ProblemSpec problem_spec(const ProblemOpts& po) {
  dsm::ProblemSpec spec;
  spec.name = po.problem;
  spec.n = po.n;
  spec.seed = po.seed;
  spec.norm_kind = dsm::norm_kind_from_string(po.norm);
  auto put = [&spec](const char* key, const std::optional<double>& v) {
    if (v) spec.params[key] = *v;
  };
  put("lambda_min", po.lambda_min);
  put("lambda_max", po.lambda_max);
  put("ball_radius", po.ball_radius);
  put("beta", po.beta);
  put("psi_norm", po.psi_norm);
  put("bilinear", po.bilinear);
  put("d_min", po.d_min);
  put("d_max", po.d_max);
  return spec;
}

dsm::ProblemOp build_problem(const ProblemOpts& po) {
  if (!po.csv_path.empty()) return dsm::load_linear_csv(po.csv_path, dsm::norm_kind_from_string(po.norm));
  return dsm::load_problem(problem_spec(po));
}

Json problem_config(const ProblemOpts& po) {
  Json j{{"problem", po.problem}, {"n", po.n}, {"norm", po.norm}, {"seed", po.seed}};
  if (!po.csv_path.empty()) j["csv"] = po.csv_path;
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("lambda_min", po.lambda_min);
  put("lambda_max", po.lambda_max);
  put("ball_radius", po.ball_radius);
  put("beta", po.beta);
  put("psi_norm", po.psi_norm);
  put("bilinear", po.bilinear);
  put("d_min", po.d_min);
  put("d_max", po.d_max);
  return j;
}

struct OutputOpts {
  std::string out;
  std::string format = "csv";
  std::string tag;
};

void add_output_options(CLI::App* sub, OutputOpts& oo, const char* default_tag) {
  oo.tag = default_tag;
  const char* env = std::getenv("DSM_OUT_DIR");
  oo.out = env ? env : ".";
  sub->add_option("--out", oo.out, "output directory (default: $DSM_OUT_DIR or .)");
  sub->add_option("--format", oo.format, "artifact format: csv writes CSV + JSON, json writes JSON only")
      ->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--tag", oo.tag, "artifact base name");
}

void apply_output_config(const Overrides& ov, OutputOpts& oo) {
  ov.get("out", "--out", oo.out);
  ov.get("format", "--format", oo.format);
  ov.get("tag", "--tag", oo.tag);
  if (oo.format != "csv" && oo.format != "json") throw dsm::InputError("format must be csv or json");
}

std::string artifact_base(const OutputOpts& oo) {
  std::filesystem::create_directories(oo.out);
  return oo.out + "/" + oo.tag;
}

Json output_config(const OutputOpts& oo) { return Json{{"out", oo.out}, {"format", oo.format}, {"tag", oo.tag}}; }

Vec parse_vector_spec(const std::string& s, int n, const std::string& what) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      double v = std::stod(cell, &used);
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (used != cell.size()) throw std::invalid_argument("trailing junk");
      vals.push_back(v);
    } catch (const std::exception&) {
      throw dsm::InputError(what + ": cannot parse component '" + cell + "'");
    }
  }
  if (vals.empty()) throw dsm::InputError(what + ": empty vector");
  if (static_cast<int>(vals.size()) == 1 && n > 1) return Vec(static_cast<std::size_t>(n), vals[0]);
  if (static_cast<int>(vals.size()) != n) {
    throw dsm::InputError(what + ": expected " + std::to_string(n) + " components, got " +
                          std::to_string(vals.size()));
  }
  return vals;
}

void merge(Json& dst, const Json& src) {
  for (const auto& [key, value] : src.items()) dst[key] = value;
}

// ---------------------------------------------------------------------------
// flow

struct FlowCmd {
  ProblemOpts po;
  OutputOpts oo;
  std::string config_path;
  double eps = 1e-2, eps0 = 1.0, k = 1.0, c0 = 1.0;
  double delta = 1e-8, t_max = 50.0, rel_tol = 1e-8, abs_tol = 1e-10;
  long max_steps = 200000;
  int h_samples = 20;
  std::string w0_spec;
};

int run_flow(CLI::App* sub, FlowCmd& o) {
  Overrides ov{sub, load_config(o.config_path, "flow")};
  apply_problem_config(ov, o.po);
  apply_output_config(ov, o.oo);
  ov.get("eps", "--eps", o.eps);
  ov.get("eps0", "--eps0", o.eps0);
  ov.get("k", "--k", o.k);
  ov.get("c0", "--c0", o.c0);
  ov.get("delta", "--delta", o.delta);
  ov.get("t_max", "--t-max", o.t_max);
  ov.get("rel_tol", "--rel-tol", o.rel_tol);
  ov.get("abs_tol", "--abs-tol", o.abs_tol);
  ov.get("max_steps", "--max-steps", o.max_steps);
  ov.get("h_samples", "--h-samples", o.h_samples);
  ov.get_vec_spec("w0", "--w0", o.w0_spec);

  dsm::ProblemOp op = build_problem(o.po);
  dsm::FlowConfig cfg;
  cfg.reg = dsm::RegParams{o.eps, o.eps0, o.k, o.c0};
  cfg.delta = o.delta;
  cfg.t_max = o.t_max;
  cfg.integrator_rel_tol = o.rel_tol;
  cfg.integrator_abs_tol = o.abs_tol;
  cfg.max_steps = o.max_steps;
  Vec w0 = o.w0_spec.empty() ? op.u0 : parse_vector_spec(o.w0_spec, op.dim, "--w0");

  dsm::FlowTrace trace = dsm::integrate_dsm(op, w0, cfg);

  // Bound checks need Assumption-A constants. Honor explicit --c0/--k; otherwise fit the
  // resolvent growth at the endpoint and inflate the constant by 5%.
  bool explicit_ck = sub->count("--c0") > 0 || sub->count("--k") > 0 || ov.cfg.contains("c0") || ov.cfg.contains("k");
  double c0_used = o.c0, k_used = o.k;
  Json fit_json = nullptr;
  std::string bounds_note = explicit_ck ? "from flags" : "fitted at w_inf, c0 inflated by 5%";
  if (!explicit_ck) {
    try {
      std::vector<double> sched = dsm::EpsSchedule{0.1, 0.1, 5}.generate(o.eps0);
      dsm::GrowthFit fit = dsm::estimate_resolvent_growth(op, trace.w_inf, sched);
      c0_used = fit.c0 * 1.05;
      k_used = std::min(std::max(fit.k, 1e-9), 1.0);
      fit_json = dsm::to_json(fit);
    } catch (const dsm::Error& e) {
      bounds_note = std::string("growth fit failed (") + e.what() + "); using c0=1, k=1";
    }
  }
  dsm::RegParams report_reg{o.eps, o.eps0, k_used, c0_used};
  dsm::DecayReport rep = dsm::decay_report(op, trace, report_reg, o.h_samples, o.po.seed);

  // Record the resolved constants so a rerun from this config reproduces the report.
  Json config{{"command", "flow"}};
  merge(config, problem_config(o.po));
  merge(config, Json{{"eps", o.eps},
                     {"eps0", o.eps0},
                     {"k", k_used},
                     {"c0", c0_used},
                     {"delta", o.delta},
                     {"t_max", o.t_max},
                     {"rel_tol", o.rel_tol},
                     {"abs_tol", o.abs_tol},
                     {"max_steps", o.max_steps},
                     {"h_samples", o.h_samples},
                     {"w0", dsm::to_json(w0)}});
  merge(config, output_config(o.oo));

  std::string base = artifact_base(o.oo);
  if (o.oo.format == "csv") dsm::write_flow_csv(trace, config, base + ".csv");
  Json out{{"config", config},
           {"bounds", Json{{"c0_used", c0_used}, {"k_used", k_used}, {"note", bounds_note}, {"growth_fit", fit_json}}},
           {"report", dsm::to_json(rep)},
           {"trace", dsm::to_json(trace)}};
  dsm::write_json_file(out, base + ".json");

  std::cerr << "flow: F0=" << trace.F0 << " t_star=" << trace.t_star << " accepted=" << trace.accepted_steps
            << " final_residual=" << (trace.residual_norms.empty() ? 0.0 : trace.residual_norms.back())
            << " decay_dev=" << rep.norm_decay_max_dev << " tail_violations=" << rep.tail_violation_fraction
            << (trace.reached_t_max ? " [hit t_max before delta]" : "") << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// path

struct PathCmd {
  ProblemOpts po;
  OutputOpts oo;
  std::string config_path;
  std::string method = "flow";
  double eps_start = 0.1, factor = 0.1;
  int count = 5;
  double eps0 = 1.0, delta = 1e-8, rel_tol = 1e-8, abs_tol = 1e-10, t_max = 200.0;
  long max_steps = 500000;
  double fp_tol = 1e-12;
  int fp_max_iter = 200;
  bool cold_start = false;
  int jobs = 1;
  std::string w0_spec;
};

int run_path(CLI::App* sub, PathCmd& o) {
  Overrides ov{sub, load_config(o.config_path, "path")};
  apply_problem_config(ov, o.po);
  apply_output_config(ov, o.oo);
  ov.get("method", "--method", o.method);
  ov.get("eps_start", "--eps-start", o.eps_start);
  ov.get("factor", "--factor", o.factor);
  ov.get("count", "--count", o.count);
  ov.get("eps0", "--eps0", o.eps0);
  ov.get("delta", "--delta", o.delta);
  ov.get("rel_tol", "--rel-tol", o.rel_tol);
  ov.get("abs_tol", "--abs-tol", o.abs_tol);
  ov.get("t_max", "--t-max", o.t_max);
  ov.get("max_steps", "--max-steps", o.max_steps);
  ov.get("fp_tol", "--fp-tol", o.fp_tol);
  ov.get("fp_max_iter", "--fp-max-iter", o.fp_max_iter);
  ov.get("cold_start", "--cold-start", o.cold_start);
  ov.get("jobs", "--jobs", o.jobs);
  ov.get_vec_spec("w0", "--w0", o.w0_spec);

  dsm::ProblemOp op = build_problem(o.po);
  dsm::EpsSchedule sched{o.eps_start, o.factor, o.count};
  dsm::PathTols tols;
  tols.eps0 = o.eps0;
  tols.delta = o.delta;
  tols.rel_tol = o.rel_tol;
  tols.abs_tol = o.abs_tol;
  tols.t_max = o.t_max;
  tols.max_steps = o.max_steps;
  tols.fp_tol = o.fp_tol;
  tols.fp_max_iter = o.fp_max_iter;
  tols.warm_start = !o.cold_start;
  tols.jobs = o.jobs;
  Vec w0 = o.w0_spec.empty() ? op.u0 : parse_vector_spec(o.w0_spec, op.dim, "--w0");

  dsm::RatePathResult result = dsm::run_path(op, w0, sched, dsm::path_method_from_string(o.method), tols);
  std::string fit_note;
  try {
    dsm::fit_rate(result);
  } catch (const dsm::InputError& e) {
    fit_note = e.what();  // a path without a usable fit is still a result
  }

  Json config{{"command", "path"}};
  merge(config, problem_config(o.po));
  merge(config, Json{{"method", o.method},
                     {"eps_start", o.eps_start},
                     {"factor", o.factor},
                     {"count", o.count},
                     {"eps0", o.eps0},
                     {"delta", o.delta},
                     {"rel_tol", o.rel_tol},
                     {"abs_tol", o.abs_tol},
                     {"t_max", o.t_max},
                     {"max_steps", o.max_steps},
                     {"fp_tol", o.fp_tol},
                     {"fp_max_iter", o.fp_max_iter},
                     {"cold_start", o.cold_start},
                     {"jobs", o.jobs},
                     {"w0", dsm::to_json(w0)}});
  merge(config, output_config(o.oo));

  std::string base = artifact_base(o.oo);
  if (o.oo.format == "csv") dsm::write_path_csv(result, config, base + ".csv");
  Json out{{"config", config}, {"result", dsm::to_json(result)}};
  if (!fit_note.empty()) out["fit_note"] = fit_note;
  dsm::write_json_file(out, base + ".json");

  if (result.k_hat) {
    std::cerr << "path: k_hat=" << *result.k_hat << " c_hat=" << *result.c_hat << " rms=" << *result.fit_rms << "\n";
  } else {
    std::cerr << "path: fit unavailable: " << fit_note << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// contract

struct ContractCmd {
  ProblemOpts po;
  OutputOpts oo;
  std::string config_path;
  double eps = 1e-2, eps0 = 1.0, k = 1.0, c0 = 1.0;
  double tol = 1e-12;
  int max_iter = 200;
  bool strict = true;
  bool shift = false;
  std::string q_spec;
  std::optional<double> m2, m3;
  int samples = 200;
};

int run_contract(CLI::App* sub, ContractCmd& o) {
  Overrides ov{sub, load_config(o.config_path, "contract")};
  apply_problem_config(ov, o.po);
  apply_output_config(ov, o.oo);
  ov.get("eps", "--eps", o.eps);
  ov.get("eps0", "--eps0", o.eps0);
  ov.get("k", "--k", o.k);
  ov.get("c0", "--c0", o.c0);
  ov.get("tol", "--tol", o.tol);
  ov.get("max_iter", "--max-iter", o.max_iter);
  ov.get("strict", "--strict", o.strict);
  ov.get("shift", "--shift", o.shift);
  ov.get_vec_spec("q", "--q", o.q_spec);
  ov.get_opt("m2", "--m2", o.m2);
  ov.get_opt("m3", "--m3", o.m3);
  ov.get("samples", "--samples", o.samples);

  dsm::ProblemOp op = build_problem(o.po);
  if (!op.known_solution) {
    throw dsm::InputError("contract: problem '" + op.name + "' has no known solution y to contract around");
  }
  const Vec& y = *op.known_solution;
  dsm::RegParams reg{o.eps, o.eps0, o.k, o.c0};
  dsm::FixedPointOptions opt;
  opt.tol = o.tol;
  opt.max_iter = o.max_iter;
  opt.strict = o.strict;
  opt.m2_override = o.m2;
  opt.m3_override = o.m3;
  opt.estimate_samples = o.samples;
  opt.estimate_seed = o.po.seed;

  dsm::ContractionDiagnostics diag;
  Json shift_json = nullptr;
  if (o.shift) {
    Vec q = o.q_spec == "y" ? y
                            : (o.q_spec.empty() ? Vec(y.size(), 0.0) : parse_vector_spec(o.q_spec, op.dim, "--q"));
    dsm::ShiftedProblem s = dsm::make_shifted(op, q);
    diag = dsm::shifted_fixed_point_solve(s, reg, opt);
    shift_json = dsm::to_json(q);
  } else {
    Vec psi = op.known_source ? *op.known_source : dsm::source_condition_solve(op, y).first;
    diag = dsm::fixed_point_solve(op, y, psi, reg, opt);
  }

  Json config{{"command", "contract"}};
  merge(config, problem_config(o.po));
  merge(config, Json{{"eps", o.eps},
                     {"eps0", o.eps0},
                     {"k", o.k},
                     {"c0", o.c0},
                     {"tol", o.tol},
                     {"max_iter", o.max_iter},
                     {"strict", o.strict},
                     {"shift", o.shift},
                     {"samples", o.samples}});
  if (!o.q_spec.empty()) config["q"] = o.q_spec;
  if (o.m2) config["m2"] = *o.m2;
  if (o.m3) config["m3"] = *o.m3;
  merge(config, output_config(o.oo));

  std::string base = artifact_base(o.oo);
  if (o.oo.format == "csv") dsm::write_contraction_csv(diag, o.eps, op.norm_kind, config, base + ".csv");
  Json out{{"config", config}, {"shift_q", shift_json}, {"diagnostics", dsm::to_json(diag)}};
  dsm::write_json_file(out, base + ".json");

  std::cerr << "contract: rho=" << diag.rho << " r=" << diag.r << " eta=" << diag.eta
            << " iterations=" << diag.iterations << " converged=" << (diag.converged ? "yes" : "no")
            << " certified=" << (diag.certified ? "yes" : "no") << " residual=" << diag.residual_norm << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// probe

struct ProbeCmd {
  ProblemOpts po;
  OutputOpts oo;
  std::string config_path;
  double eps_start = 0.1, factor = 0.1;
  int count = 6;
  double eps0 = 1.0;
  int jobs = 1;
};

int run_probe(CLI::App* sub, ProbeCmd& o) {
  Overrides ov{sub, load_config(o.config_path, "probe")};
  apply_problem_config(ov, o.po);
  apply_output_config(ov, o.oo);
  ov.get("eps_start", "--eps-start", o.eps_start);
  ov.get("factor", "--factor", o.factor);
  ov.get("count", "--count", o.count);
  ov.get("eps0", "--eps0", o.eps0);
  ov.get("jobs", "--jobs", o.jobs);

  dsm::ProblemOp op = build_problem(o.po);
  dsm::EpsSchedule sched{o.eps_start, o.factor, o.count};
  dsm::ProbeResult res = dsm::divergence_probe(op, sched, o.eps0, o.jobs);

  Json config{{"command", "probe"}};
  merge(config, problem_config(o.po));
  merge(config, Json{{"eps_start", o.eps_start},
                     {"factor", o.factor},
                     {"count", o.count},
                     {"eps0", o.eps0},
                     {"jobs", o.jobs}});
  merge(config, output_config(o.oo));

  dsm::write_json_file(Json{{"config", config}, {"probe", dsm::to_json(res)}}, artifact_base(o.oo) + ".json");
  std::cerr << "probe: verdict=" << res.verdict() << " growth_ratio=" << res.growth_ratio << " over "
            << res.points.size() << " eps values\n";
  return 0;
}

// ---------------------------------------------------------------------------
// check

struct CheckCmd {
  ProblemOpts po;
  OutputOpts oo;
  std::string config_path;
  int samples = 200;
  int points = 50;
  double eps_start = 0.1, factor = 0.1;
  int count = 5;
  double eps0 = 1.0;
  std::string at_spec;
};

int run_check(CLI::App* sub, CheckCmd& o) {
  Overrides ov{sub, load_config(o.config_path, "check")};
  apply_problem_config(ov, o.po);
  apply_output_config(ov, o.oo);
  ov.get("samples", "--samples", o.samples);
  ov.get("points", "--points", o.points);
  ov.get("eps_start", "--eps-start", o.eps_start);
  ov.get("factor", "--factor", o.factor);
  ov.get("count", "--count", o.count);
  ov.get("eps0", "--eps0", o.eps0);
  ov.get_vec_spec("at", "--at", o.at_spec);

  dsm::ProblemOp op = build_problem(o.po);
  Vec at = o.at_spec.empty() ? op.u0 : parse_vector_spec(o.at_spec, op.dim, "--at");

  double jac_dev = 0.0;
  dsm::Rng rng(o.po.seed);
  for (int i = 0; i < o.points; ++i) {
    jac_dev = std::max(jac_dev, dsm::jacobian_self_test(op, rng.ball_point(op.u0, op.ball_radius, op.norm_kind)));
  }
  dsm::BoundEstimates est = dsm::estimate_derivative_bounds(op, o.samples, o.po.seed);
  dsm::GrowthFit fit = dsm::estimate_resolvent_growth(op, at, dsm::EpsSchedule{o.eps_start, o.factor, o.count}.generate(o.eps0));

  Json config{{"command", "check"}};
  merge(config, problem_config(o.po));
  merge(config, Json{{"samples", o.samples},
                     {"points", o.points},
                     {"eps_start", o.eps_start},
                     {"factor", o.factor},
                     {"count", o.count},
                     {"eps0", o.eps0},
                     {"at", dsm::to_json(at)}});
  merge(config, output_config(o.oo));

  Json out{{"config", config},
           {"jacobian_max_rel_dev", jac_dev},
           {"has_analytic_jacobian", static_cast<bool>(op.jac)},
           {"derivative_bounds", dsm::to_json(est)},
           {"resolvent_growth", dsm::to_json(fit)}};
  dsm::write_json_file(out, artifact_base(o.oo) + ".json");

  std::cerr << "check: jac_dev=" << jac_dev << " M1>=" << est.m1 << " M2>=" << est.m2 << " M3>=" << est.m3
            << " fitted c0=" << fit.c0 << " k=" << fit.k << (fit.well_posed_warning ? " [k ~ 0: well-posed]" : "")
            << "\n";
  return 0;
}

int run_problems() {
  for (const auto& entry : dsm::problem_registry()) {
    std::cout << entry.name << " (n=" << entry.default_n << ")";
    if (!entry.params.empty()) std::cout << "  params: " << entry.params;
    std::cout << "\n    " << entry.description << "\n";
  }
  return 0;
}

int exit_code_for(const dsm::Error& e) {
  switch (e.code()) {
    case dsm::ErrorCode::hypothesis:
      return 1;
    case dsm::ErrorCode::input:
    case dsm::ErrorCode::parse:
    case dsm::ErrorCode::spec:
      return 3;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamical Systems Method: regularized solves, decay checks, contraction diagnostics"};
  app.require_subcommand(1);

  FlowCmd flow;
  CLI::App* flow_sub = app.add_subcommand("flow", "integrate the regularized flow and verify the decay law");
  add_problem_options(flow_sub, flow.po);
  add_output_options(flow_sub, flow.oo, "flow");
  flow_sub->add_option("--config", flow.config_path, "JSON config; explicit flags override its values");
  flow_sub->add_option("--eps", flow.eps, "regularization parameter");
  flow_sub->add_option("--eps0", flow.eps0, "upper bound of the eps range");
  flow_sub->add_option("--k", flow.k, "Assumption-A exponent for bound checks");
  flow_sub->add_option("--c0", flow.c0, "Assumption-A constant for bound checks");
  flow_sub->add_option("--delta", flow.delta, "target residual norm");
  flow_sub->add_option("--t-max", flow.t_max, "horizon cap");
  flow_sub->add_option("--rel-tol", flow.rel_tol, "integrator relative tolerance");
  flow_sub->add_option("--abs-tol", flow.abs_tol, "integrator absolute tolerance");
  flow_sub->add_option("--max-steps", flow.max_steps, "integrator step budget");
  flow_sub->add_option("--h-samples", flow.h_samples, "random dual functionals for the decay report");
  flow_sub->add_option("--w0", flow.w0_spec, "start point: comma list or single value to fill");

  PathCmd path;
  CLI::App* path_sub = app.add_subcommand("path", "solve along a geometric eps schedule and fit the rate");
  add_problem_options(path_sub, path.po);
  add_output_options(path_sub, path.oo, "path");
  path_sub->add_option("--config", path.config_path, "JSON config; explicit flags override its values");
  path_sub->add_option("--method", path.method, "flow, contraction, or hybrid")
      ->check(CLI::IsMember({"flow", "contraction", "hybrid"}));
  path_sub->add_option("--eps-start", path.eps_start, "largest eps");
  path_sub->add_option("--factor", path.factor, "geometric factor in (0,1)");
  path_sub->add_option("--count", path.count, "number of eps points (>= 3)");
  path_sub->add_option("--eps0", path.eps0, "upper bound of the eps range");
  path_sub->add_option("--delta", path.delta, "flow residual target");
  path_sub->add_option("--rel-tol", path.rel_tol, "integrator relative tolerance");
  path_sub->add_option("--abs-tol", path.abs_tol, "integrator absolute tolerance");
  path_sub->add_option("--t-max", path.t_max, "per-eps horizon cap");
  path_sub->add_option("--max-steps", path.max_steps, "per-eps integrator budget");
  path_sub->add_option("--fp-tol", path.fp_tol, "fixed-point step tolerance");
  path_sub->add_option("--fp-max-iter", path.fp_max_iter, "fixed-point iteration budget");
  path_sub->add_flag("--cold-start", path.cold_start, "restart every eps from w0 instead of chaining");
  path_sub->add_option("--jobs", path.jobs, "parallel eps solves (cold start only)");
  path_sub->add_option("--w0", path.w0_spec, "start point: comma list or single value to fill");

  ContractCmd contract;
  CLI::App* contract_sub =
      app.add_subcommand("contract", "certify and run the fixed-point construction around y");
  add_problem_options(contract_sub, contract.po);
  add_output_options(contract_sub, contract.oo, "contract");
  contract_sub->add_option("--config", contract.config_path, "JSON config; explicit flags override its values");
  contract_sub->add_option("--eps", contract.eps, "regularization parameter");
  contract_sub->add_option("--eps0", contract.eps0, "upper bound of the eps range");
  contract_sub->add_option("--k", contract.k, "Assumption-A exponent");
  contract_sub->add_option("--c0", contract.c0, "Assumption-A constant");
  contract_sub->add_option("--tol", contract.tol, "step-norm convergence tolerance");
  contract_sub->add_option("--max-iter", contract.max_iter, "iteration budget");
  contract_sub->add_flag("--strict,!--no-strict", contract.strict,
                         "require eta < 1 and ball containment (default on)");
  contract_sub->add_flag("--shift", contract.shift, "solve the shifted equation F(p) + eps (p - q) = 0");
  contract_sub->add_option("--q", contract.q_spec, "shift point: comma list, single value, or 'y'");
  contract_sub->add_option("--m2", contract.m2, "override M2 (constructed-input gate checks)");
  contract_sub->add_option("--m3", contract.m3, "override M3 (constructed-input gate checks)");
  contract_sub->add_option("--samples", contract.samples, "sampling budget when bounds must be estimated");

  ProbeCmd probe;
  CLI::App* probe_sub = app.add_subcommand("probe", "track ||v_eps|| as eps -> 0 on a linear problem");
  add_problem_options(probe_sub, probe.po);
  add_output_options(probe_sub, probe.oo, "probe");
  probe_sub->add_option("--config", probe.config_path, "JSON config; explicit flags override its values");
  probe_sub->add_option("--eps-start", probe.eps_start, "largest eps");
  probe_sub->add_option("--factor", probe.factor, "geometric factor in (0,1)");
  probe_sub->add_option("--count", probe.count, "number of eps points (>= 3)");
  probe_sub->add_option("--eps0", probe.eps0, "upper bound of the eps range");
  probe_sub->add_option("--jobs", probe.jobs, "parallel eps solves");

  CheckCmd check;
  CLI::App* check_sub = app.add_subcommand("check", "jacobian self-test, derivative bounds, resolvent growth fit");
  add_problem_options(check_sub, check.po);
  add_output_options(check_sub, check.oo, "check");
  check_sub->add_option("--config", check.config_path, "JSON config; explicit flags override its values");
  check_sub->add_option("--samples", check.samples, "sample budget for derivative bounds");
  check_sub->add_option("--points", check.points, "random points for the jacobian self-test");
  check_sub->add_option("--eps-start", check.eps_start, "largest eps of the growth schedule");
  check_sub->add_option("--factor", check.factor, "geometric factor in (0,1)");
  check_sub->add_option("--count", check.count, "growth schedule length (>= 3)");
  check_sub->add_option("--eps0", check.eps0, "upper bound of the eps range");
  check_sub->add_option("--at", check.at_spec, "linearization point: comma list or single value to fill");

  CLI::App* problems_sub = app.add_subcommand("problems", "list the built-in problem registry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }

  try {
    if (flow_sub->parsed()) return run_flow(flow_sub, flow);
    if (path_sub->parsed()) return run_path(path_sub, path);
    if (contract_sub->parsed()) return run_contract(contract_sub, contract);
    if (probe_sub->parsed()) return run_probe(probe_sub, probe);
    if (check_sub->parsed()) return run_check(check_sub, check);
    if (problems_sub->parsed()) return run_problems();
  } catch (const dsm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 3;  // unreachable with require_subcommand(1)
}

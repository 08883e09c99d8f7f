#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dsm/contraction.hpp"
#include "dsm/flow.hpp"
#include "dsm/operator.hpp"
#include "dsm/regpath.hpp"
#include "dsm/space.hpp"

namespace dsm {

// All serialized doubles go through one shortest-round-trip-safe format so that a re-run from an
// emitted config reproduces artifacts byte for byte.
inline std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

using Json = nlohmann::ordered_json;

inline Json to_json(const Vec& v) {
  Json arr = Json::array();
  for (double x : v) arr.push_back(x);
  return arr;
}

inline Json to_json(const BoundEstimates& b) {
  return Json{{"m1", b.m1}, {"m2", b.m2}, {"m3", b.m3}, {"sample_count", b.sample_count}, {"seed", b.seed}};
}

inline Json to_json(const GrowthFit& g) {
  Json samples = Json::array();
  for (auto [eps, n] : g.samples) samples.push_back(Json{{"eps", eps}, {"norm", n}});
  return Json{{"c0", g.c0},
              {"k", g.k},
              {"fit_rms", g.fit_rms},
              {"well_posed_warning", g.well_posed_warning},
              {"samples", samples}};
}

inline Json to_json(const DecayReport& r) {
  return Json{{"norm_decay_max_dev", r.norm_decay_max_dev},
              {"functional_decay_max_dev", r.functional_decay_max_dev},
              {"tail_violation_fraction", r.tail_violation_fraction},
              {"drift_bound_ok", r.drift_bound_ok},
              {"zero_initial_residual", r.zero_initial_residual},
              {"h_samples", r.h_samples},
              {"seed", r.seed}};
}

inline Json to_json(const FlowTrace& t) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < t.times.size(); ++i) {
    rows.push_back(Json{{"t", t.times[i]}, {"residual", t.residual_norms[i]}, {"w", to_json(t.states[i])}});
  }
  return Json{{"F0", t.F0},
              {"eps", t.eps},
              {"t_star", t.t_star},
              {"w0", to_json(t.w0)},
              {"w_inf", to_json(t.w_inf)},
              {"accepted_steps", t.accepted_steps},
              {"rejected_steps", t.rejected_steps},
              {"reached_t_max", t.reached_t_max},
              {"trace", rows}};
}

inline const char* to_string(BoundsSource s) {
  switch (s) {
    case BoundsSource::analytic:
      return "analytic";
    case BoundsSource::estimated:
      return "estimated (sampled lower bounds, non-certified)";
    default:
      return "override";
  }
}

inline Json to_json(const ContractionDiagnostics& d) {
  return Json{{"m2", d.m2},
              {"m3", d.m3},
              {"psi_norm", d.psi_norm},
              {"r", d.r},
              {"rho", d.rho},
              {"eta", d.eta},
              {"q", d.q},
              {"iterations", d.iterations},
              {"final_step_norm", d.final_step_norm},
              {"converged", d.converged},
              {"certified", d.certified},
              {"bounds_source", to_string(d.bounds_source)},
              {"step_norms", to_json(d.step_norms)},
              {"observed_ratio_max", d.observed_ratio_max},
              {"residual_norm", d.residual_norm},
              {"z_star", to_json(d.z_star)},
              {"v_eps", to_json(d.v_eps)}};
}

inline Json to_json(const RatePathResult& p) {
  Json records = Json::array();
  for (const auto& rec : p.records) {
    Json r{{"eps", rec.eps},         {"residual", rec.residual}, {"iterations", rec.iterations},
           {"method", to_string(rec.method)}, {"ok", rec.ok},    {"v_eps", to_json(rec.v_eps)}};
    r["error"] = rec.error ? Json(*rec.error) : Json(nullptr);
    if (!rec.message.empty()) r["message"] = rec.message;
    records.push_back(r);
  }
  Json j{{"records", records}, {"excluded_zero_errors", p.excluded_zero_errors}};
  j["k_hat"] = p.k_hat ? Json(*p.k_hat) : Json(nullptr);
  j["c_hat"] = p.c_hat ? Json(*p.c_hat) : Json(nullptr);
  j["fit_rms"] = p.fit_rms ? Json(*p.fit_rms) : Json(nullptr);
  return j;
}

inline Json to_json(const ProbeResult& p) {
  Json pts = Json::array();
  for (auto [eps, vn] : p.points) pts.push_back(Json{{"eps", eps}, {"v_norm", vn}});
  return Json{{"points", pts}, {"verdict", p.verdict()}, {"growth_ratio", p.growth_ratio}};
}

// CSV with `t,residual,w_0..w_{n-1}` header; a leading comment row carries the run config so
// every artifact is self-describing.
inline void write_flow_csv(const FlowTrace& t, const Json& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "# " << config.dump() << "\n";
  out << "t,residual";
  for (std::size_t j = 0; j < t.w0.size(); ++j) out << ",w_" << j;
  out << "\n";
  for (std::size_t i = 0; i < t.times.size(); ++i) {
    out << fmt17(t.times[i]) << ',' << fmt17(t.residual_norms[i]);
    for (double x : t.states[i]) out << ',' << fmt17(x);
    out << "\n";
  }
}

inline void write_path_csv(const RatePathResult& p, const Json& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "# " << config.dump() << "\n";
  out << "eps,residual,error,iters,method,status\n";
  for (const auto& rec : p.records) {
    out << fmt17(rec.eps) << ',' << fmt17(rec.residual) << ',' << (rec.error ? fmt17(*rec.error) : "") << ','
        << rec.iterations << ',' << to_string(rec.method) << ',' << (rec.ok ? "ok" : "failed") << "\n";
  }
}

inline void write_contraction_csv(const ContractionDiagnostics& d, double eps, NormKind kind, const Json& config,
                                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "# " << config.dump() << "\n";
  out << "eps,r,rho,eta,iters,converged,err\n";  // err = ||z_star|| = ||v_eps - y||
  out << fmt17(eps) << ',' << fmt17(d.r) << ',' << fmt17(d.rho) << ',' << fmt17(d.eta) << ',' << d.iterations << ','
      << (d.converged ? 1 : 0) << ',' << fmt17(norm(d.z_star, kind)) << "\n";
}

inline void write_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace dsm

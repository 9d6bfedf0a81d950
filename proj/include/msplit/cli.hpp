#ifndef MSPLIT_CLI_HPP
#define MSPLIT_CLI_HPP

// Run-spec handling for the batch front end. A run-spec is a JSON document
//
//   {"schema_version": 1,
//    "solver": "driver" | "fb" | "fb_extended" | "pd",
//    "problem": {"name": "lasso", "seed": 42, ...},
//    "params": {...},
//    "stop": {"residual_tol": 1e-9, "max_iter": 100000},
//    "output": "out/lasso",
//    "seed": 42}
//
// See README.md for the per-solver params blocks. Exit codes: 0 success,
// 1 usage or spec error, 2 hypothesis violation, 3 numerical failure.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "msplit/driver.hpp"
#include "msplit/error.hpp"
#include "msplit/fb.hpp"
#include "msplit/metric_json.hpp"
#include "msplit/pd.hpp"
#include "msplit/problems.hpp"

namespace msplit::cli {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kHypothesis = 2, kNumerical = 3 };

class SpecError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------- parsing

inline ScalarSeq scalar_seq_from(const json& j, const std::string& what) {
  if (j.is_number()) return constant_seq(j.get<double>());
  if (j.is_array() && !j.empty()) {
    auto vals = j.get<std::vector<double>>();
    return [vals = std::move(vals)](std::size_t n) { return vals[std::min(n, vals.size() - 1)]; };
  }
  throw SpecError(what + ": expected a number or a nonempty array");
}

/// {"vector": [...]} or {"fill": v}, optionally with "decay" (default 1).
inline VectorSeq error_seq_from(const json& j, Index dim, const std::string& what) {
  if (!j.is_object()) throw SpecError(what + ": expected an object");
  Vector v;
  if (j.contains("vector")) {
    v = vector_from_json(j.at("vector"));
    if (v.size() != dim) throw SpecError(what + ": vector has the wrong dimension");
  } else if (j.contains("fill")) {
    v = Vector::Constant(dim, j.at("fill").get<double>());
  } else {
    throw SpecError(what + ": needs 'vector' or 'fill'");
  }
  return geometric_seq(std::move(v), j.value("decay", 1.0));
}

/// Jacobi-like diagonal metric U_kk proportional to 1 / sum_j |G_kj|, scaled
/// so that ||U|| = 1.
inline Metric jacobi_metric(const Matrix& gram) {
  const Vector rows = gram.cwiseAbs().rowwise().sum();
  if (!(rows.minCoeff() > 0.0)) throw SpecError("jacobi metric: Gram matrix has a zero row");
  return Metric::diagonal(Vector(rows.minCoeff() * rows.cwiseInverse()));
}

/// "identity" (or absent), {"scale": s}, "jacobi", or a metric-sequence document.
inline MetricSequence metric_seq_from(const json& j, Index dim, const ProblemInstance& inst) {
  if (j.is_null() || (j.is_string() && j.get<std::string>() == "identity")) {
    return MetricSequence::constant(Metric::identity(dim));
  }
  if (j.is_string() && j.get<std::string>() == "jacobi") {
    if (!inst.gram) throw SpecError("metric 'jacobi' needs a problem with a quadratic part");
    return MetricSequence::constant(jacobi_metric(*inst.gram));
  }
  if (j.is_object() && j.contains("scale")) {
    return MetricSequence::constant(Metric::scaled_identity(dim, j.at("scale").get<double>()));
  }
  if (j.is_object() && j.contains("kind")) {
    MetricSequence seq = load_metric_sequence(j);
    if (seq.dim() != dim) throw SpecError("metric sequence has dimension " + std::to_string(seq.dim()));
    return seq;
  }
  throw SpecError("unrecognized metric specification: " + j.dump());
}

inline StopRule stop_from(const json& j) {
  StopRule s;
  if (j.is_null()) return s;
  if (j.contains("residual_tol")) {
    if (j.at("residual_tol").is_null()) {
      s.residual_tol.reset();
    } else {
      s.residual_tol = j.at("residual_tol").get<double>();
    }
  }
  s.relative_to_x0 = j.value("relative_to_x0", s.relative_to_x0);
  s.max_iter = j.value("max_iter", s.max_iter);
  s.stagnation_window = j.value("stagnation_window", s.stagnation_window);
  s.stagnation_tol = j.value("stagnation_tol", s.stagnation_tol);
  if (s.max_iter == 0) throw SpecError("stop.max_iter must be positive");
  return s;
}

inline json stop_to_json(const StopRule& s) {
  json j;
  j["residual_tol"] = s.residual_tol ? json(*s.residual_tol) : json(nullptr);
  j["relative_to_x0"] = s.relative_to_x0;
  j["max_iter"] = s.max_iter;
  j["stagnation_window"] = s.stagnation_window;
  j["stagnation_tol"] = s.stagnation_tol;
  return j;
}

/// Fills defaults and replaces the problem block by the instance's resolved
/// configuration, so that the result is self-contained and re-runnable.
inline json resolve_spec(const json& spec, ProblemInstance* inst_out = nullptr) {
  if (!spec.is_object()) throw SpecError("spec must be a JSON object");
  const int version = spec.value("schema_version", kSchemaVersion);
  if (version != kSchemaVersion) throw SpecError("unsupported schema_version " + std::to_string(version));
  if (!spec.contains("solver")) throw SpecError("spec needs a 'solver'");
  const std::string solver = spec.at("solver").get<std::string>();
  if (solver != "driver" && solver != "fb" && solver != "fb_extended" && solver != "pd") {
    throw SpecError("unknown solver '" + solver + "'");
  }
  if (!spec.contains("problem")) throw SpecError("spec needs a 'problem'");
  json problem = spec.at("problem");
  if (problem.is_string()) problem = json{{"name", problem}};
  if (!problem.contains("name")) throw SpecError("problem needs a 'name'");
  const std::string name = problem.at("name").get<std::string>();
  json config = problem;
  config.erase("name");
  if (spec.contains("seed") && !config.contains("seed")) config["seed"] = spec.at("seed");

  ProblemInstance inst = make_instance(name, config);
  json out = spec;
  out["schema_version"] = kSchemaVersion;
  json resolved = inst.config;
  resolved["name"] = name;
  out["problem"] = resolved;
  if (!out.contains("params")) out["params"] = json::object();
  out["stop"] = stop_to_json(stop_from(spec.value("stop", json())));
  if (!out.contains("output")) out["output"] = "out";
  if (!out.contains("seed")) out["seed"] = inst.config.value("seed", 0);
  if (inst_out) *inst_out = std::move(inst);
  return out;
}

// ---------------------------------------------------------------- execution

struct Outcome {
  int code = kOk;
  std::string message;
  json metadata;
  std::string csv;
  ValidationReport validation;
};

namespace detail {

/// A constant column collapses to {"constant": v}.
inline json compress(const std::vector<double>& v) {
  if (!v.empty() && std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) {
    return json{{"constant", v.front()}};
  }
  return v;
}

inline json report_to_json(const ValidationReport& r) {
  json j;
  j["passed"] = r.passed();
  j["issues"] = json::array();
  for (const auto& i : r.issues) {
    json e{{"check", i.check}, {"message", i.message}};
    e["n"] = i.n ? json(*i.n) : json(nullptr);
    j["issues"].push_back(e);
  }
  j["notes"] = r.notes;
  return j;
}

inline json monitors_json(const IterationTrace& t) {
  json j;
  const MonitorReport s = summability_monitor(t);
  j["summability"] = {{"total", s.total},
                      {"tail_increment", s.tail_increment},
                      {"tail_exponent", s.tail_exponent ? json(*s.tail_exponent) : json(nullptr)},
                      {"consistent", s.summable_consistent}};
  if (!t.records.empty() && t.records.front().fejer) {
    const FejerReport f = fejer_monitor(t, 1e-10);
    j["fejer"] = {{"monotone", f.monotone}, {"worst_increase", f.worst_increase}};
  }
  j["iterates_cauchy"] = t.iterates_cauchy;
  return j;
}

inline json trace_params(const IterationTrace& t) {
  std::vector<double> lam, phi;
  for (const auto& r : t.records) {
    lam.push_back(r.lambda);
    phi.push_back(r.phi);
  }
  return json{{"lambda", compress(lam)}, {"phi", compress(phi)}};
}

inline std::size_t horizon_of(const json& params, const StopRule& stop) {
  return params.value("horizon", std::min<std::size_t>(stop.max_iter, 1000));
}

struct Prepared {
  std::function<ValidationReport()> validate;
  std::function<void(Outcome&, json&)> run;
};

inline Prepared prepare_driver(const ProblemInstance& inst, const json& params, const StopRule& stop,
                               bool allow) {
  if (inst.kind != "driver") throw SpecError("solver 'driver' needs a driver problem, got '" + inst.name + "'");
  auto s = std::make_shared<OperatorSchedule>();
  const Index dim = inst.x0.size();
  s->m = inst.sets.size();
  s->metrics = metric_seq_from(params.value("metric", json()), dim, inst);
  s->epsilon = params.value("epsilon", 0.1);
  s->strong_window = params.value("strong_window", true);
  s->allow_violations = allow;
  const auto sets = inst.sets;
  const MetricSequence metrics = s->metrics;
  s->factors_at = [sets, metrics](std::size_t n) {
    std::vector<AveragedMap> f;
    for (const auto& a : sets) f.push_back(resolvent_map(a, 1.0, metrics.at(n)));
    return f;
  };
  const json lam = params.value("lambda", json(1.0));
  if (lam.is_string()) {
    if (lam.get<std::string>() != "window_top") throw SpecError("driver lambda: expected a number, array or 'window_top'");
    OperatorSchedule* raw = s.get();
    s->lambda_at = [raw](std::size_t n) {
      const double phi = raw->phi(n, raw->factors_at(n));
      return raw->epsilon + (1.0 - raw->epsilon) / phi;
    };
  } else {
    s->lambda_at = scalar_seq_from(lam, "driver lambda");
  }
  if (params.contains("errors")) {
    std::vector<VectorSeq> errs(s->m);
    for (const auto& e : params.at("errors")) {
      const auto i = e.at("factor").get<std::size_t>();
      if (i < 1 || i > s->m) throw SpecError("driver errors: factor index out of range");
      errs[i - 1] = error_seq_from(e, dim, "driver errors");
    }
    s->errors_at = [errs](std::size_t i, std::size_t n) { return errs[i] ? errs[i](n) : Vector(); };
  }
  if (params.contains("error_budget")) s->error_budget = params.at("error_budget").get<std::vector<double>>();
  const std::size_t horizon = horizon_of(params, stop);
  Prepared p;
  p.validate = [s, horizon] { return validate_schedule(*s, horizon).report; };
  p.run = [s, &inst, stop, horizon](Outcome& o, json& meta) {
    RunOptions opts;
    opts.reference = inst.solution;
    opts.validation_horizon = horizon;
    opts.store_iterates = false;
    IterationTrace t = iterate(*s, inst.x0, stop, opts);
    std::ostringstream os;
    write_trace_csv(os, t);
    o.csv = os.str();
    o.validation = t.validation;
    meta["parameters"] = trace_params(t);
    meta["monitors"] = monitors_json(t);
    meta["result"] = {{"iterations", t.iterations()},
                      {"stop_reason", to_string(t.reason)},
                      {"x_final", vector_to_json(t.x_final)}};
  };
  return p;
}

inline Prepared prepare_fb(const ProblemInstance& inst, const json& params, const StopRule& stop, bool allow,
                           bool extended) {
  if (inst.kind != "fb") throw SpecError("solver 'fb' needs an fb problem, got '" + inst.name + "'");
  const FBProblem& prob = *inst.fb;
  const double beta = prob.b.beta;
  auto fp = std::make_shared<FBParams>();
  fp->metrics = metric_seq_from(params.value("metric", json()), prob.dim(), inst);
  fp->epsilon = params.value("epsilon", extended ? 0.005 : 1e-2);
  fp->mode = extended ? FBMode::extended_step : FBMode::overrelaxed;
  fp->allow_violations = allow;

  const json g = params.value("gamma", json{{"times_beta", 1.0}});
  if (g.is_object() && g.contains("times_beta")) {
    fp->gamma_at = constant_seq(g.at("times_beta").get<double>() * beta);
  } else if (g.is_object() && g.contains("window_fraction")) {
    const double frac = g.at("window_fraction").get<double>();
    const MetricSequence ms = fp->metrics;
    const double eps = fp->epsilon;
    fp->gamma_at = [frac, ms, beta, eps](std::size_t n) { return frac * fb_gamma_top(ms.at(n).norm_ub(), beta, eps); };
  } else {
    fp->gamma_at = scalar_seq_from(g, "fb gamma");
  }

  const std::string lam_key = extended ? "mu" : "lambda";
  const json lam = params.value(lam_key, json(extended ? 0.5 : 1.0));
  if (lam.is_string()) {
    if (extended) throw SpecError("fb_extended mu: expected a number or array");
    const std::string policy = lam.get<std::string>();
    if (policy != "window_top" && policy != "midpoint") {
      throw SpecError("fb lambda: expected a number, array, 'window_top' or 'midpoint'");
    }
    const bool top = policy == "window_top";
    const MetricSequence ms = fp->metrics;
    const ScalarSeq gam = fp->gamma_at;
    const double eps = fp->epsilon;
    fp->lambda_at = [top, ms, gam, beta, eps](std::size_t n) {
      const double hi = fb_lambda_top(gam(n), ms.at(n).norm_ub(), beta, eps);
      return top ? hi : 0.5 * (eps + hi);
    };
  } else {
    fp->lambda_at = scalar_seq_from(lam, "fb " + lam_key);
  }
  if (params.contains("errors")) {
    const json& e = params.at("errors");
    if (e.contains("a")) fp->a_at = error_seq_from(e.at("a"), prob.dim(), "errors.a");
    if (e.contains("b")) fp->b_at = error_seq_from(e.at("b"), prob.dim(), "errors.b");
  }
  const std::size_t horizon = horizon_of(params, stop);
  Prepared p;
  p.validate = [fp, &prob, horizon] { return validate_fb(prob, *fp, horizon); };
  p.run = [fp, &prob, &inst, stop, horizon](Outcome& o, json& meta) {
    RunOptions opts;
    opts.reference = prob.known_solution;
    opts.validation_horizon = horizon;
    opts.store_iterates = false;
    FBResult r = solve_fb(prob, *fp, inst.x0, stop, opts);
    std::ostringstream os;
    write_trace_csv(os, r.trace);
    o.csv = os.str();
    o.validation = r.trace.validation;
    json par = trace_params(r.trace);
    std::vector<double> gam;
    for (std::size_t n = 0; n < r.trace.iterations(); ++n) gam.push_back(fp->gamma_at(n));
    par["gamma"] = compress(gam);
    par["beta"] = prob.b.beta;
    par["epsilon"] = fp->epsilon;
    par["mode"] = to_string(fp->mode);
    meta["parameters"] = par;
    json mon = monitors_json(r.trace);
    const ResidualReport rr = fb_residuals(r);
    mon["fb_residual_sq"] = {{"total", rr.fb_residual.total}, {"consistent", rr.fb_residual.summable_consistent}};
    if (rr.gradient_gap) {
      mon["gradient_gap"] = {{"total", rr.gradient_gap->total}, {"consistent", rr.gradient_gap->summable_consistent}};
    }
    meta["monitors"] = mon;
    meta["result"] = {{"iterations", r.trace.iterations()},
                      {"stop_reason", to_string(r.trace.reason)},
                      {"x_final", vector_to_json(r.x_final)},
                      {"oracle_linf", (r.x_final - inst.solution).cwiseAbs().maxCoeff()},
                      {"oracle_certificate", inst.certificate}};
  };
  return p;
}

inline Prepared prepare_pd(const ProblemInstance& inst, const json& params, const StopRule& stop, bool allow) {
  if (inst.kind != "pd") throw SpecError("solver 'pd' needs a primal-dual problem, got '" + inst.name + "'");
  const CompositeProblem& prob = *inst.pd;
  auto pp = std::make_shared<PDParams>();
  pp->primal_metrics = metric_seq_from(params.value("primal_metric", json()), prob.dim(), inst);
  const json duals = params.value("dual_metrics", json::array());
  if (!duals.is_array()) throw SpecError("pd dual_metrics: expected an array");
  for (std::size_t i = 0; i < prob.m(); ++i) {
    const json d = i < duals.size() ? duals.at(i) : json();
    pp->dual_metrics.push_back(metric_seq_from(d, prob.blocks[i].b.dim, inst));
  }
  pp->epsilon = params.value("epsilon", 1e-2);
  const std::string variant = params.value("zeta_variant", std::string("delta_numerator"));
  if (variant == "delta_numerator") {
    pp->zeta_variant = ZetaVariant::delta_numerator;
  } else if (variant == "as_printed") {
    pp->zeta_variant = ZetaVariant::as_printed;
  } else {
    throw SpecError("zeta_variant must be 'delta_numerator' or 'as_printed'");
  }
  const json lam = params.value("lambda", json("midpoint"));
  if (lam.is_string()) {
    if (lam.get<std::string>() != "midpoint") throw SpecError("pd lambda: expected 'midpoint', a number or an array");
  } else {
    pp->lambda_at = scalar_seq_from(lam, "pd lambda");
  }
  pp->allow_violations = allow;
  const std::size_t horizon = horizon_of(params, stop);
  Prepared p;
  p.validate = [pp, &prob, horizon] { return validate_pd(prob, *pp, horizon); };
  p.run = [pp, &prob, &inst, stop, horizon](Outcome& o, json& meta) {
    RunOptions opts;
    opts.reference = product::pack(inst.solution, inst.dual_solution);
    opts.validation_horizon = horizon;
    opts.store_iterates = false;
    PDResult r = solve_pd(prob, *pp, inst.x0, inst.v0, stop, opts);
    std::ostringstream os;
    write_trace_csv(os, r.trace);
    o.csv = os.str();
    o.validation = r.trace.validation;
    json par = trace_params(r.trace);
    std::vector<double> delta, zeta;
    for (const auto& s : r.steps) {
      delta.push_back(s.delta);
      zeta.push_back(s.zeta);
    }
    par["delta"] = compress(delta);
    par["zeta"] = compress(zeta);
    par["beta"] = prob.beta();
    par["epsilon"] = pp->epsilon;
    par["zeta_variant"] = to_string(pp->zeta_variant);
    meta["parameters"] = par;
    meta["monitors"] = monitors_json(r.trace);
    json vf = json::array();
    for (const auto& v : r.v_final) vf.push_back(vector_to_json(v));
    meta["result"] = {{"iterations", r.trace.iterations()},
                      {"stop_reason", to_string(r.trace.reason)},
                      {"x_final", vector_to_json(r.x_final)},
                      {"v_final", vf},
                      {"kkt", {{"primal", r.final_kkt.primal}, {"dual", r.final_kkt.dual}}},
                      {"oracle_linf", (r.x_final - inst.solution).cwiseAbs().maxCoeff()},
                      {"oracle_certificate", inst.certificate}};
  };
  return p;
}

}  // namespace detail

/// Resolves, validates and (unless validate_only) runs a spec. Never throws;
/// failures are mapped to exit codes.
inline Outcome execute(const json& spec, bool allow_violations, bool validate_only) {
  Outcome o;
  try {
    ProblemInstance inst;
    const json resolved = resolve_spec(spec, &inst);
    const json& params = resolved.at("params");
    const StopRule stop = stop_from(resolved.at("stop"));
    const std::string solver = resolved.at("solver").get<std::string>();
    detail::Prepared prep;
    if (solver == "driver") {
      prep = detail::prepare_driver(inst, params, stop, allow_violations);
    } else if (solver == "pd") {
      prep = detail::prepare_pd(inst, params, stop, allow_violations);
    } else {
      prep = detail::prepare_fb(inst, params, stop, allow_violations, solver == "fb_extended");
    }
    o.validation = prep.validate();
    json meta;
    meta["schema_version"] = kSchemaVersion;
    meta["spec"] = resolved;
    meta["versions"] = {{"msplit", kVersion},
                        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                      "." + std::to_string(EIGEN_MINOR_VERSION)},
                        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    if (validate_only) {
      meta["validation"] = detail::report_to_json(o.validation);
      o.metadata = meta;
      if (!o.validation.passed() && !allow_violations) {
        const Issue& i = *o.validation.first_issue();
        o.code = kHypothesis;
        o.message = i.check + (i.n ? " violated at n=" + std::to_string(*i.n) : std::string(" violated")) + ": " +
                    i.message;
      }
      return o;
    }
    prep.run(o, meta);
    meta["validation"] = detail::report_to_json(o.validation);
    o.metadata = std::move(meta);
    if (!o.validation.passed()) o.message = "hypothesis violations recorded (--allow-violations)";
  } catch (const UnknownProblem& e) {
    o.code = kUsage;
    o.message = e.what();
  } catch (const SpecError& e) {
    o.code = kUsage;
    o.message = e.what();
  } catch (const ParameterWindowError& e) {
    o.code = kHypothesis;
    o.message = e.what();
  } catch (const NumericalError& e) {
    o.code = kNumerical;
    o.message = e.what();
  } catch (const OracleFailure& e) {
    o.code = kNumerical;
    o.message = e.what();
  } catch (const nlohmann::json::exception& e) {
    o.code = kUsage;
    o.message = std::string("spec: ") + e.what();
  } catch (const Error& e) {
    o.code = kUsage;
    o.message = e.what();
  }
  return o;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot read spec '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SpecError("spec '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

/// Output directory: METRIC_SPLITTING_OUT when set (one subdirectory per spec
/// when several run together), otherwise the spec's "output".
inline std::filesystem::path output_dir(const json& resolved, const std::filesystem::path& spec_path, bool many) {
  if (const char* env = std::getenv("METRIC_SPLITTING_OUT"); env && *env) {
    std::filesystem::path base(env);
    return many ? base / spec_path.stem() : base;
  }
  return std::filesystem::path(resolved.at("output").get<std::string>());
}

struct JobResult {
  int code = kOk;
  std::string out;
  std::string err;
};

inline JobResult run_spec_file(const std::filesystem::path& path, bool allow, bool validate_only, bool many) {
  JobResult r;
  json spec;
  try {
    spec = read_json_file(path);
  } catch (const Error& e) {
    r.code = kUsage;
    r.err = std::string("error: ") + e.what() + "\n";
    return r;
  }
  Outcome o = execute(spec, allow, validate_only);
  r.code = o.code;
  std::ostringstream out, err;
  if (validate_only) {
    out << path.string() << ": " << o.validation;
    if (o.code != kOk) err << "error: " << o.message << '\n';
    if (o.code == kOk && !o.validation.passed()) err << "warning: hypothesis violations (--allow-violations)\n";
    r.out = out.str();
    r.err = err.str();
    return r;
  }
  if (o.code != kOk) {
    err << "error: " << path.string() << ": " << o.message << '\n';
    r.err = err.str();
    return r;
  }
  try {
    const auto dir = output_dir(o.metadata.at("spec"), path, many);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "trace.csv", std::ios::binary) << o.csv;
    std::ofstream(dir / "metadata.json", std::ios::binary) << o.metadata.dump(2) << '\n';
    const json& res = o.metadata.at("result");
    out << "ok: " << path.string() << " -> " << dir.string() << " (" << res.at("iterations").get<std::size_t>()
        << " iterations, stop=" << res.at("stop_reason").get<std::string>() << ")\n";
  } catch (const std::exception& e) {
    r.code = kUsage;
    err << "error: writing output for " << path.string() << ": " << e.what() << '\n';
  }
  if (!o.message.empty()) err << "warning: " << path.string() << ": " << o.message << '\n';
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Runs every spec, `jobs` at a time; output is printed in input order and
/// the exit code is the largest one seen.
inline int run_batch(const std::vector<std::string>& specs, bool allow, bool validate_only, unsigned jobs) {
  std::vector<JobResult> results(specs.size());
  std::atomic<std::size_t> next{0};
  const bool many = specs.size() > 1;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < specs.size();) {
      results[i] = run_spec_file(specs[i], allow, validate_only, many);
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(specs.size())));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  int code = kOk;
  for (const auto& r : results) {
    std::cout << r.out;
    std::cerr << r.err;
    code = std::max(code, r.code);
  }
  return code;
}

inline void list_problems(std::ostream& os) {
  for (const auto& e : problem_registry()) os << e.name << " [" << e.kind << "]  " << e.description << '\n';
}

}  // namespace msplit::cli

#endif  // MSPLIT_CLI_HPP

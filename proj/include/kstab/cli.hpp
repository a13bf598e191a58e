#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <climits>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kstab/fibration.hpp"

namespace kstab::cli {

using nlohmann::json;

struct SolverConfig {
  int grid_n = 4096;
  int degree = 0;  // 0 picks the smallest admissible certificate degree
  double fd_step = 0;
  double tolerance = 1e-9;
  double mabuchi_margin = 1e-5;
  int mabuchi_subdivisions = 0;
};

struct OutputConfig {
  std::string report_path;  // empty writes the report to stdout
  std::string csv_path;     // empty skips plot data
  bool pretty = true;
};

struct RunConfig {
  std::vector<std::vector<long long>> normals;
  std::vector<Rational> offsets;
  Polytope<Rational> polytope;
  std::optional<FibrationData<Rational>> fibration;
  std::optional<std::pair<Polynomial<Rational>, Polynomial<Rational>>> weights;
  FutakiSign sign = FutakiSign::kConsistent;
  SolverConfig solver;
  ScanOptions scan;
  std::optional<std::vector<std::vector<Rational>>> sweep;
  std::optional<TestFunction<Rational>> function;
  json function_json;
  std::optional<SymplecticPotential<Rational>> potential;
  json potential_json;
  OutputConfig output;
};

namespace detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& message) {
  throw Error(path.empty() ? "config: " + message : "config." + path + ": " + message);
}

inline void check_keys(const json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) fail(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
  }
}

/// Doubles convert exactly: 53-bit mantissa times a power of two.
inline Rational rational_from_double(double x, const std::string& path) {
  if (!std::isfinite(x)) fail(path, "number must be finite");
  if (x == 0) return Rational(0);
  int e = 0;
  double m = std::frexp(x, &e);
  long long mant = std::llround(std::ldexp(m, 53));
  e -= 53;
  Rational r(mant);
  for (; e > 0; --e) r *= 2;
  for (; e < 0; ++e) r /= 2;
  return r;
}

inline Rational parse_rational(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) {
    auto v = j.get<unsigned long long>();
    if (v > static_cast<unsigned long long>(LLONG_MAX)) fail(path, "integer out of range");
    return Rational(static_cast<long long>(v));
  }
  if (j.is_number_integer()) return Rational(j.get<long long>());
  if (j.is_number_float()) return rational_from_double(j.get<double>(), path);
  if (j.is_string()) {
    try {
      Rational r(j.get<std::string>());
      return r;
    } catch (const std::exception&) {
      fail(path, "expected a rational like \"3/4\"");
    }
  }
  fail(path, "expected a number or a rational string");
}

inline long long parse_integer(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) {
    auto v = j.get<unsigned long long>();
    if (v > static_cast<unsigned long long>(LLONG_MAX)) fail(path, "integer out of range");
    return static_cast<long long>(v);
  }
  if (j.is_number_integer()) return j.get<long long>();
  fail(path, "expected an integer");
}

inline double parse_number(const json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  fail(path, "expected a number");
}

inline std::string parse_string(const json& j, const std::string& path) {
  if (j.is_string()) return j.get<std::string>();
  fail(path, "expected a string");
}

inline Polynomial<Rational> parse_poly(const json& j, const std::string& path, int nvars) {
  if (!j.is_object() || !j.contains("terms") || !j["terms"].is_array())
    fail(path, "expected an object with a terms array");
  Polynomial<Rational> q(nvars);
  const json& terms = j["terms"];
  for (std::size_t i = 0; i < terms.size(); ++i) {
    std::string tp = path + ".terms[" + std::to_string(i) + "]";
    const json& t = terms[i];
    if (!t.is_object()) fail(tp, "expected an object {e, c}");
    check_keys(t, tp, {"e", "c"});
    if (!t.contains("e") || !t["e"].is_array() || static_cast<int>(t["e"].size()) != nvars)
      fail(tp + ".e", "expected an exponent array of length " + std::to_string(nvars));
    Exponents e{};
    for (int k = 0; k < nvars; ++k) {
      long long v = parse_integer(t["e"][static_cast<std::size_t>(k)],
                                  tp + ".e[" + std::to_string(k) + "]");
      if (v < 0 || v > 64) fail(tp + ".e[" + std::to_string(k) + "]", "exponent out of range");
      e[static_cast<std::size_t>(k)] = static_cast<int>(v);
    }
    if (!t.contains("c")) fail(tp, "missing coefficient c");
    q.add_term(e, parse_rational(t["c"], tp + ".c"));
  }
  return q;
}

inline Vec<Rational> parse_rational_vector(const json& j, const std::string& path,
                                           std::size_t size) {
  if (!j.is_array() || j.size() != size)
    fail(path, "expected an array of length " + std::to_string(size));
  Vec<Rational> out(size);
  for (std::size_t i = 0; i < size; ++i)
    out[i] = parse_rational(j[i], path + "[" + std::to_string(i) + "]");
  return out;
}

inline void parse_polytope_section(const json& root, RunConfig& cfg) {
  if (!root.contains("polytope")) fail("polytope", "section required");
  const json& p = root["polytope"];
  if (!p.is_object()) fail("polytope", "expected an object");
  check_keys(p, "polytope", {"normals", "offsets"});
  if (!p.contains("normals") || !p["normals"].is_array() || p["normals"].empty())
    fail("polytope.normals", "expected a non-empty array of integer arrays");
  const json& normals = p["normals"];
  std::size_t dim = 0;
  for (std::size_t i = 0; i < normals.size(); ++i) {
    std::string np = "polytope.normals[" + std::to_string(i) + "]";
    if (!normals[i].is_array() || normals[i].empty()) fail(np, "expected an integer array");
    if (i == 0) dim = normals[i].size();
    if (normals[i].size() != dim) fail(np, "inconsistent dimension");
    std::vector<long long> row;
    for (std::size_t k = 0; k < dim; ++k)
      row.push_back(parse_integer(normals[i][k], np + "[" + std::to_string(k) + "]"));
    cfg.normals.push_back(std::move(row));
  }
  if (!p.contains("offsets")) fail("polytope.offsets", "required");
  cfg.offsets = parse_rational_vector(p["offsets"], "polytope.offsets", normals.size());
  try {
    cfg.polytope = build_polytope<Rational>(cfg.normals, cfg.offsets);
  } catch (const Error& e) {
    fail("polytope", e.what());
  }
}

inline FibrationData<Rational> parse_fibration(const json& f, int dim) {
  if (!f.is_object()) fail("fibration", "expected an object");
  check_keys(f, "fibration", {"factors"});
  if (!f.contains("factors") || !f["factors"].is_array() || f["factors"].empty())
    fail("fibration.factors", "expected a non-empty array");
  FibrationData<Rational> fib;
  const json& factors = f["factors"];
  for (std::size_t a = 0; a < factors.size(); ++a) {
    std::string fp = "fibration.factors[" + std::to_string(a) + "]";
    const json& t = factors[a];
    if (!t.is_object()) fail(fp, "expected an object");
    check_keys(t, fp, {"p", "c", "d", "scal", "genus", "area"});
    FibrationFactor<Rational> factor;
    if (!t.contains("p") || !t["p"].is_array() || static_cast<int>(t["p"].size()) != dim)
      fail(fp + ".p", "expected an integer array of length " + std::to_string(dim));
    for (std::size_t k = 0; k < t["p"].size(); ++k)
      factor.p.push_back(parse_integer(t["p"][k], fp + ".p[" + std::to_string(k) + "]"));
    if (!t.contains("c")) fail(fp + ".c", "required");
    factor.c = parse_rational(t["c"], fp + ".c");
    factor.d = 1;
    if (t.contains("d")) {
      long long d = parse_integer(t["d"], fp + ".d");
      if (d < 1 || d > 16) fail(fp + ".d", "base dimension must be in [1, 16]");
      factor.d = static_cast<int>(d);
    }
    if (t.contains("genus")) {
      if (t.contains("scal")) fail(fp, "give either scal or genus/area, not both");
      if (!t.contains("area")) fail(fp + ".area", "required together with genus");
      long long genus = parse_integer(t["genus"], fp + ".genus");
      if (genus < 0 || genus > 1000) fail(fp + ".genus", "out of range");
      Rational area = parse_rational(t["area"], fp + ".area");
      if (!(area > Rational(0))) fail(fp + ".area", "must be positive");
      factor.scal = curve_scal(static_cast<int>(genus), area);
    } else if (t.contains("scal")) {
      factor.scal = parse_rational(t["scal"], fp + ".scal");
    }
    fib.factors.push_back(std::move(factor));
  }
  return fib;
}

inline void parse_solver_section(const json& s, SolverConfig& out, FutakiSign& sign) {
  if (!s.is_object()) fail("solver", "expected an object");
  check_keys(s, "solver",
             {"grid_n", "degree", "fd_step", "tolerance", "futaki_sign", "mabuchi_margin",
              "mabuchi_subdivisions"});
  if (s.contains("grid_n")) {
    long long n = parse_integer(s["grid_n"], "solver.grid_n");
    if (n < 16 || n > (1 << 22)) fail("solver.grid_n", "grid size must be in [16, 4194304]");
    out.grid_n = static_cast<int>(n);
  }
  if (s.contains("degree")) {
    long long d = parse_integer(s["degree"], "solver.degree");
    if (d < 0 || d > 32) fail("solver.degree", "degree must be in [0, 32]");
    out.degree = static_cast<int>(d);
  }
  if (s.contains("fd_step")) {
    out.fd_step = parse_number(s["fd_step"], "solver.fd_step");
    if (out.fd_step < 0) fail("solver.fd_step", "must be nonnegative (0 = automatic)");
  }
  if (s.contains("tolerance")) {
    out.tolerance = parse_number(s["tolerance"], "solver.tolerance");
    if (!(out.tolerance > 0)) fail("solver.tolerance", "must be positive");
  }
  if (s.contains("mabuchi_margin")) {
    out.mabuchi_margin = parse_number(s["mabuchi_margin"], "solver.mabuchi_margin");
    if (!(out.mabuchi_margin > 0)) fail("solver.mabuchi_margin", "must be positive");
  }
  if (s.contains("mabuchi_subdivisions")) {
    long long n = parse_integer(s["mabuchi_subdivisions"], "solver.mabuchi_subdivisions");
    if (n < 0 || n > 100000) fail("solver.mabuchi_subdivisions", "out of range");
    out.mabuchi_subdivisions = static_cast<int>(n);
  }
  if (s.contains("futaki_sign")) {
    std::string v = parse_string(s["futaki_sign"], "solver.futaki_sign");
    if (v == "consistent")
      sign = FutakiSign::kConsistent;
    else if (v == "paper")
      sign = FutakiSign::kPaper;
    else
      fail("solver.futaki_sign", "expected \"consistent\" or \"paper\"");
  }
}

inline void parse_scan_section(const json& s, ScanOptions& out) {
  if (!s.is_object()) fail("scan", "expected an object");
  check_keys(s, "scan", {"directions", "offsets", "refine_top", "refine_iters", "margin"});
  auto read_int = [&](const char* key, int lo, int hi, int& slot) {
    if (!s.contains(key)) return;
    long long v = parse_integer(s[key], std::string("scan.") + key);
    if (v < lo || v > hi)
      fail(std::string("scan.") + key,
           "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    slot = static_cast<int>(v);
  };
  read_int("directions", 1, 100000, out.directions);
  read_int("offsets", 1, 100000, out.offsets);
  read_int("refine_top", 0, 1000, out.refine_top);
  read_int("refine_iters", 0, 10000, out.refine_iters);
  if (s.contains("margin")) {
    out.margin = parse_number(s["margin"], "scan.margin");
    if (!(out.margin > 0) || out.margin >= 0.5) fail("scan.margin", "must lie in (0, 0.5)");
  }
}

inline void parse_function_section(const json& f, RunConfig& cfg) {
  if (!f.is_object() || !f.contains("type")) fail("function", "expected an object with a type");
  const std::size_t dim = static_cast<std::size_t>(cfg.polytope.dim);
  std::string type = parse_string(f["type"], "function.type");
  if (type == "crease") {
    check_keys(f, "function", {"type", "h", "c"});
    if (!f.contains("h") || !f.contains("c")) fail("function", "crease needs h and c");
    Vec<Rational> h = parse_rational_vector(f["h"], "function.h", dim);
    Rational c = parse_rational(f["c"], "function.c");
    bool all_zero = true;
    for (const auto& hi : h) all_zero = all_zero && hi == Rational(0);
    if (all_zero) fail("function.h", "crease direction must be nonzero");
    json hj = json::array();
    for (const auto& hi : h) hj.push_back(hi.str());
    cfg.function_json = {{"type", "crease"}, {"h", hj}, {"c", c.str()}};
    cfg.function = crease_function(std::move(h), std::move(c));
  } else if (type == "affine") {
    check_keys(f, "function", {"type", "normal", "offset"});
    if (!f.contains("normal") || !f.contains("offset"))
      fail("function", "affine needs normal and offset");
    Vec<Rational> n = parse_rational_vector(f["normal"], "function.normal", dim);
    Rational c = parse_rational(f["offset"], "function.offset");
    json nj = json::array();
    for (const auto& ni : n) nj.push_back(ni.str());
    cfg.function_json = {{"type", "affine"}, {"normal", nj}, {"offset", c.str()}};
    cfg.function = affine_function(AffineFunc<Rational>(std::move(n), std::move(c)));
  } else if (type == "plmax") {
    check_keys(f, "function", {"type", "pieces"});
    if (!f.contains("pieces") || !f["pieces"].is_array() || f["pieces"].empty())
      fail("function.pieces", "expected a non-empty array");
    std::vector<AffineFunc<Rational>> pieces;
    json pj = json::array();
    for (std::size_t i = 0; i < f["pieces"].size(); ++i) {
      std::string pp = "function.pieces[" + std::to_string(i) + "]";
      const json& piece = f["pieces"][i];
      if (!piece.is_object()) fail(pp, "expected an object");
      check_keys(piece, pp, {"normal", "offset"});
      if (!piece.contains("normal") || !piece.contains("offset"))
        fail(pp, "needs normal and offset");
      Vec<Rational> n = parse_rational_vector(piece["normal"], pp + ".normal", dim);
      Rational c = parse_rational(piece["offset"], pp + ".offset");
      json nj = json::array();
      for (const auto& ni : n) nj.push_back(ni.str());
      pj.push_back({{"normal", nj}, {"offset", c.str()}});
      pieces.emplace_back(std::move(n), std::move(c));
    }
    cfg.function_json = {{"type", "plmax"}, {"pieces", pj}};
    cfg.function = plmax_function(std::move(pieces));
  } else if (type == "poly") {
    check_keys(f, "function", {"type", "terms"});
    Polynomial<Rational> q = parse_poly(f, "function", cfg.polytope.dim);
    cfg.function_json = {{"type", "poly"}, {"terms", json::object()}};
    cfg.function = poly_function(q);
  } else {
    fail("function.type", "expected crease, affine, plmax, or poly");
  }
}

inline void parse_potential_section(const json& u, RunConfig& cfg) {
  if (!u.is_object() || !u.contains("type")) fail("potential", "expected an object with a type");
  std::string type = parse_string(u["type"], "potential.type");
  if (type == "guillemin") {
    check_keys(u, "potential", {"type"});
    cfg.potential = guillemin_potential(cfg.polytope);
    cfg.potential_json = {{"type", "guillemin"}};
  } else if (type == "poly") {
    check_keys(u, "potential", {"type", "terms"});
    Polynomial<Rational> corr = parse_poly(u, "potential", cfg.polytope.dim);
    cfg.potential = poly_potential(cfg.polytope, corr);
    cfg.potential_json = {{"type", "poly"}, {"terms", json::object()}};
  } else {
    fail("potential.type", "expected guillemin or poly");
  }
}

inline json poly_to_json(const Polynomial<Rational>& q) {
  json terms = json::array();
  for (const auto& [e, c] : q.terms()) {
    json je = json::array();
    for (int k = 0; k < q.nvars(); ++k) je.push_back(e[static_cast<std::size_t>(k)]);
    terms.push_back({{"e", je}, {"c", c.str()}});
  }
  return {{"terms", terms}};
}

}  // namespace detail

/// Parses and validates a config document; throws Error with the offending
/// field path on any violation.
inline RunConfig parse_config(const json& root) {
  if (!root.is_object()) throw Error("config: expected a JSON object");
  detail::check_keys(root, "",
                     {"polytope", "fibration", "weights", "solver", "scan", "scenario",
                      "function", "potential", "output"});
  RunConfig cfg;
  detail::parse_polytope_section(root, cfg);

  const bool has_fib = root.contains("fibration");
  const bool has_w = root.contains("weights");
  if (has_fib == has_w)
    detail::fail("", "exactly one of the sections fibration and weights is required");
  if (has_fib) cfg.fibration = detail::parse_fibration(root["fibration"], cfg.polytope.dim);
  if (has_w) {
    const json& w = root["weights"];
    if (!w.is_object()) detail::fail("weights", "expected an object");
    detail::check_keys(w, "weights", {"v", "w"});
    if (!w.contains("v") || !w.contains("w")) detail::fail("weights", "needs both v and w");
    cfg.weights = {detail::parse_poly(w["v"], "weights.v", cfg.polytope.dim),
                   detail::parse_poly(w["w"], "weights.w", cfg.polytope.dim)};
  }

  if (root.contains("solver")) detail::parse_solver_section(root["solver"], cfg.solver, cfg.sign);
  if (root.contains("scan")) detail::parse_scan_section(root["scan"], cfg.scan);

  if (root.contains("scenario")) {
    if (!cfg.fibration) detail::fail("scenario", "requires the fibration section");
    const json& sc = root["scenario"];
    if (!sc.is_object()) detail::fail("scenario", "expected an object");
    detail::check_keys(sc, "scenario", {"sweep"});
    if (!sc.contains("sweep") || !sc["sweep"].is_array() || sc["sweep"].empty())
      detail::fail("scenario.sweep", "expected a non-empty array of class tuples");
    std::vector<std::vector<Rational>> sweep;
    for (std::size_t i = 0; i < sc["sweep"].size(); ++i) {
      auto tuple = detail::parse_rational_vector(sc["sweep"][i],
                                                 "scenario.sweep[" + std::to_string(i) + "]",
                                                 cfg.fibration->factors.size());
      sweep.push_back(std::move(tuple));
    }
    cfg.sweep = std::move(sweep);
  }

  if (root.contains("function")) detail::parse_function_section(root["function"], cfg);
  if (root.contains("potential")) detail::parse_potential_section(root["potential"], cfg);

  if (root.contains("output")) {
    const json& o = root["output"];
    if (!o.is_object()) detail::fail("output", "expected an object");
    detail::check_keys(o, "output", {"report", "csv", "pretty"});
    if (o.contains("report"))
      cfg.output.report_path = detail::parse_string(o["report"], "output.report");
    if (o.contains("csv")) cfg.output.csv_path = detail::parse_string(o["csv"], "output.csv");
    if (o.contains("pretty")) {
      if (!o["pretty"].is_boolean()) detail::fail("output.pretty", "expected a boolean");
      cfg.output.pretty = o["pretty"].get<bool>();
    }
  }
  return cfg;
}

/// Canonical serialization; parse_config(config_to_json(cfg)) reproduces cfg.
inline json config_to_json(const RunConfig& cfg) {
  json j;
  json offs = json::array();
  for (const auto& o : cfg.offsets) offs.push_back(o.str());
  j["polytope"] = {{"normals", cfg.normals}, {"offsets", offs}};

  if (cfg.fibration) {
    json factors = json::array();
    for (const auto& f : cfg.fibration->factors)
      factors.push_back(
          {{"p", f.p}, {"c", f.c.str()}, {"d", f.d}, {"scal", f.scal.str()}});
    j["fibration"] = {{"factors", factors}};
  }
  if (cfg.weights)
    j["weights"] = {{"v", detail::poly_to_json(cfg.weights->first)},
                    {"w", detail::poly_to_json(cfg.weights->second)}};

  j["solver"] = {{"grid_n", cfg.solver.grid_n},
                 {"degree", cfg.solver.degree},
                 {"fd_step", cfg.solver.fd_step},
                 {"tolerance", cfg.solver.tolerance},
                 {"mabuchi_margin", cfg.solver.mabuchi_margin},
                 {"mabuchi_subdivisions", cfg.solver.mabuchi_subdivisions},
                 {"futaki_sign", cfg.sign == FutakiSign::kConsistent ? "consistent" : "paper"}};
  j["scan"] = {{"directions", cfg.scan.directions},
               {"offsets", cfg.scan.offsets},
               {"refine_top", cfg.scan.refine_top},
               {"refine_iters", cfg.scan.refine_iters},
               {"margin", cfg.scan.margin}};

  if (cfg.sweep) {
    json sweep = json::array();
    for (const auto& tuple : *cfg.sweep) {
      json row = json::array();
      for (const auto& c : tuple) row.push_back(c.str());
      sweep.push_back(row);
    }
    j["scenario"] = {{"sweep", sweep}};
  }
  if (cfg.function) {
    j["function"] = cfg.function_json;
    if (cfg.function->kind == TestFunctionKind::kPoly)
      j["function"]["terms"] = detail::poly_to_json(cfg.function->poly)["terms"];
  }
  if (cfg.potential) {
    j["potential"] = cfg.potential_json;
    if (cfg.potential->kind == PotentialKind::kPoly)
      j["potential"]["terms"] = detail::poly_to_json(cfg.potential->correction)["terms"];
  }
  j["output"] = {{"report", cfg.output.report_path},
                 {"csv", cfg.output.csv_path},
                 {"pretty", cfg.output.pretty}};
  return j;
}

struct RunResult {
  int exit_code = 0;
  json report;
  std::vector<std::string> csv_header;
  std::vector<std::vector<std::string>> csv_rows;
  OutputConfig output;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json finite_or_text(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "infinite" : "-infinite";
}

inline const char* verdict_name(CertifyVerdict v) {
  switch (v) {
    case CertifyVerdict::kExists: return "EXISTS";
    case CertifyVerdict::kNotStable: return "NOT_STABLE";
    default: return "UNDECIDED";
  }
}

inline const char* ak_verdict_name(AKVerdict v) {
  switch (v) {
    case AKVerdict::kPositive: return "POSITIVE";
    case AKVerdict::kIndefinite: return "INDEFINITE";
    default: return "INFEASIBLE";
  }
}

inline WeightSystem<Rational> build_ws(const RunConfig& cfg) {
  if (cfg.fibration) return build_weight_system(cfg.polytope, *cfg.fibration, cfg.sign);
  return weight_system_from_polynomials(cfg.polytope, cfg.weights->first, cfg.weights->second,
                                        cfg.sign);
}

inline const FibrationData<Rational>& require_fibration(const RunConfig& cfg,
                                                        const char* command) {
  if (!cfg.fibration)
    throw Error(std::string(command) + ": the fibration section is required");
  return *cfg.fibration;
}

inline json affine_to_json(const AffineFunc<Rational>& a) {
  json n = json::array();
  json nd = json::array();
  for (const auto& x : a.normal) {
    n.push_back(x.str());
    nd.push_back(to_double(x));
  }
  return {{"normal", n},
          {"offset", a.offset.str()},
          {"normal_double", nd},
          {"offset_double", to_double(a.offset)}};
}

inline json crease_to_json(const CreaseSample<Rational>& s) {
  json h = json::array();
  for (const auto& x : s.h) h.push_back(x.str());
  return {{"h", h},
          {"c", s.c.str()},
          {"futaki", s.futaki_value},
          {"l1", s.l1},
          {"ratio", s.ratio}};
}

inline json scan_to_json(const StabilityReport<Rational>& rep, std::size_t cap = 50) {
  json negs = json::array();
  for (std::size_t i = 0; i < rep.negatives.size() && i < cap; ++i)
    negs.push_back(crease_to_json(rep.negatives[i]));
  return {{"lambda_hat", rep.lambda_hat},
          {"samples", rep.samples},
          {"worst", crease_to_json(rep.worst)},
          {"negatives", negs},
          {"negatives_count", rep.negatives.size()}};
}

inline json solve1d_to_json(const SolveReport1D<Rational>& r) {
  json out = {{"phi", poly_to_json(r.phi)},
              {"positive", r.positive},
              {"min_interior", r.min_interior},
              {"argmin", r.argmin}};
  if (r.u_recovered) {
    const auto& g = r.u_recovered->grid;
    out["grid"] = {{"n", g.values.size()}, {"lo", g.lo}, {"hi", g.hi}};
  }
  return out;
}

inline json ak_to_json(const AKCertificate<Rational>& c) {
  json argmin = json::array();
  for (double x : c.argmin) argmin.push_back(x);
  return {{"verdict", ak_verdict_name(c.verdict)},
          {"degree", c.degree},
          {"phi",
           {{"entry00", poly_to_json(c.phi_field.at(0, 0))},
            {"entry01", poly_to_json(c.phi_field.at(0, 1))},
            {"entry11", poly_to_json(c.phi_field.at(1, 1))}}},
          {"min_eig", c.min_eig},
          {"argmin", argmin},
          {"min_facet_quotient", c.min_facet_quotient},
          {"system",
           {{"rows", c.rows}, {"cols", c.cols}, {"rank", c.rank}, {"kernel_dim", c.kernel_dim}}}};
}

inline void scan_csv(const StabilityReport<Rational>& rep, int dim, RunResult& res) {
  res.csv_header.clear();
  for (int i = 0; i < dim; ++i) res.csv_header.push_back("h" + std::to_string(i));
  res.csv_header.insert(res.csv_header.end(), {"c", "futaki", "l1", "ratio"});
  for (const auto& s : rep.negatives) {
    std::vector<std::string> row;
    for (const auto& x : s.h) row.push_back(fmt(to_double(x)));
    row.push_back(fmt(to_double(s.c)));
    row.push_back(fmt(s.futaki_value));
    row.push_back(fmt(s.l1));
    row.push_back(fmt(s.ratio));
    res.csv_rows.push_back(std::move(row));
  }
}

inline void cmd_check_delzant(const RunConfig& cfg, RunResult& res) {
  auto rep = check_delzant(cfg.polytope);
  json vertices = json::array();
  for (const auto& v : cfg.polytope.vertices) {
    json vert = json::array();
    for (const auto& x : v) vert.push_back(x.str());
    vertices.push_back(vert);
  }
  json issues = json::array();
  std::string summary;
  for (const auto& issue : rep.issues) {
    issues.push_back({{"message", issue.message},
                      {"vertex", issue.vertex},
                      {"active_labels", issue.active_labels},
                      {"abs_det", issue.abs_det}});
    if (!summary.empty()) summary += "; ";
    summary += issue.message;
  }
  res.report["verdict"] = rep.delzant ? "DELZANT" : "NOT_DELZANT";
  res.report["evidence"] = {{"dim", cfg.polytope.dim},
                            {"facets", cfg.polytope.labels.size()},
                            {"vertices", vertices},
                            {"issues", issues}};
  if (!rep.delzant) {
    res.report["error"] = summary;
    res.exit_code = 1;
  }
}

inline void cmd_extremal(const RunConfig& cfg, RunResult& res) {
  require_fibration(cfg, "extremal");
  auto ws = build_ws(cfg);
  res.report["verdict"] = "OK";
  res.report["evidence"] = {{"ell_ext", affine_to_json(*ws.ell_ext)},
                            {"v", poly_to_json(ws.v)},
                            {"w", poly_to_json(ws.w)},
                            {"base_term", poly_to_json(ws.base_term)}};
  res.report["residuals"] = {{"affine_vanishing", max_affine_residual(cfg.polytope, ws)}};
}

inline void cmd_futaki(const RunConfig& cfg, RunResult& res) {
  if (!cfg.function) throw Error("futaki: the function section is required");
  auto ws = build_ws(cfg);
  Rational value = futaki(cfg.polytope, ws, *cfg.function);
  json evidence = {{"function", cfg.function_json},
                   {"futaki", value.str()},
                   {"futaki_double", to_double(value)}};
  try {
    auto star = normalize(cfg.polytope, *cfg.function);
    Rational l1 = l1_norm(cfg.polytope, star);
    evidence["l1"] = l1.str();
    if (l1 > Rational(0)) evidence["ratio"] = to_double(value) / to_double(l1);
  } catch (const Error& e) {
    evidence["l1_error"] = e.what();
  }
  res.report["verdict"] = "OK";
  res.report["evidence"] = std::move(evidence);
  res.report["residuals"] = {{"affine_vanishing", max_affine_residual(cfg.polytope, ws)}};
}

inline void cmd_stability_scan(const RunConfig& cfg, RunResult& res) {
  auto ws = build_ws(cfg);
  auto rep = stability_scan(cfg.polytope, ws, cfg.scan);
  bool clean = rep.negatives.empty();
  res.report["verdict"] = clean ? "NO_DESTABILIZER" : "NOT_STABLE";
  res.report["evidence"] = scan_to_json(rep);
  res.report["residuals"] = {{"affine_vanishing", max_affine_residual(cfg.polytope, ws)}};
  if (!clean) res.exit_code = 2;
  scan_csv(rep, cfg.polytope.dim, res);
}

inline void cmd_solve_1d(const RunConfig& cfg, RunResult& res) {
  auto ws = build_ws(cfg);
  auto rep = solve_1d(cfg.polytope, ws, cfg.solver.grid_n);
  res.report["verdict"] = rep.positive ? "POSITIVE" : "NOT_POSITIVE";
  res.report["evidence"] = solve1d_to_json(rep);
  res.report["residuals"] = {
      {"beta", rep.residual_beta}, {"slope", rep.residual_slope}, {"fd", rep.fd_residual}};
  if (rep.u_recovered) {
    const auto& g = rep.u_recovered->grid;
    res.csv_header = {"x", "phi", "correction"};
    for (std::size_t k = 0; k < g.values.size(); ++k) {
      double x = g.lo + static_cast<double>(k) * g.spacing();
      res.csv_rows.push_back({fmt(x), fmt(rep.phi.eval_double({x})), fmt(g.values[k])});
    }
  }
}

inline void cmd_solve_ak(const RunConfig& cfg, RunResult& res) {
  auto ws = build_ws(cfg);
  auto cert = solve_ak(cfg.polytope, ws, cfg.solver.degree);
  res.report["verdict"] = ak_verdict_name(cert.verdict);
  res.report["evidence"] = ak_to_json(cert);
  res.report["residuals"] = {{"pde", cert.pde_residual}, {"bc", cert.bc_residual}};
  if (cert.verdict == AKVerdict::kInfeasible) return;

  auto [lo, hi] = bounding_box(cfg.polytope);
  const int per_axis = 24;
  res.csv_header = {"x", "y", "phi00", "phi01", "phi11", "min_eig_quotient"};
  for (int i = 0; i < per_axis; ++i)
    for (int j = 0; j < per_axis; ++j) {
      Vec<Rational> pt{
          Rational(lo[0] + Rational(2 * i + 1, 2 * per_axis) * (hi[0] - lo[0])),
          Rational(lo[1] + Rational(2 * j + 1, 2 * per_axis) * (hi[1] - lo[1]))};
      bool interior = true;
      for (const auto& label : cfg.polytope.labels)
        if (!(label.eval(pt) > Rational(0))) {
          interior = false;
          break;
        }
      if (!interior) continue;
      std::vector<double> x{to_double(pt[0]), to_double(pt[1])};
      double vq = to_double(ws.v.eval(pt));
      double a = cert.phi_field.at(0, 0).eval_double(x);
      double b = cert.phi_field.at(0, 1).eval_double(x);
      double c = cert.phi_field.at(1, 1).eval_double(x);
      double mean = (a + c) / (2 * vq);
      double rad = std::sqrt(((a - c) / (2 * vq)) * ((a - c) / (2 * vq)) + (b / vq) * (b / vq));
      res.csv_rows.push_back(
          {fmt(x[0]), fmt(x[1]), fmt(a), fmt(b), fmt(c), fmt(mean - rad)});
    }
}

inline void cmd_certify(const RunConfig& cfg, RunResult& res) {
  auto ws = build_ws(cfg);
  auto out = certify(cfg.polytope, ws, cfg.scan);
  res.report["verdict"] = verdict_name(out.verdict);
  json residuals = {{"affine_vanishing", max_affine_residual(cfg.polytope, ws)}};
  json evidence = {{"certificate_hash", certificate_hash(out)},
                   {"scan", scan_to_json(out.scan)}};
  if (!out.scope_note.empty()) evidence["scope_note"] = out.scope_note;
  if (!out.solver_error.empty()) evidence["solver_error"] = out.solver_error;
  if (out.solve1d) {
    evidence["solve1d"] = solve1d_to_json(*out.solve1d);
    residuals["beta"] = out.solve1d->residual_beta;
    residuals["slope"] = out.solve1d->residual_slope;
    residuals["fd"] = out.solve1d->fd_residual;
  }
  if (out.ak) {
    evidence["ak"] = ak_to_json(*out.ak);
    residuals["pde"] = out.ak->pde_residual;
    residuals["bc"] = out.ak->bc_residual;
  }
  res.report["evidence"] = std::move(evidence);
  res.report["residuals"] = std::move(residuals);
  if (out.verdict == CertifyVerdict::kNotStable) res.exit_code = 2;
  scan_csv(out.scan, cfg.polytope.dim, res);
}

inline void cmd_mabuchi(const RunConfig& cfg, RunResult& res) {
  auto ws = build_ws(cfg);
  SymplecticPotential<Rational> u =
      cfg.potential ? *cfg.potential : guillemin_potential(cfg.polytope);
  MabuchiOptions opts;
  opts.margin = cfg.solver.mabuchi_margin;
  opts.subdivisions = cfg.solver.mabuchi_subdivisions;
  double value = mabuchi_energy(cfg.polytope, ws, u, opts);
  double fut = futaki_of_potential(cfg.polytope, ws, u);
  res.report["verdict"] = "OK";
  res.report["evidence"] = {
      {"value", finite_or_text(value)},
      {"futaki", fut},
      {"potential", cfg.potential ? cfg.potential_json : json{{"type", "guillemin"}}}};
  res.report["residuals"] = {{"affine_vanishing", max_affine_residual(cfg.polytope, ws)}};
}

inline void cmd_scenario(const RunConfig& cfg, RunResult& res) {
  require_fibration(cfg, "scenario");
  if (!cfg.sweep) throw Error("scenario: the scenario section is required");
  FibrationScenario<Rational> sc;
  sc.fiber = cfg.polytope;
  sc.fib = *cfg.fibration;
  sc.class_sweep = *cfg.sweep;
  auto rep = calabi_dream_check(sc, cfg.scan);

  json classes = json::array();
  res.csv_header.clear();
  for (std::size_t a = 0; a < sc.fib.factors.size(); ++a)
    res.csv_header.push_back("c" + std::to_string(a));
  res.csv_header.insert(res.csv_header.end(), {"verdict", "lambda_hat", "fiber_volume"});
  for (const auto& cls : rep.classes) {
    json cj = json::array();
    std::vector<std::string> row;
    for (const auto& c : cls.c) {
      cj.push_back(c.str());
      row.push_back(fmt(to_double(c)));
    }
    json entry = {{"c", cj},
                  {"verdict", verdict_name(cls.verdict)},
                  {"lambda_hat", cls.lambda_hat},
                  {"fiber_volume", cls.fiber_volume.str()},
                  {"volume", cls.fiber_volume.str() + " " + rep.volume_note},
                  {"certificate_hash", cls.certificate_hash}};
    if (cls.destabilizer) entry["destabilizer"] = crease_to_json(*cls.destabilizer);
    if (!cls.solver_error.empty()) entry["solver_error"] = cls.solver_error;
    classes.push_back(std::move(entry));
    row.push_back(verdict_name(cls.verdict));
    row.push_back(fmt(cls.lambda_hat));
    row.push_back(fmt(to_double(cls.fiber_volume)));
    res.csv_rows.push_back(std::move(row));
  }
  res.report["evidence"] = {{"classes", classes},
                            {"exists", rep.exists},
                            {"not_stable", rep.not_stable},
                            {"undecided", rep.undecided},
                            {"volume_note", rep.volume_note},
                            {"sampling_note", rep.sampling_note}};
  res.report["residuals"] = json::object();
  if (rep.not_stable > 0) {
    res.report["verdict"] = "NOT_STABLE";
    res.exit_code = 2;
  } else if (rep.undecided == 0) {
    res.report["verdict"] = "EXISTS";
  } else {
    res.report["verdict"] = "UNDECIDED";
  }
}

}  // namespace detail

/// Runs one command against a parsed config document.  All failures land in
/// the report with exit code 1; NOT_STABLE verdicts exit 2.
inline RunResult run_command(const std::string& command, const json& raw) {
  RunResult res;
  res.report["command"] = command;
  auto t0 = std::chrono::steady_clock::now();
  try {
    RunConfig cfg = parse_config(raw);
    res.output = cfg.output;
    if (command == "check-delzant")
      detail::cmd_check_delzant(cfg, res);
    else if (command == "extremal")
      detail::cmd_extremal(cfg, res);
    else if (command == "futaki")
      detail::cmd_futaki(cfg, res);
    else if (command == "stability-scan")
      detail::cmd_stability_scan(cfg, res);
    else if (command == "solve-1d")
      detail::cmd_solve_1d(cfg, res);
    else if (command == "solve-ak")
      detail::cmd_solve_ak(cfg, res);
    else if (command == "certify")
      detail::cmd_certify(cfg, res);
    else if (command == "mabuchi")
      detail::cmd_mabuchi(cfg, res);
    else if (command == "scenario")
      detail::cmd_scenario(cfg, res);
    else
      throw Error("unknown command: " + command);
  } catch (const std::exception& e) {
    res.report["verdict"] = "ERROR";
    res.report["error"] = e.what();
    res.exit_code = 1;
  }
  if (!res.report.contains("evidence")) res.report["evidence"] = json::object();
  if (!res.report.contains("residuals")) res.report["residuals"] = json::object();
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.report["timing"] = {{"seconds", dt}};
  return res;
}

inline std::string csv_text(const RunResult& res) {
  std::string out;
  for (std::size_t i = 0; i < res.csv_header.size(); ++i) {
    if (i) out += ',';
    out += res.csv_header[i];
  }
  out += '\n';
  for (const auto& row : res.csv_rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  }
  return out;
}

inline int run_cli(int argc, char** argv) {
  CLI::App app{"stability and canonical-metric tools for labelled polytopes"};
  app.require_subcommand(1);
  std::string config_path;
  std::string report_path;
  std::string csv_path;
  int degree = -1;
  const std::pair<const char*, const char*> commands[] = {
      {"check-delzant", "validate the labelled polytope data"},
      {"extremal", "solve for the extremal affine function"},
      {"futaki", "pair the weight system against a test function"},
      {"stability-scan", "scan crease functions for destabilizers"},
      {"solve-1d", "solve the weighted profile equation on an interval"},
      {"solve-ak", "search for a positive matrix-field certificate"},
      {"certify", "combine the solvers and the scan into a verdict"},
      {"mabuchi", "evaluate the energy functional at a potential"},
      {"scenario", "sweep fibration classes and certify each one"},
  };
  for (const auto& [name, desc] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("-c,--config", config_path, "JSON config file")->required();
    sub->add_option("--report", report_path, "report path (default: stdout)");
    sub->add_option("--csv", csv_path, "plot-data CSV path");
    if (std::string(name) == "solve-ak")
      sub->add_option("--degree", degree, "certificate degree override");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  const std::string command = app.get_subcommands().front()->get_name();

  json raw;
  {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "cannot open config: " << config_path << "\n";
      return 1;
    }
    try {
      raw = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
      std::cerr << "config parse error: " << e.what() << "\n";
      return 1;
    }
  }
  if (raw.is_object()) {
    auto section = [&raw](const char* key) -> json& {
      if (!raw.contains(key) || !raw[key].is_object()) raw[key] = json::object();
      return raw[key];
    };
    if (degree >= 0) section("solver")["degree"] = degree;
    if (!report_path.empty()) section("output")["report"] = report_path;
    if (!csv_path.empty()) section("output")["csv"] = csv_path;
  }

  RunResult res = run_command(command, raw);
  const std::string text = res.report.dump(res.output.pretty ? 2 : -1) + "\n";
  if (res.output.report_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(res.output.report_path);
    if (!out) {
      std::cerr << "cannot write report: " << res.output.report_path << "\n";
      return 1;
    }
    out << text;
  }
  if (!res.output.csv_path.empty() && !res.csv_header.empty()) {
    std::ofstream out(res.output.csv_path);
    if (!out) {
      std::cerr << "cannot write csv: " << res.output.csv_path << "\n";
      return 1;
    }
    out << csv_text(res);
  }
  return res.exit_code;
}

}  // namespace kstab::cli

#pragma once

#include <cmath>
#include <cstdint>
#include <future>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kstab/potentials.hpp"
#include "kstab/solvers.hpp"
#include "kstab/weights.hpp"

namespace kstab {

/// Constant scalar curvature of the area-normalized metric on a closed curve
/// of the given genus: 8 pi (1 - genus) / area (twice the Gauss curvature);
/// exact types use the fixed rational approximation of pi, so areas derived
/// from pi_value (round spheres and friends) cancel exactly.
template <class S>
S curve_scal(int genus, const S& area) {
  if (!(area > S(0))) throw Error("curve_scal: area must be positive");
  return S(scalar_from_long<S>(8LL * (1 - genus)) * pi_value<S>() / area);
}

/// Fiber-directed factor of the total-space volume, int_P v dx.  The base
/// factor is not modelled; reports append base_volume_note verbatim.
template <class S>
S total_volume_factor(const Polytope<S>& p, const Polynomial<S>& v) {
  return integrate_interior(p, v);
}

inline const char* base_volume_note() { return "* Vol(S, omega_S^[d])"; }

template <class S>
struct TotalScalarReport {
  std::vector<double> values;
  /// sup |Scal - ell_ext| over the probes; absent when the weight system
  /// carries no extremal affine function (explicitly supplied weights).
  std::optional<double> deviation;
};

/// Scalar curvature of the compatible total-space metric at interior probes:
///   sum_a scal_a / (<p_a, x> + c_a) + Scal_v(u) / v.
/// Potentials with rational Hessians evaluate symbolically; grid-backed ones
/// fall back to finite differences with step h (default_fd_step when h = 0).
template <class S>
TotalScalarReport<S> total_scalar(const FibrationData<S>& fib, const WeightSystem<S>& ws,
                                  const SymplecticPotential<S>& u,
                                  const std::vector<std::vector<double>>& probes,
                                  double h = 0) {
  const Polytope<S>& p = u.domain;
  if (h == 0) h = default_fd_step(p);
  std::optional<RationalFunc<S>> symbolic;
  if (u.kind != PotentialKind::kGrid && p.dim <= 2)
    symbolic = v_scalar_curvature_symbolic(p, ws.v, u);

  TotalScalarReport<S> report;
  for (const auto& x : probes) {
    if (static_cast<int>(x.size()) != p.dim)
      throw Error("total_scalar: probe dimension mismatch");
    for (const auto& label : p.labels) {
      double l = to_double(label.offset);
      for (std::size_t i = 0; i < x.size(); ++i) l += to_double(label.normal[i]) * x[i];
      if (!(l > 0)) throw Error("total_scalar: probe outside the interior");
    }
    double scal = symbolic ? symbolic->eval_double(x) : v_scalar_curvature_fd(p, ws.v, u, x, h);
    double value = scal / ws.v.eval_double(x);
    for (const auto& f : fib.factors) {
      double lin = to_double(f.c);
      for (std::size_t i = 0; i < f.p.size(); ++i)
        lin += static_cast<double>(f.p[i]) * x[i];
      value += to_double(f.scal) / lin;
    }
    report.values.push_back(value);
    if (ws.ell_ext) {
      double ell = to_double(ws.ell_ext->offset);
      for (std::size_t i = 0; i < x.size(); ++i)
        ell += to_double(ws.ell_ext->normal[i]) * x[i];
      report.deviation = std::max(report.deviation.value_or(0.0), std::fabs(value - ell));
    }
  }
  return report;
}

/// A fixed fiber polytope and fibration shape whose class offsets c are
/// swept over a finite sample of tuples, one entry per factor.
template <class S>
struct FibrationScenario {
  Polytope<S> fiber;
  FibrationData<S> fib;
  std::vector<std::vector<S>> class_sweep;
};

/// Factor fibred over a curve base of the given genus and area.
template <class S>
FibrationFactor<S> curve_factor(std::vector<long long> direction, S c, int genus, S area) {
  FibrationFactor<S> f;
  f.p = std::move(direction);
  f.c = std::move(c);
  f.d = 1;
  f.scal = curve_scal<S>(genus, area);
  return f;
}

/// Fibration data for one sweep point: the scenario's factors with the class
/// offsets replaced by the k-th tuple.
template <class S>
FibrationData<S> sweep_point(const FibrationScenario<S>& sc, std::size_t k) {
  if (k >= sc.class_sweep.size()) throw Error("sweep_point: index out of range");
  const auto& cs = sc.class_sweep[k];
  if (cs.size() != sc.fib.factors.size())
    throw Error("sweep_point: class tuple size does not match the factor count");
  FibrationData<S> fib = sc.fib;
  for (std::size_t a = 0; a < cs.size(); ++a) fib.factors[a].c = cs[a];
  return fib;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

namespace detail {

template <class S>
void append_poly(std::ostringstream& os, const Polynomial<S>& q) {
  for (const auto& [e, c] : q.terms()) {
    os << "[";
    for (std::size_t i = 0; i < e.size(); ++i) os << (i ? "," : "") << e[i];
    os << "]=" << c << ";";
  }
  os << "|";
}

}  // namespace detail

/// FNV-1a fingerprint of a positive certificate's exact coefficient data;
/// empty when the result carries no positive certificate.
template <class S>
std::string certificate_hash(const CertifyResult<S>& r) {
  std::ostringstream os;
  if (r.ak && r.ak->verdict == AKVerdict::kPositive) {
    os << "ak:d" << r.ak->degree << ":";
    for (int i = 0; i < r.ak->phi_field.dim; ++i)
      for (int j = i; j < r.ak->phi_field.dim; ++j)
        detail::append_poly(os, r.ak->phi_field.at(i, j));
  } else if (r.solve1d && r.solve1d->positive) {
    os << "1d:";
    detail::append_poly(os, r.solve1d->phi);
  } else {
    return std::string();
  }
  return hash_hex(fnv1a64(os.str()));
}

template <class S>
struct ClassVerdict {
  std::vector<S> c;
  CertifyVerdict verdict = CertifyVerdict::kUndecided;
  double lambda_hat = 0;
  S fiber_volume{0};
  std::string certificate_hash;
  /// Worst crease sample when the scan found negative pairings.
  std::optional<CreaseSample<S>> destabilizer;
  std::string solver_error;
};

template <class S>
struct CalabiDreamReport {
  std::vector<ClassVerdict<S>> classes;
  int exists = 0;
  int not_stable = 0;
  int undecided = 0;
  std::string volume_note;
  std::string sampling_note;
};

/// Certifies every sweep point and aggregates the verdicts.  Points evaluate
/// in parallel; the report keeps sweep order.
template <class S>
CalabiDreamReport<S> calabi_dream_check(const FibrationScenario<S>& sc,
                                        const ScanOptions& scan_opts = {}) {
  if (sc.fiber.dim < 1 || sc.fiber.dim > 2)
    throw Error("calabi_dream_check: fiber must be an interval or a planar polytope");
  CalabiDreamReport<S> report;
  report.volume_note = base_volume_note();
  report.sampling_note =
      "the sweep samples finitely many classes; verdicts apply per sampled class only";

  std::vector<std::future<ClassVerdict<S>>> jobs;
  for (std::size_t k = 0; k < sc.class_sweep.size(); ++k) {
    jobs.push_back(std::async(std::launch::async, [&sc, &scan_opts, k]() {
      ClassVerdict<S> out;
      out.c = sc.class_sweep[k];
      FibrationData<S> fib = sweep_point(sc, k);
      auto ws = build_weight_system(sc.fiber, fib);
      out.fiber_volume = total_volume_factor(sc.fiber, ws.v);
      auto res = certify(sc.fiber, ws, scan_opts);
      out.verdict = res.verdict;
      out.lambda_hat = res.scan.lambda_hat;
      out.certificate_hash = kstab::certificate_hash(res);
      if (!res.scan.negatives.empty()) out.destabilizer = res.scan.worst;
      out.solver_error = res.solver_error;
      return out;
    }));
  }
  for (auto& job : jobs) {
    report.classes.push_back(job.get());
    switch (report.classes.back().verdict) {
      case CertifyVerdict::kExists: ++report.exists; break;
      case CertifyVerdict::kNotStable: ++report.not_stable; break;
      case CertifyVerdict::kUndecided: ++report.undecided; break;
    }
  }
  return report;
}

}  // namespace kstab

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "defl/deflator.hpp"
#include "defl/market.hpp"

namespace defl::dyadic {

using engine::DeflatorProcess;
using engine::VerificationReport;
using market::CrashTimeProfile;
using market::Market;
using prob::Measure;
using prob::RandomVariable;

/// D_k = {i T / 2^k : i = 0..2^k} with parent links into D_{k-1}.
struct DyadicGrid {
  std::size_t k = 0;
  double horizon = 1.0;
  std::vector<double> points;
  std::vector<std::optional<std::size_t>> parent;  // index in D_{k-1} for shared points

  double step() const { return horizon / static_cast<double>(std::size_t{1} << k); }
};

DyadicGrid dyadic_grid(std::size_t k, double T);

/// Smallest level whose grid contains t exactly; nullopt when t is not dyadic
/// within `max_level`.
std::optional<std::size_t> dyadic_level_of(double t, double T, std::size_t max_level);

/// Q^k_r = P[. | tau in (r, r + T/2^k]]; the null measure when uncharged.
Measure level_conditional(const Measure& p, const CrashTimeProfile& tau, std::size_t k, double r,
                          double T);

/// One charged conditioning slice of a level build. `r` is +infinity for the
/// {tau = infinity} slice.
struct LevelLocal {
  double r = 0.0;
  Measure q;
  std::vector<std::vector<double>> f_hat;  // raw hull maximal elements, [atom][s<=r]
  std::vector<engine::GrowthStepRecord> steps;
};

struct LevelDeflator {
  std::size_t k = 0;
  std::vector<double> times;              // D_k
  std::vector<std::size_t> time_indices;  // into the source market grid
  DeflatorProcess z;                      // pasted Z^k on D_k
  std::vector<LevelLocal> locals;
  double max_kkt = 0.0;
};

/// Eq. (3.10): pasted local deflators over the charged level-k crash slices.
/// `tau` may be the market crash time or an exogenous clock.
LevelDeflator build_level_deflator(const Market& m, const CrashTimeProfile& tau, std::size_t k,
                                   double tol, std::size_t n_cap = 256);

/// Eq. (3.11) check: Z^k deflates the D_k-restricted market under P and every
/// charged Q^k_r.
VerificationReport verify_level(const Market& m, const CrashTimeProfile& tau,
                                const LevelDeflator& level, double tol, std::size_t n_cap = 256);

struct ForwardConvexSchedule {
  enum class Mode { cesaro_tail, komlos_subsequence };
  Mode mode = Mode::cesaro_tail;
  double tol = 1e-9;
  std::vector<std::vector<double>> weights;  // filled per level window by the limit op
};

struct ForwardConvexResult {
  RandomVariable z_inf;
  std::vector<double> gaps;  // sup-norm gaps between successive forward averages
  bool converged = false;
  prob::BoundednessDiagnostic reciprocal_diag;  // K_t = conv{1/Z^k_t} evidence
};

/// Forward convex combinations of Z^k_t over the supplied levels containing t.
ForwardConvexResult forward_convex_limit(const std::vector<LevelDeflator>& levels, double t,
                                         ForwardConvexSchedule& schedule, const Measure& p);

struct BoundednessRow {
  double t = 0.0;
  double m = 0.0;
  std::size_t k = 0;
  double r = 0.0, u = 0.0;
  double value = 0.0;
  bool charged = true;
};

struct BoundednessTable {
  std::vector<BoundednessRow> rows;
  std::vector<double> t_values;
  std::vector<double> m_schedule;
  std::vector<std::vector<double>> summary;  // [t][m], sup over charged rows
  std::vector<std::string> verdict_per_t;
  double evidence_threshold = 1e-3;
};

/// Theorem (i)(b) table: sup_{X_t} Q^k_r[X_t >= M] over all charged (k, r)
/// with r >= t, for t in D_K.
BoundednessTable uniform_boundedness_diag(const Market& m, const CrashTimeProfile& tau,
                                          std::size_t max_level,
                                          const std::vector<double>& m_schedule,
                                          std::size_t n_cap);

/// Theorem (ii)(b) table over 1/Z^inf_t for the supplied (t, Z^inf_t) pairs.
BoundednessTable deflator_bound_diag(const std::vector<std::pair<double, RandomVariable>>& z_inf,
                                     const Market& m, const CrashTimeProfile& tau,
                                     std::size_t max_level,
                                     const std::vector<double>& m_schedule);

struct MarkovRow {
  double t = 0.0, m = 0.0;
  std::size_t k = 0;
  double r = 0.0;
  double lhs = 0.0, rhs = 0.0;
  bool ok = true;
};

/// Direction (ii)=>(i) chain: Q[X_t >= M] <= 1/sqrt(M) + Q[1/Z_t >= sqrt(M)]
/// at every charged table row.
std::vector<MarkovRow> markov_cross_check(const Market& m, const CrashTimeProfile& tau,
                                          const std::vector<std::pair<double, RandomVariable>>& z_inf,
                                          std::size_t max_level,
                                          const std::vector<double>& m_schedule,
                                          std::size_t n_cap);

struct JensenRow {
  std::size_t k = 0;
  double t = 0.0;
  std::size_t atom = 0;
  double lhs = 0.0, rhs = 0.0;
  bool ok = true;
};

struct ClockDeflatorResult {
  bool accepted = false;
  std::string rejection;  // names the violating pair when rejected
  std::vector<LevelDeflator> levels;
  std::vector<JensenRow> jensen;
  std::vector<double> grid_times;  // D_{K-1}, where the limit lives
  DeflatorProcess z;               // final deflator on D_{K-1}
  std::vector<ForwardConvexResult> limits;  // per grid time
  VerificationReport report;
};

/// Independent-clock construction: checks numerical independence of every
/// {clock in (s,t]} from F_s and the numeraire/vanishing condition on charged
/// intervals, builds per-level deflators from the clock slices, projects onto
/// F_t, verifies the Jensen bound, and passes the forward convex limit to a
/// final verification under P.
ClockDeflatorResult independent_clock_deflator(const Market& m, const CrashTimeProfile& clock,
                                               std::size_t max_level, double tol,
                                               std::size_t n_cap = 256);

/// Z'_s = (S_s / Xbar_s) 1_{Xbar_s > 0} + 1_{Xbar_s = 0}.
struct RegularizedDeflator {
  DeflatorProcess z;
  std::vector<std::string> warnings;  // S > 0 where Xbar = 0 discards information
};

RegularizedDeflator regularize_by_numeraire(const std::vector<std::vector<double>>& s_process,
                                            const market::WealthProcess& x_bar);

}  // namespace defl::dyadic

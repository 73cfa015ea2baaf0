#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "defl/market.hpp"
#include "defl/solver.hpp"

namespace defl::engine {

using market::CrashTimeProfile;
using market::Market;
using prob::Measure;
using prob::RandomVariable;
using solver::StaticDeflatorResult;

inline constexpr double kPositivityFloor = 1e-300;

struct StageError : prob::Error {
  std::string stage;
  StageError(std::string stage_, const std::string& what_)
      : prob::Error("[" + stage_ + "] " + what_), stage(std::move(stage_)) {}
};

/// Strictly positive deflator matrix, rows = atoms, columns = grid times.
struct DeflatorProcess {
  std::vector<std::vector<double>> values;
  bool z0_bound = true;
  bool adapted = false;

  std::size_t atom_count() const { return values.size(); }
  std::size_t time_count() const { return values.empty() ? 0 : values[0].size(); }
  RandomVariable column(std::size_t time) const;
};

/// Validates positivity and Z_0 <= 1.
DeflatorProcess make_deflator(std::vector<std::vector<double>> values, bool adapted = false);

struct VerificationEntry {
  std::string measure;
  std::string asset;
  std::size_t s_idx = 0, t_idx = 0, block = 0;
  double ratio = 0.0;  // E_Q[X_t Z_t / (X_s Z_s) 1_A] / Q[A], 0/0 := 0
};

struct VerificationReport {
  std::vector<VerificationEntry> entries;
  std::size_t entry_count = 0;
  double max_ratio = 0.0;
  bool positivity_ok = true;
  bool z0_ok = true;
  bool adapted_ok = true;
  double tolerance = 0.0;
  bool pass = false;
};

/// Blockwise growth-optimal recursion under q over the fork-convex hull:
/// per step and F_s-block, the log-optimal mix of one-step asset returns.
struct GrowthStepRecord {
  std::size_t s_idx = 0;
  std::vector<StaticDeflatorResult> per_block;  // aligned with the partition at s
};

struct GrowthResult {
  std::vector<std::vector<double>> f_hat;  // [atom][0..s_max]; hull maximal elements
  std::vector<GrowthStepRecord> steps;
  double max_kkt = 0.0;
};

GrowthResult growth_optimal(const Market& m, const Measure& q, std::size_t s_max,
                            std::size_t n_cap, double tol);

struct MarketCrashResult {
  CrashTimeProfile tau;
  std::vector<StaticDeflatorResult> per_time;  // \hat f_t under P, per grid time
};

/// tau = debut of the maximal-element sequence at zero; postconditions of
/// Eqs. (3.2)/(3.3) are asserted.
MarketCrashResult market_crash_time(const Market& m, std::size_t n_cap, double tol);

/// Local deflator under q_t = P[. | tau = t]: Y_s = 1 / f_hat_s for s < t and
/// 1 from t on (for t = +infinity the recursion runs over the whole grid).
DeflatorProcess local_deflator(const Market& m, const Measure& q_t, double t, std::size_t n_cap,
                               double tol);

/// Z_s(w) = Y^{tau(w)}_s(w). Every charged crash time needs a local.
DeflatorProcess paste_deflators(const std::map<double, DeflatorProcess>& locals,
                                const CrashTimeProfile& tau, const Market& m);

/// F_s-projection Z~_s = E_P[Z_s | F_s]; requires an adapted market.
DeflatorProcess adapt_deflator(const DeflatorProcess& z, const Market& m);

struct VerifyOptions {
  std::size_t hull_samples = 0;
  std::size_t hull_depth = 2;
  std::uint64_t seed = 1;
  std::size_t n_cap = 256;
  double tol = 1e-9;
  bool record_entries = true;
};

/// Full deflator-inequality table over measures x (s<t) x assets x F_s-blocks.
VerificationReport verify_deflator(const Market& m, const DeflatorProcess& z,
                                   const std::vector<std::pair<std::string, Measure>>& measures,
                                   const VerifyOptions& opts);

struct NupbrTimeDiagnostic {
  double time = 0.0;
  prob::BoundednessDiagnostic diag;
};

struct NupbrResult {
  std::vector<NupbrTimeDiagnostic> per_time;
  bool divergence_evidence = false;
  std::optional<double> divergent_time;
};

NupbrResult nupbr_check(const Market& m, std::size_t n_cap, const std::vector<double>& m_schedule);

struct DiscreteDeflatorResult {
  DeflatorProcess z;
  std::optional<DeflatorProcess> z_adapted;
  CrashTimeProfile tau;
  MarketCrashResult crash;
  std::map<double, DeflatorProcess> locals;
  VerificationReport report;
  std::optional<VerificationReport> report_adapted;
};

struct BuildOptions {
  std::size_t n_cap = 256;
  double tol = 1e-9;
  std::uint64_t seed = 1;
  std::size_t hull_samples = 0;
  std::vector<double> m_schedule = {1e1, 1e2, 1e3, 1e4};
};

/// Steps 1-3 of the discrete construction: crash time, local deflators under
/// every charged conditional, pasting, optional adapted projection, and the
/// verification table under P and every charged Q_t.
DiscreteDeflatorResult build_discrete_deflator(const Market& m, const BuildOptions& opts);

/// Named measure list {P} + charged {Q_t}.
std::vector<std::pair<std::string, Measure>> crash_conditionals(const Market& m,
                                                                const CrashTimeProfile& tau);

}  // namespace defl::engine

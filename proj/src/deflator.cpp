#include "defl/deflator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace defl::engine {

using prob::Block;

RandomVariable DeflatorProcess::column(std::size_t time) const {
  RandomVariable out(atom_count(), 0.0);
  for (std::size_t a = 0; a < atom_count(); ++a) out[a] = values[a][time];
  return out;
}

DeflatorProcess make_deflator(std::vector<std::vector<double>> values, bool adapted) {
  if (values.empty() || values[0].empty()) throw prob::Error("deflator matrix is empty");
  for (std::size_t a = 0; a < values.size(); ++a) {
    if (values[a].size() != values[0].size()) throw prob::Error("ragged deflator matrix");
    for (std::size_t t = 0; t < values[a].size(); ++t)
      if (!(values[a][t] > kPositivityFloor)) {
        std::ostringstream os;
        os << "deflator not strictly positive at (" << a << "," << t << ")";
        throw prob::Error(os.str());
      }
    if (values[a][0] > 1.0 + 1e-12) {
      std::ostringstream os;
      os << "Z_0 > 1 at atom " << a;
      throw prob::Error(os.str());
    }
  }
  DeflatorProcess z;
  z.values = std::move(values);
  z.adapted = adapted;
  z.z0_bound = true;
  return z;
}

GrowthResult growth_optimal(const Market& m, const Measure& q, std::size_t s_max,
                            std::size_t n_cap, double tol) {
  const std::size_t atoms = m.atom_count();
  if (s_max >= m.time_count()) throw prob::Error("growth_optimal: s_max beyond the grid");
  auto assets = m.assets(n_cap);
  if (assets.empty()) throw prob::Error("growth_optimal: market has no assets");

  GrowthResult res;
  res.f_hat.assign(atoms, std::vector<double>(s_max + 1, 0.0));
  for (std::size_t a = 0; a < atoms; ++a) res.f_hat[a][0] = 1.0;  // C_0 = {1}

  solver::SolverOptions sopts;
  sopts.tol = std::min(tol, 1e-10);

  for (std::size_t s = 0; s + 1 <= s_max; ++s) {
    GrowthStepRecord rec;
    rec.s_idx = s;
    const auto& part = m.filtration.partition(s);
    std::vector<double> rho(atoms, 0.0);
    for (const auto& block : part) {
      Measure qb = q.is_null() ? Measure::null_measure(atoms) : prob::condition_on_event(q, block);
      StaticDeflatorResult step;
      if (!qb.is_null()) {
        // one-step return columns, zero where the asset is already dead
        std::vector<RandomVariable> cols;
        cols.reserve(assets.size());
        for (const auto& x : assets) {
          RandomVariable c(atoms, 0.0);
          for (auto a : block)
            if (x.values[a][s] > 0.0) c[a] = x.values[a][s + 1] / x.values[a][s];
          cols.push_back(std::move(c));
        }
        step = solver::maximal_element(cols, qb, sopts);
        res.max_kkt = std::max(res.max_kkt, step.kkt_residual);
        for (auto a : step.support) rho[a] = step.f_hat[a];
      }
      // off the qb-support: dominated single-asset extension (stays in the
      // solid hull); zero only where the whole market is dead at s+1
      for (auto a : block) {
        if (!qb.is_null() && qb.w[a] > 0.0) continue;
        double mn = prob::infinity();
        bool alive = false;
        for (const auto& x : assets)
          if (x.values[a][s] > 0.0) {
            alive = true;
            mn = std::min(mn, x.values[a][s + 1] / x.values[a][s]);
          }
        rho[a] = alive ? mn : 0.0;
      }
      rec.per_block.push_back(std::move(step));
    }
    for (std::size_t a = 0; a < atoms; ++a) res.f_hat[a][s + 1] = res.f_hat[a][s] * rho[a];
    res.steps.push_back(std::move(rec));
  }
  return res;
}

MarketCrashResult market_crash_time(const Market& m, std::size_t n_cap, double tol) {
  MarketCrashResult out;
  Measure p = m.p();
  solver::SolverOptions sopts;
  sopts.tol = std::min(tol, 1e-10);
  const std::size_t atoms = m.atom_count();
  out.tau.tau.assign(atoms, prob::infinity());

  for (std::size_t t = 0; t < m.time_count(); ++t) {
    auto fh = solver::maximal_element(m.value_set(t, n_cap), p, sopts);
    for (std::size_t a = 0; a < atoms; ++a)
      if (fh.f_hat[a] == 0.0 && std::isinf(out.tau.tau[a]))
        out.tau.tau[a] = m.filtration.time(t);
    out.per_time.push_back(std::move(fh));
  }
  for (std::size_t a = 0; a < atoms; ++a)
    out.tau.distribution[out.tau.tau[a]] += m.space.prob(a);

  // debut postconditions: f_hat positive strictly before tau, every asset at
  // zero from tau on
  auto assets = m.assets(n_cap);
  for (std::size_t a = 0; a < atoms; ++a) {
    for (std::size_t t = 0; t < m.time_count(); ++t) {
      bool before = m.filtration.time(t) < out.tau.tau[a];
      if (before && out.per_time[t].f_hat[a] <= 0.0)
        throw prob::Error("crash-time postcondition violated: f_hat vanished before tau");
      if (!before)
        for (const auto& x : assets)
          if (x.values[a][t] != 0.0)
            throw prob::Error("crash-time postcondition violated: asset alive after tau");
    }
  }
  return out;
}

DeflatorProcess local_deflator(const Market& m, const Measure& q_t, double t, std::size_t n_cap,
                               double tol) {
  if (q_t.is_null()) throw prob::Error("local_deflator requires a charged conditional measure");
  const std::size_t atoms = m.atom_count();
  const std::size_t times = m.time_count();

  std::size_t cutoff;  // first index with Y = 1 (grid index of t, or past the end)
  if (std::isinf(t)) {
    cutoff = times;
  } else {
    auto ti = m.filtration.time_index(t);
    if (!ti) throw prob::Error("local_deflator: crash time off the grid");
    cutoff = *ti;
  }
  std::vector<std::vector<double>> y(atoms, std::vector<double>(times, 1.0));
  if (cutoff > 0) {
    auto growth = growth_optimal(m, q_t, cutoff == times ? times - 1 : cutoff - 1, n_cap, tol);
    for (std::size_t a = 0; a < atoms; ++a) {
      if (q_t.w[a] <= 0.0) continue;  // off-support stays at 1
      for (std::size_t s = 0; s < cutoff; ++s) {
        double f = growth.f_hat[a][s];
        if (!(f > 0.0)) {
          std::ostringstream os;
          os << "market inconsistent with crash time: f_hat = 0 at atom " << a << ", s="
             << m.filtration.time(s) << " before t=" << t;
          throw prob::Error(os.str());
        }
        y[a][s] = 1.0 / f;
      }
    }
  }
  return make_deflator(std::move(y));
}

DeflatorProcess paste_deflators(const std::map<double, DeflatorProcess>& locals,
                                const CrashTimeProfile& tau, const Market& m) {
  const std::size_t atoms = m.atom_count();
  const std::size_t times = m.time_count();
  std::vector<std::vector<double>> z(atoms, std::vector<double>(times, 1.0));
  for (std::size_t a = 0; a < atoms; ++a) {
    double t = tau.tau[a];
    auto it = locals.find(t);
    if (it == locals.end()) {
      auto mass = tau.distribution.find(t);
      if (mass != tau.distribution.end() && mass->second > 0.0) {
        std::ostringstream os;
        os << "missing local deflator for charged crash time " << t;
        throw prob::Error(os.str());
      }
      continue;  // uncharged crash times are skipped
    }
    for (std::size_t s = 0; s < times; ++s) z[a][s] = it->second.values[a][s];
  }
  return make_deflator(std::move(z));
}

DeflatorProcess adapt_deflator(const DeflatorProcess& z, const Market& m) {
  if (!m.adapted) throw prob::Error("adapt_deflator requires an adapted market");
  Measure p = m.p();
  std::vector<std::vector<double>> out(z.atom_count(), std::vector<double>(z.time_count(), 0.0));
  for (std::size_t s = 0; s < z.time_count(); ++s) {
    auto zs = prob::conditional_expectation(z.column(s), m.filtration.partition(s), p);
    for (std::size_t a = 0; a < z.atom_count(); ++a) out[a][s] = zs[a];
  }
  return make_deflator(std::move(out), /*adapted=*/true);
}

namespace {

double pointwise_ratio(double num, double den) {
  if (num == 0.0) return 0.0;  // covers the 0/0 := 0 convention
  if (den == 0.0) return prob::infinity();
  return num / den;
}

}  // namespace

VerificationReport verify_deflator(const Market& m, const DeflatorProcess& z,
                                   const std::vector<std::pair<std::string, Measure>>& measures,
                                   const VerifyOptions& opts) {
  VerificationReport rep;
  rep.tolerance = opts.tol;

  std::vector<market::WealthProcess> assets = m.assets(opts.n_cap);
  if (opts.hull_samples > 0) {
    auto hs = market::hull_sample(m, opts.hull_depth, opts.seed, opts.hull_samples, opts.n_cap);
    assets.insert(assets.end(), hs.begin(), hs.end());
  }

  for (const auto& [qname, q] : measures) {
    if (q.is_null()) continue;  // Notation "0 else": uncharged conditionals are skipped
    for (std::size_t s = 0; s + 1 < m.time_count(); ++s) {
      const auto& part = m.filtration.partition(s);
      for (std::size_t t = s + 1; t < m.time_count(); ++t) {
        for (const auto& x : assets) {
          for (std::size_t bi = 0; bi < part.size(); ++bi) {
            double qa = q.mass_of(part[bi]);
            if (qa <= 0.0) continue;
            double acc = 0.0;
            for (auto a : part[bi]) {
              if (q.w[a] <= 0.0) continue;
              double num = x.values[a][t] * z.values[a][t];
              double den = x.values[a][s] * z.values[a][s];
              acc += q.w[a] * pointwise_ratio(num, den);
            }
            double ratio = acc / qa;
            rep.max_ratio = std::max(rep.max_ratio, ratio);
            ++rep.entry_count;
            if (opts.record_entries)
              rep.entries.push_back(VerificationEntry{qname, x.name, s, t, bi, ratio});
          }
        }
      }
    }
  }

  for (std::size_t a = 0; a < z.atom_count() && rep.positivity_ok; ++a)
    for (std::size_t t = 0; t < z.time_count(); ++t)
      if (!(z.values[a][t] > kPositivityFloor)) { rep.positivity_ok = false; break; }
  for (std::size_t a = 0; a < z.atom_count(); ++a)
    if (z.values[a][0] > 1.0 + 1e-12) rep.z0_ok = false;
  if (z.adapted) {
    for (std::size_t t = 0; t < z.time_count() && rep.adapted_ok; ++t)
      for (const auto& b : m.filtration.partition(t))
        for (std::size_t i = 1; i < b.size(); ++i)
          if (std::abs(z.values[b[i]][t] - z.values[b[0]][t]) > 1e-12) {
            rep.adapted_ok = false;
            break;
          }
  }
  rep.pass = rep.max_ratio <= 1.0 + opts.tol && rep.positivity_ok && rep.z0_ok && rep.adapted_ok;
  return rep;
}

NupbrResult nupbr_check(const Market& m, std::size_t n_cap, const std::vector<double>& m_schedule) {
  NupbrResult out;
  Measure p = m.p();
  for (std::size_t t = 0; t < m.time_count(); ++t) {
    prob::RvFamily fam;
    const std::size_t gens = m.generators.size();
    std::size_t total = gens;
    for (const auto& f : m.families) total += f.count(n_cap);
    const Market* mp = &m;
    std::size_t tcopy = t, ncap = n_cap;
    fam.count = total;
    fam.at = [mp, tcopy, ncap, gens](std::size_t i) -> RandomVariable {
      if (i < gens) return mp->generators[i].column(tcopy);
      std::size_t rest = i - gens;
      for (const auto& f : mp->families) {
        std::size_t c = f.count(ncap);
        if (rest < c) return f.member_column(f.n_min + rest, tcopy, mp->atom_count());
        rest -= c;
      }
      throw prob::Error("family index out of range");
    };
    NupbrTimeDiagnostic d;
    d.time = m.filtration.time(t);
    d.diag = prob::boundedness_diagnostic(fam, p, m_schedule);
    for (const auto& f : m.families)
      if (f.n_max > n_cap) d.diag.truncated = true;
    if (d.diag.verdict == "divergent" && !out.divergence_evidence) {
      out.divergence_evidence = true;
      out.divergent_time = d.time;
    }
    out.per_time.push_back(std::move(d));
  }
  return out;
}

std::vector<std::pair<std::string, Measure>> crash_conditionals(const Market& m,
                                                                const CrashTimeProfile& tau) {
  std::vector<std::pair<std::string, Measure>> measures;
  measures.emplace_back("P", m.p());
  for (const auto& [t, mass] : tau.distribution) {
    if (mass <= 0.0) continue;
    std::ostringstream os;
    if (std::isinf(t)) os << "Q[tau=inf]";
    else os << "Q[tau=" << t << "]";
    measures.emplace_back(os.str(), prob::condition_on_event(m.p(), tau.atoms_with(t)));
  }
  return measures;
}

DiscreteDeflatorResult build_discrete_deflator(const Market& m, const BuildOptions& opts) {
  DiscreteDeflatorResult out;

  try {
    auto nupbr = nupbr_check(m, opts.n_cap, opts.m_schedule);
    if (nupbr.divergence_evidence) {
      std::ostringstream os;
      os << "divergence evidence at t=" << *nupbr.divergent_time
         << "; no strictly positive deflator can exist";
      throw prob::Error(os.str());
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("nupbr", e.what());
  }

  try {
    auto crash = market_crash_time(m, opts.n_cap, opts.tol);
    out.tau = crash.tau;
    out.crash = std::move(crash);
  } catch (const std::exception& e) {
    throw StageError("crash", e.what());
  }

  try {
    for (const auto& [t, mass] : out.tau.distribution) {
      if (mass <= 0.0) continue;
      Measure q_t = prob::condition_on_event(m.p(), out.tau.atoms_with(t));
      out.locals.emplace(t, local_deflator(m, q_t, t, opts.n_cap, opts.tol));
    }
  } catch (const std::exception& e) {
    throw StageError("locals", e.what());
  }

  try {
    out.z = paste_deflators(out.locals, out.tau, m);
  } catch (const std::exception& e) {
    throw StageError("paste", e.what());
  }

  if (m.adapted) {
    try {
      out.z_adapted = adapt_deflator(out.z, m);
    } catch (const std::exception& e) {
      throw StageError("adapt", e.what());
    }
  }

  try {
    auto measures = crash_conditionals(m, out.tau);
    VerifyOptions vopts;
    vopts.hull_samples = opts.hull_samples;
    vopts.seed = opts.seed;
    vopts.n_cap = opts.n_cap;
    vopts.tol = opts.tol;
    out.report = verify_deflator(m, out.z, measures, vopts);
    // Step 3 yields a supermartingale deflator under P; the conditional
    // inequalities of Remark 3.6 belong to the unprojected Z
    if (out.z_adapted)
      out.report_adapted = verify_deflator(m, *out.z_adapted, {measures.front()}, vopts);
  } catch (const std::exception& e) {
    throw StageError("verify", e.what());
  }
  return out;
}

}  // namespace defl::engine

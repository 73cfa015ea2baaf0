#include "defl/dyadic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace defl::dyadic {

using prob::Block;

DyadicGrid dyadic_grid(std::size_t k, double T) {
  if (!(T > 0.0)) throw prob::Error("dyadic_grid requires T > 0");
  DyadicGrid g;
  g.k = k;
  g.horizon = T;
  const std::size_t n = std::size_t{1} << k;
  g.points.reserve(n + 1);
  g.parent.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    g.points.push_back(std::ldexp(static_cast<double>(i) * T, -static_cast<int>(k)));
    if (k == 0)
      g.parent.push_back(i == 0 ? std::optional<std::size_t>(0) : std::optional<std::size_t>(1));
    else
      g.parent.push_back(i % 2 == 0 ? std::optional<std::size_t>(i / 2) : std::nullopt);
  }
  return g;
}

std::optional<std::size_t> dyadic_level_of(double t, double T, std::size_t max_level) {
  for (std::size_t k = 0; k <= max_level; ++k) {
    double step = std::ldexp(T, -static_cast<int>(k));
    double idx = t / step;
    double rounded = std::round(idx);
    if (rounded >= 0 && rounded <= std::ldexp(1.0, static_cast<int>(k)) &&
        rounded * step == t)
      return k;
  }
  return std::nullopt;
}

Measure level_conditional(const Measure& p, const CrashTimeProfile& tau, std::size_t k, double r,
                          double T) {
  double step = std::ldexp(T, -static_cast<int>(k));
  return prob::condition_on_event(p, tau.atoms_in_interval(r, r + step));
}

namespace {

std::vector<std::size_t> grid_time_indices(const Market& m, const DyadicGrid& grid) {
  std::vector<std::size_t> idx;
  idx.reserve(grid.points.size());
  for (double t : grid.points) {
    auto ti = m.filtration.time_index(t, 1e-12);
    if (!ti) {
      std::ostringstream os;
      os << "market grid does not contain dyadic point " << t << " (level " << grid.k << ")";
      throw prob::Error(os.str());
    }
    idx.push_back(*ti);
  }
  return idx;
}

}  // namespace

LevelDeflator build_level_deflator(const Market& m, const CrashTimeProfile& tau, std::size_t k,
                                   double tol, std::size_t n_cap) {
  if (m.filtration.time_count() == 0 || m.filtration.time(0) != 0.0)
    throw prob::Error("build_level_deflator requires a grid starting at 0");
  const double T = m.filtration.times().back();
  DyadicGrid grid = dyadic_grid(k, T);

  LevelDeflator out;
  out.k = k;
  out.times = grid.points;
  out.time_indices = grid_time_indices(m, grid);
  Market mk = m.restricted(out.time_indices);
  Measure p = m.p();

  const std::size_t atoms = m.atom_count();
  const std::size_t npoints = grid.points.size();
  std::vector<std::vector<double>> z(atoms, std::vector<double>(npoints, 1.0));

  auto apply_local = [&](const Measure& q, double r, std::size_t last_idx) {
    auto growth = engine::growth_optimal(mk, q, last_idx, n_cap, tol);
    out.max_kkt = std::max(out.max_kkt, growth.max_kkt);
    for (std::size_t a = 0; a < atoms; ++a) {
      if (q.w[a] <= 0.0) continue;
      for (std::size_t s = 0; s <= last_idx; ++s) {
        double f = growth.f_hat[a][s];
        if (!(f > 0.0)) {
          std::ostringstream os;
          os << "local deflator positivity failed at (k=" << k << ", r=" << r
             << ", s=" << grid.points[s] << ")";
          throw prob::Error(os.str());
        }
        z[a][s] = 1.0 / f;
      }
    }
    LevelLocal local;
    local.r = r;
    local.q = q;
    local.f_hat = std::move(growth.f_hat);
    local.steps = std::move(growth.steps);
    out.locals.push_back(std::move(local));
  };

  for (std::size_t ri = 0; ri + 1 < npoints; ++ri) {
    Measure q = level_conditional(p, tau, k, grid.points[ri], T);
    if (q.is_null()) continue;  // uncharged slice
    apply_local(q, grid.points[ri], ri);
  }
  Block inf_atoms;
  for (std::size_t a = 0; a < atoms; ++a)
    if (std::isinf(tau.tau[a])) inf_atoms.push_back(a);
  if (!inf_atoms.empty()) {
    Measure q = prob::condition_on_event(p, inf_atoms);
    apply_local(q, prob::infinity(), npoints - 1);
  }

  out.z = engine::make_deflator(std::move(z));
  return out;
}

VerificationReport verify_level(const Market& m, const CrashTimeProfile& tau,
                                const LevelDeflator& level, double tol, std::size_t n_cap) {
  Market mk = m.restricted(level.time_indices);
  std::vector<std::pair<std::string, Measure>> measures;
  measures.emplace_back("P", m.p());
  for (const auto& local : level.locals) {
    std::ostringstream os;
    if (std::isinf(local.r)) os << "Q^" << level.k << "[tau=inf]";
    else os << "Q^" << level.k << "_r[r=" << local.r << "]";
    measures.emplace_back(os.str(), local.q);
  }
  engine::VerifyOptions vopts;
  vopts.tol = tol;
  vopts.n_cap = n_cap;
  vopts.record_entries = false;
  return engine::verify_deflator(mk, level.z, measures, vopts);
}

namespace {

std::optional<std::size_t> find_time(const std::vector<double>& times, double t) {
  for (std::size_t i = 0; i < times.size(); ++i)
    if (std::abs(times[i] - t) <= 1e-12) return i;
  return std::nullopt;
}

double sup_norm_diff(const RandomVariable& a, const RandomVariable& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

ForwardConvexResult forward_convex_limit(const std::vector<LevelDeflator>& levels, double t,
                                         ForwardConvexSchedule& schedule, const Measure& p) {
  std::vector<std::pair<std::size_t, RandomVariable>> cols;  // (k, Z^k_t)
  for (const auto& lv : levels) {
    auto ti = find_time(lv.times, t);
    if (ti) cols.emplace_back(lv.k, lv.z.column(*ti));
  }
  if (cols.size() < 2) throw prob::Error("forward_convex_limit needs at least 2 levels containing t");
  std::sort(cols.begin(), cols.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  const std::size_t n = cols.size();
  const std::size_t atoms = cols[0].second.size();
  ForwardConvexResult res;
  schedule.weights.clear();

  std::vector<RandomVariable> averages;  // successive forward averages
  if (schedule.mode == ForwardConvexSchedule::Mode::cesaro_tail) {
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t top_k = cols[j].first;
      std::size_t m = std::max<std::size_t>(1, (top_k + 1) / 2);
      m = std::min(m, j + 1);
      RandomVariable avg(atoms, 0.0);
      std::vector<double> w(n, 0.0);
      for (std::size_t i = j + 1 - m; i <= j; ++i) {
        for (std::size_t a = 0; a < atoms; ++a) avg[a] += cols[i].second[a] / static_cast<double>(m);
        w[i] = 1.0 / static_cast<double>(m);
      }
      averages.push_back(std::move(avg));
      schedule.weights.push_back(std::move(w));
    }
  } else {
    RandomVariable acc = cols[0].second;
    std::vector<double> w(n, 0.0);
    w[0] = 1.0;
    averages.push_back(acc);
    schedule.weights.push_back(w);
    for (std::size_t j = 1; j < n; ++j) {
      // distance to the previous average is linear in the fresh mass, so the
      // greedy choice is the smallest admissible fresh weight 1/(j+1)
      double c = static_cast<double>(j) / static_cast<double>(j + 1);
      for (std::size_t a = 0; a < atoms; ++a)
        acc[a] = c * acc[a] + (1.0 - c) * cols[j].second[a];
      for (auto& x : w) x *= c;
      w[j] = 1.0 - c;
      averages.push_back(acc);
      schedule.weights.push_back(w);
    }
  }

  for (std::size_t j = 1; j < averages.size(); ++j)
    res.gaps.push_back(sup_norm_diff(averages[j], averages[j - 1]));
  res.z_inf = averages.back();
  std::size_t tail = std::min<std::size_t>(3, res.gaps.size());
  res.converged = tail > 0;
  for (std::size_t j = res.gaps.size() - tail; j < res.gaps.size(); ++j)
    res.converged = res.converged && res.gaps[j] < schedule.tol;

  // Step 2.1 evidence: the convex hull of the reciprocals stays bounded
  std::vector<RandomVariable> recips;
  for (const auto& [k, col] : cols) {
    RandomVariable r(atoms, 0.0);
    for (std::size_t a = 0; a < atoms; ++a) r[a] = 1.0 / col[a];
    recips.push_back(std::move(r));
  }
  std::vector<RandomVariable> family = recips;
  for (std::size_t mix = 1; mix <= 4; ++mix) {
    double w0 = static_cast<double>(mix) / 5.0;
    RandomVariable h(atoms, 0.0);
    for (std::size_t i = 0; i < recips.size(); ++i) {
      double wi = (i == 0) ? w0 : (1.0 - w0) / static_cast<double>(recips.size() - 1);
      if (recips.size() == 1) wi = 1.0;
      for (std::size_t a = 0; a < atoms; ++a) h[a] += wi * recips[i][a];
    }
    family.push_back(std::move(h));
  }
  res.reciprocal_diag =
      prob::boundedness_diagnostic(prob::RvFamily::from_list(family), p, {1e1, 1e2, 1e3, 1e4});
  return res;
}

BoundednessTable uniform_boundedness_diag(const Market& m, const CrashTimeProfile& tau,
                                          std::size_t max_level,
                                          const std::vector<double>& m_schedule,
                                          std::size_t n_cap) {
  const double T = m.filtration.times().back();
  DyadicGrid top = dyadic_grid(max_level, T);
  Measure p = m.p();

  BoundednessTable table;
  table.m_schedule = m_schedule;

  for (double t : top.points) {
    auto ti = m.filtration.time_index(t, 1e-12);
    if (!ti) continue;
    auto columns = m.value_set(*ti, n_cap);
    std::size_t t_level = *dyadic_level_of(t, T, max_level);
    std::vector<double> sup_per_m(m_schedule.size(), 0.0);

    for (std::size_t k = t_level; k <= max_level; ++k) {
      DyadicGrid gk = dyadic_grid(k, T);
      for (std::size_t ri = 0; ri + 1 < gk.points.size(); ++ri) {
        double r = gk.points[ri];
        if (r < t) continue;
        Measure q = level_conditional(p, tau, k, r, T);
        bool charged = !q.is_null();
        for (std::size_t mi = 0; mi < m_schedule.size(); ++mi) {
          double value = 0.0;
          if (charged)
            for (const auto& col : columns)
              value = std::max(value, col.tail_prob(q, m_schedule[mi]));
          table.rows.push_back(BoundednessRow{t, m_schedule[mi], k, r, r + gk.step(), value,
                                              charged});
          if (charged) sup_per_m[mi] = std::max(sup_per_m[mi], value);
        }
      }
    }
    table.t_values.push_back(t);
    table.verdict_per_t.push_back(sup_per_m.empty() || sup_per_m.back() < table.evidence_threshold
                                      ? "uniformly bounded evidence"
                                      : "no uniform bound evidence");
    table.summary.push_back(std::move(sup_per_m));
  }
  return table;
}

BoundednessTable deflator_bound_diag(const std::vector<std::pair<double, RandomVariable>>& z_inf,
                                     const Market& m, const CrashTimeProfile& tau,
                                     std::size_t max_level,
                                     const std::vector<double>& m_schedule) {
  const double T = m.filtration.times().back();
  Measure p = m.p();

  BoundednessTable table;
  table.m_schedule = m_schedule;

  for (const auto& [t, zt] : z_inf) {
    RandomVariable recip(zt.size(), 0.0);
    for (std::size_t a = 0; a < zt.size(); ++a) {
      if (!(zt[a] > 0.0)) throw prob::Error("deflator_bound_diag requires strictly positive Z");
      recip[a] = 1.0 / zt[a];
    }
    auto lvl = dyadic_level_of(t, T, max_level);
    if (!lvl) throw prob::Error("deflator_bound_diag: t is not a dyadic grid point");
    std::vector<double> sup_per_m(m_schedule.size(), 0.0);
    for (std::size_t k = *lvl; k <= max_level; ++k) {
      DyadicGrid gk = dyadic_grid(k, T);
      for (std::size_t ri = 0; ri + 1 < gk.points.size(); ++ri) {
        double r = gk.points[ri];
        if (r < t) continue;
        Measure q = level_conditional(p, tau, k, r, T);
        bool charged = !q.is_null();
        for (std::size_t mi = 0; mi < m_schedule.size(); ++mi) {
          double value = charged ? recip.tail_prob(q, m_schedule[mi]) : 0.0;
          table.rows.push_back(BoundednessRow{t, m_schedule[mi], k, r, r + gk.step(), value,
                                              charged});
          if (charged) sup_per_m[mi] = std::max(sup_per_m[mi], value);
        }
      }
    }
    table.t_values.push_back(t);
    table.verdict_per_t.push_back(sup_per_m.empty() || sup_per_m.back() < table.evidence_threshold
                                      ? "uniformly bounded evidence"
                                      : "no uniform bound evidence");
    table.summary.push_back(std::move(sup_per_m));
  }
  return table;
}

std::vector<MarkovRow> markov_cross_check(const Market& m, const CrashTimeProfile& tau,
                                          const std::vector<std::pair<double, RandomVariable>>& z_inf,
                                          std::size_t max_level,
                                          const std::vector<double>& m_schedule,
                                          std::size_t n_cap) {
  const double T = m.filtration.times().back();
  Measure p = m.p();
  std::vector<MarkovRow> rows;

  for (const auto& [t, zt] : z_inf) {
    auto ti = m.filtration.time_index(t, 1e-12);
    if (!ti) throw prob::Error("markov_cross_check: t off the market grid");
    auto columns = m.value_set(*ti, n_cap);
    RandomVariable recip(zt.size(), 0.0);
    for (std::size_t a = 0; a < zt.size(); ++a) recip[a] = 1.0 / zt[a];
    auto lvl = dyadic_level_of(t, T, max_level);
    if (!lvl) throw prob::Error("markov_cross_check: t not dyadic");

    for (std::size_t k = *lvl; k <= max_level; ++k) {
      DyadicGrid gk = dyadic_grid(k, T);
      for (std::size_t ri = 0; ri + 1 < gk.points.size(); ++ri) {
        double r = gk.points[ri];
        if (r < t) continue;
        Measure q = level_conditional(p, tau, k, r, T);
        if (q.is_null()) continue;
        for (double mval : m_schedule) {
          double lhs = 0.0;
          for (const auto& col : columns) lhs = std::max(lhs, col.tail_prob(q, mval));
          double root = std::sqrt(mval);
          double rhs = 1.0 / root + recip.tail_prob(q, root);
          rows.push_back(MarkovRow{t, mval, k, r, lhs, rhs, lhs <= rhs + 1e-12});
        }
      }
    }
  }
  return rows;
}

ClockDeflatorResult independent_clock_deflator(const Market& m, const CrashTimeProfile& clock,
                                               std::size_t max_level, double tol,
                                               std::size_t n_cap) {
  ClockDeflatorResult out;
  const double T = m.filtration.times().back();
  DyadicGrid top = dyadic_grid(max_level, T);
  auto top_idx = grid_time_indices(m, top);
  Market mtop = m.restricted(top_idx);
  Measure p = m.p();
  auto assets = m.assets(n_cap);

  // condition (1): every {clock in (s,t]} independent of every F_s-block
  for (std::size_t si = 0; si + 1 < top.points.size(); ++si) {
    for (std::size_t ti = si + 1; ti < top.points.size(); ++ti) {
      Block event = clock.atoms_in_interval(top.points[si], top.points[ti]);
      double pe = p.mass_of(event);
      std::vector<char> in_event(m.atom_count(), 0);
      for (auto a : event) in_event[a] = 1;
      for (const auto& b : mtop.filtration.partition(si)) {
        double pb = p.mass_of(b);
        double joint = 0.0;
        for (auto a : b)
          if (in_event[a]) joint += p.w[a];
        if (std::abs(joint - pe * pb) > 1e-12) {
          std::ostringstream os;
          os << "clock interval (" << top.points[si] << "," << top.points[ti]
             << "] is not independent of F_s";
          out.rejection = os.str();
          return out;
        }
      }
    }
  }

  // condition (2) on charged intervals: a numeraire until s, extinction after t
  for (std::size_t si = 0; si + 1 < top.points.size(); ++si) {
    for (std::size_t ti = si + 1; ti < top.points.size(); ++ti) {
      Block event = clock.atoms_in_interval(top.points[si], top.points[ti]);
      if (p.mass_of(event) <= 0.0) continue;
      bool has_numeraire = false;
      for (const auto& x : assets) {
        bool ok = true;
        for (auto a : event)
          for (std::size_t u = 0; u <= si && ok; ++u)
            if (!(x.values[a][top_idx[u]] > 0.0)) ok = false;
        if (ok) { has_numeraire = true; break; }
      }
      bool vanishes = true;
      for (const auto& x : assets)
        for (auto a : event)
          for (std::size_t u = ti + 1; u < top.points.size() && vanishes; ++u)
            if (x.values[a][top_idx[u]] != 0.0) vanishes = false;
      if (!has_numeraire || !vanishes) {
        std::ostringstream os;
        os << "condition (2) fails on clock interval (" << top.points[si] << ","
           << top.points[ti] << "]: "
           << (!has_numeraire ? "no numeraire until s" : "market alive after t");
        out.rejection = os.str();
        return out;
      }
    }
  }

  for (std::size_t k = 0; k <= max_level; ++k)
    out.levels.push_back(build_level_deflator(m, clock, k, tol, n_cap));

  // Jensen chain (5-1) per (k, t): 1/E[Z^k_t|F_t] <= sum_r fhat^{(k,r)}_t P[A^k_r] + 1
  std::vector<LevelDeflator> projected = out.levels;
  for (std::size_t k = 0; k < out.levels.size(); ++k) {
    const auto& lv = out.levels[k];
    Market mk = m.restricted(lv.time_indices);
    std::vector<std::vector<double>> zproj(m.atom_count(),
                                           std::vector<double>(lv.times.size(), 1.0));
    for (std::size_t tidx = 0; tidx < lv.times.size(); ++tidx) {
      auto ztilde =
          prob::conditional_expectation(lv.z.column(tidx), mk.filtration.partition(tidx), p);
      for (std::size_t a = 0; a < m.atom_count(); ++a) zproj[a][tidx] = ztilde[a];

      std::vector<double> rhs(m.atom_count(), 1.0);
      for (const auto& local : lv.locals) {
        double mass = 0.0;
        for (std::size_t a = 0; a < m.atom_count(); ++a)
          if (local.q.w[a] > 0.0) mass += p.w[a];
        std::size_t r_cols = local.f_hat[0].size();
        if (tidx >= r_cols) continue;  // r < t contributes through the indicator term
        RandomVariable raw(m.atom_count(), 0.0);
        for (std::size_t a = 0; a < m.atom_count(); ++a) raw[a] = local.f_hat[a][tidx];
        auto version = prob::measurable_version(raw, mk.filtration.partition(tidx), local.q);
        for (std::size_t a = 0; a < m.atom_count(); ++a) rhs[a] += version[a] * mass;
      }
      for (std::size_t a = 0; a < m.atom_count(); ++a) {
        double lhs = 1.0 / ztilde[a];
        out.jensen.push_back(JensenRow{lv.k, lv.times[tidx], a, lhs, rhs[a],
                                       lhs <= rhs[a] + std::max(tol, 1e-9)});
      }
    }
    projected[k].z = engine::make_deflator(std::move(zproj), /*adapted=*/true);
  }

  // forward convex limit on D_{K-1}, then the final verification under P
  std::size_t limit_level = max_level == 0 ? 0 : max_level - 1;
  DyadicGrid lim = dyadic_grid(limit_level, T);
  out.grid_times = lim.points;
  std::vector<std::vector<double>> zfinal(m.atom_count(),
                                          std::vector<double>(lim.points.size(), 1.0));
  for (std::size_t i = 0; i < lim.points.size(); ++i) {
    ForwardConvexSchedule sched;
    sched.tol = std::max(tol, 1e-9);
    auto lim_res = forward_convex_limit(projected, lim.points[i], sched, p);
    for (std::size_t a = 0; a < m.atom_count(); ++a) zfinal[a][i] = lim_res.z_inf[a];
    out.limits.push_back(std::move(lim_res));
  }
  out.z = engine::make_deflator(std::move(zfinal), /*adapted=*/true);

  auto lim_idx = grid_time_indices(m, lim);
  Market mlim = m.restricted(lim_idx);
  engine::VerifyOptions vopts;
  vopts.tol = tol;
  vopts.n_cap = n_cap;
  out.report = engine::verify_deflator(mlim, out.z, {{"P", p}}, vopts);

  bool jensen_ok = true;
  for (const auto& row : out.jensen) jensen_ok = jensen_ok && row.ok;
  out.accepted = jensen_ok && out.report.pass;
  if (!out.accepted && out.rejection.empty())
    out.rejection = jensen_ok ? "final verification failed" : "Jensen bound violated";
  return out;
}

RegularizedDeflator regularize_by_numeraire(const std::vector<std::vector<double>>& s_process,
                                            const market::WealthProcess& x_bar) {
  if (s_process.size() != x_bar.atom_count() ||
      (s_process.empty() ? 0 : s_process[0].size()) != x_bar.time_count())
    throw prob::Error("regularize_by_numeraire: shape mismatch");
  RegularizedDeflator out;
  std::vector<std::vector<double>> z(s_process.size(),
                                     std::vector<double>(x_bar.time_count(), 1.0));
  for (std::size_t a = 0; a < s_process.size(); ++a) {
    bool warned = false;
    for (std::size_t t = 0; t < x_bar.time_count(); ++t) {
      double xb = x_bar.values[a][t];
      if (xb > 0.0) {
        z[a][t] = s_process[a][t] / xb;
      } else {
        z[a][t] = 1.0;
        if (s_process[a][t] > 0.0 && !warned) {
          std::ostringstream os;
          os << "S > 0 on {Xbar = 0} at atom " << a << " from time index " << t
             << "; that mass is discarded";
          out.warnings.push_back(os.str());
          warned = true;
        }
      }
    }
  }
  out.z = engine::make_deflator(std::move(z));
  return out;
}

}  // namespace defl::dyadic

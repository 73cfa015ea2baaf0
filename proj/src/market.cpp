#include "defl/market.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace defl::market {

RandomVariable WealthProcess::column(std::size_t time) const {
  RandomVariable out(atom_count(), 0.0);
  for (std::size_t a = 0; a < atom_count(); ++a) out[a] = values[a][time];
  return out;
}

WealthProcess make_wealth_process(std::string name, std::vector<std::vector<double>> matrix) {
  if (matrix.empty() || matrix[0].empty()) throw prob::Error("wealth process matrix is empty");
  const std::size_t times = matrix[0].size();
  for (std::size_t a = 0; a < matrix.size(); ++a) {
    if (matrix[a].size() != times) throw prob::Error("ragged wealth process matrix");
    if (std::abs(matrix[a][0] - 1.0) > 1e-12) {
      std::ostringstream os;
      os << "initial value not 1 at atom " << a << " (got " << matrix[a][0] << ")";
      throw prob::Error(os.str());
    }
    bool dead = false;
    for (std::size_t t = 0; t < times; ++t) {
      double v = matrix[a][t];
      if (v < 0.0) {
        std::ostringstream os;
        os << "negative value at (" << a << "," << t << ")";
        throw prob::Error(os.str());
      }
      if (dead && v != 0.0) {
        std::ostringstream os;
        os << "rebound after zero at (" << a << "," << t << ")";
        throw prob::Error(os.str());
      }
      if (v == 0.0) dead = true;
    }
  }
  return WealthProcess{std::move(name), std::move(matrix)};
}

std::size_t ParametricFamily::count(std::size_t n_cap) const {
  std::size_t hi = std::min(n_max, n_cap);
  return hi >= n_min ? hi - n_min + 1 : 0;
}

WealthProcess ParametricFamily::member(std::size_t n, std::size_t atoms) const {
  if (kind == Kind::tabulated) {
    auto it = tabulated.find(n);
    if (it == tabulated.end()) throw prob::Error("tabulated family has no member for given n");
    std::ostringstream os;
    os << "family[n=" << n << "]";
    return make_wealth_process(os.str(), it->second);
  }
  std::vector<double> row(grid.size());
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double x = grid[t];
    double v = std::min(1.0 + (2.0 * n - 2.0) * x, 2.0 * n - 2.0 * n * x);
    row[t] = std::max(v, 0.0);
  }
  std::ostringstream os;
  os << "X^" << n;
  return make_wealth_process(os.str(), std::vector<std::vector<double>>(atoms, row));
}

RandomVariable ParametricFamily::member_column(std::size_t n, std::size_t time_idx,
                                               std::size_t atoms) const {
  if (kind == Kind::tabulated) return member(n, atoms).column(time_idx);
  double x = grid.at(time_idx);
  double v = std::max(std::min(1.0 + (2.0 * n - 2.0) * x, 2.0 * n - 2.0 * n * x), 0.0);
  return RandomVariable(atoms, v);
}

ParametricFamily example_family(const std::vector<double>& grid) {
  for (double t : grid)
    if (t < 0.0 || t > 1.0) throw prob::Error("example family grid point outside [0,1]");
  ParametricFamily fam;
  fam.kind = ParametricFamily::Kind::example_2_8;
  fam.grid = grid;
  fam.n_min = 1;
  fam.n_max = static_cast<std::size_t>(-1) / 2;
  return fam;
}

std::vector<RandomVariable> Market::value_set(std::size_t time_idx, std::size_t n_cap) const {
  std::vector<RandomVariable> out;
  for (const auto& g : generators) out.push_back(g.column(time_idx));
  for (const auto& fam : families) {
    std::size_t hi = std::min(fam.n_max, n_cap);
    for (std::size_t n = fam.n_min; n <= hi; ++n)
      out.push_back(fam.member_column(n, time_idx, atom_count()));
  }
  return out;
}

std::vector<WealthProcess> Market::assets(std::size_t n_cap) const {
  std::vector<WealthProcess> out = generators;
  for (const auto& fam : families) {
    std::size_t hi = std::min(fam.n_max, n_cap);
    for (std::size_t n = fam.n_min; n <= hi; ++n) out.push_back(fam.member(n, atom_count()));
  }
  return out;
}

Market Market::restricted(const std::vector<std::size_t>& time_indices) const {
  Market out;
  out.space = space;
  out.filtration = filtration.restricted(time_indices);
  for (const auto& g : generators) {
    std::vector<std::vector<double>> m(g.atom_count());
    for (std::size_t a = 0; a < g.atom_count(); ++a)
      for (auto ti : time_indices) m[a].push_back(g.values[a][ti]);
    out.generators.push_back(WealthProcess{g.name, std::move(m)});
  }
  for (const auto& fam : families) {
    ParametricFamily f = fam;
    if (!fam.grid.empty()) {
      std::vector<double> sub;
      for (auto ti : time_indices) sub.push_back(fam.grid.at(ti));
      f.grid = std::move(sub);
    }
    out.families.push_back(std::move(f));
  }
  out.adapted = adapted;  // restriction preserves blockwise constancy
  return out;
}

bool is_adapted(const WealthProcess& x, const Filtration& f) {
  for (std::size_t t = 0; t < f.time_count(); ++t)
    for (const auto& b : f.partition(t))
      for (std::size_t i = 1; i < b.size(); ++i)
        if (x.values[b[i]][t] != x.values[b[0]][t]) return false;
  return true;
}

Market make_market(SampleSpace space, Filtration filtration, std::vector<WealthProcess> generators,
                   std::vector<ParametricFamily> families) {
  auto issues = prob::validate_space(space, filtration);
  if (!issues.empty()) throw prob::Error("invalid space/filtration: " + issues.front());
  Market m;
  m.space = std::move(space);
  m.filtration = std::move(filtration);
  m.generators = std::move(generators);
  m.families = std::move(families);
  for (const auto& g : m.generators) {
    if (g.atom_count() != m.space.size() || g.time_count() != m.filtration.time_count())
      throw prob::Error("generator '" + g.name + "' does not match the space/grid");
  }
  m.adapted = true;
  for (const auto& g : m.generators)
    if (!is_adapted(g, m.filtration)) { m.adapted = false; break; }
  return m;
}

Block CrashTimeProfile::atoms_with(double t) const {
  Block b;
  for (std::size_t a = 0; a < tau.size(); ++a)
    if (tau[a] == t) b.push_back(a);
  return b;
}

Block CrashTimeProfile::atoms_in_interval(double r, double u) const {
  Block b;
  for (std::size_t a = 0; a < tau.size(); ++a)
    if (tau[a] > r && tau[a] <= u) b.push_back(a);
  return b;
}

CrashTimeProfile process_crash_time(const WealthProcess& x, const Filtration& f,
                                    const SampleSpace& space) {
  CrashTimeProfile out;
  out.tau.assign(x.atom_count(), prob::infinity());
  for (std::size_t a = 0; a < x.atom_count(); ++a)
    for (std::size_t t = 0; t < x.time_count(); ++t)
      if (x.values[a][t] == 0.0) { out.tau[a] = f.time(t); break; }
  for (std::size_t a = 0; a < out.tau.size(); ++a) out.distribution[out.tau[a]] += space.prob(a);
  return out;
}

WealthProcess fork_combine(const WealthProcess& x1, const WealthProcess& x2,
                           const WealthProcess& x3, std::size_t s_idx, const Block& a,
                           const Filtration& f) {
  const std::size_t atoms = x1.atom_count();
  const std::size_t times = x1.time_count();
  if (x2.atom_count() != atoms || x3.atom_count() != atoms || x2.time_count() != times ||
      x3.time_count() != times)
    throw prob::Error("fork_combine shape mismatch");

  // the event must be a union of F_s blocks
  std::vector<char> in_a(atoms, 0);
  for (auto idx : a) in_a.at(idx) = 1;
  for (const auto& b : f.partition(s_idx)) {
    bool any = false, all = true;
    for (auto idx : b) { any = any || in_a[idx]; all = all && in_a[idx]; }
    if (any && !all) throw prob::Error("fork_combine: event is not F_s-measurable");
  }

  std::vector<std::vector<double>> m(atoms, std::vector<double>(times, 0.0));
  for (std::size_t w = 0; w < atoms; ++w) {
    const WealthProcess& sw = in_a[w] ? x2 : x3;
    double pivot = sw.values[w][s_idx];
    for (std::size_t t = 0; t < times; ++t) {
      if (t < s_idx) m[w][t] = x1.values[w][t];
      else if (pivot > 0.0) m[w][t] = sw.values[w][t] / pivot * x1.values[w][s_idx];
      else m[w][t] = x1.values[w][t];
    }
  }
  std::ostringstream os;
  os << "fork(" << x1.name << "," << x2.name << "," << x3.name << ";s=" << f.time(s_idx) << ")";
  return make_wealth_process(os.str(), std::move(m));
}

WealthProcess convex_combine(double lambda, const WealthProcess& x1, const WealthProcess& x2) {
  if (lambda < 0.0 || lambda > 1.0) throw prob::Error("convex weight outside [0,1]");
  const std::size_t atoms = x1.atom_count();
  const std::size_t times = x1.time_count();
  if (x2.atom_count() != atoms || x2.time_count() != times)
    throw prob::Error("convex_combine shape mismatch");
  std::vector<std::vector<double>> m(atoms, std::vector<double>(times));
  for (std::size_t a = 0; a < atoms; ++a)
    for (std::size_t t = 0; t < times; ++t)
      m[a][t] = lambda * x1.values[a][t] + (1.0 - lambda) * x2.values[a][t];
  std::ostringstream os;
  os << "mix(" << lambda << ";" << x1.name << "," << x2.name << ")";
  return make_wealth_process(os.str(), std::move(m));
}

namespace {

// 53-bit uniform in [0,1), reproducible across platforms for a fixed seed
double next_unit(std::mt19937_64& rng) {
  return std::ldexp(static_cast<double>(rng() >> 11), -53);
}

std::size_t next_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(next_unit(rng) * static_cast<double>(n)) % n;
}

}  // namespace

std::vector<WealthProcess> hull_sample(const Market& m, std::size_t depth, std::uint64_t seed,
                                       std::size_t count, std::size_t n_cap) {
  if (m.generators.empty() && m.families.empty())
    throw prob::Error("hull_sample requires at least one generator");
  std::vector<WealthProcess> pool = m.assets(n_cap);
  if (depth == 0) return {m.generators.begin(), m.generators.end()};

  std::mt19937_64 rng(seed);
  std::vector<WealthProcess> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    WealthProcess cur = pool[next_index(rng, pool.size())];
    std::size_t ops = 1 + next_index(rng, depth);
    for (std::size_t op = 0; op < ops; ++op) {
      if (next_unit(rng) < 0.5) {
        double lambda = next_unit(rng);
        cur = convex_combine(lambda, cur, pool[next_index(rng, pool.size())]);
      } else {
        std::size_t s_idx = next_index(rng, m.time_count());
        const auto& part = m.filtration.partition(s_idx);
        Block a;
        for (const auto& b : part)
          if (next_unit(rng) < 0.5) a.insert(a.end(), b.begin(), b.end());
        cur = fork_combine(cur, pool[next_index(rng, pool.size())],
                           pool[next_index(rng, pool.size())], s_idx, a, m.filtration);
      }
    }
    std::ostringstream os;
    os << "hull#" << k;
    cur.name = os.str();
    out.push_back(std::move(cur));
  }
  return out;
}

std::vector<WealthProcess> hull_exhaustive(const Market& m) {
  if (m.time_count() > 3 || m.generators.size() > 2)
    throw prob::Error("hull_exhaustive limited to <=3 times and <=2 generators");
  for (std::size_t t = 0; t < m.time_count(); ++t)
    if (m.filtration.partition(t).size() > 2)
      throw prob::Error("hull_exhaustive limited to <=2 blocks per partition");

  std::vector<WealthProcess> out = m.generators;
  const std::size_t n = m.generators.size();
  for (std::size_t s = 0; s < m.time_count(); ++s) {
    const auto& part = m.filtration.partition(s);
    // all unions of blocks
    for (std::size_t mask = 0; mask < (1u << part.size()); ++mask) {
      Block a;
      for (std::size_t bi = 0; bi < part.size(); ++bi)
        if (mask & (1u << bi)) a.insert(a.end(), part[bi].begin(), part[bi].end());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t k = 0; k < n; ++k)
            out.push_back(fork_combine(m.generators[i], m.generators[j], m.generators[k], s, a,
                                       m.filtration));
    }
  }
  return out;
}

NumeraireCertificate find_generalized_numeraire(const Market& m, std::size_t n_cap) {
  NumeraireCertificate cert;
  auto assets = m.assets(n_cap);
  for (std::size_t cand = 0; cand < m.generators.size(); ++cand) {
    const auto& xb = m.generators[cand];
    bool ok = true;
    std::vector<std::string> pairs;
    for (const auto& x : assets) {
      for (std::size_t t = 0; t < m.time_count() && ok; ++t)
        for (std::size_t a = 0; a < m.atom_count(); ++a) {
          if (m.space.prob(a) <= 0.0) continue;
          if (x.values[a][t] > 0.0 && xb.values[a][t] == 0.0) {
            std::ostringstream os;
            os << "P[{" << x.name << "_t>0} ∩ {" << xb.name << "_t=0}] > 0 at atom '"
               << m.space.label(a) << "', t=" << m.filtration.time(t);
            cert.counterexample = os.str();
            ok = false;
            break;
          }
        }
      if (!ok) break;
      pairs.push_back(xb.name + " vs " + x.name);
    }
    if (ok) {
      cert.index = cand;
      cert.checked_pairs = std::move(pairs);
      cert.counterexample.clear();
      return cert;
    }
  }
  return cert;
}

}  // namespace defl::market

#include "defl/prob_space.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

namespace defl::prob {

SampleSpace::SampleSpace(std::vector<std::pair<std::string, double>> atoms)
    : atoms_(std::move(atoms)) {
  index_.reserve(atoms_.size());
  for (std::size_t i = 0; i < atoms_.size(); ++i) index_.emplace_back(atoms_[i].first, i);
  std::sort(index_.begin(), index_.end());
}

std::optional<std::size_t> SampleSpace::index_of(const std::string& label) const {
  auto it = std::lower_bound(index_.begin(), index_.end(), label,
                             [](const auto& a, const std::string& l) { return a.first < l; });
  if (it == index_.end() || it->first != label) return std::nullopt;
  return it->second;
}

std::vector<double> SampleSpace::probs() const {
  std::vector<double> p(atoms_.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = atoms_[i].second;
  return p;
}

Filtration::Filtration(std::vector<double> times, std::vector<Partition> partitions)
    : times_(std::move(times)), partitions_(std::move(partitions)) {
  block_index_.resize(partitions_.size());
  for (std::size_t t = 0; t < partitions_.size(); ++t) {
    std::size_t n = 0;
    for (const auto& b : partitions_[t])
      for (auto a : b) n = std::max(n, a + 1);
    block_index_[t].assign(n, static_cast<std::size_t>(-1));
    for (std::size_t bi = 0; bi < partitions_[t].size(); ++bi)
      for (auto a : partitions_[t][bi])
        if (a < n) block_index_[t][a] = bi;
  }
}

std::size_t Filtration::block_of(std::size_t time_idx, std::size_t atom) const {
  const auto& row = block_index_.at(time_idx);
  if (atom >= row.size() || row[atom] == static_cast<std::size_t>(-1))
    throw Error("atom not covered by partition");
  return row[atom];
}

std::optional<std::size_t> Filtration::time_index(double t, double tol) const {
  for (std::size_t i = 0; i < times_.size(); ++i)
    if (std::abs(times_[i] - t) <= tol) return i;
  return std::nullopt;
}

Filtration Filtration::restricted(const std::vector<std::size_t>& time_indices) const {
  std::vector<double> ts;
  std::vector<Partition> ps;
  ts.reserve(time_indices.size());
  ps.reserve(time_indices.size());
  for (auto i : time_indices) {
    ts.push_back(times_.at(i));
    ps.push_back(partitions_.at(i));
  }
  return Filtration(std::move(ts), std::move(ps));
}

Measure Measure::probability(std::vector<double> weights) {
  return Measure{std::move(weights), 1.0};
}

double Measure::mass_of(const Block& block) const {
  double s = 0.0;
  for (auto a : block) s += w[a];
  return s;
}

double RandomVariable::tail_prob(const Measure& q, double m) const {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] >= m) s += q.w[i];
  return s;
}

double RandomVariable::expectation(const Measure& q) const {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (q.w[i] > 0.0) s += q.w[i] * v[i];
  return s;
}

double RandomVariable::max_on_support(const Measure& q) const {
  double m = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (q.w[i] > 0.0) m = std::max(m, v[i]);
  return m;
}

RvFamily RvFamily::from_list(std::vector<RandomVariable> list) {
  auto shared = std::make_shared<std::vector<RandomVariable>>(std::move(list));
  RvFamily f;
  f.count = shared->size();
  f.at = [shared](std::size_t i) { return (*shared)[i]; };
  return f;
}

std::vector<std::string> validate_space(const SampleSpace& space, const Filtration& filtration) {
  std::vector<std::string> out;
  const std::size_t n = space.size();

  if (n == 0) out.push_back("sample space has no atoms");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += space.prob(i);
    if (!(space.prob(i) > 0.0)) {
      std::ostringstream os;
      os << "atom '" << space.label(i) << "' has nonpositive probability " << space.prob(i);
      out.push_back(os.str());
    }
  }
  if (n > 0 && std::abs(sum - 1.0) > kProbSumTol) {
    std::ostringstream os;
    os << "probabilities sum to " << sum;
    out.push_back(os.str());
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (space.label(i) == space.label(j))
        out.push_back("duplicate atom label '" + space.label(i) + "'");

  for (std::size_t t = 0; t + 1 < filtration.time_count(); ++t)
    if (!(filtration.time(t) < filtration.time(t + 1))) {
      std::ostringstream os;
      os << "times not strictly increasing at step " << t;
      out.push_back(os.str());
    }

  for (std::size_t t = 0; t < filtration.time_count(); ++t) {
    std::vector<int> seen(n, 0);
    const auto& part = filtration.partition(t);
    for (const auto& b : part) {
      if (b.empty()) {
        std::ostringstream os;
        os << "empty block at time index " << t;
        out.push_back(os.str());
      }
      for (auto a : b) {
        if (a >= n) {
          std::ostringstream os;
          os << "block refers to unknown atom index " << a << " at time index " << t;
          out.push_back(os.str());
        } else if (seen[a]++) {
          std::ostringstream os;
          os << "atom '" << space.label(a) << "' appears in two blocks at time index " << t;
          out.push_back(os.str());
        }
      }
    }
    for (std::size_t a = 0; a < n; ++a)
      if (!seen[a]) {
        std::ostringstream os;
        os << "atom '" << space.label(a) << "' not covered at time index " << t;
        out.push_back(os.str());
      }
  }

  // refinement: every block at t+1 must sit inside one block at t
  for (std::size_t t = 0; t + 1 < filtration.time_count(); ++t) {
    const auto& coarse = filtration.partition(t);
    const auto& fine = filtration.partition(t + 1);
    for (const auto& fb : fine) {
      bool inside = false;
      for (const auto& cb : coarse) {
        bool all = !fb.empty();
        for (auto a : fb)
          all = all && std::find(cb.begin(), cb.end(), a) != cb.end();
        if (all) { inside = true; break; }
      }
      if (!inside && !fb.empty()) {
        std::ostringstream os;
        os << "refinement fails at step " << t + 1;
        out.push_back(os.str());
        break;
      }
    }
  }
  return out;
}

Measure condition_on_event(const Measure& p, const Block& event) {
  if (p.total_mass != 1.0) throw Error("condition_on_event requires a probability measure");
  double mass = p.mass_of(event);
  if (mass <= 0.0) return Measure::null_measure(p.size());
  std::vector<double> w(p.size(), 0.0);
  for (auto a : event) w[a] = p.w[a] / mass;
  return Measure::probability(std::move(w));
}

RandomVariable conditional_expectation(const RandomVariable& x, const Partition& partition,
                                       const Measure& q) {
  if (q.total_mass != 1.0) throw Error("conditional_expectation requires a probability measure");
  RandomVariable out(x.size(), 0.0);
  for (const auto& b : partition) {
    double mass = q.mass_of(b);
    double value = 0.0;
    if (mass > 0.0) {
      double acc = 0.0;
      for (auto a : b) {
        if (q.w[a] > 0.0 && std::isinf(x[a])) throw Error("nonintegrable");
        acc += q.w[a] * x[a];
      }
      value = acc / mass;
    }
    for (auto a : b) out[a] = value;
  }
  return out;
}

BoundednessDiagnostic boundedness_diagnostic(const RvFamily& family, const Measure& q,
                                             const std::vector<double>& m_schedule) {
  if (family.count == 0) throw Error("boundedness_diagnostic: empty family");
  if (q.total_mass != 1.0) throw Error("boundedness_diagnostic requires a probability measure");

  BoundednessDiagnostic diag;
  diag.m_schedule = m_schedule;
  diag.sup_tail.assign(m_schedule.size(), 0.0);
  for (std::size_t i = 0; i < family.count; ++i) {
    RandomVariable x = family.at(i);
    diag.max_value = std::max(diag.max_value, x.max_on_support(q));
    for (std::size_t mi = 0; mi < m_schedule.size(); ++mi)
      diag.sup_tail[mi] = std::max(diag.sup_tail[mi], x.tail_prob(q, m_schedule[mi]));
  }
  const double last = diag.sup_tail.empty() ? 0.0 : diag.sup_tail.back();
  const double first = diag.sup_tail.empty() ? 0.0 : diag.sup_tail.front();
  if (last == 0.0)
    diag.verdict = "bounded";
  else if (last >= first)  // tails are nonincreasing in M; no decay across the schedule
    diag.verdict = "divergent";
  else
    diag.verdict = "inconclusive";
  return diag;
}

RandomVariable measurable_version(const RandomVariable& g, const Partition& partition,
                                  const Measure& q, double tol) {
  if (q.total_mass != 1.0) throw Error("measurable_version requires a probability measure");
  RandomVariable out(g.size(), 0.0);
  for (const auto& b : partition) {
    double mass = q.mass_of(b);
    double value;
    if (mass > 0.0) {
      bool have = false;
      double common = 0.0;
      for (auto a : b) {
        if (q.w[a] <= 0.0) continue;
        if (!have) { common = g[a]; have = true; }
        else if (std::abs(g[a] - common) > tol)
          throw Error("not measurable up to Q-null sets");
      }
      value = common;
    } else {
      double mn = infinity();
      for (auto a : b) mn = std::min(mn, g[a]);
      value = b.empty() ? 0.0 : mn;
    }
    for (auto a : b) out[a] = value;
  }
  return out;
}

}  // namespace defl::prob

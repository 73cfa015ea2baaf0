#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace defl::prob {

inline constexpr double kDefaultTol = 1e-9;
inline constexpr double kProbSumTol = 1e-12;

inline double infinity() { return std::numeric_limits<double>::infinity(); }

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Finite sample space: ordered atoms with labels and strictly positive
/// probabilities summing to one.
class SampleSpace {
public:
  SampleSpace() = default;
  explicit SampleSpace(std::vector<std::pair<std::string, double>> atoms);

  std::size_t size() const { return atoms_.size(); }
  const std::string& label(std::size_t i) const { return atoms_[i].first; }
  double prob(std::size_t i) const { return atoms_[i].second; }
  std::optional<std::size_t> index_of(const std::string& label) const;
  std::vector<double> probs() const;

private:
  std::vector<std::pair<std::string, double>> atoms_;
  std::vector<std::pair<std::string, std::size_t>> index_;  // sorted by label
};

using Block = std::vector<std::size_t>;
using Partition = std::vector<Block>;

/// Time grid plus a refining partition per grid point.
class Filtration {
public:
  Filtration() = default;
  Filtration(std::vector<double> times, std::vector<Partition> partitions);

  std::size_t time_count() const { return times_.size(); }
  double time(std::size_t i) const { return times_[i]; }
  const std::vector<double>& times() const { return times_; }
  const Partition& partition(std::size_t time_idx) const { return partitions_[time_idx]; }
  /// Index of the block containing `atom` at `time_idx`; requires a valid partition.
  std::size_t block_of(std::size_t time_idx, std::size_t atom) const;
  std::optional<std::size_t> time_index(double t, double tol = 1e-12) const;

  /// Restriction to a subset of grid times (indices into the current grid).
  Filtration restricted(const std::vector<std::size_t>& time_indices) const;

private:
  std::vector<double> times_;
  std::vector<Partition> partitions_;
  std::vector<std::vector<std::size_t>> block_index_;  // [time][atom] -> block
};

/// Nonnegative weights per atom; total_mass is 1 for probability measures and
/// 0 for the null measure of Notation "0 else".
struct Measure {
  std::vector<double> w;
  double total_mass = 0.0;

  static Measure null_measure(std::size_t n) { return Measure{std::vector<double>(n, 0.0), 0.0}; }
  static Measure probability(std::vector<double> weights);
  bool is_null() const { return total_mass == 0.0; }
  double mass_of(const Block& block) const;
  std::size_t size() const { return w.size(); }
};

/// Extended-nonnegative-real valued random variable (one value per atom,
/// +infinity allowed).
struct RandomVariable {
  std::vector<double> v;

  RandomVariable() = default;
  explicit RandomVariable(std::vector<double> values) : v(std::move(values)) {}
  RandomVariable(std::initializer_list<double> values) : v(values) {}
  RandomVariable(std::size_t n, double fill) : v(n, fill) {}

  std::size_t size() const { return v.size(); }
  double operator[](std::size_t i) const { return v[i]; }
  double& operator[](std::size_t i) { return v[i]; }

  /// Q[X >= m] under a probability measure.
  double tail_prob(const Measure& q, double m) const;
  double expectation(const Measure& q) const;
  double max_on_support(const Measure& q) const;
};

/// Family of random variables, either materialized or generated on demand
/// with a hard index bound.
struct RvFamily {
  std::function<RandomVariable(std::size_t)> at;
  std::size_t count = 0;

  static RvFamily from_list(std::vector<RandomVariable> list);
};

struct BoundednessDiagnostic {
  std::vector<double> m_schedule;
  std::vector<double> sup_tail;  // sup over the family of Q[X >= M], per M
  double max_value = 0.0;        // exact max of the (truncated) family on the q-support
  bool truncated = false;        // family sampled only up to its bound
  std::string verdict;           // "bounded" | "divergent" | "inconclusive"
};

// --- operations -----------------------------------------------------------

/// Collects every violated invariant of the pair (space, filtration).
/// Diagnostic only; an empty list means valid.
std::vector<std::string> validate_space(const SampleSpace& space, const Filtration& filtration);

/// P[. | event]; returns the null measure when the event is uncharged.
Measure condition_on_event(const Measure& p, const Block& event);

/// Blockwise q-weighted average; 0 on q-null blocks. Throws "nonintegrable"
/// when x is infinite on a q-positive atom.
RandomVariable conditional_expectation(const RandomVariable& x, const Partition& partition,
                                       const Measure& q);

/// Tail-probability table sup_X Q[X >= M] over the family for each M in the
/// schedule, with a bounded/divergent/inconclusive verdict.
BoundednessDiagnostic boundedness_diagnostic(const RvFamily& family, const Measure& q,
                                             const std::vector<double>& m_schedule);

/// G-measurable Q-version of g: the common q-a.s. value on q-positive blocks,
/// the block minimum on q-null blocks. Throws when g is not q-a.s. constant
/// per block.
RandomVariable measurable_version(const RandomVariable& g, const Partition& partition,
                                  const Measure& q, double tol = kDefaultTol);

}  // namespace defl::prob

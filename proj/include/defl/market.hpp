#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "defl/prob_space.hpp"

namespace defl::market {

using prob::Block;
using prob::Filtration;
using prob::Measure;
using prob::RandomVariable;
using prob::SampleSpace;

/// Nonnegative wealth matrix, rows = atoms, columns = grid times.
/// X_0 = 1 and values are absorbed at zero.
struct WealthProcess {
  std::string name;
  std::vector<std::vector<double>> values;  // [atom][time]

  std::size_t atom_count() const { return values.size(); }
  std::size_t time_count() const { return values.empty() ? 0 : values[0].size(); }
  double at(std::size_t atom, std::size_t time) const { return values[atom][time]; }
  RandomVariable column(std::size_t time) const;
};

/// Validated constructor; throws on X_0 != 1 or a rebound after zero.
WealthProcess make_wealth_process(std::string name, std::vector<std::vector<double>> matrix);

struct ParametricFamily {
  enum class Kind { example_2_8, tabulated };
  Kind kind = Kind::example_2_8;
  std::size_t n_min = 1;
  std::size_t n_max = 256;
  std::vector<double> grid;  // times the members are sampled on
  // tabulated members, indexed n -> matrix
  std::map<std::size_t, std::vector<std::vector<double>>> tabulated;

  std::size_t count(std::size_t n_cap) const;
  /// Member for parameter n, materialized on the grid (atom count `atoms`).
  WealthProcess member(std::size_t n, std::size_t atoms) const;
  /// Single column of member n without materializing the whole process.
  RandomVariable member_column(std::size_t n, std::size_t time_idx, std::size_t atoms) const;
};

/// Eq.-(2.3) family: X^n_t = min{1 + (2n-2) t, 2n - 2n t}, clamped at 0.
ParametricFamily example_family(const std::vector<double>& grid);

struct Market {
  SampleSpace space;
  Filtration filtration;
  std::vector<WealthProcess> generators;
  std::vector<ParametricFamily> families;
  bool adapted = false;  // every generator block-constant at every time

  std::size_t atom_count() const { return space.size(); }
  std::size_t time_count() const { return filtration.time_count(); }
  Measure p() const { return Measure::probability(space.probs()); }
  /// Column view of all generators plus family members with parameter <= n_cap.
  std::vector<RandomVariable> value_set(std::size_t time_idx, std::size_t n_cap) const;
  /// Generators plus materialized family members (the checked asset list).
  std::vector<WealthProcess> assets(std::size_t n_cap) const;
  /// Market restricted to a sub-grid (indices into the current time grid).
  Market restricted(const std::vector<std::size_t>& time_indices) const;
};

Market make_market(SampleSpace space, Filtration filtration, std::vector<WealthProcess> generators,
                   std::vector<ParametricFamily> families = {});

bool is_adapted(const WealthProcess& x, const Filtration& f);

/// Per-atom first-zero time (infinity when never zero) plus the induced law.
struct CrashTimeProfile {
  std::vector<double> tau;                  // per atom, grid time or +infinity
  std::map<double, double> distribution;    // time (or +infinity) -> mass

  Block atoms_with(double t) const;
  Block atoms_in_interval(double r, double u) const;  // {tau in (r, u]}
};

CrashTimeProfile process_crash_time(const WealthProcess& x, const Filtration& f,
                                    const SampleSpace& space);

/// Eq. (2.1): before s copy x1; from s on, follow x2 ratios on `a` where
/// x2_s > 0 (keep x1 where dead), symmetrically x3 on the complement.
/// `a` must be a union of partition blocks at s.
WealthProcess fork_combine(const WealthProcess& x1, const WealthProcess& x2,
                           const WealthProcess& x3, std::size_t s_idx, const Block& a,
                           const Filtration& f);

WealthProcess convex_combine(double lambda, const WealthProcess& x1, const WealthProcess& x2);

/// Seed-deterministic fork-convex-hull sample of `count` processes, each built
/// from at most `depth` fork/convex operations over the market assets.
std::vector<WealthProcess> hull_sample(const Market& m, std::size_t depth, std::uint64_t seed,
                                       std::size_t count = 20, std::size_t n_cap = 256);

/// Exhaustive single-switch extreme points; only for tiny markets
/// (<= 3 times, <= 2 generators, <= 2 blocks per partition).
std::vector<WealthProcess> hull_exhaustive(const Market& m);

struct NumeraireCertificate {
  std::optional<std::size_t> index;  // generator index when found
  std::vector<std::string> checked_pairs;
  std::string counterexample;  // set when no generalized numeraire exists
};

/// First generator that vanishes only where every checked asset vanishes
/// (Def. of a generalized numeraire), with the checked-pair certificate.
NumeraireCertificate find_generalized_numeraire(const Market& m, std::size_t n_cap);

}  // namespace defl::market

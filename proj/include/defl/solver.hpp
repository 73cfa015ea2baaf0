#pragma once

#include <vector>

#include "defl/prob_space.hpp"

namespace defl::solver {

using prob::Measure;
using prob::RandomVariable;

/// Output of the maximal-element (static deflator) solve.
struct StaticDeflatorResult {
  std::vector<double> weights;     // convex weights over the input columns
  RandomVariable f_hat;            // \sum_i weights[i] * g_i, zero off the support
  std::vector<std::size_t> support;  // atoms where f_hat > 0
  double kkt_residual = 0.0;       // max_i (E_q[g_i / f_hat 1_S] - q[S])_+
  double objective = 0.0;          // sum_{S} q log f_hat
  std::size_t iterations = 0;
  bool converged = true;
};

struct SolverOptions {
  double tol = 1e-10;
  std::size_t max_iterations = 50000;
};

/// Unique maximal element f_hat of conv{g_i} under q: the log-optimal convex
/// combination on S = union of q-positive supports, certified by
/// E_q[g_i / f_hat] <= 1 with the 0/0 := 0 convention.
///
/// All-zero input (S empty) legally returns the zero variable with empty
/// support. Non-convergence after max_iterations throws with the residual.
StaticDeflatorResult maximal_element(const std::vector<RandomVariable>& generator_columns,
                                     const Measure& q, SolverOptions opts = {});

/// E_q[g / f] with 0/0 := 0; +inf when g > 0 meets f = 0 on a q-positive atom.
double deflated_expectation(const RandomVariable& g, const RandomVariable& f, const Measure& q);

}  // namespace defl::solver

#include "defl/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace defl::solver {

namespace {

// dense Gaussian elimination with partial pivoting; returns false when singular
bool solve_linear(std::vector<std::vector<double>>& a, std::vector<double>& b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-300) return false;
    std::swap(a[pivot], a[col]);
    std::swap(b[pivot], b[col]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double factor = a[r][col] / a[col][col];
      if (factor == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  for (std::size_t i = 0; i < n; ++i) b[i] /= a[i][i];
  return true;
}

double objective_on(const std::vector<std::size_t>& support, const Measure& q,
                    const std::vector<double>& f) {
  double phi = 0.0;
  for (auto a : support) {
    if (f[a] <= 0.0) return -prob::infinity();
    phi += q.w[a] * std::log(f[a]);
  }
  return phi;
}

void mix_columns(const std::vector<RandomVariable>& cols, const std::vector<double>& lam,
                 const std::vector<std::size_t>& support, std::vector<double>& f) {
  for (auto a : support) {
    double s = 0.0;
    for (std::size_t i = 0; i < cols.size(); ++i) s += lam[i] * cols[i][a];
    f[a] = s;
  }
}

}  // namespace

double deflated_expectation(const RandomVariable& g, const RandomVariable& f, const Measure& q) {
  double s = 0.0;
  for (std::size_t a = 0; a < g.size(); ++a) {
    if (q.w[a] <= 0.0) continue;
    if (g[a] == 0.0) continue;  // 0/0 := 0 falls under this branch
    if (f[a] <= 0.0) return prob::infinity();
    s += q.w[a] * g[a] / f[a];
  }
  return s;
}

StaticDeflatorResult maximal_element(const std::vector<RandomVariable>& cols, const Measure& q,
                                     SolverOptions opts) {
  if (cols.empty()) throw prob::Error("maximal_element: no generator columns");
  if (q.total_mass != 1.0) throw prob::Error("maximal_element requires a probability measure");
  const std::size_t n = cols.size();
  const std::size_t natoms = q.size();

  std::vector<std::size_t> support;
  for (std::size_t a = 0; a < natoms; ++a) {
    if (q.w[a] <= 0.0) continue;
    for (std::size_t i = 0; i < n; ++i)
      if (cols[i][a] > 0.0) { support.push_back(a); break; }
  }

  StaticDeflatorResult res;
  res.weights.assign(n, 1.0 / static_cast<double>(n));
  res.f_hat = RandomVariable(natoms, 0.0);
  if (support.empty()) return res;  // the set may die; zero variable, empty support
  res.support = support;

  double qS = 0.0;
  for (auto a : support) qS += q.w[a];

  std::vector<double> lam(n, 1.0 / static_cast<double>(n));
  std::vector<double> f(natoms, 0.0), f_trial(natoms, 0.0), grad(n, 0.0);
  mix_columns(cols, lam, support, f);
  double phi = objective_on(support, q, f);

  auto gradient = [&](const std::vector<double>& fv) {
    for (std::size_t i = 0; i < n; ++i) {
      double c = 0.0;
      for (auto a : support)
        if (cols[i][a] > 0.0) c += q.w[a] * cols[i][a] / fv[a];
      grad[i] = c;
    }
  };

  gradient(f);
  auto residual_of = [&]() {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r = std::max(r, grad[i] - qS);
    return r;
  };

  double eta = 1.0;
  double residual = residual_of();
  std::vector<double> lam_trial(n);
  std::size_t iter = 0;
  // push well below the certified tolerance when cheap; throw only above opts.tol
  const double target = std::clamp(opts.tol * 1e-4, 1e-14, 1.0);

  auto frank_wolfe_step = [&]() {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (grad[i] > grad[best]) best = i;
    // concave 1-d line search toward the best vertex
    double lo = 0.0, hi = 1.0;
    auto eval = [&](double g) {
      for (auto a : support) f_trial[a] = (1.0 - g) * f[a] + g * cols[best][a];
      return objective_on(support, q, f_trial);
    };
    for (int it = 0; it < 70; ++it) {
      double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (eval(m1) < eval(m2)) lo = m1; else hi = m2;
    }
    double gamma = 0.5 * (lo + hi);
    double cand = eval(gamma);
    if (cand > phi) {
      for (std::size_t i = 0; i < n; ++i) lam[i] *= (1.0 - gamma);
      lam[best] += gamma;
      for (auto a : support) f[a] = f_trial[a];
      phi = cand;
      gradient(f);
      residual = residual_of();
    }
  };

  // equality-constrained Newton step on the active face; quadratic tail
  // convergence where mirror descent only crawls
  auto newton_step = [&]() -> bool {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < n; ++i)
      if (lam[i] > 1e-13) active.push_back(i);
    if (active.empty()) return false;
    const std::size_t na = active.size();
    std::vector<std::vector<double>> kkt(na + 1, std::vector<double>(na + 1, 0.0));
    std::vector<double> rhs(na + 1, 0.0);
    for (std::size_t ii = 0; ii < na; ++ii) {
      for (std::size_t jj = ii; jj < na; ++jj) {
        double h = 0.0;
        for (auto a : support) {
          double gi = cols[active[ii]][a], gj = cols[active[jj]][a];
          if (gi != 0.0 && gj != 0.0) h -= q.w[a] * gi * gj / (f[a] * f[a]);
        }
        kkt[ii][jj] = h;
        kkt[jj][ii] = h;
      }
      kkt[ii][na] = -1.0;
      kkt[na][ii] = 1.0;
      rhs[ii] = -grad[active[ii]];
    }
    if (!solve_linear(kkt, rhs)) return false;
    // stay inside the simplex face
    double tmax = 1.0;
    for (std::size_t ii = 0; ii < na; ++ii)
      if (rhs[ii] < 0.0) tmax = std::min(tmax, -lam[active[ii]] / rhs[ii]);
    if (!(tmax > 0.0) || !std::isfinite(tmax)) return false;
    for (double t = tmax; t > 1e-8; t *= 0.5) {
      lam_trial = lam;
      for (std::size_t ii = 0; ii < na; ++ii)
        lam_trial[active[ii]] = std::max(lam[active[ii]] + t * rhs[ii], 0.0);
      double z = 0.0;
      for (double x : lam_trial) z += x;
      for (auto& x : lam_trial) x /= z;
      mix_columns(cols, lam_trial, support, f_trial);
      double phi_trial = objective_on(support, q, f_trial);
      if (phi_trial >= phi) {
        bool moved = phi_trial > phi;
        lam.swap(lam_trial);
        f.swap(f_trial);
        phi = phi_trial;
        gradient(f);
        residual = residual_of();
        return moved;
      }
    }
    return false;
  };

  while (iter < opts.max_iterations) {
    if (residual <= target) break;
    ++iter;
    if (iter % 4 == 0 && newton_step() && residual <= target) break;

    // entropic mirror-descent step with softmax stabilization
    double emax = -prob::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      double e = eta * (grad[i] - qS) / qS;
      lam_trial[i] = e;
      emax = std::max(emax, e);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      lam_trial[i] = lam[i] * std::exp(std::max(lam_trial[i] - emax, -700.0));
      z += lam_trial[i];
    }
    bool accepted = false;
    if (z > 0.0) {
      for (std::size_t i = 0; i < n; ++i) lam_trial[i] /= z;
      mix_columns(cols, lam_trial, support, f_trial);
      double phi_trial = objective_on(support, q, f_trial);
      if (phi_trial >= phi - 1e-15) {
        lam.swap(lam_trial);
        f.swap(f_trial);
        phi = phi_trial;
        eta = std::min(eta * 1.25, 1e4);
        accepted = true;
      }
    }
    if (!accepted) {
      eta *= 0.5;
      if (eta < 1e-10) {
        frank_wolfe_step();
        eta = 1.0;
      }
    }
    if (iter % 64 == 0 || accepted) {
      gradient(f);
      residual = residual_of();
    }
  }
  gradient(f);
  residual = residual_of();

  res.weights = lam;
  res.kkt_residual = std::max(residual, 0.0);
  res.objective = phi;
  res.iterations = iter;
  res.converged = residual <= opts.tol;
  for (std::size_t a = 0; a < natoms; ++a) res.f_hat[a] = 0.0;
  for (auto a : support) res.f_hat[a] = f[a];

  if (!res.converged) {
    std::ostringstream os;
    os << "maximal_element did not converge: kkt residual " << residual << " after " << iter
       << " iterations";
    throw prob::Error(os.str());
  }
  return res;
}

}  // namespace defl::solver

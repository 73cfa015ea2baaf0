#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "defl/solver.hpp"
#include "oracle.hpp"

using namespace defl;
using prob::Measure;
using prob::RandomVariable;
using solver::deflated_expectation;
using solver::maximal_element;

TEST_CASE("single generator: f_hat is the generator itself") {
  Measure q = Measure::probability({0.5, 0.5});
  auto res = maximal_element({RandomVariable({2.0, 0.0})}, q);
  CHECK(res.weights.size() == 1);
  CHECK(res.weights[0] == doctest::Approx(1.0));
  CHECK(res.f_hat[0] == doctest::Approx(2.0));
  CHECK(res.f_hat[1] == 0.0);
  CHECK(res.kkt_residual <= 1e-10);
  // E[g/g 1_S] = q[S]
  CHECK(deflated_expectation(RandomVariable({2.0, 0.0}), res.f_hat, q) == doctest::Approx(0.5));
}

TEST_CASE("symmetric two-generator optimum is the even mix") {
  Measure q = Measure::probability({0.5, 0.5});
  std::vector<RandomVariable> cols{RandomVariable({2.0, 0.0}), RandomVariable({0.0, 2.0})};
  auto res = maximal_element(cols, q);
  CHECK(res.weights[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(res.f_hat[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(res.f_hat[1] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(deflated_expectation(cols[0], res.f_hat, q) == doctest::Approx(1.0).epsilon(1e-8));

  auto grid = oracle::simplex_grid_search(cols, q, 1e-3);
  CHECK(std::abs(res.objective - grid.objective) <= 1e-6);
}

TEST_CASE("log-optimal weight concentrates on the dominant payoff") {
  // both generators live on atom 0 only; the larger one wins outright
  Measure q = Measure::probability({0.5, 0.5});
  std::vector<RandomVariable> cols{RandomVariable({1.0, 0.0}), RandomVariable({3.0, 0.0})};
  auto res = maximal_element(cols, q);
  REQUIRE(res.support.size() == 1);
  CHECK(res.support[0] == 0);
  CHECK(res.weights[1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(res.f_hat[0] == doctest::Approx(3.0).epsilon(1e-6));
  double e = deflated_expectation(cols[0], res.f_hat, q);
  CHECK(e == doctest::Approx(1.0 / 6.0).epsilon(1e-6));
  CHECK(e <= 1.0);
}

TEST_CASE("all-zero generators return the zero variable with empty support") {
  Measure q = Measure::probability({0.5, 0.5});
  auto res = maximal_element({RandomVariable({0.0, 0.0})}, q);
  CHECK(res.support.empty());
  CHECK(res.f_hat[0] == 0.0);
  CHECK(res.f_hat[1] == 0.0);
}

TEST_CASE("support excludes q-null atoms") {
  Measure q = Measure::probability({0.0, 1.0});
  auto res = maximal_element({RandomVariable({5.0, 2.0})}, q);
  REQUIRE(res.support.size() == 1);
  CHECK(res.support[0] == 1);
  CHECK(res.f_hat[0] == 0.0);  // off-support selection is zero
  CHECK(res.f_hat[1] == doctest::Approx(2.0));
}

TEST_CASE("scaling invariance: c * generators gives c * f_hat and the same weights") {
  std::mt19937_64 rng(99);
  Measure q = Measure::probability({0.3, 0.3, 0.4});
  std::vector<RandomVariable> cols{RandomVariable({2.0, 0.5, 1.0}),
                                   RandomVariable({0.5, 2.5, 1.0})};
  auto base = maximal_element(cols, q);
  for (double c : {0.25, 3.0, 117.0}) {
    std::vector<RandomVariable> scaled;
    for (const auto& g : cols) {
      RandomVariable s(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) s[i] = c * g[i];
      scaled.push_back(s);
    }
    auto res = maximal_element(scaled, q);
    for (std::size_t i = 0; i < base.weights.size(); ++i)
      CHECK(res.weights[i] == doctest::Approx(base.weights[i]).epsilon(1e-9));
    for (std::size_t a = 0; a < 3; ++a)
      CHECK(res.f_hat[a] == doctest::Approx(c * base.f_hat[a]).epsilon(1e-9));
  }
}

TEST_CASE("maximality certificate covers generators and random convex combinations") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t atoms = 2 + oracle::pick(rng, 3);
    std::size_t n = 1 + oracle::pick(rng, 3);
    std::vector<double> w(atoms);
    double tot = 0.0;
    for (auto& x : w) { x = 0.1 + oracle::unit(rng); tot += x; }
    for (auto& x : w) x /= tot;
    Measure q = Measure::probability(w);
    std::vector<RandomVariable> cols;
    for (std::size_t i = 0; i < n; ++i) {
      RandomVariable g(atoms, 0.0);
      for (std::size_t a = 0; a < atoms; ++a)
        g[a] = oracle::unit(rng) < 0.25 ? 0.0 : oracle::uniform(rng, 0.5, 2.5);
      cols.push_back(g);
    }
    bool all_zero = true;
    for (const auto& g : cols)
      for (std::size_t a = 0; a < atoms; ++a) all_zero = all_zero && g[a] == 0.0;
    if (all_zero) continue;

    auto res = maximal_element(cols, q);
    for (const auto& g : cols) CHECK(deflated_expectation(g, res.f_hat, q) <= 1.0 + 1e-9);
    for (int mix = 0; mix < 200; ++mix) {
      std::vector<double> lam(n);
      double s = 0.0;
      for (auto& x : lam) { x = oracle::unit(rng); s += x; }
      RandomVariable h(atoms, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < atoms; ++a) h[a] += lam[i] / s * cols[i][a];
      CHECK(deflated_expectation(h, res.f_hat, q) <= 1.0 + 1e-9);
    }
    // support law: {f_hat = 0} is contained in {g = 0}, atomwise on the q-support
    for (const auto& g : cols)
      for (std::size_t a = 0; a < atoms; ++a)
        if (q.w[a] > 0.0 && res.f_hat[a] == 0.0) CHECK(g[a] == 0.0);
  }
}

TEST_CASE("solver matches the simplex grid-search oracle on small instances") {
  std::mt19937_64 rng(7);
  int checked = 0;
  while (checked < 12) {
    std::size_t atoms = 2 + oracle::pick(rng, 3);  // <= 4
    std::size_t n = 1 + oracle::pick(rng, 3);      // <= 3
    std::vector<double> w(atoms);
    double tot = 0.0;
    for (auto& x : w) { x = 0.1 + oracle::unit(rng); tot += x; }
    for (auto& x : w) x /= tot;
    Measure q = Measure::probability(w);
    std::vector<RandomVariable> cols;
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      RandomVariable g(atoms, 0.0);
      for (std::size_t a = 0; a < atoms; ++a) {
        g[a] = oracle::unit(rng) < 0.2 ? 0.0 : oracle::uniform(rng, 0.5, 2.0);
        any = any || g[a] > 0.0;
      }
      cols.push_back(g);
    }
    if (!any) continue;
    ++checked;

    auto res = maximal_element(cols, q);
    auto grid = oracle::simplex_grid_search(cols, q, 1e-3);
    CHECK(std::abs(res.objective - grid.objective) <= 1e-6);
    for (std::size_t a = 0; a < atoms; ++a)
      CHECK(std::abs(res.f_hat[a] - grid.f_hat[a]) <= 1e-3);
    CHECK(res.kkt_residual <= 1e-6);
  }
}

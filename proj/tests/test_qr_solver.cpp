#include <doctest.h>

#include <cmath>
#include <random>

#include "error.hpp"
#include "oracles.hpp"
#include "qr_solver.hpp"

using namespace eqc;

TEST_CASE("check loss on small residual sets") {
  CHECK(check_loss(std::vector<double>{1.0, -1.0}, 0.5) == doctest::Approx(1.0));
  CHECK(check_loss(std::vector<double>{-1.0}, 0.05) == doctest::Approx(0.95));
  CHECK(check_loss(std::vector<double>{2.0, -3.0}, 0.25) == doctest::Approx(2.75));
  CHECK(check_loss(std::vector<double>{0.0, 0.0}, 0.3) == 0.0);
  CHECK_THROWS_AS(check_loss(std::vector<double>{NAN}, 0.3), Error);
  CHECK_THROWS_AS(check_loss(std::vector<double>{1.0}, 1.0), Error);
}

TEST_CASE("order_rank treats decimal products as integers") {
  CHECK(order_rank(0.07, 100) == 7);
  CHECK(order_rank(0.1, 100) == 10);
  CHECK(order_rank(0.1, 12) == 2);
  CHECK(order_rank(0.05, 40000) == 2000);
  CHECK(order_rank(0.001, 10) == 1);
}

TEST_CASE("pooled quantile is the ceil(tau NT)-th order statistic") {
  const auto p = testing::panel_of(1 + 1, 3, {5, 1, 4, 2, 3, 6});
  CHECK(pooled_quantile(p, 0.5).beta[0] == 3.0);

  const auto c = testing::panel_of(2, 2, {7.5, 7.5, 7.5, 7.5});
  for (double tau : {0.01, 0.3, 0.99}) CHECK(pooled_quantile(c, tau).beta[0] == 7.5);

  const auto r = testing::panel_of(4, 3, {3.2, -1.5, 0.7, 2.2, -0.4, 5.1, 1.9, -2.8, 0.3, 4.4,
                                          -1.1, 2.6});
  const double oracle = testing::scan_quantile(testing::pooled(r), 0.1);
  CHECK(oracle == -1.5);
  CHECK(pooled_quantile(r, 0.1).beta[0] == -1.5);
  CHECK_THROWS_AS(pooled_quantile(r, 0.0), Error);
}

TEST_CASE("pooled quantile properties on random panels") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> taus(0.01, 0.99);
  for (int rep = 0; rep < 200; ++rep) {
    const auto p = testing::random_normal_panel(rng, 2 + rep % 5, 2 + rep % 7);
    const double tau = taus(rng);
    const auto fit = pooled_quantile(p, tau);
    const double b = fit.beta[0];
    const auto y = testing::pooled(p);
    // subgradient condition
    std::size_t below = 0;
    std::size_t at_or_below = 0;
    for (double v : y) {
      below += v < b;
      at_or_below += v <= b;
    }
    const double tnt = tau * static_cast<double>(y.size());
    CHECK(static_cast<double>(below) <= tnt + 1e-9);
    CHECK(tnt <= static_cast<double>(at_or_below) + 1e-9);
    // oracle agreement
    CHECK(b == testing::scan_quantile(y, tau));
    // objective
    std::vector<double> r;
    for (double v : y) r.push_back(v - b);
    CHECK(fit.objective == doctest::Approx(testing::naive_loss(r, tau)).epsilon(1e-9));
    // equivariance
    std::vector<double> z(y);
    for (double& v : z) v = 2.5 * v - 1.0;
    const auto q = PanelData(p.n(), p.t(), z);
    CHECK(pooled_quantile(q, tau).beta[0] == 2.5 * b - 1.0);
    // monotone in tau
    CHECK(pooled_quantile(p, std::min(0.999, tau + 0.05)).beta[0] >= b);
  }
}

TEST_CASE("order_statistics matches a full sort") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  std::vector<double> v(1000);
  for (double& x : v) x = z(rng);
  std::vector<double> sorted(v);
  std::sort(sorted.begin(), sorted.end());
  const std::vector<std::size_t> ranks{400, 7, 1000, 7, 1, 123};
  const auto got = order_statistics(v, ranks);
  for (std::size_t k = 0; k < ranks.size(); ++k) CHECK(got[k] == sorted[ranks[k] - 1]);
  SortedSample s(sorted);
  CHECK(s.quantile(0.123) == sorted[122]);
}

TEST_CASE("intercept-only regression equals the pooled quantile exactly") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = testing::random_normal_panel(rng, 5, 4, 1);
    for (double tau : {0.1, 0.25, 0.5}) {
      CHECK(fit_linear_quantile(p, tau).beta[0] == pooled_quantile(p, tau).beta[0]);
      CHECK(brute_force_fit(p, tau).beta[0] == pooled_quantile(p, tau).beta[0]);
    }
  }
}

TEST_CASE("noiseless line is interpolated at every tau") {
  std::vector<double> y;
  std::vector<double> x;
  for (int c = 0; c < 20; ++c) {
    const double xc = 0.37 * c - 2.0;
    x.insert(x.end(), {1.0, xc});
    y.push_back(1.0 + 2.0 * xc);
  }
  const PanelData p(4, 5, y, 2, x);
  for (double tau : {0.05, 0.3, 0.5, 0.9}) {
    const auto fit = fit_linear_quantile(p, tau);
    CHECK(fit.beta[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit.beta[1] == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(std::abs(fit.objective) < 1e-9);
  }
}

TEST_CASE("two parallel lines: hand enumeration minimum") {
  const PanelData p(2, 3, {0, 1, 2, 1, 2, 3}, 2, {1, 0, 1, 1, 1, 2, 1, 0, 1, 1, 1, 2});
  // Minimum over the 12 nonsingular candidate lines (of 15 pairs) is 1.5.
  const auto brute = brute_force_fit(p, 0.5);
  CHECK(brute.objective == doctest::Approx(1.5).epsilon(1e-12));
  const auto ipm = fit_linear_quantile(p, 0.5);
  CHECK(ipm.objective == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("interior point agrees with enumeration on random small instances") {
  std::mt19937_64 rng(99);
  int converged = 0;
  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t d = 2 + rep % 2;
    const auto p = testing::random_normal_panel(rng, 5, 4, d);
    const double tau = 0.2;
    const auto ipm = fit_linear_quantile(p, tau);
    const auto brute = brute_force_fit(p, tau);
    converged += ipm.converged;
    CHECK(std::abs(ipm.objective - brute.objective) <= 1e-8);
    CHECK(ipm.objective <= brute.objective + 1e-8);
    CHECK(ipm.objective ==
          doctest::Approx(panel_check_loss(p, ipm.beta, tau)).epsilon(1e-9));
  }
  CHECK(converged == 60);
}

TEST_CASE("raw interior point on intercept design matches enumeration") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = testing::random_normal_panel(rng, 4, 5, 1);
    const double tau = 0.25;
    const auto fit = solve_interior_point(design_matrix(p),
                                          Eigen::Map<const Eigen::VectorXd>(p.y_values().data(), 20),
                                          tau);
    CHECK(fit.converged);
    CHECK(fit.objective == doctest::Approx(brute_force_fit(p, tau).objective).epsilon(1e-10));
  }
}

TEST_CASE("regression equivariance in the outcome") {
  std::mt19937_64 rng(31);
  const auto p = testing::random_normal_panel(rng, 10, 10, 3);
  const double tau = 0.15;
  const auto fit = fit_linear_quantile(p, tau);
  std::vector<double> z(p.y_values().begin(), p.y_values().end());
  for (double& v : z) v = 3.0 * v + 4.0;
  const auto q = p.with_outcomes(z);
  const auto g = fit_linear_quantile(q, tau);
  CHECK(g.beta[0] == doctest::Approx(3.0 * fit.beta[0] + 4.0).epsilon(1e-7));
  CHECK(g.beta[1] == doctest::Approx(3.0 * fit.beta[1]).epsilon(1e-7));
  CHECK(g.beta[2] == doctest::Approx(3.0 * fit.beta[2]).epsilon(1e-7));
}

TEST_CASE("warm start and a larger problem converge") {
  std::mt19937_64 rng(77);
  const auto p = testing::random_normal_panel(rng, 100, 100, 4);
  const auto a = fit_linear_quantile(p, 0.05);
  CHECK(a.converged);
  CHECK(a.iterations < 60);
  SolverOptions opts;
  opts.warm_start = a.beta;
  const auto b = fit_linear_quantile(p, 0.1, opts);
  CHECK(b.converged);
  // perturbing beta cannot lower the loss
  for (std::size_t k = 0; k < a.beta.size(); ++k) {
    for (double h : {-1e-4, 1e-4}) {
      auto beta = a.beta;
      beta[k] += h;
      CHECK(panel_check_loss(p, beta, 0.05) >= a.objective - 1e-9);
    }
  }
}

TEST_CASE("brute force guards") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(brute_force_fit(testing::random_normal_panel(rng, 15, 15, 2), 0.3), Error);
  CHECK_THROWS_AS(brute_force_fit(testing::random_normal_panel(rng, 3, 3, 4), 0.3), Error);
}

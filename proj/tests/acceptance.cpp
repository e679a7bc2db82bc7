// Acceptance suite: one PASS/FAIL line per criterion on stdout, details on
// stderr. Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "mc_lab.hpp"
#include "oracles.hpp"
#include "qr_solver.hpp"
#include "reg_inference.hpp"
#include "uncond_inference.hpp"

using namespace eqc;

namespace {

const std::vector<double> kGrid{1.0, 1.5, 2.0, 2.5, 3.0};

// Reference coverage frequencies, rows sigma_alpha, columns sigma_gamma.
const double kReference005[5][5] = {{0.99, 0.95, 0.94, 0.95, 0.97},
                                     {0.96, 0.93, 0.96, 0.85, 0.94},
                                     {0.87, 0.94, 0.96, 0.95, 0.92},
                                     {0.94, 0.95, 0.95, 0.94, 0.93},
                                     {0.93, 0.96, 0.96, 0.92, 0.94}};
const double kReference001[5][5] = {{0.98, 0.87, 0.90, 0.92, 0.88},
                                     {0.91, 0.90, 0.91, 0.94, 0.90},
                                     {0.97, 0.94, 0.94, 0.91, 0.92},
                                     {0.95, 0.89, 0.90, 0.92, 0.87},
                                     {0.96, 0.94, 0.90, 0.93, 0.93}};

constexpr std::uint64_t kSeed = 42;

struct Outcome {
  bool pass = true;
  std::string summary;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  std::printf("criterion %d %s  %s  (%s)\n", id, o.pass ? "PASS" : "FAIL", title.c_str(),
              o.summary.c_str());
  std::fflush(stdout);
  failures += o.pass ? 0 : 1;
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_table(const std::string& label, const CoverageTable& t, std::size_t k,
                 const double (*reference)[5] = nullptr) {
  std::cerr << label << "\n";
  for (std::size_t r = 0; r < t.config.row_values.size(); ++r) {
    std::cerr << "  " << fmt(t.config.row_values[r], 1) << ":";
    for (std::size_t c = 0; c < t.cols(); ++c) {
      std::cerr << " " << fmt(t.at(k, r, c).coverage);
      if (reference) std::cerr << "(" << fmt(reference[r][c], 2) << ")";
      if (t.at(k, r, c).failures) std::cerr << "[f" << t.at(k, r, c).failures << "]";
    }
    std::cerr << "\n";
  }
}

CoverageTable factor_study(DesignFamily family, std::vector<double> taus, double m,
                           const std::vector<double>& rows, const std::vector<double>& cols) {
  SimDesign base;
  base.family = family;
  base.sigma_eps = 2.0;
  base.n = 200;
  base.t = 200;
  auto cfg = factor_grid(base, rows, cols);
  cfg.taus = std::move(taus);
  cfg.tuning.m = m;
  cfg.tuning.l = 2.0;
  cfg.reps = 1000;
  cfg.seed = kSeed;
  return run_coverage(cfg);
}

Outcome match_table(const CoverageTable& t, std::size_t k, const double (*reference)[5],
                    double cell_tol, double mean_tol) {
  double worst = 0.0;
  double total = 0.0;
  int outside = 0;
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      const double dev = std::abs(t.at(k, r, c).coverage - reference[r][c]);
      worst = std::max(worst, dev);
      total += dev;
      outside += dev > cell_tol + 1e-12;
    }
  const double mean = total / 25.0;
  Outcome o;
  o.pass = outside == 0 && (mean_tol <= 0.0 || mean <= mean_tol + 1e-12);
  o.summary = "max |dev| " + fmt(worst) + ", cells outside +/-" + fmt(cell_tol, 2) + ": " +
              std::to_string(outside) + "/25, mean |dev| " + fmt(mean, 4);
  if (mean_tol > 0.0) o.summary += " (limit " + fmt(mean_tol, 3) + ")";
  return o;
}

Outcome band(const CoverageTable& t, double lo, double hi) {
  double min_cov = 1.0;
  double max_cov = 0.0;
  int outside = 0;
  int cells = 0;
  for (std::size_t k = 0; k < t.cells.size(); ++k)
    for (const auto& cell : t.cells[k]) {
      min_cov = std::min(min_cov, cell.coverage);
      max_cov = std::max(max_cov, cell.coverage);
      outside += cell.coverage < lo || cell.coverage > hi;
      ++cells;
    }
  Outcome o;
  o.pass = outside == 0;
  o.summary = "coverage range [" + fmt(min_cov) + ", " + fmt(max_cov) + "], cells outside [" +
              fmt(lo, 2) + ", " + fmt(hi, 2) + "]: " + std::to_string(outside) + "/" +
              std::to_string(cells);
  return o;
}

// Collects named checks for the exact criteria.
struct Checks {
  int total = 0;
  std::vector<std::string> failed;
  void expect(bool ok, const std::string& what) {
    ++total;
    if (!ok && failed.size() < 5) failed.push_back(what);
    if (!ok && failed.size() >= 5 && failed.back() != "...") failed.push_back("...");
  }
  Outcome outcome(const std::string& label) const {
    Outcome o;
    o.pass = failed.empty();
    o.summary = std::to_string(total) + " " + label;
    if (!failed.empty()) {
      o.summary += "; failed:";
      for (const auto& f : failed) o.summary += " " + f;
    }
    return o;
  }
};

bool close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

PanelData quantile_grid(std::size_t n, std::size_t t, const std::function<double(double)>& q) {
  const double nt = static_cast<double>(n * t);
  std::vector<double> y(n * t);
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = q(static_cast<double>(k + 1) / nt);
  std::mt19937_64 rng(5);
  std::shuffle(y.begin(), y.end(), rng);
  return PanelData(n, t, std::move(y));
}

Outcome criterion5() {
  SimDesign base;
  base.n = 200;
  base.t = 200;
  auto cfg = pareto_grid(base, {0.25, 0.5});
  cfg.taus = {0.05};
  cfg.tuning.m = 2.0;
  cfg.tuning.l = 2.0;
  cfg.reps = 500;
  cfg.seed = kSeed;
  const auto t = run_coverage(cfg);
  Outcome o;
  std::ostringstream s;
  for (std::size_t r = 0; r < 2; ++r) {
    const double truth = cfg.row_values[r];
    const double med = t.cells[0][r].xi_hat_median;
    o.pass &= std::abs(med - truth) <= 0.1;
    s << "xi " << fmt(truth, 2) << ": median " << fmt(med) << "; ";
  }
  for (double xi : {0.25, 0.5}) {
    const auto p = quantile_grid(40, 50, [xi](double u) { return -std::pow(u, -xi); });
    const double got = tail_index(p, 0.05, 2.0, 2.0).xi_hat;
    o.pass &= std::abs(got - xi) <= 1e-10;
    s << "closed form " << fmt(xi, 2) << " -> err " << std::abs(got - xi) << "; ";
  }
  o.summary = s.str();
  o.summary.resize(o.summary.size() - 2);
  return o;
}

Outcome criterion6() {
  std::mt19937_64 rng(kSeed);
  Checks checks;
  double worst = 0.0;
  const double taus[3] = {0.1, 0.25, 0.5};
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_int_distribution<std::size_t> side(2, 7);
  int instances = 0;
  while (instances < 200) {
    std::size_t n = side(rng);
    std::size_t t = side(rng);
    if (n * t > 60) continue;
    const std::size_t d = static_cast<std::size_t>(dim(rng));
    const auto p = testing::random_normal_panel(rng, n, t, d);
    const double tau = taus[instances % 3];
    const auto ipm = fit_linear_quantile(p, tau);
    const auto brute = brute_force_fit(p, tau);
    const double gap = std::abs(ipm.objective - brute.objective);
    worst = std::max(worst, gap);
    checks.expect(gap <= 1e-8, "objective n=" + std::to_string(n) + " t=" + std::to_string(t) +
                                   " d=" + std::to_string(d));
    ++instances;
  }
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = testing::random_normal_panel(rng, 3 + rep % 6, 4 + rep % 5, 1);
    for (double tau : taus) {
      const double pooled = pooled_quantile(p, tau).beta[0];
      checks.expect(fit_linear_quantile(p, tau).beta[0] == pooled, "intercept reduction");
      checks.expect(brute_force_fit(p, tau).beta[0] == pooled, "brute intercept reduction");
    }
  }
  auto o = checks.outcome("checks");
  o.summary += ", max objective gap " + [&] {
    std::ostringstream s;
    s << worst;
    return s.str();
  }();
  return o;
}

Outcome criterion7() {
  Checks c;
  std::mt19937_64 rng(kSeed + 7);
  TuningParams tuning;

  // location-scale equivariance of beta_hat and CI endpoints, xi_hat invariance
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = testing::random_normal_panel(rng, 30 + rep, 40);
    const double a = 0.5 + 0.1 * rep;
    const double b = -3.0 + 0.2 * rep;
    std::vector<double> z(testing::pooled(p));
    for (double& v : z) v = a * v + b;
    const PanelData q(p.n(), p.t(), z);
    const auto base = infer(p, 0.05, tuning);
    const auto moved = infer(q, 0.05, tuning);
    c.expect(close(moved.beta_hat, a * base.beta_hat + b, 1e-12), "beta equivariance");
    c.expect(close(moved.ci_low, a * base.ci_low + b, 1e-10), "ci_low equivariance");
    c.expect(close(moved.ci_high, a * base.ci_high + b, 1e-10), "ci_high equivariance");
    c.expect(std::abs(moved.xi_hat - base.xi_hat) <= 1e-10, "xi invariance");
    c.expect(close(moved.rho_hat, base.rho_hat, 1e-10), "rho invariance");
  }
  // regression coefficients: Y -> aY + b
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = testing::random_normal_panel(rng, 15, 15, 3);
    std::vector<double> z(testing::pooled(p));
    for (double& v : z) v = 2.0 * v + 1.0;
    const auto f = fit_linear_quantile(p, 0.1);
    const auto g = fit_linear_quantile(p.with_outcomes(z), 0.1);
    c.expect(close(g.beta[0], 2.0 * f.beta[0] + 1.0, 1e-7) && close(g.beta[1], 2.0 * f.beta[1], 1e-7) &&
                 close(g.beta[2], 2.0 * f.beta[2], 1e-7),
             "regression equivariance");
  }
  // sigma2_hat under strictly increasing transforms
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = testing::random_normal_panel(rng, 10 + rep, 12);
    const double tau = 0.05 + 0.005 * rep;
    const double b = pooled_quantile(p, tau).beta[0];
    const double s = sigma2_hat(p, b, tau);
    for (int k = 0; k < 2; ++k) {
      std::vector<double> z(testing::pooled(p));
      for (double& v : z) v = k == 0 ? std::exp(v) : v * v * v + v;
      const PanelData q(p.n(), p.t(), z);
      c.expect(sigma2_hat(q, pooled_quantile(q, tau).beta[0], tau) == s, "sigma2 transform");
    }
  }
  // Sigma_hat PSD on 100 random panels
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t d = 2 + rep % 3;
    const auto p = testing::random_normal_panel(rng, 5 + rep % 11, 4 + rep % 9, d);
    const double tau = 0.05 + 0.004 * rep;
    const auto fit = fit_linear_quantile(p, tau);
    const auto s = sigma_hat_matrix(p, fit.beta, tau);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    c.expect((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0, "Sigma symmetric");
    c.expect(eig.eigenvalues().minCoeff() >= -1e-10 * s.trace(), "Sigma PSD");
  }
  // regression-to-unconditional reductions
  for (int rep = 0; rep < 20; ++rep) {
    const auto plain = testing::random_normal_panel(rng, 25, 20);
    std::vector<double> y(testing::pooled(plain));
    const PanelData p(plain.n(), plain.t(), y, 1, std::vector<double>(y.size(), 1.0));
    const double tau = 0.05 + 0.005 * rep;
    const double b = pooled_quantile(plain, tau).beta[0];
    const std::vector<double> beta{b};
    const std::vector<double> one{1.0};
    c.expect(std::abs(fit_linear_quantile(p, tau).beta[0] - b) <= 1e-10, "fit reduction");
    c.expect(std::abs(score_vector(p, beta, tau)[0] - score(plain, b, tau)) <= 1e-10,
             "score reduction");
    c.expect(std::abs(sigma_hat_matrix(p, beta, tau)(0, 0) - sigma2_hat(plain, b, tau)) <= 1e-10,
             "Sigma reduction");
    const auto ti = tail_index(plain, tau, 2.0, 2.0);
    c.expect(std::abs(tail_index_reg(p, tau, 2.0, 2.0).xi_hat - ti.xi_hat) <= 1e-10,
             "xi reduction");
    const auto inf = infer(plain, tau, tuning);
    for (auto type : {TailType::Type1, TailType::Type2, TailType::Type3}) {
      TuningParams tt = tuning;
      tt.tail_type = type;
      const auto ci = infer_functional(p, tau, tt, one);
      c.expect(std::abs(ci.point - inf.beta_hat) <= 1e-10 &&
                   std::abs(ci.ci_low - inf.ci_low) <= 1e-10 &&
                   std::abs(ci.ci_high - inf.ci_high) <= 1e-10,
               "CI reduction");
    }
  }
  // Monte Carlo determinism across worker counts
  SimDesign d;
  d.n = 40;
  d.t = 40;
  for (auto family : {DesignFamily::Additive, DesignFamily::Interactive}) {
    d.family = family;
    auto cfg = factor_grid(d, {1.0, 2.0}, {1.0, 3.0});
    cfg.taus = {0.05, 0.01};
    cfg.reps = 50;
    cfg.seed = kSeed;
    std::string first;
    for (std::size_t workers : {1, 2, 4}) {
      cfg.workers = workers;
      std::ostringstream out;
      write_cells_csv(run_coverage(cfg), out);
      if (first.empty()) first = out.str();
      c.expect(out.str() == first, "determinism workers=" + std::to_string(workers));
    }
  }
  return c.outcome("invariant checks");
}

}  // namespace

int main() {
  const auto started = std::chrono::steady_clock::now();

  {
    const auto t = factor_study(DesignFamily::Additive, {0.05, 0.01}, 2.0, kGrid, kGrid);
    print_table("additive, tau = 0.05, m = 2 (reference in parentheses)", t, 0, kReference005);
    print_table("additive, tau = 0.01, m = 2 (reference in parentheses)", t, 1, kReference001);
    report(1, "Additive coverage grid vs reference, tau = 0.05", match_table(t, 0, kReference005, 0.05, 0.025));
    report(2, "Additive coverage grid vs reference, tau = 0.01", match_table(t, 1, kReference001, 0.06, 0.0));
  }
  {
    const auto t = factor_study(DesignFamily::Interactive, {0.05, 0.01}, 2.0, kGrid, kGrid);
    print_table("interactive, tau = 0.05", t, 0);
    print_table("interactive, tau = 0.01", t, 1);
    report(3, "Interactive design coverage band", band(t, 0.84, 1.00));
  }
  {
    const auto t = factor_study(DesignFamily::Additive, {0.05}, 2.0, {0.0}, {0.0});
    std::cerr << "degenerate: mean sigma2_hat " << fmt(t.cells[0][0].sigma2_mean) << "\n";
    auto o = band(t, 0.93, 1.00);
    o.summary += ", mean sigma2_hat " + fmt(t.cells[0][0].sigma2_mean);
    report(4, "Degenerate iid case", o);
  }
  report(5, "Tail-index recovery", criterion5());
  report(6, "Solver oracle equivalence", criterion6());
  report(7, "Invariant suite", criterion7());
  {
    Outcome all;
    std::ostringstream s;
    for (double m : {1.5, 3.0}) {
      const auto t = factor_study(DesignFamily::Additive, {0.05}, m, kGrid, kGrid);
      print_table("additive, tau = 0.05, m = " + fmt(m, 1), t, 0);
      const auto o = band(t, 0.84, 1.00);
      all.pass &= o.pass;
      s << "m " << fmt(m, 1) << ": " << o.summary << "; ";
    }
    all.summary = s.str();
    all.summary.resize(all.summary.size() - 2);
    report(8, "Sensitivity in m", all);
  }

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  std::printf("acceptance: %d of 8 criteria failed, %.1f s\n", failures, seconds);
  return failures == 0 ? 0 : 1;
}

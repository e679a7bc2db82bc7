#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "panel.hpp"

namespace eqc {

struct QuantileFit {
  double tau = 0.0;
  std::vector<double> beta;
  double objective = 0.0;  // sum of check losses at beta
  int iterations = 0;
  bool converged = false;
  double duality_gap = 0.0;
};

// sum_k u_k (tau - 1{u_k < 0}). Throws NonFinite on NaN/inf input.
double check_loss(std::span<const double> residuals, double tau);

// Check loss of Y - X'beta over the panel. Without covariates beta is a scalar.
double panel_check_loss(const PanelData& panel, std::span<const double> beta, double tau);

// 1-based rank k = ceil(tau * count), with tau*count within 1e-9 of an integer
// treated as that integer so decimal taus such as 0.07 * 100 give k = 7.
std::size_t order_rank(double tau, std::size_t count);

// k-th smallest values (1-based ranks, any order) by successive selection.
// `values` is permuted in place.
std::vector<double> order_statistics(std::span<double> values, std::span<const std::size_t> ranks);

// Pooled sample sorted once; answers many tau queries.
class SortedSample {
 public:
  explicit SortedSample(std::span<const double> values);
  double quantile(double tau) const;
  std::size_t size() const noexcept { return sorted_.size(); }

 private:
  std::vector<double> sorted_;
};

// Unconditional tau-quantile of the pooled panel: the ceil(tau*NT)-th order
// statistic, i.e. the lower end of the check-loss argmin interval.
QuantileFit pooled_quantile(const PanelData& panel, double tau);

struct SolverOptions {
  int max_iterations = 200;
  double gap_tolerance = 1e-8;  // relative to 1 + |objective|
  std::optional<std::vector<double>> warm_start;
  // Move the interior solution to an optimal basic solution when one is found
  // among the near-zero residuals.
  bool polish = true;
};

// Primal-dual interior point (Mehrotra predictor-corrector) for
//   min tau 1'u + (1-tau) 1'v  s.t.  y - X beta = u - v,  u, v >= 0,
// solved through its bounded dual  max y'a  s.t. X'a = (1-tau) X'1, 0 <= a <= 1.
// `design` is n x d. Returns converged = false with the best iterate when the
// gap criterion is not met.
QuantileFit solve_interior_point(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                 double tau, const SolverOptions& opts = {});

// Linear quantile regression over the pooled panel. Intercept-only designs
// reduce to pooled_quantile exactly.
QuantileFit fit_linear_quantile(const PanelData& panel, double tau,
                                const SolverOptions& opts = {});

// Exhaustive search over basic solutions (d-point interpolations).
// Guarded to NT <= 200 and d <= 3.
QuantileFit brute_force_fit(const PanelData& panel, double tau);

// Panel design as an NT x d matrix (a column of ones without covariates).
Eigen::MatrixXd design_matrix(const PanelData& panel);

}  // namespace eqc

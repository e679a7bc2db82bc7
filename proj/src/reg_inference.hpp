#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "panel.hpp"
#include "qr_solver.hpp"
#include "uncond_inference.hpp"

namespace eqc {

// Regression quantile fits at tau, m*tau, l*tau and m*l*tau.
struct QuantileLadder {
  double tau = 0.0;
  double m = 0.0;
  double l = 0.0;
  std::array<QuantileFit, 4> fits;  // tau, m tau, l tau, m l tau

  const std::vector<double>& at_tau() const { return fits[0].beta; }
  bool converged() const;
};

// l = 1 is allowed (the l tau fits then repeat the tau fits).
QuantileLadder fit_ladder(const PanelData& panel, double tau, double m, double l,
                          const SolverOptions& opts = {});

// Sample mean of X_it.
Eigen::VectorXd design_mean(const PanelData& panel);

// -(tau NT)^(-1/2) sum_it (tau - 1[Y_it < X_it' beta]) X_it.
Eigen::VectorXd score_vector(const PanelData& panel, std::span<const double> beta, double tau);

// Two-way cluster estimate of Var(W_NT): (1/tau NT) sum_i v_i v_i'
// + (1/tau NT) sum_t w_t w_t' + (1/NT) sum_it X_it X_it'.
Eigen::MatrixXd sigma_hat_matrix(const PanelData& panel, std::span<const double> beta_hat,
                                 double tau);

// x'(b(m l tau) - b(l tau)) / x_dot'(b(m tau) - b(tau)).
double rho_hat_x(const QuantileLadder& ladder, std::span<const double> x,
                 std::span<const double> x_dot);
double rho_hat_x(const PanelData& panel, double tau, double m, double l,
                 std::span<const double> x, std::span<const double> x_dot);

// Tail index from rho_hat at x = x_dot = design mean.
TailIndexEstimate tail_index_reg(const QuantileLadder& ladder, const Eigen::VectorXd& mu_x);
TailIndexEstimate tail_index_reg(const PanelData& panel, double tau, double m, double l);

struct TailWeights {
  std::vector<double> h_values;  // H(X_it), one per cell
  Eigen::MatrixXd q_h_hat;       // (1/NT) sum h^-1 X X'
};

// H(X_it) = rho_hat_{X_it, Xbar, 1} for Type 2/3 tails, 1 for Type 1.
// Throws NonPositiveH listing offending cells.
TailWeights estimate_h_and_qh(const PanelData& panel, std::span<const double> beta_tau,
                              std::span<const double> beta_mtau, TailType tail_type);
TailWeights estimate_h_and_qh(const PanelData& panel, double tau, double m, TailType tail_type);

struct RegTailInference {
  double tau = 0.0;
  bool upper = false;
  TailType tail_type = TailType::Type1;
  double m = 0.0;
  double l = 0.0;
  double alpha = 0.0;
  std::vector<double> beta_hat;
  QuantileLadder ladder;  // on the reflected sample when upper is set
  double xi_hat = 0.0;
  double rho_hat = 0.0;
  double a_hat = 0.0;
  double ev = 0.0;  // ev_factor(xi_hat, m)
  Eigen::VectorXd mu_x;
  Eigen::MatrixXd sigma_hat;
  Eigen::MatrixXd q_h_hat;
  std::vector<double> h_values;
  Eigen::MatrixXd q_h_inv;
  bool converged = true;
};

struct FunctionalCI {
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double std_error = 0.0;
};

RegTailInference infer_regression(const PanelData& panel, double tau, const TuningParams& tuning,
                                  bool upper = false, const SolverOptions& opts = {});

// CI for x'beta(tau) with half-width z |ev| sqrt(x' Q^-1 Sigma Q^-1 x) / a_hat.
FunctionalCI functional_ci(const RegTailInference& inf, std::span<const double> x);

FunctionalCI infer_functional(const PanelData& panel, double tau, const TuningParams& tuning,
                              std::span<const double> x, bool upper = false);

// a_hat Sigma^-1/2 Q_H (beta_hat - beta_null) / |ev|; approximately N(0, I).
Eigen::VectorXd studentized_statistic(const RegTailInference& inf,
                                      std::span<const double> beta_null);

// Inverse square root of a symmetric PSD matrix, eigenvalues floored at
// 1e-12 * trace / d.
Eigen::MatrixXd inverse_sqrt_psd(const Eigen::MatrixXd& m);

}  // namespace eqc

#pragma once

#include <array>

#include "panel.hpp"

namespace eqc {

// Declared domain of attraction of the lower tail. Only the regression
// weights H(x) depend on it.
enum class TailType { Type1, Type2, Type3 };

struct TuningParams {
  double m = 2.0;      // spacing multiple
  double l = 2.0;      // tail-index spacing
  double alpha = 0.05; // CI level is 1 - alpha
  TailType tail_type = TailType::Type1;

  // Throws InvalidArgument unless m > 1, l > 1, 0 < alpha < 1 and m*l*tau < 1.
  void check(double tau) const;
};

struct TailInference {
  double tau = 0.0;
  bool upper = false;
  double beta_hat = 0.0;
  double xi_hat = 0.0;
  double rho_hat = 0.0;
  double a_hat = 0.0;
  double sigma2_hat = 0.0;
  double var_beta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double m = 0.0;
  double l = 0.0;
  double alpha = 0.0;
  // Order statistics at tau, m*tau, l*tau, m*l*tau (on the reflected sample
  // when upper is set).
  std::array<double, 4> quantiles{};
};

// W_NT at beta: -(tau NT)^(-1/2) sum_it (tau - 1[Y_it < beta]).
double score(const PanelData& panel, double beta, double tau);

// Two-way cluster variance estimate of the score: row-sum and column-sum
// sums of squares of (tau - 1[Y < beta_hat]) over tau NT, plus 1 for the
// remainder and idiosyncratic projections. Always >= 1.
double sigma2_hat(const PanelData& panel, double beta_hat, double tau);

// sqrt(tau NT) / (beta_hat(m tau) - beta_hat(tau)); DegenerateSpacing on ties.
double spacing_scale(const PanelData& panel, double tau, double m);

struct TailIndexEstimate {
  double rho_hat = 0.0;
  double xi_hat = 0.0;
};

// rho = (b(mlt) - b(lt)) / (b(mt) - b(t)), xi = -log(rho) / log(l).
TailIndexEstimate tail_index_from_quantiles(double q_tau, double q_mtau, double q_ltau,
                                            double q_mltau, double l);
TailIndexEstimate tail_index(const PanelData& panel, double tau, double m, double l);

// xi / (m^-xi - 1), continuously extended by -1/log(m) near xi = 0.
double ev_factor(double xi, double m);

// Two-sided standard normal critical value z_{1 - alpha/2}.
double normal_critical_value(double alpha);

// Point estimate, variance and CI for the tau-quantile of Y. With `upper` the
// sample is reflected (Y -> -Y, tau -> 1 - tau) and results mapped back.
TailInference infer(const PanelData& panel, double tau, const TuningParams& tuning,
                    bool upper = false);

// infer() on a raw pooled sample laid out row-major as n x t. `scratch` is
// overwritten. Used by the Monte Carlo driver to skip PanelData copies.
TailInference infer_raw(std::span<const double> y, std::size_t n, std::size_t t, double tau,
                        const TuningParams& tuning, std::vector<double>& scratch);

}  // namespace eqc

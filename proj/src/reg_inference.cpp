#include "reg_inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"
#include "text_format.hpp"

namespace eqc {

namespace {

void require_covariates(const PanelData& panel) {
  if (!panel.has_covariates())
    fail(ErrorCode::InvalidArgument, "regression inference needs covariates");
}

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

double fitted(std::span<const double> x, std::span<const double> beta) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * beta[k];
  return s;
}

}  // namespace

bool QuantileLadder::converged() const {
  return std::all_of(fits.begin(), fits.end(), [](const QuantileFit& f) { return f.converged; });
}

QuantileLadder fit_ladder(const PanelData& panel, double tau, double m, double l,
                          const SolverOptions& opts) {
  require_tau(tau);
  if (!(m > 1.0) || !(l >= 1.0) || !(m * l * tau < 1.0))
    fail(ErrorCode::InvalidArgument, "need m > 1, l >= 1 and m*l*tau < 1");
  QuantileLadder ladder;
  ladder.tau = tau;
  ladder.m = m;
  ladder.l = l;
  const std::array<double, 4> levels{tau, m * tau, l * tau, m * l * tau};
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return levels[a] < levels[b]; });
  SolverOptions step = opts;
  for (auto k : order) {
    if (l == 1.0 && k >= 2) {
      ladder.fits[k] = ladder.fits[k - 2];
      continue;
    }
    ladder.fits[k] = fit_linear_quantile(panel, levels[k], step);
    step.warm_start = ladder.fits[k].beta;
  }
  return ladder;
}

Eigen::VectorXd design_mean(const PanelData& panel) {
  require_covariates(panel);
  const auto d = static_cast<Eigen::Index>(panel.d());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (std::size_t c = 0; c < panel.cells(); ++c) mean += as_vector(panel.x_row(c));
  return mean / static_cast<double>(panel.cells());
}

Eigen::VectorXd score_vector(const PanelData& panel, std::span<const double> beta, double tau) {
  require_tau(tau);
  require_covariates(panel);
  if (beta.size() != panel.d()) fail(ErrorCode::InvalidArgument, "beta has the wrong length");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(panel.d()));
  const auto y = panel.y_values();
  for (std::size_t c = 0; c < panel.cells(); ++c) {
    const auto x = panel.x_row(c);
    const double weight = tau - (y[c] < fitted(x, beta) ? 1.0 : 0.0);
    total += weight * as_vector(x);
  }
  return -total / std::sqrt(tau * static_cast<double>(panel.cells()));
}

Eigen::MatrixXd sigma_hat_matrix(const PanelData& panel, std::span<const double> beta_hat,
                                 double tau) {
  require_tau(tau);
  require_covariates(panel);
  if (beta_hat.size() != panel.d()) fail(ErrorCode::InvalidArgument, "beta has the wrong length");
  const auto d = static_cast<Eigen::Index>(panel.d());
  const std::size_t n = panel.n();
  const std::size_t t = panel.t();

  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(n));
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(t));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      const auto x = panel.x_row(i, j);
      const double weight = tau - (panel.y(i, j) < fitted(x, beta_hat) ? 1.0 : 0.0);
      rows.col(static_cast<Eigen::Index>(i)) += weight * as_vector(x);
      cols.col(static_cast<Eigen::Index>(j)) += weight * as_vector(x);
    }
  }
  const double scale = tau * static_cast<double>(n * t);
  Eigen::MatrixXd out = rows * rows.transpose() / scale + cols * cols.transpose() / scale +
                        gram_matrix(panel);
  return (out + out.transpose()) / 2.0;
}

double rho_hat_x(const QuantileLadder& ladder, std::span<const double> x,
                 std::span<const double> x_dot) {
  const auto& f = ladder.fits;
  const std::size_t d = f[0].beta.size();
  if (x.size() != d || x_dot.size() != d)
    fail(ErrorCode::InvalidArgument, "functional has the wrong length");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    num += x[k] * (f[3].beta[k] - f[2].beta[k]);
    den += x_dot[k] * (f[1].beta[k] - f[0].beta[k]);
  }
  if (den == 0.0)
    fail(ErrorCode::DegenerateSpacing, "x_dot'(beta_hat(m tau) - beta_hat(tau)) is zero");
  return num / den;
}

double rho_hat_x(const PanelData& panel, double tau, double m, double l,
                 std::span<const double> x, std::span<const double> x_dot) {
  require_covariates(panel);
  return rho_hat_x(fit_ladder(panel, tau, m, l), x, x_dot);
}

TailIndexEstimate tail_index_reg(const QuantileLadder& ladder, const Eigen::VectorXd& mu_x) {
  const std::span<const double> mu(mu_x.data(), static_cast<std::size_t>(mu_x.size()));
  const auto& f = ladder.fits;
  double den = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) den += mu[k] * (f[1].beta[k] - f[0].beta[k]);
  if (!(den > 0.0))
    fail(ErrorCode::DegenerateSpacing,
         "Xbar'(beta_hat(m tau) - beta_hat(tau)) = " + format_double(den) + " is not positive");
  const double rho = rho_hat_x(ladder, mu, mu);
  if (!(rho > 0.0))
    fail(ErrorCode::NonPositiveRho, "spacing ratio rho_hat = " + format_double(rho) +
                                        " is not positive");
  return {rho, -std::log(rho) / std::log(ladder.l)};
}

TailIndexEstimate tail_index_reg(const PanelData& panel, double tau, double m, double l) {
  require_covariates(panel);
  return tail_index_reg(fit_ladder(panel, tau, m, l), design_mean(panel));
}

TailWeights estimate_h_and_qh(const PanelData& panel, std::span<const double> beta_tau,
                              std::span<const double> beta_mtau, TailType tail_type) {
  require_covariates(panel);
  const std::size_t d = panel.d();
  if (beta_tau.size() != d || beta_mtau.size() != d)
    fail(ErrorCode::InvalidArgument, "beta has the wrong length");
  TailWeights out;
  if (tail_type == TailType::Type1) {
    out.h_values.assign(panel.cells(), 1.0);
    out.q_h_hat = gram_matrix(panel);
    return out;
  }

  std::vector<double> spacing(d);
  for (std::size_t k = 0; k < d; ++k) spacing[k] = beta_mtau[k] - beta_tau[k];
  const Eigen::VectorXd mu = design_mean(panel);
  const double den = mu.dot(as_vector(spacing));
  if (den == 0.0)
    fail(ErrorCode::DegenerateSpacing, "Xbar'(beta_hat(m tau) - beta_hat(tau)) is zero");

  out.h_values.resize(panel.cells());
  std::vector<std::string> bad;
  std::size_t bad_count = 0;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t c = 0; c < panel.cells(); ++c) {
    const auto x = panel.x_row(c);
    const double h = fitted(x, spacing) / den;
    out.h_values[c] = h;
    if (!(h > 0.0)) {
      if (bad.size() < 10)
        bad.push_back("(" + std::to_string(panel.row_labels()[c / panel.t()]) + "," +
                      std::to_string(panel.col_labels()[c % panel.t()]) + ")");
      ++bad_count;
      continue;
    }
    const auto xv = as_vector(x);
    q.noalias() += (xv * xv.transpose()) / h;
  }
  if (bad_count > 0) {
    std::string list;
    for (const auto& b : bad) list += (list.empty() ? "" : " ") + b;
    fail(ErrorCode::NonPositiveH,
         std::to_string(bad_count) + " observations have H(X_it) <= 0, e.g. " + list +
             "; check the declared tail type");
  }
  out.q_h_hat = q / static_cast<double>(panel.cells());
  return out;
}

TailWeights estimate_h_and_qh(const PanelData& panel, double tau, double m, TailType tail_type) {
  require_covariates(panel);
  require_tau(tau);
  if (!(m > 1.0) || !(m * tau < 1.0)) fail(ErrorCode::InvalidArgument, "need m > 1 and m*tau < 1");
  const auto lo = fit_linear_quantile(panel, tau);
  SolverOptions opts;
  opts.warm_start = lo.beta;
  const auto hi = fit_linear_quantile(panel, m * tau, opts);
  return estimate_h_and_qh(panel, lo.beta, hi.beta, tail_type);
}

Eigen::MatrixXd inverse_sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const double floor = 1e-12 * m.trace() / static_cast<double>(m.rows());
  const Eigen::VectorXd inv_root =
      eig.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * inv_root.asDiagonal() * eig.eigenvectors().transpose();
}

RegTailInference infer_regression(const PanelData& panel, double tau, const TuningParams& tuning,
                                  bool upper, const SolverOptions& opts) {
  require_covariates(panel);
  const double work_tau = upper ? 1.0 - tau : tau;
  tuning.check(work_tau);
  const PanelData work = upper ? panel.reflected() : panel;

  RegTailInference out;
  out.tau = tau;
  out.upper = upper;
  out.tail_type = tuning.tail_type;
  out.m = tuning.m;
  out.l = tuning.l;
  out.alpha = tuning.alpha;
  out.ladder = fit_ladder(work, work_tau, tuning.m, tuning.l, opts);
  out.converged = out.ladder.converged();
  out.beta_hat = out.ladder.at_tau();
  if (upper)
    for (double& b : out.beta_hat) b = -b;

  out.mu_x = design_mean(work);
  const auto ti = tail_index_reg(out.ladder, out.mu_x);
  out.rho_hat = ti.rho_hat;
  out.xi_hat = ti.xi_hat;
  out.ev = ev_factor(out.xi_hat, tuning.m);

  const auto& b0 = out.ladder.fits[0].beta;
  const auto& b1 = out.ladder.fits[1].beta;
  double spacing = 0.0;
  for (Eigen::Index k = 0; k < out.mu_x.size(); ++k) spacing += out.mu_x[k] * (b1[k] - b0[k]);
  out.a_hat = std::sqrt(work_tau * static_cast<double>(work.cells())) / spacing;

  out.sigma_hat = sigma_hat_matrix(work, b0, work_tau);
  auto weights = estimate_h_and_qh(work, b0, b1, tuning.tail_type);
  out.q_h_hat = std::move(weights.q_h_hat);
  out.h_values = std::move(weights.h_values);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.q_h_hat);
  const Eigen::VectorXd lambda = eig.eigenvalues();
  const double max_abs = lambda.cwiseAbs().maxCoeff();
  if (!(max_abs > 0.0) || lambda.cwiseAbs().minCoeff() < 1e-12 * max_abs)
    fail(ErrorCode::SingularQH, "Q_H is not invertible to rcond 1e-12");
  out.q_h_inv = eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() *
                eig.eigenvectors().transpose();
  return out;
}

FunctionalCI functional_ci(const RegTailInference& inf, std::span<const double> x) {
  if (x.size() != inf.beta_hat.size())
    fail(ErrorCode::InvalidArgument, "functional has the wrong length");
  const auto xv = as_vector(x);
  const Eigen::VectorXd qx = inf.q_h_inv * xv;
  const double quad = std::max(0.0, qx.dot(inf.sigma_hat * qx));
  FunctionalCI out;
  out.point = xv.dot(as_vector(inf.beta_hat));
  out.std_error = std::abs(inf.ev) * std::sqrt(quad) / inf.a_hat;
  const double half = normal_critical_value(inf.alpha) * out.std_error;
  out.ci_low = out.point - half;
  out.ci_high = out.point + half;
  return out;
}

FunctionalCI infer_functional(const PanelData& panel, double tau, const TuningParams& tuning,
                              std::span<const double> x, bool upper) {
  return functional_ci(infer_regression(panel, tau, tuning, upper), x);
}

Eigen::VectorXd studentized_statistic(const RegTailInference& inf,
                                      std::span<const double> beta_null) {
  if (beta_null.size() != inf.beta_hat.size())
    fail(ErrorCode::InvalidArgument, "beta has the wrong length");
  const Eigen::VectorXd diff = as_vector(inf.beta_hat) - as_vector(beta_null);
  return inf.a_hat * inverse_sqrt_psd(inf.sigma_hat) * inf.q_h_hat * diff / std::abs(inf.ev);
}

}  // namespace eqc

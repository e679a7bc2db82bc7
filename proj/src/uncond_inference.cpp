#include "uncond_inference.hpp"

#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "error.hpp"
#include "qr_solver.hpp"
#include "text_format.hpp"

namespace eqc {

void TuningParams::check(double tau) const {
  require_tau(tau);
  if (!(m > 1.0)) fail(ErrorCode::InvalidArgument, "m must exceed 1");
  if (!(l > 1.0)) fail(ErrorCode::InvalidArgument, "l must exceed 1");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0,1)");
  if (!(m * l * tau < 1.0))
    fail(ErrorCode::InvalidArgument, "m*l*tau = " + format_double(m * l * tau) + " must be < 1");
}

namespace {

double raw_sigma2(std::span<const double> y, std::size_t n, std::size_t t, double beta, double tau) {
  std::vector<double> col_count(t, 0.0);
  double row_term = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double below = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      if (y[i * t + j] < beta) {
        below += 1.0;
        col_count[j] += 1.0;
      }
    }
    const double s = tau * static_cast<double>(t) - below;
    row_term += s * s;
  }
  double col_term = 0.0;
  for (std::size_t j = 0; j < t; ++j) {
    const double s = tau * static_cast<double>(n) - col_count[j];
    col_term += s * s;
  }
  const double scale = tau * static_cast<double>(n * t);
  return row_term / scale + col_term / scale + 1.0;
}

std::array<std::size_t, 4> quantile_ranks(double tau, double m, double l, std::size_t count) {
  return {order_rank(tau, count), order_rank(m * tau, count), order_rank(l * tau, count),
          order_rank(m * l * tau, count)};
}

double scale_from_spacing(double q_tau, double q_mtau, double tau, std::size_t cells) {
  const double spacing = q_mtau - q_tau;
  if (!(spacing > 0.0))
    fail(ErrorCode::DegenerateSpacing,
         "beta_hat(m tau) - beta_hat(tau) = " + format_double(spacing) +
             " is not positive; tau is too extreme for the sample or the data are massed");
  return std::sqrt(tau * static_cast<double>(cells)) / spacing;
}

}  // namespace

double score(const PanelData& panel, double beta, double tau) {
  require_tau(tau);
  double total = 0.0;
  for (double v : panel.y_values()) total += tau - (v < beta ? 1.0 : 0.0);
  return -total / std::sqrt(tau * static_cast<double>(panel.cells()));
}

double sigma2_hat(const PanelData& panel, double beta_hat, double tau) {
  require_tau(tau);
  return raw_sigma2(panel.y_values(), panel.n(), panel.t(), beta_hat, tau);
}

double spacing_scale(const PanelData& panel, double tau, double m) {
  require_tau(tau);
  if (!(m > 1.0) || !(m * tau < 1.0))
    fail(ErrorCode::InvalidArgument, "need m > 1 and m*tau < 1");
  std::vector<double> pooled(panel.y_values().begin(), panel.y_values().end());
  const std::array<std::size_t, 2> ranks{order_rank(tau, pooled.size()),
                                         order_rank(m * tau, pooled.size())};
  const auto q = order_statistics(pooled, ranks);
  return scale_from_spacing(q[0], q[1], tau, panel.cells());
}

TailIndexEstimate tail_index_from_quantiles(double q_tau, double q_mtau, double q_ltau,
                                            double q_mltau, double l) {
  const double denom = q_mtau - q_tau;
  if (!(denom > 0.0))
    fail(ErrorCode::DegenerateSpacing,
         "beta_hat(m tau) - beta_hat(tau) = " + format_double(denom) + " is not positive");
  const double rho = (q_mltau - q_ltau) / denom;
  if (!(rho > 0.0))
    fail(ErrorCode::NonPositiveRho,
         "spacing ratio rho_hat = " + format_double(rho) + " is not positive");
  return {rho, -std::log(rho) / std::log(l)};
}

TailIndexEstimate tail_index(const PanelData& panel, double tau, double m, double l) {
  require_tau(tau);
  if (!(m > 1.0) || !(l > 1.0) || !(m * l * tau < 1.0))
    fail(ErrorCode::InvalidArgument, "need m > 1, l > 1 and m*l*tau < 1");
  std::vector<double> pooled(panel.y_values().begin(), panel.y_values().end());
  const auto ranks = quantile_ranks(tau, m, l, pooled.size());
  const auto q = order_statistics(pooled, ranks);
  return tail_index_from_quantiles(q[0], q[1], q[2], q[3], l);
}

double ev_factor(double xi, double m) {
  if (!(m > 1.0)) fail(ErrorCode::InvalidArgument, "m must exceed 1");
  if (std::abs(xi) < 1e-8) return -1.0 / std::log(m);
  return xi / (std::pow(m, -xi) - 1.0);
}

double normal_critical_value(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0,1)");
  return boost::math::quantile(boost::math::normal(), 1.0 - alpha / 2.0);
}

TailInference infer_raw(std::span<const double> y, std::size_t n, std::size_t t, double tau,
                        const TuningParams& tuning, std::vector<double>& scratch) {
  tuning.check(tau);
  scratch.assign(y.begin(), y.end());
  const auto ranks = quantile_ranks(tau, tuning.m, tuning.l, scratch.size());
  const auto q = order_statistics(scratch, ranks);

  TailInference out;
  out.tau = tau;
  out.m = tuning.m;
  out.l = tuning.l;
  out.alpha = tuning.alpha;
  out.quantiles = {q[0], q[1], q[2], q[3]};
  out.beta_hat = q[0];
  out.a_hat = scale_from_spacing(q[0], q[1], tau, n * t);
  const auto ti = tail_index_from_quantiles(q[0], q[1], q[2], q[3], tuning.l);
  out.rho_hat = ti.rho_hat;
  out.xi_hat = ti.xi_hat;
  out.sigma2_hat = raw_sigma2(y, n, t, out.beta_hat, tau);
  const double ev = ev_factor(out.xi_hat, tuning.m);
  out.var_beta = ev * ev * out.sigma2_hat / (out.a_hat * out.a_hat);
  const double half = normal_critical_value(tuning.alpha) * std::sqrt(out.var_beta);
  out.ci_low = out.beta_hat - half;
  out.ci_high = out.beta_hat + half;
  return out;
}

TailInference infer(const PanelData& panel, double tau, const TuningParams& tuning, bool upper) {
  require_tau(tau);
  std::vector<double> scratch;
  if (!upper) return infer_raw(panel.y_values(), panel.n(), panel.t(), tau, tuning, scratch);

  std::vector<double> reflected(panel.y_values().begin(), panel.y_values().end());
  for (double& v : reflected) v = -v;
  TailInference out = infer_raw(reflected, panel.n(), panel.t(), 1.0 - tau, tuning, scratch);
  out.tau = tau;
  out.upper = true;
  out.beta_hat = -out.beta_hat;
  const double low = -out.ci_high;
  out.ci_high = -out.ci_low;
  out.ci_low = low;
  return out;
}

}  // namespace eqc

#include "qr_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "error.hpp"

namespace eqc {

double check_loss(std::span<const double> residuals, double tau) {
  require_tau(tau);
  double total = 0.0;
  for (double u : residuals) {
    if (!std::isfinite(u)) fail(ErrorCode::NonFinite, "residual is not finite");
    total += u < 0.0 ? u * (tau - 1.0) : u * tau;
  }
  return total;
}

double panel_check_loss(const PanelData& panel, std::span<const double> beta, double tau) {
  const std::size_t d = panel.has_covariates() ? panel.d() : 1;
  if (beta.size() != d) fail(ErrorCode::InvalidArgument, "beta has the wrong length");
  std::vector<double> resid(panel.cells());
  const auto y = panel.y_values();
  for (std::size_t c = 0; c < panel.cells(); ++c) {
    double fitted = beta[0];
    if (panel.has_covariates()) {
      const auto x = panel.x_row(c);
      fitted = 0.0;
      for (std::size_t k = 0; k < d; ++k) fitted += x[k] * beta[k];
    }
    resid[c] = y[c] - fitted;
  }
  return check_loss(resid, tau);
}

std::size_t order_rank(double tau, std::size_t count) {
  require_tau(tau);
  const double x = tau * static_cast<double>(count);
  const double nearest = std::round(x);
  const double k = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
  return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, count);
}

std::vector<double> order_statistics(std::span<double> values, std::span<const std::size_t> ranks) {
  std::vector<std::size_t> order(ranks.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ranks[a] < ranks[b]; });
  std::vector<double> out(ranks.size());
  auto lo = values.begin();
  std::size_t lo_rank = 1;  // rank of *lo
  std::size_t prev = 0;
  for (auto idx : order) {
    const std::size_t k = ranks[idx];
    if (k < 1 || k > values.size()) fail(ErrorCode::InvalidArgument, "order rank out of range");
    if (k != prev) {
      auto nth = values.begin() + static_cast<std::ptrdiff_t>(k - 1);
      std::nth_element(lo, nth, values.end());
      lo = nth;
      lo_rank = k;
    }
    out[idx] = *lo;
    prev = lo_rank;
  }
  return out;
}

SortedSample::SortedSample(std::span<const double> values)
    : sorted_(values.begin(), values.end()) {
  if (sorted_.empty()) fail(ErrorCode::InvalidArgument, "empty sample");
  std::sort(sorted_.begin(), sorted_.end());
}

double SortedSample::quantile(double tau) const {
  return sorted_[order_rank(tau, sorted_.size()) - 1];
}

QuantileFit pooled_quantile(const PanelData& panel, double tau) {
  require_tau(tau);
  std::vector<double> pooled(panel.y_values().begin(), panel.y_values().end());
  const std::size_t k = order_rank(tau, pooled.size());
  const double beta = order_statistics(pooled, std::span<const std::size_t>(&k, 1))[0];
  QuantileFit fit;
  fit.tau = tau;
  fit.beta = {beta};
  std::vector<double> resid(panel.y_values().begin(), panel.y_values().end());
  for (double& r : resid) r -= beta;
  fit.objective = check_loss(resid, tau);
  fit.converged = true;
  return fit;
}

Eigen::MatrixXd design_matrix(const PanelData& panel) {
  const auto n = static_cast<Eigen::Index>(panel.cells());
  if (!panel.has_covariates()) return Eigen::MatrixXd::Ones(n, 1);
  const auto d = static_cast<Eigen::Index>(panel.d());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index k = 0; k < d; ++k) x(c, k) = panel.x_values()[c * d + k];
  return x;
}

namespace {

double loss_at(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
               double tau) {
  const Eigen::VectorXd r = y - design * beta;
  return check_loss(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), tau);
}

// Largest step in (0, 1] keeping v + step*dv >= 0.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = 1.0;
  for (Eigen::Index k = 0; k < v.size(); ++k)
    if (dv[k] < 0.0) step = std::min(step, -v[k] / dv[k]);
  return step;
}

// Largest step keeping both a + step*da >= 0 and s - step*da >= 0.
double max_box_step(const Eigen::VectorXd& a, const Eigen::VectorXd& s, const Eigen::VectorXd& da) {
  double step = 1.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (da[k] < 0.0)
      step = std::min(step, -a[k] / da[k]);
    else if (da[k] > 0.0)
      step = std::min(step, s[k] / da[k]);
  }
  return step;
}

bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
  const std::size_t k = idx.size();
  for (std::size_t pos = k; pos-- > 0;) {
    if (idx[pos] < n - k + pos) {
      ++idx[pos];
      for (std::size_t q = pos + 1; q < k; ++q) idx[q] = idx[q - 1] + 1;
      return true;
    }
  }
  return false;
}

// Basic solution through the rows in `basis`, if the sub-design is nonsingular.
std::optional<Eigen::VectorXd> interpolate(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                           const std::vector<std::size_t>& basis) {
  const auto d = design.cols();
  Eigen::MatrixXd sub(d, d);
  Eigen::VectorXd rhs(d);
  for (Eigen::Index r = 0; r < d; ++r) {
    sub.row(r) = design.row(static_cast<Eigen::Index>(basis[r]));
    rhs[r] = y[static_cast<Eigen::Index>(basis[r])];
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
  lu.setThreshold(1e-12);
  if (lu.rank() < d) return std::nullopt;
  return Eigen::VectorXd(lu.solve(rhs));
}

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

// Try basic solutions built from the rows with the smallest |residual|.
std::optional<std::pair<Eigen::VectorXd, double>> polish_to_vertex(const Eigen::MatrixXd& design,
                                                                   const Eigen::VectorXd& y,
                                                                   const Eigen::VectorXd& beta,
                                                                   double tau) {
  const auto n = static_cast<std::size_t>(design.rows());
  const auto d = static_cast<std::size_t>(design.cols());
  const Eigen::VectorXd r = (y - design * beta).cwiseAbs();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t pool = std::min(n, d <= 4 ? d + 3 : d);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pool), order.end(),
                    [&](auto a, auto b) { return r[static_cast<Eigen::Index>(a)] < r[static_cast<Eigen::Index>(b)]; });

  std::optional<std::pair<Eigen::VectorXd, double>> best;
  std::vector<std::size_t> pick(d);
  std::iota(pick.begin(), pick.end(), 0);
  do {
    std::vector<std::size_t> basis(d);
    for (std::size_t k = 0; k < d; ++k) basis[k] = order[pick[k]];
    if (auto cand = interpolate(design, y, basis)) {
      const double obj = loss_at(design, y, *cand, tau);
      if (!best || obj < best->second) best = std::make_pair(*cand, obj);
    }
  } while (next_combination(pick, pool));
  return best;
}

}  // namespace

QuantileFit solve_interior_point(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                 double tau, const SolverOptions& opts) {
  require_tau(tau);
  using Eigen::VectorXd;
  const Eigen::Index n = design.rows();
  const Eigen::Index d = design.cols();
  if (n != y.size() || d == 0 || n < d) fail(ErrorCode::InvalidArgument, "bad design shape");

  // Bounded LP: min c'a s.t. A a = b, 0 <= a <= 1, with A = X', c = -y.
  // Dual: A'lambda + z - w = c, z, w >= 0; beta = -lambda.
  const VectorXd c = -y;
  VectorXd a = VectorXd::Constant(n, 1.0 - tau);
  VectorXd s = VectorXd::Constant(n, tau);
  const VectorXd b = design.transpose() * a;

  VectorXd lambda;
  if (opts.warm_start) {
    if (static_cast<Eigen::Index>(opts.warm_start->size()) != d)
      fail(ErrorCode::InvalidArgument, "warm start has the wrong length");
    lambda = -Eigen::Map<const VectorXd>(opts.warm_start->data(), d);
  } else {
    lambda = (design.transpose() * design).ldlt().solve(design.transpose() * c);
  }
  const VectorXd r0 = c - design * lambda;
  const double shift = std::max(1e-3, 0.1 * r0.cwiseAbs().mean());
  VectorXd z = r0.cwiseMax(0.0).array() + shift;
  VectorXd w = (-r0).cwiseMax(0.0).array() + shift;

  QuantileFit fit;
  fit.tau = tau;
  VectorXd best_beta = -lambda;
  double best_obj = loss_at(design, y, best_beta, tau);
  double gap = std::numeric_limits<double>::infinity();

  const double eta = 0.99995;
  int iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    gap = a.dot(z) + s.dot(w);
    const VectorXd beta = -lambda;
    const double obj = loss_at(design, y, beta, tau);
    if (obj < best_obj) {
      best_obj = obj;
      best_beta = beta;
    }
    if (gap <= opts.gap_tolerance * (1.0 + std::abs(obj))) break;

    const VectorXd rp = b - design.transpose() * a;
    const VectorXd rd = c - design * lambda - z + w;
    const VectorXd q = (z.cwiseQuotient(a) + w.cwiseQuotient(s)).cwiseInverse();
    Eigen::MatrixXd normal = design.transpose() * q.asDiagonal() * design;
    Eigen::LDLT<Eigen::MatrixXd> chol(normal);

    auto solve = [&](const VectorXd& r_az, const VectorXd& r_sw, VectorXd& da, VectorXd& dl,
                     VectorXd& dz, VectorXd& dw) {
      const VectorXd rhat = rd - r_az.cwiseQuotient(a) + r_sw.cwiseQuotient(s);
      dl = chol.solve(rp + design.transpose() * q.cwiseProduct(rhat));
      da = q.cwiseProduct(design * dl - rhat);
      dz = (r_az - z.cwiseProduct(da)).cwiseQuotient(a);
      dw = (r_sw + w.cwiseProduct(da)).cwiseQuotient(s);
    };

    VectorXd da, dl, dz, dw;
    solve(-a.cwiseProduct(z), -s.cwiseProduct(w), da, dl, dz, dw);
    const double ap_aff = max_box_step(a, s, da);
    const double ad_aff = std::min(max_step(z, dz), max_step(w, dw));
    const double mu_aff = (a + ap_aff * da).dot(z + ad_aff * dz) +
                          (s - ap_aff * da).dot(w + ad_aff * dw);
    const double sigma = std::pow(mu_aff / gap, 3);
    const double mu = sigma * gap / static_cast<double>(2 * n);

    const VectorXd r_az = (mu - a.cwiseProduct(z).array() - da.cwiseProduct(dz).array()).matrix();
    const VectorXd r_sw = (mu - s.cwiseProduct(w).array() + da.cwiseProduct(dw).array()).matrix();
    solve(r_az, r_sw, da, dl, dz, dw);

    const double ap = std::min(1.0, eta * max_box_step(a, s, da));
    const double ad = std::min(1.0, eta * std::min(max_step(z, dz), max_step(w, dw)));
    a += ap * da;
    s -= ap * da;
    lambda += ad * dl;
    z += ad * dz;
    w += ad * dw;
    if (!lambda.allFinite()) break;
  }

  fit.iterations = iter;
  fit.duality_gap = gap;
  fit.converged = gap <= opts.gap_tolerance * (1.0 + std::abs(best_obj));
  if (lambda.allFinite()) {
    const VectorXd beta = -lambda;
    const double obj = loss_at(design, y, beta, tau);
    if (obj <= best_obj) {
      best_obj = obj;
      best_beta = beta;
    }
  }
  if (opts.polish) {
    if (auto vertex = polish_to_vertex(design, y, best_beta, tau); vertex && vertex->second <= best_obj) {
      best_beta = vertex->first;
      best_obj = vertex->second;
    }
  }
  fit.beta.assign(best_beta.data(), best_beta.data() + d);
  fit.objective = best_obj;
  return fit;
}

QuantileFit fit_linear_quantile(const PanelData& panel, double tau, const SolverOptions& opts) {
  require_tau(tau);
  if (!panel.has_covariates() || panel.d() == 1) return pooled_quantile(panel, tau);
  validate(panel);
  return solve_interior_point(design_matrix(panel), Eigen::Map<const Eigen::VectorXd>(
                                                        panel.y_values().data(),
                                                        static_cast<Eigen::Index>(panel.cells())),
                              tau, opts);
}

QuantileFit brute_force_fit(const PanelData& panel, double tau) {
  require_tau(tau);
  const std::size_t d = panel.has_covariates() ? panel.d() : 1;
  const std::size_t n = panel.cells();
  if (n > 200 || d > 3)
    fail(ErrorCode::TooLarge, "brute force is limited to NT <= 200 and d <= 3");
  const Eigen::MatrixXd design = design_matrix(panel);
  const Eigen::VectorXd y =
      Eigen::Map<const Eigen::VectorXd>(panel.y_values().data(), static_cast<Eigen::Index>(n));

  std::optional<Eigen::VectorXd> best;
  double best_obj = 0.0;
  std::vector<std::size_t> basis(d);
  std::iota(basis.begin(), basis.end(), 0);
  do {
    auto cand = interpolate(design, y, basis);
    if (!cand) continue;
    const double obj = loss_at(design, y, *cand, tau);
    const double tol = 1e-12 * (1.0 + std::abs(best_obj));
    if (!best || obj < best_obj - tol || (obj <= best_obj + tol && lex_less(*cand, *best))) {
      if (!best || obj < best_obj) best_obj = obj;
      best = *cand;
    }
  } while (next_combination(basis, n));
  if (!best) fail(ErrorCode::SingularDesign, "no nonsingular d-subset of the design");

  QuantileFit fit;
  fit.tau = tau;
  fit.beta.assign(best->data(), best->data() + d);
  fit.objective = loss_at(design, y, *best, tau);
  fit.converged = true;
  return fit;
}

}  // namespace eqc

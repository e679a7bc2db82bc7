#pragma once

// Reference computations used as test oracles. Written directly from the
// defining formulas with plain loops; nothing here calls into the library's
// estimator code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "panel.hpp"

namespace eqc::testing {

inline double naive_loss(const std::vector<double>& resid, double tau) {
  double s = 0.0;
  for (double u : resid) s += u * (tau - (u < 0.0 ? 1.0 : 0.0));
  return s;
}

// Lowest sample value minimising the pooled check loss.
inline double scan_quantile(const std::vector<double>& values, double tau) {
  double best = 0.0;
  double best_loss = INFINITY;
  for (double b : values) {
    std::vector<double> r;
    for (double v : values) r.push_back(v - b);
    const double l = naive_loss(r, tau);
    if (l < best_loss - 1e-12 || (std::abs(l - best_loss) <= 1e-12 && b < best)) {
      best_loss = l;
      best = b;
    }
  }
  return best;
}

// Two-way variance estimate straight from the displayed double sums.
inline double naive_sigma2(const PanelData& p, double beta, double tau) {
  const double ntau = tau * static_cast<double>(p.n() * p.t());
  double rows = 0.0;
  for (std::size_t i = 0; i < p.n(); ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < p.t(); ++t) s += tau - (p.y(i, t) < beta ? 1.0 : 0.0);
    rows += s * s;
  }
  double cols = 0.0;
  for (std::size_t t = 0; t < p.t(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.n(); ++i) s += tau - (p.y(i, t) < beta ? 1.0 : 0.0);
    cols += s * s;
  }
  return rows / ntau + cols / ntau + 1.0;
}

inline std::vector<double> pooled(const PanelData& p) {
  return {p.y_values().begin(), p.y_values().end()};
}

inline PanelData random_normal_panel(std::mt19937_64& rng, std::size_t n, std::size_t t,
                                     std::size_t d = 0) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  std::vector<double> y(n * t);
  std::vector<double> x(n * t * d);
  for (std::size_t c = 0; c < n * t; ++c) {
    double mean = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      x[c * d + k] = k == 0 ? 1.0 : u(rng);
      mean += 0.5 * static_cast<double>(k) * x[c * d + k];
    }
    y[c] = mean + z(rng);
  }
  return PanelData(n, t, std::move(y), d, std::move(x));
}

// Panel whose pooled sample is exactly `values` (n x t, row-major).
inline PanelData panel_of(std::size_t n, std::size_t t, std::vector<double> values) {
  return PanelData(n, t, std::move(values));
}

}  // namespace eqc::testing

namespace eqc::testing {

// Sigma_hat from its three displayed sums, entry by entry.
inline std::vector<std::vector<double>> naive_sigma_matrix(const PanelData& p,
                                                           const std::vector<double>& beta,
                                                           double tau) {
  const std::size_t d = p.d();
  const double nt = static_cast<double>(p.n() * p.t());
  auto ind = [&](std::size_t i, std::size_t t) {
    const auto x = p.x_row(i, t);
    double fit = 0.0;
    for (std::size_t k = 0; k < d; ++k) fit += x[k] * beta[k];
    return tau - (p.y(i, t) < fit ? 1.0 : 0.0);
  };
  std::vector<std::vector<double>> s(d, std::vector<double>(d, 0.0));
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      double rows = 0.0;
      for (std::size_t i = 0; i < p.n(); ++i) {
        double va = 0.0, vb = 0.0;
        for (std::size_t t = 0; t < p.t(); ++t) {
          va += ind(i, t) * p.x_row(i, t)[a];
          vb += ind(i, t) * p.x_row(i, t)[b];
        }
        rows += va * vb;
      }
      double cols = 0.0;
      for (std::size_t t = 0; t < p.t(); ++t) {
        double wa = 0.0, wb = 0.0;
        for (std::size_t i = 0; i < p.n(); ++i) {
          wa += ind(i, t) * p.x_row(i, t)[a];
          wb += ind(i, t) * p.x_row(i, t)[b];
        }
        cols += wa * wb;
      }
      double gram = 0.0;
      for (std::size_t i = 0; i < p.n(); ++i)
        for (std::size_t t = 0; t < p.t(); ++t) gram += p.x_row(i, t)[a] * p.x_row(i, t)[b];
      s[a][b] = rows / (tau * nt) + cols / (tau * nt) + gram / nt;
    }
  }
  return s;
}

}  // namespace eqc::testing

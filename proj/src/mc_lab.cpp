#include "mc_lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <random>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <json.hpp>

#include "error.hpp"
#include "reg_inference.hpp"
#include "text_format.hpp"

namespace eqc {

std::string family_name(DesignFamily family) {
  switch (family) {
    case DesignFamily::Additive: return "additive";
    case DesignFamily::Interactive: return "interactive";
    case DesignFamily::IIDNormal: return "iid-normal";
    case DesignFamily::LocationRegression: return "location-regression";
    case DesignFamily::ParetoTail: return "pareto";
  }
  return "unknown";
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t split_seed(std::uint64_t seed, std::uint64_t cell, std::uint64_t rep) noexcept {
  return mix64(mix64(mix64(seed) ^ cell) ^ rep);
}

std::uint64_t stream_seed(std::uint64_t rep_seed, Stream stream) noexcept {
  return mix64(rep_seed ^ (static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL));
}

namespace {

using Engine = std::mt19937_64;

std::vector<double> normals(std::uint64_t rep_seed, Stream stream, std::size_t count) {
  Engine engine(stream_seed(rep_seed, stream));
  boost::random::normal_distribution<double> dist;
  std::vector<double> out(count);
  for (double& v : out) v = dist(engine);
  return out;
}

void check_design(const SimDesign& design) {
  if (!(design.sigma_eps > 0.0) || design.sigma_alpha < 0.0 || design.sigma_gamma < 0.0)
    fail(ErrorCode::InvalidArgument, "need sigma_eps > 0 and nonnegative factor scales");
  if (design.n < 2 || design.t < 2) fail(ErrorCode::InvalidArgument, "need n, t >= 2");
  if (design.family == DesignFamily::LocationRegression && design.d < 1)
    fail(ErrorCode::InvalidArgument, "regression design needs d >= 1");
}

double error_sd(const SimDesign& design) {
  return std::sqrt(design.sigma_alpha * design.sigma_alpha +
                   design.sigma_gamma * design.sigma_gamma + design.sigma_eps * design.sigma_eps);
}

// P(s*a*g + e*eps <= y) = E_a[Phi(y / sqrt(s^2 a^2 + e^2))] by conditioning on a.
double interactive_cdf(double y, double s, double e) {
  auto integrand = [=](double a) {
    const double phi = std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI);
    const double sd = std::sqrt(s * s * a * a + e * e);
    return phi * 0.5 * std::erfc(-y / (sd * std::sqrt(2.0)));
  };
  using boost::math::quadrature::gauss_kronrod;
  const double half = gauss_kronrod<double, 61>::integrate(
      integrand, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-14);
  return 2.0 * half;
}

double interactive_quantile(double s, double e, double tau) {
  if (s == 0.0) return e * boost::math::quantile(boost::math::normal(), tau);
  auto f = [&](double y) { return interactive_cdf(y, s, e) - tau; };
  double lo = -1.0;
  double hi = 1.0;
  while (f(lo) > 0.0) lo *= 2.0;
  while (f(hi) < 0.0) hi *= 2.0;
  std::uintmax_t iters = 200;
  auto tol = boost::math::tools::eps_tolerance<double>(50);
  const auto root = boost::math::tools::toms748_solve(f, lo, hi, tol, iters);
  return (root.first + root.second) / 2.0;
}

}  // namespace

void generate_outcomes(const SimDesign& design, std::uint64_t rep_seed, std::vector<double>& y) {
  check_design(design);
  const std::size_t n = design.n;
  const std::size_t t = design.t;
  y.resize(n * t);
  if (design.family == DesignFamily::ParetoTail) {
    Engine engine(stream_seed(rep_seed, Stream::Uniform));
    boost::random::uniform_01<double> unif;
    for (double& v : y) v = -std::pow(1.0 - unif(engine), -design.xi_true);
    return;
  }
  const auto alpha = normals(rep_seed, Stream::Alpha, n);
  const auto gamma = normals(rep_seed, Stream::Gamma, t);
  const auto eps = normals(rep_seed, Stream::Eps, n * t);
  const double sa = design.sigma_alpha;
  const double sg = design.sigma_gamma;
  const double se = design.sigma_eps;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      const double e = se * eps[i * t + j];
      switch (design.family) {
        case DesignFamily::Interactive:
          y[i * t + j] = (sa * alpha[i]) * (sg * gamma[j]) + e;
          break;
        case DesignFamily::IIDNormal:
          y[i * t + j] = e;
          break;
        default:
          y[i * t + j] = sa * alpha[i] + sg * gamma[j] + e;
          break;
      }
    }
  }
}

PanelData generate(const SimDesign& design, std::uint64_t rep_seed) {
  std::vector<double> y;
  generate_outcomes(design, rep_seed, y);
  if (design.family != DesignFamily::LocationRegression) return PanelData(design.n, design.t, std::move(y));

  const std::size_t d = design.d;
  const std::size_t cells = design.n * design.t;
  std::vector<double> x(cells * d);
  Engine engine(stream_seed(rep_seed, Stream::Covariates));
  boost::random::uniform_01<double> unif;
  for (std::size_t c = 0; c < cells; ++c) {
    x[c * d] = 1.0;
    double mean = 1.0;
    for (std::size_t k = 1; k < d; ++k) {
      x[c * d + k] = unif(engine);
      mean += design.slope * x[c * d + k];
    }
    y[c] += mean;
  }
  return PanelData(design.n, design.t, std::move(y), d, std::move(x));
}

double true_quantile(const SimDesign& design, double tau) {
  require_tau(tau);
  check_design(design);
  const double z = boost::math::quantile(boost::math::normal(), tau);
  switch (design.family) {
    case DesignFamily::ParetoTail:
      return -std::pow(tau, -design.xi_true);
    case DesignFamily::Interactive:
      return interactive_quantile(design.sigma_alpha * design.sigma_gamma, design.sigma_eps, tau);
    case DesignFamily::IIDNormal:
      return design.sigma_eps * z;
    case DesignFamily::LocationRegression:
      return 1.0 + error_sd(design) * z;
    case DesignFamily::Additive:
      break;
  }
  return error_sd(design) * z;
}

std::vector<double> true_coefficients(const SimDesign& design, double tau) {
  std::vector<double> beta(std::max<std::size_t>(design.d, 1), design.slope);
  beta[0] = true_quantile(design, tau);
  return beta;
}

std::vector<double> regression_target_point(const SimDesign& design) {
  std::vector<double> x(std::max<std::size_t>(design.d, 1), 0.5);
  x[0] = 1.0;
  return x;
}

StudyConfig factor_grid(const SimDesign& base, const std::vector<double>& sigma_alpha,
                        const std::vector<double>& sigma_gamma) {
  StudyConfig config;
  config.row_name = "sigma_alpha";
  config.col_name = "sigma_gamma";
  config.row_values = sigma_alpha;
  config.col_values = sigma_gamma;
  for (double sa : sigma_alpha) {
    for (double sg : sigma_gamma) {
      SimDesign d = base;
      d.sigma_alpha = sa;
      d.sigma_gamma = sg;
      config.designs.push_back(d);
    }
  }
  return config;
}

StudyConfig pareto_grid(const SimDesign& base, const std::vector<double>& xi_values) {
  StudyConfig config;
  config.row_name = "xi_true";
  config.row_values = xi_values;
  for (double xi : xi_values) {
    SimDesign d = base;
    d.family = DesignFamily::ParetoTail;
    d.xi_true = xi;
    config.designs.push_back(d);
  }
  return config;
}

std::size_t CoverageTable::cols() const noexcept {
  return std::max<std::size_t>(config.col_values.size(), 1);
}

const CellResult& CoverageTable::at(std::size_t tau_index, std::size_t row, std::size_t col) const {
  if (tau_index >= cells.size() || row >= config.row_values.size() || col >= cols())
    fail(ErrorCode::InvalidArgument, "coverage cell index out of range");
  return cells[tau_index][row * cols() + col];
}

namespace {

struct RepOutcome {
  bool covered = false;
  bool failed = false;
  double xi_hat = 0.0;
  double sigma2 = 0.0;
  double width = 0.0;
};

}  // namespace

CoverageTable run_coverage(const StudyConfig& config) {
  if (config.reps < 1) fail(ErrorCode::InvalidArgument, "reps must be >= 1");
  if (config.taus.empty()) fail(ErrorCode::InvalidArgument, "no tau values");
  const std::size_t cols = std::max<std::size_t>(config.col_values.size(), 1);
  if (config.designs.size() != config.row_values.size() * cols)
    fail(ErrorCode::InvalidArgument, "designs do not match the row x column grid");
  for (double tau : config.taus) config.tuning.check(tau);

  const std::size_t n_cells = config.designs.size();
  const std::size_t n_taus = config.taus.size();
  const std::size_t reps = config.reps;

  std::vector<std::vector<double>> truth(n_taus, std::vector<double>(n_cells));
  std::vector<std::vector<double>> target_x(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) {
    const auto& design = config.designs[c];
    for (std::size_t k = 0; k < n_taus; ++k) {
      if (design.family == DesignFamily::LocationRegression) {
        const auto beta = true_coefficients(design, config.taus[k]);
        target_x[c] = regression_target_point(design);
        double v = 0.0;
        for (std::size_t j = 0; j < beta.size(); ++j) v += beta[j] * target_x[c][j];
        truth[k][c] = v;
      } else {
        truth[k][c] = true_quantile(design, config.taus[k]);
      }
    }
  }

  std::vector<RepOutcome> outcomes(n_taus * n_cells * reps);
  auto slot = [&](std::size_t k, std::size_t c, std::size_t r) -> RepOutcome& {
    return outcomes[(k * n_cells + c) * reps + r];
  };

  std::atomic<std::size_t> next{0};
  const std::size_t total = n_cells * reps;
  auto worker = [&]() {
    std::vector<double> y;
    std::vector<double> scratch;
    for (std::size_t task = next++; task < total; task = next++) {
      const std::size_t c = task / reps;
      const std::size_t r = task % reps;
      const auto& design = config.designs[c];
      const std::uint64_t rep_seed = split_seed(config.seed, c, r);
      if (design.family == DesignFamily::LocationRegression) {
        const PanelData panel = generate(design, rep_seed);
        for (std::size_t k = 0; k < n_taus; ++k) {
          RepOutcome& out = slot(k, c, r);
          try {
            const auto inf = infer_regression(panel, config.taus[k], config.tuning);
            const auto ci = functional_ci(inf, target_x[c]);
            out.covered = ci.ci_low <= truth[k][c] && truth[k][c] <= ci.ci_high;
            out.xi_hat = inf.xi_hat;
            out.sigma2 = inf.sigma_hat(0, 0);
            out.width = ci.ci_high - ci.ci_low;
          } catch (const Error&) {
            out.failed = true;
          }
        }
        continue;
      }
      generate_outcomes(design, rep_seed, y);
      for (std::size_t k = 0; k < n_taus; ++k) {
        RepOutcome& out = slot(k, c, r);
        try {
          const auto inf = infer_raw(y, design.n, design.t, config.taus[k], config.tuning, scratch);
          out.covered = inf.ci_low <= truth[k][c] && truth[k][c] <= inf.ci_high;
          out.xi_hat = inf.xi_hat;
          out.sigma2 = inf.sigma2_hat;
          out.width = inf.ci_high - inf.ci_low;
        } catch (const Error&) {
          out.failed = true;
        }
      }
    }
  };

  std::size_t workers = config.workers;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, total);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  CoverageTable table;
  table.config = config;
  table.nominal = 1.0 - config.tuning.alpha;
  table.cells.assign(n_taus, std::vector<CellResult>(n_cells));
  for (std::size_t k = 0; k < n_taus; ++k) {
    for (std::size_t c = 0; c < n_cells; ++c) {
      CellResult& cell = table.cells[k][c];
      cell.reps = reps;
      cell.true_value = truth[k][c];
      std::vector<double> xis;
      double sigma_sum = 0.0;
      double width_sum = 0.0;
      for (std::size_t r = 0; r < reps; ++r) {
        const RepOutcome& o = slot(k, c, r);
        if (o.failed) {
          ++cell.failures;
          continue;
        }
        if (o.covered) ++cell.covered;
        xis.push_back(o.xi_hat);
        sigma_sum += o.sigma2;
        width_sum += o.width;
      }
      cell.coverage = static_cast<double>(cell.covered) / static_cast<double>(reps);
      if (!xis.empty()) {
        const double ok = static_cast<double>(xis.size());
        std::sort(xis.begin(), xis.end());
        const std::size_t mid = xis.size() / 2;
        cell.xi_hat_median = xis.size() % 2 ? xis[mid] : (xis[mid - 1] + xis[mid]) / 2.0;
        cell.sigma2_mean = sigma_sum / ok;
        cell.ci_width_mean = width_sum / ok;
      }
    }
  }
  return table;
}

void write_coverage_csv(const CoverageTable& table, std::size_t tau_index, std::ostream& out) {
  const auto& cfg = table.config;
  out << cfg.row_name;
  if (cfg.col_values.empty()) {
    out << ",coverage";
  } else {
    out << '/' << cfg.col_name;
    for (double v : cfg.col_values) out << ',' << format_double(v);
  }
  out << '\n';
  for (std::size_t r = 0; r < cfg.row_values.size(); ++r) {
    out << format_double(cfg.row_values[r]);
    for (std::size_t c = 0; c < table.cols(); ++c)
      out << ',' << format_double(table.at(tau_index, r, c).coverage);
    out << '\n';
  }
}

void write_cells_csv(const CoverageTable& table, std::ostream& out) {
  const auto& cfg = table.config;
  out << "tau," << cfg.row_name << ',' << (cfg.col_values.empty() ? "column" : cfg.col_name)
      << ",reps,covered,failures,coverage,true_value,xi_hat_median,sigma2_mean,ci_width_mean\n";
  for (std::size_t k = 0; k < cfg.taus.size(); ++k) {
    for (std::size_t r = 0; r < cfg.row_values.size(); ++r) {
      for (std::size_t c = 0; c < table.cols(); ++c) {
        const auto& cell = table.at(k, r, c);
        out << format_double(cfg.taus[k]) << ',' << format_double(cfg.row_values[r]) << ','
            << (cfg.col_values.empty() ? std::string("-") : format_double(cfg.col_values[c]))
            << ',' << cell.reps << ',' << cell.covered << ',' << cell.failures << ','
            << format_double(cell.coverage) << ',' << format_double(cell.true_value) << ','
            << format_double(cell.xi_hat_median) << ',' << format_double(cell.sigma2_mean) << ','
            << format_double(cell.ci_width_mean) << '\n';
      }
    }
  }
}

std::string coverage_json(const CoverageTable& table) {
  using nlohmann::json;
  const auto& cfg = table.config;
  json designs = json::array();
  for (const auto& d : cfg.designs) {
    designs.push_back({{"family", family_name(d.family)},
                       {"sigma_alpha", d.sigma_alpha},
                       {"sigma_gamma", d.sigma_gamma},
                       {"sigma_eps", d.sigma_eps},
                       {"n", d.n},
                       {"t", d.t},
                       {"d", d.d},
                       {"xi_true", d.xi_true}});
  }
  json by_tau = json::array();
  for (std::size_t k = 0; k < cfg.taus.size(); ++k) {
    json coverage = json::array();
    json failures = json::array();
    json cells = json::array();
    for (std::size_t r = 0; r < cfg.row_values.size(); ++r) {
      json cov_row = json::array();
      json fail_row = json::array();
      for (std::size_t c = 0; c < table.cols(); ++c) {
        const auto& cell = table.at(k, r, c);
        cov_row.push_back(cell.coverage);
        fail_row.push_back(cell.failures);
        cells.push_back({{"row", r},
                         {"col", c},
                         {"reps", cell.reps},
                         {"covered", cell.covered},
                         {"failures", cell.failures},
                         {"coverage", cell.coverage},
                         {"true_value", cell.true_value},
                         {"xi_hat_median", cell.xi_hat_median},
                         {"sigma2_mean", cell.sigma2_mean},
                         {"ci_width_mean", cell.ci_width_mean}});
      }
      coverage.push_back(cov_row);
      failures.push_back(fail_row);
    }
    by_tau.push_back({{"tau", cfg.taus[k]},
                      {"coverage", coverage},
                      {"failures", failures},
                      {"cells", cells}});
  }
  json out = {{"seed", cfg.seed},
              {"reps", cfg.reps},
              {"nominal", table.nominal},
              {"tuning", {{"m", cfg.tuning.m}, {"l", cfg.tuning.l}, {"alpha", cfg.tuning.alpha}}},
              {"rows", {{"name", cfg.row_name}, {"values", cfg.row_values}}},
              {"cols", {{"name", cfg.col_name}, {"values", cfg.col_values}}},
              {"taus", cfg.taus},
              {"designs", designs},
              {"tables", by_tau}};
  return out.dump(2);
}

}  // namespace eqc

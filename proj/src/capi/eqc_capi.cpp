#include "eqc/eqc.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "error.hpp"
#include "mc_lab.hpp"
#include "panel.hpp"
#include "qr_solver.hpp"
#include "reg_inference.hpp"
#include "uncond_inference.hpp"

struct eqc_panel {
  eqc::PanelData data;
};

struct eqc_reg_inference {
  eqc::RegTailInference data;
};

struct eqc_coverage {
  eqc::CoverageTable data;
};

namespace {

thread_local std::string last_error;

eqc_status to_status(eqc::ErrorCode code) {
  using eqc::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return EQC_ERR_INVALID_ARGUMENT;
    case ErrorCode::TauOutOfRange: return EQC_ERR_TAU_OUT_OF_RANGE;
    case ErrorCode::NonFinite: return EQC_ERR_NON_FINITE;
    case ErrorCode::DuplicateCell: return EQC_ERR_DUPLICATE_CELL;
    case ErrorCode::MissingCell: return EQC_ERR_MISSING_CELL;
    case ErrorCode::NonNumericField: return EQC_ERR_NON_NUMERIC_FIELD;
    case ErrorCode::UnbalancedPanel: return EQC_ERR_UNBALANCED_PANEL;
    case ErrorCode::SingularDesign: return EQC_ERR_SINGULAR_DESIGN;
    case ErrorCode::NotConverged: return EQC_ERR_NOT_CONVERGED;
    case ErrorCode::TooLarge: return EQC_ERR_TOO_LARGE;
    case ErrorCode::DegenerateSpacing: return EQC_ERR_DEGENERATE_SPACING;
    case ErrorCode::NonPositiveRho: return EQC_ERR_NON_POSITIVE_RHO;
    case ErrorCode::NonPositiveH: return EQC_ERR_NON_POSITIVE_H;
    case ErrorCode::SingularQH: return EQC_ERR_SINGULAR_QH;
    case ErrorCode::Io: return EQC_ERR_IO;
  }
  return EQC_ERR_INTERNAL;
}

template <class F>
eqc_status guarded(F&& body) noexcept {
  try {
    last_error.clear();
    return body();
  } catch (const eqc::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return EQC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return EQC_ERR_INTERNAL;
  }
}

eqc_status invalid(const char* what) {
  last_error = std::string("InvalidArgument: ") + what;
  return EQC_ERR_INVALID_ARGUMENT;
}

eqc::TuningParams from_c(const eqc_tuning* t) {
  eqc::TuningParams out;
  if (!t) return out;
  out.m = t->m;
  out.l = t->l;
  out.alpha = t->alpha;
  switch (t->tail_type) {
    case EQC_TAIL_TYPE2: out.tail_type = eqc::TailType::Type2; break;
    case EQC_TAIL_TYPE3: out.tail_type = eqc::TailType::Type3; break;
    default: out.tail_type = eqc::TailType::Type1; break;
  }
  return out;
}

eqc::SolverOptions from_c(const eqc_solver_options* o) {
  eqc::SolverOptions out;
  if (!o) return out;
  out.max_iterations = o->max_iterations;
  out.gap_tolerance = o->gap_tolerance;
  out.polish = o->polish != 0;
  return out;
}

eqc::SimDesign from_c(const eqc_sim_design& d) {
  eqc::SimDesign out;
  switch (d.family) {
    case EQC_DESIGN_INTERACTIVE: out.family = eqc::DesignFamily::Interactive; break;
    case EQC_DESIGN_IID_NORMAL: out.family = eqc::DesignFamily::IIDNormal; break;
    case EQC_DESIGN_LOCATION_REGRESSION: out.family = eqc::DesignFamily::LocationRegression; break;
    case EQC_DESIGN_PARETO: out.family = eqc::DesignFamily::ParetoTail; break;
    default: out.family = eqc::DesignFamily::Additive; break;
  }
  out.sigma_alpha = d.sigma_alpha;
  out.sigma_gamma = d.sigma_gamma;
  out.sigma_eps = d.sigma_eps;
  out.n = d.n;
  out.t = d.t;
  out.d = d.d;
  out.slope = d.slope;
  out.xi_true = d.xi_true;
  return out;
}

void fill_info(const eqc::QuantileFit& fit, eqc_fit_info* info) {
  if (!info) return;
  info->tau = fit.tau;
  info->objective = fit.objective;
  info->iterations = fit.iterations;
  info->converged = fit.converged ? 1 : 0;
  info->duality_gap = fit.duality_gap;
  info->d = fit.beta.size();
}

eqc_status copy_out(const double* src, size_t count, double* out, size_t len) {
  if (!out || len != count) return invalid("output buffer has the wrong length");
  std::memcpy(out, src, count * sizeof(double));
  return EQC_OK;
}

std::size_t design_dim(const eqc::PanelData& p) { return p.has_covariates() ? p.d() : 1; }

eqc_status write_file(const char* path, auto&& writer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    last_error = std::string("IoError: cannot open ") + path;
    return EQC_ERR_IO;
  }
  writer(out);
  if (!out) {
    last_error = std::string("IoError: write failed for ") + path;
    return EQC_ERR_IO;
  }
  return EQC_OK;
}

}  // namespace

extern "C" {

const char* eqc_version(void) { return EQC_VERSION_STRING; }

const char* eqc_status_name(eqc_status status) {
  switch (status) {
    case EQC_OK: return "Ok";
    case EQC_ERR_INVALID_ARGUMENT: return "InvalidArgument";
    case EQC_ERR_TAU_OUT_OF_RANGE: return "TauOutOfRange";
    case EQC_ERR_NON_FINITE: return "NonFinite";
    case EQC_ERR_DUPLICATE_CELL: return "DuplicateCell";
    case EQC_ERR_MISSING_CELL: return "MissingCell";
    case EQC_ERR_NON_NUMERIC_FIELD: return "NonNumericField";
    case EQC_ERR_UNBALANCED_PANEL: return "UnbalancedPanel";
    case EQC_ERR_SINGULAR_DESIGN: return "SingularDesign";
    case EQC_ERR_NOT_CONVERGED: return "NotConverged";
    case EQC_ERR_TOO_LARGE: return "TooLarge";
    case EQC_ERR_DEGENERATE_SPACING: return "DegenerateSpacing";
    case EQC_ERR_NON_POSITIVE_RHO: return "NonPositiveRho";
    case EQC_ERR_NON_POSITIVE_H: return "NonPositiveH";
    case EQC_ERR_SINGULAR_QH: return "SingularQH";
    case EQC_ERR_IO: return "IoError";
    case EQC_ERR_INTERNAL: return "Internal";
  }
  return "Unknown";
}

const char* eqc_last_error(void) { return last_error.c_str(); }

eqc_status eqc_panel_load_csv(const char* path, int keep_covariates, eqc_panel** out) {
  if (!path || !out) return invalid("null argument");
  return guarded([&] {
    auto data = eqc::load_csv_file(path);
    if (!keep_covariates && data.has_covariates()) data = data.without_covariates();
    *out = new eqc_panel{std::move(data)};
    return EQC_OK;
  });
}

eqc_status eqc_panel_from_arrays(size_t n, size_t t, const double* y, size_t d, const double* x,
                                 eqc_panel** out) {
  if (!y || !out || (d > 0 && !x)) return invalid("null argument");
  return guarded([&] {
    std::vector<double> yv(y, y + n * t);
    std::vector<double> xv;
    if (d > 0) xv.assign(x, x + n * t * d);
    *out = new eqc_panel{eqc::PanelData(n, t, std::move(yv), d, std::move(xv))};
    return EQC_OK;
  });
}

void eqc_panel_free(eqc_panel* panel) { delete panel; }
size_t eqc_panel_n(const eqc_panel* panel) { return panel ? panel->data.n() : 0; }
size_t eqc_panel_t(const eqc_panel* panel) { return panel ? panel->data.t() : 0; }
size_t eqc_panel_d(const eqc_panel* panel) { return panel ? panel->data.d() : 0; }

eqc_status eqc_panel_write_csv(const eqc_panel* panel, const char* path) {
  if (!panel || !path) return invalid("null argument");
  return guarded([&] {
    return write_file(path, [&](std::ostream& os) { eqc::write_csv(panel->data, os); });
  });
}

eqc_status eqc_validate(const eqc_panel* panel, double tau, eqc_diagnostics* out) {
  if (!panel || !out) return invalid("null argument");
  return guarded([&] {
    const auto diag = eqc::validate(panel->data, tau > 0.0 ? std::optional<double>(tau)
                                                           : std::nullopt);
    out->n = diag.n;
    out->t = diag.t;
    out->d = diag.d;
    out->gram_min_eigenvalue = diag.gram_min_eigenvalue;
    out->gram_trace = diag.gram_trace;
    out->tau_nt = diag.tau_nt.value_or(0.0);
    out->few_tail_cells = diag.tau_nt && *diag.tau_nt < eqc::kMinTailCount ? 1 : 0;
    return EQC_OK;
  });
}

void eqc_solver_options_default(eqc_solver_options* opts) {
  if (!opts) return;
  const eqc::SolverOptions d;
  opts->max_iterations = d.max_iterations;
  opts->gap_tolerance = d.gap_tolerance;
  opts->polish = d.polish ? 1 : 0;
}

eqc_status eqc_check_loss(const double* residuals, size_t count, double tau, double* out) {
  if ((!residuals && count > 0) || !out) return invalid("null argument");
  return guarded([&] {
    *out = eqc::check_loss(std::span<const double>(residuals, count), tau);
    return EQC_OK;
  });
}

eqc_status eqc_pooled_quantile(const eqc_panel* panel, double tau, int upper, double* beta_out,
                               eqc_fit_info* info) {
  if (!panel || !beta_out) return invalid("null argument");
  return guarded([&] {
    eqc::require_tau(tau);
    auto fit = upper ? eqc::pooled_quantile(panel->data.reflected(), 1.0 - tau)
                     : eqc::pooled_quantile(panel->data, tau);
    if (upper) {
      fit.beta[0] = -fit.beta[0];
      fit.tau = tau;
    }
    *beta_out = fit.beta[0];
    fill_info(fit, info);
    return EQC_OK;
  });
}

eqc_status eqc_fit_linear(const eqc_panel* panel, double tau, int upper,
                          const eqc_solver_options* opts, double* beta_out, size_t beta_len,
                          eqc_fit_info* info) {
  if (!panel || !beta_out) return invalid("null argument");
  return guarded([&] {
    eqc::require_tau(tau);
    if (beta_len != design_dim(panel->data)) return invalid("beta buffer has the wrong length");
    auto fit = upper ? eqc::fit_linear_quantile(panel->data.reflected(), 1.0 - tau, from_c(opts))
                     : eqc::fit_linear_quantile(panel->data, tau, from_c(opts));
    if (upper) {
      for (double& b : fit.beta) b = -b;
      fit.tau = tau;
    }
    std::memcpy(beta_out, fit.beta.data(), beta_len * sizeof(double));
    fill_info(fit, info);
    if (!fit.converged) {
      last_error = "NotConverged: duality gap criterion not met within the iteration limit";
      return EQC_ERR_NOT_CONVERGED;
    }
    return EQC_OK;
  });
}

eqc_status eqc_brute_force_fit(const eqc_panel* panel, double tau, double* beta_out,
                               size_t beta_len, eqc_fit_info* info) {
  if (!panel || !beta_out) return invalid("null argument");
  return guarded([&] {
    if (beta_len != design_dim(panel->data)) return invalid("beta buffer has the wrong length");
    const auto fit = eqc::brute_force_fit(panel->data, tau);
    std::memcpy(beta_out, fit.beta.data(), beta_len * sizeof(double));
    fill_info(fit, info);
    return EQC_OK;
  });
}

void eqc_tuning_default(eqc_tuning* tuning) {
  if (!tuning) return;
  tuning->m = 2.0;
  tuning->l = 2.0;
  tuning->alpha = 0.05;
  tuning->tail_type = EQC_TAIL_TYPE1;
}

eqc_status eqc_score(const eqc_panel* panel, double beta, double tau, double* out) {
  if (!panel || !out) return invalid("null argument");
  return guarded([&] {
    *out = eqc::score(panel->data, beta, tau);
    return EQC_OK;
  });
}

eqc_status eqc_sigma2_hat(const eqc_panel* panel, double beta_hat, double tau, double* out) {
  if (!panel || !out) return invalid("null argument");
  return guarded([&] {
    *out = eqc::sigma2_hat(panel->data, beta_hat, tau);
    return EQC_OK;
  });
}

eqc_status eqc_spacing_scale(const eqc_panel* panel, double tau, double m, double* out) {
  if (!panel || !out) return invalid("null argument");
  return guarded([&] {
    *out = eqc::spacing_scale(panel->data, tau, m);
    return EQC_OK;
  });
}

eqc_status eqc_tail_index(const eqc_panel* panel, double tau, double m, double l, double* rho_out,
                          double* xi_out) {
  if (!panel || !rho_out || !xi_out) return invalid("null argument");
  return guarded([&] {
    const auto ti = eqc::tail_index(panel->data, tau, m, l);
    *rho_out = ti.rho_hat;
    *xi_out = ti.xi_hat;
    return EQC_OK;
  });
}

double eqc_ev_factor(double xi, double m) {
  try {
    return eqc::ev_factor(xi, m);
  } catch (const std::exception& e) {
    last_error = e.what();
    return 0.0;
  }
}

eqc_status eqc_infer(const eqc_panel* panel, double tau, const eqc_tuning* tuning, int upper,
                     eqc_tail_inference* out) {
  if (!panel || !out) return invalid("null argument");
  return guarded([&] {
    const auto inf = eqc::infer(panel->data, tau, from_c(tuning), upper != 0);
    out->tau = inf.tau;
    out->upper = inf.upper ? 1 : 0;
    out->beta_hat = inf.beta_hat;
    out->xi_hat = inf.xi_hat;
    out->rho_hat = inf.rho_hat;
    out->a_hat = inf.a_hat;
    out->sigma2_hat = inf.sigma2_hat;
    out->var_beta = inf.var_beta;
    out->ci_low = inf.ci_low;
    out->ci_high = inf.ci_high;
    out->m = inf.m;
    out->l = inf.l;
    out->alpha = inf.alpha;
    for (int k = 0; k < 4; ++k) out->quantiles[k] = inf.quantiles[static_cast<std::size_t>(k)];
    return EQC_OK;
  });
}

eqc_status eqc_reg_infer(const eqc_panel* panel, double tau, const eqc_tuning* tuning, int upper,
                         eqc_reg_inference** out) {
  if (!panel || !out) return invalid("null argument");
  return guarded([&] {
    auto inf = eqc::infer_regression(panel->data, tau, from_c(tuning), upper != 0);
    const bool converged = inf.converged;
    *out = new eqc_reg_inference{std::move(inf)};
    if (!converged) {
      last_error = "NotConverged: a quantile fit missed the duality gap tolerance";
      return EQC_ERR_NOT_CONVERGED;
    }
    return EQC_OK;
  });
}

void eqc_reg_inference_free(eqc_reg_inference* inf) { delete inf; }

eqc_status eqc_reg_summary_get(const eqc_reg_inference* inf, eqc_reg_summary* out) {
  if (!inf || !out) return invalid("null argument");
  const auto& r = inf->data;
  out->tau = r.tau;
  out->upper = r.upper ? 1 : 0;
  out->converged = r.converged ? 1 : 0;
  out->tail_type = r.tail_type == eqc::TailType::Type2   ? EQC_TAIL_TYPE2
                   : r.tail_type == eqc::TailType::Type3 ? EQC_TAIL_TYPE3
                                                         : EQC_TAIL_TYPE1;
  out->d = r.beta_hat.size();
  out->xi_hat = r.xi_hat;
  out->rho_hat = r.rho_hat;
  out->a_hat = r.a_hat;
  out->ev_factor = r.ev;
  out->m = r.m;
  out->l = r.l;
  out->alpha = r.alpha;
  return EQC_OK;
}

eqc_status eqc_reg_beta(const eqc_reg_inference* inf, double* out, size_t len) {
  if (!inf) return invalid("null argument");
  return copy_out(inf->data.beta_hat.data(), inf->data.beta_hat.size(), out, len);
}

eqc_status eqc_reg_mu_x(const eqc_reg_inference* inf, double* out, size_t len) {
  if (!inf) return invalid("null argument");
  return copy_out(inf->data.mu_x.data(), static_cast<size_t>(inf->data.mu_x.size()), out, len);
}

namespace {
eqc_status copy_matrix(const Eigen::MatrixXd& m, double* out, size_t len) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  return copy_out(rm.data(), static_cast<size_t>(rm.size()), out, len);
}
}  // namespace

eqc_status eqc_reg_sigma_hat(const eqc_reg_inference* inf, double* out, size_t len) {
  if (!inf) return invalid("null argument");
  return copy_matrix(inf->data.sigma_hat, out, len);
}

eqc_status eqc_reg_q_h_hat(const eqc_reg_inference* inf, double* out, size_t len) {
  if (!inf) return invalid("null argument");
  return copy_matrix(inf->data.q_h_hat, out, len);
}

size_t eqc_reg_h_count(const eqc_reg_inference* inf) { return inf ? inf->data.h_values.size() : 0; }

eqc_status eqc_reg_h_values(const eqc_reg_inference* inf, double* out, size_t len) {
  if (!inf) return invalid("null argument");
  return copy_out(inf->data.h_values.data(), inf->data.h_values.size(), out, len);
}

eqc_status eqc_reg_functional(const eqc_reg_inference* inf, const double* x, size_t len,
                              eqc_functional_ci* out) {
  if (!inf || !x || !out) return invalid("null argument");
  return guarded([&] {
    const auto ci = eqc::functional_ci(inf->data, std::span<const double>(x, len));
    out->point = ci.point;
    out->ci_low = ci.ci_low;
    out->ci_high = ci.ci_high;
    out->std_error = ci.std_error;
    return EQC_OK;
  });
}

void eqc_sim_design_default(eqc_sim_design* design) {
  if (!design) return;
  design->family = EQC_DESIGN_ADDITIVE;
  design->sigma_alpha = 1.0;
  design->sigma_gamma = 1.0;
  design->sigma_eps = 2.0;
  design->n = 200;
  design->t = 200;
  design->d = 2;
  design->slope = 1.0;
  design->xi_true = 0.5;
}

eqc_status eqc_generate(const eqc_sim_design* design, uint64_t rep_seed, eqc_panel** out) {
  if (!design || !out) return invalid("null argument");
  return guarded([&] {
    *out = new eqc_panel{eqc::generate(from_c(*design), rep_seed)};
    return EQC_OK;
  });
}

eqc_status eqc_true_quantile(const eqc_sim_design* design, double tau, double* out) {
  if (!design || !out) return invalid("null argument");
  return guarded([&] {
    *out = eqc::true_quantile(from_c(*design), tau);
    return EQC_OK;
  });
}

eqc_status eqc_run_coverage(const eqc_study_config* config, eqc_coverage** out) {
  if (!config || !out || !config->row_values || !config->taus) return invalid("null argument");
  return guarded([&] {
    const eqc::SimDesign base = from_c(config->base);
    std::vector<double> rows(config->row_values, config->row_values + config->n_rows);
    eqc::StudyConfig study;
    if (base.family == eqc::DesignFamily::ParetoTail) {
      study = eqc::pareto_grid(base, rows);
    } else {
      if (!config->col_values) return invalid("null column values");
      std::vector<double> cols(config->col_values, config->col_values + config->n_cols);
      study = eqc::factor_grid(base, rows, cols);
    }
    study.taus.assign(config->taus, config->taus + config->n_taus);
    study.tuning = from_c(&config->tuning);
    study.reps = config->reps;
    study.seed = config->seed;
    study.workers = config->workers;
    *out = new eqc_coverage{eqc::run_coverage(study)};
    return EQC_OK;
  });
}

void eqc_coverage_free(eqc_coverage* table) { delete table; }

size_t eqc_coverage_rows(const eqc_coverage* table) {
  return table ? table->data.config.row_values.size() : 0;
}

size_t eqc_coverage_cols(const eqc_coverage* table) { return table ? table->data.cols() : 0; }

eqc_status eqc_coverage_cell(const eqc_coverage* table, size_t tau_index, size_t row, size_t col,
                             eqc_cell_result* out) {
  if (!table || !out) return invalid("null argument");
  return guarded([&] {
    const auto& c = table->data.at(tau_index, row, col);
    out->reps = c.reps;
    out->covered = c.covered;
    out->failures = c.failures;
    out->coverage = c.coverage;
    out->true_value = c.true_value;
    out->xi_hat_median = c.xi_hat_median;
    out->sigma2_mean = c.sigma2_mean;
    out->ci_width_mean = c.ci_width_mean;
    return EQC_OK;
  });
}

eqc_status eqc_coverage_write_csv(const eqc_coverage* table, size_t tau_index, const char* path) {
  if (!table || !path) return invalid("null argument");
  if (tau_index >= table->data.config.taus.size()) return invalid("tau index out of range");
  return guarded([&] {
    return write_file(path, [&](std::ostream& os) {
      eqc::write_coverage_csv(table->data, tau_index, os);
    });
  });
}

eqc_status eqc_coverage_write_cells_csv(const eqc_coverage* table, const char* path) {
  if (!table || !path) return invalid("null argument");
  return guarded([&] {
    return write_file(path, [&](std::ostream& os) { eqc::write_cells_csv(table->data, os); });
  });
}

eqc_status eqc_coverage_write_json(const eqc_coverage* table, const char* path) {
  if (!table || !path) return invalid("null argument");
  return guarded([&] {
    return write_file(path, [&](std::ostream& os) { os << eqc::coverage_json(table->data) << '\n'; });
  });
}

}  // extern "C"

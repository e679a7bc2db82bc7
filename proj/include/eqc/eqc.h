/*
 * eqc: extremal quantile estimation and inference for two-way clustered
 * panels. Plain C interface over the C++ core.
 *
 * Every fallible call returns an eqc_status; on failure a message for the
 * calling thread is available from eqc_last_error(). Handles are opaque and
 * owned by the caller, who releases them with the matching *_free function.
 */
#ifndef EQC_EQC_H
#define EQC_EQC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(EQC_BUILDING_LIBRARY)
#define EQC_API __attribute__((visibility("default")))
#else
#define EQC_API
#endif

typedef enum eqc_status {
  EQC_OK = 0,
  EQC_ERR_INVALID_ARGUMENT = 1,
  EQC_ERR_TAU_OUT_OF_RANGE = 2,
  EQC_ERR_NON_FINITE = 3,
  EQC_ERR_DUPLICATE_CELL = 4,
  EQC_ERR_MISSING_CELL = 5,
  EQC_ERR_NON_NUMERIC_FIELD = 6,
  EQC_ERR_UNBALANCED_PANEL = 7,
  EQC_ERR_SINGULAR_DESIGN = 8,
  EQC_ERR_NOT_CONVERGED = 9,
  EQC_ERR_TOO_LARGE = 10,
  EQC_ERR_DEGENERATE_SPACING = 11,
  EQC_ERR_NON_POSITIVE_RHO = 12,
  EQC_ERR_NON_POSITIVE_H = 13,
  EQC_ERR_SINGULAR_QH = 14,
  EQC_ERR_IO = 15,
  EQC_ERR_INTERNAL = 99
} eqc_status;

typedef enum eqc_tail_type {
  EQC_TAIL_TYPE1 = 1, /* thin tail, xi = 0 */
  EQC_TAIL_TYPE2 = 2, /* heavy tail, xi > 0 */
  EQC_TAIL_TYPE3 = 3  /* bounded support, xi < 0 */
} eqc_tail_type;

typedef enum eqc_design_family {
  EQC_DESIGN_ADDITIVE = 0,
  EQC_DESIGN_INTERACTIVE = 1,
  EQC_DESIGN_IID_NORMAL = 2,
  EQC_DESIGN_LOCATION_REGRESSION = 3,
  EQC_DESIGN_PARETO = 4
} eqc_design_family;

typedef struct eqc_panel eqc_panel;
typedef struct eqc_reg_inference eqc_reg_inference;
typedef struct eqc_coverage eqc_coverage;

EQC_API const char* eqc_version(void);
/* Stable CamelCase error name, e.g. "DegenerateSpacing". */
EQC_API const char* eqc_status_name(eqc_status status);
/* Message of the last failed call on this thread ("" if none). */
EQC_API const char* eqc_last_error(void);

/* ---- panels ---------------------------------------------------------- */

/* CSV with header i,t,y[,x1,...]; gzip when the path ends in ".gz".
 * With keep_covariates == 0 covariate columns are read but dropped. */
EQC_API eqc_status eqc_panel_load_csv(const char* path, int keep_covariates, eqc_panel** out);
/* y: n*t row-major. x: n*t*d (first coordinate 1) or NULL with d == 0. */
EQC_API eqc_status eqc_panel_from_arrays(size_t n, size_t t, const double* y, size_t d,
                                         const double* x, eqc_panel** out);
EQC_API void eqc_panel_free(eqc_panel* panel);
EQC_API size_t eqc_panel_n(const eqc_panel* panel);
EQC_API size_t eqc_panel_t(const eqc_panel* panel);
/* Covariate dimension including the intercept; 0 without covariates. */
EQC_API size_t eqc_panel_d(const eqc_panel* panel);
EQC_API eqc_status eqc_panel_write_csv(const eqc_panel* panel, const char* path);

typedef struct eqc_diagnostics {
  size_t n;
  size_t t;
  size_t d;
  double gram_min_eigenvalue;
  double gram_trace;
  double tau_nt;       /* 0 when no tau was given */
  int few_tail_cells;  /* tau*N*T < 30 */
} eqc_diagnostics;

/* tau <= 0 skips the tau*N*T check. */
EQC_API eqc_status eqc_validate(const eqc_panel* panel, double tau, eqc_diagnostics* out);

/* ---- quantile fits --------------------------------------------------- */

typedef struct eqc_solver_options {
  int max_iterations;
  double gap_tolerance;
  int polish;
} eqc_solver_options;

EQC_API void eqc_solver_options_default(eqc_solver_options* opts);

typedef struct eqc_fit_info {
  double tau;
  double objective;
  int iterations;
  int converged;
  double duality_gap;
  size_t d;
} eqc_fit_info;

EQC_API eqc_status eqc_check_loss(const double* residuals, size_t count, double tau, double* out);
/* Pooled tau-quantile; upper != 0 estimates via reflection Y -> -Y. */
EQC_API eqc_status eqc_pooled_quantile(const eqc_panel* panel, double tau, int upper,
                                       double* beta_out, eqc_fit_info* info);
/* Linear quantile regression; beta_out holds max(d, 1) values. Returns
 * EQC_ERR_NOT_CONVERGED with the best iterate filled in when the duality-gap
 * criterion is not met. opts may be NULL. */
EQC_API eqc_status eqc_fit_linear(const eqc_panel* panel, double tau, int upper,
                                  const eqc_solver_options* opts, double* beta_out,
                                  size_t beta_len, eqc_fit_info* info);
EQC_API eqc_status eqc_brute_force_fit(const eqc_panel* panel, double tau, double* beta_out,
                                       size_t beta_len, eqc_fit_info* info);

/* ---- unconditional inference ----------------------------------------- */

typedef struct eqc_tuning {
  double m;
  double l;
  double alpha;
  eqc_tail_type tail_type;
} eqc_tuning;

EQC_API void eqc_tuning_default(eqc_tuning* tuning);

typedef struct eqc_tail_inference {
  double tau;
  int upper;
  double beta_hat;
  double xi_hat;
  double rho_hat;
  double a_hat;
  double sigma2_hat;
  double var_beta;
  double ci_low;
  double ci_high;
  double m;
  double l;
  double alpha;
  double quantiles[4]; /* order statistics at tau, m tau, l tau, m l tau */
} eqc_tail_inference;

EQC_API eqc_status eqc_score(const eqc_panel* panel, double beta, double tau, double* out);
EQC_API eqc_status eqc_sigma2_hat(const eqc_panel* panel, double beta_hat, double tau,
                                  double* out);
EQC_API eqc_status eqc_spacing_scale(const eqc_panel* panel, double tau, double m, double* out);
EQC_API eqc_status eqc_tail_index(const eqc_panel* panel, double tau, double m, double l,
                                  double* rho_out, double* xi_out);
EQC_API double eqc_ev_factor(double xi, double m);
EQC_API eqc_status eqc_infer(const eqc_panel* panel, double tau, const eqc_tuning* tuning,
                             int upper, eqc_tail_inference* out);

/* ---- regression inference -------------------------------------------- */

typedef struct eqc_reg_summary {
  double tau;
  int upper;
  int converged;
  eqc_tail_type tail_type;
  size_t d;
  double xi_hat;
  double rho_hat;
  double a_hat;
  double ev_factor;
  double m;
  double l;
  double alpha;
} eqc_reg_summary;

typedef struct eqc_functional_ci {
  double point;
  double ci_low;
  double ci_high;
  double std_error;
} eqc_functional_ci;

/* Panel must carry covariates. Returns EQC_ERR_NOT_CONVERGED (with *out set)
 * when a ladder fit missed the gap tolerance. */
EQC_API eqc_status eqc_reg_infer(const eqc_panel* panel, double tau, const eqc_tuning* tuning,
                                 int upper, eqc_reg_inference** out);
EQC_API void eqc_reg_inference_free(eqc_reg_inference* inf);
EQC_API eqc_status eqc_reg_summary_get(const eqc_reg_inference* inf, eqc_reg_summary* out);
/* Vector accessors copy len == d values; matrices are d*d row-major. */
EQC_API eqc_status eqc_reg_beta(const eqc_reg_inference* inf, double* out, size_t len);
EQC_API eqc_status eqc_reg_mu_x(const eqc_reg_inference* inf, double* out, size_t len);
EQC_API eqc_status eqc_reg_sigma_hat(const eqc_reg_inference* inf, double* out, size_t len);
EQC_API eqc_status eqc_reg_q_h_hat(const eqc_reg_inference* inf, double* out, size_t len);
EQC_API size_t eqc_reg_h_count(const eqc_reg_inference* inf);
EQC_API eqc_status eqc_reg_h_values(const eqc_reg_inference* inf, double* out, size_t len);
EQC_API eqc_status eqc_reg_functional(const eqc_reg_inference* inf, const double* x, size_t len,
                                      eqc_functional_ci* out);

/* ---- Monte Carlo ----------------------------------------------------- */

typedef struct eqc_sim_design {
  eqc_design_family family;
  double sigma_alpha;
  double sigma_gamma;
  double sigma_eps;
  size_t n;
  size_t t;
  size_t d;
  double slope;
  double xi_true;
} eqc_sim_design;

EQC_API void eqc_sim_design_default(eqc_sim_design* design);
EQC_API eqc_status eqc_generate(const eqc_sim_design* design, uint64_t rep_seed, eqc_panel** out);
EQC_API eqc_status eqc_true_quantile(const eqc_sim_design* design, double tau, double* out);

typedef struct eqc_study_config {
  eqc_sim_design base;
  /* sigma_alpha values, or xi_true values for EQC_DESIGN_PARETO */
  const double* row_values;
  size_t n_rows;
  /* sigma_gamma values; ignored for EQC_DESIGN_PARETO */
  const double* col_values;
  size_t n_cols;
  const double* taus;
  size_t n_taus;
  eqc_tuning tuning;
  size_t reps;
  uint64_t seed;
  size_t workers; /* 0: hardware concurrency */
} eqc_study_config;

typedef struct eqc_cell_result {
  size_t reps;
  size_t covered;
  size_t failures;
  double coverage;
  double true_value;
  double xi_hat_median;
  double sigma2_mean;
  double ci_width_mean;
} eqc_cell_result;

EQC_API eqc_status eqc_run_coverage(const eqc_study_config* config, eqc_coverage** out);
EQC_API void eqc_coverage_free(eqc_coverage* table);
EQC_API size_t eqc_coverage_rows(const eqc_coverage* table);
EQC_API size_t eqc_coverage_cols(const eqc_coverage* table);
EQC_API eqc_status eqc_coverage_cell(const eqc_coverage* table, size_t tau_index, size_t row,
                                     size_t col, eqc_cell_result* out);
EQC_API eqc_status eqc_coverage_write_csv(const eqc_coverage* table, size_t tau_index,
                                          const char* path);
EQC_API eqc_status eqc_coverage_write_cells_csv(const eqc_coverage* table, const char* path);
EQC_API eqc_status eqc_coverage_write_json(const eqc_coverage* table, const char* path);

#ifdef __cplusplus
}
#endif

#endif /* EQC_EQC_H */

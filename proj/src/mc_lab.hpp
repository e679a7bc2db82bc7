#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "panel.hpp"
#include "uncond_inference.hpp"

namespace eqc {

enum class DesignFamily { Additive, Interactive, IIDNormal, LocationRegression, ParetoTail };

std::string family_name(DesignFamily family);

struct SimDesign {
  DesignFamily family = DesignFamily::Additive;
  double sigma_alpha = 1.0;
  double sigma_gamma = 1.0;
  double sigma_eps = 2.0;
  std::size_t n = 200;
  std::size_t t = 200;
  std::size_t d = 2;       // LocationRegression: covariates incl. intercept
  double slope = 1.0;      // LocationRegression: every non-intercept coefficient
  double xi_true = 0.5;    // ParetoTail
};

// Counter-based seed derivation: a pure function of its arguments, so any
// replication can be regenerated independently of scheduling.
std::uint64_t mix64(std::uint64_t z) noexcept;
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t cell, std::uint64_t rep) noexcept;

// Fixed stream labels for the independent factors of one panel.
enum class Stream : std::uint64_t { Alpha = 1, Gamma = 2, Eps = 3, Covariates = 4, Uniform = 5 };
std::uint64_t stream_seed(std::uint64_t rep_seed, Stream stream) noexcept;

// Panel for one replication; bit-for-bit reproducible from rep_seed.
PanelData generate(const SimDesign& design, std::uint64_t rep_seed);
// Outcomes only (row-major n x t), with no covariate array.
void generate_outcomes(const SimDesign& design, std::uint64_t rep_seed, std::vector<double>& y);

// Population tau-quantile of Y_it (of the composite error plus the intercept
// for LocationRegression evaluated at x = e_1).
double true_quantile(const SimDesign& design, double tau);
// beta(tau) of the LocationRegression design.
std::vector<double> true_coefficients(const SimDesign& design, double tau);
// Functional evaluated in LocationRegression coverage runs: (1, 0.5, ..., 0.5).
std::vector<double> regression_target_point(const SimDesign& design);

struct StudyConfig {
  // Grid cells in row-major order: rows.size() * max(cols.size(), 1) designs.
  std::vector<SimDesign> designs;
  std::string row_name;
  std::vector<double> row_values;
  std::string col_name;
  std::vector<double> col_values;  // empty: one unlabeled column
  std::vector<double> taus{0.05};
  TuningParams tuning;
  std::size_t reps = 1000;
  std::uint64_t seed = 42;
  std::size_t workers = 0;  // 0: hardware concurrency

  std::size_t cell_count() const noexcept { return designs.size(); }
};

// sigma_alpha x sigma_gamma grid for the Additive / Interactive / IIDNormal
// families; the remaining design fields come from `base`.
StudyConfig factor_grid(const SimDesign& base, const std::vector<double>& sigma_alpha,
                        const std::vector<double>& sigma_gamma);
// One row per xi_true for the ParetoTail family.
StudyConfig pareto_grid(const SimDesign& base, const std::vector<double>& xi_values);

struct CellResult {
  std::size_t reps = 0;
  std::size_t covered = 0;
  std::size_t failures = 0;
  double coverage = 0.0;        // covered / reps
  double true_value = 0.0;
  double xi_hat_median = 0.0;   // over successful reps
  double sigma2_mean = 0.0;     // over successful reps
  double ci_width_mean = 0.0;   // over successful reps
};

struct CoverageTable {
  StudyConfig config;
  double nominal = 0.95;
  // cells[tau index][cell index]
  std::vector<std::vector<CellResult>> cells;

  const CellResult& at(std::size_t tau_index, std::size_t row, std::size_t col) const;
  std::size_t cols() const noexcept;
};

CoverageTable run_coverage(const StudyConfig& config);

// Wide coverage matrix for one tau: rows = row_values, columns = col_values.
void write_coverage_csv(const CoverageTable& table, std::size_t tau_index, std::ostream& out);
// Long format, one line per (tau, cell) including the failures column.
void write_cells_csv(const CoverageTable& table, std::ostream& out);
std::string coverage_json(const CoverageTable& table);

}  // namespace eqc

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace eqc {

// Balanced N x T panel of outcomes Y_it with an optional N x T x d covariate
// array whose first coordinate is the constant 1. Immutable after construction.
class PanelData {
 public:
  // y is row-major (index i*T + t); x, when non-empty, is (i*T + t)*d + k.
  PanelData(std::size_t n, std::size_t t, std::vector<double> y, std::size_t d = 0,
            std::vector<double> x = {});

  std::size_t n() const noexcept { return n_; }
  std::size_t t() const noexcept { return t_; }
  std::size_t cells() const noexcept { return n_ * t_; }
  bool has_covariates() const noexcept { return d_ > 0; }
  // Covariate dimension including the intercept; 0 when covariates are absent.
  std::size_t d() const noexcept { return d_; }

  double y(std::size_t i, std::size_t t) const { return y_[i * t_ + t]; }
  std::span<const double> y_values() const noexcept { return y_; }
  std::span<const double> x_row(std::size_t i, std::size_t t) const {
    return {x_.data() + (i * t_ + t) * d_, d_};
  }
  std::span<const double> x_row(std::size_t cell) const {
    return {x_.data() + cell * d_, d_};
  }
  std::span<const double> x_values() const noexcept { return x_; }

  // Original cluster labels (dense index -> label). Defaults to 1..N, 1..T.
  const std::vector<std::int64_t>& row_labels() const noexcept { return row_labels_; }
  const std::vector<std::int64_t>& col_labels() const noexcept { return col_labels_; }
  const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
  void set_labels(std::vector<std::int64_t> rows, std::vector<std::int64_t> cols);
  void set_covariate_names(std::vector<std::string> names);

  // Copy with Y replaced (same shape, same covariates and labels).
  PanelData with_outcomes(std::vector<double> y) const;
  // Copy whose design is the pure intercept (d = 1, x == 1).
  PanelData with_intercept_design() const;
  PanelData without_covariates() const;
  // Y -> -Y; used to move the upper tail onto the lower one.
  PanelData reflected() const;

 private:
  std::size_t n_;
  std::size_t t_;
  std::size_t d_;
  std::vector<double> y_;
  std::vector<double> x_;
  std::vector<std::int64_t> row_labels_;
  std::vector<std::int64_t> col_labels_;
  std::vector<std::string> covariate_names_;
};

struct PanelDiagnostics {
  std::size_t n = 0;
  std::size_t t = 0;
  std::size_t d = 0;  // design dimension; 1 for intercept-only
  double gram_min_eigenvalue = 0.0;
  double gram_trace = 0.0;
  std::optional<double> tau_nt;
  std::vector<std::string> warnings;
};

// tau*N*T below this leaves too few tail observations for the
// intermediate-order approximation.
inline constexpr double kMinTailCount = 30.0;

// (1/NT) sum X_it X_it'. The 1x1 matrix [1] when covariates are absent.
Eigen::MatrixXd gram_matrix(const PanelData& panel);

PanelDiagnostics validate(const PanelData& panel, std::optional<double> tau = std::nullopt);

// CSV with header `i,t,y[,x1,...]`. Covariate columns get an intercept prepended.
PanelData load_csv(std::istream& in);
// Reads a file; gzip-compressed when the name ends with ".gz".
PanelData load_csv_file(const std::string& path);
void write_csv(const PanelData& panel, std::ostream& out);

}  // namespace eqc

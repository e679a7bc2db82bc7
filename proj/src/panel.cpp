#include "panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <zlib.h>

#include "error.hpp"
#include "text_format.hpp"

namespace eqc {

PanelData::PanelData(std::size_t n, std::size_t t, std::vector<double> y, std::size_t d,
                     std::vector<double> x)
    : n_(n), t_(t), d_(d), y_(std::move(y)), x_(std::move(x)) {
  if (n_ < 2 || t_ < 2)
    fail(ErrorCode::InvalidArgument, "panel needs N >= 2 and T >= 2");
  if (y_.size() != n_ * t_)
    fail(ErrorCode::InvalidArgument, "outcome array has wrong size");
  for (double v : y_)
    if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "outcome contains a non-finite value");
  if (d_ > 0) {
    if (x_.size() != n_ * t_ * d_)
      fail(ErrorCode::InvalidArgument, "covariate array has wrong size");
    for (std::size_t c = 0; c < n_ * t_; ++c) {
      if (x_[c * d_] != 1.0)
        fail(ErrorCode::InvalidArgument, "first covariate must be the constant 1");
      for (std::size_t k = 0; k < d_; ++k)
        if (!std::isfinite(x_[c * d_ + k]))
          fail(ErrorCode::NonFinite, "covariates contain a non-finite value");
    }
  } else if (!x_.empty()) {
    fail(ErrorCode::InvalidArgument, "covariates given with d = 0");
  }
  row_labels_.resize(n_);
  col_labels_.resize(t_);
  for (std::size_t i = 0; i < n_; ++i) row_labels_[i] = static_cast<std::int64_t>(i + 1);
  for (std::size_t j = 0; j < t_; ++j) col_labels_[j] = static_cast<std::int64_t>(j + 1);
  for (std::size_t k = 1; k < d_; ++k) covariate_names_.push_back("x" + std::to_string(k));
}

void PanelData::set_labels(std::vector<std::int64_t> rows, std::vector<std::int64_t> cols) {
  if (rows.size() != n_ || cols.size() != t_)
    fail(ErrorCode::InvalidArgument, "label vectors do not match the panel shape");
  row_labels_ = std::move(rows);
  col_labels_ = std::move(cols);
}

void PanelData::set_covariate_names(std::vector<std::string> names) {
  if (d_ == 0 || names.size() + 1 != d_)
    fail(ErrorCode::InvalidArgument, "covariate names do not match d - 1");
  covariate_names_ = std::move(names);
}

PanelData PanelData::with_outcomes(std::vector<double> y) const {
  PanelData out(n_, t_, std::move(y), d_, x_);
  out.row_labels_ = row_labels_;
  out.col_labels_ = col_labels_;
  out.covariate_names_ = covariate_names_;
  return out;
}

PanelData PanelData::with_intercept_design() const {
  PanelData out(n_, t_, y_, 1, std::vector<double>(n_ * t_, 1.0));
  out.row_labels_ = row_labels_;
  out.col_labels_ = col_labels_;
  return out;
}

PanelData PanelData::without_covariates() const {
  PanelData out(n_, t_, y_);
  out.row_labels_ = row_labels_;
  out.col_labels_ = col_labels_;
  return out;
}

PanelData PanelData::reflected() const {
  std::vector<double> neg(y_.size());
  std::transform(y_.begin(), y_.end(), neg.begin(), [](double v) { return -v; });
  return with_outcomes(std::move(neg));
}

Eigen::MatrixXd gram_matrix(const PanelData& panel) {
  if (!panel.has_covariates()) return Eigen::MatrixXd::Ones(1, 1);
  const auto d = static_cast<Eigen::Index>(panel.d());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t c = 0; c < panel.cells(); ++c) {
    Eigen::Map<const Eigen::VectorXd> x(panel.x_row(c).data(), d);
    g.selfadjointView<Eigen::Lower>().rankUpdate(x);
  }
  g = g.selfadjointView<Eigen::Lower>();
  return g / static_cast<double>(panel.cells());
}

PanelDiagnostics validate(const PanelData& panel, std::optional<double> tau) {
  PanelDiagnostics diag;
  diag.n = panel.n();
  diag.t = panel.t();
  diag.d = panel.has_covariates() ? panel.d() : 1;
  const Eigen::MatrixXd g = gram_matrix(panel);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g, Eigen::EigenvaluesOnly);
  diag.gram_min_eigenvalue = eig.eigenvalues().minCoeff();
  diag.gram_trace = g.trace();
  if (diag.gram_min_eigenvalue < 1e-10 * diag.gram_trace / static_cast<double>(diag.d))
    fail(ErrorCode::SingularDesign,
         "Gram matrix minimum eigenvalue " + format_double(diag.gram_min_eigenvalue) +
             " is below 1e-10 * trace / d");
  if (tau) {
    require_tau(*tau);
    diag.tau_nt = *tau * static_cast<double>(panel.cells());
    if (*diag.tau_nt < kMinTailCount)
      diag.warnings.push_back("tau*N*T = " + format_double(*diag.tau_nt) +
                              " < 30: too few tail observations for intermediate-order "
                              "asymptotics");
  }
  return diag;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool is_missing_token(std::string_view s) {
  if (s.empty()) return true;
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower == "na" || lower == "nan" || lower == "null";
}

std::optional<double> parse_real(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_label(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v <= 0) return std::nullopt;
  return v;
}

struct RawRow {
  std::int64_t i;
  std::int64_t t;
  double y;
  std::vector<double> x;
};

std::string cell_name(std::int64_t i, std::int64_t t) {
  return "(" + std::to_string(i) + "," + std::to_string(t) + ")";
}

}  // namespace

PanelData load_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      for (auto f : split_fields(line)) header.emplace_back(f);
      break;
    }
  }
  if (header.size() < 3 || header[0] != "i" || header[1] != "t" || header[2] != "y")
    fail(ErrorCode::NonNumericField, "header must start with i,t,y (line " +
                                         std::to_string(line_no) + ")");
  const std::size_t n_cov = header.size() - 3;

  std::vector<RawRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    const std::string where = "row " + std::to_string(line_no);
    if (fields.size() != header.size())
      fail(ErrorCode::NonNumericField, where + ": expected " + std::to_string(header.size()) +
                                           " fields, got " + std::to_string(fields.size()));
    const auto i = parse_label(fields[0]);
    const auto t = parse_label(fields[1]);
    if (!i || !t)
      fail(ErrorCode::NonNumericField, where + ": cluster indices must be positive integers");
    RawRow row{*i, *t, 0.0, {}};
    for (std::size_t k = 2; k < fields.size(); ++k) {
      if (is_missing_token(fields[k]))
        fail(ErrorCode::MissingCell, cell_name(*i, *t) + " has no value for column '" +
                                         header[k] + "'");
      const auto v = parse_real(fields[k]);
      if (!v)
        fail(ErrorCode::NonNumericField,
             where + ": column '" + header[k] + "' is not a finite number");
      if (k == 2)
        row.y = *v;
      else
        row.x.push_back(*v);
    }
    rows.push_back(std::move(row));
  }

  std::set<std::int64_t> row_set;
  std::set<std::int64_t> col_set;
  for (const auto& r : rows) {
    row_set.insert(r.i);
    col_set.insert(r.t);
  }
  const std::vector<std::int64_t> row_labels(row_set.begin(), row_set.end());
  const std::vector<std::int64_t> col_labels(col_set.begin(), col_set.end());
  const std::size_t n = row_labels.size();
  const std::size_t t = col_labels.size();
  if (n < 2 || t < 2)
    fail(ErrorCode::UnbalancedPanel, "need at least two rows and two columns of clusters");

  std::map<std::int64_t, std::size_t> row_index;
  std::map<std::int64_t, std::size_t> col_index;
  for (std::size_t k = 0; k < n; ++k) row_index[row_labels[k]] = k;
  for (std::size_t k = 0; k < t; ++k) col_index[col_labels[k]] = k;

  const std::size_t d = n_cov > 0 ? n_cov + 1 : 0;
  std::vector<double> y(n * t, 0.0);
  std::vector<double> x(n * t * d, 0.0);
  std::vector<char> seen(n * t, 0);
  for (const auto& r : rows) {
    const std::size_t cell = row_index[r.i] * t + col_index[r.t];
    if (seen[cell]) fail(ErrorCode::DuplicateCell, cell_name(r.i, r.t) + " appears twice");
    seen[cell] = 1;
    y[cell] = r.y;
    if (d > 0) {
      x[cell * d] = 1.0;
      std::copy(r.x.begin(), r.x.end(), x.begin() + static_cast<std::ptrdiff_t>(cell * d + 1));
    }
  }
  for (std::size_t cell = 0; cell < n * t; ++cell)
    if (!seen[cell])
      fail(ErrorCode::UnbalancedPanel,
           "cell " + cell_name(row_labels[cell / t], col_labels[cell % t]) +
               " is absent; the (i,t) index sets are not rectangular");

  PanelData panel(n, t, std::move(y), d, std::move(x));
  panel.set_labels(row_labels, col_labels);
  if (d > 0) panel.set_covariate_names({header.begin() + 3, header.end()});
  return panel;
}

namespace {

std::string read_gzip(const std::string& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (!file) fail(ErrorCode::Io, "cannot open " + path);
  std::string out;
  char buf[1 << 16];
  int got = 0;
  while ((got = gzread(file, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(got));
  const bool bad = got < 0;
  gzclose(file);
  if (bad) fail(ErrorCode::Io, "gzip stream error in " + path);
  return out;
}

}  // namespace

PanelData load_csv_file(const std::string& path) {
  if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
    std::istringstream in(read_gzip(path));
    return load_csv(in);
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  return load_csv(in);
}

void write_csv(const PanelData& panel, std::ostream& out) {
  out << "i,t,y";
  for (const auto& name : panel.covariate_names()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < panel.n(); ++i) {
    for (std::size_t t = 0; t < panel.t(); ++t) {
      out << panel.row_labels()[i] << ',' << panel.col_labels()[t] << ','
          << format_double(panel.y(i, t));
      if (panel.has_covariates()) {
        const auto x = panel.x_row(i, t);
        for (std::size_t k = 1; k < x.size(); ++k) out << ',' << format_double(x[k]);
      }
      out << '\n';
    }
  }
}

}  // namespace eqc

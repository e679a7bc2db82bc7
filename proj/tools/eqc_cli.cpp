#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <eqc/eqc.h>

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kInternal = 1, kInput = 2, kNotConverged = 3, kDegenerate = 4 };

int exit_code_for(eqc_status s) {
  switch (s) {
    case EQC_OK: return kOk;
    case EQC_ERR_NOT_CONVERGED: return kNotConverged;
    case EQC_ERR_DEGENERATE_SPACING:
    case EQC_ERR_NON_POSITIVE_RHO:
    case EQC_ERR_NON_POSITIVE_H:
    case EQC_ERR_SINGULAR_QH: return kDegenerate;
    case EQC_ERR_INTERNAL: return kInternal;
    default: return kInput;
  }
}

// Thrown from command bodies; carries the library status.
struct CommandError {
  eqc_status status;
  std::string message;
};

void check(eqc_status s) {
  if (s != EQC_OK) throw CommandError{s, eqc_last_error()};
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CommandError{EQC_ERR_IO, "IoError: cannot open " + path};
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char tmp[3];
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(tmp, sizeof tmp, "%02x", md[k]);
    hex += tmp;
  }
  return hex;
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !std::isfinite(v))
      throw CommandError{EQC_ERR_INVALID_ARGUMENT,
                         "InvalidArgument: " + flag + " expects comma-separated numbers, got '" +
                             text + "'"};
    out.push_back(v);
  }
  if (out.empty())
    throw CommandError{EQC_ERR_INVALID_ARGUMENT, "InvalidArgument: " + flag + " is empty"};
  return out;
}

struct Panel {
  eqc_panel* p = nullptr;
  Panel() = default;
  Panel(const Panel&) = delete;
  Panel& operator=(const Panel&) = delete;
  ~Panel() { eqc_panel_free(p); }
};

struct Report {
  ordered_json doc;
  ordered_json warnings = ordered_json::array();

  Report(const std::string& command, const std::vector<std::string>& argv) {
    doc["command"] = command;
    doc["argv"] = argv;
    doc["version"] = eqc_version();
  }
};

ordered_json describe_input(const std::string& path, const eqc_panel* p) {
  return {{"path", path},
          {"sha256", sha256_file(path)},
          {"n", eqc_panel_n(p)},
          {"t", eqc_panel_t(p)},
          {"d", eqc_panel_d(p)}};
}

void add_validation_warnings(Report& report, const eqc_panel* p, double tau) {
  eqc_diagnostics diag{};
  check(eqc_validate(p, tau, &diag));
  if (diag.few_tail_cells)
    report.warnings.push_back("tau*N*T = " + ordered_json(diag.tau_nt).dump() +
                              " is below 30; tail estimates rest on few observations");
}

const char* tail_name(eqc_tail_type t) {
  switch (t) {
    case EQC_TAIL_TYPE1: return "type1";
    case EQC_TAIL_TYPE2: return "type2";
    case EQC_TAIL_TYPE3: return "type3";
  }
  return "unknown";
}

eqc_tail_type tail_from_xi(double xi) {
  if (std::abs(xi) < 0.05) return EQC_TAIL_TYPE1;
  return xi > 0.0 ? EQC_TAIL_TYPE2 : EQC_TAIL_TYPE3;
}

void tail_type_warning(Report& report, bool automatic, eqc_tail_type chosen, double xi) {
  const std::string xs = ordered_json(xi).dump();
  if (automatic) {
    report.warnings.push_back(std::string("tail type auto: selected ") + tail_name(chosen) +
                              " from xi_hat = " + xs);
    return;
  }
  if ((chosen == EQC_TAIL_TYPE2 && xi < 0.0) || (chosen == EQC_TAIL_TYPE3 && xi > 0.0))
    report.warnings.push_back(std::string("declared ") + tail_name(chosen) +
                              " but xi_hat = " + xs + " has the opposite sign");
}

ordered_json fit_json(const eqc_fit_info& info) {
  return {{"objective", info.objective},
          {"iterations", info.iterations},
          {"converged", info.converged != 0},
          {"duality_gap", info.duality_gap}};
}

ordered_json tail_json(const eqc_tail_inference& r) {
  return {{"tau", r.tau},
          {"upper", r.upper != 0},
          {"beta_hat", r.beta_hat},
          {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},
          {"var_beta", r.var_beta},
          {"xi_hat", r.xi_hat},
          {"rho_hat", r.rho_hat},
          {"a_hat", r.a_hat},
          {"sigma2_hat", r.sigma2_hat},
          {"m", r.m},
          {"l", r.l},
          {"alpha", r.alpha},
          {"quantiles", std::vector<double>(r.quantiles, r.quantiles + 4)}};
}

ordered_json ci_json(const eqc_functional_ci& ci) {
  return {{"point", ci.point},
          {"ci_low", ci.ci_low},
          {"ci_high", ci.ci_high},
          {"std_error", ci.std_error}};
}

ordered_json matrix_json(const std::vector<double>& flat, std::size_t d) {
  ordered_json rows = ordered_json::array();
  for (std::size_t r = 0; r < d; ++r)
    rows.push_back(std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(r * d),
                                       flat.begin() + static_cast<std::ptrdiff_t>((r + 1) * d)));
  return rows;
}

// Flattened key/value view of a JSON document for the table format.
void render_table(const ordered_json& j, const std::string& prefix, std::ostream& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) render_table(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (j.is_array() && !j.empty() && (j.front().is_object() || j.front().is_array())) {
    for (std::size_t k = 0; k < j.size(); ++k)
      render_table(j[k], prefix + "[" + std::to_string(k) + "]", out);
  } else {
    out << prefix << ": " << (j.is_string() ? j.get<std::string>() : j.dump()) << "\n";
  }
}

void emit(const Report& report, const std::string& format) {
  ordered_json doc = report.doc;
  doc["warnings"] = report.warnings;
  for (const auto& w : report.warnings) std::cerr << "warning: " << w.get<std::string>() << "\n";
  if (format == "table")
    render_table(doc, "", std::cout);
  else
    std::cout << doc.dump(2) << "\n";
}

// ---- estimate ---------------------------------------------------------------

struct EstimateArgs {
  std::string input;
  double tau = 0.0;
  bool upper = false;
  bool covariates = false;
};

void cmd_estimate(const EstimateArgs& a, Report& report) {
  Panel panel;
  check(eqc_panel_load_csv(a.input.c_str(), a.covariates ? 1 : 0, &panel.p));
  report.doc["input"] = describe_input(a.input, panel.p);
  report.doc["config"] = {{"tau", a.tau}, {"upper", a.upper}, {"covariates", a.covariates}};
  add_validation_warnings(report, panel.p, a.upper ? 1.0 - a.tau : a.tau);

  const std::size_t d = eqc_panel_d(panel.p);
  eqc_fit_info info{};
  ordered_json results;
  if (d == 0) {
    double beta = 0.0;
    check(eqc_pooled_quantile(panel.p, a.tau, a.upper ? 1 : 0, &beta, &info));
    results["beta"] = beta;
  } else {
    std::vector<double> beta(d);
    const eqc_status s = eqc_fit_linear(panel.p, a.tau, a.upper ? 1 : 0, nullptr, beta.data(),
                                        beta.size(), &info);
    results["beta"] = beta;
    results["solver"] = fit_json(info);
    report.doc["results"] = results;
    check(s);
    return;
  }
  results["solver"] = fit_json(info);
  report.doc["results"] = results;
}

// ---- infer ------------------------------------------------------------------

struct InferArgs {
  std::string input;
  double tau = 0.0;
  double m = 2.0;
  double l = 2.0;
  double alpha = 0.05;
  std::string tail_type = "auto";
  std::string functional;
  bool upper = false;
};

struct RegHandle {
  eqc_reg_inference* r = nullptr;
  ~RegHandle() { eqc_reg_inference_free(r); }
};

void cmd_infer(const InferArgs& a, Report& report) {
  Panel panel;
  check(eqc_panel_load_csv(a.input.c_str(), 1, &panel.p));
  report.doc["input"] = describe_input(a.input, panel.p);
  report.doc["config"] = {{"tau", a.tau},       {"m", a.m},
                          {"l", a.l},           {"alpha", a.alpha},
                          {"tail_type", a.tail_type}, {"functional", a.functional},
                          {"upper", a.upper}};
  add_validation_warnings(report, panel.p, a.upper ? 1.0 - a.tau : a.tau);

  const bool automatic = a.tail_type == "auto";
  eqc_tuning tuning;
  eqc_tuning_default(&tuning);
  tuning.m = a.m;
  tuning.l = a.l;
  tuning.alpha = a.alpha;
  if (!automatic) tuning.tail_type = static_cast<eqc_tail_type>(std::stoi(a.tail_type));

  const std::size_t d = eqc_panel_d(panel.p);
  if (d == 0) {
    if (!a.functional.empty())
      throw CommandError{EQC_ERR_INVALID_ARGUMENT,
                         "InvalidArgument: --functional needs covariate columns in the input"};
    eqc_tail_inference r{};
    check(eqc_infer(panel.p, a.tau, &tuning, a.upper ? 1 : 0, &r));
    const eqc_tail_type chosen = automatic ? tail_from_xi(r.xi_hat) : tuning.tail_type;
    tail_type_warning(report, automatic, chosen, r.xi_hat);
    ordered_json results = tail_json(r);
    results["tail_type"] = tail_name(chosen);
    report.doc["results"] = results;
    return;
  }

  RegHandle reg;
  eqc_status s = eqc_reg_infer(panel.p, a.tau, &tuning, a.upper ? 1 : 0, &reg.r);
  if (s != EQC_OK && s != EQC_ERR_NOT_CONVERGED) check(s);
  eqc_reg_summary sum{};
  check(eqc_reg_summary_get(reg.r, &sum));
  if (automatic) {
    const eqc_tail_type chosen = tail_from_xi(sum.xi_hat);
    if (chosen != tuning.tail_type) {
      tuning.tail_type = chosen;
      RegHandle again;
      s = eqc_reg_infer(panel.p, a.tau, &tuning, a.upper ? 1 : 0, &again.r);
      if (s != EQC_OK && s != EQC_ERR_NOT_CONVERGED) check(s);
      std::swap(reg.r, again.r);
      check(eqc_reg_summary_get(reg.r, &sum));
    }
  }
  tail_type_warning(report, automatic, sum.tail_type, sum.xi_hat);

  std::vector<double> beta(d), mu(d), sigma(d * d), q(d * d);
  check(eqc_reg_beta(reg.r, beta.data(), d));
  check(eqc_reg_mu_x(reg.r, mu.data(), d));
  check(eqc_reg_sigma_hat(reg.r, sigma.data(), sigma.size()));
  check(eqc_reg_q_h_hat(reg.r, q.data(), q.size()));
  std::vector<double> h(eqc_reg_h_count(reg.r));
  check(eqc_reg_h_values(reg.r, h.data(), h.size()));
  double h_min = h.empty() ? 0.0 : h.front();
  double h_max = h_min;
  for (double v : h) {
    h_min = std::min(h_min, v);
    h_max = std::max(h_max, v);
  }

  ordered_json coefs = ordered_json::array();
  for (std::size_t k = 0; k < d; ++k) {
    std::vector<double> e(d, 0.0);
    e[k] = 1.0;
    eqc_functional_ci ci{};
    check(eqc_reg_functional(reg.r, e.data(), d, &ci));
    coefs.push_back(ci_json(ci));
  }

  ordered_json results = {{"tau", sum.tau},
                          {"upper", sum.upper != 0},
                          {"tail_type", tail_name(sum.tail_type)},
                          {"converged", sum.converged != 0},
                          {"beta_hat", beta},
                          {"coefficients", coefs},
                          {"xi_hat", sum.xi_hat},
                          {"rho_hat", sum.rho_hat},
                          {"a_hat", sum.a_hat},
                          {"ev_factor", sum.ev_factor},
                          {"m", sum.m},
                          {"l", sum.l},
                          {"alpha", sum.alpha},
                          {"mu_x", mu},
                          {"sigma_hat", matrix_json(sigma, d)},
                          {"q_h_hat", matrix_json(q, d)},
                          {"h_range", {h_min, h_max}}};
  if (!a.functional.empty()) {
    const std::vector<double> x = a.functional == "mean" ? mu : parse_list(a.functional, "--functional");
    if (x.size() != d)
      throw CommandError{EQC_ERR_INVALID_ARGUMENT,
                         "InvalidArgument: --functional needs " + std::to_string(d) +
                             " values (intercept first)"};
    eqc_functional_ci ci{};
    check(eqc_reg_functional(reg.r, x.data(), d, &ci));
    ordered_json f = ci_json(ci);
    f["x"] = x;
    results["functional"] = f;
  }
  report.doc["results"] = results;
  check(s);
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string design = "additive";
  std::string grid;
  std::size_t n = 200;
  std::size_t t = 200;
  std::string taus = "0.05,0.01";
  std::size_t reps = 1000;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;
  std::string out;
  double sigma_eps = 2.0;
  double m = 2.0;
  double l = 2.0;
  double alpha = 0.05;
};

std::string tau_tag(double tau) {
  std::string s = ordered_json(tau).dump();
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

void cmd_simulate(const SimulateArgs& a, Report& report) {
  const auto started = std::chrono::steady_clock::now();
  std::uint64_t seed = 42;
  std::string seed_source = "default";
  if (a.seed) {
    seed = *a.seed;
    seed_source = "flag";
  } else if (const char* env = std::getenv("EQC_SEED")) {
    try {
      std::size_t used = 0;
      seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw CommandError{EQC_ERR_INVALID_ARGUMENT,
                         std::string("InvalidArgument: EQC_SEED is not an integer: ") + env};
    }
    seed_source = "EQC_SEED";
  }

  eqc_study_config cfg{};
  eqc_sim_design_default(&cfg.base);
  if (a.design == "additive") {
    cfg.base.family = EQC_DESIGN_ADDITIVE;
  } else if (a.design == "interactive") {
    cfg.base.family = EQC_DESIGN_INTERACTIVE;
  } else if (a.design == "pareto") {
    cfg.base.family = EQC_DESIGN_PARETO;
  } else {
    throw CommandError{EQC_ERR_INVALID_ARGUMENT, "InvalidArgument: unknown design " + a.design};
  }
  const bool pareto = cfg.base.family == EQC_DESIGN_PARETO;
  const std::string grid_text =
      !a.grid.empty() ? a.grid : (pareto ? "0.25,0.5" : "1.0,1.5,2.0,2.5,3.0");
  const auto grid = parse_list(grid_text, "--grid");
  const auto taus = parse_list(a.taus, "--tau");
  cfg.base.n = a.n;
  cfg.base.t = a.t;
  cfg.base.sigma_eps = a.sigma_eps;
  cfg.row_values = grid.data();
  cfg.n_rows = grid.size();
  cfg.col_values = pareto ? nullptr : grid.data();
  cfg.n_cols = pareto ? 0 : grid.size();
  cfg.taus = taus.data();
  cfg.n_taus = taus.size();
  eqc_tuning_default(&cfg.tuning);
  cfg.tuning.m = a.m;
  cfg.tuning.l = a.l;
  cfg.tuning.alpha = a.alpha;
  cfg.reps = a.reps;
  cfg.seed = seed;
  cfg.workers = a.workers;

  report.doc["config"] = {{"design", a.design}, {"grid", grid},       {"n", a.n},
                          {"t", a.t},           {"taus", taus},       {"reps", a.reps},
                          {"seed", seed},       {"seed_source", seed_source},
                          {"sigma_eps", a.sigma_eps}, {"m", a.m},     {"l", a.l},
                          {"alpha", a.alpha},   {"out", a.out}};

  eqc_coverage* table = nullptr;
  check(eqc_run_coverage(&cfg, &table));
  struct Free {
    eqc_coverage* t;
    ~Free() { eqc_coverage_free(t); }
  } guard{table};

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw CommandError{EQC_ERR_IO, "IoError: cannot create " + a.out + ": " + ec.message()};
  ordered_json files = ordered_json::array();
  ordered_json by_tau = ordered_json::array();
  const std::size_t rows = eqc_coverage_rows(table);
  const std::size_t cols = eqc_coverage_cols(table);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    const fs::path path = fs::path(a.out) / ("coverage_tau" + tau_tag(taus[k]) + ".csv");
    check(eqc_coverage_write_csv(table, k, path.c_str()));
    files.push_back(path.string());
    ordered_json matrix = ordered_json::array();
    std::size_t failures = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      ordered_json row = ordered_json::array();
      for (std::size_t c = 0; c < cols; ++c) {
        eqc_cell_result cell{};
        check(eqc_coverage_cell(table, k, r, c, &cell));
        row.push_back(cell.coverage);
        failures += cell.failures;
      }
      matrix.push_back(row);
    }
    by_tau.push_back({{"tau", taus[k]}, {"coverage", matrix}, {"failures", failures}});
  }
  const fs::path cells = fs::path(a.out) / "cells.csv";
  const fs::path json = fs::path(a.out) / "coverage.json";
  check(eqc_coverage_write_cells_csv(table, cells.c_str()));
  check(eqc_coverage_write_json(table, json.c_str()));
  files.push_back(cells.string());
  files.push_back(json.string());

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  report.doc["results"] = {{"rows", pareto ? "xi_true" : "sigma_alpha"},
                           {"cols", pareto ? "" : "sigma_gamma"},
                           {"by_tau", by_tau},
                           {"files", files},
                           {"runtime_seconds", seconds}};
  std::cerr << "total runtime: " << seconds << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extremal quantile inference for two-way clustered panels"};
  app.set_version_flag("--version", std::string(eqc_version()));
  app.require_subcommand(1);
  app.fallthrough();
  std::string format = "json";
  app.add_option("--format", format, "Output format")
      ->check(CLI::IsMember({"json", "table"}))
      ->capture_default_str();

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Quantile point estimate (pooled or regression)");
  estimate->add_option("--input", est.input, "Panel CSV (i,t,y[,x1,...]), optionally .gz")->required();
  estimate->add_option("--tau", est.tau, "Quantile level in (0,1)")->required();
  estimate->add_flag("--upper", est.upper, "Upper tail via reflection");
  estimate->add_flag("--covariates", est.covariates, "Use covariate columns (linear quantile regression)");

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "Point estimate with confidence interval");
  infer->add_option("--input", inf.input, "Panel CSV")->required();
  infer->add_option("--tau", inf.tau, "Quantile level in (0,1)")->required();
  infer->add_option("--m", inf.m, "Spacing multiple")->capture_default_str();
  infer->add_option("--l", inf.l, "Tail-index spacing")->capture_default_str();
  infer->add_option("--alpha", inf.alpha, "CI level is 1 - alpha")->capture_default_str();
  infer->add_option("--tail-type", inf.tail_type, "auto, 1, 2 or 3")
      ->check(CLI::IsMember({"auto", "1", "2", "3"}))
      ->capture_default_str();
  infer->add_option("--functional", inf.functional, "x1,...,xd or 'mean' (regression inputs)");
  infer->add_flag("--upper", inf.upper, "Upper tail via reflection");

  SimulateArgs sim;
  std::uint64_t seed_flag = 0;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo coverage study");
  simulate->add_option("--design", sim.design, "additive, interactive or pareto")
      ->check(CLI::IsMember({"additive", "interactive", "pareto"}))
      ->capture_default_str();
  simulate->add_option("--grid", sim.grid,
                       "sigma_alpha = sigma_gamma values, or xi values for pareto");
  simulate->add_option("--n", sim.n)->capture_default_str();
  simulate->add_option("--t", sim.t)->capture_default_str();
  simulate->add_option("--tau", sim.taus, "Comma-separated tau values")->capture_default_str();
  simulate->add_option("--reps", sim.reps)->capture_default_str();
  auto* seed_opt = simulate->add_option("--seed", seed_flag, "Master seed (default 42, or EQC_SEED)");
  simulate->add_option("--workers", sim.workers, "Threads, 0 = all cores")->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->required();
  simulate->add_option("--sigma-eps", sim.sigma_eps)->capture_default_str();
  simulate->add_option("--m", sim.m)->capture_default_str();
  simulate->add_option("--l", sim.l)->capture_default_str();
  simulate->add_option("--alpha", sim.alpha)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }
  if (seed_opt->count() > 0) sim.seed = seed_flag;

  std::vector<std::string> args(argv + 1, argv + argc);
  const std::string name = app.get_subcommands().front()->get_name();
  Report report(name, args);
  int rc = kOk;
  try {
    if (name == "estimate") cmd_estimate(est, report);
    else if (name == "infer") cmd_infer(inf, report);
    else cmd_simulate(sim, report);
  } catch (const CommandError& e) {
    rc = exit_code_for(e.status);
    report.doc["error"] = {{"code", eqc_status_name(e.status)}, {"message", e.message}};
    std::cerr << "error: " << e.message << "\n";
  } catch (const std::exception& e) {
    rc = kInternal;
    report.doc["error"] = {{"code", "Internal"}, {"message", e.what()}};
    std::cerr << "error: " << e.what() << "\n";
  }
  emit(report, format);
  return rc;
}

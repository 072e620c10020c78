// Command-line front end: Gaussian measures, comparison-function tables,
// divergence-form PDE functionals, slab experiments, and corpus verification,
// all emitting machine-readable reports.
//
// Exit codes (also listed in --help):
//   0  success
//   1  internal error (numerical failure, resource limit)
//   2  usage error (bad flags or parameter values, missing seed)
//   3  input file unreadable
//   4  input document malformed (JSON or schema violation)
//   5  dimension mismatch between flags and inputs
//   6  a theorem-backed check reported a violation

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gbm/checks.hpp"
#include "gbm/pde.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitUnreadable = 3;
constexpr int kExitBadDocument = 4;
constexpr int kExitDimensionMismatch = 5;
constexpr int kExitViolation = 6;

struct CliError {
  int code;
  std::string message;
};

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{kExitUnreadable, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

gbm::ordered_json parse_json_file(const std::string& path) {
  std::string text = read_text_file(path);
  try {
    return gbm::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CliError{kExitBadDocument, path + ": " + e.what()};
  }
}

gbm::BodyPtr load_body(const std::string& path, int expect_n) {
  gbm::ordered_json doc = parse_json_file(path);
  gbm::BodyPtr b;
  try {
    b = gbm::body_from_json(doc);
  } catch (const std::exception& e) {
    throw CliError{kExitBadDocument, path + ": " + e.what()};
  }
  if (expect_n > 0 && b->dim() != expect_n)
    throw CliError{kExitDimensionMismatch,
                   path + ": body dimension " + std::to_string(b->dim()) +
                       " does not match --n " + std::to_string(expect_n)};
  return b;
}

void write_output(const std::string& out, const std::string& payload) {
  if (out.empty()) {
    std::cout << payload;
    return;
  }
  std::ofstream os(out, std::ios::binary);
  if (!os) throw CliError{kExitUnreadable, "cannot write " + out};
  os << payload;
}

int64_t to_samples(double v) {
  if (!(v >= 1.0 && v <= 1e12))
    throw CliError{kExitUsage, "--samples must lie in [1, 1e12]"};
  return int64_t(v + 0.5);
}

std::string csv_escape(const std::string& s) { return s; }

// ------------------------------------------------------------------ measure

int cmd_measure(const std::string& body_path, int n, bool exact, double samples,
                std::optional<uint64_t> seed, const std::string& out,
                const std::string& format) {
  gbm::BodyPtr b = load_body(body_path, n);
  gbm::MeasureEstimate est;
  gbm::SamplingBudget bud;
  if (exact) {
    auto s = gbm::simplify(b);
    auto cf = gbm::detail::measure_closed_form(*s);
    if (!cf)
      throw CliError{kExitUsage,
                     "--exact: this body has no closed form; drop --exact and "
                     "pass --samples with --seed"};
    est = *cf;
  } else {
    if (samples <= 0.0)
      throw CliError{kExitUsage, "measure needs --exact or --samples"};
    if (!seed)
      throw CliError{kExitUsage,
                     "--seed is mandatory for sampled runs; there is no "
                     "wall-clock default"};
    bud.samples = to_samples(samples);
    bud.seed = *seed;
    est = gbm::measure(b, bud);
  }

  gbm::ordered_json j;
  j["schema"] = "gbm-measure-1";
  j["body"] = body_path;
  j["dim"] = b->dim();
  j["kind"] = gbm::kind_name(b->kind());
  j["value"] = est.value;
  j["std_error"] = est.std_error;
  j["exact"] = est.std_error == 0.0;
  j["samples"] = bud.samples;
  j["seed"] = bud.seed;

  if (format == "csv") {
    std::ostringstream os;
    os << "value,std_error,exact,samples,seed\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.17g,%.6g,%d,%lld,%llu\n", est.value,
                  est.std_error, int(est.std_error == 0.0),
                  (long long)bud.samples, (unsigned long long)bud.seed);
    os << buf;
    write_output(out, os.str());
  } else {
    write_output(out, j.dump(2) + "\n");
  }
  return kExitOk;
}

// -------------------------------------------------------------------- sigma

int cmd_sigma(int n, int nodes, double r_max, const std::string& out,
              const std::string& format) {
  if (n <= 0) throw CliError{kExitUsage, "sigma needs --n"};
  gbm::SigmaTable t = gbm::build_sigma(n, r_max, nodes);
  if (format == "csv") {
    std::ostringstream os;
    os << "r,psi,sigma,sigma_prime\n";
    char buf[200];
    for (size_t i = 0; i < t.r_grid.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", t.r_grid[i],
                    t.psi[i], t.sigma[i], t.sigma_prime[i]);
      os << buf;
    }
    write_output(out, os.str());
    return kExitOk;
  }
  gbm::ordered_json j;
  j["schema"] = "gbm-sigma-1";
  j["n"] = t.n;
  j["nodes"] = t.r_grid.size();
  j["r_max"] = t.r_grid.back();
  gbm::ordered_json rows = gbm::ordered_json::array();
  for (size_t i = 0; i < t.r_grid.size(); ++i) {
    gbm::ordered_json row;
    row["r"] = t.r_grid[i];
    row["psi"] = t.psi[i];
    row["sigma"] = t.sigma[i];
    row["sigma_prime"] = t.sigma_prime[i];
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  write_output(out, j.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------- pde

int cmd_pde(const std::string& body_path, int n, double h, int depth,
            const std::string& out, const std::string& format) {
  gbm::BodyPtr b = load_body(body_path, n);
  if (b->dim() != 2)
    throw CliError{kExitDimensionMismatch,
                   "pde: the grid solver is planar; pass a 2-D body"};
  if (!(h > 0.0)) throw CliError{kExitUsage, "pde needs --h > 0"};
  auto one = [](double, double) { return 1.0; };
  auto zero = [](double, double) { return 0.0; };
  gbm::PdeSolution sol =
      gbm::solve_dirichlet(b, one, zero, h, "dirichlet-0, unit forcing");
  gbm::FunctionalReport rep = gbm::kl_functional(sol, depth);

  gbm::ordered_json j;
  j["schema"] = "gbm-pde-1";
  j["body"] = body_path;
  j["h"] = rep.h;
  j["trust_depth"] = rep.trust_depth;
  j["cg_iterations"] = sol.cg_iterations;
  j["residual_linf"] = sol.residual_linf;
  j["evenness"] = sol.evenness;
  j["hessian_term"] = rep.hessian_term;
  j["gradient_term"] = rep.gradient_term;
  j["total"] = rep.total;
  j["interior_total"] = rep.interior_total;
  j["boundary_hessian_term"] = rep.boundary_hessian_term;
  j["flagged_weight_share"] = rep.flagged_weight_share;
  j["flagged_count"] = rep.flagged_count;
  j["one_sided_count"] = rep.one_sided_count;
  j["estimated_error"] = rep.estimated_error;
  j["mass"] = rep.mass;
  j["bl_traceless_lhs"] = rep.bl_traceless_lhs;
  j["bl_variance_rhs"] = rep.bl_variance_rhs;
  gbm::ordered_json d;
  d["traceless_term"] = rep.decomposition.traceless_term;
  d["laplacian_square_term"] = rep.decomposition.laplacian_square_term;
  d["centered_hessian_term"] = rep.decomposition.centered_hessian_term;
  d["drift_term"] = rep.decomposition.drift_term;
  d["quadratic_drift_term"] = rep.decomposition.quadratic_drift_term;
  d["constant"] = rep.decomposition.constant;
  j["decomposition"] = std::move(d);

  if (format == "csv") {
    std::ostringstream os;
    os << "h,trust_depth,total,hessian_term,gradient_term,interior_total,"
          "boundary_hessian_term,estimated_error\n";
    char buf[240];
    std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.6g\n",
                  rep.h, rep.trust_depth, rep.total, rep.hessian_term,
                  rep.gradient_term, rep.interior_total,
                  rep.boundary_hessian_term, rep.estimated_error);
    os << buf;
    write_output(out, os.str());
  } else {
    write_output(out, j.dump(2) + "\n");
  }
  return kExitOk;
}

// --------------------------------------------------------------------- slab

int cmd_slab(int n, double eps, double h, const std::string& out,
             const std::string& format) {
  if (!(eps > 0.0)) throw CliError{kExitUsage, "slab needs --eps in (0, 0.5]"};
  if (!(h > 0.0)) throw CliError{kExitUsage, "slab needs --h > 0"};
  gbm::SlabReport rep;
  try {
    rep = gbm::slab_experiment(n, eps, h);
  } catch (const std::invalid_argument& e) {
    std::string what = e.what();
    if (what.find("n = 2") != std::string::npos)
      throw CliError{kExitDimensionMismatch, what};
    throw CliError{kExitUsage, what};
  }

  gbm::ordered_json j;
  j["schema"] = "gbm-slab-1";
  j["n"] = rep.n;
  j["epsilon"] = rep.epsilon;
  j["h"] = rep.h;
  j["radial_cap"] = rep.radial_cap;
  j["mass"] = rep.mass;
  j["h_term"] = rep.h_term;
  j["lower_bound"] = rep.lower_bound;
  j["v_gradient_term"] = rep.v_gradient_term;
  j["v_quadratic_term"] = rep.v_quadratic_term;
  j["g_total"] = rep.g_total;
  j["g_direct"] = rep.g_direct;
  j["poincare_bound"] = rep.poincare_bound;
  j["poincare_ok"] = rep.poincare_ok;
  j["vterm_bound"] = rep.vterm_bound;
  j["vterms_ok"] = rep.vterms_ok;
  j["h_excess"] = rep.h_excess;
  j["upper_bound_ok"] = rep.upper_bound_ok;

  if (format == "csv") {
    std::ostringstream os;
    os << "n,epsilon,h,g_total,lower_bound,v_gradient_term,poincare_bound,"
          "poincare_ok,upper_bound_ok\n";
    char buf[240];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n",
                  rep.n, rep.epsilon, rep.h, rep.g_total, rep.lower_bound,
                  rep.v_gradient_term, rep.poincare_bound, int(rep.poincare_ok),
                  int(rep.upper_bound_ok));
    os << buf;
    write_output(out, os.str());
  } else {
    write_output(out, j.dump(2) + "\n");
  }
  return kExitOk;
}

// -------------------------------------------------------------------- check

int cmd_check(const std::string& corpus_path, const std::string& out,
              int workers, const std::vector<std::string>& ops) {
  gbm::ordered_json doc = parse_json_file(corpus_path);
  std::vector<gbm::CheckCase> cases;
  try {
    cases = gbm::corpus_from_json(doc);
  } catch (const std::exception& e) {
    throw CliError{kExitBadDocument, corpus_path + ": " + e.what()};
  }
  gbm::RunOutcome outcome;
  try {
    outcome = gbm::run_checks(cases, ops, workers);
  } catch (const std::invalid_argument& e) {
    throw CliError{kExitUsage, e.what()};
  }

  std::ostringstream jsonl, csv;
  gbm::write_results_jsonl(jsonl, outcome.rows);
  gbm::write_results_csv(csv, outcome.rows);
  if (out.empty()) {
    std::cout << jsonl.str();
  } else {
    write_output(out + ".jsonl", jsonl.str());
    write_output(out + ".csv", csv.str());
  }
  std::fprintf(stderr, "%zu rows, %d theorem-backed violation(s)\n",
               outcome.rows.size(), outcome.violated_theorem_rows);
  return outcome.violated_theorem_rows > 0 ? kExitViolation : kExitOk;
}

// ------------------------------------------------------------------- corpus

int cmd_corpus(double samples, const std::string& out) {
  auto cases = gbm::default_corpus(to_samples(samples));
  write_output(out, gbm::corpus_to_json(cases).dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Gaussian convex-body laboratory: measures, comparison-function "
      "tables, divergence-form PDE functionals, slab experiments, and "
      "inequality check batteries."};
  app.require_subcommand(1);
  app.footer(
      "Exit codes:\n"
      "  0  success\n"
      "  1  internal error\n"
      "  2  usage error (bad flags, missing --seed for sampled runs)\n"
      "  3  input file unreadable\n"
      "  4  input document malformed (JSON or schema violation)\n"
      "  5  dimension mismatch\n"
      "  6  a theorem-backed check reported a violation\n"
      "\n"
      "Every flag can also be set via an environment variable prefixed\n"
      "GBM_ (e.g. GBM_SEED, GBM_WORKERS). Reports are byte-identical for\n"
      "identical configuration and seed, regardless of worker count.");

  std::string body_path, corpus_path, out, format = "json";
  int n = 0, nodes = 4096, workers = 0, depth = -1;
  double samples = 0.0, h = 0.0, r_max = 6.0, eps = 0.0;
  std::optional<uint64_t> seed;

  auto add_common = [&](CLI::App* c, bool with_format = true) {
    c->add_option("--out", out, "Output path (default: stdout)")
        ->envname("GBM_OUT");
    if (with_format)
      c->add_option("--format", format, "Report format: json or csv")
          ->check(CLI::IsMember({"json", "csv"}))
          ->envname("GBM_FORMAT");
  };

  CLI::App* m = app.add_subcommand(
      "measure", "Gaussian measure of a body (closed form or sampled)");
  m->add_option("--body", body_path, "Body document (JSON)")
      ->required()
      ->envname("GBM_BODY");
  m->add_option("--n", n, "Expected dimension (checked against the body)")
      ->envname("GBM_N");
  bool exact = false;
  m->add_flag("--exact", exact, "Require the closed-form path");
  m->add_option("--samples", samples, "Sample count (accepts 1e6 notation)")
      ->envname("GBM_SAMPLES");
  m->add_option("--seed", seed, "Sampling seed (mandatory for sampled runs)")
      ->envname("GBM_SEED");
  m->add_option("--workers", workers,
                "Worker threads (never changes report bytes)")
      ->envname("GBM_WORKERS");
  add_common(m);

  CLI::App* s = app.add_subcommand(
      "sigma", "Tabulate the dimensional comparison function");
  s->add_option("--n", n, "Dimension")->required()->envname("GBM_N");
  s->add_option("--nodes", nodes, "Table nodes (>= 1000)")->envname("GBM_NODES");
  s->add_option("--rmax", r_max, "Largest tabulated radius");
  add_common(s);

  CLI::App* p = app.add_subcommand(
      "pde", "Solve the planar Dirichlet problem with unit forcing and "
             "report the energy functional");
  p->set_help_flag("--help", "Print help");  // frees -h for the spacing flag
  p->add_option("--body", body_path, "Planar body document (JSON)")
      ->required()
      ->envname("GBM_BODY");
  p->add_option("--n", n, "Expected dimension (must be 2)")->envname("GBM_N");
  p->add_option("--h", h, "Grid spacing")->required()->envname("GBM_H");
  p->add_option("--depth", depth,
                "Trusted-ring depth for the Hessian quadrature (-1 = auto)");
  add_common(p);

  CLI::App* sl = app.add_subcommand(
      "slab", "Planar slab experiment: exact energy split and bounds");
  sl->add_option("--n", n, "Dimension (the solver is planar: 2)")
      ->envname("GBM_N");
  sl->add_option("--eps", eps, "Slab half-width, in (0, 0.5]")->required();
  sl->add_option("--h", h, "Grid spacing")->required()->envname("GBM_H");
  add_common(sl);

  CLI::App* c = app.add_subcommand(
      "check", "Run a corpus of combination checks and write reports");
  c->add_option("--corpus", corpus_path, "Corpus document (JSON)")
      ->required()
      ->envname("GBM_CORPUS");
  c->add_option("--out", out,
                "Output prefix: writes <out>.jsonl and <out>.csv "
                "(default: JSON lines on stdout)")
      ->envname("GBM_OUT");
  c->add_option("--workers", workers,
                "Worker threads (never changes report bytes)")
      ->envname("GBM_WORKERS");
  std::vector<std::string> ops = {"dim-bm", "ehrhard", "log-concavity",
                                  "sigma-refinement"};
  c->add_option("--ops", ops, "Operations to run")->delimiter(',');

  CLI::App* g = app.add_subcommand(
      "corpus", "Emit the default check corpus as JSON");
  g->add_option("--samples", samples, "Per-case sample budget")
      ->envname("GBM_SAMPLES");
  g->add_option("--out", out, "Output path (default: stdout)")
      ->envname("GBM_OUT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    // CLI11 returns 0 for --help; keep that, fold parse failures to 2.
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (m->parsed())
      return cmd_measure(body_path, n, exact, samples, seed, out, format);
    if (s->parsed()) return cmd_sigma(n, nodes, r_max, out, format);
    if (p->parsed()) return cmd_pde(body_path, n, h, depth, out, format);
    if (sl->parsed()) return cmd_slab(n == 0 ? 2 : n, eps, h, out, format);
    if (c->parsed()) return cmd_check(corpus_path, out, workers, ops);
    if (g->parsed())
      return cmd_corpus(samples > 0.0 ? samples : 1e6, out);
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return e.code;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitUsage;
}

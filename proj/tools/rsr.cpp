// Command line front end: Poisson-binomial tooling, isometry constants,
// one-shot reconstruction, LTI decoding, and the Monte Carlo simulator.
//
// Exit codes: 0 success, 2 bad configuration or input, 3 numeric failure,
// 4 infeasible problem or enumeration budget exceeded.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rsr/rsr.hpp"

namespace {

using nlohmann::ordered_json;

void write_output(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw rsr::ConfigError("cannot open '" + out_path + "' for writing");
  out << text;
}

rsr::Vector parse_vector_arg(const std::string& text, const std::string& what) {
  const std::vector<double> vals = rsr::parse_double_list(text, what);
  rsr::Vector v(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) v(i) = vals[i];
  return v;
}

// 1-based index list from the command line into a 0-based support set.
rsr::SupportSet parse_support_arg(const std::string& text, int universe,
                                  const std::string& what) {
  std::vector<int> idx;
  for (double v : rsr::parse_double_list(text, what)) {
    const int i = static_cast<int>(v);
    if (v != i || i < 1)
      throw rsr::ConfigError(what + ": indices must be positive integers");
    idx.push_back(i - 1);
  }
  return {std::move(idx), universe};
}

std::string join_sig(const rsr::Vector& v, char sep = ',') {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += rsr::format_sig(v(i));
  }
  return out;
}

ordered_json vector_json(const rsr::Vector& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

ordered_json matrix_json(const rsr::Matrix& M) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

ordered_json support_json_1based(const rsr::SupportSet& s) {
  ordered_json a = ordered_json::array();
  for (int i : s.indices()) a.push_back(i + 1);
  return a;
}

struct PmfArgs {
  std::string p;
  bool convolution = false;
  std::string out, format = "csv";
};

struct LetaArgs {
  std::string p;
  double eta = 0.9;
  bool paper_indexing = false;
  std::string out;
};

struct RipArgs {
  std::string matrix;
  int S = 1;
  std::string out;
};

struct ReconArgs {
  std::string y_file, c_file;
  double eps = 0.0;
  std::string safe;
  std::string qhat_file;
  std::string oracle_p, oracle_s;
  double eta = 0.9;
  std::string support_mode = "ranked-conservative";
  bool paper_indexing = false;
  std::string ball_center_file;
  double ball_radius = 0.0;
  std::uint64_t seed = 0;
  std::string out, format = "json";
};

struct DecodeArgs {
  std::string a_file, c_file, y_file;
  int q = 0;
  std::string mode = "varying";
  bool global_rows = false;
  bool certify = false;
  std::string out, format = "json";
};

struct SimArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out, format = "csv";
  int workers = 1;
  bool timing = false;
};

struct FitArgs {
  std::string data_file;
  int n = 1;
  int n_sigma = -1;
  double safety = -1.0;
  std::string out, format = "text";
};

int run_pmf(const PmfArgs& a) {
  const rsr::Vector p = parse_vector_arg(a.p, "--p");
  const rsr::Vector r = a.convolution ? rsr::pmf_convolution_form(p)
                                      : rsr::poisson_binomial_pmf(p);
  if (a.format == "json") {
    write_output(a.out, ordered_json{{"pmf", vector_json(r)}}.dump());
  } else {
    write_output(a.out, join_sig(r));
  }
  return 0;
}

int run_leta(const LetaArgs& a) {
  const rsr::Vector p = parse_vector_arg(a.p, "--p");
  const rsr::Vector r = rsr::poisson_binomial_pmf(p);
  const int l = rsr::compute_l_eta(r, a.eta,
                                   a.paper_indexing
                                       ? rsr::LEtaIndexing::paper
                                       : rsr::LEtaIndexing::exact_tail);
  write_output(a.out, std::to_string(l));
  return 0;
}

int run_rip(const RipArgs& a) {
  const rsr::Matrix M = rsr::read_matrix(a.matrix);
  write_output(a.out, rsr::format_sig(rsr::rip_constant(M, a.S)));
  return 0;
}

rsr::SupportMode parse_support_mode(const std::string& s) {
  if (s == "random") return rsr::SupportMode::random_matching;
  if (s == "ranked-literal") return rsr::SupportMode::ranked_literal;
  if (s == "ranked-conservative") return rsr::SupportMode::ranked_conservative;
  throw rsr::ConfigError("unknown support mode '" + s + "'");
}

int run_reconstruct(const ReconArgs& a) {
  const rsr::Vector y = rsr::read_vector(a.y_file);
  const rsr::MeasurementModel model(rsr::read_matrix(a.c_file), a.eps);
  if (y.size() != model.m())
    throw rsr::ConfigError("reconstruct: y length does not match C rows");

  std::optional<rsr::BallConstraint> ball;
  if (a.ball_radius > 0.0) {
    rsr::Vector center = a.ball_center_file.empty()
                             ? rsr::Vector(rsr::Vector::Zero(model.n()))
                             : rsr::read_vector(a.ball_center_file);
    ball.emplace(std::move(center), a.ball_radius);
  }

  rsr::ReconResult res;
  if (!a.safe.empty()) {
    const rsr::SupportSet safe = parse_support_arg(a.safe, model.m(), "--safe");
    res = ball ? rsr::constrained_ls(y, model, safe, *ball)
               : rsr::ls_reconstruct(y, model, safe);
  } else if (!a.qhat_file.empty()) {
    if (!ball)
      throw rsr::ConfigError(
          "reconstruct: the oracle route needs --ball-radius");
    const rsr::Vector qv = rsr::read_vector(a.qhat_file);
    std::vector<int> bits(qv.size());
    for (Eigen::Index i = 0; i < qv.size(); ++i)
      bits[i] = static_cast<int>(qv(i));
    const rsr::IndicatorVector q_hat(std::move(bits));
    const rsr::Vector p = a.oracle_p.empty()
                              ? rsr::Vector(rsr::Vector::Constant(model.m(), 0.95))
                              : [&] {
                                  rsr::Vector v = parse_vector_arg(a.oracle_p,
                                                                   "--oracle-p");
                                  if (v.size() == 1)
                                    return rsr::Vector(
                                        rsr::Vector::Constant(model.m(), v(0)));
                                  return v;
                                }();
    const rsr::Vector s = a.oracle_s.empty()
                              ? rsr::Vector(rsr::Vector::Constant(model.m(), 1.0))
                              : [&] {
                                  rsr::Vector v = parse_vector_arg(a.oracle_s,
                                                                   "--oracle-s");
                                  if (v.size() == 1)
                                    return rsr::Vector(
                                        rsr::Vector::Constant(model.m(), v(0)));
                                  return v;
                                }();
    const rsr::OracleModel oracle(p, s);
    rsr::OracleReconOptions opts;
    opts.support_mode = parse_support_mode(a.support_mode);
    opts.indexing = a.paper_indexing ? rsr::LEtaIndexing::paper
                                     : rsr::LEtaIndexing::exact_tail;
    rsr::Rng rng(a.seed);
    res = rsr::reconstruct_with_oracle(y, model, q_hat, oracle, a.eta, *ball,
                                       opts, rng);
  } else {
    throw rsr::ConfigError("reconstruct: pass --safe or --qhat");
  }

  if (a.format == "json") {
    ordered_json j{{"x_hat", vector_json(res.x_hat)},
                   {"residual_norm", res.residual_norm},
                   {"active_rows", support_json_1based(res.active_rows)},
                   {"on_boundary", res.on_boundary}};
    if (res.bound) j["bound"] = *res.bound;
    write_output(a.out, j.dump());
  } else {
    std::string text = "x_hat," + join_sig(res.x_hat) + "\n";
    text += "residual_norm," + rsr::format_sig(res.residual_norm) + "\n";
    if (res.bound) text += "bound," + rsr::format_sig(*res.bound) + "\n";
    text += "on_boundary," + std::string(res.on_boundary ? "1" : "0") + "\n";
    write_output(a.out, text);
  }
  return 0;
}

int run_decode(const DecodeArgs& a) {
  const rsr::LtiSystem sys(rsr::read_matrix(a.a_file),
                           rsr::read_matrix(a.c_file));
  const rsr::Matrix Y = rsr::read_matrix(a.y_file);
  if (Y.rows() != sys.m())
    throw rsr::ConfigError("decode-lti: Y must have one row per node");
  const int T = static_cast<int>(Y.cols());

  rsr::DecodeResult res;
  bool certificate = false;
  if (a.mode == "varying") {
    const rsr::ObservabilityStack st = rsr::observability_stack(sys, T);
    rsr::Vector y_stack(static_cast<Eigen::Index>(sys.m()) * T);
    for (int k = 0; k < T; ++k)
      y_stack.segment(static_cast<Eigen::Index>(k) * sys.m(), sys.m()) = Y.col(k);
    res = rsr::bruteforce_decoder_varying(y_stack, st, a.q, !a.global_rows);
    if (a.certify) certificate = rsr::certify_correctable_varying(sys, T, a.q);
  } else if (a.mode == "fixed") {
    res = rsr::bruteforce_decoder_fixed(Y, sys, T, a.q);
    if (a.certify) certificate = rsr::certify_correctable_fixed(sys, T, a.q);
  } else {
    throw rsr::ConfigError("decode-lti: mode must be 'varying' or 'fixed'");
  }

  if (a.format == "json") {
    ordered_json j{{"x0", vector_json(res.x0)},
                   {"corrupted", support_json_1based(res.corrupted)},
                   {"corrupted_universe",
                    a.mode == "varying" ? "rows" : "nodes"}};
    if (a.certify) j["certified"] = certificate;
    write_output(a.out, j.dump());
  } else {
    std::string text = "x0," + join_sig(res.x0) + "\n";
    text += "corrupted";
    for (int i : res.corrupted.indices()) text += "," + std::to_string(i + 1);
    text += "\n";
    if (a.certify)
      text += "certified," + std::string(certificate ? "1" : "0") + "\n";
    write_output(a.out, text);
  }
  return 0;
}

int run_simulate(const SimArgs& a) {
  const rsr::Config cfg = rsr::Config::from_file(a.config);
  rsr::Scenario sc = rsr::Scenario::from_config(cfg);
  if (a.seed) {
    sc.base_seed = *a.seed;
    sc.validate();
  }
  const rsr::ScenarioRun run = rsr::run_scenario(sc, a.workers, a.timing);
  if (a.format == "json") {
    write_output(a.out, rsr::to_json(run).dump(2));
  } else {
    write_output(a.out, rsr::to_csv(run));
  }
  std::cerr << "trials " << run.summary.trials << ", failed "
            << run.summary.failed << ", satisfaction rate "
            << rsr::format_sig(run.summary.satisfaction_rate, 6) << " (eta "
            << rsr::format_sig(run.summary.eta, 6) << "), mean error "
            << rsr::format_sig(run.summary.mean_error, 6) << ", max error "
            << rsr::format_sig(run.summary.max_error, 6) << "\n";
  return 0;
}

// Dataset layout: header row with column names, exogenous columns first.
// Columns whose name starts with "sigma" count as exogenous unless
// --n-sigma says otherwise.
int run_fit(const FitArgs& a) {
  std::ifstream in(a.data_file);
  if (!in) throw rsr::ConfigError("cannot open '" + a.data_file + "'");
  std::string header;
  if (!std::getline(in, header))
    throw rsr::ConfigError(a.data_file + ": empty file");

  std::vector<std::string> names;
  {
    std::string h = header;
    for (char& c : h)
      if (c == ',') c = ' ';
    std::istringstream hs(h);
    std::string tok;
    while (hs >> tok) names.push_back(tok);
  }
  int n_sigma = a.n_sigma;
  if (n_sigma < 0) {
    n_sigma = 0;
    while (n_sigma < static_cast<int>(names.size()) &&
           names[n_sigma].rfind("sigma", 0) == 0)
      ++n_sigma;
    if (n_sigma == 0)
      throw rsr::ConfigError(
          a.data_file +
          ": no 'sigma*' columns found; pass --n-sigma explicitly");
  }
  if (n_sigma >= static_cast<int>(names.size()))
    throw rsr::ConfigError(a.data_file + ": no measurement columns left");

  const rsr::Matrix all = rsr::parse_matrix_text(in, a.data_file);
  if (all.cols() != static_cast<Eigen::Index>(names.size()))
    throw rsr::ConfigError(a.data_file + ": header names " +
                           std::to_string(names.size()) + " columns but rows have " +
                           std::to_string(all.cols()));
  const rsr::Dataset data(all.leftCols(n_sigma),
                          all.rightCols(all.cols() - n_sigma));
  const rsr::RegressorModel model = rsr::fit_regressor(data);
  const rsr::ResidualPca pca = rsr::residual_pca(data, model, a.n, a.safety);

  if (a.format == "json") {
    ordered_json j{{"kind", "affine"},
                   {"n_sigma", data.n_sigma()},
                   {"m", data.m()},
                   {"n", pca.n},
                   {"noise_bound", pca.noise_bound},
                   {"safety_factor", pca.safety_factor},
                   {"theta", matrix_json(model.theta)},
                   {"phi", matrix_json(pca.Phi)},
                   {"singular_values", vector_json(pca.singular_values)}};
    write_output(a.out, j.dump(2));
  } else {
    std::ostringstream out;
    out << "kind affine\n";
    out << "n_sigma " << data.n_sigma() << "\n";
    out << "m " << data.m() << "\n";
    out << "n " << pca.n << "\n";
    out << "noise_bound " << rsr::format_sig(pca.noise_bound, 17) << "\n";
    out << "safety_factor " << rsr::format_sig(pca.safety_factor, 17) << "\n";
    out << "theta\n";
    rsr::write_matrix_text(out, model.theta);
    out << "phi\n";
    rsr::write_matrix_text(out, pca.Phi);
    out << "singular_values\n";
    rsr::write_matrix_text(out, pca.singular_values.transpose());
    write_output(a.out, out.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rsr: resilient signal reconstruction under sparse attacks"};
  app.require_subcommand(1);

  PmfArgs pmf;
  auto* cmd_pmf = app.add_subcommand(
      "pmf", "Poisson-binomial PMF of the correct-localization count");
  cmd_pmf->add_option("--p", pmf.p, "per-node rates, comma separated")
      ->required();
  cmd_pmf->add_flag("--convolution", pmf.convolution,
                    "use the convolution form (requires all p_i > 0)");
  cmd_pmf->add_option("--out", pmf.out, "output path (default stdout)");
  cmd_pmf->add_option("--format", pmf.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  LetaArgs leta;
  auto* cmd_leta = app.add_subcommand(
      "leta", "reliability integer l_eta for given rates and eta");
  cmd_leta->add_option("--p", leta.p, "per-node rates, comma separated")
      ->required();
  cmd_leta->add_option("--eta", leta.eta, "reliability level in (0,1]")
      ->required();
  cmd_leta->add_flag("--paper-indexing", leta.paper_indexing,
                     "use the published prefix rule (sums one extra term)");
  cmd_leta->add_option("--out", leta.out, "output path (default stdout)");

  RipArgs rip;
  auto* cmd_rip = app.add_subcommand(
      "rip", "exact S-restricted isometry constant of a matrix file");
  cmd_rip->add_option("--matrix", rip.matrix, "matrix file")->required();
  cmd_rip->add_option("--S", rip.S, "subset size")->required();
  cmd_rip->add_option("--out", rip.out, "output path (default stdout)");

  ReconArgs rec;
  auto* cmd_rec = app.add_subcommand(
      "reconstruct", "one-shot reconstruction from files");
  cmd_rec->add_option("--y", rec.y_file, "measurement vector file")->required();
  cmd_rec->add_option("--C", rec.c_file, "output matrix file")->required();
  cmd_rec->add_option("--eps", rec.eps, "noise bound (default 0)");
  cmd_rec->add_option("--safe", rec.safe,
                      "trusted rows, 1-based comma list (exact-support route)");
  cmd_rec->add_option("--qhat", rec.qhat_file,
                      "oracle indicator vector file (oracle route)");
  cmd_rec->add_option("--oracle-p", rec.oracle_p,
                      "per-node rates (scalar broadcasts)");
  cmd_rec->add_option("--oracle-s", rec.oracle_s,
                      "per-node confidences (scalar broadcasts)");
  cmd_rec->add_option("--eta", rec.eta, "reliability level");
  cmd_rec->add_option("--support-mode", rec.support_mode,
                      "random | ranked-literal | ranked-conservative");
  cmd_rec->add_flag("--paper-indexing", rec.paper_indexing,
                    "published prefix rule for l_eta");
  cmd_rec->add_option("--ball-center", rec.ball_center_file,
                      "ball center vector file (default origin)");
  cmd_rec->add_option("--ball-radius", rec.ball_radius,
                      "ball radius (enables the constrained solver)");
  cmd_rec->add_option("--seed", rec.seed, "seed for the random support mode");
  cmd_rec->add_option("--out", rec.out, "output path (default stdout)");
  cmd_rec->add_option("--format", rec.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  DecodeArgs dec;
  auto* cmd_dec = app.add_subcommand(
      "decode-lti", "brute-force window decoding and correctability checks");
  cmd_dec->add_option("--A", dec.a_file, "dynamics matrix file")->required();
  cmd_dec->add_option("--C", dec.c_file, "output matrix file")->required();
  cmd_dec->add_option("--Y", dec.y_file, "m x T window matrix file")
      ->required();
  cmd_dec->add_option("--q", dec.q, "attack budget")->required();
  cmd_dec->add_option("--mode", dec.mode, "varying (default) or fixed")
      ->check(CLI::IsMember({"varying", "fixed"}));
  cmd_dec->add_flag("--global-rows", dec.global_rows,
                    "budget q counts rows over the whole window");
  cmd_dec->add_flag("--certify", dec.certify,
                    "also report the correctability certificate");
  cmd_dec->add_option("--out", dec.out, "output path (default stdout)");
  cmd_dec->add_option("--format", dec.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  SimArgs sim;
  auto* cmd_sim = app.add_subcommand(
      "simulate", "seeded Monte Carlo bound validation from a config file");
  cmd_sim->add_option("--config", sim.config, "scenario config file")
      ->required();
  std::uint64_t seed_arg = 0;
  auto* seed_opt = cmd_sim->add_option("--seed", seed_arg,
                                       "override base_seed from the config");
  cmd_sim->add_option("--out", sim.out, "output path (default stdout)");
  cmd_sim->add_option("--format", sim.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd_sim->add_option("--workers", sim.workers, "worker threads (default 1)");
  cmd_sim->add_flag("--timing", sim.timing,
                    "record real per-trial wall time (breaks byte-for-byte "
                    "reproducibility of the output)");

  FitArgs fit;
  auto* cmd_fit = app.add_subcommand(
      "datadriven-fit", "fit the affine surrogate and residual subspace");
  cmd_fit->add_option("--data", fit.data_file,
                      "dataset file: header row, sigma columns then y columns")
      ->required();
  cmd_fit->add_option("--n", fit.n, "retained residual dimension")->required();
  cmd_fit->add_option("--n-sigma", fit.n_sigma,
                      "number of exogenous columns (default: 'sigma*' names)");
  cmd_fit->add_option("--safety", fit.safety,
                      "noise-bound safety factor (default sqrt(m-n))");
  cmd_fit->add_option("--out", fit.out, "output path (default stdout)");
  cmd_fit->add_option("--format", fit.format, "text or json")
      ->check(CLI::IsMember({"text", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (cmd_pmf->parsed()) return run_pmf(pmf);
    if (cmd_leta->parsed()) return run_leta(leta);
    if (cmd_rip->parsed()) return run_rip(rip);
    if (cmd_rec->parsed()) return run_reconstruct(rec);
    if (cmd_dec->parsed()) return run_decode(dec);
    if (cmd_sim->parsed()) {
      if (seed_opt->count() > 0) sim.seed = seed_arg;
      return run_simulate(sim);
    }
    if (cmd_fit->parsed()) return run_fit(fit);
  } catch (const rsr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const rsr::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const rsr::BudgetExceeded& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const rsr::Infeasible& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const rsr::Error& e) {  // RankDeficient, NumericError
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

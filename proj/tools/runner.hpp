#pragma once

#include "gsb/gsb.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gsb::runner {

using nlohmann::json;

// malformed config; `path` points at the offending field
struct config_error : input_error {
  config_error(const std::string& path, const std::string& msg)
      : input_error(path + ": " + msg), path(path) {}
  std::string path;
};

inline const std::vector<std::string>& modes() {
  static const std::vector<std::string> m{"bridge", "sinkhorn", "rates", "regularize", "oracle", "montecarlo"};
  return m;
}

struct ExperimentConfig {
  std::string mode;
  GaussianDist eta{Vec::Zero(1), SpdMatrix::identity(1)};
  GaussianDist mu{Vec::Zero(1), SpdMatrix::identity(1)};
  std::optional<KernelParams> theta;  // bridge, sinkhorn, oracle, montecarlo
  Vec alpha;                          // regularized family, rates and regularize
  Mat beta;
  int iterations = 30;
  std::vector<double> t_grid;
  GridOptions grid;
  Index samples = 10000;
  int repetitions = 1;
  std::uint64_t seed = 0;
  double p_moment = 2.0;
  std::string output = "out";

  Index dim() const { return eta.dim(); }
  BridgeProblem problem() const { return {eta, mu, *theta}; }
  RegularizedFamily family() const { return {eta, mu, alpha, beta}; }
};

namespace detail {

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw config_error(path.empty() ? "<root>" : path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw config_error(join(path, key), "missing required field");
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw config_error(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw config_error(path, "non-finite number");
  return v;
}

inline Vec vector(const json& j, const std::string& path, Index d = -1) {
  if (!j.is_array() || j.empty()) throw config_error(path, "expected a non-empty array of numbers");
  if (d >= 0 && static_cast<Index>(j.size()) != d)
    throw config_error(path, "expected length " + std::to_string(d) + ", got " + std::to_string(j.size()));
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

// row-major nested arrays
inline Mat matrix(const json& j, const std::string& path, Index d) {
  if (!j.is_array() || static_cast<Index>(j.size()) != d)
    throw config_error(path, "expected " + std::to_string(d) + " rows");
  Mat a(d, d);
  for (Index i = 0; i < d; ++i) {
    std::string rp = path + "[" + std::to_string(i) + "]";
    a.row(i) = vector(j[i], rp, d).transpose();
  }
  return a;
}

inline SpdMatrix spd(const json& j, const std::string& path, Index d) {
  Mat a = matrix(j, path, d);
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()))
    throw config_error(path, "matrix is not symmetric: " + dump(a));
  try {
    return SpdMatrix(a);
  } catch (const input_error& e) {
    throw config_error(path, e.what());
  }
}

inline GaussianDist gaussian(const json& j, const std::string& path) {
  Vec m = vector(field(j, "mean", path), join(path, "mean"));
  return {m, spd(field(j, "cov", path), join(path, "cov"), m.size())};
}

inline int integer(const json& j, const std::string& path, int lo) {
  if (!j.is_number_integer()) throw config_error(path, "expected an integer");
  long long v = j.get<long long>();
  if (v < lo || v > 100000000) throw config_error(path, "out of range, need >= " + std::to_string(lo));
  return static_cast<int>(v);
}

template <class F>
void optional_field(const json& obj, const std::string& key, const std::string& path, F&& f) {
  auto it = obj.find(key);
  if (it != obj.end()) f(*it, join(path, key));
}

}  // namespace detail

// `mode` overrides the config's own mode field when non-empty
inline ExperimentConfig parse_config(const json& j, const std::string& mode = "") {
  using namespace detail;
  if (!j.is_object()) throw config_error("<root>", "expected an object");
  ExperimentConfig c;
  if (!mode.empty()) {
    c.mode = mode;
  } else {
    const json& m = field(j, "mode", "");
    if (!m.is_string()) throw config_error("mode", "expected a string");
    c.mode = m.get<std::string>();
  }
  if (std::find(modes().begin(), modes().end(), c.mode) == modes().end())
    throw config_error("mode", "unknown mode '" + c.mode + "'");

  const json& prob = field(j, "problem", "");
  c.eta = gaussian(field(prob, "eta", "problem"), "problem.eta");
  c.mu = gaussian(field(prob, "mu", "problem"), "problem.mu");
  const Index d = c.eta.dim();
  if (c.mu.dim() != d)
    throw config_error("problem.mu.mean", "dimension " + std::to_string(c.mu.dim()) + " differs from eta's " +
                                              std::to_string(d));

  bool sweep = c.mode == "rates" || c.mode == "regularize";
  if (sweep) {
    const json& fam = field(j, "family", "");
    c.alpha = vector(field(fam, "alpha", "family"), "family.alpha", d);
    c.beta = matrix(field(fam, "beta", "family"), "family.beta", d);
    if (std::abs(c.beta.determinant()) < 1e-300) throw config_error("family.beta", "matrix is singular");
    const json& tg = field(j, "t_grid", "");
    Vec t = vector(tg, "t_grid");
    for (Index i = 0; i < t.size(); ++i) {
      if (!(t(i) > 0)) throw config_error("t_grid[" + std::to_string(i) + "]", "must be positive");
      c.t_grid.push_back(t(i));
    }
  } else {
    const json& th = field(prob, "theta", "problem");
    Vec a = vector(field(th, "alpha", "problem.theta"), "problem.theta.alpha", d);
    Mat b = matrix(field(th, "beta", "problem.theta"), "problem.theta.beta", d);
    SpdMatrix t = spd(field(th, "tau", "problem.theta"), "problem.theta.tau", d);
    try {
      c.theta = KernelParams(a, b, t);
    } catch (const input_error& e) {
      throw config_error("problem.theta.beta", e.what());
    }
  }

  if (c.mode == "sinkhorn") c.iterations = integer(field(j, "iterations", ""), "iterations", 1);
  if (c.mode == "oracle") {
    if (d != 1) throw config_error("problem.eta.mean", "oracle mode needs d = 1");
    optional_field(j, "grid", "", [&](const json& g, const std::string& p) {
      optional_field(g, "lo", p, [&](const json& v, const std::string& q) { c.grid.lo = number(v, q); });
      optional_field(g, "hi", p, [&](const json& v, const std::string& q) { c.grid.hi = number(v, q); });
      optional_field(g, "points", p, [&](const json& v, const std::string& q) { c.grid.points = integer(v, q, 3); });
      optional_field(g, "iters", p, [&](const json& v, const std::string& q) { c.grid.iters = integer(v, q, 1); });
      optional_field(g, "tol", p, [&](const json& v, const std::string& q) { c.grid.tol = number(v, q); });
    });
    if (!(c.grid.hi > c.grid.lo)) throw config_error("grid.hi", "must exceed grid.lo");
    for (const GaussianDist* g : {&c.eta, &c.mu}) {
      try {
        grid_measure(g->mean()(0), g->cov().mat()(0, 0), c.grid.lo, c.grid.hi, c.grid.points);
      } catch (const input_error& e) {
        throw config_error("grid", e.what());
      }
    }
  }
  if (c.mode == "montecarlo") {
    c.samples = integer(field(j, "samples", ""), "samples", 100);
    optional_field(j, "repetitions", "", [&](const json& v, const std::string& q) { c.repetitions = integer(v, q, 1); });
  }
  optional_field(j, "seed", "", [&](const json& v, const std::string& q) {
    if (!v.is_number_unsigned()) throw config_error(q, "expected a nonnegative integer");
    c.seed = v.get<std::uint64_t>();
  });
  optional_field(j, "p_moment", "", [&](const json& v, const std::string& q) {
    c.p_moment = number(v, q);
    if (c.p_moment < 1) throw config_error(q, "must be >= 1");
  });
  optional_field(j, "output", "", [&](const json& v, const std::string& q) {
    if (!v.is_string()) throw config_error(q, "expected a string");
    c.output = v.get<std::string>();
  });
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& file, const std::string& mode = "") {
  std::ifstream in(file);
  if (!in) throw config_error("<file>", "cannot open " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error("<file>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j, mode);
}

// ---- serialization

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const Mat& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vec(m.row(i).transpose())));
  return a;
}

inline json to_json(const KernelParams& k) {
  return {{"alpha", to_json(k.alpha())}, {"beta", to_json(k.beta())}, {"tau", to_json(k.tau().mat())}};
}

inline json to_json(const QuadraticPotential& q) {
  return {{"base", to_json(q.base)},
          {"value", q.value},
          {"gradient", to_json(q.gradient)},
          {"hessian", to_json(q.hessian.mat())}};
}

inline json to_json(const BridgeSolution& s) {
  return {{"iota", to_json(s.params.alpha())}, {"kappa", to_json(s.params.beta())},
          {"varsigma", to_json(s.params.tau().mat())}, {"r", to_json(s.r.mat())},
          {"dual", to_json(s.dual_params)},           {"r_bar", to_json(s.r_bar.mat())}};
}

inline json to_json(const RateData& r) {
  return {{"rho", r.rho},           {"rho_bar", r.rho_bar},       {"c_theta", r.c_theta},
          {"c_theta_bar", r.c_theta_bar}, {"psi", r.even.psi},   {"phi", r.even.phi},
          {"psi_bar", r.odd.psi},   {"phi_bar", r.odd.phi}};
}

inline json to_json(const CommutationReport& c) {
  return {{"bayes_vs_dual_alpha", c.bayes_vs_dual_alpha}, {"bayes_vs_dual_beta", c.bayes_vs_dual_beta},
          {"bayes_vs_dual_tau", c.bayes_vs_dual_tau},     {"loop_alpha", c.loop_alpha},
          {"loop_beta", c.loop_beta},                     {"loop_tau", c.loop_tau},
          {"connect_r", c.connect_r},                     {"connect_r_bar", c.connect_r_bar},
          {"connect_scaled", c.connect_scaled},           {"commut", c.commut},
          {"max", c.max()}};
}

inline json to_json(const RiccatiCrosscheck& c) {
  return {{"ricc_even", c.ricc_even},           {"ricc_odd", c.ricc_odd},
          {"bayes_vs_riccati", c.bayes_vs_riccati}, {"gain_identity", c.gain_identity},
          {"marginal_pinning", c.marginal_pinning}, {"gibbs_fixed_point", c.gibbs_fixed_point},
          {"envelope_slack", c.envelope_slack}};
}

inline json to_json(const McReport& r) {
  return {{"seed", r.seed},
          {"n_samples", r.n_samples},
          {"sample_mean", to_json(r.sample.mean)},
          {"sample_cov", to_json(r.sample.cov)},
          {"target_mean", to_json(r.target_mean)},
          {"target_cov", to_json(r.target_cov)},
          {"max_mean_z", r.max_mean_z},
          {"max_cov_z", r.max_cov_z},
          {"within_4se", r.within(4)}};
}

// round-trip precision for every number written to CSV
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) {
    os_ << std::setprecision(17);
    for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
    os_ << "\n";
  }
  CsvWriter& operator<<(double v) {
    sep();
    os_ << v;
    return *this;
  }
  CsvWriter& operator<<(int v) {
    sep();
    os_ << v;
    return *this;
  }
  CsvWriter& operator<<(std::uint64_t v) {
    sep();
    os_ << v;
    return *this;
  }
  CsvWriter& operator<<(const Mat& m) {
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) *this << m(i, j);
    return *this;
  }
  void end_row() {
    os_ << "\n";
    first_ = true;
  }
  std::string str() const { return os_.str(); }

 private:
  void sep() {
    if (!first_) os_ << ",";
    first_ = false;
  }
  std::ostringstream os_;
  bool first_ = true;
};

inline std::vector<std::string> indexed(const std::string& name, Index rows, Index cols = 1) {
  std::vector<std::string> out;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      out.push_back(cols == 1 ? name + "_" + std::to_string(i) : name + "_" + std::to_string(i) + std::to_string(j));
  return out;
}

struct RunResult {
  json summary;
  std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

// ---- modes

inline json problem_json(const ExperimentConfig& c) {
  json j{{"eta", {{"mean", to_json(c.eta.mean())}, {"cov", to_json(c.eta.cov().mat())}}},
         {"mu", {{"mean", to_json(c.mu.mean())}, {"cov", to_json(c.mu.cov().mat())}}}};
  if (c.theta) j["theta"] = to_json(*c.theta);
  return j;
}

inline RunResult run_bridge(const ExperimentConfig& c) {
  BridgeProblem p = c.problem();
  BridgeSolution s = schrodinger_bridge(p);
  LimitPotentials lp = limit_potentials(p, s);
  IntegratedCosts ic = integrated_costs(p);
  RunResult out;
  json& j = out.summary;
  j["bridge"] = to_json(s);
  j["rates"] = to_json(convergence_rates(p));
  j["commutation"] = to_json(verify_commutation(p));
  j["entropic_cost"] = entropic_cost(s.params, p.theta(), p.eta(), p.mu());
  j["ent_bridge_to_reference"] = kernel_rel_entropy(s.params, p.theta(), p.eta().mean(), p.eta().cov());
  PushforwardMoments h = pushforward(p.eta(), s.params);
  j["marginal_residual"] = {{"mean", (h.a - p.mu().mean()).norm()},
                            {"cov", op_norm(h.b.mat() - p.mu().cov().mat())}};
  j["limit_potentials"] = {{"U", to_json(lp.U)}, {"V", to_json(lp.V)}};
  j["integrated_costs"] = {{"c_eta", to_json(ic.c_eta)},
                           {"c_mu", to_json(ic.c_mu)},
                           {"logQ", ic.logQ ? to_json(*ic.logQ) : json(nullptr)},
                           {"logR", ic.logR ? to_json(*ic.logR) : json(nullptr)}};
  return out;
}

inline std::vector<std::string> trajectory_header(Index d) {
  std::vector<std::string> h{"n", "parity"};
  for (auto& s : indexed("m", d)) h.push_back(s);
  for (auto& s : indexed("sigma", d, d)) h.push_back(s);
  for (auto& s : indexed("tau", d, d)) h.push_back(s);
  for (const char* s : {"err_mean", "err_cov", "err_tau", "ent_to_bridge", "bound_value"}) h.push_back(s);
  return h;
}

inline RunResult run_sinkhorn_mode(const ExperimentConfig& c) {
  BridgeProblem p = c.problem();
  SinkhornTrajectory tr = run_sinkhorn(p, c.iterations);
  std::vector<ErrorRow> rows = error_report(tr, c.p_moment);
  const Index d = p.dim();
  CsvWriter csv(trajectory_header(d));
  std::vector<double> em, ec;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const SinkhornState& st = tr.states[k];
    const ErrorRow& r = rows[k];
    csv << r.n << r.parity << Mat(st.m) << st.sigma.mat() << st.theta.tau().mat() << r.err_mean << r.err_cov
        << r.err_tau << r.ent_to_bridge << r.bound_value;
    csv.end_row();
    if (r.parity == 0) {
      em.push_back(r.err_mean);
      ec.push_back(r.err_cov);
    }
  }
  RunResult out;
  out.files.emplace_back("trajectory.csv", csv.str());
  json& j = out.summary;
  j["iterations"] = c.iterations;
  j["bridge"] = to_json(tr.bridge);
  j["rates"] = to_json(tr.rates);
  j["crosscheck"] = to_json(riccati_crosscheck(tr));
  j["converged_at"] = tr.converged_at ? json(*tr.converged_at) : json(nullptr);
  auto slope = [](const std::optional<SlopeFit>& f) {
    return f ? json{{"slope", f->slope}, {"points", f->points}} : json(nullptr);
  };
  j["slopes"] = {{"err_mean_even", slope(fit_log_slope(em))},
                 {"err_cov_even", slope(fit_log_slope(ec))},
                 {"half_log_rho", 0.5 * std::log(tr.rates.rho)},
                 {"log_rho", std::log(tr.rates.rho)}};
  EntropyBudget b = entropy_budget(tr);
  j["entropy_budget"] = {{"ent_bridge_initial", b.ent_bridge_initial},
                         {"telescoping_max_residual", b.telescoping_max_residual},
                         {"one_over_n_worst_slack", b.one_over_n_worst_slack},
                         {"burn_in", b.burn_in},
                         {"rate", b.rate},
                         {"max_ratio", b.ratio_count ? json(b.max_ratio) : json(nullptr)},
                         {"envelope", b.ratio_count ? json(b.envelope) : json(nullptr)},
                         {"fitted_ratio", b.fit_points >= 2 ? json(b.fitted_ratio) : json(nullptr)}};
  SandwichReport sw = potential_sandwich(tr);
  j["potential_sandwich"] = {{"min_slack", sw.min_slack}, {"worst_n", sw.worst_n}, {"integrable", sw.integrable}};
  return out;
}

// sweep points run concurrently, results are collected in grid order
template <class F>
auto sweep(const std::vector<double>& ts, F f) {
  using R = decltype(f(0.0));
  std::vector<std::future<R>> fut;
  for (double t : ts) fut.push_back(std::async(std::launch::async, f, t));
  std::vector<R> out;
  for (auto& x : fut) out.push_back(x.get());
  return out;
}

inline RunResult run_rates(const ExperimentConfig& c) {
  RegularizedFamily f = c.family();
  struct Row {
    double t, rho, rho_bar, bound;
  };
  std::vector<Row> rows = sweep(c.t_grid, [&](double t) {
    RateData r = convergence_rates(f.problem(t));
    return Row{t, r.rho, r.rho_bar, rho_regularized_bound(f, t)};
  });
  CsvWriter csv({"t", "rho_theta", "rho_bar", "upper_bound_ref_cc24"});
  bool below = true, monotone = true;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    csv << rows[k].t << rows[k].rho << rows[k].rho_bar << rows[k].bound;
    csv.end_row();
    below = below && rows[k].rho <= rows[k].bound * (1 + 1e-12);
    if (k > 0 && rows[k].t > rows[k - 1].t) monotone = monotone && rows[k].rho < rows[k - 1].rho;
  }
  RunResult out;
  out.files.emplace_back("rates.csv", csv.str());
  out.summary["points"] = rows.size();
  out.summary["rho_below_bound"] = below;
  out.summary["rho_decreasing_in_t"] = monotone;
  return out;
}

inline RunResult run_regularize(const ExperimentConfig& c) {
  RegularizedFamily f = c.family();
  struct Row {
    RegularizationReport a;
    EntropicW2Report w;
  };
  std::vector<Row> rows =
      sweep(c.t_grid, [&](double t) { return Row{regularized_asymptotics(f, t), entropic_cost_vs_w2(f, t)}; });
  CsvWriter csv({"t", "gap_kappa", "gap_varsigma_over_t", "gap_r_over_t", "gap_varsigma_sigma_bar", "kappa_norm",
                 "tH", "half_w2sq", "gap_entropic_w2", "decomposition_residual"});
  double worst = 0;
  for (const Row& r : rows) {
    csv << r.a.t << r.a.gap_kappa << r.a.gap_varsigma_over_t << r.a.gap_r_over_t << r.a.gap_varsigma_sigma_bar
        << r.a.kappa_norm << r.w.tH << r.w.half_w2sq << r.w.gap << r.w.decomposition_residual;
    csv.end_row();
    worst = std::max(worst, r.w.decomposition_residual);
  }
  RunResult out;
  out.files.emplace_back("regularize.csv", csv.str());
  out.summary["monge_coefficient"] = to_json(f.monge_coefficient());
  out.summary["max_decomposition_residual"] = worst;
  return out;
}

inline RunResult run_oracle(const ExperimentConfig& c) {
  BridgeProblem p = c.problem();
  GridCoupling g = grid_ipf(p, c.grid);
  GaussianDist eta = p.eta();
  BridgeSolution s = schrodinger_bridge(p);
  PushforwardMoments h = pushforward(eta, s.params);
  Vec mean(2);
  mean << eta.mean()(0), h.a(0);
  Mat cov(2, 2);
  double sx = eta.cov().mat()(0, 0), k = s.params.beta()(0, 0);
  cov << sx, k * sx, k * sx, h.b.mat()(0, 0);
  CsvWriter csv({"i", "x", "eta_weight", "log_a", "y", "mu_weight", "log_b"});
  for (int i = 0; i < g.x.n_points; ++i) {
    csv << i << g.x.nodes(i) << g.x.weights(i) << g.log_a(i) << g.y.nodes(i) << g.y.weights(i) << g.log_b(i);
    csv.end_row();
  }
  RunResult out;
  out.files.emplace_back("oracle.csv", csv.str());
  json& j = out.summary;
  j["grid"] = {{"lo", c.grid.lo}, {"hi", c.grid.hi}, {"points", c.grid.points}, {"tol", c.grid.tol}};
  j["converged"] = g.converged;
  j["iterations"] = g.iterations;
  j["mismatch"] = g.mismatch;
  j["truncated_mass"] = std::max(g.x.truncated, g.y.truncated);
  j["coupling_mean"] = to_json(g.mean);
  j["coupling_cov"] = to_json(g.cov);
  j["closed_form_mean"] = to_json(mean);
  j["closed_form_cov"] = to_json(cov);
  j["max_mean_gap"] = (g.mean - mean).cwiseAbs().maxCoeff();
  j["max_cov_gap"] = (g.cov - cov).cwiseAbs().maxCoeff();
  j["objective"] = g.objective;
  j["closed_form_objective"] = kernel_rel_entropy(s.params, p.theta(), eta.mean(), eta.cov());
  j["sandwich_slack"] = g.sandwich_slack;
  return out;
}

inline RunResult run_montecarlo(const ExperimentConfig& c) {
  BridgeProblem p = c.problem();
  BridgeSolution s = schrodinger_bridge(p);
  const Index d = p.dim();
  std::vector<std::string> h{"rep", "seed"};
  for (auto& x : indexed("mean", d)) h.push_back(x);
  for (auto& x : indexed("cov", d, d)) h.push_back(x);
  h.push_back("max_mean_z");
  h.push_back("max_cov_z");
  CsvWriter csv(h);
  int inside = 0;
  json first;
  for (int r = 0; r < c.repetitions; ++r) {
    std::uint64_t seed = c.seed + static_cast<std::uint64_t>(r);
    McReport m = mc_pushforward(p, s, c.samples, seed);
    csv << r << seed << Mat(m.sample.mean) << m.sample.cov << m.max_mean_z << m.max_cov_z;
    csv.end_row();
    inside += m.within(4);
    if (r == 0) first = to_json(m);
  }
  RunResult out;
  out.files.emplace_back("montecarlo.csv", csv.str());
  out.summary["repetitions"] = c.repetitions;
  out.summary["within_4se"] = inside;
  out.summary["coverage"] = static_cast<double>(inside) / c.repetitions;
  out.summary["first"] = first;
  return out;
}

inline RunResult run_experiment(const ExperimentConfig& c) {
  RunResult r;
  if (c.mode == "bridge") r = run_bridge(c);
  else if (c.mode == "sinkhorn") r = run_sinkhorn_mode(c);
  else if (c.mode == "rates") r = run_rates(c);
  else if (c.mode == "regularize") r = run_regularize(c);
  else if (c.mode == "oracle") r = run_oracle(c);
  else if (c.mode == "montecarlo") r = run_montecarlo(c);
  else throw config_error("mode", "unknown mode '" + c.mode + "'");
  json s{{"mode", c.mode}, {"dim", c.dim()}, {"seed", c.seed}, {"problem", problem_json(c)}};
  if (!c.t_grid.empty()) s["t_grid"] = c.t_grid;
  s.update(r.summary);
  r.summary = std::move(s);
  r.files.emplace_back("summary.json", r.summary.dump(2) + "\n");
  return r;
}

// files are written only after every computation finished
inline void write_outputs(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, text] : r.files) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  }
}

enum ExitCode { kOk = 0, kConfigError = 2, kNumericalFailure = 3 };

// parse, run, write; diagnostics go to `err`
inline int run_command(const std::string& mode, const std::string& config, const std::string& out,
                       std::optional<std::uint64_t> seed, bool quiet, std::ostream& log, std::ostream& err) {
  ExperimentConfig c;
  try {
    c = load_config(config, mode);
  } catch (const config_error& e) {
    err << "config error at " << e.what() << "\n";
    return kConfigError;
  }
  if (seed) c.seed = *seed;
  std::string dir = out.empty() ? c.output : out;
  RunResult r;
  try {
    r = run_experiment(c);
  } catch (const std::exception& e) {
    // the config validated, so anything thrown here is the computation failing
    err << "numerical failure in " << c.mode << ": " << e.what() << "\n";
    return kNumericalFailure;
  }
  try {
    write_outputs(r, dir);
  } catch (const std::exception& e) {
    err << "output error: " << e.what() << "\n";
    return 1;
  }
  if (!quiet) {
    log << c.mode << ": wrote";
    for (const auto& f : r.files) log << " " << f.first;
    log << " to " << dir << "\n";
  }
  return kOk;
}

}  // namespace gsb::runner

// one PASS/FAIL line per acceptance criterion; exit status 1 if any fails
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace gsb;
using namespace gsb::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<BridgeProblem> problem_set() {
  Rng rng(20241);
  std::vector<BridgeProblem> out;
  for (int k = 0; k < 100; ++k) out.push_back(random_problem(rng, 1 + k % 6));
  return out;
}

Outcome fixed_points_ok() {
  auto t0 = Clock::now();
  Rng rng(101);
  double worst_fix = 0, worst_id = 0;
  for (int k = 0; k < 100; ++k) {
    Index d = 1 + k % 8;
    RiccatiSpec s(random_spd(rng, d, 0.05, 20));
    RiccatiFixedPoints fp = fixed_points(s);
    const Mat& r = fp.r.mat();
    worst_fix = std::max(worst_fix, op_norm(ricc_map(s, r).mat() - r));
    worst_id = std::max(worst_id, op_norm(r + r * s.varpi.inverse() * r - Mat::Identity(d, d)));
  }
  double dt = seconds_since(t0);
  return {worst_fix <= 1e-11 && worst_id <= 1e-10 && dt < 5,
          fmt("ricc residual %.2e", worst_fix) + fmt(", identity %.2e", worst_id) + fmt(", %.2fs", dt)};
}

Outcome marginal_identity_ok(const std::vector<BridgeProblem>& ps) {
  auto t0 = Clock::now();
  double worst = 0;
  for (const BridgeProblem& p : ps) {
    BridgeSolution s = schrodinger_bridge(p);
    const Mat& k = s.params.beta();
    Mat lhs = k * p.eta().cov().mat() * k.transpose() + s.params.tau().mat();
    worst = std::max(worst, op_norm(lhs - p.mu().cov().mat()) / std::max(1.0, op_norm(p.mu().cov().mat())));
  }
  double dt = seconds_since(t0);
  return {worst <= 1e-10 && dt < 5, fmt("max residual %.2e", worst) + fmt(", %.2fs", dt)};
}

Outcome commutation_ok(const std::vector<BridgeProblem>& ps) {
  double worst = 0;
  for (const BridgeProblem& p : ps) worst = std::max(worst, verify_commutation(p).max());
  return {worst <= 1e-9, fmt("max residual %.2e", worst)};
}

Outcome crosscheck_ok(const std::vector<BridgeProblem>& ps) {
  double worst = 0;
  for (const BridgeProblem& p : ps) worst = std::max(worst, riccati_crosscheck(run_sinkhorn(p, 30)).bayes_vs_riccati);
  return {worst <= 1e-10, fmt("max tau disagreement %.2e", worst)};
}

Outcome rates_ok() {
  auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  struct Case {
    const char* name;
    BridgeProblem p;
    int iters;
  };
  for (const Case& c : {Case{"C2", c2(), 60}, Case{"2-D", near_singular_problem(), 240}}) {
    SinkhornTrajectory tr = run_sinkhorn(c.p, c.iters);
    std::vector<double> em, ec;
    for (const ErrorRow& r : error_report(tr))
      if (r.parity == 0) {
        em.push_back(r.err_mean);
        ec.push_back(r.err_cov);
      }
    auto fm = fit_log_slope(em), fc = fit_log_slope(ec);
    double want_m = 0.5 * std::log(tr.rates.rho), want_c = std::log(tr.rates.rho);
    if (!fm || !fc) {
      pass = false;
      detail += std::string(c.name) + ": window empty; ";
      continue;
    }
    double dm = std::abs(fm->slope / want_m - 1), dc = std::abs(fc->slope / want_c - 1);
    pass = pass && dm <= 0.05 && dc <= 0.05;
    detail += std::string(c.name) + fmt(": mean %.4f", fm->slope) + fmt(" vs %.4f", want_m) +
              fmt(", cov %.4f", fc->slope) + fmt(" vs %.4f; ", want_c);
  }
  double dt = seconds_since(t0);
  pass = pass && dt < 2;
  return {pass, detail + fmt("%.2fs", dt)};
}

Outcome golden_ok() {
  const double g = (std::sqrt(5.0) - 1) / 2;
  const double rho = 1 / ((1 + (1 + std::sqrt(5.0)) / 2) * (1 + (1 + std::sqrt(5.0)) / 2));
  BridgeProblem p = c1();
  BridgeSolution s = schrodinger_bridge(p);
  double e = std::max({std::abs(s.params.beta()(0, 0) - g), std::abs(s.params.tau().mat()(0, 0) - g),
                       std::abs(s.r.mat()(0, 0) - g)});
  double er = std::abs(convergence_rates(p).rho - rho);
  return {e <= 1e-12 && er <= 1e-12, fmt("kappa/varsigma/r error %.2e", e) + fmt(", rho error %.2e", er)};
}

Outcome oracle_ok() {
  auto t0 = Clock::now();
  Rng rng(81);
  double worst = 0;
  int unconverged = 0;
  for (int k = 0; k < 10; ++k) {
    BridgeProblem p = random_problem(rng, 1);
    double m = 0.5 * rng.normal(), s = 0.3 + 0.7 * rng.uniform();
    double mb = 0.5 * rng.normal(), sb = 0.3 + 0.7 * rng.uniform();
    p = scalar_problem(m, s, mb, sb, p.theta().alpha()(0), p.theta().beta()(0, 0), p.theta().tau().mat()(0, 0));
    GridCoupling c = grid_ipf(p, {-8, 8, 1201, 5000, 1e-12});
    unconverged += !c.converged;
    GaussianDist j = joint(p.eta().mean(), p.eta().cov(), schrodinger_bridge(p).params);
    worst = std::max({worst, (c.mean - j.mean()).cwiseAbs().maxCoeff(), (c.cov - j.cov().mat()).cwiseAbs().maxCoeff()});
  }
  double dt = seconds_since(t0);
  return {worst <= 5e-3 && unconverged == 0 && dt < 30,
          fmt("max moment gap %.2e", worst) + fmt(", unconverged %.0f", unconverged) + fmt(", %.2fs", dt)};
}

Outcome monte_carlo_ok() {
  BridgeProblem p = near_singular_problem();
  BridgeSolution s = schrodinger_bridge(p);
  int inside = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) inside += mc_pushforward(p, s, 10000, seed).within(4);
  return {inside >= 95, fmt("%.0f/100 repetitions inside 4 s.e.", inside)};
}

Outcome potentials_ok() {
  Rng rng(909);
  std::vector<BridgeProblem> ps{c1(), c2(), near_singular_problem()};
  for (int k = 0; k < 6; ++k) ps.push_back(random_problem(rng, 1 + k % 3));
  double worst_density = 0, worst_hess = 0, worst_grad = 0;
  int ratios = 0;
  for (const BridgeProblem& p : ps) {
    SinkhornTrajectory tr = run_sinkhorn(p, 61);
    const Index d = p.dim();
    for (const PotentialPair& pp : tr.potentials) {
      if (pp.n > 10) break;
      GaussianDist j = joint(p.eta().mean(), p.eta().cov(), tr.states[2 * pp.n].theta);
      for (int i = 0; i < 20; ++i) {
        Vec x = p.eta().mean() + p.eta().cov().sqrt().mat() * rng.normal_vec(d);
        Vec y = p.mu().mean() + p.mu().cov().sqrt().mat() * rng.normal_vec(d);
        double lhs = -pp.U(x) + p.theta().log_q(x, y) - pp.V(y);
        worst_density = std::max(worst_density, std::abs(std::expm1(lhs - j.log_density(stack(x, y)))));
      }
    }
    // Hessian remainders contract by rho (V) and rho_bar (U); gradients by the square root of the slower one.
    // rates are least-squares slopes over n >= 1 down to the 1e-8 floor
    double mix = 0.5 * std::log(std::max(tr.rates.rho, tr.rates.rho_bar));
    std::vector<double> v(1, NAN), u(1, NAN), g(1, NAN);
    for (std::size_t n = 1; n < tr.potentials.size(); ++n) {
      const PotentialPair& pp = tr.potentials[n];
      v.push_back(op_norm(pp.eps_V.hessian.mat()));
      u.push_back(op_norm(pp.eps_U.hessian.mat()));
      g.push_back(pp.eps_V.gradient.norm());
    }
    auto fv = fit_log_slope(v, 1e-8, INFINITY), fu = fit_log_slope(u, 1e-8, INFINITY), fg = fit_log_slope(g, 1e-8, INFINITY);
    if (fv && fu) {
      worst_hess = std::max({worst_hess, std::abs(fv->slope / std::log(tr.rates.rho) - 1),
                             std::abs(fu->slope / std::log(tr.rates.rho_bar) - 1)});
      ++ratios;
    }
    if (fg) worst_grad = std::max(worst_grad, std::abs(fg->slope / mix - 1));
  }
  return {worst_density <= 1e-8 && worst_hess <= 0.05 && worst_grad <= 0.05 && ratios > 0,
          fmt("density rel err %.2e", worst_density) + fmt(", hessian slope rel dev %.4f", worst_hess) +
              fmt(", gradient slope rel dev %.4f", worst_grad)};
}

Outcome regularization_ok() {
  GaussianDist eta(vec({0}), SpdMatrix::scalar(1)), mu(vec({0}), SpdMatrix::scalar(4));
  RegularizedFamily f(eta, mu, vec({0}), scalar(1));
  std::vector<double> small_k, large_s, ent_c;
  double worst_decomp = 0;
  for (double t : {0.1, 0.05, 0.025}) {
    RegularizationReport r = regularized_asymptotics(f, t);
    small_k.push_back(std::abs(r.bridge.params.beta()(0, 0) - 2) / t);
    EntropicW2Report w = entropic_cost_vs_w2(f, t);
    ent_c.push_back(std::abs(w.tH - 0.5) / t);
    worst_decomp = std::max(worst_decomp, w.decomposition_residual);
  }
  for (double t : {10.0, 20.0, 40.0}) {
    RegularizationReport r = regularized_asymptotics(f, t);
    large_s.push_back(std::abs(r.bridge.params.tau().mat()(0, 0) - 4) * t);
    worst_decomp = std::max(worst_decomp, entropic_cost_vs_w2(f, t).decomposition_residual);
  }
  // bounded: no growth along the sequence; stable: spread within 10%
  auto bounded = [](const std::vector<double>& v) {
    for (std::size_t k = 1; k < v.size(); ++k)
      if (v[k] > v[0] * 1.05) return false;
    return true;
  };
  auto spread = [](const std::vector<double>& v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi / *lo - 1;
  };
  bool pass = bounded(small_k) && bounded(large_s) && spread(ent_c) <= 0.1 && worst_decomp <= 1e-9;
  return {pass, fmt("|kappa-2|/t %.4f", small_k.back()) + fmt(", |varsigma-4| t %.4f", large_s.back()) +
                    fmt(", c spread %.2e", spread(ent_c)) + fmt(", decomposition %.2e", worst_decomp)};
}

Outcome entropy_ok(const std::vector<BridgeProblem>& ps) {
  std::vector<BridgeProblem> all{c1(), c2(), near_singular_problem()};
  for (int k = 0; k < 20; ++k) all.push_back(ps[k]);
  double worst_tel = 0, worst_slack = INFINITY, worst_fit = 0, worst_env = 0, worst_step = 0;
  int checked = 0;
  for (const BridgeProblem& p : all) {
    EntropyBudget b = entropy_budget(run_sinkhorn(p, 200));
    worst_tel = std::max(worst_tel, b.telescoping_max_residual);
    worst_slack = std::min(worst_slack, b.one_over_n_worst_slack);
    if (b.fit_points >= 3) {
      // decay exponent against log rate, same 5% as the moment slopes
      worst_fit = std::max(worst_fit, 1 - std::log(b.fitted_ratio) / std::log(b.rate));
      worst_env = std::max(worst_env, b.envelope);
      worst_step = std::max(worst_step, b.max_ratio / b.rate);
      ++checked;
    }
  }
  return {worst_tel <= 1e-9 && worst_slack >= -1e-9 && worst_fit <= 0.05 && std::isfinite(worst_env) && checked > 0,
          fmt("telescoping %.2e", worst_tel) + fmt(", 1/n slack %.2e", worst_slack) +
              fmt(", decay exponent shortfall %.4f", worst_fit) + fmt(", envelope %.4f", worst_env) +
              fmt(", max step ratio/rate %.6f", worst_step)};
}

Outcome closed_form_ok() {
  Rng rng(35);
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    double w = std::exp(-2 + 4 * rng.uniform()), v0 = 3 * rng.uniform();
    RiccatiSpec s(SpdMatrix::scalar(w));
    Mat v = scalar(v0);
    for (int n = 1; n <= 50; ++n) {
      v = ricc_map(s, v).mat();
      worst = std::max(worst, std::abs(v(0, 0) - closed_form_1d(w, v0, n)));
    }
  }
  return {worst <= 1e-12, fmt("max deviation %.2e", worst)};
}

}  // namespace

int main() {
  std::vector<BridgeProblem> ps = problem_set();
  std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"fixed-point correctness", fixed_points_ok},
      {"bridge marginal identity", [&] { return marginal_identity_ok(ps); }},
      {"commutation and duality", [&] { return commutation_ok(ps); }},
      {"riccati/bayes cross-check", [&] { return crosscheck_ok(ps); }},
      {"rate reproduction", rates_ok},
      {"golden-ratio desk case", golden_ok},
      {"oracle equivalence", oracle_ok},
      {"monte carlo pushforward", monte_carlo_ok},
      {"potential consistency", potentials_ok},
      {"regularization limits", regularization_ok},
      {"entropy budget", [&] { return entropy_ok(ps); }},
      {"1-d closed-form flow", closed_form_ok},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail.c_str());
  }
  return failed ? 1 : 0;
}

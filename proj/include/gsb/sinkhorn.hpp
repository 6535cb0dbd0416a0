#pragma once

#include "gsb/bridge.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace gsb {

struct SinkhornState {
  int n = 0;
  KernelParams theta;  // from the rescaled Riccati recursion
  Vec m;               // marginal moments h(theta_n)
  SpdMatrix sigma;
  SpdMatrix upsilon;
  SpdMatrix tau_bayes;  // same tau_n, from iterating the conjugate map directly
  int parity() const { return n % 2; }
};

struct GibbsProducts {
  int n = 0;             // loop index, >= 1
  Mat beta_circ;         // beta_n beta_{n-1}
  Vec alpha_circ;
  SpdMatrix tau_circ;
  Mat cumulative;        // beta°_{n} beta°_{n-2} ... (down to index 2 or 3)
};

struct RateData {
  double rho = 0;
  double rho_bar = 0;
  ContractionBound even;  // for varpi
  ContractionBound odd;   // for varpi_bar
  double c_theta = 1;     // |tau_2n - varsigma| <= c_theta rho^n |tau_0 - varsigma|
  double c_theta_bar = 1;
};

struct PotentialPair {
  int n = 0;  // potentials of index 2n
  QuadraticPotential U;
  QuadraticPotential V;
  QuadraticPotential eps_U;         // U_2n - limit U, exact
  QuadraticPotential eps_V;
  QuadraticPotential eps_U_closed;  // gain-product form
  QuadraticPotential eps_V_closed;
  double mu_V = 0;   // mu(V_2n)
  double eta_U = 0;  // eta(U_2n)
};

struct SinkhornTrajectory {
  BridgeProblem problem;
  BridgeConstants constants;
  BridgeSolution bridge;
  RateData rates;
  std::vector<SinkhornState> states;
  std::vector<GibbsProducts> gibbs;
  std::vector<PotentialPair> potentials;
  std::optional<int> converged_at;  // first even index with |m-m_bar| + |s-s_bar|_F <= 1e-10
};

inline RateData convergence_rates(const BridgeProblem& p) {
  BridgeConstants c = bridge_constants(p);
  RateData out;
  out.even = contraction_bound(RiccatiSpec(c.varpi));
  out.odd = contraction_bound(RiccatiSpec(c.varpi_bar));
  out.rho = out.even.rate;
  out.rho_bar = out.odd.rate;
  out.c_theta = std::max(1.0, out.even.phi * out.even.phi / out.rho * p.mu().cov().cond());
  out.c_theta_bar = std::max(1.0, out.odd.phi * out.odd.phi / out.rho_bar * p.eta().cov().cond());
  return out;
}

// (1 + t lambda_min(omega)^1/2)^-2
inline double rho_regularized_bound(const RegularizedFamily& f, double t) {
  double q = 1.0 + t * std::sqrt(f.omega().lambda_min());
  return 1.0 / (q * q);
}

// beta = I only: (1 + t lambda_min(s^-1/2 s_bar^-1 s^-1/2)^1/2)^-2
inline double rho_identity_beta_bound(const RegularizedFamily& f, double t) {
  Mat w = f.eta().cov().inv_sqrt();
  double l = lambda_min_sym(w * f.mu().cov().inverse() * w);
  double q = 1.0 + t * std::sqrt(l);
  return 1.0 / (q * q);
}

namespace detail {

inline SpdMatrix checked_spd(const Mat& a, int step, const char* what) {
  try {
    return SpdMatrix(a);
  } catch (const input_error& e) {
    throw numerical_error("sinkhorn step " + std::to_string(step) + ": " + what + " lost definiteness: " + e.what());
  }
}

}  // namespace detail

std::vector<GibbsProducts> gibbs_products(const SinkhornTrajectory& traj);
std::vector<PotentialPair> potential_flow(const SinkhornTrajectory& traj);

inline SinkhornTrajectory run_sinkhorn(const BridgeProblem& p, int n_iters) {
  if (n_iters < 1) throw input_error("run_sinkhorn: n_iters must be >= 1");
  using detail::checked_spd;
  const Index d = p.dim();
  const Vec& m = p.eta().mean();
  const Vec& mb = p.mu().mean();
  const SpdMatrix& s = p.eta().cov();
  const SpdMatrix& sb = p.mu().cov();
  Mat i = Mat::Identity(d, d);
  BridgeConstants c = bridge_constants(p);
  Mat sh = s.sqrt().mat(), sbh = sb.sqrt().mat(), sbih = sb.inv_sqrt();
  Mat ti = p.theta().tau().inverse();
  const Mat& beta = p.theta().beta();

  SinkhornTrajectory traj{p, c, schrodinger_bridge(p), convergence_rates(p), {}, {}, {}, std::nullopt};
  PushforwardMoments h0 = pushforward(p.eta(), p.theta());
  traj.states.push_back({0, p.theta(), h0.a, h0.b, checked_spd(sbih * p.theta().tau().mat() * sbih, 0, "upsilon"),
                         p.theta().tau()});
  KernelParams bayes = p.theta();
  for (int n = 1; n <= n_iters; ++n) {
    const SinkhornState& prev = traj.states.back();
    const Mat& up = prev.upsilon.mat();
    Mat ups, tau, gain;
    Vec mn, alpha;
    Mat sig;
    if (n % 2 == 1) {
      ups = (i + c.gamma.transpose() * up * c.gamma).llt().solve(i);
      tau = sh * ups * sh;
      gain = tau * beta.transpose() * ti;
      mn = m + gain * (mb - prev.m);
      alpha = m - gain * prev.m;
      sig = gain * sb.mat() * gain.transpose() + tau;
      bayes = bayes_map(m, s, bayes);
    } else {
      ups = (i + c.gamma * up * c.gamma.transpose()).llt().solve(i);
      tau = sbh * ups * sbh;
      gain = tau * ti * beta;
      mn = mb + gain * (m - prev.m);
      alpha = mb - gain * prev.m;
      sig = gain * s.mat() * gain.transpose() + tau;
      bayes = bayes_map(mb, sb, bayes);
    }
    SpdMatrix tau_spd = checked_spd(tau, n, "tau");
    traj.states.push_back({n, KernelParams(alpha, gain, tau_spd), mn, checked_spd(sig, n, "sigma"),
                           checked_spd(ups, n, "upsilon"), bayes.tau()});
    if (n % 2 == 0 && !traj.converged_at &&
        (mn - mb).norm() + (sig - sb.mat()).norm() <= 1e-10)
      traj.converged_at = n;
  }
  traj.gibbs = gibbs_products(traj);
  traj.potentials = potential_flow(traj);
  return traj;
}

struct RiccatiCrosscheck {
  double ricc_even = 0;          // |upsilon_{2n+2} - Ricc_varpi(upsilon_2n)|
  double ricc_odd = 0;           // |upsilon_{2n+1} - Ricc_varpi_bar(upsilon_{2n-1})|
  double bayes_vs_riccati = 0;   // |tau_n (Riccati) - tau_n (conjugate map)|, relative
  double gain_identity = 0;      // |tau_2n^-1 beta_2n - tau^-1 beta|
  double marginal_pinning = 0;   // |(m_n, sigma_n) - h(theta_n)|
  double gibbs_fixed_point = 0;  // eta K°_{2n+1} = eta and mu K°_{2n+2} = mu
  double envelope_slack = 0;     // min eigenvalue gap in the uniform bounds (n >= 2), >= 0 when they hold
};

inline RiccatiCrosscheck riccati_crosscheck(const SinkhornTrajectory& traj) {
  const BridgeProblem& p = traj.problem;
  const BridgeConstants& c = traj.constants;
  const auto& st = traj.states;
  if (st.empty()) throw input_error("riccati_crosscheck: empty trajectory");
  RiccatiSpec even(c.varpi), odd(c.varpi_bar);
  const Index d = p.dim();
  Mat i = Mat::Identity(d, d);
  Mat chi_ref = c.chi;
  RiccatiCrosscheck out;
  out.envelope_slack = INFINITY;
  Mat sbih = p.mu().cov().inv_sqrt(), sih = p.eta().cov().inv_sqrt();
  for (std::size_t k = 0; k < st.size(); ++k) {
    const SinkhornState& s = st[k];
    if (k >= 2) {
      const RiccatiSpec& spec = (k % 2 == 0) ? even : odd;
      out.ricc_even = k % 2 == 0 ? std::max(out.ricc_even, op_norm(s.upsilon.mat() - ricc_map(spec, st[k - 2].upsilon.mat()).mat()))
                                 : out.ricc_even;
      out.ricc_odd = k % 2 == 1 ? std::max(out.ricc_odd, op_norm(s.upsilon.mat() - ricc_map(spec, st[k - 2].upsilon.mat()).mat()))
                                : out.ricc_odd;
    }
    out.bayes_vs_riccati = std::max(out.bayes_vs_riccati, detail::rel_diff(s.theta.tau().mat(), s.tau_bayes.mat()));
    const GaussianDist& src = k % 2 == 0 ? p.eta() : p.mu();
    PushforwardMoments h = pushforward(src, s.theta);
    out.marginal_pinning = std::max({out.marginal_pinning, detail::rel_diff(h.a, s.m),
                                     detail::rel_diff(h.b.mat(), s.sigma.mat())});
    if (k % 2 == 0) {
      out.gain_identity = std::max(out.gain_identity,
                                   detail::rel_diff(s.theta.tau().mat().llt().solve(s.theta.beta()), chi_ref));
    }
    if (k >= 4) {
      // uniform bounds on tau_n^-1 in the rescaled frame
      const RiccatiSpec& spec = (k % 2 == 0) ? even : odd;
      Mat w = k % 2 == 0 ? sbih : sih;
      Mat ti = s.theta.tau().inverse();
      Mat lo = w * (i + (spec.varpi.mat() + i).llt().solve(i)) * w;
      Mat hi = w * (i + spec.varpi.inverse()) * w;
      out.envelope_slack = std::min({out.envelope_slack, lambda_min_sym(ti - lo), lambda_min_sym(hi - ti)});
    }
  }
  for (const GibbsProducts& g : traj.gibbs) {
    const GaussianDist& fixed = g.n % 2 == 1 ? p.eta() : p.mu();
    Vec mm = g.alpha_circ + g.beta_circ * fixed.mean();
    Mat cc = g.beta_circ * fixed.cov().mat() * g.beta_circ.transpose() + g.tau_circ.mat();
    out.gibbs_fixed_point = std::max({out.gibbs_fixed_point, detail::rel_diff(mm, fixed.mean()),
                                      detail::rel_diff(cc, fixed.cov().mat())});
  }
  if (!std::isfinite(out.envelope_slack)) out.envelope_slack = 0;
  return out;
}

inline std::vector<GibbsProducts> gibbs_products(const SinkhornTrajectory& traj) {
  const auto& st = traj.states;
  std::vector<GibbsProducts> out;
  const Index d = traj.problem.dim();
  Mat cum_even = Mat::Identity(d, d), cum_odd = Mat::Identity(d, d);
  for (std::size_t k = 1; k < st.size(); ++k) {
    const KernelParams& a = st[k - 1].theta;
    const KernelParams& b = st[k].theta;
    Mat bc = b.beta() * a.beta();
    Vec ac = b.alpha() + b.beta() * a.alpha();
    SpdMatrix tc(b.beta() * a.tau().mat() * b.beta().transpose() + b.tau().mat());
    Mat cum;
    if (k % 2 == 0) {
      cum_even = bc * cum_even;
      cum = cum_even;
    } else {
      if (k >= 3) cum_odd = bc * cum_odd;
      cum = cum_odd;
    }
    out.push_back({static_cast<int>(k), bc, ac, tc, cum});
  }
  return out;
}

// U_2n, V_2n from the series of marginal log-ratios, plus the gain-product form of the remainders
inline std::vector<PotentialPair> potential_flow(const SinkhornTrajectory& traj) {
  const BridgeProblem& p = traj.problem;
  const auto& st = traj.states;
  const Vec& m = p.eta().mean();
  const Vec& mb = p.mu().mean();
  const KernelParams& th = p.theta();
  Mat ti = th.tau().inverse();
  Vec m0 = p.m0();
  LimitPotentials lim = limit_potentials(p, traj.bridge);
  QuadraticPotential log_eta = QuadraticPotential::log_density(p.eta(), m);
  QuadraticPotential log_mu = QuadraticPotential::log_density(p.mu(), mb);

  std::vector<PotentialPair> out;
  QuadraticPotential V = QuadraticPotential::zero(mb);
  QuadraticPotential U = -log_eta;
  for (int n = 0; 2 * n + 1 < static_cast<int>(st.size()); ++n) {
    if (n > 0) {
      const SinkhornState& e = st[2 * n - 2];
      const SinkhornState& o = st[2 * n - 1];
      V = V + QuadraticPotential::log_density(GaussianDist(e.m, e.sigma), mb) - log_mu;
      U = U + QuadraticPotential::log_density(GaussianDist(o.m, o.sigma), m) - log_eta;
    }
    PotentialPair pp;
    pp.n = n;
    pp.U = U;
    pp.V = V;
    pp.eps_U = U - lim.U;
    pp.eps_V = V - lim.V;
    pp.mu_V = V.expectation(p.mu());
    pp.eta_U = U.expectation(p.eta());
    const SpdMatrix& t2n = st[2 * n].theta.tau();
    const SpdMatrix& t2n1 = st[2 * n + 1].theta.tau();
    Mat hv = t2n.inverse() - traj.bridge.params.tau().inverse();
    Mat hu = t2n1.inverse() - traj.bridge.dual_params.tau().inverse();
    if (n == 0) {
      pp.eps_V_closed = pp.eps_V;
      pp.eps_U_closed = pp.eps_U;
    } else {
      // beta°_{2n-1,1} sits in gibbs[2n-2]
      const Mat& odd_cum = traj.gibbs[2 * n - 2].cumulative;
      const KernelParams& t1 = st[1].theta;
      Vec gv = ti * th.beta() * odd_cum * t1.beta() * (mb - m0);
      Vec gu = t1.tau().mat().llt().solve(t1.beta() * st[2 * n].theta.beta() * odd_cum * (m - st[1].m));
      pp.eps_V_closed = {mb, pp.eps_V.value, gv, SymMatrix(hv)};
      pp.eps_U_closed = {m, pp.eps_U.value, gu, SymMatrix(hu)};
    }
    out.push_back(pp);
  }
  return out;
}

struct SandwichReport {
  double min_slack = 0;  // >= 0 when every bound holds
  int worst_n = 0;
  bool integrable = true;
};

// -c_mu + mu(V) <= U_2n - U <= log Q(e^c_eta) and -c_eta <= V_2n - V <= -mu(V) + log R(e^c_mu), n >= 1
inline SandwichReport potential_sandwich(const SinkhornTrajectory& traj) {
  const BridgeProblem& p = traj.problem;
  IntegratedCosts ic = integrated_costs(p);
  SandwichReport out;
  if (!ic.logQ || !ic.logR) {
    out.integrable = false;
    return out;
  }
  QuadraticPotential U = -QuadraticPotential::log_density(p.eta(), p.eta().mean());
  QuadraticPotential V = -QuadraticPotential::log_density(p.mu(), p.mu().mean());
  double muV = p.mu().entropy();
  out.min_slack = INFINITY;
  for (const PotentialPair& pp : traj.potentials) {
    if (pp.n < 1) continue;
    QuadraticPotential du = pp.U - U, dv = pp.V - V;
    QuadraticPotential gaps[4] = {du + ic.c_mu, *ic.logQ - du, dv + ic.c_eta, *ic.logR - dv};
    gaps[0].value -= muV;
    gaps[3].value -= muV;
    for (const QuadraticPotential& g : gaps) {
      std::optional<double> inf = quadratic_infimum(g);
      double v = inf ? *inf : -INFINITY;
      if (v < out.min_slack) {
        out.min_slack = v;
        out.worst_n = pp.n;
      }
    }
  }
  if (!std::isfinite(out.min_slack) && out.min_slack > 0) out.min_slack = 0;
  return out;
}

// E|G|^p^(1/p) for G standard Gaussian in R^d
inline double gaussian_norm_moment(Index d, double p) {
  if (!(p >= 1.0)) throw input_error("gaussian_norm_moment: p must be >= 1");
  double h = 0.5 * static_cast<double>(d);
  return std::sqrt(2.0) * std::exp((std::lgamma(h + 0.5 * p) - std::lgamma(h)) / p);
}

struct ErrorRow {
  int n = 0;
  int parity = 0;
  double err_mean = 0;      // |m_n - target mean|
  double err_cov = 0;       // |sigma_n - target cov|
  double err_tau = 0;       // |tau_n - bridge tau|
  double err_tau_sqrt = 0;  // |tau_n^1/2 - bridge tau^1/2|
  double err_beta = 0;      // |beta_n - bridge gain|
  double ent_to_bridge = 0;
  double tv_bound = 0;      // Pinsker
  double wp_bound = 0;      // W_p upper bound, p = 2
  double bound_value = 0;   // c rho^k |tau_start - bridge tau|
};

// even rows compare against the forward bridge, odd rows against the backward one
inline std::vector<ErrorRow> error_report(const SinkhornTrajectory& traj, double p_moment = 2.0) {
  const BridgeProblem& p = traj.problem;
  const auto& st = traj.states;
  const Index d = p.dim();
  double ed = gaussian_norm_moment(d, p_moment);
  std::vector<ErrorRow> out;
  double start_even = op_norm(st[0].theta.tau().mat() - traj.bridge.params.tau().mat());
  double start_odd = st.size() > 1 ? op_norm(st[1].theta.tau().mat() - traj.bridge.dual_params.tau().mat()) : 0.0;
  for (const SinkhornState& s : st) {
    bool even = s.n % 2 == 0;
    const KernelParams& ref = even ? traj.bridge.params : traj.bridge.dual_params;
    const GaussianDist& src = even ? p.eta() : p.mu();
    const GaussianDist& tgt = even ? p.mu() : p.eta();
    ErrorRow r;
    r.n = s.n;
    r.parity = s.n % 2;
    r.err_mean = (s.m - tgt.mean()).norm();
    r.err_cov = op_norm(s.sigma.mat() - tgt.cov().mat());
    r.err_tau = op_norm(s.theta.tau().mat() - ref.tau().mat());
    Mat dsq = s.theta.tau().sqrt().mat() - ref.tau().sqrt().mat();
    r.err_tau_sqrt = op_norm(dsq);
    r.err_beta = op_norm(s.theta.beta() - ref.beta());
    r.ent_to_bridge = kernel_rel_entropy(s.theta, ref, src.mean(), src.cov());
    r.tv_bound = std::sqrt(0.5 * r.ent_to_bridge);
    r.wp_bound = r.err_mean + ed * (((s.theta.beta() - ref.beta()) * src.cov().sqrt().mat()).norm() + dsq.norm());
    int k = even ? s.n / 2 : (s.n - 1) / 2;
    r.bound_value = even ? traj.rates.c_theta * std::pow(traj.rates.rho, k) * start_even
                         : traj.rates.c_theta_bar * std::pow(traj.rates.rho_bar, k) * start_odd;
    out.push_back(r);
  }
  return out;
}

struct SlopeFit {
  double slope = 0;
  int points = 0;
};

// least-squares slope of log(err) against the index, over errors in [lo, hi]
inline std::optional<SlopeFit> fit_log_slope(const std::vector<double>& errs, double lo = 1e-12, double hi = 1e-2) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t k = 0; k < errs.size(); ++k) {
    double e = errs[k];
    if (!(e >= lo && e <= hi)) continue;
    double x = static_cast<double>(k), y = std::log(e);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
    ++n;
  }
  if (n < 2) return std::nullopt;
  double den = n * sxx - sx * sx;
  return SlopeFit{(n * sxy - sx * sy) / den, n};
}

struct BudgetRow {
  int n = 0;
  double ent_mu_pi = 0;   // Ent(mu | pi_2n)
  double ent_eta_pi = 0;  // Ent(eta | pi_{2n+1})
  double ent_bridge = 0;  // Ent(P_S | P_{theta_2n})
  double one_over_n_bound = 0;
};

struct EntropyBudget {
  std::vector<BudgetRow> rows;
  double ent_bridge_initial = 0;       // Ent(P_S | P_theta)
  double telescoping_max_residual = 0;
  double one_over_n_worst_slack = 0;   // min over n >= 1 of bound - Ent(mu|pi_2n)
  int burn_in = 0;
  double rate = 0;                     // max(rho, rho_bar)
  double max_ratio = 0;                // max Ent(P_S|P_2n+2) / Ent(P_S|P_2n) for n >= burn_in, above the floor
  int ratio_count = 0;
  double envelope = 0;                 // max Ent(P_S|P_2n) / (Ent(P_S|P_2n0) rate^(n - n0)) for n >= burn_in
  double fitted_ratio = 0;             // exp of the least-squares slope of log Ent(P_S|P_2n), n >= burn_in
  int fit_points = 0;
};

inline EntropyBudget entropy_budget(const SinkhornTrajectory& traj) {
  const BridgeProblem& p = traj.problem;
  const auto& st = traj.states;
  const KernelParams& S = traj.bridge.params;
  const Vec& m = p.eta().mean();
  const SpdMatrix& s = p.eta().cov();
  EntropyBudget out;
  out.ent_bridge_initial = kernel_rel_entropy(S, p.theta(), m, s);
  out.rate = std::max(traj.rates.rho, traj.rates.rho_bar);
  out.one_over_n_worst_slack = INFINITY;
  for (int n = 0; 2 * n + 1 < static_cast<int>(st.size()); ++n) {
    BudgetRow r;
    r.n = n;
    r.ent_mu_pi = gaussian_kl(p.mu(), GaussianDist(st[2 * n].m, st[2 * n].sigma));
    r.ent_eta_pi = gaussian_kl(p.eta(), GaussianDist(st[2 * n + 1].m, st[2 * n + 1].sigma));
    r.ent_bridge = kernel_rel_entropy(S, st[2 * n].theta, m, s);
    r.one_over_n_bound = n > 0 ? out.ent_bridge_initial / n : INFINITY;
    if (n > 0) out.one_over_n_worst_slack = std::min(out.one_over_n_worst_slack, r.one_over_n_bound - r.ent_mu_pi);
    out.rows.push_back(r);
  }
  const auto& rows = out.rows;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    double acc = 0;
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      acc += rows[b - 1].ent_mu_pi + rows[b - 1].ent_eta_pi;
      double lhs = rows[a].ent_bridge - rows[b].ent_bridge;
      out.telescoping_max_residual =
          std::max(out.telescoping_max_residual, std::abs(lhs - acc) / std::max(1.0, rows[a].ent_bridge));
    }
  }
  // burn-in: rho^n0 |tau_0 - varsigma|_F <= min(1, 1 / (2 c |varsigma^-1|_F))
  double t0 = (p.theta().tau().mat() - S.tau().mat()).norm();
  double lim = std::min(1.0, 1.0 / (2.0 * traj.rates.c_theta * S.tau().inverse().norm()));
  int n0 = 0;
  while (n0 < 10000 && std::pow(traj.rates.rho, n0) * t0 > lim) ++n0;
  out.burn_in = n0;
  for (std::size_t k = static_cast<std::size_t>(n0); k + 1 < rows.size(); ++k) {
    if (rows[k + 1].ent_bridge < 1e-13) break;
    out.max_ratio = std::max(out.max_ratio, rows[k + 1].ent_bridge / rows[k].ent_bridge);
    ++out.ratio_count;
  }
  std::vector<double> tail(rows.size(), NAN);
  for (std::size_t k = static_cast<std::size_t>(n0); k < rows.size() && rows[k].ent_bridge >= 1e-13; ++k) {
    tail[k] = rows[k].ent_bridge;
    out.envelope = std::max(out.envelope, tail[k] / (rows[n0].ent_bridge * std::pow(out.rate, double(k) - n0)));
  }
  if (auto f = fit_log_slope(tail, 1e-13, INFINITY)) {
    out.fitted_ratio = std::exp(f->slope);
    out.fit_points = f->points;
  }
  if (!std::isfinite(out.one_over_n_worst_slack)) out.one_over_n_worst_slack = 0;
  return out;
}

}  // namespace gsb

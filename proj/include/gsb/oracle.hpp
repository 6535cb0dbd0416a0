#pragma once

#include "gsb/bridge.hpp"
#include "gsb/rng.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace gsb {

struct GridMeasure {
  double lo = 0, hi = 0;
  int n_points = 0;
  Vec nodes;
  Vec weights;     // sums to 1
  double truncated = 0;  // Gaussian mass outside [lo, hi]
  double step() const { return (hi - lo) / (n_points - 1); }
};

// midpoint weights of a 1-D Gaussian on an equispaced grid, renormalized
inline GridMeasure grid_measure(double mean, double var, double lo, double hi, int n) {
  if (n < 3) throw input_error("grid_measure: need at least 3 points");
  if (!(hi > lo)) throw input_error("grid_measure: empty interval");
  if (!(var > 0)) throw input_error("grid_measure: variance must be positive");
  GridMeasure g;
  g.lo = lo, g.hi = hi, g.n_points = n;
  g.nodes = Vec::LinSpaced(n, lo, hi);
  double s = std::sqrt(2.0 * var);
  g.truncated = 0.5 * std::erfc((hi - mean) / s) + 0.5 * std::erfc((mean - lo) / s);
  if (g.truncated > 1e-8)
    throw input_error("grid_measure: grid [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      "] truncates Gaussian mass " + std::to_string(g.truncated));
  g.weights = (-(g.nodes.array() - mean).square() / (2.0 * var)).exp();
  g.weights /= g.weights.sum();
  return g;
}

struct GridOptions {
  double lo = -8, hi = 8;
  int points = 1201;
  int iters = 5000;
  double tol = 1e-12;
};

struct GridCoupling {
  GridMeasure x, y;
  Mat mass;          // mass(i, j) at (x_i, y_j)
  Vec log_a, log_b;  // row/column scalings of q(x_i, y_j) eta_i mu_j
  Vec mean;          // (E X, E Y)
  Mat cov;           // 2x2
  double objective = 0;  // sum P log(P / (eta_i q_ij h_y)), approximates the entropic cost
  double mismatch = 0;   // L1 row-marginal error after the last sweep
  int iterations = 0;
  bool converged = false;
  double sandwich_slack = 0;  // min slack of the discrete potential bounds over all sweeps, >= 0 when they hold
};

// discrete IPF on the grid; the reference coupling is P_0(i, j) = eta_i q_ij mu_j / sum_k q_ik mu_k
inline GridCoupling grid_ipf(const BridgeProblem& p, const GridOptions& opt = {}) {
  if (p.dim() != 1) throw input_error("grid_ipf: only d = 1 is supported");
  if (opt.iters < 1) throw input_error("grid_ipf: iters must be >= 1");
  const KernelParams& th = p.theta();
  GridCoupling out;
  out.x = grid_measure(p.eta().mean()(0), p.eta().cov().mat()(0, 0), opt.lo, opt.hi, opt.points);
  out.y = grid_measure(p.mu().mean()(0), p.mu().cov().mat()(0, 0), opt.lo, opt.hi, opt.points);
  const int n = opt.points;
  const Vec& xs = out.x.nodes;
  const Vec& ys = out.y.nodes;
  const Vec& eta = out.x.weights;
  const Vec& mu = out.y.weights;
  double a0 = th.alpha()(0), b0 = th.beta()(0, 0), t0 = th.tau().mat()(0, 0);
  double hy = out.y.step();

  Mat logq(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double r = ys(j) - a0 - b0 * xs(i);
      logq(i, j) = -0.5 * r * r / t0 - 0.5 * (kLog2Pi + std::log(t0));
    }
  Mat q = logq.array().exp();

  // the reference kernel k = q mu / (q mu)_i, as a density in y; the bounds are stated for it
  Vec qmu = q * mu;
  Mat logk = logq;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) logk(i, j) += std::log(mu(j)) - std::log(qmu(i)) - std::log(hy);
  Vec c_eta = -(logk.transpose() * eta);  // in y
  Vec c_mu = -(logk * mu);                // in x
  Vec log_Q(n), log_R(n);
  for (int i = 0; i < n; ++i) {
    Eigen::ArrayXd e = logk.row(i).transpose().array() + c_eta.array() + mu.array().log();
    double mx = e.maxCoeff();
    log_Q(i) = mx + std::log((e - mx).exp().sum());
  }
  for (int j = 0; j < n; ++j) {
    Eigen::ArrayXd e = logk.col(j).array() + c_mu.array() + eta.array().log();
    double mx = e.maxCoeff();
    log_R(j) = mx + std::log((e - mx).exp().sum());
  }
  // V = -log of the mu density, mu(V) its discrete entropy
  Vec log_mu_dens = (mu / hy).array().log();
  double mu_V = -mu.dot(log_mu_dens);

  // scalings act on K = diag(eta) q diag(mu)
  Mat k = eta.asDiagonal() * q * mu.asDiagonal();
  Vec a = qmu.cwiseInverse();
  Vec log_a0 = a.array().log();
  Vec b = Vec::Ones(n);
  double slack = INFINITY;
  for (int it = 1; it <= opt.iters; ++it) {
    Vec kta = k.transpose() * a;
    for (int j = 0; j < n; ++j) b(j) = kta(j) > 0 ? mu(j) / kta(j) : 0.0;
    Vec kb = k * b;
    for (int i = 0; i < n; ++i) a(i) = kb(i) > 0 ? eta(i) / kb(i) : 0.0;
    // a-update makes rows exact; measure the column error it reintroduces
    Vec col = k.transpose() * a;
    out.mismatch = (col.cwiseProduct(b) - mu).lpNorm<1>();
    out.iterations = it;
    // -c_mu + mu(V) <= U_2n - U <= log Q(e^c_eta) and -c_eta <= V_2n - V <= -mu(V) + log R(e^c_mu)
    for (int i = 0; i < n; ++i) {
      if (!(a(i) > 0)) continue;
      double du = log_a0(i) - std::log(a(i));
      slack = std::min({slack, du + c_mu(i) - mu_V, log_Q(i) - du});
    }
    for (int j = 0; j < n; ++j) {
      if (!(b(j) > 0)) continue;
      double dv = log_mu_dens(j) - std::log(b(j));
      slack = std::min({slack, dv + c_eta(j), log_R(j) - dv - mu_V});
    }
    if (out.mismatch <= opt.tol) {
      out.converged = true;
      break;
    }
  }
  out.sandwich_slack = slack;
  out.mass = a.asDiagonal() * k * b.asDiagonal();
  out.log_a = a.array().log();
  out.log_b = b.array().log();

  double total = out.mass.sum();
  Vec px = out.mass.rowwise().sum(), py = out.mass.colwise().sum().transpose();
  out.mean = Vec(2);
  out.mean << px.dot(xs) / total, py.dot(ys) / total;
  Vec dx = xs.array() - out.mean(0), dy = ys.array() - out.mean(1);
  out.cov = Mat(2, 2);
  out.cov(0, 0) = px.dot(dx.cwiseProduct(dx)) / total;
  out.cov(1, 1) = py.dot(dy.cwiseProduct(dy)) / total;
  out.cov(0, 1) = out.cov(1, 0) = dx.dot(out.mass * dy) / total;

  double obj = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double m = out.mass(i, j);
      if (m > 0) obj += m * (std::log(m) - std::log(eta(i)) - logq(i, j) - std::log(hy));
    }
  out.objective = obj;
  return out;
}

struct SampleMoments {
  Vec mean;
  Mat cov;
};

// rows are samples; unbiased covariance
inline SampleMoments sample_moments(const Mat& samples) {
  if (samples.rows() < 2) throw input_error("sample_moments: need at least 2 samples");
  if (!samples.allFinite()) throw input_error("sample_moments: non-finite samples");
  Vec mean = samples.colwise().mean().transpose();
  Mat c = samples.rowwise() - mean.transpose();
  return {mean, sym(c.transpose() * c / static_cast<double>(samples.rows() - 1))};
}

struct McReport {
  Index n_samples = 0;
  std::uint64_t seed = 0;
  SampleMoments sample;
  Vec target_mean;
  Mat target_cov;
  Vec mean_se;  // sqrt(cov_ii / N)
  Mat cov_se;   // sqrt((cov_ii cov_jj + cov_ij^2) / N)
  double max_mean_z = 0;
  double max_cov_z = 0;
  bool within(double k) const { return max_mean_z <= k && max_cov_z <= k; }
};

// X ~ source, Y = alpha + beta X + tau^1/2 xi; compares Y's sample moments with `target`
inline McReport mc_pushforward(const GaussianDist& source, const RelaxedKernelParams& kernel, const Vec& target_mean,
                               const Mat& target_cov, Index n_samples, std::uint64_t seed) {
  if (n_samples < 100) throw input_error("mc_pushforward: need at least 100 samples");
  require_same_dim(source.dim(), kernel.dim(), "mc_pushforward");
  const Index d = source.dim();
  Rng rng(seed);
  Mat sroot = source.cov().sqrt().mat();
  Mat troot = Rng::psd_sqrt(kernel.tau());
  Mat y(n_samples, d);
  for (Index k = 0; k < n_samples; ++k) {
    Vec x = source.mean() + sroot * rng.normal_vec(d);
    y.row(k) = (kernel.alpha() + kernel.beta() * x + troot * rng.normal_vec(d)).transpose();
  }
  McReport r;
  r.n_samples = n_samples;
  r.seed = seed;
  r.sample = sample_moments(y);
  r.target_mean = target_mean;
  r.target_cov = target_cov;
  double nn = static_cast<double>(n_samples);
  r.mean_se = (target_cov.diagonal() / nn).cwiseSqrt();
  r.cov_se = Mat(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) {
      const Mat& c = target_cov;
      r.cov_se(i, j) = std::sqrt((c(i, i) * c(j, j) + c(i, j) * c(i, j)) / nn);
    }
  for (Index i = 0; i < d; ++i) {
    if (r.mean_se(i) > 0) r.max_mean_z = std::max(r.max_mean_z, std::abs(r.sample.mean(i) - target_mean(i)) / r.mean_se(i));
    for (Index j = 0; j < d; ++j)
      if (r.cov_se(i, j) > 0)
        r.max_cov_z = std::max(r.max_cov_z, std::abs(r.sample.cov(i, j) - target_cov(i, j)) / r.cov_se(i, j));
  }
  return r;
}

// bridge sampler: X ~ eta pushed through the bridge kernel, compared with mu
inline McReport mc_pushforward(const BridgeProblem& p, const BridgeSolution& sol, Index n_samples,
                               std::uint64_t seed) {
  return mc_pushforward(p.eta(), sol.params.relaxed(), p.mu().mean(), p.mu().cov().mat(), n_samples, seed);
}

}  // namespace gsb

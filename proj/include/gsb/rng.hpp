#pragma once

#include "gsb/spd.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace gsb {

// mt19937_64 with a fixed Box-Muller transform, so streams match across standard libraries
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // in (0, 1)
  double uniform() {
    double u;
    do u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    while (u == 0.0);
    return u;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double r = std::sqrt(-2.0 * std::log(uniform()));
    double a = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Vec normal_vec(Index d) {
    Vec z(d);
    for (Index i = 0; i < d; ++i) z(i) = normal();
    return z;
  }

  // rows are draws from N(mean, cov); cov may be singular
  Mat gaussian_rows(const Vec& mean, const Mat& cov, Index n) {
    Mat root = psd_sqrt(cov);
    Mat out(n, mean.size());
    for (Index k = 0; k < n; ++k) out.row(k) = (mean + root * normal_vec(mean.size())).transpose();
    return out;
  }

  static Mat psd_sqrt(const Mat& a) {
    Eigen::SelfAdjointEigenSolver<Mat> es(sym(a));
    Vec l = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * l.asDiagonal() * es.eigenvectors().transpose();
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gsb

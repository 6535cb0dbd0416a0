#include "support.hpp"

#include <gtest/gtest.h>

using namespace gsb;
using namespace gsb::testing;

namespace {
const double kGolden = (std::sqrt(5.0) - 1) / 2;
RiccatiSpec spec1(double w) { return RiccatiSpec(SpdMatrix::scalar(w)); }
}  // namespace

TEST(RiccMap, Examples) {
  RiccatiSpec s = spec1(1);
  EXPECT_NEAR(ricc_map(s, scalar(0)).mat()(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(ricc_map(s, scalar(0.5)).mat()(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(ricc_map(s, scalar(kGolden)).mat()(0, 0), kGolden, 1e-15);
  EXPECT_THROW(ricc_map(s, scalar(-0.1)), input_error);
}

TEST(RiccMap, BoundsAndMonotone) {
  Rng rng(31);
  for (int k = 0; k < 50; ++k) {
    Index d = 1 + k % 5;
    RiccatiSpec s(random_spd(rng, d, 0.05, 20));
    Mat i = Mat::Identity(d, d);
    SpdMatrix v = random_spd(rng, d, 0.01, 10);
    Mat p = random_spd(rng, d, 0.01, 3).mat();
    Mat r1 = ricc_map(s, v.mat()).mat(), r2 = ricc_map(s, v.mat() + p).mat();
    Mat lower = (i + s.varpi.inverse()).inverse();
    EXPECT_TRUE(loewner_leq(lower, r1, 1e-12));
    EXPECT_TRUE(loewner_leq(r1, i, 1e-12));
    EXPECT_TRUE(loewner_leq(r1, r2, 1e-12));
    // (I + (w+v)^-1)^-1 computed directly
    Mat direct = (i + (s.varpi.mat() + v.mat()).inverse()).inverse();
    EXPECT_LE(op_norm(r1 - direct), 1e-12);
  }
}

TEST(FixedPoints, Examples) {
  RiccatiFixedPoints fp = fixed_points(spec1(1));
  EXPECT_NEAR(fp.r.mat()(0, 0), kGolden, 1e-15);
  EXPECT_NEAR(fp.u.mat()(0, 0), 1 + kGolden, 1e-15);
  fp = fixed_points(RiccatiSpec(SpdMatrix::diagonal(vec({1, 4}))));
  EXPECT_NEAR(fp.r.mat()(0, 0), kGolden, 1e-15);
  EXPECT_NEAR(fp.r.mat()(1, 1), -2 + 2 * std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(fp.r.mat()(0, 1), 0, 1e-15);
}

TEST(FixedPoints, ResidualsAndSandwich) {
  Rng rng(32);
  for (int k = 0; k < 100; ++k) {
    Index d = 1 + k % 8;
    RiccatiSpec s(random_spd(rng, d, 0.01, 100));
    RiccatiFixedPoints fp = fixed_points(s);
    Mat i = Mat::Identity(d, d);
    const Mat& r = fp.r.mat();
    EXPECT_LE(op_norm(ricc_map(s, r).mat() - r), 1e-11);
    EXPECT_LE(op_norm(r + r * s.varpi.inverse() * r - i), 1e-10);
    EXPECT_LE(op_norm(ricc_minus(s, fp.u.mat()).mat() - fp.u.mat()), 1e-10 * std::max(1.0, fp.u.lambda_max()));
    EXPECT_LE(op_norm(fp.u.mat() - r - s.varpi.mat()), 1e-12 * std::max(1.0, s.varpi.lambda_max()));
    EXPECT_LE(op_norm(s.varpi.mat() * r - r * s.varpi.mat()), 1e-10 * s.varpi.lambda_max());
    EXPECT_TRUE(loewner_leq((i + s.varpi.inverse()).inverse(), r, 1e-12));
    EXPECT_TRUE(loewner_leq(r, i, 1e-12));
    // limit of the recursion from 0
    Mat it = ricc_iterate(s, Mat::Zero(d, d), 400);
    EXPECT_LE(op_norm(it - r), 1e-9);
  }
}

TEST(Floquet, Examples) {
  RiccatiSpec s = spec1(1);
  FloquetResult f = floquet_semigroup(s, scalar(1), 2);
  EXPECT_NEAR(f.e_product(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(f.e_floquet(0, 0), 0.2, 1e-12);
  EXPECT_NEAR(f.data.u_inf.mat()(0, 0), 1.618034, 1e-6);

  RiccatiFixedPoints fp = fixed_points(s);
  f = floquet_semigroup(s, fp.u.mat(), 5);
  EXPECT_NEAR(f.e_product(0, 0), std::pow(1 + fp.u.mat()(0, 0), -5), 1e-14);
  f = floquet_semigroup(s, scalar(3), 0);
  EXPECT_NEAR(f.e_product(0, 0), 1, 0);
  EXPECT_NEAR(f.e_floquet(0, 0), 1, 1e-15);
}

TEST(Floquet, ProductEqualsClosedFormAndBound) {
  Rng rng(33);
  for (int k = 0; k < 20; ++k) {
    Index d = 1 + k % 4;
    RiccatiSpec s(random_spd(rng, d, 0.2, 5));
    Mat u0 = random_spd(rng, d, 0.01, 5).mat();
    for (int n : {1, 2, 5, 10, 30, 60}) {
      FloquetResult f = floquet_semigroup(s, u0, n);
      EXPECT_LE(f.agreement, 1e-9) << "n=" << n;
      EXPECT_LE(op_norm(f.e_product), f.bound * (1 + 1e-12));
      // G_n below its limit
      EXPECT_TRUE(loewner_leq(f.data.g_n, f.data.g_limit, 1e-12));
      EXPECT_GE(f.correction_cond, 1.0);
    }
  }
}

TEST(ContractionBound, Examples) {
  ContractionBound c = contraction_bound(spec1(1));
  EXPECT_NEAR(c.rate, 1 / ((1 + 1.618034) * (1 + 1.618034)), 1e-6);
  EXPECT_NEAR(c.rate, 0.145898, 1e-6);
  c = contraction_bound(spec1(100));
  double u = 50 + std::sqrt(100 + 2500.0);
  EXPECT_NEAR(u, 100.99, 0.01);
  EXPECT_NEAR(c.rate, 1 / ((1 + u) * (1 + u)), 1e-15);
  EXPECT_NEAR(c.rate, 9.6e-5, 1e-6);
}

TEST(ContractionBound, HoldsOnRandomPairs) {
  Rng rng(34);
  for (int k = 0; k < 50; ++k) {
    RiccatiSpec s(random_spd(rng, 5, 0.1, 10));
    ContractionBound c = contraction_bound(s);
    ASSERT_GT(c.rate, 0);
    ASSERT_LT(c.rate, 1);
    Mat v = random_spd(rng, 5, 0.01, 5).mat(), w = random_spd(rng, 5, 0.01, 5).mat();
    double d0 = op_norm(v - w);
    Mat a = v, b = w;
    for (int n = 0; n < 25; ++n) {
      a = ricc_map(s, a).mat();
      b = ricc_map(s, b).mat();
      double lhs = op_norm(a - b);
      if (lhs < 1e-14) break;
      EXPECT_LE(lhs, c.phi * c.phi * std::pow(c.rate, n) * d0 * (1 + 1e-9)) << "n=" << n;
    }
  }
}

TEST(ContractionBound, HoldsForSmallVarpi) {
  Rng rng(36);
  for (double w : {0.01, 0.1, 0.5, 2.0}) {
    RiccatiSpec s = spec1(w);
    ContractionBound c = contraction_bound(s);
    for (int k = 0; k < 10; ++k) {
      double a = 5 * rng.uniform(), b = 5 * rng.uniform();
      double d0 = std::abs(a - b);
      Mat va = scalar(a), vb = scalar(b);
      for (int n = 0; n < 200; ++n) {
        va = ricc_map(s, va).mat();
        vb = ricc_map(s, vb).mat();
        double lhs = std::abs(va(0, 0) - vb(0, 0));
        if (lhs < 1e-14) break;
        EXPECT_LE(lhs, c.phi * c.phi * std::pow(c.rate, n) * d0 * (1 + 1e-9)) << "w=" << w << " n=" << n;
      }
    }
  }
}

TEST(ClosedForm1d, Examples) {
  EXPECT_NEAR(closed_form_1d(1, 1, 1), 2.0 / 3, 1e-15);
  EXPECT_NEAR(closed_form_1d(1, 0.37, 0), 0.37, 1e-15);
  EXPECT_NEAR(closed_form_1d(1, 1, 50), kGolden, 1e-12);
  EXPECT_THROW(closed_form_1d(0, 1, 1), input_error);
  EXPECT_THROW(closed_form_1d(1, -1, 1), input_error);
}

TEST(ClosedForm1d, MatchesIterationAndRateIsSharp) {
  Rng rng(35);
  for (int k = 0; k < 20; ++k) {
    double w = std::exp(-2 + 4 * rng.uniform()), v0 = 3 * rng.uniform();
    RiccatiSpec s = spec1(w);
    // two half steps v -> (1 + (w + v)^-1)^-1 per n
    double v = v0;
    for (int n = 1; n <= 50; ++n) {
      v = 1.0 / (1.0 + 1.0 / (w + v));
      EXPECT_NEAR(closed_form_1d(w, v0, n), v, 1e-12);
    }
    EXPECT_NEAR(ricc_iterate(s, scalar(v0), 7)(0, 0), closed_form_1d(w, v0, 7), 1e-12);
  }
  // |v_n - r| rho^-n tends to a positive constant
  double w = 0.7, v0 = 2.0;
  ContractionBound c = contraction_bound(spec1(w));
  double r = fixed_points(spec1(w)).r.mat()(0, 0);
  double prev = 0;
  for (int n = 5; n <= 12; ++n) {
    double q = std::abs(closed_form_1d(w, v0, n) - r) / std::pow(c.rate, n);
    if (n > 5) {
      EXPECT_NEAR(q / prev, 1.0, 2e-2);
    }
    prev = q;
  }
  EXPECT_GT(prev, 0.0);
}

TEST(Envelopes, Examples) {
  Envelopes e = monotone_envelopes(spec1(1), 2);
  EXPECT_NEAR(e.lower(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(e.upper(0, 0), 2.0 / 3, 1e-15);
  e = monotone_envelopes(RiccatiSpec(SpdMatrix::identity(3)), 3);
  EXPECT_LE(op_norm(e.lower - 0.5 * Mat::Identity(3, 3)), 1e-15);
  EXPECT_LE(op_norm(e.upper - (2.0 / 3) * Mat::Identity(3, 3)), 1e-15);
  EXPECT_THROW(monotone_envelopes(spec1(1), 0), input_error);
}

TEST(Envelopes, FlowStaysInside) {
  Rng rng(36);
  for (int k = 0; k < 20; ++k) {
    Index d = 1 + k % 4;
    RiccatiSpec s(random_spd(rng, d, 0.05, 20));
    Mat v = k % 2 ? Mat(Mat::Zero(d, d)) : random_spd(rng, d, 0.01, 100).mat();
    for (int n = 1; n <= 40; ++n) {
      v = ricc_map(s, v).mat();
      Envelopes e = monotone_envelopes(s, n);
      EXPECT_TRUE(loewner_leq(e.lower, v, 1e-12)) << n;
      EXPECT_TRUE(loewner_leq(v, e.upper, 1e-12)) << n;
    }
  }
}

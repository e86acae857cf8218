#include <cmath>
#include <cstring>
#include <vector>

#include <gtest/gtest.h>

#include "mtrerank/optim/adam.hpp"
#include "mtrerank/optim/losses.hpp"
#include "mtrerank/rng.hpp"

using namespace mtrerank;
using namespace mtrerank::optim;

namespace {

Matrix<double> row(std::initializer_list<double> v) {
  Matrix<double> m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

}  // namespace

TEST(LabelSmoothedCe, ZeroEpsIsNll) {
  const auto lp = row({std::log(0.5), std::log(0.25), std::log(0.25)});
  const TokenIds ref{1};
  EXPECT_NEAR(label_smoothed_ce(lp, ref, 0.0), -std::log(0.25), 1e-15);
}

TEST(LabelSmoothedCe, UniformModelGivesLogV) {
  const double l = std::log(1.0 / 6.0);
  Matrix<double> lp = Matrix<double>::Constant(3, 6, l);
  const TokenIds ref{1, 4, 5};
  for (double eps : {0.0, 0.1, 0.5}) EXPECT_NEAR(label_smoothed_ce(lp, ref, eps), std::log(6.0), 1e-12);
}

TEST(LabelSmoothedCe, HandWorkedValue) {
  // -[0.9 * -0.2 + 0.025 * (-0.2 - 2 - 2 - 2)] = 0.335
  const auto lp = row({-0.2, -2.0, -2.0, -2.0});
  const TokenIds ref{0};
  EXPECT_NEAR(label_smoothed_ce(lp, ref, 0.1), 0.335, 1e-12);
}

TEST(LabelSmoothedCe, PadPositionsExcluded) {
  Matrix<double> lp(2, 3);
  lp << std::log(0.2), std::log(0.3), std::log(0.5), std::log(0.1), std::log(0.1), std::log(0.8);
  const TokenIds ref{0, 2};
  // Row 0 is PAD (id 0) and is skipped; row 1 smooths over ids 1 and 2.
  const double want = -(0.9 * std::log(0.8) + 0.05 * (std::log(0.1) + std::log(0.8)));
  EXPECT_NEAR(label_smoothed_ce(lp, ref, 0.1, TokenId{0}), want, 1e-12);
}

TEST(LabelSmoothedCe, MisalignedThrows) {
  const auto lp = row({-1.0, -1.0});
  const TokenIds ref{0, 1};
  EXPECT_THROW(label_smoothed_ce(lp, ref, 0.1), InvalidInput);
}

TEST(LabelSmoothedCe, LogitGradientMatchesFiniteDifference) {
  Rng rng(3);
  Matrix<double> logits(3, 5);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-2, 2);
  const TokenIds ref{4, 0, 2};
  auto loss = [&](const Matrix<double>& z) {
    Matrix<double> lp(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const double lse = std::log(z.row(r).array().exp().sum());
      lp.row(r) = z.row(r).array() - lse;
    }
    return lp;
  };
  const auto [value, grad] = label_smoothed_ce_with_grad<double>(loss(logits), ref, 0.1, TokenId{0});
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Matrix<double> up = logits, down = logits;
    up.data()[i] += 1e-6;
    down.data()[i] -= 1e-6;
    const double fd = (label_smoothed_ce(loss(up), ref, 0.1, TokenId{0}) -
                       label_smoothed_ce(loss(down), ref, 0.1, TokenId{0})) / 2e-6;
    EXPECT_NEAR(grad.data()[i], fd, 1e-7);
  }
}

TEST(KlRerankLoss, WorkedPoints) {
  EXPECT_NEAR(kl_rerank_loss(0.5, 0.5), 0.0, 1e-12);
  EXPECT_NEAR(kl_rerank_loss(1.0, 0.25), -std::log(0.25), 1e-12);
  EXPECT_NEAR(kl_rerank_loss(1.0, 0.25), 1.3863, 1e-4);
  const double want = std::log(2.0) + (0.8 * std::log(0.8) + 0.2 * std::log(0.2));
  EXPECT_NEAR(kl_rerank_loss(0.8, 0.5), want, 1e-12);
  EXPECT_NEAR(kl_rerank_loss(0.8, 0.5), 0.1927, 1e-4);
}

TEST(KlRerankLoss, NonNegativeOnGridAndZeroOnDiagonal) {
  for (int i = 0; i <= 9; ++i) {
    for (int j = 0; j <= 9; ++j) {
      const double p = i / 9.0;
      const double pr = 0.005 + 0.99 * j / 9.0;
      EXPECT_GE(kl_rerank_loss(p, pr), 0.0) << p << " " << pr;
    }
  }
  for (double p : {0.01, 0.3, 0.77, 0.99}) EXPECT_NEAR(kl_rerank_loss(p, p), 0.0, 1e-15);
}

TEST(KlRerankLoss, ClampHandlesExtremes) {
  EXPECT_TRUE(std::isfinite(kl_rerank_loss(1.0, 0.0)));
  EXPECT_TRUE(std::isfinite(kl_rerank_loss(0.0, 1.0)));
  EXPECT_EQ(kl_rerank_loss(0.0, 0.0), kl_rerank_loss(0.0, kProbClamp));
}

TEST(KlRerankLoss, RejectsTargetOutsideUnitInterval) {
  EXPECT_THROW(kl_rerank_loss(1.5, 0.5), InvalidInput);
  EXPECT_THROW(kl_rerank_loss(-0.1, 0.5), InvalidInput);
}

TEST(KlRerankLoss, GradientMatchesFiniteDifference) {
  Rng rng(11);
  for (int k = 0; k < 20; ++k) {
    const double p = rng.uniform();
    const double pr = rng.uniform(0.05, 0.95);
    const double h = 1e-6;
    const double fd = (kl_rerank_loss(p, pr + h) - kl_rerank_loss(p, pr - h)) / (2 * h);
    const double an = kl_rerank_grad(p, pr);
    EXPECT_LT(std::abs(an - fd) / std::max(std::abs(an), 1e-8), 1e-6) << p << " " << pr;
  }
  EXPECT_NEAR(kl_rerank_grad(0.3, 0.3), 0.0, 1e-12);
}

TEST(LearningRate, WarmupAndDecay) {
  EXPECT_NEAR(lr_at(500, 1e-4, 1000), 5e-5, 1e-18);
  EXPECT_DOUBLE_EQ(lr_at(1000, 3e-4, 1000), 3e-4);
  EXPECT_NEAR(lr_at(4000, 5e-4, 1000), 2.5e-4, 1e-18);
  EXPECT_NEAR(lr_at(999, 5e-4, 1000), lr_at(1001, 5e-4, 1000), 2e-6);
}

TEST(Adam, ZeroGradientNoDecayIsNoop) {
  Matrix<double> p = row({1.0, -2.0, 3.0});
  const Matrix<double> before = p;
  Matrix<double> g = Matrix<double>::Zero(1, 3);
  AdamState<double> st;
  adam_step<double>({&p}, {&g}, st, 1e-3, 0.0);
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepClosedForm) {
  Matrix<double> p = row({0.5});
  Matrix<double> g = row({1.0});
  AdamState<double> st;
  adam_step<double>({&p}, {&g}, st, 1e-3, 0.0);
  EXPECT_NEAR(p(0, 0), 0.5 - 1e-3 / (1.0 + 1e-9), 1e-15);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, DecayOnlyShrinks) {
  Matrix<double> p = row({2.0, -4.0});
  Matrix<double> g = Matrix<double>::Zero(1, 2);
  AdamState<double> st;
  adam_step<double>({&p}, {&g}, st, 0.1, 0.5);
  EXPECT_DOUBLE_EQ(p(0, 0), 2.0 * 0.95);
  EXPECT_DOUBLE_EQ(p(0, 1), -4.0 * 0.95);
}

TEST(Adam, NonFiniteGradientSkipsStep) {
  Matrix<double> p = row({1.0, 2.0});
  const Matrix<double> before = p;
  Matrix<double> g = row({0.1, std::nan("")});
  AdamState<double> st;
  EXPECT_THROW(adam_step<double>({&p}, {&g}, st, 1e-3, 0.1), NonFiniteGradient);
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.step, 0);
}

TEST(Adam, BitReproducible) {
  auto run = [] {
    Matrix<float> p(2, 2), g(2, 2);
    p << 0.1f, -0.3f, 0.7f, 1.1f;
    g << 0.01f, -2.0f, 0.5f, 0.0f;
    AdamState<float> st;
    for (int i = 0; i < 3; ++i) adam_step<float>({&p}, {&g}, st, 1e-2, 1e-4);
    return p;
  };
  const auto a = run(), b = run();
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(float) * 4));
}

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "lrtd/feature_net.hpp"
#include "lrtd/gradcheck.hpp"
#include "oracles.hpp"

using namespace lrtd;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) e(r, c) = m(r, c);
  return e;
}

Eigen::VectorXd to_eigen(std::span<const double> v) {
  Eigen::VectorXd e(v.size());
  for (std::size_t q = 0; q < v.size(); ++q) e(q) = v[q];
  return e;
}

ModelParams random_model(std::size_t F, std::size_t H, const Shape3& s, std::size_t R,
                         std::mt19937_64& gen) {
  ModelParams m = init_params(F, H, s, R, gen());
  std::normal_distribution<double> nd(0.0, 0.5);
  m.for_each_tensor([&](const std::string&, std::span<double> v) {
    for (double& x : v) x = nd(gen);
  });
  return m;
}

std::vector<double> random_input(std::size_t F, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  std::vector<double> x(F);
  for (double& v : x) v = nd(gen);
  return x;
}

}  // namespace

TEST(InitParams, DeterministicWithZeroBiases) {
  const Shape3 s{4, 3, 4};
  const auto a = init_params(7, 5, s, 3, 42);
  const auto b = init_params(7, 5, s, 3, 42);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, init_params(7, 5, s, 3, 43));
  for (Var v : kAllVars) {
    for (double x : a.branch(v).b1) EXPECT_EQ(x, 0.0);
    for (double x : a.branch(v).b2) EXPECT_EQ(x, 0.0);
    EXPECT_EQ(a.branch(v).w1.rows, 5u);
    EXPECT_EQ(a.branch(v).w1.cols, 7u);
    EXPECT_EQ(a.branch(v).w2.rows, 3u * s.dim(v));
  }
  EXPECT_EQ(a.b_sel, 0.0);
  EXPECT_EQ(a.w_sel.size(), 7u);
}

TEST(InitParams, UniformMoments) {
  // 3 branches x 100 x 400 = 1.2e5 draws of W1 with fan_in 400.
  const std::size_t F = 400;
  const auto m = init_params(F, 100, {2, 2, 2}, 1, 9);
  const double bound = 1.0 / std::sqrt(static_cast<double>(F));
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (Var v : kAllVars)
    for (double x : m.branch(v).w1.data) {
      EXPECT_LE(std::abs(x), bound);
      sum += x;
      sq += x * x;
      ++n;
    }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(sd, bound / std::sqrt(3.0), 0.05 * bound / std::sqrt(3.0));
}

TEST(InitParams, RejectsZeroDims) {
  EXPECT_THROW(init_params(0, 3, {2, 2, 2}, 1, 1), ShapeError);
  EXPECT_THROW(init_params(3, 0, {2, 2, 2}, 1, 1), ShapeError);
  EXPECT_THROW(init_params(3, 3, {2, 2, 2}, 0, 1), ShapeError);
}

TEST(Forward, ZeroWeightsGiveUniform) {
  ModelParams m = init_params(4, 3, {3, 2, 3}, 2, 1);
  m.for_each_tensor([](const std::string&, std::span<double> v) {
    for (double& x : v) x = 0.0;
  });
  const auto res = forward(m, std::vector<double>{1, 2, 3, 4});
  for (double x : res.scores.flat()) EXPECT_EQ(x, 0.0);
  EXPECT_NEAR(std::exp(log_prob(res.scores, {2, 1, 0})), 1.0 / 18.0, 1e-15);
}

TEST(Forward, UnitInstance) {
  ModelParams m = init_params(1, 1, {2, 3, 2}, 2, 1);
  m.for_each_tensor([](const std::string&, std::span<double> v) {
    for (double& x : v) x = 1.0;
  });
  for (Var a : kAllVars)
    for (double& x : m.branch(a).b1) x = 0.0;
  for (Var a : kAllVars)
    for (double& x : m.branch(a).b2) x = 0.0;
  const auto res = forward(m, std::vector<double>{1.0});
  for (double x : res.scores.flat()) EXPECT_EQ(x, 1.0);
}

TEST(Forward, MatchesEigen) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape3 s{4, 3, 5};
    const std::size_t R = 1 + trial % 4;
    const auto m = random_model(6, 8, s, R, gen);
    const auto x = random_input(6, gen);
    const auto res = forward(m, x);
    for (Var a : kAllVars) {
      const Branch& b = m.branch(a);
      const Eigen::VectorXd h =
          (to_eigen(b.w1) * to_eigen(x) + to_eigen(b.b1)).cwiseMax(0.0);
      const Eigen::VectorXd y = to_eigen(b.w2) * h + to_eigen(b.b2);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t q = 0; q < s.dim(a); ++q)
          EXPECT_NEAR(res.scores.vec(a, r)[q], y(r * s.dim(a) + q), 1e-12);
    }
  }
}

TEST(Forward, DimensionMismatch) {
  const auto m = init_params(3, 2, {2, 2, 2}, 1, 1);
  EXPECT_THROW(forward(m, std::vector<double>{1, 2}), ShapeError);
  EXPECT_THROW(sel_forward(m, std::vector<double>{1, 2, 3, 4}), ShapeError);
}

TEST(Forward, Pure) {
  std::mt19937_64 gen(4);
  const auto m = random_model(5, 4, {3, 3, 3}, 2, gen);
  const auto x = random_input(5, gen);
  EXPECT_EQ(forward(m, x).scores, forward(m, x).scores);
}

TEST(Backward, ZeroUpstreamGivesZero) {
  std::mt19937_64 gen(5);
  const auto m = random_model(5, 4, {3, 2, 3}, 2, gen);
  const auto fw = forward(m, random_input(5, gen));
  const auto g = backward(m, fw.cache, CpGrad({3, 2, 3}, 2));
  g.for_each_tensor([](const std::string&, std::span<const double> v) {
    for (double x : v) EXPECT_EQ(x, 0.0);
  });
}

TEST(Backward, SingleUnitChainRule) {
  // F = H = 1, shape (1,1,2), R = 1; only the object branch matters.
  ModelParams m = init_params(1, 1, {1, 1, 2}, 1, 1);
  Branch& o = m.branch(Var::object);
  o.w1(0, 0) = 2.0;
  o.b1[0] = 0.5;
  o.w2(0, 0) = 3.0;
  o.w2(1, 0) = -1.0;
  const auto fw = forward(m, std::vector<double>{1.5});
  CpGrad up({1, 1, 2}, 1);
  up.flat()[up.offset(Var::object, 0) + 0] = 0.25;
  up.flat()[up.offset(Var::object, 0) + 1] = -0.75;
  const auto g = backward(m, fw.cache, up);
  const double h = 2.0 * 1.5 + 0.5;                 // 3.5, relu active
  const double dh = 0.25 * 3.0 + (-0.75) * (-1.0);  // 1.5
  EXPECT_DOUBLE_EQ(g.branch(Var::object).w2(0, 0), 0.25 * h);
  EXPECT_DOUBLE_EQ(g.branch(Var::object).w2(1, 0), -0.75 * h);
  EXPECT_DOUBLE_EQ(g.branch(Var::object).b2[1], -0.75);
  EXPECT_DOUBLE_EQ(g.branch(Var::object).b1[0], dh);
  EXPECT_DOUBLE_EQ(g.branch(Var::object).w1(0, 0), dh * 1.5);
}

TEST(Backward, ReluSubgradientAtZeroIsZero) {
  ModelParams m = init_params(1, 1, {1, 1, 2}, 1, 1);
  Branch& o = m.branch(Var::object);
  o.w1(0, 0) = 1.0;
  o.b1[0] = -1.0;  // pre-activation exactly 0 at x = 1
  o.w2(0, 0) = 2.0;
  const auto fw = forward(m, std::vector<double>{1.0});
  CpGrad up({1, 1, 2}, 1, 1.0);
  const auto g = backward(m, fw.cache, up);
  EXPECT_EQ(g.branch(Var::object).w1(0, 0), 0.0);
  EXPECT_EQ(g.branch(Var::object).b1[0], 0.0);
}

TEST(Backward, CacheMismatch) {
  const auto m = init_params(3, 2, {2, 2, 2}, 1, 1);
  const auto other = init_params(4, 2, {2, 2, 2}, 1, 1);
  const auto fw = forward(other, std::vector<double>{1, 2, 3, 4});
  EXPECT_THROW(backward(m, fw.cache, CpGrad({2, 2, 2}, 1)), ShapeError);
  const auto ok = forward(m, std::vector<double>{1, 2, 3});
  EXPECT_THROW(backward(m, ok.cache, CpGrad({2, 2, 2}, 2)), ShapeError);
}

TEST(Backward, EndToEndFiniteDifferences) {
  std::mt19937_64 gen(6);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Shape3 s{1 + gen() % 6, 1 + gen() % 5, 1 + gen() % 6};
    const std::size_t R = 1 + gen() % 4;
    ModelParams m = random_model(5, 6, s, R, gen);
    const auto x = random_input(5, gen);
    const auto t = oracle::random_triplet(s, gen);
    const auto fw = forward(m, x);
    const auto g = backward(m, fw.cache, nll_gradient(fw.scores, t));
    std::vector<std::vector<double>> analytic;
    g.for_each_tensor([&](const std::string&, std::span<const double> v) {
      analytic.emplace_back(v.begin(), v.end());
    });
    std::size_t idx = 0;
    m.for_each_tensor([&](const std::string& name, std::span<double> v) {
      const auto& a = analytic[idx++];
      if (is_selection_tensor(name)) return;
      for (std::size_t e = 0; e < v.size(); ++e) {
        const double saved = v[e];
        v[e] = saved + h;
        const double up = nll_loss(forward(m, x).scores, t);
        v[e] = saved - h;
        const double down = nll_loss(forward(m, x).scores, t);
        v[e] = saved;
        worst = std::max(worst, relative_error(a[e], (up - down) / (2 * h)));
      }
    });
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Selection, HandValues) {
  ModelParams m = init_params(1, 1, {2, 2, 2}, 1, 1);
  m.w_sel[0] = 0.0;
  EXPECT_EQ(sel_forward(m, std::vector<double>{3.0}), 0.5);
  m.b_sel = std::log(3.0);
  EXPECT_NEAR(sel_forward(m, std::vector<double>{3.0}), 0.75, 1e-15);
  m.b_sel = 0.0;
  const auto g = sel_backward(m, std::vector<double>{2.0}, 1);
  EXPECT_DOUBLE_EQ(g.w[0], -1.0);
  EXPECT_DOUBLE_EQ(g.b, -0.5);
}

TEST(Selection, ExactLabelGivesZeroGradient) {
  ModelParams m = init_params(2, 1, {2, 2, 2}, 1, 1);
  m.w_sel = {0.0, 0.0};
  m.b_sel = -800.0;  // p rounds to the smallest value, label 0
  const auto g = sel_backward(m, std::vector<double>{1.0, -1.0}, 0);
  EXPECT_NEAR(g.b, 0.0, 1e-300);
  EXPECT_NEAR(g.w[0], 0.0, 1e-300);
}

TEST(Selection, StrictlyInsideUnitInterval) {
  ModelParams m = init_params(1, 1, {2, 2, 2}, 1, 1);
  for (double z : {-1000.0, -40.0, -1.0, 0.0, 1.0, 40.0, 1000.0}) {
    m.w_sel[0] = z;
    const double p = sel_forward(m, std::vector<double>{1.0});
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
    EXPECT_TRUE(std::isfinite(sel_log_prob(m, std::vector<double>{1.0})));
  }
}

TEST(Selection, MatchesScalarOracleAndFiniteDifferences) {
  std::mt19937_64 gen(7);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    ModelParams m = random_model(6, 2, {2, 2, 2}, 1, gen);
    const auto x = random_input(6, gen);
    const int label = static_cast<int>(gen() % 2);
    double z = m.b_sel;
    for (std::size_t f = 0; f < 6; ++f) z += m.w_sel[f] * x[f];
    EXPECT_NEAR(sel_forward(m, x), 1.0 / (1.0 + std::exp(-z)), 1e-15);
    EXPECT_NEAR(sel_log_prob(m, x), std::log(1.0 / (1.0 + std::exp(-z))), 1e-12);
    const auto g = sel_backward(m, x, label);
    for (std::size_t f = 0; f <= 6; ++f) {
      double& slot = f < 6 ? m.w_sel[f] : m.b_sel;
      const double saved = slot;
      slot = saved + h;
      const double up = sel_loss(m, x, label);
      slot = saved - h;
      const double down = sel_loss(m, x, label);
      slot = saved;
      worst = std::max(worst, relative_error(f < 6 ? g.w[f] : g.b, (up - down) / (2 * h)));
    }
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(ModelParams, TensorVisitOrder) {
  const auto m = init_params(2, 2, {2, 2, 2}, 1, 1);
  std::vector<std::string> names;
  m.for_each_tensor([&](const std::string& n, std::span<const double>) { names.push_back(n); });
  const std::vector<std::string> want{"W1_s", "b1_s", "W2_s", "b2_s", "W1_p", "b1_p", "W2_p",
                                      "b2_p", "W1_o", "b1_o", "W2_o", "b2_o", "w_sel", "b_sel"};
  EXPECT_EQ(names, want);
}

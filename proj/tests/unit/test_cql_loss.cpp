#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cql/cql_loss.hpp"
#include "cql/errors.hpp"
#include "test_support.hpp"

using namespace cql;
using cql::testing::check_loss_gradient;
using cql::testing::random_batch;

namespace {

std::vector<double> ten_then_zeros() {
    std::vector<double> v(25, 0.0);
    v[0] = 10.0;
    return v;
}

}  // namespace

TEST(LogSumExp, TwentyFiveZeros) {
    EXPECT_NEAR(logsumexp(std::vector<double>(25, 0.0)), std::log(25.0), 1e-15);
    EXPECT_NEAR(logsumexp(std::vector<double>(25, 0.0)), 3.218876, 1e-6);
}

TEST(LogSumExp, OneLarge) {
    EXPECT_NEAR(logsumexp(ten_then_zeros()), 10.0 + std::log1p(24.0 * std::exp(-10.0)), 1e-14);
    EXPECT_NEAR(logsumexp(ten_then_zeros()), 10.001090, 1e-6);
}

TEST(LogSumExp, ShiftIdentityAndMaxBound) {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(25);
        for (double& x : v) x = 20.0 * uniform01(rng) - 10.0;
        const double c = 100.0 * uniform01(rng) - 50.0;
        std::vector<double> shifted = v;
        for (double& x : shifted) x += c;
        EXPECT_NEAR(logsumexp(shifted), logsumexp(v) + c, 1e-12);
        EXPECT_GE(logsumexp(v), *std::max_element(v.begin(), v.end()));
    }
}

TEST(LogSumExp, ExtremeMagnitudesStayFinite) {
    std::vector<double> v(25, -1e300);
    v[3] = 1e300;
    EXPECT_EQ(logsumexp(v), 1e300);
    EXPECT_TRUE(std::isfinite(logsumexp(std::vector<double>(25, 1e300))));
    EXPECT_TRUE(std::isfinite(logsumexp(std::vector<double>(25, -1e300))));
}

TEST(LogSumExp, EmptyIsDomainError) {
    EXPECT_THROW(logsumexp(std::vector<double>{}), DomainError);
}

TEST(CqlPenalty, AllEqualRow) {
    for (int a : {0, 7, 24}) {
        EXPECT_NEAR(cql_penalty(std::vector<double>(25, 1.75), a), std::log(25.0), 1e-14);
    }
}

TEST(CqlPenalty, DataActionAtTheMax) {
    EXPECT_NEAR(cql_penalty(ten_then_zeros(), 0), std::log1p(24.0 * std::exp(-10.0)), 1e-15);
    EXPECT_NEAR(cql_penalty(ten_then_zeros(), 0), 0.001090, 1e-6);
}

TEST(CqlPenalty, ShiftInvariantAndPositive) {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(25);
        for (double& x : v) x = 30.0 * uniform01(rng) - 15.0;
        const int a = static_cast<int>(rng() % 25);
        const double p = cql_penalty(v, a);
        EXPECT_GT(p, 0.0);
        for (double& x : v) x -= 7.5;
        EXPECT_NEAR(cql_penalty(v, a), p, 1e-12);
    }
}

TEST(CqlPenalty, ActionOutOfRange) {
    EXPECT_THROW(cql_penalty(std::vector<double>(25, 0.0), 25), DomainError);
    EXPECT_THROW(cql_penalty(std::vector<double>(25, 0.0), -1), DomainError);
}

TEST(CqlPenalty, GradientIsSoftmaxMinusOneHot) {
    Rng rng(3);
    std::vector<double> v(25);
    for (double& x : v) x = 4.0 * uniform01(rng);
    const auto g = cql_penalty_gradient(v, 6);
    EXPECT_NEAR(std::accumulate(g.begin(), g.end(), 0.0), 0.0, 1e-15);
    const double lse = logsumexp(v);
    for (int k = 0; k < 25; ++k) {
        EXPECT_NEAR(g[k], std::exp(v[k] - lse) - (k == 6 ? 1.0 : 0.0), 1e-15);
        std::vector<double> up = v, down = v;
        up[k] += 1e-6;
        down[k] -= 1e-6;
        EXPECT_NEAR((cql_penalty(up, 6) - cql_penalty(down, 6)) / 2e-6, g[k], 1e-8);
    }
}

TEST(TotalLoss, BreakdownInvariant) {
    Rng rng(4);
    DuelingQNet net({48, 128, 25}, rng);
    const auto batch = random_batch(16, 48, 25, rng);
    const auto res = total_loss(net, make_target(net), batch, 0.99, 0.1);
    const auto& b = res.breakdown;
    EXPECT_EQ(b.alpha, 0.1);
    EXPECT_GE(b.cql_penalty_mean, 0.0);
    EXPECT_NEAR(b.total, b.alpha * b.cql_penalty_mean + b.bellman_loss, 1e-12);
}

TEST(TotalLoss, AlphaZeroIsPlainDoubleDqn) {
    Rng rng(5);
    DuelingQNet net({48, 128, 25}, rng);
    const auto batch = random_batch(16, 48, 25, rng);
    const auto res = total_loss(net, make_target(net), batch, 0.9, 0.0);
    EXPECT_EQ(res.breakdown.total, res.breakdown.bellman_loss);

    const auto y = double_dqn_target(net, make_target(net), batch, 0.9);
    const auto q = q_values(net, batch.states);
    double mse = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double d = q(i, static_cast<std::size_t>(batch.actions[i])) - y[i];
        mse += d * d;
    }
    EXPECT_NEAR(res.breakdown.bellman_loss, mse / batch.size(), 1e-12);
}

TEST(TotalLoss, PerfectFitHasZeroLossAndGradient) {
    Rng rng(6);
    DuelingQNet net({48, 128, 25}, rng);
    const auto batch = random_batch(8, 48, 25, rng);
    const auto q = q_values(net, batch.states);
    std::vector<double> targets;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        targets.push_back(q(i, static_cast<std::size_t>(batch.actions[i])));
    }
    const auto res = loss_with_targets(net, batch, targets, 0.0);
    EXPECT_EQ(res.breakdown.total, 0.0);
    EXPECT_EQ(res.grads.max_abs(), 0.0);
}

TEST(TotalLoss, AffineAndNonDecreasingInAlpha) {
    Rng rng(7);
    DuelingQNet net({48, 128, 25}, rng);
    const auto batch = random_batch(12, 48, 25, rng);
    const auto target = make_target(net);
    const double l0 = total_loss(net, target, batch, 0.99, 0.0).breakdown.total;
    const double l1 = total_loss(net, target, batch, 0.99, 0.5).breakdown.total;
    const double l2 = total_loss(net, target, batch, 0.99, 1.0).breakdown.total;
    EXPECT_LE(l0, l1);
    EXPECT_LE(l1, l2);
    EXPECT_NEAR(l1 - l0, l2 - l1, 1e-12);
}

TEST(TotalLoss, EmptyBatchIsDomainError) {
    DuelingQNet net;
    TransitionBatch empty;
    empty.states = Matrix(0, 48);
    empty.next_states = Matrix(0, 48);
    EXPECT_THROW(total_loss(net, make_target(net), empty, 0.99, 0.1), DomainError);
}

TEST(TotalLoss, NegativeAlphaRejected) {
    Rng rng(8);
    DuelingQNet net({4, 8, 3}, rng);
    const auto batch = random_batch(4, 4, 3, rng);
    EXPECT_THROW(total_loss(net, make_target(net), batch, 0.9, -0.1), ConfigError);
}

TEST(TotalLoss, TargetsAreGradientStopped) {
    // Gradient of total_loss equals the gradient with the same targets frozen.
    Rng rng(9);
    DuelingQNet net({6, 8, 4}, rng);
    DuelingQNet other({6, 8, 4}, rng);
    const auto batch = random_batch(10, 6, 4, rng, 0.3);
    const TargetNet target = make_target(other);
    const auto full = total_loss(net, target, batch, 0.9, 0.1);
    const auto frozen = loss_with_targets(net, batch, double_dqn_target(net, target, batch, 0.9), 0.1);
    for (std::size_t li = 0; li < 4; ++li) {
        EXPECT_EQ(full.grads.layers[li].weights, frozen.grads.layers[li].weights);
    }
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 100; seed < 105; ++seed) {
        Rng rng(seed);
        DuelingQNet net({6, 12, 5}, rng);
        const auto batch = random_batch(8, 6, 5, rng);
        const auto targets = double_dqn_target(net, make_target(DuelingQNet({6, 12, 5}, rng)), batch, 0.9);
        const auto check = check_loss_gradient(net, batch, targets, 0.1);
        EXPECT_GT(check.coordinates_checked, 100u);
        EXPECT_LT(check.max_relative_error, 1e-4) << "seed " << seed;
    }
}

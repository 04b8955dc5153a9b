#include <gtest/gtest.h>

#include <numeric>

#include "cql/errors.hpp"
#include "cql/qnet.hpp"
#include "test_support.hpp"

using namespace cql;
using cql::testing::random_batch;
using cql::testing::random_matrix;

namespace {

// Zero trunk; the heads emit their biases for every state.
DuelingQNet constant_net(QNetShape shape, double value, std::vector<double> advantage) {
    DuelingQNet net(shape);
    net.layer(DuelingQNet::kValue).biases[0] = value;
    net.layer(DuelingQNet::kAdvantage).biases = std::move(advantage);
    return net;
}

double value_head(const DuelingQNet& net, const Matrix& states, std::size_t row) {
    return q_forward(net, states).value.output(row, 0);
}

}  // namespace

TEST(QNet, DefaultShape) {
    DuelingQNet net;
    EXPECT_EQ(net.shape().input, 48u);
    EXPECT_EQ(net.shape().actions, 25u);
    ASSERT_EQ(net.layers().size(), 4u);
    EXPECT_EQ(net.layer(DuelingQNet::kTrunk0).weights.cols(), 48u);
    EXPECT_EQ(net.layer(DuelingQNet::kTrunk0).weights.rows(), 128u);
    EXPECT_EQ(net.layer(DuelingQNet::kTrunk1).weights.rows(), 128u);
    EXPECT_EQ(net.layer(DuelingQNet::kValue).weights.rows(), 1u);
    EXPECT_EQ(net.layer(DuelingQNet::kAdvantage).weights.rows(), 25u);
    EXPECT_EQ(net.layer(DuelingQNet::kTrunk0).activation, Activation::LeakyReLU);
    EXPECT_EQ(net.layer(DuelingQNet::kValue).activation, Activation::Identity);
    EXPECT_EQ(net.parameter_count(), 48u * 128 + 128 + 128 * 128 + 128 + 128 + 1 + 128 * 25 + 25);
}

TEST(QNet, TwoActionAggregation) {
    const auto net = constant_net({3, 4, 2}, 2.0, {1.0, -1.0});
    const auto q = q_values(net, Matrix(1, 3));
    EXPECT_EQ(q, Matrix::from_rows({{3.0, 1.0}}));
    EXPECT_EQ(dueling_aggregate(Matrix::from_rows({{2}}), Matrix::from_rows({{1, -1}})),
              Matrix::from_rows({{3, 1}}));
}

TEST(QNet, ZeroHeadsGiveZeroQ) {
    Rng rng(1);
    DuelingQNet net({48, 128, 25}, rng);
    net.layer(DuelingQNet::kValue) = DenseLayer(128, 1, Activation::Identity);
    net.layer(DuelingQNet::kAdvantage) = DenseLayer(128, 25, Activation::Identity);
    const auto q = q_values(net, random_matrix(5, 48, rng));
    for (double v : q.data()) EXPECT_EQ(v, 0.0);
}

TEST(QNet, DuelingIdentifiability) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        DuelingQNet net({48, 128, 25}, rng);
        for (double& b : net.layer(DuelingQNet::kValue).biases) b = 3.0 * uniform01(rng);
        const auto states = random_matrix(16, 48, rng, 3.0);
        const auto q = q_values(net, states);
        for (std::size_t i = 0; i < states.rows(); ++i) {
            const auto row = q.row(i);
            const double mean = std::accumulate(row.begin(), row.end(), 0.0) / 25.0;
            EXPECT_LT(std::abs(mean - value_head(net, states, i)), 1e-9);
        }
    }
}

TEST(QNet, WrongWidthIsDimensionError) {
    DuelingQNet net;
    EXPECT_THROW(q_values(net, Matrix(2, 47)), DimensionError);
}

TEST(QNet, SeededInitIsDeterministic) {
    Rng a(42), b(42);
    EXPECT_EQ(DuelingQNet({48, 128, 25}, a), DuelingQNet({48, 128, 25}, b));
}

TEST(GreedyAction, UniqueMax) {
    std::vector<double> row(25, 0.0);
    row[13] = 1.0;
    EXPECT_EQ(greedy_action(row), 13);
}

TEST(GreedyAction, TiesGoToLowestIndex) {
    EXPECT_EQ(greedy_action(std::vector<double>(25, 0.7)), 0);
    std::vector<double> row(25, 0.0);
    row[4] = row[9] = 2.0;
    EXPECT_EQ(greedy_action(row), 4);
}

TEST(GreedyAction, ShiftInvariant) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> row(25);
        for (double& v : row) v = uniform01(rng);
        const int a = greedy_action(row);
        for (double& v : row) v += 123.25;
        EXPECT_EQ(greedy_action(row), a);
    }
}

TEST(GreedyAction, FromNetMatchesQRow) {
    Rng rng(5);
    DuelingQNet net({48, 128, 25}, rng);
    const auto states = random_matrix(8, 48, rng);
    const auto q = q_values(net, states);
    const auto acts = greedy_actions(net, states);
    for (std::size_t i = 0; i < states.rows(); ++i) {
        EXPECT_EQ(acts[i], greedy_action(q.row(i)));
        EXPECT_EQ(acts[i], greedy_action(net, states.row(i)));
    }
}

TEST(QBackward, MatchesFiniteDifferenceOfLinearFunctional) {
    Rng rng(11);
    DuelingQNet net({6, 8, 4}, rng);
    const auto states = random_matrix(3, 6, rng);
    const auto weights = random_matrix(3, 4, rng);  // L = sum(weights .* Q)
    auto loss = [&](const DuelingQNet& n) {
        const auto q = q_values(n, states);
        double s = 0;
        for (std::size_t k = 0; k < q.size(); ++k) s += q.data()[k] * weights.data()[k];
        return s;
    };
    const auto grads = q_backward(net, q_forward(net, states), weights);
    DuelingQNet probe = net;
    const double h = 1e-6;
    for (std::size_t li = 0; li < 4; ++li) {
        for (std::size_t k = 0; k < probe.layers()[li].weights.size(); ++k) {
            double& w = probe.layers()[li].weights.data()[k];
            const double saved = w;
            w = saved + h;
            const double up = loss(probe);
            w = saved - h;
            const double down = loss(probe);
            w = saved;
            EXPECT_NEAR((up - down) / (2 * h), grads.layers[li].weights.data()[k], 1e-6);
        }
    }
}

TEST(QBackward, ShapeMismatchIsConsistencyError) {
    DuelingQNet net({6, 8, 4});
    const auto fwd = q_forward(net, Matrix(2, 6));
    EXPECT_THROW(q_backward(net, fwd, Matrix(2, 3)), ConsistencyError);
}

TEST(TargetNet, SyncCopiesAndCountsGenerations) {
    Rng rng(2);
    DuelingQNet net({48, 128, 25}, rng);
    TargetNet target = make_target(net);
    EXPECT_EQ(target.generation, 0u);
    EXPECT_EQ(target.params, net);

    DuelingQNet other({48, 128, 25}, rng);
    sync_target(other, target);
    EXPECT_EQ(target.generation, 1u);
    const auto probe = random_matrix(4, 48, rng);
    EXPECT_EQ(q_values(target.params, probe), q_values(other, probe));

    const auto params_before = target.params;
    sync_target(other, target);
    EXPECT_EQ(target.generation, 2u);
    EXPECT_EQ(target.params, params_before);
}

TEST(TargetNet, ShapeMismatchRejected) {
    TargetNet target = make_target(DuelingQNet({4, 8, 3}));
    EXPECT_THROW(sync_target(DuelingQNet({4, 8, 2}), target), DimensionError);
}

TEST(DoubleDqnTarget, TerminalTransitionIsReward) {
    Rng rng(1);
    DuelingQNet net({48, 128, 25}, rng);
    auto batch = random_batch(1, 48, 25, rng);
    batch.rewards[0] = -15.0;
    batch.terminal[0] = 1;
    const auto y = double_dqn_target(net, make_target(net), batch, 0.99);
    EXPECT_EQ(y[0], -15.0);
}

TEST(DoubleDqnTarget, NonTerminalBootstrap) {
    // Target net: Q(s', a) = 10 for the action the main net prefers.
    const QNetShape shape{4, 8, 3};
    const auto main = constant_net(shape, 0.0, {0.0, 5.0, 0.0});
    TargetNet target = make_target(constant_net(shape, 10.0, {0.0, 0.0, 0.0}));
    TransitionBatch b;
    b.states = Matrix(1, 4);
    b.next_states = Matrix(1, 4);
    b.actions = {0};
    b.rewards = {0.0};
    b.terminal = {0};
    EXPECT_NEAR(double_dqn_target(main, target, b, 0.99)[0], 9.9, 1e-12);
}

TEST(DoubleDqnTarget, ArgmaxFromMainValueFromTarget) {
    const QNetShape shape{4, 8, 3};
    const auto main = constant_net(shape, 0.0, {0.0, 5.0, 0.0});     // argmax 1
    const auto tnet = constant_net(shape, 0.0, {9.0, 0.0, 0.0});     // argmax 0
    TargetNet target = make_target(tnet);
    TransitionBatch b;
    b.states = Matrix(1, 4);
    b.next_states = Matrix(1, 4);
    b.actions = {2};
    b.rewards = {1.0};
    b.terminal = {0};
    // Q_target(s', 1) = 0 - mean(9, 0, 0) = -3.
    EXPECT_NEAR(double_dqn_target(main, target, b, 0.5)[0], 1.0 + 0.5 * -3.0, 1e-12);
}

TEST(DoubleDqnTarget, GammaZeroIsMyopic) {
    Rng rng(4);
    DuelingQNet net({48, 128, 25}, rng);
    const auto batch = random_batch(10, 48, 25, rng);
    EXPECT_EQ(double_dqn_target(net, make_target(net), batch, 0.0), batch.rewards);
}

TEST(DoubleDqnTarget, TerminalIgnoresGammaAndNets) {
    Rng rng(6);
    DuelingQNet a({48, 128, 25}, rng), b({48, 128, 25}, rng);
    auto batch = random_batch(12, 48, 25, rng, 1.0);
    for (double g : {0.0, 0.5, 0.99}) {
        EXPECT_EQ(double_dqn_target(a, make_target(b), batch, g), batch.rewards);
    }
}

TEST(DoubleDqnTarget, GammaOutOfRange) {
    DuelingQNet net({4, 8, 3});
    Rng rng(1);
    const auto batch = random_batch(2, 4, 3, rng);
    EXPECT_THROW(double_dqn_target(net, make_target(net), batch, 1.0), ConfigError);
    EXPECT_THROW(double_dqn_target(net, make_target(net), batch, -0.1), ConfigError);
}

TEST(TransitionBatch, ValidateRejectsBadColumns) {
    Rng rng(1);
    auto batch = random_batch(3, 4, 3, rng);
    EXPECT_NO_THROW(batch.validate(3));
    auto bad = batch;
    bad.actions[1] = 3;
    EXPECT_THROW(bad.validate(3), DomainError);
    bad = batch;
    bad.rewards.pop_back();
    EXPECT_THROW(bad.validate(3), DimensionError);
}

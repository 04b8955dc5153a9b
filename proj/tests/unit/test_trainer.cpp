#include <gtest/gtest.h>

#include <cmath>

#include "cql/cohort_sim.hpp"
#include "cql/cql_loss.hpp"
#include "cql/dataset.hpp"
#include "cql/errors.hpp"
#include "cql/trainer.hpp"
#include "test_support.hpp"

using namespace cql;
using cql::testing::random_batch;

namespace {

TrainConfig tiny_config(std::uint64_t steps) {
    TrainConfig c;
    c.hidden_units = 16;
    c.num_actions = 4;
    c.total_steps = steps;
    c.batch_size = 8;
    c.log_every = 50;
    c.target_sync_period = 25;
    c.seed = 3;
    return c;
}

}  // namespace

TEST(TrainConfig, TextRoundTripAndValidation) {
    TrainConfig c;
    c.alpha = 0.25;
    c.learning_rate = 3e-5;
    c.total_steps = 123;
    c.rewards.c1 = -0.5;
    c.split.seed = 17;
    auto kv = KeyValueConfig::parse(train_config_to_text(c));
    const auto back = train_config_from_config(kv);
    EXPECT_EQ(train_config_to_text(back), train_config_to_text(c));

    auto bad_gamma = KeyValueConfig::parse("gamma = 1\n");
    EXPECT_THROW(train_config_from_config(bad_gamma), ConfigError);
    auto bad_alpha = KeyValueConfig::parse("alpha = -0.1\n");
    EXPECT_THROW(train_config_from_config(bad_alpha), ConfigError);
    auto bad_batch = KeyValueConfig::parse("batch_size = 0\n");
    EXPECT_THROW(train_config_from_config(bad_batch), ConfigError);
    auto unknown = KeyValueConfig::parse("learning_rat = 0.1\n");
    EXPECT_THROW(train_config_from_config(unknown), ConfigError);
}

TEST(TrainConfig, Defaults) {
    const TrainConfig c;
    EXPECT_EQ(c.gamma, 0.99);
    EXPECT_EQ(c.alpha, 0.1);
    EXPECT_EQ(c.learning_rate, 1e-4);
    EXPECT_EQ(c.batch_size, 32u);
    EXPECT_EQ(c.target_sync_period, 1000u);
}

TEST(TrainOffline, ZeroStepsReturnsInitialization) {
    Rng rng(1);
    const auto train = random_batch(40, 6, 4, rng);
    const auto val = random_batch(10, 6, 4, rng);
    const auto cfg = tiny_config(0);
    const auto res = train_offline(train, val, cfg);
    const auto init = initial_train_state(cfg, 6);
    EXPECT_EQ(res.state.net, init.net);
    EXPECT_EQ(res.state.target, init.target);
    EXPECT_EQ(res.state.step, 0u);
    ASSERT_EQ(res.metrics.records.size(), 1u);
    EXPECT_EQ(res.metrics.records[0].step, 0u);
}

TEST(TrainOffline, StepOneMatchesManualAdamUpdate) {
    Rng rng(2);
    const auto train = random_batch(40, 6, 4, rng);
    const auto val = random_batch(10, 6, 4, rng);
    auto cfg = tiny_config(1);
    const auto res = train_offline(train, val, cfg);

    auto manual = initial_train_state(cfg, 6);
    const auto idx = sample_indices(train.size(), cfg.batch_size, 0, cfg.seed);
    TransitionBatch b;
    b.states = Matrix(idx.size(), 6);
    b.next_states = Matrix(idx.size(), 6);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            b.states(i, j) = train.states(idx[i], j);
            b.next_states(i, j) = train.next_states(idx[i], j);
        }
        b.actions.push_back(train.actions[idx[i]]);
        b.rewards.push_back(train.rewards[idx[i]]);
        b.terminal.push_back(train.terminal[idx[i]]);
    }
    const auto loss = total_loss(manual.net, manual.target, b, cfg.gamma, cfg.alpha);
    adam_step(manual.net.layers(), loss.grads, manual.adam, cfg.learning_rate);
    EXPECT_EQ(res.state.net, manual.net);
}

TEST(TrainOffline, AlphaEntersOnlyThroughThePenaltyGradient) {
    // Same init and batch: grad(alpha) - grad(0) == alpha * (grad(1) - grad(0)).
    Rng rng(3);
    const auto batch = random_batch(16, 6, 4, rng);
    auto cfg = tiny_config(1);
    const auto s = initial_train_state(cfg, 6);
    const auto targets = double_dqn_target(s.net, s.target, batch, cfg.gamma);
    const auto g0 = loss_with_targets(s.net, batch, targets, 0.0).grads;
    const auto ga = loss_with_targets(s.net, batch, targets, 0.1).grads;
    const auto g1 = loss_with_targets(s.net, batch, targets, 1.0).grads;
    auto diff = ga;
    diff.add_scaled(g0, -1.0);
    auto expected = g1;
    expected.add_scaled(g0, -1.0);
    auto residual = diff;
    residual.add_scaled(expected, -0.1);
    EXPECT_GT(expected.max_abs(), 1e-6);
    EXPECT_LT(residual.max_abs(), 1e-12);

    // Whole runs with identical seeds differ only when alpha does.
    const auto val = random_batch(8, 6, 4, rng);
    auto c0 = tiny_config(5);
    c0.alpha = 0.0;
    auto c1 = c0;
    c1.alpha = 0.1;
    EXPECT_EQ(train_offline(batch, val, c0).state.net, train_offline(batch, val, c0).state.net);
    EXPECT_NE(train_offline(batch, val, c0).state.net, train_offline(batch, val, c1).state.net);
}

TEST(TrainOffline, ToyDatasetLossDescends) {
    Rng rng(4);
    const auto train = random_batch(100, 6, 4, rng, 0.2);
    const auto val = random_batch(20, 6, 4, rng, 0.2);
    auto cfg = tiny_config(2000);
    cfg.learning_rate = 1e-3;
    cfg.log_every = 2000;
    cfg.gamma = 0.9;
    const auto res = train_offline(train, val, cfg);
    ASSERT_EQ(res.metrics.records.size(), 2u);
    EXPECT_EQ(res.metrics.records.back().step, 2000u);
    EXPECT_LT(res.metrics.records.back().total_loss, res.metrics.records.front().total_loss);
    EXPECT_EQ(res.state.step, 2000u);
    EXPECT_EQ(res.state.target.generation, 2000u / cfg.target_sync_period);
}

TEST(TrainOffline, MetricsStepsIncreaseAndAreFinite) {
    Rng rng(5);
    const auto train = random_batch(60, 6, 4, rng);
    const auto val = random_batch(10, 6, 4, rng);
    auto cfg = tiny_config(130);
    const auto res = train_offline(train, val, cfg);
    std::vector<std::uint64_t> steps;
    for (const auto& r : res.metrics.records) {
        steps.push_back(r.step);
        EXPECT_TRUE(std::isfinite(r.total_loss));
        EXPECT_TRUE(std::isfinite(r.validation_mean_max_q));
    }
    EXPECT_EQ(steps, (std::vector<std::uint64_t>{0, 50, 100, 130}));
    const auto csv = res.metrics.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "step,total_loss,bellman_loss,cql_penalty,validation_loss,validation_mean_max_q");
}

TEST(TrainOffline, Deterministic) {
    Rng rng(6);
    const auto train = random_batch(60, 6, 4, rng);
    const auto val = random_batch(10, 6, 4, rng);
    const auto a = train_offline(train, val, tiny_config(60));
    const auto b = train_offline(train, val, tiny_config(60));
    EXPECT_EQ(a.state.net, b.state.net);
    EXPECT_EQ(a.metrics.to_csv(), b.metrics.to_csv());
}

TEST(TrainOffline, RejectsBadInputs) {
    Rng rng(7);
    const auto train = random_batch(10, 6, 4, rng);
    TransitionBatch empty;
    EXPECT_THROW(train_offline(empty, train, tiny_config(1)), DomainError);
    EXPECT_THROW(train_offline(train, empty, tiny_config(1)), DomainError);
    auto bad_actions = train;
    bad_actions.actions[0] = 9;
    EXPECT_THROW(train_offline(bad_actions, train, tiny_config(1)), DomainError);
}

TEST(TrainOffline, NonFiniteLossNamesStep) {
    Rng rng(8);
    auto train = random_batch(10, 6, 4, rng);
    const auto val = random_batch(5, 6, 4, rng);
    for (auto& v : train.states.data()) v *= 1e300;
    try {
        train_offline(train, val, tiny_config(3));
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
    } catch (const NumericError&) {
        SUCCEED();
    }
}

TEST(ValidationMetrics, DeterministicAndZeroNet) {
    Rng rng(9);
    const auto val = random_batch(20, 6, 4, rng);
    const auto cfg = tiny_config(1);
    const auto s = initial_train_state(cfg, 6);
    const auto a = validation_metrics(s.net, s.target, val, cfg);
    const auto b = validation_metrics(s.net, s.target, val, cfg);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.mean_max_q, b.mean_max_q);

    auto zero = s.net;
    for (std::size_t li : {DuelingQNet::kValue, DuelingQNet::kAdvantage}) {
        zero.layer(li).weights.fill(0.0);
        std::fill(zero.layer(li).biases.begin(), zero.layer(li).biases.end(), 0.0);
    }
    EXPECT_EQ(validation_metrics(zero, make_target(zero), val, cfg).mean_max_q, 0.0);
    EXPECT_THROW(validation_metrics(s.net, s.target, TransitionBatch{}, cfg), DomainError);
}

TEST(ValidationMetrics, DuplicatingRowsChangesNothing) {
    Rng rng(10);
    const auto val = random_batch(15, 6, 4, rng);
    TransitionBatch twice;
    twice.states = Matrix(30, 6);
    twice.next_states = Matrix(30, 6);
    for (std::size_t i = 0; i < 30; ++i) {
        const std::size_t src = i % 15;
        for (std::size_t j = 0; j < 6; ++j) {
            twice.states(i, j) = val.states(src, j);
            twice.next_states(i, j) = val.next_states(src, j);
        }
        twice.actions.push_back(val.actions[src]);
        twice.rewards.push_back(val.rewards[src]);
        twice.terminal.push_back(val.terminal[src]);
    }
    const auto cfg = tiny_config(1);
    const auto s = initial_train_state(cfg, 6);
    const auto a = validation_metrics(s.net, s.target, val, cfg);
    const auto b = validation_metrics(s.net, s.target, twice, cfg);
    EXPECT_NEAR(a.loss, b.loss, 1e-12);
    EXPECT_NEAR(a.mean_max_q, b.mean_max_q, 1e-12);
}

TEST(TerminalRewards, MustMatchConfiguredValues) {
    SimParams p;
    p.patients = 20;
    auto ds = cohort_to_dataset(generate_cohort(p));
    EXPECT_NO_THROW(check_terminal_rewards(ds, RewardParams{}));
    RewardParams other;
    other.terminal_survive = 10.0;
    EXPECT_THROW(check_terminal_rewards(ds, other), ConsistencyError);
}

TEST(TrainPipeline, HoldsOutValidationAndEmbedsArtifacts) {
    SimParams p;
    p.patients = 60;
    p.seed = 2;
    const auto ds = cohort_to_dataset(generate_cohort(p));
    TrainConfig cfg;
    cfg.total_steps = 20;
    cfg.log_every = 10;
    cfg.hidden_units = 8;
    const auto res = train_pipeline(ds, std::nullopt, cfg, std::nullopt);
    EXPECT_EQ(res.result.state.step, 20u);
    EXPECT_EQ(res.result.metrics.records.size(), 3u);
    EXPECT_GT(res.binner.iv.fit_count, 0u);
    EXPECT_LT(res.binner.iv.fit_count, ds.size());

    cfg.num_actions = 4;
    EXPECT_THROW(train_pipeline(ds, std::nullopt, cfg, std::nullopt), ConfigError);
}

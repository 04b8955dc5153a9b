#include "cql/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cql/checkpoint.hpp"
#include "cql/errors.hpp"
#include "cql/rng.hpp"

namespace cql {

void TrainConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must satisfy 0 <= gamma < 1");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be > 0");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (target_sync_period < 1) throw ConfigError("target_sync_period must be >= 1");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
    if (hidden_units < 1) throw ConfigError("hidden_units must be >= 1");
    if (num_actions < 2) throw ConfigError("num_actions must be >= 2");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
    rewards.validate();
    split.validate();
}

TrainConfig train_config_from_config(KeyValueConfig& cfg) {
    TrainConfig c;
    c.gamma = cfg.get_double("gamma", c.gamma);
    c.alpha = cfg.get_double("alpha", c.alpha);
    c.learning_rate = cfg.get_double("learning_rate", c.learning_rate);
    c.batch_size = cfg.get_uint("batch_size", c.batch_size);
    c.total_steps = cfg.get_uint("total_steps", c.total_steps);
    c.target_sync_period = cfg.get_uint("target_sync_period", c.target_sync_period);
    c.seed = cfg.get_uint("seed", c.seed);
    c.log_every = cfg.get_uint("log_every", c.log_every);
    c.checkpoint_every = cfg.get_uint("checkpoint_every", c.checkpoint_every);
    c.hidden_units = cfg.get_uint("hidden_units", c.hidden_units);
    c.num_actions = cfg.get_uint("num_actions", c.num_actions);
    c.adam_beta1 = cfg.get_double("adam.beta1", c.adam_beta1);
    c.adam_beta2 = cfg.get_double("adam.beta2", c.adam_beta2);
    c.adam_epsilon = cfg.get_double("adam.epsilon", c.adam_epsilon);
    c.rewards.terminal_survive = cfg.get_double("reward.terminal_survive", c.rewards.terminal_survive);
    c.rewards.terminal_death = cfg.get_double("reward.terminal_death", c.rewards.terminal_death);
    c.rewards.c0 = cfg.get_double("reward.c0", c.rewards.c0);
    c.rewards.c1 = cfg.get_double("reward.c1", c.rewards.c1);
    c.rewards.c2 = cfg.get_double("reward.c2", c.rewards.c2);
    c.split.train = cfg.get_double("split.train", c.split.train);
    c.split.validation = cfg.get_double("split.validation", c.split.validation);
    c.split.test = cfg.get_double("split.test", c.split.test);
    c.split.seed = cfg.get_uint("split.seed", c.split.seed);
    cfg.finish();
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    auto cfg = KeyValueConfig::load(path);
    return train_config_from_config(cfg);
}

std::string train_config_to_text(const TrainConfig& c) {
    KeyValueWriter w;
    w.add("gamma", c.gamma)
        .add("alpha", c.alpha)
        .add("learning_rate", c.learning_rate)
        .add("batch_size", c.batch_size)
        .add("total_steps", c.total_steps)
        .add("target_sync_period", c.target_sync_period)
        .add("seed", c.seed)
        .add("log_every", c.log_every)
        .add("checkpoint_every", c.checkpoint_every)
        .add("hidden_units", c.hidden_units)
        .add("num_actions", c.num_actions)
        .add("adam.beta1", c.adam_beta1)
        .add("adam.beta2", c.adam_beta2)
        .add("adam.epsilon", c.adam_epsilon)
        .add("reward.terminal_survive", c.rewards.terminal_survive)
        .add("reward.terminal_death", c.rewards.terminal_death)
        .add("reward.c0", c.rewards.c0)
        .add("reward.c1", c.rewards.c1)
        .add("reward.c2", c.rewards.c2)
        .add("split.train", c.split.train)
        .add("split.validation", c.split.validation)
        .add("split.test", c.split.test)
        .add("split.seed", c.split.seed);
    return w.str();
}

std::string MetricsLog::to_csv() const {
    std::string out =
        "step,total_loss,bellman_loss,cql_penalty,validation_loss,validation_mean_max_q\n";
    for (const auto& r : records) {
        out += std::to_string(r.step) + ',' + format_double(r.total_loss) + ',' +
               format_double(r.bellman_loss) + ',' + format_double(r.cql_penalty) + ',' +
               format_double(r.validation_loss) + ',' + format_double(r.validation_mean_max_q) +
               '\n';
    }
    return out;
}

TrainState initial_train_state(const TrainConfig& config, std::size_t input_width) {
    Rng rng(derive_seed(config.seed, {0x1417ULL}));
    QNetShape shape{input_width, config.hidden_units, config.num_actions};
    TrainState s;
    s.net = DuelingQNet(shape, rng);
    s.target = make_target(s.net);
    s.adam = AdamState::for_layers(s.net.layers(), config.adam_beta1, config.adam_beta2,
                                   config.adam_epsilon);
    return s;
}

ValidationMetrics validation_metrics(const DuelingQNet& net, const TargetNet& target,
                                     const TransitionBatch& validation, const TrainConfig& config) {
    if (validation.empty()) throw DomainError("validation metrics over an empty set");
    const auto y = double_dqn_target(net, target, validation, config.gamma);
    const auto loss = evaluate_loss(net, validation, y, config.alpha);
    const Matrix q = q_values(net, validation.states);
    double sum = 0.0;
    for (std::size_t i = 0; i < q.rows(); ++i) {
        const auto row = q.row(i);
        sum += *std::max_element(row.begin(), row.end());
    }
    return {loss.total, sum / static_cast<double>(q.rows())};
}

namespace {

TransitionBatch gather_rows(const TransitionBatch& all, std::span<const std::size_t> idx) {
    TransitionBatch b;
    const std::size_t w = all.states.cols();
    b.states = Matrix(idx.size(), w);
    b.next_states = Matrix(idx.size(), w);
    b.actions.resize(idx.size());
    b.rewards.resize(idx.size());
    b.terminal.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const std::size_t r = idx[i];
        std::copy_n(all.states.row(r).begin(), w, b.states.row(i).begin());
        std::copy_n(all.next_states.row(r).begin(), w, b.next_states.row(i).begin());
        b.actions[i] = all.actions[r];
        b.rewards[i] = all.rewards[r];
        b.terminal[i] = all.terminal[r];
    }
    return b;
}

std::string fingerprint(std::span<const std::size_t> idx) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto i : idx) {
        h ^= static_cast<std::uint64_t>(i);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_checkpoint(const CheckpointPlan& plan, const TrainState& state,
                      const TrainConfig& config, const std::string& name) {
    Checkpoint ckpt{state, plan.norm, plan.binner, config};
    save_checkpoint(ckpt, plan.directory / name);
}

}  // namespace

TrainResult train_offline(const TransitionBatch& train, const TransitionBatch& validation,
                          const TrainConfig& config,
                          const std::optional<CheckpointPlan>& checkpoints) {
    config.validate();
    if (train.empty()) throw DomainError("cannot train on an empty dataset");
    if (validation.empty()) throw DomainError("training requires a non-empty validation set");
    TrainState state = initial_train_state(config, train.states.cols());
    train.validate(state.net.shape().actions);
    validation.validate(state.net.shape().actions);

    TrainResult result;
    auto log = [&](std::uint64_t step, const LossBreakdown& mean_loss) {
        const auto vm = validation_metrics(state.net, state.target, validation, config);
        result.metrics.records.push_back({step, mean_loss.total, mean_loss.bellman_loss,
                                          mean_loss.cql_penalty_mean, vm.loss, vm.mean_max_q});
    };

    const auto first_idx = sample_indices(train.size(), config.batch_size, 0, config.seed);
    log(0, total_loss(state.net, state.target, gather_rows(train, first_idx), config.gamma,
                      config.alpha)
               .breakdown);

    LossBreakdown running;
    std::uint64_t running_n = 0;
    for (std::uint64_t step = 0; step < config.total_steps; ++step) {
        const auto idx = sample_indices(train.size(), config.batch_size, step, config.seed);
        const TransitionBatch batch = gather_rows(train, idx);
        LossResult loss;
        try {
            loss = total_loss(state.net, state.target, batch, config.gamma, config.alpha);
            adam_step(state.net.layers(), loss.grads, state.adam, config.learning_rate);
        } catch (const NumericError& e) {
            throw TrainingError("non-finite value at step " + std::to_string(step) +
                                " (batch fingerprint " + fingerprint(idx) + "): " + e.what());
        }
        state.step = step + 1;
        running.total += loss.breakdown.total;
        running.bellman_loss += loss.breakdown.bellman_loss;
        running.cql_penalty_mean += loss.breakdown.cql_penalty_mean;
        ++running_n;

        if (state.step % config.target_sync_period == 0) sync_target(state.net, state.target);

        if (state.step % config.log_every == 0 || state.step == config.total_steps) {
            const double n = static_cast<double>(running_n);
            LossBreakdown mean{running.cql_penalty_mean / n, running.bellman_loss / n,
                               running.total / n, config.alpha};
            log(state.step, mean);
            running = {};
            running_n = 0;
        }
        if (checkpoints && config.checkpoint_every > 0 &&
            state.step % config.checkpoint_every == 0) {
            write_checkpoint(*checkpoints, state, config,
                             "step_" + std::to_string(state.step) + ".ckpt");
        }
    }
    if (checkpoints) write_checkpoint(*checkpoints, state, config, "final.ckpt");
    result.state = std::move(state);
    return result;
}

TrainResult train_offline(const OfflineDataset& train, const OfflineDataset& validation,
                          const TrainConfig& config,
                          const std::optional<CheckpointPlan>& checkpoints) {
    return train_offline(to_batch(train), to_batch(validation), config, checkpoints);
}

void check_terminal_rewards(const OfflineDataset& ds, const RewardParams& rewards) {
    for (const auto& r : ds.records) {
        if (!r.terminal) continue;
        const double expected = r.died ? rewards.terminal_death : rewards.terminal_survive;
        if (r.reward != expected) {
            throw ConsistencyError("patient " + std::to_string(r.patient_id) + " timestep " +
                                   std::to_string(r.timestep) + ": terminal reward " +
                                   format_double(r.reward) + " does not match outcome reward " +
                                   format_double(expected));
        }
    }
}

PipelineResult train_pipeline(OfflineDataset train, std::optional<OfflineDataset> validation,
                              const TrainConfig& config,
                              const std::optional<std::filesystem::path>& out_dir) {
    config.validate();
    if (config.num_actions != kNumActions) {
        throw ConfigError("clinical training needs num_actions = 25");
    }
    if (!validation) {
        const double share =
            config.split.validation / (config.split.train + config.split.validation);
        auto [kept, held] = holdout(train, share, config.split.seed);
        train = std::move(kept);
        validation = std::move(held);
    }
    check_terminal_rewards(train, config.rewards);
    check_terminal_rewards(*validation, config.rewards);

    PipelineResult out;
    out.binner = fit_binner(train);
    relabel_actions(train, out.binner);
    relabel_actions(*validation, out.binner);
    out.norm = fit_norm_stats(train);
    const auto train_n = normalize(train, out.norm);
    const auto val_n = normalize(*validation, out.norm);

    std::optional<CheckpointPlan> plan;
    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        plan = CheckpointPlan{*out_dir, out.norm, out.binner};
    }
    out.result = train_offline(train_n, val_n, config, plan);
    if (out_dir) write_text_file(*out_dir / "metrics.csv", out.result.metrics.to_csv());
    return out;
}

}  // namespace cql

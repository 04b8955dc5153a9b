#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cql/clinical_mdp.hpp"
#include "cql/cql_loss.hpp"
#include "cql/dataset.hpp"
#include "cql/kv_config.hpp"
#include "cql/qnet.hpp"
#include "cql/tensor.hpp"

namespace cql {

struct TrainConfig {
    double gamma = 0.99;
    double alpha = kDefaultAlpha;
    double learning_rate = 1e-4;
    std::uint64_t batch_size = 32;
    std::uint64_t total_steps = 10000;
    std::uint64_t target_sync_period = 1000;
    std::uint64_t seed = 0;
    std::uint64_t log_every = 500;
    std::uint64_t checkpoint_every = 0;  // 0: final checkpoint only
    std::uint64_t hidden_units = kHiddenUnits;
    std::uint64_t num_actions = kNumActions;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    RewardParams rewards;
    SplitSpec split;

    /// Throws ConfigError.
    void validate() const;
};

/// Reads every TrainConfig key; unknown keys are rejected.
TrainConfig train_config_from_config(KeyValueConfig& cfg);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string train_config_to_text(const TrainConfig& c);

struct MetricsRecord {
    std::uint64_t step = 0;
    double total_loss = 0.0;
    double bellman_loss = 0.0;
    double cql_penalty = 0.0;
    double validation_loss = 0.0;
    double validation_mean_max_q = 0.0;
};

struct MetricsLog {
    std::vector<MetricsRecord> records;

    std::string to_csv() const;
};

struct TrainState {
    DuelingQNet net;
    TargetNet target;
    AdamState adam;
    std::uint64_t step = 0;
};

/// Fresh network, target copy and zeroed optimizer for `config`.
TrainState initial_train_state(const TrainConfig& config, std::size_t input_width = kStateFeatures);

struct ValidationMetrics {
    double loss = 0.0;
    double mean_max_q = 0.0;
};

/// Full-set mean loss (with the target net) and mean of max_a Q(s, a).
/// Throws DomainError on an empty set.
ValidationMetrics validation_metrics(const DuelingQNet& net, const TargetNet& target,
                                     const TransitionBatch& validation, const TrainConfig& config);

/// Where periodic checkpoints go, plus the preprocessing artifacts they embed.
struct CheckpointPlan {
    std::filesystem::path directory;
    NormStats norm;
    std::optional<QuartileBinner> binner;
};

struct TrainResult {
    TrainState state;
    MetricsLog metrics;
};

/// Offline training over fixed, already-normalized data. Runs exactly
/// config.total_steps Adam updates; a pure function of its arguments.
/// Non-finite losses abort with TrainingError naming the step and a batch fingerprint.
TrainResult train_offline(const TransitionBatch& train, const TransitionBatch& validation,
                          const TrainConfig& config,
                          const std::optional<CheckpointPlan>& checkpoints = std::nullopt);

TrainResult train_offline(const OfflineDataset& train, const OfflineDataset& validation,
                          const TrainConfig& config,
                          const std::optional<CheckpointPlan>& checkpoints = std::nullopt);

/// Terminal rows must carry exactly one of the configured terminal rewards.
void check_terminal_rewards(const OfflineDataset& ds, const RewardParams& rewards);

struct Checkpoint;

struct PipelineResult {
    TrainResult result;
    NormStats norm;
    QuartileBinner binner;
};

/// Raw-data training entry used by the CLI: holds out validation patients when
/// `validation` is absent, fits the binner and normalization on the training
/// patients only, relabels actions, trains, and (when `out_dir` is set) writes
/// final.ckpt and metrics.csv there.
PipelineResult train_pipeline(OfflineDataset train, std::optional<OfflineDataset> validation,
                              const TrainConfig& config,
                              const std::optional<std::filesystem::path>& out_dir);

}  // namespace cql

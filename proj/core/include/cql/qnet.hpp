#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cql/batch.hpp"
#include "cql/rng.hpp"
#include "cql/tensor.hpp"

namespace cql {

inline constexpr std::size_t kStateFeatures = 48;
inline constexpr std::size_t kHiddenUnits = 128;
inline constexpr std::size_t kNumActions = 25;

struct QNetShape {
    std::size_t input = kStateFeatures;
    std::size_t hidden = kHiddenUnits;
    std::size_t actions = kNumActions;

    friend bool operator==(const QNetShape&, const QNetShape&) = default;
};

/// Dueling Q-network: two LeakyReLU trunk layers feeding a scalar value head
/// and a per-action advantage head, combined as
///   Q(s,a) = V(s) + A(s,a) - mean_a' A(s,a').
/// Parameter order (also the checkpoint order): trunk0, trunk1, value, advantage.
class DuelingQNet {
public:
    static constexpr std::size_t kTrunk0 = 0;
    static constexpr std::size_t kTrunk1 = 1;
    static constexpr std::size_t kValue = 2;
    static constexpr std::size_t kAdvantage = 3;

    /// All parameters zero.
    explicit DuelingQNet(QNetShape shape = {});
    /// He-uniform initialization from `rng`.
    DuelingQNet(QNetShape shape, Rng& rng);

    const QNetShape& shape() const noexcept { return shape_; }

    std::span<DenseLayer> layers() noexcept { return layers_; }
    std::span<const DenseLayer> layers() const noexcept { return layers_; }
    DenseLayer& layer(std::size_t i) { return layers_.at(i); }
    const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }

    std::size_t parameter_count() const noexcept;

    friend bool operator==(const DuelingQNet&, const DuelingQNet&) = default;

private:
    QNetShape shape_;
    std::vector<DenseLayer> layers_;
};

/// Per-layer caches of one forward pass, kept for q_backward().
struct QForward {
    ForwardCache trunk;
    ForwardCache value;
    ForwardCache advantage;
    Matrix q;
};

/// Mean-centred dueling aggregation of a (batch x 1) value and (batch x A) advantage.
Matrix dueling_aggregate(const Matrix& value, const Matrix& advantage);

/// Q-values, one row (QRow) per state. Throws DimensionError on a width mismatch.
Matrix q_values(const DuelingQNet& net, const Matrix& states);

QForward q_forward(const DuelingQNet& net, const Matrix& states);

/// Reverse-mode gradients of a scalar loss given dLoss/dQ (batch x A).
Gradients q_backward(const DuelingQNet& net, const QForward& fwd, const Matrix& q_gradient);

/// Argmax with ties broken toward the lowest index.
int greedy_action(std::span<const double> q_row);
int greedy_action(const DuelingQNet& net, std::span<const double> state);
std::vector<int> greedy_actions(const DuelingQNet& net, const Matrix& states);

/// Frozen copy of the online network used to evaluate Double-DQN targets.
struct TargetNet {
    DuelingQNet params;
    std::uint64_t generation = 0;

    friend bool operator==(const TargetNet&, const TargetNet&) = default;
};

TargetNet make_target(const DuelingQNet& net);

/// Hard copy of `net` into `target`; bumps the generation counter by one.
void sync_target(const DuelingQNet& net, TargetNet& target);

/// y = r for terminal transitions, otherwise
/// y = r + gamma * Q_target(s', argmax_a Q_main(s', a)).
/// Throws ConfigError unless 0 <= gamma < 1.
std::vector<double> double_dqn_target(const DuelingQNet& main, const TargetNet& target,
                                      const TransitionBatch& batch, double gamma);

}  // namespace cql

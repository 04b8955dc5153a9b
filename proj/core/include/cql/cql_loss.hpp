#pragma once

#include <span>
#include <vector>

#include "cql/batch.hpp"
#include "cql/qnet.hpp"
#include "cql/tensor.hpp"

namespace cql {

inline constexpr double kDefaultAlpha = 0.1;

struct LossBreakdown {
    double cql_penalty_mean = 0.0;
    double bellman_loss = 0.0;
    double total = 0.0;
    double alpha = 0.0;
};

struct LossResult {
    LossBreakdown breakdown;
    Gradients grads;
};

/// log(sum_i exp(v_i)), max-shifted. Throws DomainError on empty or non-finite input.
double logsumexp(std::span<const double> values);

/// logsumexp(q_row) - q_row[data_action]. Strictly positive for finite rows
/// with at least two entries (up to floating-point resolution).
double cql_penalty(std::span<const double> q_row, int data_action);

/// d penalty / d q_row = softmax(q_row) - onehot(data_action).
std::vector<double> cql_penalty_gradient(std::span<const double> q_row, int data_action);

/// Conservative loss with fixed (gradient-stopped) TD targets:
///   total = alpha * mean_i[lse(Q(s_i,.)) - Q(s_i,a_i)] + mean_i (Q(s_i,a_i) - y_i)^2
LossResult loss_with_targets(const DuelingQNet& net, const TransitionBatch& batch,
                             std::span<const double> targets, double alpha);

/// Same quantity without gradients.
LossBreakdown evaluate_loss(const DuelingQNet& net, const TransitionBatch& batch,
                            std::span<const double> targets, double alpha);

/// Targets from double_dqn_target(), then loss_with_targets().
LossResult total_loss(const DuelingQNet& net, const TargetNet& target,
                      const TransitionBatch& batch, double gamma, double alpha);

}  // namespace cql

#include "cql/cql_loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cql/errors.hpp"

namespace cql {

namespace {

void check_row(std::span<const double> values) {
    if (values.empty()) throw DomainError("logsumexp of an empty row");
    for (double v : values) {
        if (!std::isfinite(v)) throw DomainError("logsumexp of a non-finite value");
    }
}

void check_action(std::span<const double> q_row, int a) {
    if (a < 0 || static_cast<std::size_t>(a) >= q_row.size()) {
        throw DomainError("data action " + std::to_string(a) + " outside [0, " +
                          std::to_string(q_row.size()) + ")");
    }
}

// Returns (max, index of max, sum over the other entries of exp(v - max)).
struct Shifted {
    double max;
    std::size_t argmax;
    double rest;
};

Shifted shifted_sum(std::span<const double> values) {
    const auto it = std::max_element(values.begin(), values.end());
    Shifted s{*it, static_cast<std::size_t>(it - values.begin()), 0.0};
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i != s.argmax) s.rest += std::exp(values[i] - s.max);
    }
    return s;
}

void check_inputs(const DuelingQNet& net, const TransitionBatch& batch,
                  std::span<const double> targets, double alpha) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw ConfigError("alpha must be a finite value >= 0");
    }
    if (batch.empty()) throw DomainError("loss over an empty batch");
    batch.validate(net.shape().actions);
    if (targets.size() != batch.size()) {
        throw DimensionError("target count " + std::to_string(targets.size()) +
                             " != batch size " + std::to_string(batch.size()));
    }
}

// Fills the breakdown and, when `dq` is non-null, dLoss/dQ.
LossBreakdown assemble(const Matrix& q, const TransitionBatch& batch,
                       std::span<const double> targets, double alpha, Matrix* dq) {
    const std::size_t n = batch.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    double penalty_sum = 0.0;
    double sq_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = q.row(i);
        const int a = batch.actions[i];
        const double td = row[static_cast<std::size_t>(a)] - targets[i];
        penalty_sum += cql_penalty(row, a);
        sq_sum += td * td;
        if (dq != nullptr) {
            auto g = dq->row(i);
            if (alpha != 0.0) {
                const auto pg = cql_penalty_gradient(row, a);
                for (std::size_t k = 0; k < g.size(); ++k) g[k] = alpha * inv_n * pg[k];
            }
            g[static_cast<std::size_t>(a)] += 2.0 * inv_n * td;
        }
    }
    LossBreakdown b;
    b.alpha = alpha;
    b.cql_penalty_mean = penalty_sum * inv_n;
    b.bellman_loss = sq_sum * inv_n;
    b.total = alpha * b.cql_penalty_mean + b.bellman_loss;
    if (!std::isfinite(b.total)) throw NumericError("loss evaluated to a non-finite value");
    return b;
}

}  // namespace

double logsumexp(std::span<const double> values) {
    check_row(values);
    const auto s = shifted_sum(values);
    return s.max + std::log1p(s.rest);
}

double cql_penalty(std::span<const double> q_row, int data_action) {
    check_row(q_row);
    check_action(q_row, data_action);
    const auto s = shifted_sum(q_row);
    // (max - q[a]) + log1p(rest) keeps precision when q[a] is the maximum.
    return (s.max - q_row[static_cast<std::size_t>(data_action)]) + std::log1p(s.rest);
}

std::vector<double> cql_penalty_gradient(std::span<const double> q_row, int data_action) {
    check_row(q_row);
    check_action(q_row, data_action);
    const double m = *std::max_element(q_row.begin(), q_row.end());
    std::vector<double> g(q_row.size());
    double z = 0.0;
    for (std::size_t k = 0; k < q_row.size(); ++k) {
        g[k] = std::exp(q_row[k] - m);
        z += g[k];
    }
    for (double& v : g) v /= z;
    g[static_cast<std::size_t>(data_action)] -= 1.0;
    return g;
}

LossResult loss_with_targets(const DuelingQNet& net, const TransitionBatch& batch,
                             std::span<const double> targets, double alpha) {
    check_inputs(net, batch, targets, alpha);
    QForward fwd = q_forward(net, batch.states);
    Matrix dq(fwd.q.rows(), fwd.q.cols());
    LossResult r;
    r.breakdown = assemble(fwd.q, batch, targets, alpha, &dq);
    r.grads = q_backward(net, fwd, dq);
    return r;
}

LossBreakdown evaluate_loss(const DuelingQNet& net, const TransitionBatch& batch,
                            std::span<const double> targets, double alpha) {
    check_inputs(net, batch, targets, alpha);
    Matrix q = q_values(net, batch.states);
    return assemble(q, batch, targets, alpha, nullptr);
}

LossResult total_loss(const DuelingQNet& net, const TargetNet& target,
                      const TransitionBatch& batch, double gamma, double alpha) {
    if (batch.empty()) throw DomainError("loss over an empty batch");
    const auto y = double_dqn_target(net, target, batch, gamma);
    return loss_with_targets(net, batch, y, alpha);
}

}  // namespace cql

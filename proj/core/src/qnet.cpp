#include "cql/qnet.hpp"

#include <cmath>
#include <string>

#include "cql/errors.hpp"

namespace cql {

void TransitionBatch::validate(std::size_t num_actions) const {
    const std::size_t n = actions.size();
    if (states.rows() != n || next_states.rows() != n || rewards.size() != n ||
        terminal.size() != n) {
        throw DimensionError("transition batch columns have inconsistent lengths");
    }
    if (states.cols() != next_states.cols()) {
        throw DimensionError("state and next_state widths differ in transition batch");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (actions[i] < 0 || static_cast<std::size_t>(actions[i]) >= num_actions) {
            throw DomainError("action index " + std::to_string(actions[i]) + " at batch row " +
                              std::to_string(i) + " outside [0, " +
                              std::to_string(num_actions) + ")");
        }
        if (!std::isfinite(rewards[i])) {
            throw NumericError("non-finite reward at batch row " + std::to_string(i));
        }
    }
}

namespace {

std::vector<DenseLayer> make_layers(const QNetShape& s) {
    if (s.input == 0 || s.hidden == 0 || s.actions == 0) {
        throw ConfigError("network dimensions must be positive");
    }
    std::vector<DenseLayer> layers;
    layers.emplace_back(s.input, s.hidden, Activation::LeakyReLU);
    layers.emplace_back(s.hidden, s.hidden, Activation::LeakyReLU);
    layers.emplace_back(s.hidden, 1, Activation::Identity);
    layers.emplace_back(s.hidden, s.actions, Activation::Identity);
    return layers;
}

void check_width(const DuelingQNet& net, const Matrix& states) {
    if (states.cols() != net.shape().input) {
        throw DimensionError("state width " + std::to_string(states.cols()) +
                             " does not match network input " +
                             std::to_string(net.shape().input));
    }
}

}  // namespace

DuelingQNet::DuelingQNet(QNetShape shape) : shape_(shape), layers_(make_layers(shape)) {}

DuelingQNet::DuelingQNet(QNetShape shape, Rng& rng) : DuelingQNet(shape) {
    for (auto& l : layers_) he_uniform_init(l, rng);
}

std::size_t DuelingQNet::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.biases.size();
    return n;
}

Matrix dueling_aggregate(const Matrix& value, const Matrix& advantage) {
    if (value.cols() != 1 || value.rows() != advantage.rows()) {
        throw DimensionError("dueling_aggregate expects value (B x 1) and advantage (B x A)");
    }
    Matrix q(advantage.rows(), advantage.cols());
    const double inv_a = 1.0 / static_cast<double>(advantage.cols());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        auto a = advantage.row(i);
        double mean = 0.0;
        for (double v : a) mean += v;
        mean *= inv_a;
        auto out = q.row(i);
        for (std::size_t k = 0; k < a.size(); ++k) out[k] = value(i, 0) + a[k] - mean;
    }
    return q;
}

Matrix q_values(const DuelingQNet& net, const Matrix& states) {
    check_width(net, states);
    const auto layers = net.layers();
    Matrix h = predict(layers.subspan(0, 2), states);
    Matrix v = predict(layers.subspan(DuelingQNet::kValue, 1), h);
    Matrix a = predict(layers.subspan(DuelingQNet::kAdvantage, 1), h);
    return dueling_aggregate(v, a);
}

QForward q_forward(const DuelingQNet& net, const Matrix& states) {
    check_width(net, states);
    const auto layers = net.layers();
    QForward f;
    f.trunk = forward(layers.subspan(0, 2), states);
    f.value = forward(layers.subspan(DuelingQNet::kValue, 1), f.trunk.output);
    f.advantage = forward(layers.subspan(DuelingQNet::kAdvantage, 1), f.trunk.output);
    f.q = dueling_aggregate(f.value.output, f.advantage.output);
    return f;
}

Gradients q_backward(const DuelingQNet& net, const QForward& fwd, const Matrix& q_gradient) {
    if (q_gradient.rows() != fwd.q.rows() || q_gradient.cols() != fwd.q.cols()) {
        throw ConsistencyError("Q gradient shape does not match the cached forward pass");
    }
    const std::size_t batch = q_gradient.rows();
    const std::size_t n_act = q_gradient.cols();
    const double inv_a = 1.0 / static_cast<double>(n_act);

    // dV = sum_a dQ_a ; dA_a = dQ_a - mean_a' dQ_a'
    Matrix d_value(batch, 1);
    Matrix d_adv(batch, n_act);
    for (std::size_t i = 0; i < batch; ++i) {
        auto g = q_gradient.row(i);
        double sum = 0.0;
        for (double v : g) sum += v;
        d_value(i, 0) = sum;
        const double mean = sum * inv_a;
        auto da = d_adv.row(i);
        for (std::size_t k = 0; k < n_act; ++k) da[k] = g[k] - mean;
    }

    const auto layers = net.layers();
    auto value_back = backward(layers.subspan(DuelingQNet::kValue, 1), fwd.value, d_value);
    auto adv_back = backward(layers.subspan(DuelingQNet::kAdvantage, 1), fwd.advantage, d_adv);

    Matrix d_hidden = value_back.input_gradient;
    auto dh = d_hidden.data();
    auto dh_adv = adv_back.input_gradient.data();
    for (std::size_t k = 0; k < dh.size(); ++k) dh[k] += dh_adv[k];

    auto trunk_back = backward(layers.subspan(0, 2), fwd.trunk, d_hidden);

    Gradients out;
    out.layers.reserve(4);
    out.layers.push_back(std::move(trunk_back.grads.layers[0]));
    out.layers.push_back(std::move(trunk_back.grads.layers[1]));
    out.layers.push_back(std::move(value_back.grads.layers[0]));
    out.layers.push_back(std::move(adv_back.grads.layers[0]));
    return out;
}

int greedy_action(std::span<const double> q_row) {
    if (q_row.empty()) throw DomainError("greedy_action on an empty Q row");
    std::size_t best = 0;
    for (std::size_t k = 1; k < q_row.size(); ++k) {
        if (q_row[k] > q_row[best]) best = k;
    }
    return static_cast<int>(best);
}

int greedy_action(const DuelingQNet& net, std::span<const double> state) {
    Matrix s(1, state.size(), std::vector<double>(state.begin(), state.end()));
    Matrix q = q_values(net, s);
    return greedy_action(q.row(0));
}

std::vector<int> greedy_actions(const DuelingQNet& net, const Matrix& states) {
    Matrix q = q_values(net, states);
    std::vector<int> out(q.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) out[i] = greedy_action(q.row(i));
    return out;
}

TargetNet make_target(const DuelingQNet& net) { return TargetNet{net, 0}; }

void sync_target(const DuelingQNet& net, TargetNet& target) {
    if (!(net.shape() == target.params.shape())) {
        throw DimensionError("sync_target: network shapes differ");
    }
    target.params = net;
    target.generation += 1;
}

std::vector<double> double_dqn_target(const DuelingQNet& main, const TargetNet& target,
                                      const TransitionBatch& batch, double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw ConfigError("gamma must satisfy 0 <= gamma < 1, got " + std::to_string(gamma));
    }
    batch.validate(main.shape().actions);
    std::vector<double> y(batch.rewards);
    if (batch.empty() || gamma == 0.0) return y;

    bool any_live = false;
    for (auto t : batch.terminal) any_live = any_live || !t;
    if (!any_live) return y;

    Matrix q_main = q_values(main, batch.next_states);
    Matrix q_tgt = q_values(target.params, batch.next_states);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.terminal[i]) continue;
        const int a_star = greedy_action(q_main.row(i));
        y[i] += gamma * q_tgt(i, static_cast<std::size_t>(a_star));
    }
    return y;
}

}  // namespace cql

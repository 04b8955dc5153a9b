#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cql/dataset.hpp"
#include "cql/qnet.hpp"
#include "cql/tensor.hpp"
#include "cql/trainer.hpp"

namespace cql {

/// Finite MDP with dense tables. Taking any action in a terminal state pays
/// R[s][a] and ends the episode.
struct TabularMDP {
    std::size_t states = 0;
    std::size_t actions = 0;
    std::vector<double> transition;      // [s][a][s'], states*actions*states
    std::vector<double> reward;          // [s][a]
    std::vector<std::uint8_t> terminal;  // [s]
    double gamma = 0.9;

    double p(std::size_t s, std::size_t a, std::size_t next) const {
        return transition[(s * actions + a) * states + next];
    }
    double& p(std::size_t s, std::size_t a, std::size_t next) {
        return transition[(s * actions + a) * states + next];
    }
    double r(std::size_t s, std::size_t a) const { return reward[s * actions + a]; }
    double& r(std::size_t s, std::size_t a) { return reward[s * actions + a]; }

    static TabularMDP zeros(std::size_t states, std::size_t actions, double gamma);

    /// Rows of P sum to 1 within 1e-12, entries non-negative, rewards finite.
    void validate() const;
};

/// Q-values indexed (state, action).
using QTable = Matrix;

inline constexpr double kOracleTolerance = 1e-10;

/// Lower bound min(R_min, R_min / (1 - gamma)); value iteration is monotone from here.
QTable pessimistic_init(const TabularMDP& mdp);

/// One application of the Bellman optimality operator.
QTable bellman_backup(const TabularMDP& mdp, const QTable& q);

double bellman_residual(const TabularMDP& mdp, const QTable& q);

/// Iterates from pessimistic_init() until the sup-norm residual is below
/// `tolerance`. Throws ConfigError when gamma >= 1.
QTable value_iteration(const TabularMDP& mdp, double tolerance = kOracleTolerance);

/// V^pi of a deterministic policy by solving (I - gamma P_pi) V = R_pi.
std::vector<double> evaluate_policy(const TabularMDP& mdp, const std::vector<std::size_t>& policy);

/// Q* from the pointwise maximum of V^pi over all actions^states deterministic
/// policies. Throws ConfigError beyond one million policies.
QTable solve_by_policy_enumeration(const TabularMDP& mdp);

/// Text form: `states N`, `actions M`, `gamma G`, `terminal t0 .. tN-1`,
/// `reward` followed by N rows of M values, `transition` followed by N*M rows
/// of N values (row index s*M + a). '#' starts a comment.
std::string mdp_to_text(const TabularMDP& mdp);
TabularMDP mdp_from_text(std::string_view text, std::string_view source = "<mdp>");

// ---------------------------------------------------------------------------
// Bridge to the 48-input network
// ---------------------------------------------------------------------------

/// One-hot of `state` padded with zeros to `width` features.
/// Throws EncodingError when state >= width.
std::vector<double> one_hot_state(std::size_t state, std::size_t width = kStateFeatures);
Matrix one_hot_states(std::size_t states, std::size_t width = kStateFeatures);

/// Q-table read off `net` on one-hot encoded states; the net must have
/// exactly `actions` outputs.
QTable q_table_from_net(const DuelingQNet& net, std::size_t states, std::size_t actions);

/// Offline transitions from `mdp` on one-hot states. Each (s, a) pair with
/// a != omitted_action contributes `samples_per_pair` rows whose successor
/// counts are the largest-remainder rounding of samples_per_pair * P(.|s,a),
/// shuffled with `seed`. Every row is its own patient id.
OfflineDataset mdp_dataset(const TabularMDP& mdp, std::size_t samples_per_pair,
                           std::uint64_t seed, std::optional<std::size_t> omitted_action = {});

/// Same, with successors drawn i.i.d. from P.
OfflineDataset mdp_dataset_sampled(const TabularMDP& mdp, std::size_t samples_per_pair,
                                   std::uint64_t seed,
                                   std::optional<std::size_t> omitted_action = {});

/// MDP plus the learning budget used by `oracle-check`.
struct OracleFixture {
    TabularMDP mdp;
    TrainConfig train;
    std::size_t samples_per_pair = 400;
    std::uint64_t data_seed = 0;
    double max_abs_tolerance = 0.05;
};

/// MDP text followed by `fixture.samples_per_pair`, `fixture.data_seed`,
/// `fixture.tolerance` and `train.<key>` lines (TrainConfig keys).
OracleFixture fixture_from_text(std::string_view text, std::string_view source = "<fixture>");
OracleFixture load_fixture(const std::filesystem::path& path);

struct OracleReport {
    QTable q_star;
    QTable q_enumerated;
    QTable q_net;
    double max_abs_error = 0.0;       // |Q_net - Q*|
    double enumeration_gap = 0.0;     // |Q_vi - Q_enum|
    std::size_t transitions = 0;
    bool passed = false;
};

/// Value iteration, brute-force cross-check, then offline training on a
/// full-coverage dataset and comparison of the learned Q-table against Q*.
OracleReport run_oracle_check(const OracleFixture& fixture);

}  // namespace cql

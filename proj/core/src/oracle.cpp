#include "cql/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cql/errors.hpp"
#include "cql/kv_config.hpp"
#include "cql/rng.hpp"

namespace cql {

TabularMDP TabularMDP::zeros(std::size_t states, std::size_t actions, double gamma) {
    TabularMDP m;
    m.states = states;
    m.actions = actions;
    m.transition.assign(states * actions * states, 0.0);
    m.reward.assign(states * actions, 0.0);
    m.terminal.assign(states, 0);
    m.gamma = gamma;
    return m;
}

void TabularMDP::validate() const {
    if (states == 0 || actions == 0) throw ConfigError("MDP needs at least one state and action");
    if (transition.size() != states * actions * states || reward.size() != states * actions ||
        terminal.size() != states) {
        throw DimensionError("MDP table sizes do not match its dimensions");
    }
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("MDP gamma must be >= 0");
    for (std::size_t s = 0; s < states; ++s) {
        for (std::size_t a = 0; a < actions; ++a) {
            if (!std::isfinite(r(s, a))) throw ConfigError("MDP rewards must be finite");
            double sum = 0.0;
            for (std::size_t n = 0; n < states; ++n) {
                if (!(p(s, a, n) >= 0.0)) throw ConfigError("MDP probabilities must be >= 0");
                sum += p(s, a, n);
            }
            if (std::abs(sum - 1.0) > 1e-12) {
                throw ConfigError("transition row (" + std::to_string(s) + ", " +
                                  std::to_string(a) + ") sums to " + format_double(sum));
            }
        }
    }
}

namespace {

void require_discounted(const TabularMDP& mdp) {
    if (!(mdp.gamma < 1.0)) throw ConfigError("value iteration requires gamma < 1");
}

std::vector<double> state_values(const QTable& q) {
    std::vector<double> v(q.rows());
    for (std::size_t s = 0; s < q.rows(); ++s) {
        const auto row = q.row(s);
        v[s] = *std::max_element(row.begin(), row.end());
    }
    return v;
}

QTable q_from_values(const TabularMDP& mdp, const std::vector<double>& v) {
    QTable q(mdp.states, mdp.actions);
    for (std::size_t s = 0; s < mdp.states; ++s) {
        for (std::size_t a = 0; a < mdp.actions; ++a) {
            double cont = 0.0;
            if (!mdp.terminal[s]) {
                for (std::size_t n = 0; n < mdp.states; ++n) cont += mdp.p(s, a, n) * v[n];
            }
            q(s, a) = mdp.r(s, a) + mdp.gamma * cont;
        }
    }
    return q;
}

// Solves A x = b in place by Gaussian elimination with partial pivoting.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        }
        if (std::abs(a[piv * n + col]) < 1e-300) throw NumericError("singular policy system");
        if (piv != col) {
            for (std::size_t k = 0; k < n; ++k) std::swap(a[col * n + k], a[piv * n + k]);
            std::swap(b[col], b[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / a[col * n + col];
            if (f == 0.0) continue;
            for (std::size_t k = col; k < n; ++k) a[r * n + k] -= f * a[col * n + k];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t k = i + 1; k < n; ++k) acc -= a[i * n + k] * x[k];
        x[i] = acc / a[i * n + i];
    }
    return x;
}

}  // namespace

QTable pessimistic_init(const TabularMDP& mdp) {
    require_discounted(mdp);
    const double r_min = *std::min_element(mdp.reward.begin(), mdp.reward.end());
    return QTable(mdp.states, mdp.actions, std::min(r_min, r_min / (1.0 - mdp.gamma)));
}

QTable bellman_backup(const TabularMDP& mdp, const QTable& q) {
    return q_from_values(mdp, state_values(q));
}

double bellman_residual(const TabularMDP& mdp, const QTable& q) {
    const QTable next = bellman_backup(mdp, q);
    double r = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        r = std::max(r, std::abs(next.data()[k] - q.data()[k]));
    }
    return r;
}

QTable value_iteration(const TabularMDP& mdp, double tolerance) {
    require_discounted(mdp);
    mdp.validate();
    if (!(tolerance > 0.0)) throw ConfigError("value iteration tolerance must be > 0");
    QTable q = pessimistic_init(mdp);
    constexpr std::size_t kMaxIterations = 10'000'000;
    for (std::size_t it = 0; it < kMaxIterations; ++it) {
        QTable next = bellman_backup(mdp, q);
        double delta = 0.0;
        for (std::size_t k = 0; k < q.size(); ++k) {
            delta = std::max(delta, std::abs(next.data()[k] - q.data()[k]));
        }
        if (delta < tolerance) {
            // The return contract is the residual of the table actually returned.
            if (bellman_residual(mdp, q) < tolerance) return q;
        }
        q = std::move(next);
    }
    throw NumericError("value iteration did not converge");
}

std::vector<double> evaluate_policy(const TabularMDP& mdp, const std::vector<std::size_t>& policy) {
    require_discounted(mdp);
    const std::size_t n = mdp.states;
    if (policy.size() != n) throw DimensionError("policy length does not match state count");
    std::vector<double> a(n * n, 0.0);
    std::vector<double> b(n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t act = policy[s];
        if (act >= mdp.actions) throw DomainError("policy action out of range");
        a[s * n + s] = 1.0;
        b[s] = mdp.r(s, act);
        if (mdp.terminal[s]) continue;
        for (std::size_t k = 0; k < n; ++k) a[s * n + k] -= mdp.gamma * mdp.p(s, act, k);
    }
    return solve_linear(std::move(a), std::move(b));
}

QTable solve_by_policy_enumeration(const TabularMDP& mdp) {
    require_discounted(mdp);
    mdp.validate();
    double count = std::pow(static_cast<double>(mdp.actions), static_cast<double>(mdp.states));
    if (count > 1e6) throw ConfigError("policy enumeration limited to one million policies");

    std::vector<std::size_t> policy(mdp.states, 0);
    std::vector<double> best(mdp.states, -std::numeric_limits<double>::infinity());
    while (true) {
        const auto v = evaluate_policy(mdp, policy);
        for (std::size_t s = 0; s < mdp.states; ++s) best[s] = std::max(best[s], v[s]);
        std::size_t digit = 0;
        while (digit < mdp.states && ++policy[digit] == mdp.actions) policy[digit++] = 0;
        if (digit == mdp.states) break;
    }
    return q_from_values(mdp, best);
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

std::string mdp_to_text(const TabularMDP& mdp) {
    std::string out;
    out += "states " + std::to_string(mdp.states) + "\n";
    out += "actions " + std::to_string(mdp.actions) + "\n";
    out += "gamma " + format_double(mdp.gamma) + "\n";
    out += "terminal";
    for (auto t : mdp.terminal) out += t ? " 1" : " 0";
    out += "\nreward\n";
    for (std::size_t s = 0; s < mdp.states; ++s) {
        for (std::size_t a = 0; a < mdp.actions; ++a) {
            out += (a ? " " : "") + format_double(mdp.r(s, a));
        }
        out += '\n';
    }
    out += "transition\n";
    for (std::size_t s = 0; s < mdp.states; ++s) {
        for (std::size_t a = 0; a < mdp.actions; ++a) {
            for (std::size_t n = 0; n < mdp.states; ++n) {
                out += (n ? " " : "") + format_double(mdp.p(s, a, n));
            }
            out += '\n';
        }
    }
    return out;
}

namespace {

struct Line {
    std::size_t number;
    std::vector<std::string> tokens;
};

std::vector<Line> tokenize(std::string_view text) {
    std::vector<Line> lines;
    std::size_t no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++no;
        if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
        std::istringstream ls(raw);
        Line l{no, {}};
        for (std::string tok; ls >> tok;) l.tokens.push_back(tok);
        if (!l.tokens.empty()) lines.push_back(std::move(l));
    }
    return lines;
}

}  // namespace

TabularMDP mdp_from_text(std::string_view text, std::string_view source) {
    const auto lines = tokenize(text);
    std::size_t i = 0;
    auto where = [&](std::size_t k) {
        return std::string(source) + ":" +
               std::to_string(k < lines.size() ? lines[k].number : lines.empty() ? 0 : lines.back().number);
    };
    auto expect = [&](std::string_view key, std::size_t n_values) -> const Line& {
        if (i >= lines.size() || lines[i].tokens[0] != key ||
            lines[i].tokens.size() != n_values + 1) {
            throw ParseError(where(i) + ": expected '" + std::string(key) + "' with " +
                             std::to_string(n_values) + " value(s)");
        }
        return lines[i++];
    };
    auto scalar = [&](std::string_view key) -> std::pair<const std::string*, std::string> {
        const auto& line = expect(key, 1);
        return {&line.tokens[1], where(i - 1)};
    };
    const auto [n_tok, n_at] = scalar("states");
    const auto n = static_cast<std::size_t>(parse_uint(*n_tok, n_at));
    const auto [m_tok, m_at] = scalar("actions");
    const auto m = static_cast<std::size_t>(parse_uint(*m_tok, m_at));
    const auto [g_tok, g_at] = scalar("gamma");
    const double gamma = parse_double(*g_tok, g_at);
    if (n == 0 || m == 0 || n > 4096 || m > 4096) throw ParseError(where(i) + ": bad dimensions");
    TabularMDP mdp = TabularMDP::zeros(n, m, gamma);
    const auto& term = expect("terminal", n);
    const auto term_at = where(i - 1);
    for (std::size_t s = 0; s < n; ++s) {
        mdp.terminal[s] = parse_uint(term.tokens[s + 1], term_at) != 0;
    }
    auto table = [&](std::string_view key, std::size_t rows, std::size_t cols, double* dst) {
        expect(key, 0);
        for (std::size_t r = 0; r < rows; ++r, ++i) {
            if (i >= lines.size() || lines[i].tokens.size() != cols) {
                throw ParseError(where(i) + ": expected " + std::to_string(cols) + " values in '" +
                                 std::string(key) + "' row " + std::to_string(r));
            }
            for (std::size_t c = 0; c < cols; ++c) {
                dst[r * cols + c] = parse_double(lines[i].tokens[c], where(i));
            }
        }
    };
    table("reward", n, m, mdp.reward.data());
    table("transition", n * m, n, mdp.transition.data());
    if (i != lines.size()) throw ParseError(where(i) + ": unexpected trailing content");
    mdp.validate();
    return mdp;
}

// ---------------------------------------------------------------------------
// Network bridge and datasets
// ---------------------------------------------------------------------------

std::vector<double> one_hot_state(std::size_t state, std::size_t width) {
    if (state >= width) {
        throw EncodingError("state " + std::to_string(state) + " cannot be one-hot encoded in " +
                            std::to_string(width) + " features");
    }
    std::vector<double> v(width, 0.0);
    v[state] = 1.0;
    return v;
}

Matrix one_hot_states(std::size_t states, std::size_t width) {
    if (states > width) {
        throw EncodingError(std::to_string(states) + " states exceed the " +
                            std::to_string(width) + "-feature one-hot encoding");
    }
    Matrix m(states, width);
    for (std::size_t s = 0; s < states; ++s) m(s, s) = 1.0;
    return m;
}

QTable q_table_from_net(const DuelingQNet& net, std::size_t states, std::size_t actions) {
    if (net.shape().actions != actions) {
        throw DimensionError("network has " + std::to_string(net.shape().actions) +
                             " actions, MDP has " + std::to_string(actions));
    }
    return q_values(net, one_hot_states(states, net.shape().input));
}

namespace {

std::vector<std::size_t> stratified_counts(const TabularMDP& mdp, std::size_t s, std::size_t a,
                                           std::size_t total) {
    std::vector<std::size_t> counts(mdp.states);
    std::vector<std::pair<double, std::size_t>> frac;
    std::size_t assigned = 0;
    for (std::size_t n = 0; n < mdp.states; ++n) {
        const double exact = mdp.p(s, a, n) * static_cast<double>(total);
        counts[n] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[n];
        frac.emplace_back(exact - std::floor(exact), n);
    }
    std::stable_sort(frac.begin(), frac.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[frac[k].second];
    return counts;
}

TransitionRecord tabular_record(const TabularMDP& mdp, std::size_t s, std::size_t a,
                                std::size_t next) {
    TransitionRecord r;
    const auto enc = one_hot_state(s);
    std::copy(enc.begin(), enc.end(), r.state.begin());
    const auto enc_next = one_hot_state(mdp.terminal[s] ? s : next);
    std::copy(enc_next.begin(), enc_next.end(), r.next_state.begin());
    r.action_index = static_cast<int>(a);
    r.reward = mdp.r(s, a);
    r.terminal = mdp.terminal[s] != 0;
    r.timestep = 0;
    return r;
}

void check_omitted(const TabularMDP& mdp, std::optional<std::size_t> omitted) {
    if (omitted && *omitted >= mdp.actions) throw DomainError("omitted action out of range");
    if (mdp.states > kStateFeatures) {
        throw EncodingError("MDP has more states than one-hot features");
    }
}

void finalize(OfflineDataset& ds, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x0dd5ULL}));
    std::shuffle(ds.records.begin(), ds.records.end(), rng);
    for (std::size_t i = 0; i < ds.records.size(); ++i) ds.records[i].patient_id = i + 1;
}

}  // namespace

OfflineDataset mdp_dataset(const TabularMDP& mdp, std::size_t samples_per_pair,
                           std::uint64_t seed, std::optional<std::size_t> omitted_action) {
    mdp.validate();
    check_omitted(mdp, omitted_action);
    OfflineDataset ds;
    for (std::size_t s = 0; s < mdp.states; ++s) {
        for (std::size_t a = 0; a < mdp.actions; ++a) {
            if (omitted_action && a == *omitted_action) continue;
            const auto counts = stratified_counts(mdp, s, a, samples_per_pair);
            for (std::size_t n = 0; n < mdp.states; ++n) {
                for (std::size_t c = 0; c < counts[n]; ++c) {
                    ds.records.push_back(tabular_record(mdp, s, a, n));
                }
            }
        }
    }
    finalize(ds, seed);
    return ds;
}

OfflineDataset mdp_dataset_sampled(const TabularMDP& mdp, std::size_t samples_per_pair,
                                   std::uint64_t seed, std::optional<std::size_t> omitted_action) {
    mdp.validate();
    check_omitted(mdp, omitted_action);
    Rng rng(derive_seed(seed, {0x5a3b1eULL}));
    OfflineDataset ds;
    for (std::size_t s = 0; s < mdp.states; ++s) {
        for (std::size_t a = 0; a < mdp.actions; ++a) {
            if (omitted_action && a == *omitted_action) continue;
            for (std::size_t c = 0; c < samples_per_pair; ++c) {
                double u = uniform01(rng);
                std::size_t next = mdp.states - 1;
                for (std::size_t n = 0; n < mdp.states; ++n) {
                    u -= mdp.p(s, a, n);
                    if (u < 0.0) {
                        next = n;
                        break;
                    }
                }
                ds.records.push_back(tabular_record(mdp, s, a, next));
            }
        }
    }
    finalize(ds, seed);
    return ds;
}

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

OracleFixture fixture_from_text(std::string_view text, std::string_view source) {
    std::string mdp_text;
    std::string train_text;
    std::string fixture_text;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
        const auto first = line.find_first_not_of(" \t");
        const std::string_view body =
            first == std::string::npos ? std::string_view{} : std::string_view(line).substr(first);
        if (body.starts_with("train.")) {
            train_text += std::string(body.substr(6)) + "\n";
            mdp_text += "\n";
        } else if (body.starts_with("fixture.")) {
            fixture_text += std::string(body.substr(8)) + "\n";
            mdp_text += "\n";
        } else {
            mdp_text += line + "\n";
        }
    }
    OracleFixture f;
    f.mdp = mdp_from_text(mdp_text, source);

    auto fcfg = KeyValueConfig::parse(fixture_text, std::string(source) + " [fixture]");
    f.samples_per_pair = fcfg.get_uint("samples_per_pair", f.samples_per_pair);
    f.data_seed = fcfg.get_uint("data_seed", f.data_seed);
    f.max_abs_tolerance = fcfg.get_double("tolerance", f.max_abs_tolerance);
    fcfg.finish();

    auto tcfg = KeyValueConfig::parse(train_text, std::string(source) + " [train]");
    if (!tcfg.contains("num_actions")) {
        train_text += "num_actions = " + std::to_string(f.mdp.actions) + "\n";
        tcfg = KeyValueConfig::parse(train_text, std::string(source) + " [train]");
    }
    if (!tcfg.contains("gamma")) {
        train_text += "gamma = " + format_double(f.mdp.gamma) + "\n";
        tcfg = KeyValueConfig::parse(train_text, std::string(source) + " [train]");
    }
    f.train = train_config_from_config(tcfg);
    if (f.train.num_actions != f.mdp.actions) {
        throw ConfigError("train.num_actions must equal the MDP action count");
    }
    if (f.train.gamma != f.mdp.gamma) throw ConfigError("train.gamma must equal the MDP gamma");
    return f;
}

OracleFixture load_fixture(const std::filesystem::path& path) {
    return fixture_from_text(read_text_file(path), path.string());
}

OracleReport run_oracle_check(const OracleFixture& fixture) {
    const TabularMDP& mdp = fixture.mdp;
    OracleReport rep;
    rep.q_star = value_iteration(mdp);
    rep.q_enumerated = solve_by_policy_enumeration(mdp);
    for (std::size_t k = 0; k < rep.q_star.size(); ++k) {
        rep.enumeration_gap = std::max(
            rep.enumeration_gap, std::abs(rep.q_star.data()[k] - rep.q_enumerated.data()[k]));
    }
    const auto ds = mdp_dataset(mdp, fixture.samples_per_pair, fixture.data_seed);
    rep.transitions = ds.size();
    const auto trained = train_offline(ds, ds, fixture.train);
    rep.q_net = q_table_from_net(trained.state.net, mdp.states, mdp.actions);
    for (std::size_t k = 0; k < rep.q_star.size(); ++k) {
        rep.max_abs_error =
            std::max(rep.max_abs_error, std::abs(rep.q_net.data()[k] - rep.q_star.data()[k]));
    }
    rep.passed = rep.max_abs_error < fixture.max_abs_tolerance && rep.enumeration_gap < 1e-8;
    return rep;
}

}  // namespace cql

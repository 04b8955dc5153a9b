#include "cql/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_set>

#include "cql/errors.hpp"
#include "cql/kv_config.hpp"
#include "cql/rng.hpp"

namespace cql {

std::vector<std::uint64_t> OfflineDataset::patient_ids() const {
    std::vector<std::uint64_t> ids;
    std::unordered_set<std::uint64_t> seen;
    for (const auto& r : records) {
        if (seen.insert(r.patient_id).second) ids.push_back(r.patient_id);
    }
    return ids;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::string feature_column(char prefix_n, std::size_t i) {
    std::string s = prefix_n ? "nf" : "f";
    if (i < 10) s += '0';
    s += std::to_string(i);
    return s;
}

constexpr std::size_t kColumnCount = 2 + kStateFeatures + 4 + kStateFeatures + 4;

void append_field(std::string& out, std::string_view field, bool last) {
    out += field;
    out += last ? '\n' : ',';
}

}  // namespace

const std::vector<std::string>& dataset_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c{"patient_id", "timestep"};
        for (std::size_t i = 0; i < kStateFeatures; ++i) c.push_back(feature_column(0, i));
        for (const char* n : {"action_index", "raw_iv_dose", "raw_vp_dose", "reward"}) {
            c.emplace_back(n);
        }
        for (std::size_t i = 0; i < kStateFeatures; ++i) c.push_back(feature_column(1, i));
        for (const char* n : {"terminal", "sofa", "lactate", "died"}) c.emplace_back(n);
        return c;
    }();
    return cols;
}

std::string dataset_to_csv(const OfflineDataset& ds) {
    std::string out;
    out.reserve(64 + ds.size() * kColumnCount * 12);
    const auto& cols = dataset_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) append_field(out, cols[i], i + 1 == cols.size());
    for (const auto& r : ds.records) {
        append_field(out, std::to_string(r.patient_id), false);
        append_field(out, std::to_string(r.timestep), false);
        for (double v : r.state) append_field(out, format_double(v), false);
        append_field(out, std::to_string(r.action_index), false);
        append_field(out, format_double(r.raw_iv_dose), false);
        append_field(out, format_double(r.raw_vp_dose), false);
        append_field(out, format_double(r.reward), false);
        for (double v : r.next_state) append_field(out, format_double(v), false);
        append_field(out, r.terminal ? "1" : "0", false);
        append_field(out, format_double(r.sofa), false);
        append_field(out, format_double(r.lactate), false);
        append_field(out, r.died ? "1" : "0", true);
    }
    return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> f;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            f.push_back(line.substr(start));
            break;
        }
        f.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return f;
}

void check_header(const std::vector<std::string_view>& header, std::string_view source) {
    const auto& expected = dataset_columns();
    if (header.size() == expected.size() &&
        std::equal(header.begin(), header.end(), expected.begin())) {
        return;
    }
    std::set<std::string, std::less<>> present(header.begin(), header.end());
    std::set<std::string, std::less<>> wanted(expected.begin(), expected.end());
    std::string missing, extra;
    for (const auto& c : expected) {
        if (!present.count(c)) missing += (missing.empty() ? "" : ",") + c;
    }
    for (const auto& c : header) {
        if (!wanted.count(c)) extra += (extra.empty() ? "" : ",") + std::string(c);
    }
    std::string msg = std::string(source) + ": header does not match schema;";
    if (!missing.empty()) msg += " missing columns: " + missing + ";";
    if (!extra.empty()) msg += " extra columns: " + extra + ";";
    if (missing.empty() && extra.empty()) msg += " columns out of order;";
    throw SchemaError(msg);
}

bool parse_flag(std::string_view s, const std::string& where) {
    if (s == "0") return false;
    if (s == "1") return true;
    throw ParseError(where + ": expected 0 or 1, got '" + std::string(s) + "'");
}

}  // namespace

OfflineDataset dataset_from_csv(std::string_view text, std::string_view source) {
    OfflineDataset ds;
    std::size_t line_no = 0;
    bool have_header = false;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (!have_header) {
            check_header(fields, source);
            have_header = true;
            continue;
        }
        const std::string where = std::string(source) + ":" + std::to_string(line_no);
        if (fields.size() != kColumnCount) {
            throw ParseError(where + ": expected " + std::to_string(kColumnCount) +
                             " fields, got " + std::to_string(fields.size()));
        }
        TransitionRecord r;
        std::size_t k = 0;
        r.patient_id = parse_uint(fields[k++], where);
        const auto ts = parse_uint(fields[k++], where);
        if (ts > UINT32_MAX) throw ParseError(where + ": timestep out of range");
        r.timestep = static_cast<std::uint32_t>(ts);
        for (auto& v : r.state) v = parse_double(fields[k++], where);
        const auto a = parse_int(fields[k++], where);
        if (a < 0 || a >= kDoseBins * kDoseBins) {
            throw ParseError(where + ": action_index " + std::to_string(a) + " outside 0..24");
        }
        r.action_index = static_cast<int>(a);
        r.raw_iv_dose = parse_double(fields[k++], where);
        r.raw_vp_dose = parse_double(fields[k++], where);
        r.reward = parse_double(fields[k++], where);
        for (auto& v : r.next_state) v = parse_double(fields[k++], where);
        r.terminal = parse_flag(fields[k++], where);
        r.sofa = parse_double(fields[k++], where);
        r.lactate = parse_double(fields[k++], where);
        r.died = parse_flag(fields[k++], where);
        ds.records.push_back(r);
    }
    if (!have_header) throw SchemaError(std::string(source) + ": missing header row");
    return ds;
}

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path) {
    write_text_file(path, dataset_to_csv(ds));
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
    return dataset_from_csv(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

void SplitSpec::validate() const {
    for (double f : {train, validation, test}) {
        if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    }
    if (std::abs(train + validation + test - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1");
    }
}

namespace {

std::vector<std::uint64_t> shuffled_patients(const OfflineDataset& ds, std::uint64_t seed) {
    auto ids = ds.patient_ids();
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, {0x5b1175ULL}));
    std::shuffle(ids.begin(), ids.end(), rng);
    return ids;
}

OfflineDataset select(const OfflineDataset& ds, const std::unordered_set<std::uint64_t>& ids) {
    OfflineDataset out;
    for (const auto& r : ds.records) {
        if (ids.count(r.patient_id)) out.records.push_back(r);
    }
    return out;
}

}  // namespace

DatasetSplit split(const OfflineDataset& ds, const SplitSpec& spec) {
    spec.validate();
    const auto ids = shuffled_patients(ds, spec.seed);
    const std::size_t n = ids.size();
    if (n < 3) {
        throw SplitError("split needs at least 3 patients, got " + std::to_string(n));
    }
    auto n_train = static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n)));
    auto n_val = static_cast<std::size_t>(std::llround(spec.validation * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
    n_val = std::clamp<std::size_t>(n_val, 1, n - n_train - 1);

    std::unordered_set<std::uint64_t> tr(ids.begin(), ids.begin() + n_train);
    std::unordered_set<std::uint64_t> va(ids.begin() + n_train, ids.begin() + n_train + n_val);
    std::unordered_set<std::uint64_t> te(ids.begin() + n_train + n_val, ids.end());
    return {select(ds, tr), select(ds, va), select(ds, te)};
}

std::pair<OfflineDataset, OfflineDataset> holdout(const OfflineDataset& ds, double fraction,
                                                  std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("holdout fraction must lie in (0, 1)");
    }
    const auto ids = shuffled_patients(ds, seed);
    const std::size_t n = ids.size();
    if (n < 2) throw SplitError("holdout needs at least 2 patients");
    auto n_hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    n_hold = std::clamp<std::size_t>(n_hold, 1, n - 1);
    std::unordered_set<std::uint64_t> kept(ids.begin(), ids.end() - n_hold);
    std::unordered_set<std::uint64_t> held(ids.end() - n_hold, ids.end());
    return {select(ds, kept), select(ds, held)};
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

NormStats fit_norm_stats(const OfflineDataset& train) {
    if (train.empty()) throw DomainError("cannot fit normalization stats on an empty dataset");
    NormStats s;
    const double n = static_cast<double>(train.size());
    for (const auto& r : train.records) {
        for (std::size_t j = 0; j < kStateFeatures; ++j) s.mean[j] += r.state[j];
    }
    for (auto& m : s.mean) m /= n;
    for (const auto& r : train.records) {
        for (std::size_t j = 0; j < kStateFeatures; ++j) {
            const double d = r.state[j] - s.mean[j];
            s.stddev[j] += d * d;
        }
    }
    for (auto& v : s.stddev) v = std::max(std::sqrt(v / n), kStdFloor);
    return s;
}

OfflineDataset normalize(const OfflineDataset& ds, const NormStats& stats) {
    OfflineDataset out = ds;
    for (auto& r : out.records) {
        for (std::size_t j = 0; j < kStateFeatures; ++j) {
            r.state[j] = (r.state[j] - stats.mean[j]) / stats.stddev[j];
            r.next_state[j] = (r.next_state[j] - stats.mean[j]) / stats.stddev[j];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Actions, sampling, batching
// ---------------------------------------------------------------------------

QuartileBinner fit_binner(const OfflineDataset& train) {
    std::vector<double> iv, vp;
    iv.reserve(train.size());
    vp.reserve(train.size());
    for (const auto& r : train.records) {
        iv.push_back(r.raw_iv_dose);
        vp.push_back(r.raw_vp_dose);
    }
    return fit_binner(iv, vp);
}

void relabel_actions(OfflineDataset& ds, const QuartileBinner& binner) {
    for (auto& r : ds.records) {
        r.action_index = action_index(bin_doses(binner, r.raw_iv_dose, r.raw_vp_dose));
    }
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t batch_size,
                                        std::uint64_t step, std::uint64_t seed) {
    if (n == 0) throw DomainError("cannot sample a minibatch from an empty dataset");
    Rng rng(derive_seed(seed, {0xba7c4ULL, step}));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(batch_size);
    for (auto& i : idx) i = pick(rng);
    return idx;
}

std::vector<TransitionRecord> sample_minibatch(const OfflineDataset& ds, std::size_t batch_size,
                                               std::uint64_t step, std::uint64_t seed) {
    const auto idx = sample_indices(ds.size(), batch_size, step, seed);
    std::vector<TransitionRecord> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(ds.records[i]);
    return out;
}

namespace {

template <typename Get>
TransitionBatch gather(std::size_t n, Get&& get) {
    TransitionBatch b;
    b.states = Matrix(n, kStateFeatures);
    b.next_states = Matrix(n, kStateFeatures);
    b.actions.resize(n);
    b.rewards.resize(n);
    b.terminal.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const TransitionRecord& r = get(i);
        std::copy(r.state.begin(), r.state.end(), b.states.row(i).begin());
        std::copy(r.next_state.begin(), r.next_state.end(), b.next_states.row(i).begin());
        b.actions[i] = r.action_index;
        b.rewards[i] = r.reward;
        b.terminal[i] = r.terminal ? 1 : 0;
    }
    return b;
}

}  // namespace

TransitionBatch to_batch(const OfflineDataset& ds, std::span<const std::size_t> indices) {
    return gather(indices.size(),
                  [&](std::size_t i) -> const TransitionRecord& { return ds.records.at(indices[i]); });
}

TransitionBatch to_batch(const OfflineDataset& ds) {
    return gather(ds.size(), [&](std::size_t i) -> const TransitionRecord& { return ds.records[i]; });
}

TransitionBatch to_batch(std::span<const TransitionRecord> records) {
    return gather(records.size(),
                  [&](std::size_t i) -> const TransitionRecord& { return records[i]; });
}

std::vector<std::string> integrity_violations(const OfflineDataset& ds) {
    std::map<std::uint64_t, std::vector<const TransitionRecord*>> by_patient;
    for (const auto& r : ds.records) by_patient[r.patient_id].push_back(&r);
    std::vector<std::string> problems;
    for (auto& [pid, rows] : by_patient) {
        std::sort(rows.begin(), rows.end(),
                  [](const auto* a, const auto* b) { return a->timestep < b->timestep; });
        for (std::size_t t = 0; t < rows.size(); ++t) {
            const bool last = t + 1 == rows.size();
            if (rows[t]->terminal != last) {
                problems.push_back("patient " + std::to_string(pid) + " timestep " +
                                   std::to_string(rows[t]->timestep) +
                                   (last ? ": last row is not terminal"
                                         : ": terminal row before end of trajectory"));
            }
            if (!last && rows[t]->next_state != rows[t + 1]->state) {
                problems.push_back("patient " + std::to_string(pid) + " timestep " +
                                   std::to_string(rows[t]->timestep) +
                                   ": next_state does not match following state");
            }
        }
    }
    return problems;
}

}  // namespace cql

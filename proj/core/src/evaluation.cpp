#include "cql/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cql/errors.hpp"
#include "cql/kv_config.hpp"

namespace cql {

std::string_view to_string(PolicySource s) noexcept {
    return s == PolicySource::Model ? "model" : "physician";
}

std::string_view to_string(Intervention i) noexcept { return i == Intervention::IV ? "iv" : "vp"; }

std::uint64_t Histogram2D::grid_sum() const noexcept {
    std::uint64_t s = 0;
    for (const auto& row : counts) {
        for (auto c : row) s += c;
    }
    return s;
}

namespace {

std::array<std::uint64_t, kDoseBins> marginal(const Histogram2D& h, Intervention drug) {
    std::array<std::uint64_t, kDoseBins> m{};
    for (int iv = 0; iv < kDoseBins; ++iv) {
        for (int vp = 0; vp < kDoseBins; ++vp) {
            m[drug == Intervention::IV ? iv : vp] += h.counts[iv][vp];
        }
    }
    return m;
}

}  // namespace

double Histogram2D::mean_bin(Intervention drug) const noexcept {
    const auto m = marginal(*this, drug);
    std::uint64_t n = 0;
    double acc = 0.0;
    for (int b = 0; b < kDoseBins; ++b) {
        n += m[b];
        acc += static_cast<double>(b) * static_cast<double>(m[b]);
    }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

int Histogram2D::modal_bin(Intervention drug) const noexcept {
    const auto m = marginal(*this, drug);
    return static_cast<int>(std::max_element(m.begin(), m.end()) - m.begin());
}

double MortalityBucket::mortality() const noexcept {
    return count == 0 ? 0.0 : static_cast<double>(deaths) / static_cast<double>(count);
}

MortalityBucket& MortalityCurve::at(int diff) {
    if (diff < -kMaxBinDiff || diff > kMaxBinDiff) {
        throw DomainError("bin difference " + std::to_string(diff) + " outside -4..4");
    }
    return buckets[static_cast<std::size_t>(diff + kMaxBinDiff)];
}

const MortalityBucket& MortalityCurve::at(int diff) const {
    return const_cast<MortalityCurve*>(this)->at(diff);
}

std::uint64_t MortalityCurve::total() const noexcept {
    std::uint64_t s = 0;
    for (const auto& b : buckets) s += b.count;
    return s;
}

std::vector<int> physician_actions(const OfflineDataset& ds) {
    std::vector<int> out;
    out.reserve(ds.size());
    for (const auto& r : ds.records) out.push_back(r.action_index);
    return out;
}

std::vector<int> model_actions(const DuelingQNet& net, const OfflineDataset& ds) {
    if (net.shape().input != kStateFeatures || net.shape().actions != kNumActions) {
        throw DimensionError("evaluation needs a 48-input, 25-action network");
    }
    std::vector<int> out;
    out.reserve(ds.size());
    for (const auto& r : ds.records) out.push_back(greedy_action(net, r.state));
    return out;
}

namespace {

void check_lengths(const OfflineDataset& ds, std::span<const int> actions) {
    if (actions.size() != ds.size()) {
        throw DimensionError("got " + std::to_string(actions.size()) + " actions for " +
                             std::to_string(ds.size()) + " rows");
    }
}

}  // namespace

std::array<Histogram2D, 3> action_histograms(const OfflineDataset& ds,
                                             std::span<const int> actions, PolicySource source) {
    check_lengths(ds, actions);
    std::array<Histogram2D, 3> out;
    for (std::size_t g = 0; g < 3; ++g) {
        out[g].group = kAllSofaGroups[g];
        out[g].source = source;
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto a = index_to_action(actions[i]);
        auto& h = out[static_cast<std::size_t>(sofa_group(ds.records[i].sofa))];
        ++h.counts[a.iv_bin][a.vp_bin];
        ++h.total;
    }
    return out;
}

std::vector<MortalityCurve> mortality_curves(const OfflineDataset& ds,
                                             std::span<const int> model,
                                             std::span<const int> physician) {
    check_lengths(ds, model);
    check_lengths(ds, physician);
    std::vector<MortalityCurve> out;
    for (auto drug : {Intervention::IV, Intervention::VP}) {
        for (auto group : {SofaGroup::Medium, SofaGroup::High}) {
            MortalityCurve c;
            c.intervention = drug;
            c.group = group;
            out.push_back(c);
        }
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& r = ds.records[i];
        const auto group = sofa_group(r.sofa);
        if (group == SofaGroup::Low) continue;
        const auto m = index_to_action(model[i]);
        const auto p = index_to_action(physician[i]);
        const std::size_t g = group == SofaGroup::Medium ? 0 : 1;
        auto& iv = out[g].at(m.iv_bin - p.iv_bin);
        auto& vp = out[2 + g].at(m.vp_bin - p.vp_bin);
        ++iv.count;
        ++vp.count;
        iv.deaths += r.died;
        vp.deaths += r.died;
    }
    return out;
}

EvaluationReport evaluate_checkpoint(const Checkpoint& ckpt, OfflineDataset test) {
    if (test.empty()) throw DomainError("evaluation set is empty");
    if (ckpt.binner) relabel_actions(test, *ckpt.binner);
    const auto physician = physician_actions(test);
    const auto normalized = normalize(test, ckpt.norm);
    const auto model = model_actions(ckpt.state.net, normalized);
    EvaluationReport rep;
    rep.model = action_histograms(test, model, PolicySource::Model);
    rep.physician = action_histograms(test, physician, PolicySource::Physician);
    rep.curves = mortality_curves(test, model, physician);
    return rep;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string histogram_file_stem(const Histogram2D& h) {
    return "hist_" + std::string(to_string(h.group)) + "_" + std::string(to_string(h.source));
}

std::string curve_file_stem(const MortalityCurve& c) {
    return "curve_" + std::string(to_string(c.intervention)) + "_" + std::string(to_string(c.group));
}

std::string histogram_to_csv(const Histogram2D& h) {
    std::string out = "iv_bin,vp_bin,count\n";
    for (int iv = 0; iv < kDoseBins; ++iv) {
        for (int vp = 0; vp < kDoseBins; ++vp) {
            out += std::to_string(iv) + "," + std::to_string(vp) + "," +
                   std::to_string(h.counts[iv][vp]) + "\n";
        }
    }
    return out;
}

std::string curve_to_csv(const MortalityCurve& c) {
    std::string out = "diff,count,mortality\n";
    for (int d = -kMaxBinDiff; d <= kMaxBinDiff; ++d) {
        const auto& b = c.at(d);
        out += std::to_string(d) + "," + std::to_string(b.count) + "," +
               format_double(b.mortality()) + "\n";
    }
    return out;
}

namespace {

std::vector<std::vector<std::string>> csv_rows(std::string_view text, std::string_view header,
                                               std::string_view stem, std::size_t expected) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != header) {
        throw SchemaError(std::string(stem) + ": expected header '" + std::string(header) + "'");
    }
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
        if (cells.size() != 3) {
            throw ParseError(std::string(stem) + ":" + std::to_string(rows.size() + 2) +
                             ": expected 3 columns");
        }
        rows.push_back(std::move(cells));
    }
    if (rows.size() != expected) {
        throw SchemaError(std::string(stem) + ": expected " + std::to_string(expected) +
                          " rows, got " + std::to_string(rows.size()));
    }
    return rows;
}

std::vector<std::string> stem_parts(std::string_view stem) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = stem.find('_', start);
        parts.emplace_back(stem.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

SofaGroup parse_group(const std::string& s, std::string_view stem) {
    for (auto g : kAllSofaGroups) {
        if (to_string(g) == s) return g;
    }
    throw ParseError(std::string(stem) + ": unknown SOFA group '" + s + "'");
}

}  // namespace

Histogram2D histogram_from_csv(std::string_view text, std::string_view stem) {
    const auto parts = stem_parts(stem);
    if (parts.size() != 3 || parts[0] != "hist") {
        throw ParseError(std::string(stem) + ": expected hist_<group>_<source>");
    }
    Histogram2D h;
    h.group = parse_group(parts[1], stem);
    if (parts[2] == "model") {
        h.source = PolicySource::Model;
    } else if (parts[2] == "physician") {
        h.source = PolicySource::Physician;
    } else {
        throw ParseError(std::string(stem) + ": unknown source '" + parts[2] + "'");
    }
    const auto rows = csv_rows(text, "iv_bin,vp_bin,count", stem, kDoseBins * kDoseBins);
    for (const auto& r : rows) {
        const auto iv = parse_uint(r[0], stem);
        const auto vp = parse_uint(r[1], stem);
        if (iv >= kDoseBins || vp >= kDoseBins) throw ParseError(std::string(stem) + ": bin out of range");
        h.counts[iv][vp] = parse_uint(r[2], stem);
        h.total += h.counts[iv][vp];
    }
    return h;
}

MortalityCurve curve_from_csv(std::string_view text, std::string_view stem) {
    const auto parts = stem_parts(stem);
    if (parts.size() != 3 || parts[0] != "curve") {
        throw ParseError(std::string(stem) + ": expected curve_<intervention>_<group>");
    }
    MortalityCurve c;
    if (parts[1] == "iv") {
        c.intervention = Intervention::IV;
    } else if (parts[1] == "vp") {
        c.intervention = Intervention::VP;
    } else {
        throw ParseError(std::string(stem) + ": unknown intervention '" + parts[1] + "'");
    }
    c.group = parse_group(parts[2], stem);
    const auto rows = csv_rows(text, "diff,count,mortality", stem, kDiffBuckets);
    for (const auto& r : rows) {
        const auto diff = static_cast<int>(parse_int(r[0], stem));
        auto& b = c.at(diff);
        b.count = parse_uint(r[1], stem);
        const double m = parse_double(r[2], stem);
        if (!(m >= 0.0 && m <= 1.0)) throw ParseError(std::string(stem) + ": mortality outside [0, 1]");
        b.deaths = static_cast<std::uint64_t>(std::llround(m * static_cast<double>(b.count)));
    }
    return c;
}

std::vector<std::filesystem::path> write_evaluation(const EvaluationReport& report,
                                                    const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (const auto* set : {&report.model, &report.physician}) {
        for (const auto& h : *set) {
            written.push_back(dir / (histogram_file_stem(h) + ".csv"));
            write_text_file(written.back(), histogram_to_csv(h));
        }
    }
    for (const auto& c : report.curves) {
        written.push_back(dir / (curve_file_stem(c) + ".csv"));
        write_text_file(written.back(), curve_to_csv(c));
    }
    return written;
}

}  // namespace cql

#include "cql/clinical_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cql/errors.hpp"
#include "cql/kv_config.hpp"

namespace cql {

const std::array<std::string_view, FeatureSchema::kCount>& FeatureSchema::names() noexcept {
    static constexpr std::array<std::string_view, kCount> kNames = {
        "Age",
        "Gender",
        "Shock Index",
        "Readmission",
        "Elixhauser",
        "Glasgow Coma Scale (GCS)",
        "SIRS",
        "Sequential Organ Failure Assessment (SOFA)",
        "Arterial Lactate",
        "Bicarbonate",
        "International Normalized Ratio (INR)",
        "Sodium",
        "White Blood Cell Count",
        "CO2",
        "Creatinine",
        "Ionised Calcium",
        "Serum Glutamic-Oxaloacetic Transaminase (SGOT)",
        "Prothrombin Time (PT)",
        "Platelets",
        "Count",
        "Total bilirubin",
        "Albumin",
        "Calcium",
        "Glucose",
        "Hemoglobin",
        "Partial Thromboplastin Time (PTT)",
        "Potassium",
        "Serum Glutamic-Pyruvic Transaminase (SGPT)",
        "Arterial Blood Gas",
        "BUN - Blood Urea Nitrogen",
        "Chloride",
        "Arterial pH",
        "Magnesium",
        "Diastolic Blood Pressure",
        "Mean Blood Pressure",
        "Respiratory Rate",
        "SpO2",
        "Systolic Blood Pressure",
        "PaCO2",
        "PaO2",
        "FiO2",
        "PaO/FiO2 ratio",
        "Temperature (Celsius)",
        "Weight (kg)",
        "Heart Rate",
        "Total Fluid Output",
        "Mechanical Ventilation",
        "Fluid Output - 4 hourly period",
    };
    return kNames;
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) noexcept {
    const auto& n = names();
    const auto it = std::find(n.begin(), n.end(), name);
    if (it == n.end()) return std::nullopt;
    return static_cast<std::size_t>(it - n.begin());
}

int action_index(DoseAction a) {
    if (a.iv_bin < 0 || a.iv_bin >= kDoseBins || a.vp_bin < 0 || a.vp_bin >= kDoseBins) {
        throw DomainError("dose bins (" + std::to_string(a.iv_bin) + ", " +
                          std::to_string(a.vp_bin) + ") outside 0..4");
    }
    return kDoseBins * a.iv_bin + a.vp_bin;
}

DoseAction index_to_action(int index) {
    if (index < 0 || index >= kDoseBins * kDoseBins) {
        throw DomainError("action index " + std::to_string(index) + " outside 0..24");
    }
    return {index / kDoseBins, index % kDoseBins};
}

DrugCuts fit_bins(std::span<const double> nonzero_doses) {
    std::vector<double> sorted(nonzero_doses.begin(), nonzero_doses.end());
    for (double d : sorted) {
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw FitError("quartile fitting requires strictly positive finite doses");
        }
    }
    std::sort(sorted.begin(), sorted.end());
    std::size_t n_distinct = sorted.empty() ? 0 : 1;
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i] != sorted[i - 1]) ++n_distinct;
    }
    if (n_distinct < 4) {
        throw FitError("quartile fitting needs at least 4 distinct positive doses, got " +
                       std::to_string(n_distinct));
    }
    const std::size_t n = sorted.size();
    auto rank = [&](std::size_t num) {  // ceil(num * n / 4), 1-based
        return (num * n + 3) / 4;
    };
    DrugCuts c;
    c.q1 = sorted[rank(1) - 1];
    c.q2 = sorted[rank(2) - 1];
    c.q3 = sorted[rank(3) - 1];
    c.fit_count = n;
    return c;
}

QuartileBinner fit_binner(std::span<const double> iv_doses, std::span<const double> vp_doses) {
    auto nonzero = [](std::span<const double> doses, const char* drug) {
        std::vector<double> out;
        out.reserve(doses.size());
        for (double d : doses) {
            if (d < 0.0) throw DomainError(std::string("negative ") + drug + " dose");
            if (d > 0.0) out.push_back(d);
        }
        return out;
    };
    const auto iv = nonzero(iv_doses, "IV");
    const auto vp = nonzero(vp_doses, "vasopressor");
    QuartileBinner b;
    try {
        b.iv = fit_bins(iv);
    } catch (const FitError& e) {
        throw FitError(std::string("IV: ") + e.what());
    }
    try {
        b.vp = fit_bins(vp);
    } catch (const FitError& e) {
        throw FitError(std::string("vasopressor: ") + e.what());
    }
    return b;
}

int dose_to_bin(const DrugCuts& cuts, double dose) {
    if (!(dose >= 0.0) || !std::isfinite(dose)) {
        throw DomainError("dose must be finite and >= 0, got " + format_double(dose));
    }
    if (dose == 0.0) return 0;
    const int above = (cuts.q1 < dose) + (cuts.q2 < dose) + (cuts.q3 < dose);
    return std::min(1 + above, 4);
}

DoseAction bin_doses(const QuartileBinner& binner, double iv_dose, double vp_dose) {
    return {dose_to_bin(binner.iv, iv_dose), dose_to_bin(binner.vp, vp_dose)};
}

std::string binner_to_text(const QuartileBinner& b) {
    KeyValueWriter w;
    w.comment("quartile cut-points of non-zero doses (IV in mL/4h, VP in ug/kg/min)");
    w.add("iv_q1", b.iv.q1).add("iv_q2", b.iv.q2).add("iv_q3", b.iv.q3);
    w.add("vp_q1", b.vp.q1).add("vp_q2", b.vp.q2).add("vp_q3", b.vp.q3);
    w.add("iv_count", static_cast<std::uint64_t>(b.iv.fit_count));
    w.add("vp_count", static_cast<std::uint64_t>(b.vp.fit_count));
    return w.str();
}

QuartileBinner binner_from_text(std::string_view text, std::string source) {
    auto cfg = KeyValueConfig::parse(text, std::move(source));
    QuartileBinner b;
    b.iv.q1 = cfg.require_double("iv_q1");
    b.iv.q2 = cfg.require_double("iv_q2");
    b.iv.q3 = cfg.require_double("iv_q3");
    b.vp.q1 = cfg.require_double("vp_q1");
    b.vp.q2 = cfg.require_double("vp_q2");
    b.vp.q3 = cfg.require_double("vp_q3");
    b.iv.fit_count = cfg.require_uint("iv_count");
    b.vp.fit_count = cfg.require_uint("vp_count");
    cfg.finish();
    for (const auto* c : {&b.iv, &b.vp}) {
        if (!(c->q1 > 0.0 && c->q1 <= c->q2 && c->q2 <= c->q3)) {
            throw ConfigError("binner cut-points must be positive and non-decreasing");
        }
    }
    return b;
}

void save_binner(const QuartileBinner& binner, const std::filesystem::path& path) {
    write_text_file(path, binner_to_text(binner));
}

QuartileBinner load_binner(const std::filesystem::path& path) {
    return binner_from_text(read_text_file(path), path.string());
}

void RewardParams::validate() const {
    if (!(terminal_survive > 0.0 && terminal_death < 0.0)) {
        throw ConfigError("reward params need terminal_survive > 0 > terminal_death");
    }
    for (double c : {c0, c1, c2}) {
        if (!std::isfinite(c)) throw ConfigError("reward shaping coefficients must be finite");
    }
}

double intermediate_reward(double sofa, double next_sofa, double lactate, double next_lactate,
                           const RewardParams& p) {
    for (double s : {sofa, next_sofa}) {
        if (!(s >= 0.0 && s <= kMaxSofa)) {
            throw DomainError("SOFA " + format_double(s) + " outside [0, 24]");
        }
    }
    for (double l : {lactate, next_lactate}) {
        if (!(l >= 0.0) || !std::isfinite(l)) {
            throw DomainError("lactate " + format_double(l) + " must be finite and >= 0");
        }
    }
    const double stagnant = (next_sofa == sofa && sofa > 0.0) ? 1.0 : 0.0;
    return p.c0 * stagnant + p.c1 * (next_sofa - sofa) + p.c2 * std::tanh(next_lactate - lactate);
}

double terminal_reward(bool survived, const RewardParams& p) {
    return survived ? p.terminal_survive : p.terminal_death;
}

SofaGroup sofa_group(double sofa) {
    if (!(sofa >= 0.0 && sofa <= kMaxSofa)) {
        throw DomainError("SOFA " + format_double(sofa) + " outside [0, 24]");
    }
    if (sofa < 5.0) return SofaGroup::Low;
    if (sofa <= 15.0) return SofaGroup::Medium;
    return SofaGroup::High;
}

std::string_view to_string(SofaGroup g) noexcept {
    switch (g) {
        case SofaGroup::Low: return "low";
        case SofaGroup::Medium: return "medium";
        case SofaGroup::High: return "high";
    }
    return "unknown";
}

}  // namespace cql

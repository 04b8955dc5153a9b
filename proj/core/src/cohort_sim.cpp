#include "cql/cohort_sim.hpp"

#include <algorithm>
#include <cmath>

#include "cql/errors.hpp"

namespace cql {

namespace {

enum class FeatureKind { Dynamic, Static, StaticBinary, DynamicBinary, Sofa, Lactate };

struct FeatureModel {
    FeatureKind kind;
    double mean;   // for binaries: probability (static) or unused
    double scale;
    double rho;    // correlation with standardized severity
    double lo;
    double hi;
};

// Indexed like FeatureSchema::names().
constexpr std::array<FeatureModel, kStateFeatures> kFeatureModels = {{
    {FeatureKind::Static, 64.0, 16.0, 0.10, 18.0, 95.0},         // Age
    {FeatureKind::StaticBinary, 0.45, 0.0, 0.0, 0.0, 1.0},       // Gender
    {FeatureKind::Dynamic, 0.8, 0.25, 0.40, 0.2, 3.0},           // Shock Index
    {FeatureKind::StaticBinary, 0.15, 0.0, 0.0, 0.0, 1.0},       // Readmission
    {FeatureKind::Static, 4.0, 2.5, 0.10, 0.0, 20.0},            // Elixhauser
    {FeatureKind::Dynamic, 13.0, 2.5, -0.40, 3.0, 15.0},         // GCS
    {FeatureKind::Dynamic, 2.0, 1.0, 0.30, 0.0, 4.0},            // SIRS
    {FeatureKind::Sofa, 0.0, 0.0, 0.0, 0.0, 24.0},               // SOFA
    {FeatureKind::Lactate, 0.0, 0.0, 0.0, 0.0, 30.0},            // Arterial Lactate
    {FeatureKind::Dynamic, 23.0, 4.0, -0.30, 5.0, 45.0},         // Bicarbonate
    {FeatureKind::Dynamic, 1.4, 0.4, 0.30, 0.8, 8.0},            // INR
    {FeatureKind::Dynamic, 139.0, 4.0, 0.00, 115.0, 165.0},      // Sodium
    {FeatureKind::Dynamic, 12.0, 5.0, 0.20, 0.1, 60.0},          // WBC
    {FeatureKind::Dynamic, 24.0, 4.0, -0.30, 5.0, 45.0},         // CO2
    {FeatureKind::Dynamic, 1.5, 0.9, 0.35, 0.2, 12.0},           // Creatinine
    {FeatureKind::Dynamic, 1.12, 0.08, -0.10, 0.6, 1.6},         // Ionised Calcium
    {FeatureKind::Dynamic, 80.0, 60.0, 0.30, 5.0, 2000.0},       // SGOT
    {FeatureKind::Dynamic, 15.0, 3.0, 0.30, 9.0, 60.0},          // PT
    {FeatureKind::Dynamic, 210.0, 90.0, -0.30, 5.0, 900.0},      // Platelets
    {FeatureKind::Dynamic, 1.0, 0.3, 0.00, 0.0, 5.0},            // Count
    {FeatureKind::Dynamic, 1.5, 1.2, 0.30, 0.1, 30.0},           // Total bilirubin
    {FeatureKind::Dynamic, 2.8, 0.5, -0.20, 1.0, 5.0},           // Albumin
    {FeatureKind::Dynamic, 8.3, 0.7, -0.10, 5.0, 12.0},          // Calcium
    {FeatureKind::Dynamic, 140.0, 40.0, 0.10, 30.0, 600.0},      // Glucose
    {FeatureKind::Dynamic, 10.5, 1.8, -0.10, 4.0, 18.0},         // Hemoglobin
    {FeatureKind::Dynamic, 35.0, 10.0, 0.20, 18.0, 150.0},       // PTT
    {FeatureKind::Dynamic, 4.1, 0.6, 0.10, 2.0, 8.0},            // Potassium
    {FeatureKind::Dynamic, 60.0, 50.0, 0.25, 3.0, 2000.0},       // SGPT
    {FeatureKind::Dynamic, 0.0, 4.0, -0.30, -25.0, 20.0},        // Arterial Blood Gas (BE)
    {FeatureKind::Dynamic, 30.0, 18.0, 0.30, 2.0, 200.0},        // BUN
    {FeatureKind::Dynamic, 105.0, 5.0, 0.00, 80.0, 135.0},       // Chloride
    {FeatureKind::Dynamic, 7.37, 0.07, -0.30, 6.8, 7.7},         // Arterial pH
    {FeatureKind::Dynamic, 2.0, 0.3, 0.00, 0.8, 4.5},            // Magnesium
    {FeatureKind::Dynamic, 58.0, 11.0, -0.30, 20.0, 120.0},      // Diastolic BP
    {FeatureKind::Dynamic, 76.0, 12.0, -0.35, 30.0, 150.0},      // Mean BP
    {FeatureKind::Dynamic, 21.0, 5.0, 0.20, 5.0, 50.0},          // Respiratory Rate
    {FeatureKind::Dynamic, 96.5, 2.5, -0.20, 70.0, 100.0},       // SpO2
    {FeatureKind::Dynamic, 115.0, 18.0, -0.30, 50.0, 220.0},     // Systolic BP
    {FeatureKind::Dynamic, 40.0, 8.0, 0.00, 15.0, 100.0},        // PaCO2
    {FeatureKind::Dynamic, 110.0, 40.0, -0.20, 30.0, 500.0},     // PaO2
    {FeatureKind::Dynamic, 0.45, 0.15, 0.35, 0.21, 1.0},         // FiO2
    {FeatureKind::Dynamic, 260.0, 90.0, -0.35, 30.0, 700.0},     // PaO2/FiO2
    {FeatureKind::Dynamic, 37.2, 0.8, 0.10, 33.0, 42.0},         // Temperature
    {FeatureKind::Static, 80.0, 20.0, 0.00, 35.0, 200.0},        // Weight
    {FeatureKind::Dynamic, 92.0, 17.0, 0.30, 30.0, 200.0},       // Heart Rate
    {FeatureKind::Dynamic, 2500.0, 1500.0, 0.00, 0.0, 20000.0},  // Total Fluid Output
    {FeatureKind::DynamicBinary, 0.0, 0.0, 0.60, 0.0, 1.0},      // Mechanical Ventilation
    {FeatureKind::Dynamic, 450.0, 250.0, -0.10, 0.0, 5000.0},    // Fluid Output 4h
}};

constexpr double kNoisePersistence = 0.8;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double standardized_severity(double z) { return (z - 10.0) / 5.0; }

// Patient-level quantities that persist across timesteps.
struct PatientLatents {
    std::array<double, kStateFeatures> static_value{};
    std::array<double, kStateFeatures> noise{};
};

PatientLatents draw_latents(double severity, Rng& rng) {
    PatientLatents p;
    for (std::size_t j = 0; j < kStateFeatures; ++j) {
        const auto& m = kFeatureModels[j];
        p.noise[j] = standard_normal(rng);
        switch (m.kind) {
            case FeatureKind::Static: {
                const double s = m.rho * standardized_severity(severity) +
                                 std::sqrt(1.0 - m.rho * m.rho) * standard_normal(rng);
                p.static_value[j] = std::clamp(m.mean + m.scale * s, m.lo, m.hi);
                break;
            }
            case FeatureKind::StaticBinary:
                p.static_value[j] = uniform01(rng) < m.mean ? 1.0 : 0.0;
                break;
            default:
                break;
        }
    }
    return p;
}

void evolve_noise(PatientLatents& p, Rng& rng) {
    const double innov = std::sqrt(1.0 - kNoisePersistence * kNoisePersistence);
    for (auto& e : p.noise) e = kNoisePersistence * e + innov * standard_normal(rng);
}

struct Observation {
    StateVector state{};
    double sofa = 0.0;
    double lactate = 0.0;
};

Observation observe(double severity, double lactate, const PatientLatents& p,
                    const SimParams& params, Rng& rng) {
    Observation o;
    o.sofa = std::clamp(std::round(severity + params.sofa_obs_noise * standard_normal(rng)), 0.0,
                        kMaxSofa);
    o.lactate = std::round(lactate * 100.0) / 100.0;
    const double zs = standardized_severity(severity);
    for (std::size_t j = 0; j < kStateFeatures; ++j) {
        const auto& m = kFeatureModels[j];
        const double mixed = m.rho * zs + std::sqrt(1.0 - m.rho * m.rho) * p.noise[j];
        switch (m.kind) {
            case FeatureKind::Dynamic:
                o.state[j] = std::clamp(m.mean + m.scale * mixed, m.lo, m.hi);
                break;
            case FeatureKind::DynamicBinary:
                o.state[j] = mixed > 0.0 ? 1.0 : 0.0;
                break;
            case FeatureKind::Static:
            case FeatureKind::StaticBinary:
                o.state[j] = p.static_value[j];
                break;
            case FeatureKind::Sofa:
                o.state[j] = o.sofa;
                break;
            case FeatureKind::Lactate:
                o.state[j] = o.lactate;
                break;
        }
    }
    return o;
}

double draw_dose(int bin, const std::array<double, 5>& edges, Rng& rng) {
    if (bin == 0) return 0.0;
    const double lo = std::log(edges[static_cast<std::size_t>(bin - 1)]);
    const double hi = std::log(edges[static_cast<std::size_t>(bin)]);
    // Open at the lower edge so the dose lies strictly inside the bin's range.
    double u = uniform01(rng);
    if (u == 0.0) u = 0.5;
    return std::exp(lo + u * (hi - lo));
}

int draw_bin(const std::array<double, kDoseBins>& probs, double u) {
    double acc = 0.0;
    for (int k = 0; k < kDoseBins; ++k) {
        acc += probs[static_cast<std::size_t>(k)];
        if (u < acc) return k;
    }
    return kDoseBins - 1;
}

std::array<double, kDoseBins> softmin_distance(int centre, double temperature) {
    std::array<double, kDoseBins> p{};
    double z = 0.0;
    for (int k = 0; k < kDoseBins; ++k) {
        p[static_cast<std::size_t>(k)] = std::exp(-std::abs(k - centre) / temperature);
        z += p[static_cast<std::size_t>(k)];
    }
    for (double& v : p) v /= z;
    return p;
}

}  // namespace

void SimParams::validate() const {
    if (patients < 1) throw ConfigError("cohort size must be >= 1");
    if (max_length < 1) throw ConfigError("max_length must be >= 1");
    if (!(behavior_temperature > 0.0)) throw ConfigError("behavior_temperature must be > 0");
    if (!(severity_sensitivity >= 0.0)) throw ConfigError("severity_sensitivity must be >= 0");
    if (!(behavior_persistence >= 0.0 && behavior_persistence < 1.0)) {
        throw ConfigError("behavior_persistence must lie in [0, 1)");
    }
    for (double v : {admission_sd, sofa_obs_noise, severity_noise, lactate_noise}) {
        if (!(v >= 0.0)) throw ConfigError("noise scales must be >= 0");
    }
    if (!(lactate_relax >= 0.0 && lactate_relax <= 1.0)) {
        throw ConfigError("lactate_relax must lie in [0, 1]");
    }
    for (double v : {admission_mean, recovery, iv_effect, vp_effect, vp_hazard_effect,
                      lactate_base, lactate_per_sofa, hazard_intercept, hazard_slope,
                      final_intercept, discharge_sofa}) {
        if (!std::isfinite(v)) throw ConfigError("simulator coefficients must be finite");
    }
    rewards.validate();
}

SimParams sim_params_from_config(KeyValueConfig& cfg) {
    SimParams p;
    p.patients = cfg.get_uint("patients", p.patients);
    p.max_length = static_cast<std::uint32_t>(cfg.get_uint("max_length", p.max_length));
    p.seed = cfg.get_uint("seed", p.seed);
    p.admission_mean = cfg.get_double("admission_mean", p.admission_mean);
    p.admission_sd = cfg.get_double("admission_sd", p.admission_sd);
    p.sofa_obs_noise = cfg.get_double("sofa_obs_noise", p.sofa_obs_noise);
    p.recovery = cfg.get_double("recovery", p.recovery);
    p.severity_noise = cfg.get_double("severity_noise", p.severity_noise);
    p.iv_effect = cfg.get_double("iv_effect", p.iv_effect);
    p.vp_effect = cfg.get_double("vp_effect", p.vp_effect);
    p.vp_hazard_effect = cfg.get_double("vp_hazard_effect", p.vp_hazard_effect);
    p.lactate_base = cfg.get_double("lactate_base", p.lactate_base);
    p.lactate_per_sofa = cfg.get_double("lactate_per_sofa", p.lactate_per_sofa);
    p.lactate_relax = cfg.get_double("lactate_relax", p.lactate_relax);
    p.lactate_noise = cfg.get_double("lactate_noise", p.lactate_noise);
    p.hazard_intercept = cfg.get_double("hazard_intercept", p.hazard_intercept);
    p.hazard_slope = cfg.get_double("hazard_slope", p.hazard_slope);
    p.final_intercept = cfg.get_double("final_intercept", p.final_intercept);
    p.discharge_sofa = cfg.get_double("discharge_sofa", p.discharge_sofa);
    p.behavior_temperature = cfg.get_double("behavior_temperature", p.behavior_temperature);
    p.severity_sensitivity = cfg.get_double("severity_sensitivity", p.severity_sensitivity);
    p.behavior_persistence = cfg.get_double("behavior_persistence", p.behavior_persistence);
    p.rewards.terminal_survive = cfg.get_double("reward.terminal_survive", p.rewards.terminal_survive);
    p.rewards.terminal_death = cfg.get_double("reward.terminal_death", p.rewards.terminal_death);
    p.rewards.c0 = cfg.get_double("reward.c0", p.rewards.c0);
    p.rewards.c1 = cfg.get_double("reward.c1", p.rewards.c1);
    p.rewards.c2 = cfg.get_double("reward.c2", p.rewards.c2);
    cfg.finish();
    p.validate();
    return p;
}

std::string sim_params_to_text(const SimParams& p) {
    KeyValueWriter w;
    w.add("patients", p.patients)
        .add("max_length", static_cast<std::uint64_t>(p.max_length))
        .add("seed", p.seed)
        .add("admission_mean", p.admission_mean)
        .add("admission_sd", p.admission_sd)
        .add("sofa_obs_noise", p.sofa_obs_noise)
        .add("recovery", p.recovery)
        .add("severity_noise", p.severity_noise)
        .add("iv_effect", p.iv_effect)
        .add("vp_effect", p.vp_effect)
        .add("vp_hazard_effect", p.vp_hazard_effect)
        .add("lactate_base", p.lactate_base)
        .add("lactate_per_sofa", p.lactate_per_sofa)
        .add("lactate_relax", p.lactate_relax)
        .add("lactate_noise", p.lactate_noise)
        .add("hazard_intercept", p.hazard_intercept)
        .add("hazard_slope", p.hazard_slope)
        .add("final_intercept", p.final_intercept)
        .add("discharge_sofa", p.discharge_sofa)
        .add("behavior_temperature", p.behavior_temperature)
        .add("severity_sensitivity", p.severity_sensitivity)
        .add("behavior_persistence", p.behavior_persistence)
        .add("reward.terminal_survive", p.rewards.terminal_survive)
        .add("reward.terminal_death", p.rewards.terminal_death)
        .add("reward.c0", p.rewards.c0)
        .add("reward.c1", p.rewards.c1)
        .add("reward.c2", p.rewards.c2);
    return w.str();
}

DoseAction ideal_action(double severity) {
    const auto iv = static_cast<int>(std::lround(1.0 + severity / 10.0));
    const auto vp = severity < 15.0 ? 0 : static_cast<int>(std::lround((severity - 13.0) / 2.0));
    return {std::clamp(iv, 0, kDoseBins - 1), std::clamp(vp, 0, kDoseBins - 1)};
}

BehaviorDistribution behavior_distribution(double sofa, const SimParams& params) {
    const DoseAction centre = ideal_action(params.severity_sensitivity * sofa);
    return {softmin_distance(centre.iv_bin, params.behavior_temperature),
            softmin_distance(centre.vp_bin, params.behavior_temperature)};
}

DoseAction behavior_action(double sofa, const SimParams& params, double u_iv, double u_vp) {
    const auto dist = behavior_distribution(sofa, params);
    return {draw_bin(dist.iv, u_iv), draw_bin(dist.vp, u_vp)};
}

PhysiologyStep advance_physiology(double severity, double lactate, DoseAction action,
                                  const SimParams& p, Rng& rng) {
    const DoseAction ideal = ideal_action(severity);
    const double dev_iv = std::abs(action.iv_bin - ideal.iv_bin);
    const double dev_vp = std::abs(action.vp_bin - ideal.vp_bin);
    PhysiologyStep s;
    s.severity = std::clamp(severity - p.recovery + p.iv_effect * dev_iv + p.vp_effect * dev_vp +
                                p.severity_noise * standard_normal(rng),
                            0.0, kMaxSofa);
    s.lactate = std::clamp(
        lactate + p.lactate_relax * (p.lactate_base + p.lactate_per_sofa * s.severity - lactate) +
            p.lactate_noise * standard_normal(rng),
        0.3, 30.0);
    s.death_logit = p.hazard_intercept + p.hazard_slope * s.severity +
                    (severity > 15.0 ? p.vp_hazard_effect * dev_vp : 0.0);
    return s;
}

double hazard_probability(double death_logit) { return logistic(death_logit); }

Trajectory simulate_patient(std::uint64_t patient_id, const SimParams& p) {
    Rng rng(derive_seed(p.seed, {patient_id}));
    Trajectory traj;
    traj.patient_id = patient_id;

    double severity = std::clamp(p.admission_mean + p.admission_sd * standard_normal(rng), 0.0, 22.0);
    double lactate = std::max(
        0.3, p.lactate_base + p.lactate_per_sofa * severity + p.lactate_noise * standard_normal(rng));
    PatientLatents latents = draw_latents(severity, rng);
    Observation obs = observe(severity, lactate, latents, p, rng);

    const double rho = p.behavior_persistence;
    const double innov = std::sqrt(1.0 - rho * rho);
    double e_iv = standard_normal(rng);
    double e_vp = standard_normal(rng);
    for (std::uint32_t t = 0; t < p.max_length; ++t) {
        if (t > 0) {
            e_iv = rho * e_iv + innov * standard_normal(rng);
            e_vp = rho * e_vp + innov * standard_normal(rng);
        }
        const double u_iv = normal_cdf(e_iv);
        const double u_vp = normal_cdf(e_vp);
        const DoseAction a = behavior_action(obs.sofa, p, u_iv, u_vp);
        const double iv_dose = draw_dose(a.iv_bin, kIvDoseEdges, rng);
        const double vp_dose = draw_dose(a.vp_bin, kVpDoseEdges, rng);

        const PhysiologyStep step = advance_physiology(severity, lactate, a, p, rng);
        evolve_noise(latents, rng);
        Observation next = observe(step.severity, step.lactate, latents, p, rng);

        bool died = uniform01(rng) < hazard_probability(step.death_logit);
        const bool discharged = !died && step.severity <= p.discharge_sofa;
        bool terminal = died || discharged;
        if (!terminal && t + 1 == p.max_length) {
            terminal = true;
            died = uniform01(rng) < logistic(p.final_intercept + p.hazard_slope * step.severity);
        }

        TransitionRecord r;
        r.patient_id = patient_id;
        r.timestep = t;
        r.state = obs.state;
        r.action_index = action_index(a);
        r.raw_iv_dose = iv_dose;
        r.raw_vp_dose = vp_dose;
        r.next_state = next.state;
        r.terminal = terminal;
        r.sofa = obs.sofa;
        r.lactate = obs.lactate;
        r.reward = terminal ? terminal_reward(!died, p.rewards)
                            : intermediate_reward(obs.sofa, next.sofa, obs.lactate, next.lactate,
                                                  p.rewards);
        traj.records.push_back(r);

        if (terminal) {
            traj.died = died;
            break;
        }
        severity = step.severity;
        lactate = step.lactate;
        obs = next;
    }
    for (auto& r : traj.records) r.died = traj.died;
    return traj;
}

std::vector<Trajectory> generate_cohort(const SimParams& params) {
    params.validate();
    std::vector<Trajectory> cohort;
    cohort.reserve(params.patients);
    for (std::uint64_t id = 1; id <= params.patients; ++id) {
        cohort.push_back(simulate_patient(id, params));
    }
    return cohort;
}

OfflineDataset cohort_to_dataset(const std::vector<Trajectory>& cohort) {
    OfflineDataset ds;
    for (const auto& t : cohort) {
        ds.records.insert(ds.records.end(), t.records.begin(), t.records.end());
    }
    return ds;
}

GeneratedData generate_dataset(const SimParams& params, const SplitSpec& spec) {
    GeneratedData out;
    out.split = split(cohort_to_dataset(generate_cohort(params)), spec);
    out.binner = fit_binner(out.split.train);
    for (auto* part : {&out.split.train, &out.split.validation, &out.split.test}) {
        relabel_actions(*part, out.binner);
    }
    return out;
}

}  // namespace cql

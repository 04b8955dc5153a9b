#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cql/clinical_mdp.hpp"
#include "cql/dataset.hpp"
#include "cql/kv_config.hpp"
#include "cql/rng.hpp"

namespace cql {

/// Parameters of the synthetic septic cohort. Severity is a latent SOFA-scale
/// quantity; observed SOFA is its rounded, noisy reading.
struct SimParams {
    std::uint64_t patients = 1000;
    std::uint32_t max_length = 20;  // 4-hour steps
    std::uint64_t seed = 0;

    double admission_mean = 10.0;
    double admission_sd = 5.0;
    double sofa_obs_noise = 0.5;

    // Severity drift per step: -recovery + effects * |bin - ideal bin| + noise.
    double recovery = 1.4;
    double severity_noise = 1.0;
    double iv_effect = 1.0;
    double vp_effect = 0.8;
    // Extra hazard logit per VP bin of deviation while severity > 15.
    double vp_hazard_effect = 0.35;

    double lactate_base = 1.0;
    double lactate_per_sofa = 0.3;
    double lactate_relax = 0.5;
    double lactate_noise = 0.3;

    // Per-step death probability: logistic(hazard_intercept + hazard_slope * severity).
    double hazard_intercept = -7.5;
    double hazard_slope = 0.3;
    // Outcome of patients still admitted at max_length.
    double final_intercept = -4.0;
    double discharge_sofa = 2.0;

    double behavior_temperature = 1.0;
    double severity_sensitivity = 1.0;
    // AR(1) coefficient of the latent draws behind each patient's dose choices.
    double behavior_persistence = 0.8;

    RewardParams rewards;

    /// Throws ConfigError.
    void validate() const;
};

SimParams sim_params_from_config(KeyValueConfig& cfg);
std::string sim_params_to_text(const SimParams& p);

struct Trajectory {
    std::uint64_t patient_id = 0;
    std::vector<TransitionRecord> records;
    bool died = false;

    std::size_t terminal_timestep() const noexcept { return records.size() - 1; }
};

/// Dose bin whose effect is neutral at the given severity.
DoseAction ideal_action(double severity);

/// Per-drug behavior distributions over bins 0..4 at an observed SOFA.
struct BehaviorDistribution {
    std::array<double, kDoseBins> iv{};
    std::array<double, kDoseBins> vp{};
};
BehaviorDistribution behavior_distribution(double sofa, const SimParams& params);

/// Inverse-CDF draw from behavior_distribution() with uniforms u_iv, u_vp in [0, 1).
DoseAction behavior_action(double sofa, const SimParams& params, double u_iv, double u_vp);

/// One transition of the latent physiology.
struct PhysiologyStep {
    double severity = 0.0;
    double lactate = 0.0;
    double death_logit = 0.0;
};
PhysiologyStep advance_physiology(double severity, double lactate, DoseAction action,
                                  const SimParams& params, Rng& rng);

/// Probability of death within one step given the post-transition logit.
double hazard_probability(double death_logit);

/// Deterministic in params.seed; patient i depends only on (seed, i).
std::vector<Trajectory> generate_cohort(const SimParams& params);
Trajectory simulate_patient(std::uint64_t patient_id, const SimParams& params);

OfflineDataset cohort_to_dataset(const std::vector<Trajectory>& cohort);

struct GeneratedData {
    DatasetSplit split;
    QuartileBinner binner;
};

/// Simulates a cohort, splits it by patient, fits the binner on the training
/// part and relabels every part with it.
GeneratedData generate_dataset(const SimParams& params, const SplitSpec& spec);

/// Reference dose edges used to draw raw doses inside each intended bin.
inline constexpr std::array<double, 5> kIvDoseEdges = {1.0, 50.0, 180.0, 530.0, 2000.0};
inline constexpr std::array<double, 5> kVpDoseEdges = {0.01, 0.08, 0.22, 0.45, 1.5};

}  // namespace cql

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cql/batch.hpp"
#include "cql/clinical_mdp.hpp"

namespace cql {

using StateVector = std::array<double, kStateFeatures>;

/// One 4-hour timestep of one patient.
struct TransitionRecord {
    std::uint64_t patient_id = 0;
    std::uint32_t timestep = 0;
    StateVector state{};
    int action_index = 0;
    double raw_iv_dose = 0.0;
    double raw_vp_dose = 0.0;
    double reward = 0.0;
    StateVector next_state{};
    bool terminal = false;
    double sofa = 0.0;
    double lactate = 0.0;
    bool died = false;

    friend bool operator==(const TransitionRecord&, const TransitionRecord&) = default;
};

struct OfflineDataset {
    std::vector<TransitionRecord> records;

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }
    /// Distinct patient ids in first-appearance order.
    std::vector<std::uint64_t> patient_ids() const;

    friend bool operator==(const OfflineDataset&, const OfflineDataset&) = default;
};

// ---------------------------------------------------------------------------
// CSV interchange
// ---------------------------------------------------------------------------

/// Exact column order of the interchange CSV.
const std::vector<std::string>& dataset_columns();

std::string dataset_to_csv(const OfflineDataset& ds);
/// Throws SchemaError (naming missing/extra columns) or ParseError (with line number).
OfflineDataset dataset_from_csv(std::string_view text, std::string_view source = "<csv>");

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Patient-level splits
// ---------------------------------------------------------------------------

struct SplitSpec {
    double train = 0.70;
    double validation = 0.15;
    double test = 0.15;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DatasetSplit {
    OfflineDataset train;
    OfflineDataset validation;
    OfflineDataset test;
};

/// Shuffles patient ids with `spec.seed` and assigns whole patients to parts.
/// Each part receives at least one patient. Throws SplitError with < 3 patients.
DatasetSplit split(const OfflineDataset& ds, const SplitSpec& spec);

/// Two-way patient split: (kept, held out). `fraction` is the held-out share.
std::pair<OfflineDataset, OfflineDataset> holdout(const OfflineDataset& ds, double fraction,
                                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

inline constexpr double kStdFloor = 1e-6;

struct NormStats {
    StateVector mean{};
    StateVector stddev{};

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Per-feature mean and population std of `state` over all rows; std clamped at kStdFloor.
NormStats fit_norm_stats(const OfflineDataset& train);

/// z-scores state and next_state; clinical annotation columns are untouched.
OfflineDataset normalize(const OfflineDataset& ds, const NormStats& stats);

// ---------------------------------------------------------------------------
// Actions, sampling, batching
// ---------------------------------------------------------------------------

/// Binner fitted on the raw doses of `train`.
QuartileBinner fit_binner(const OfflineDataset& train);

/// Recomputes every action_index from the raw doses.
void relabel_actions(OfflineDataset& ds, const QuartileBinner& binner);

/// Uniform with replacement; a pure function of (n, batch_size, seed, step).
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t batch_size,
                                        std::uint64_t step, std::uint64_t seed);

std::vector<TransitionRecord> sample_minibatch(const OfflineDataset& ds, std::size_t batch_size,
                                               std::uint64_t step, std::uint64_t seed);

TransitionBatch to_batch(const OfflineDataset& ds, std::span<const std::size_t> indices);
TransitionBatch to_batch(const OfflineDataset& ds);
TransitionBatch to_batch(std::span<const TransitionRecord> records);

/// Human-readable violations of state chaining within each patient
/// (next_state of a non-terminal row t must equal state of row t+1). Empty when clean.
std::vector<std::string> integrity_violations(const OfflineDataset& ds);

}  // namespace cql

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "cql/qnet.hpp"

namespace cql {

// ---------------------------------------------------------------------------
// State schema
// ---------------------------------------------------------------------------

/// The 48 physiological features of one 4-hour state, in column order f00..f47.
struct FeatureSchema {
    static constexpr std::size_t kCount = kStateFeatures;
    static constexpr std::size_t kSofaIndex = 7;
    static constexpr std::size_t kLactateIndex = 8;

    static const std::array<std::string_view, kCount>& names() noexcept;
    static std::optional<std::size_t> index_of(std::string_view name) noexcept;
};

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

inline constexpr int kDoseBins = 5;

/// (total IV fluid bin, max vasopressor bin); (0, 0) means no drug given.
struct DoseAction {
    int iv_bin = 0;
    int vp_bin = 0;

    friend bool operator==(const DoseAction&, const DoseAction&) = default;
};

/// index = 5 * iv_bin + vp_bin. Throws DomainError out of range.
int action_index(DoseAction a);
DoseAction index_to_action(int index);

/// Quartile cut-points of one drug's non-zero doses.
struct DrugCuts {
    double q1 = 0.0;
    double q2 = 0.0;
    double q3 = 0.0;
    std::size_t fit_count = 0;

    friend bool operator==(const DrugCuts&, const DrugCuts&) = default;
};

struct QuartileBinner {
    DrugCuts iv;  // mL per 4 h
    DrugCuts vp;  // ug/kg/min

    friend bool operator==(const QuartileBinner&, const QuartileBinner&) = default;
};

/// Nearest-rank quartiles (ranks ceil(N/4), ceil(N/2), ceil(3N/4)) of strictly
/// positive doses. Throws FitError with fewer than four distinct values.
DrugCuts fit_bins(std::span<const double> nonzero_doses);

/// Fits both drugs, discarding zero doses first.
QuartileBinner fit_binner(std::span<const double> iv_doses, std::span<const double> vp_doses);

/// 0 for a zero dose, else 1 + #{cut-points < dose} (at most 4).
int dose_to_bin(const DrugCuts& cuts, double dose);
DoseAction bin_doses(const QuartileBinner& binner, double iv_dose, double vp_dose);

std::string binner_to_text(const QuartileBinner& binner);
QuartileBinner binner_from_text(std::string_view text, std::string source = "<binner>");
void save_binner(const QuartileBinner& binner, const std::filesystem::path& path);
QuartileBinner load_binner(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

struct RewardParams {
    double terminal_survive = 15.0;
    double terminal_death = -15.0;
    double c0 = -0.025;  // SOFA unchanged and non-zero
    double c1 = -0.125;  // per point of SOFA change
    double c2 = -2.0;    // tanh of lactate change

    void validate() const;

    friend bool operator==(const RewardParams&, const RewardParams&) = default;
};

/// c0*[sofa' == sofa > 0] + c1*(sofa' - sofa) + c2*tanh(lactate' - lactate).
double intermediate_reward(double sofa, double next_sofa, double lactate, double next_lactate,
                           const RewardParams& params);

double terminal_reward(bool survived, const RewardParams& params);

// ---------------------------------------------------------------------------
// Severity groups
// ---------------------------------------------------------------------------

enum class SofaGroup { Low = 0, Medium = 1, High = 2 };

inline constexpr std::array<SofaGroup, 3> kAllSofaGroups = {SofaGroup::Low, SofaGroup::Medium,
                                                             SofaGroup::High};

/// Low: [0, 5); Medium: [5, 15]; High: (15, 24].
SofaGroup sofa_group(double sofa);
std::string_view to_string(SofaGroup g) noexcept;

inline constexpr double kMaxSofa = 24.0;

}  // namespace cql

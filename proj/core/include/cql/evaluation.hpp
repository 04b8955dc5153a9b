#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cql/checkpoint.hpp"
#include "cql/clinical_mdp.hpp"
#include "cql/dataset.hpp"
#include "cql/qnet.hpp"

namespace cql {

enum class PolicySource : std::uint8_t { Model, Physician };
enum class Intervention : std::uint8_t { IV, VP };

std::string_view to_string(PolicySource s) noexcept;
std::string_view to_string(Intervention i) noexcept;

/// Action counts over (iv_bin, vp_bin) for one SOFA group.
struct Histogram2D {
    SofaGroup group = SofaGroup::Low;
    PolicySource source = PolicySource::Physician;
    std::array<std::array<std::uint64_t, kDoseBins>, kDoseBins> counts{};  // [iv][vp]
    std::uint64_t total = 0;

    std::uint64_t grid_sum() const noexcept;
    /// Count-weighted mean bin of one drug; 0 for an empty histogram.
    double mean_bin(Intervention drug) const noexcept;
    /// Bin with the largest marginal count (lowest bin on ties).
    int modal_bin(Intervention drug) const noexcept;

    friend bool operator==(const Histogram2D&, const Histogram2D&) = default;
};

inline constexpr int kMaxBinDiff = kDoseBins - 1;
inline constexpr std::size_t kDiffBuckets = 2 * kMaxBinDiff + 1;

struct MortalityBucket {
    std::uint64_t count = 0;
    std::uint64_t deaths = 0;

    /// deaths / count, 0 for an empty bucket.
    double mortality() const noexcept;

    friend bool operator==(const MortalityBucket&, const MortalityBucket&) = default;
};

/// Timestep mortality by model-minus-physician bin difference, -4..+4.
struct MortalityCurve {
    Intervention intervention = Intervention::IV;
    SofaGroup group = SofaGroup::Medium;
    std::array<MortalityBucket, kDiffBuckets> buckets{};

    MortalityBucket& at(int diff);
    const MortalityBucket& at(int diff) const;
    std::uint64_t total() const noexcept;

    friend bool operator==(const MortalityCurve&, const MortalityCurve&) = default;
};

/// Logged action per row.
std::vector<int> physician_actions(const OfflineDataset& ds);

/// Greedy action per row; `ds` must already be normalized.
std::vector<int> model_actions(const DuelingQNet& net, const OfflineDataset& ds);

/// One histogram per SOFA group (Low, Medium, High), grouped by each row's
/// `sofa` column. Empty groups yield empty histograms.
std::array<Histogram2D, 3> action_histograms(const OfflineDataset& ds,
                                             std::span<const int> actions, PolicySource source);

/// Curves for (IV, VP) x (Medium, High), in that order. A row counts as a
/// death when its trajectory ended in death.
std::vector<MortalityCurve> mortality_curves(const OfflineDataset& ds,
                                             std::span<const int> model,
                                             std::span<const int> physician);

struct EvaluationReport {
    std::array<Histogram2D, 3> model;
    std::array<Histogram2D, 3> physician;
    std::vector<MortalityCurve> curves;
};

/// Relabels `test` with the checkpoint's binner (when present), normalizes it
/// with the checkpoint's statistics, then runs both analyses.
EvaluationReport evaluate_checkpoint(const Checkpoint& ckpt, OfflineDataset test);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string histogram_file_stem(const Histogram2D& h);   // hist_<group>_<source>
std::string curve_file_stem(const MortalityCurve& c);    // curve_<intervention>_<group>

std::string histogram_to_csv(const Histogram2D& h);      // iv_bin,vp_bin,count
std::string curve_to_csv(const MortalityCurve& c);       // diff,count,mortality

/// Group, source and intervention come from the file stem.
Histogram2D histogram_from_csv(std::string_view text, std::string_view stem);
MortalityCurve curve_from_csv(std::string_view text, std::string_view stem);

/// Writes the six histogram and four curve CSVs; returns the paths written.
std::vector<std::filesystem::path> write_evaluation(const EvaluationReport& report,
                                                    const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

std::string render_histogram_svg(const Histogram2D& h);
std::string render_curve_svg(const MortalityCurve& c);

/// Renders every hist_*.csv and curve_*.csv in `in_dir` to a same-named .svg
/// in `out_dir`. Returns the SVG paths in sorted order.
std::vector<std::filesystem::path> render_directory(const std::filesystem::path& in_dir,
                                                   const std::filesystem::path& out_dir);

}  // namespace cql

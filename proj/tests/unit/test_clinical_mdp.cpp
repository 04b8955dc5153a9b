#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "cql/clinical_mdp.hpp"
#include "cql/errors.hpp"
#include "cql/rng.hpp"

using namespace cql;

TEST(FeatureSchema, FortyEightUniqueNames) {
    const auto& names = FeatureSchema::names();
    EXPECT_EQ(names.size(), 48u);
    std::set<std::string_view> unique(names.begin(), names.end());
    EXPECT_EQ(unique.size(), 48u);
    EXPECT_EQ(FeatureSchema::index_of("Sequential Organ Failure Assessment (SOFA)"),
              FeatureSchema::kSofaIndex);
    EXPECT_EQ(FeatureSchema::index_of("Arterial Lactate"), FeatureSchema::kLactateIndex);
    EXPECT_FALSE(FeatureSchema::index_of("Shoe Size").has_value());
}

TEST(FitBins, OneToEight) {
    const std::vector<double> doses = {8, 3, 5, 1, 7, 2, 6, 4};
    const auto c = fit_bins(doses);
    EXPECT_EQ(c.q1, 2.0);
    EXPECT_EQ(c.q2, 4.0);
    EXPECT_EQ(c.q3, 6.0);
    EXPECT_EQ(c.fit_count, 8u);
}

TEST(FitBins, MatchesBruteForceNearestRank) {
    Rng rng(21);
    for (std::size_t n = 4; n < 60; ++n) {
        std::vector<double> doses(n);
        for (double& d : doses) d = 0.01 + uniform01(rng);
        std::vector<double> sorted = doses;
        std::sort(sorted.begin(), sorted.end());
        const auto c = fit_bins(doses);
        auto nearest = [&](double p) {
            const auto r = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
            return sorted[r - 1];
        };
        EXPECT_EQ(c.q1, nearest(0.25)) << n;
        EXPECT_EQ(c.q2, nearest(0.5)) << n;
        EXPECT_EQ(c.q3, nearest(0.75)) << n;
    }
}

TEST(FitBins, DegenerateInputs) {
    EXPECT_THROW(fit_bins(std::vector<double>(10, 3.0)), FitError);
    EXPECT_THROW(fit_bins(std::vector<double>{1, 2, 3}), FitError);
    EXPECT_THROW(fit_bins(std::vector<double>{1, 2, 2, 3, 3}), FitError);
    EXPECT_THROW(fit_bins(std::vector<double>{0, 1, 2, 3, 4}), FitError);
    EXPECT_THROW(fit_bins(std::vector<double>{}), FitError);
}

TEST(FitBins, QuartileBalanceOnFittingSample) {
    Rng rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 8 + rng() % 400;
        std::vector<double> doses(n);
        for (double& d : doses) d = std::exp(3.0 * standard_normal(rng));
        const auto c = fit_bins(doses);
        std::array<std::size_t, 5> counts{};
        for (double d : doses) ++counts[static_cast<std::size_t>(dose_to_bin(c, d))];
        EXPECT_EQ(counts[0], 0u);
        const auto [lo, hi] = std::minmax_element(counts.begin() + 1, counts.end());
        EXPECT_LE(*hi - *lo, 1u) << "n=" << n;
    }
}

TEST(FitBinner, DropsZerosAndNamesTheDrug) {
    const std::vector<double> iv = {0, 0, 1, 2, 3, 4, 5, 6, 7, 8};
    const std::vector<double> vp = {0, 0, 0, 0.1, 0.2, 0.3, 0.4};
    const auto b = fit_binner(iv, vp);
    EXPECT_EQ(b.iv.fit_count, 8u);
    EXPECT_EQ(b.vp.fit_count, 4u);
    const std::vector<double> flat = {0, 1, 1, 1, 1};
    try {
        fit_binner(iv, flat);
        FAIL() << "expected FitError";
    } catch (const FitError& e) {
        EXPECT_NE(std::string(e.what()).find("vasopressor"), std::string::npos);
    }
    EXPECT_THROW(fit_binner(std::vector<double>{-1, 1, 2, 3, 4}, vp), DomainError);
}

TEST(DoseToBin, Examples) {
    const DrugCuts c{2.0, 4.0, 6.0, 8};
    EXPECT_EQ(dose_to_bin(c, 0.0), 0);
    EXPECT_EQ(dose_to_bin(c, 5.0), 3);
    EXPECT_EQ(dose_to_bin(c, 0.5), 1);
    EXPECT_EQ(dose_to_bin(c, 2.0), 1);
    EXPECT_EQ(dose_to_bin(c, 2.0000001), 2);
    EXPECT_EQ(dose_to_bin(c, 6.0), 3);
    EXPECT_EQ(dose_to_bin(c, 1e9), 4);
    EXPECT_THROW(dose_to_bin(c, -0.1), DomainError);
    EXPECT_THROW(dose_to_bin(c, std::nan("")), DomainError);
}

TEST(DoseToBin, MonotoneInDose) {
    const DrugCuts c{0.1, 0.2, 0.5, 100};
    int prev = 0;
    for (double d = 0.0; d < 2.0; d += 0.001) {
        const int b = dose_to_bin(c, d);
        EXPECT_GE(b, prev);
        prev = b;
    }
}

TEST(ActionIndex, Examples) {
    EXPECT_EQ(action_index({2, 3}), 13);
    EXPECT_EQ(action_index({0, 0}), 0);
    EXPECT_EQ(action_index({4, 4}), 24);
    EXPECT_THROW(action_index({5, 0}), DomainError);
    EXPECT_THROW(action_index({0, -1}), DomainError);
    EXPECT_THROW(index_to_action(25), DomainError);
    EXPECT_THROW(index_to_action(-1), DomainError);
}

TEST(ActionIndex, BijectionOverAllActions) {
    std::set<int> seen;
    for (int iv = 0; iv < 5; ++iv) {
        for (int vp = 0; vp < 5; ++vp) {
            const DoseAction a{iv, vp};
            const int i = action_index(a);
            EXPECT_EQ(index_to_action(i), a);
            seen.insert(i);
        }
    }
    EXPECT_EQ(seen.size(), 25u);
    for (int i = 0; i < 25; ++i) EXPECT_EQ(action_index(index_to_action(i)), i);
}

TEST(Rewards, IntermediateExamples) {
    const RewardParams p;
    EXPECT_EQ(intermediate_reward(0, 0, 1.2, 1.2, p), 0.0);
    EXPECT_EQ(intermediate_reward(6, 8, 2.0, 2.0, p), -0.25);
    EXPECT_DOUBLE_EQ(intermediate_reward(6, 6, 2.0, 2.0, p), -0.025);
    EXPECT_DOUBLE_EQ(intermediate_reward(6, 5, 3.0, 2.0, p), 0.125 + 2.0 * std::tanh(1.0));
    EXPECT_THROW(intermediate_reward(25, 6, 1, 1, p), DomainError);
    EXPECT_THROW(intermediate_reward(6, -1, 1, 1, p), DomainError);
    EXPECT_THROW(intermediate_reward(6, 6, -1, 1, p), DomainError);
}

TEST(Rewards, Terminal) {
    const RewardParams p;
    EXPECT_EQ(terminal_reward(true, p), 15.0);
    EXPECT_EQ(terminal_reward(false, p), -15.0);
    RewardParams unit;
    unit.terminal_survive = 1.0;
    unit.terminal_death = -1.0;
    EXPECT_EQ(terminal_reward(true, unit), 1.0);
    EXPECT_EQ(terminal_reward(false, unit), -1.0);
    RewardParams bad;
    bad.terminal_death = 2.0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Rewards, WorseningBothIsNegativeAndDecreasingInNextSofa) {
    const RewardParams p;
    Rng rng(23);
    for (int trial = 0; trial < 500; ++trial) {
        const double s = std::floor(20.0 * uniform01(rng));
        const double ds = 1.0 + std::floor(3.0 * uniform01(rng));
        const double l = 0.5 + 5.0 * uniform01(rng);
        const double dl = 0.01 + 2.0 * uniform01(rng);
        EXPECT_LT(intermediate_reward(s, s + ds, l, l + dl, p), 0.0);
        EXPECT_GT(intermediate_reward(s, s + ds - 1.0, l, l, p) + 1e-12,
                  intermediate_reward(s, s + ds, l, l, p));
    }
}

TEST(SofaGroups, Examples) {
    EXPECT_EQ(sofa_group(3), SofaGroup::Low);
    EXPECT_EQ(sofa_group(10), SofaGroup::Medium);
    EXPECT_EQ(sofa_group(16), SofaGroup::High);
    EXPECT_EQ(sofa_group(5), SofaGroup::Medium);
    EXPECT_EQ(sofa_group(15), SofaGroup::Medium);
    EXPECT_EQ(sofa_group(4.999), SofaGroup::Low);
    EXPECT_EQ(sofa_group(15.001), SofaGroup::High);
    EXPECT_EQ(sofa_group(0), SofaGroup::Low);
    EXPECT_EQ(sofa_group(24), SofaGroup::High);
    EXPECT_THROW(sofa_group(24.5), DomainError);
    EXPECT_THROW(sofa_group(-0.5), DomainError);
    EXPECT_EQ(to_string(SofaGroup::Medium), "medium");
}

TEST(Binner, TextRoundTripIsExact) {
    Rng rng(24);
    std::vector<double> iv(200), vp(200);
    for (double& d : iv) d = std::exp(5.0 + standard_normal(rng));
    for (double& d : vp) d = uniform01(rng) < 0.5 ? 0.0 : std::exp(-2.0 + standard_normal(rng));
    const auto b = fit_binner(iv, vp);
    EXPECT_EQ(binner_from_text(binner_to_text(b)), b);
}

TEST(Binner, RejectsBadText) {
    EXPECT_THROW(binner_from_text("iv_q1 = 1\n"), ConfigError);
    EXPECT_THROW(binner_from_text("iv_q1 = 3\niv_q2 = 2\niv_q3 = 4\nvp_q1 = 1\nvp_q2 = 2\n"
                                  "vp_q3 = 3\niv_count = 4\nvp_count = 4\n"),
                 ConfigError);
    EXPECT_THROW(binner_from_text("iv_q1 = x\n"), ParseError);
}

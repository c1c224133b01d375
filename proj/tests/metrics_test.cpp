// ACC / AP against brute-force oracles, including tie handling.

#include <gtest/gtest.h>

#include "gff/metrics.hpp"
#include "gff/rng.hpp"

namespace {

// Independent AP oracle: for every positive, count by exhaustive pairwise
// comparison how many items rank at or before it under (score desc, index
// asc), and how many of those are positive. No sorting involved. The
// contributions are reduced in ascending-rank order so the floating-point
// sum is comparable term by term with the implementation's.
double ap_bruteforce(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::size_t positives = 0;
    for (int l : labels) positives += l == 1;
    std::vector<double> by_rank(scores.size(), 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        std::size_t at_or_before = 0, positive_at_or_before = 0;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            const bool before =
                scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
            if (before) {
                ++at_or_before;
                if (labels[j] == 1) ++positive_at_or_before;
            }
        }
        by_rank[at_or_before - 1] =
            static_cast<double>(positive_at_or_before) / static_cast<double>(at_or_before);
    }
    double sum = 0.0;
    for (double v : by_rank) sum += v;
    return sum / static_cast<double>(positives);
}

}  // namespace

TEST(AveragePrecision, WorkedExample) {
    // ranks: 0.9 (pos, P@1 = 1), 0.8 (neg), 0.7 (pos, P@3 = 2/3)
    const double ap = gff::average_precision({0.9, 0.8, 0.7}, {1, 0, 1});
    EXPECT_DOUBLE_EQ(ap, 5.0 / 6.0);
}

TEST(AveragePrecision, PerfectSeparation) {
    EXPECT_DOUBLE_EQ(gff::average_precision({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(gff::accuracy({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}), 1.0);
}

TEST(AveragePrecision, NoPositivesIsUndefined) {
    EXPECT_THROW(gff::average_precision({0.5, 0.4}, {0, 0}), gff::MetricError);
    EXPECT_THROW(gff::average_precision({}, {}), gff::MetricError);
}

TEST(AveragePrecision, StableTieOrderIsDocumentedBehavior) {
    // tied scores keep input order: positive first -> AP 1, negative first
    // -> the positive sees precision 1/2
    EXPECT_DOUBLE_EQ(gff::average_precision({0.5, 0.5}, {1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(gff::average_precision({0.5, 0.5}, {0, 1}), 0.5);
}

TEST(AveragePrecision, MatchesBruteForceOnRandomMultisets) {
    // randomized sweep over every size <= 8 with heavy ties
    gff::Rng rng(2024);
    std::size_t cases = 0;
    while (cases < 10000) {
        const std::size_t n = 1 + rng.below(8);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool any_positive = false;
        for (std::size_t i = 0; i < n; ++i) {
            // quantized scores so ties are frequent
            scores[i] = static_cast<double>(rng.below(5)) / 4.0;
            labels[i] = rng.bernoulli(0.5) ? 1 : 0;
            any_positive = any_positive || labels[i] == 1;
        }
        if (!any_positive) continue;
        ++cases;
        ASSERT_EQ(gff::average_precision(scores, labels), ap_bruteforce(scores, labels))
            << "case " << cases;
    }
}

TEST(Accuracy, ThresholdConvention) {
    // equal scores at the threshold predict negative: balanced labels -> 0.5
    EXPECT_DOUBLE_EQ(gff::accuracy({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}), 0.5);
    EXPECT_DOUBLE_EQ(gff::accuracy({0.6, 0.4}, {1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(gff::accuracy({0.4, 0.6}, {1, 0}), 0.0);
    EXPECT_THROW(gff::accuracy({}, {}), gff::MetricError);
}

TEST(EvalReport, FamilyRowsShareTheRealPool) {
    // two fake families, one shared real pool: two rows plus the mean
    const std::vector<double> scores = {0.1, 0.2, 0.9, 0.8, 0.4, 0.6};
    const std::vector<int> labels = {0, 0, 1, 1, 1, 1};
    const std::vector<std::string> families = {"REAL", "REAL", "FAKE_A",
                                               "FAKE_A", "FAKE_B", "FAKE_B"};
    auto report = gff::make_report(scores, labels, families);
    ASSERT_EQ(report.families.size(), 2u);
    EXPECT_EQ(report.families[0].family, "FAKE_A");
    EXPECT_EQ(report.families[0].count, 4u);  // 2 real + 2 fake
    EXPECT_DOUBLE_EQ(report.families[0].acc, 1.0);
    EXPECT_EQ(report.families[1].family, "FAKE_B");
    EXPECT_DOUBLE_EQ(report.families[1].acc, 0.75);  // 0.4 scored as real
    EXPECT_EQ(report.mean.family, "mean");
    EXPECT_DOUBLE_EQ(report.mean.acc, (1.0 + 0.75) / 2.0);
}

TEST(EvalReport, RequiresFakes) {
    EXPECT_THROW(gff::make_report({0.5}, {0}, {"REAL"}), gff::MetricError);
}

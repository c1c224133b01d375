#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "gff/errors.hpp"

namespace gff {

/// Fraction of correct predictions at `threshold`; scores strictly above the
/// threshold predict positive, so an all-0.5 score vector predicts negative.
inline double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                       double threshold = 0.5) {
    if (scores.empty() || scores.size() != labels.size())
        throw MetricError("accuracy: empty or mismatched inputs");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int pred = scores[i] > threshold ? 1 : 0;
        if (pred == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

/// Average precision over the descending-score ranking. Ties are broken by
/// original input order (stable), which matters when scores repeat: a tied
/// positive listed earlier counts before the tied items after it. AP is the
/// mean of precision-at-rank over the ranks of the positives.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
    if (scores.empty() || scores.size() != labels.size())
        throw MetricError("average_precision: empty or mismatched inputs");
    std::size_t positives = 0;
    for (int l : labels) positives += l == 1;
    if (positives == 0) throw MetricError("average_precision: no positive labels");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]] == 1) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    return sum / static_cast<double>(positives);
}

struct FamilyMetrics {
    std::string family;
    std::size_t count = 0;
    double acc = 0.0;
    double ap = 0.0;
};

/// Per-family rows plus their mean. A family row scores that family's fakes
/// against all real images of the same split, mirroring per-generator test
/// sets that pair fakes with a shared real pool.
struct EvalReport {
    std::vector<FamilyMetrics> families;
    FamilyMetrics mean;  // family == "mean"
};

inline EvalReport make_report(const std::vector<double>& scores, const std::vector<int>& labels,
                              const std::vector<std::string>& families) {
    if (scores.size() != labels.size() || scores.size() != families.size())
        throw MetricError("make_report: mismatched inputs");
    std::vector<std::string> fake_families;
    for (std::size_t i = 0; i < families.size(); ++i)
        if (labels[i] == 1 &&
            std::find(fake_families.begin(), fake_families.end(), families[i]) ==
                fake_families.end())
            fake_families.push_back(families[i]);
    if (fake_families.empty()) throw MetricError("make_report: no fake samples");
    EvalReport report;
    for (const auto& fam : fake_families) {
        std::vector<double> s;
        std::vector<int> l;
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (labels[i] == 0 || families[i] == fam) {
                s.push_back(scores[i]);
                l.push_back(labels[i]);
            }
        FamilyMetrics m;
        m.family = fam;
        m.count = s.size();
        m.acc = accuracy(s, l);
        m.ap = average_precision(s, l);
        report.families.push_back(std::move(m));
    }
    report.mean.family = "mean";
    for (const auto& m : report.families) {
        report.mean.count += m.count;
        report.mean.acc += m.acc;
        report.mean.ap += m.ap;
    }
    report.mean.acc /= static_cast<double>(report.families.size());
    report.mean.ap /= static_cast<double>(report.families.size());
    return report;
}

}  // namespace gff

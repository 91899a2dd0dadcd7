#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "data_model.hpp"

namespace protovar {

enum class MetricKind : std::uint8_t { F1, AUC };

inline std::string_view to_string(MetricKind m) { return m == MetricKind::F1 ? "F1" : "AUC"; }

inline MetricKind parse_metric_kind(std::string_view s) {
    if (s == "F1" || s == "f1")
        return MetricKind::F1;
    if (s == "AUC" || s == "auc")
        return MetricKind::AUC;
    throw ParseError("unknown metric '" + std::string(s) + "' (expected F1 or AUC)");
}

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

// A metric observation; `value` is empty when the metric is undefined.
struct MetricValue {
    std::optional<double> value;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;

    bool defined() const { return value.has_value(); }
};

inline void check_threshold(double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("threshold must lie in (0,1)");
}

// Prediction is positive iff score >= threshold.
inline Confusion confusion(std::span<const LabeledScore> pairs, double threshold) {
    check_threshold(threshold);
    Confusion c;
    for (const auto& p : pairs) {
        const bool predicted = p.score >= threshold;
        if (p.positive)
            (predicted ? c.tp : c.fn)++;
        else
            (predicted ? c.fp : c.tn)++;
    }
    return c;
}

// F1 = 2TP / (2TP + FP + FN); undefined when the denominator is zero.
inline MetricValue f1_binary(std::span<const LabeledScore> pairs, double threshold) {
    const Confusion c = confusion(pairs, threshold);
    MetricValue m;
    m.n_pos = c.tp + c.fn;
    m.n_neg = c.fp + c.tn;
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    if (denom > 0)
        m.value = static_cast<double>(2 * c.tp) / static_cast<double>(denom);
    return m;
}

// Mann-Whitney AUC via rank sums with average ranks for ties. Ranks are
// kept doubled so the statistic is an exact integer before the final
// division and agrees bit-for-bit with the pairwise definition
// (wins + ties/2) / (n_pos * n_neg).
inline MetricValue auc(std::span<const LabeledScore> pairs) {
    MetricValue m;
    for (const auto& p : pairs)
        (p.positive ? m.n_pos : m.n_neg)++;
    if (m.n_pos == 0 || m.n_neg == 0)
        return m;

    std::vector<LabeledScore> sorted(pairs.begin(), pairs.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const LabeledScore& a, const LabeledScore& b) { return a.score < b.score; });

    std::uint64_t twice_rank_sum = 0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        std::uint64_t group_pos = 0;
        while (j < sorted.size() && sorted[j].score == sorted[i].score) {
            group_pos += sorted[j].positive ? 1 : 0;
            ++j;
        }
        // 1-based ranks i+1 .. j share the average (i+1+j)/2.
        twice_rank_sum += group_pos * static_cast<std::uint64_t>(i + 1 + j);
        i = j;
    }
    const auto np = static_cast<std::uint64_t>(m.n_pos);
    const auto nn = static_cast<std::uint64_t>(m.n_neg);
    const std::uint64_t twice_u = twice_rank_sum - np * (np + 1);
    m.value = static_cast<double>(twice_u) / static_cast<double>(2 * np * nn);
    return m;
}

// Fraction of present labels equal to 1.
inline MetricValue prevalence(std::span<const Label> labels) {
    MetricValue m;
    for (Label l : labels) {
        if (l == Label::Positive)
            ++m.n_pos;
        else if (l == Label::Negative)
            ++m.n_neg;
    }
    if (m.n_pos + m.n_neg > 0)
        m.value = static_cast<double>(m.n_pos) / static_cast<double>(m.n_pos + m.n_neg);
    return m;
}

inline MetricValue prevalence(std::span<const LabeledScore> pairs) {
    MetricValue m;
    for (const auto& p : pairs)
        (p.positive ? m.n_pos : m.n_neg)++;
    if (!pairs.empty())
        m.value = static_cast<double>(m.n_pos) / static_cast<double>(pairs.size());
    return m;
}

inline MetricValue compute_metric(MetricKind kind, std::span<const LabeledScore> pairs, double threshold) {
    return kind == MetricKind::F1 ? f1_binary(pairs, threshold) : auc(pairs);
}

}  // namespace protovar

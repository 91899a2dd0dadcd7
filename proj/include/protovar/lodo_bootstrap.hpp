#pragma once
// Leave-one-dataset-out evaluation, subject-level bootstrap, transfer-shift
// significance and Domain Sensitivity.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "seed.hpp"
#include "stats.hpp"

namespace protovar {

inline constexpr std::size_t kDefaultBootstrapIterations = 1000;
inline constexpr double kDefaultAlpha = 0.05;

// ---------------------------------------------------------------------------
// Plan

struct LodoFold {
    std::set<std::string> train_ids;
    std::string test_id;
};

struct LodoPlan {
    std::vector<LodoFold> folds;
};

// One fold per dataset, ordered by dataset id; train = all others.
inline LodoPlan lodo_plan(const std::set<std::string>& dataset_ids) {
    if (dataset_ids.size() < 2)
        throw std::invalid_argument("LODO needs at least 2 datasets, got " + std::to_string(dataset_ids.size()));
    LodoPlan plan;
    for (const auto& test : dataset_ids) {
        LodoFold fold{dataset_ids, test};
        fold.train_ids.erase(test);
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Point evaluation

struct LodoCell {
    AuId au = 0;
    MetricValue f1;
    MetricValue auc;

    const MetricValue& get(MetricKind m) const { return m == MetricKind::F1 ? f1 : auc; }
};

struct LodoFoldResult {
    std::string test_id;
    std::vector<LodoCell> cells;  // schema order
};

namespace detail {
inline EvalTable target_rows(const EvalTable& target, const std::string& test_id) {
    if (!target.dataset_ids().contains(test_id))
        throw ParseError("target table has no rows for dataset " + test_id);
    if (target.dataset_ids().size() == 1)
        return target;
    return target.slice_dataset(test_id);
}
}  // namespace detail

// Per-AU F1 and AUC over all held-out rows. AUs without annotations in the
// target come out undefined.
inline LodoFoldResult evaluate_lodo_fold(const EvalTable& target, const std::string& test_id, double threshold) {
    check_threshold(threshold);
    const EvalTable rows = detail::target_rows(target, test_id);
    LodoFoldResult out{test_id, {}};
    for (AuId au : rows.schema().ids()) {
        const auto pairs = valid_pairs(rows, au);
        out.cells.push_back({au, f1_binary(pairs, threshold), auc(pairs)});
    }
    return out;
}

// Mean of the defined per-dataset metrics over the source evaluation tables.
inline std::optional<double> source_reference(std::span<const EvalTable> sources, AuId au, MetricKind metric,
                                              double threshold) {
    std::vector<double> values;
    for (const auto& table : sources) {
        for (const auto& ds : table.dataset_ids()) {
            const auto pairs = valid_pairs(table, au, [&](const FrameRecord& r) { return r.dataset_id == ds; });
            if (auto v = compute_metric(metric, pairs, threshold).value)
                values.push_back(*v);
        }
    }
    if (values.empty())
        return std::nullopt;
    return stats::mean(values);
}

// ---------------------------------------------------------------------------
// Subject-level bootstrap

// Valid pairs of one AU grouped by subject (subjects in lexicographic order).
struct SubjectPairs {
    std::vector<std::string> subjects;
    std::vector<std::vector<LabeledScore>> pairs;
};

inline SubjectPairs group_pairs_by_subject(const EvalTable& table, AuId au) {
    SubjectPairs out;
    out.subjects = subjects_of(table);
    std::map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < out.subjects.size(); ++i)
        index.emplace(out.subjects[i], i);
    out.pairs.resize(out.subjects.size());
    const std::size_t idx = table.schema().require_index(au);
    for (const auto& r : table.rows())
        detail::append_pair(out.pairs[index.at(r.subject_id)], r, idx);
    return out;
}

inline std::uint64_t bootstrap_seed(std::uint64_t seed, std::size_t iteration) {
    return derive_seed(seed, "boot", static_cast<std::uint64_t>(iteration));
}

// Subject indices (with replacement) drawn by bootstrap iteration b.
inline std::vector<std::size_t> bootstrap_draw(std::size_t n_subjects, std::uint64_t seed, std::size_t b) {
    Rng rng = make_rng(bootstrap_seed(seed, b));
    std::uniform_int_distribution<std::size_t> pick(0, n_subjects - 1);
    std::vector<std::size_t> draw(n_subjects);
    for (auto& d : draw)
        d = pick(rng);
    return draw;
}

// Pooled pairs of a resample: a subject drawn m times contributes m copies.
inline std::vector<LabeledScore> pool_resample(const SubjectPairs& groups, std::span<const std::size_t> draw) {
    std::size_t total = 0;
    for (std::size_t s : draw)
        total += groups.pairs[s].size();
    std::vector<LabeledScore> pooled;
    pooled.reserve(total);
    for (std::size_t s : draw)
        pooled.insert(pooled.end(), groups.pairs[s].begin(), groups.pairs[s].end());
    return pooled;
}

struct BootstrapSample {
    std::vector<double> values;  // defined resamples, in iteration order
    std::size_t iterations = 0;
    std::size_t n_undefined = 0;
};

inline BootstrapSample bootstrap_metric(const EvalTable& target, AuId au, MetricKind metric, std::size_t iterations,
                                        std::uint64_t seed, double threshold, std::size_t jobs = 1) {
    if (iterations < 1)
        throw std::invalid_argument("bootstrap needs at least one iteration");
    if (target.empty())
        throw std::invalid_argument("bootstrap target is empty");
    check_threshold(threshold);
    const SubjectPairs groups = group_pairs_by_subject(target, au);
    std::vector<std::optional<double>> slots(iterations);
    parallel_for(iterations, jobs, [&](std::size_t b) {
        const auto draw = bootstrap_draw(groups.subjects.size(), seed, b);
        slots[b] = compute_metric(metric, pool_resample(groups, draw), threshold).value;
    });
    BootstrapSample out;
    out.iterations = iterations;
    for (const auto& v : slots) {
        if (v)
            out.values.push_back(*v);
        else
            ++out.n_undefined;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transfer significance

struct TransferResult {
    AuId au = 0;
    MetricKind metric = MetricKind::F1;
    std::string test_id;
    double source_ref = 0.0;
    std::optional<double> target_value;
    std::optional<double> delta;     // target_value - source_ref
    std::optional<double> ci_low;    // percentile CI of bootstrap deltas
    std::optional<double> ci_high;
    bool significant = false;        // 0 outside [ci_low, ci_high]
    std::size_t iterations = 0;
    std::size_t n_defined = 0;       // resamples with a defined metric
    double alpha = kDefaultAlpha;
    std::string diagnostic;
};

// Two-sided percentile test from a precomputed bootstrap sample.
inline TransferResult transfer_test_from_sample(AuId au, MetricKind metric, std::string test_id,
                                                std::optional<double> point_value, double source_ref,
                                                const BootstrapSample& sample, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("alpha must lie in (0,1)");
    TransferResult r;
    r.au = au;
    r.metric = metric;
    r.test_id = std::move(test_id);
    r.source_ref = source_ref;
    r.iterations = sample.iterations;
    r.n_defined = sample.values.size();
    r.alpha = alpha;
    r.target_value = point_value;
    if (sample.values.empty() || !point_value) {
        r.diagnostic = sample.values.empty() ? "all bootstrap resamples undefined" : "target metric undefined";
        return r;
    }
    r.delta = *point_value - source_ref;
    std::vector<double> deltas;
    deltas.reserve(sample.values.size());
    for (double v : sample.values)
        deltas.push_back(v - source_ref);
    std::sort(deltas.begin(), deltas.end());
    r.ci_low = stats::quantile_sorted(deltas, alpha / 2.0);
    r.ci_high = stats::quantile_sorted(deltas, 1.0 - alpha / 2.0);
    r.significant = *r.ci_low > 0.0 || *r.ci_high < 0.0;
    if (sample.n_undefined > 0)
        r.diagnostic = std::to_string(sample.n_undefined) + " undefined resamples excluded";
    return r;
}

inline TransferResult transfer_test(const EvalTable& target, AuId au, MetricKind metric, double source_ref,
                                    std::size_t iterations, std::uint64_t seed, double alpha, double threshold,
                                    std::size_t jobs = 1) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("alpha must lie in (0,1)");
    const auto sample = bootstrap_metric(target, au, metric, iterations, seed, threshold, jobs);
    const auto point = compute_metric(metric, valid_pairs(target, au), threshold).value;
    const std::string test_id = target.dataset_ids().size() == 1 ? *target.dataset_ids().begin() : std::string{};
    return transfer_test_from_sample(au, metric, test_id, point, source_ref, sample, alpha);
}

// ---------------------------------------------------------------------------
// Domain Sensitivity

struct DomainSensitivityRow {
    AuId au = 0;
    MetricKind metric = MetricKind::F1;
    std::size_t n_transfers = 0;      // transfers with a defined target metric
    std::size_t n_significant = 0;
    std::optional<double> ds_percent;  // 100 * n_significant / n_transfers
    std::optional<double> mean_delta;  // signed
};

inline DomainSensitivityRow domain_sensitivity(std::span<const TransferResult> results) {
    if (results.empty())
        throw InsufficientObservations("domain sensitivity: no transfers");
    DomainSensitivityRow row;
    row.au = results.front().au;
    row.metric = results.front().metric;
    std::vector<double> deltas;
    for (const auto& r : results) {
        if (r.au != row.au || r.metric != row.metric)
            throw std::invalid_argument("domain_sensitivity expects results of a single (au, metric)");
        if (!r.delta)
            continue;
        ++row.n_transfers;
        if (r.significant)
            ++row.n_significant;
        deltas.push_back(*r.delta);
    }
    if (row.n_transfers > 0) {
        row.ds_percent = 100.0 * static_cast<double>(row.n_significant) / static_cast<double>(row.n_transfers);
        row.mean_delta = stats::mean(deltas);
    }
    return row;
}

// Groups transfer results by (metric, au) and computes one DS row each.
inline std::vector<DomainSensitivityRow> domain_sensitivity_table(std::span<const TransferResult> results) {
    std::map<std::pair<MetricKind, AuId>, std::vector<TransferResult>> groups;
    for (const auto& r : results)
        groups[{r.metric, r.au}].push_back(r);
    std::vector<DomainSensitivityRow> out;
    for (const auto& [key, group] : groups)
        out.push_back(domain_sensitivity(group));
    return out;
}

}  // namespace protovar

#pragma once
// Partition-induced noise: fold prevalence perturbation, per-AU noise floor,
// protocol-level noise floor, F1/AUC volatility and delta adjudication.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "data_model.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "partitioner.hpp"
#include "stats.hpp"

namespace protovar {

// Two-sided 95% normal quantile used for instability margins.
inline constexpr double kMargin95Z = 1.96;

inline double instability_margin(double sigma) { return kMargin95Z * sigma; }

// ---------------------------------------------------------------------------
// Prevalence perturbation

struct PrevalenceRow {
    AuId au = 0;
    std::vector<std::optional<double>> per_fold;
    // Over defined folds only; empty when no fold is defined.
    std::optional<double> min, max, range;
    bool has_undefined_fold = false;

    static PrevalenceRow from_fold_values(AuId au, std::vector<std::optional<double>> per_fold) {
        PrevalenceRow row{au, std::move(per_fold), {}, {}, {}, false};
        for (const auto& v : row.per_fold) {
            if (!v) {
                row.has_undefined_fold = true;
                continue;
            }
            row.min = row.min ? std::min(*row.min, *v) : *v;
            row.max = row.max ? std::max(*row.max, *v) : *v;
        }
        if (row.min)
            row.range = *row.max - *row.min;
        return row;
    }
};

inline std::vector<PrevalenceRow> prevalence_table(const EvalTable& table, const FoldAssignment& fa) {
    const auto slices = fold_slices(table, fa);
    std::vector<PrevalenceRow> out;
    for (AuId au : table.schema().ids()) {
        std::vector<std::optional<double>> per_fold;
        for (const auto& rows : slices) {
            const auto labels = labels_at(table, au, rows);
            per_fold.push_back(prevalence(labels).value);
        }
        out.push_back(PrevalenceRow::from_fold_values(au, std::move(per_fold)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fold metric cells

struct MetricCell {
    MetricKind metric = MetricKind::F1;
    AuId au = 0;
    int partition_index = 0;
    int fold_index = 0;
    std::string model_tag;
    std::optional<double> value;
};

namespace detail {
inline std::vector<MetricKind> canonical_metrics(std::span<const MetricKind> metrics) {
    std::vector<MetricKind> out(metrics.begin(), metrics.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}
}  // namespace detail

// One cell per (metric, au, partition, fold), evaluated on the held-out
// fold's rows. Output is ordered by (metric, au, partition, fold) and does
// not depend on `jobs`.
inline std::vector<MetricCell> metric_matrix(const EvalTable& table, const ProtocolSchedule& schedule,
                                             const std::string& model_tag, std::span<const MetricKind> metrics,
                                             double threshold, std::size_t jobs = 1) {
    check_threshold(threshold);
    const auto kinds = detail::canonical_metrics(metrics);
    const auto& aus = table.schema().ids();
    const std::size_t k = static_cast<std::size_t>(schedule.k);
    const std::size_t n_tasks = schedule.partitions.size() * k;

    std::vector<std::vector<std::vector<std::size_t>>> slices;
    for (const auto& fa : schedule.partitions)
        slices.push_back(fold_slices(table, fa));

    // results[task][metric][au]
    std::vector<std::vector<std::vector<std::optional<double>>>> results(n_tasks);
    parallel_for(n_tasks, jobs, [&](std::size_t t) {
        const auto& rows = slices[t / k][t % k];
        auto& slot = results[t];
        slot.assign(kinds.size(), std::vector<std::optional<double>>(aus.size()));
        for (std::size_t a = 0; a < aus.size(); ++a) {
            const auto pairs = valid_pairs_at(table, aus[a], rows);
            for (std::size_t m = 0; m < kinds.size(); ++m)
                slot[m][a] = compute_metric(kinds[m], pairs, threshold).value;
        }
    });

    std::vector<MetricCell> cells;
    cells.reserve(kinds.size() * aus.size() * n_tasks);
    for (std::size_t m = 0; m < kinds.size(); ++m)
        for (std::size_t a = 0; a < aus.size(); ++a)
            for (std::size_t t = 0; t < n_tasks; ++t)
                cells.push_back({kinds[m], aus[a], static_cast<int>(t / k), static_cast<int>(t % k), model_tag,
                                 results[t][m][a]});
    return cells;
}

// ---------------------------------------------------------------------------
// Noise floor

struct NoiseFloorRow {
    AuId au = 0;
    MetricKind metric = MetricKind::F1;
    std::string model_tag;
    std::size_t n_cells = 0;  // defined cells only
    double mean = 0.0;
    double sigma = 0.0;       // sample standard deviation (n - 1)
    double margin95 = 0.0;    // 1.96 * sigma
    double min = 0.0;
    double max = 0.0;
};

inline NoiseFloorRow noise_floor_from_values(AuId au, MetricKind metric, std::span<const double> values,
                                             std::string model_tag = {}) {
    if (values.size() < 2)
        throw InsufficientObservations("insufficient observations for " + std::string(to_string(metric)) +
                                       " AU" + std::to_string(au) + ": " + std::to_string(values.size()) +
                                       " defined cells, need at least 2");
    NoiseFloorRow row;
    row.au = au;
    row.metric = metric;
    row.model_tag = std::move(model_tag);
    row.n_cells = values.size();
    row.mean = stats::mean(values);
    row.sigma = stats::sample_stddev(values);
    row.margin95 = instability_margin(row.sigma);
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    row.min = *lo;
    row.max = *hi;
    // Guard the min <= mean <= max invariant against last-ulp rounding.
    row.mean = std::clamp(row.mean, row.min, row.max);
    return row;
}

// Statistics over the defined cells of one (metric, au, model_tag) group.
inline NoiseFloorRow noise_floor(std::span<const MetricCell> cells) {
    if (cells.empty())
        throw InsufficientObservations("insufficient observations: no cells");
    const auto& first = cells.front();
    std::vector<double> values;
    for (const auto& c : cells) {
        if (c.metric != first.metric || c.au != first.au || c.model_tag != first.model_tag)
            throw std::invalid_argument("noise_floor expects cells of a single (metric, au, model_tag)");
        if (c.value)
            values.push_back(*c.value);
    }
    return noise_floor_from_values(first.au, first.metric, values, first.model_tag);
}

struct SkippedGroup {
    std::string model_tag;
    MetricKind metric;
    AuId au;
    std::size_t n_defined;
};

struct NoiseFloorSummary {
    std::vector<NoiseFloorRow> rows;      // ordered by (model_tag, metric, au)
    std::vector<SkippedGroup> skipped;    // groups with < 2 defined cells
};

inline NoiseFloorSummary noise_floor_rows(std::span<const MetricCell> cells) {
    std::map<std::tuple<std::string, MetricKind, AuId>, std::vector<MetricCell>> groups;
    for (const auto& c : cells)
        groups[{c.model_tag, c.metric, c.au}].push_back(c);
    NoiseFloorSummary out;
    for (const auto& [key, group] : groups) {
        const auto n_defined = static_cast<std::size_t>(
            std::count_if(group.begin(), group.end(), [](const MetricCell& c) { return c.value.has_value(); }));
        if (n_defined < 2) {
            out.skipped.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), n_defined});
            continue;
        }
        out.rows.push_back(noise_floor(group));
    }
    return out;
}

// Mean of the per-AU 95% margins for one metric.
inline double protocol_noise_floor(std::span<const NoiseFloorRow> rows, MetricKind metric) {
    std::vector<double> margins;
    for (const auto& r : rows)
        if (r.metric == metric)
            margins.push_back(r.margin95);
    if (margins.empty())
        throw InsufficientObservations("protocol noise floor: no " + std::string(to_string(metric)) + " rows");
    return stats::mean(margins);
}

// ---------------------------------------------------------------------------
// Volatility

// sigma_f1 / sigma_auc; undefined when sigma_auc is zero.
inline std::optional<double> volatility_ratio(double sigma_f1, double sigma_auc) {
    if (sigma_f1 < 0.0 || sigma_auc < 0.0)
        throw std::invalid_argument("standard deviations must be non-negative");
    if (sigma_auc == 0.0)
        return std::nullopt;
    return sigma_f1 / sigma_auc;
}

struct VolatilityRow {
    AuId au = 0;
    double sigma_f1 = 0.0;
    double sigma_auc = 0.0;
    std::optional<double> rho;
};

// Joins F1 and AUC rows of one model tag by AU; AUs missing either metric
// are left out.
inline std::vector<VolatilityRow> volatility_table(std::span<const NoiseFloorRow> rows) {
    std::map<AuId, const NoiseFloorRow*> f1, auc_rows;
    for (const auto& r : rows)
        (r.metric == MetricKind::F1 ? f1 : auc_rows)[r.au] = &r;
    std::vector<VolatilityRow> out;
    for (const auto& [au, rf] : f1) {
        const auto it = auc_rows.find(au);
        if (it == auc_rows.end())
            continue;
        out.push_back({au, rf->sigma, it->second->sigma, volatility_ratio(rf->sigma, it->second->sigma)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adjudication

enum class NoiseVerdict { WithinNoise, ExceedsNoise };

inline std::string_view to_string(NoiseVerdict v) {
    return v == NoiseVerdict::WithinNoise ? "WITHIN_NOISE" : "EXCEEDS_NOISE";
}

// Closed band: |delta| == floor counts as within noise.
inline NoiseVerdict adjudicate_delta(double delta, double floor) {
    if (!(floor >= 0.0))
        throw std::invalid_argument("noise floor must be non-negative");
    return std::abs(delta) <= floor ? NoiseVerdict::WithinNoise : NoiseVerdict::ExceedsNoise;
}

// ---------------------------------------------------------------------------
// Cross-model stability

struct BackboneStability {
    std::string model_tag;
    std::vector<std::pair<AuId, double>> sigma_per_au;
    double mean_sigma = 0.0;
    double max_sigma = 0.0;
};

// Per-tag sample sigma of one metric for each AU, pooled over all
// (partition, fold) cells, with the mean and max over AUs.
inline std::vector<BackboneStability> backbone_stability_summary(std::span<const MetricCell> cells,
                                                                 MetricKind metric = MetricKind::F1) {
    std::map<std::string, std::map<AuId, std::vector<double>>> grouped;
    std::map<std::string, std::map<AuId, std::size_t>> seen;
    for (const auto& c : cells) {
        if (c.metric != metric)
            continue;
        seen[c.model_tag][c.au]++;
        if (c.value)
            grouped[c.model_tag][c.au].push_back(*c.value);
    }
    std::vector<BackboneStability> out;
    for (const auto& [tag, aus] : seen) {
        BackboneStability s{tag, {}, 0.0, 0.0};
        std::vector<double> sigmas;
        for (const auto& [au, count] : aus) {
            const auto& values = grouped[tag][au];
            if (values.size() < 2)
                throw InsufficientObservations("insufficient observations for model " + tag + " AU" +
                                               std::to_string(au));
            const double sd = stats::sample_stddev(values);
            s.sigma_per_au.emplace_back(au, sd);
            sigmas.push_back(sd);
        }
        s.mean_sigma = stats::mean(sigmas);
        s.max_sigma = *std::max_element(sigmas.begin(), sigmas.end());
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace protovar

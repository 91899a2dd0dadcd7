#pragma once
// Report rendering. Stored CSV/JSON values keep full double precision
// (shortest round-trip form); markdown tables round at render time only.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lodo_bootstrap.hpp"
#include "noise_analysis.hpp"
#include "partitioner.hpp"

namespace protovar::report {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kUndefined = "--";

// Fixed-point rendering. std::to_chars rounds the exact binary value, so
// exact decimal ties go to the even digit.
inline std::string fixed(double v, int decimals) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
    std::string s(buf, ptr);
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos)
        s.erase(0, 1);
    return s;
}

inline std::string fixed(const std::optional<double>& v, int decimals) {
    return v ? fixed(*v, decimals) : std::string(kUndefined);
}

inline std::string signed_fixed(const std::optional<double>& v, int decimals) {
    if (!v)
        return std::string(kUndefined);
    std::string s = fixed(*v, decimals);
    return s.front() == '-' ? s : "+" + s;
}

inline std::string metric_cell(const std::optional<double>& v) { return fixed(v, 4); }
inline std::string margin_cell(double margin) { return "±" + fixed(margin, 4); }
inline std::string ratio_cell(const std::optional<double>& rho) { return fixed(rho, 2); }
inline std::string percent_cell(const std::optional<double>& pct) {
    return pct ? fixed(*pct, 1) + "%" : std::string(kUndefined);
}

// Full-precision value for CSV/JSON text.
inline std::string full(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string full(const std::optional<double>& v) { return v ? full(*v) : std::string(kUndefined); }

inline Json json_value(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

namespace detail {
inline void table_row(std::ostringstream& out, const std::vector<std::string>& cells) {
    out << '|';
    for (const auto& c : cells)
        out << ' ' << c << " |";
    out << '\n';
}

inline void table_header(std::ostringstream& out, const std::vector<std::string>& cells) {
    table_row(out, cells);
    out << '|';
    for (std::size_t i = 0; i < cells.size(); ++i)
        out << (i == 0 ? " :-- |" : " --: |");
    out << '\n';
}
}  // namespace detail

// ---------------------------------------------------------------------------
// CSV artifacts

inline std::string prevalence_csv(std::span<const PrevalenceRow> rows, int k) {
    std::ostringstream out;
    out << "au";
    for (int f = 0; f < k; ++f)
        out << ",fold_" << f;
    out << ",min,max,range\n";
    for (const auto& r : rows) {
        out << r.au;
        for (const auto& v : r.per_fold)
            out << ',' << full(v);
        out << ',' << full(r.min) << ',' << full(r.max) << ',' << full(r.range) << '\n';
    }
    return out.str();
}

inline std::string prevalence_by_partition_csv(std::span<const std::vector<PrevalenceRow>> partitions, int k) {
    std::ostringstream out;
    out << "partition,au";
    for (int f = 0; f < k; ++f)
        out << ",fold_" << f;
    out << ",min,max,range\n";
    for (std::size_t p = 0; p < partitions.size(); ++p)
        for (const auto& r : partitions[p]) {
            out << p << ',' << r.au;
            for (const auto& v : r.per_fold)
                out << ',' << full(v);
            out << ',' << full(r.min) << ',' << full(r.max) << ',' << full(r.range) << '\n';
        }
    return out.str();
}

inline std::string noise_floor_csv(std::span<const NoiseFloorRow> rows) {
    std::ostringstream out;
    out << "metric,au,n,mean,sigma,margin95,min,max\n";
    for (const auto& r : rows)
        out << to_string(r.metric) << ',' << r.au << ',' << r.n_cells << ',' << full(r.mean) << ','
            << full(r.sigma) << ',' << full(r.margin95) << ',' << full(r.min) << ',' << full(r.max) << '\n';
    return out.str();
}

inline std::string volatility_csv(std::span<const VolatilityRow> rows) {
    std::ostringstream out;
    out << "au,sigma_f1,sigma_auc,rho\n";
    for (const auto& r : rows)
        out << r.au << ',' << full(r.sigma_f1) << ',' << full(r.sigma_auc) << ',' << full(r.rho) << '\n';
    return out.str();
}

inline std::string cells_csv(std::span<const MetricCell> cells) {
    std::ostringstream out;
    out << "model_tag,metric,au,partition,fold,value\n";
    for (const auto& c : cells)
        out << c.model_tag << ',' << to_string(c.metric) << ',' << c.au << ',' << c.partition_index << ','
            << c.fold_index << ',' << full(c.value) << '\n';
    return out.str();
}

inline std::string backbone_csv(std::span<const BackboneStability> rows) {
    std::ostringstream out;
    out << "model_tag,au,sigma\n";
    for (const auto& s : rows)
        for (const auto& [au, sigma] : s.sigma_per_au)
            out << s.model_tag << ',' << au << ',' << full(sigma) << '\n';
    return out.str();
}

// Dataset x metric x AU grid; undefined cells are "--".
inline std::string lodo_metrics_csv(std::span<const LodoFoldResult> folds, std::span<const AuId> aus) {
    std::ostringstream out;
    out << "metric,dataset";
    for (AuId au : aus)
        out << ",AU" << au;
    out << '\n';
    for (MetricKind m : {MetricKind::F1, MetricKind::AUC})
        for (const auto& f : folds) {
            out << to_string(m) << ',' << f.test_id;
            for (AuId au : aus) {
                std::optional<double> v;
                for (const auto& c : f.cells)
                    if (c.au == au)
                        v = c.get(m).value;
                out << ',' << full(v);
            }
            out << '\n';
        }
    return out.str();
}

inline std::string transfers_csv(std::span<const TransferResult> results) {
    std::ostringstream out;
    out << "test_id,au,metric,target,source_ref,delta,ci_low,ci_high,significant,n_defined,B,alpha\n";
    for (const auto& r : results)
        out << r.test_id << ',' << r.au << ',' << to_string(r.metric) << ',' << full(r.target_value) << ','
            << full(r.source_ref) << ',' << full(r.delta) << ',' << full(r.ci_low) << ',' << full(r.ci_high) << ','
            << (r.significant ? "true" : "false") << ',' << r.n_defined << ',' << r.iterations << ','
            << full(r.alpha) << '\n';
    return out.str();
}

inline std::string domain_sensitivity_csv(std::span<const DomainSensitivityRow> rows) {
    std::ostringstream out;
    out << "au,metric,n_transfers,n_significant,mean_delta,ds_percent\n";
    for (const auto& r : rows)
        out << r.au << ',' << to_string(r.metric) << ',' << r.n_transfers << ',' << r.n_significant << ','
            << full(r.mean_delta) << ',' << full(r.ds_percent) << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// JSON fragments

inline Json schedule_json(const ProtocolSchedule& s) {
    Json j;
    j["k"] = s.k;
    j["repeats"] = s.repeats;
    j["master_seed"] = s.master_seed;
    Json seeds = Json::array();
    for (const auto& p : s.partitions)
        seeds.push_back(p.seed);
    j["partition_seeds"] = seeds;
    return j;
}

inline Json noise_row_json(const NoiseFloorRow& r) {
    return Json{{"metric", to_string(r.metric)}, {"au", r.au},          {"n", r.n_cells},
                {"mean", r.mean},                {"sigma", r.sigma},    {"margin95", r.margin95},
                {"min", r.min},                  {"max", r.max}};
}

inline Json prevalence_row_json(const PrevalenceRow& r) {
    Json folds = Json::array();
    for (const auto& v : r.per_fold)
        folds.push_back(json_value(v));
    return Json{{"au", r.au},
                {"per_fold", folds},
                {"min", json_value(r.min)},
                {"max", json_value(r.max)},
                {"range", json_value(r.range)},
                {"has_undefined_fold", r.has_undefined_fold}};
}

inline Json transfer_json(const TransferResult& r) {
    return Json{{"test_id", r.test_id},
                {"au", r.au},
                {"metric", to_string(r.metric)},
                {"target", json_value(r.target_value)},
                {"source_ref", r.source_ref},
                {"delta", json_value(r.delta)},
                {"ci_low", json_value(r.ci_low)},
                {"ci_high", json_value(r.ci_high)},
                {"significant", r.significant},
                {"B", r.iterations},
                {"n_defined", r.n_defined},
                {"alpha", r.alpha},
                {"diagnostic", r.diagnostic}};
}

inline Json ds_json(const DomainSensitivityRow& r) {
    return Json{{"au", r.au},
                {"metric", to_string(r.metric)},
                {"n_transfers", r.n_transfers},
                {"n_significant", r.n_significant},
                {"mean_delta", json_value(r.mean_delta)},
                {"ds_percent", json_value(r.ds_percent)}};
}

// ---------------------------------------------------------------------------
// Report models

struct ModelNoiseResult {
    std::string model_tag;
    std::vector<PrevalenceRow> prevalence;                      // partition 0
    std::vector<std::vector<PrevalenceRow>> prevalence_by_partition;
    std::vector<MetricCell> cells;
    NoiseFloorSummary noise;
    std::vector<VolatilityRow> volatility;
    std::optional<double> protocol_floor_f1;
    std::optional<double> protocol_floor_auc;
    std::map<AuId, std::size_t> dropped;                         // label present, score missing
};

struct CvNoiseReport {
    Json config;  // echoed run configuration
    ProtocolSchedule schedule;
    std::vector<ModelNoiseResult> models;
    std::vector<BackboneStability> backbones;  // filled when > 1 model
};

struct LodoReport {
    std::string command;
    Json config;
    LodoPlan plan;
    std::vector<LodoFoldResult> folds;
    std::vector<AuId> aus;
    std::vector<TransferResult> transfers;
    std::vector<DomainSensitivityRow> sensitivity;
    std::map<std::string, std::uint64_t> transfer_seeds;
};

inline constexpr std::string_view kConventions =
    "- Fold metrics are computed on the held-out fold only; statistics pool all (partition, fold) cells.\n"
    "- A frame is predicted positive when score >= threshold.\n"
    "- AUC is the Mann-Whitney statistic; tied scores count one half.\n"
    "- sigma is the sample standard deviation (n - 1); 95% margin = 1.96 * sigma.\n"
    "- Undefined metrics (\"--\") are excluded, never imputed.\n";

inline constexpr std::string_view kBootstrapConventions =
    "- Subjects of the held-out dataset are resampled with replacement; source_ref is held fixed.\n"
    "- Delta = target - source_ref; the CI uses linear-interpolation percentiles at (B-1)*q.\n"
    "- A shift is significant when 0 lies outside the CI; no multiple-comparison correction.\n"
    "- Domain Sensitivity counts only transfers where the AU is annotated in the target.\n";

inline std::string markdown_noise_floor(std::span<const NoiseFloorRow> rows) {
    std::map<AuId, std::map<MetricKind, const NoiseFloorRow*>> by_au;
    for (const auto& r : rows)
        by_au[r.au][r.metric] = &r;
    std::ostringstream out;
    detail::table_header(out, {"AU", "F1 Mean", "F1 σ", "F1 95% Margin (±1.96σ)", "F1 Range", "AUC Mean", "AUC σ",
                               "AUC 95% Margin (±1.96σ)", "AUC Range"});
    for (const auto& [au, metrics] : by_au) {
        std::vector<std::string> cells{std::to_string(au)};
        for (MetricKind m : {MetricKind::F1, MetricKind::AUC}) {
            const auto it = metrics.find(m);
            if (it == metrics.end()) {
                cells.insert(cells.end(), 4, std::string(kUndefined));
                continue;
            }
            const auto& r = *it->second;
            cells.push_back(metric_cell(r.mean));
            cells.push_back(metric_cell(r.sigma));
            cells.push_back(margin_cell(r.margin95));
            cells.push_back(metric_cell(r.min) + "-" + metric_cell(r.max));
        }
        detail::table_row(out, cells);
    }
    return out.str();
}

inline std::string markdown_volatility(std::span<const VolatilityRow> rows) {
    std::ostringstream out;
    detail::table_header(out, {"AU", "σ_F1", "σ_AUC", "Volatility Ratio ρ"});
    for (const auto& r : rows)
        detail::table_row(out, {std::to_string(r.au), metric_cell(r.sigma_f1), metric_cell(r.sigma_auc),
                                ratio_cell(r.rho)});
    return out.str();
}

inline std::string markdown_prevalence(std::span<const PrevalenceRow> rows, int k) {
    std::ostringstream out;
    std::vector<std::string> header{"AU"};
    for (int f = 0; f < k; ++f)
        header.push_back("Fold " + std::to_string(f));
    header.insert(header.end(), {"Min", "Max", "Range"});
    detail::table_header(out, header);
    for (const auto& r : rows) {
        std::vector<std::string> cells{std::to_string(r.au)};
        for (const auto& v : r.per_fold)
            cells.push_back(metric_cell(v));
        cells.push_back(metric_cell(r.min));
        cells.push_back(metric_cell(r.max));
        cells.push_back(metric_cell(r.range) + (r.has_undefined_fold ? " *" : ""));
        detail::table_row(out, cells);
    }
    return out.str();
}

inline std::string markdown_lodo_grid(std::span<const LodoFoldResult> folds, std::span<const AuId> aus) {
    std::ostringstream out;
    std::vector<std::string> header{"Metric", "Test Dataset"};
    for (AuId au : aus)
        header.push_back("AU" + std::to_string(au));
    detail::table_header(out, header);
    for (MetricKind m : {MetricKind::F1, MetricKind::AUC})
        for (const auto& f : folds) {
            std::vector<std::string> cells{std::string(to_string(m)), f.test_id};
            for (AuId au : aus) {
                std::optional<double> v;
                for (const auto& c : f.cells)
                    if (c.au == au)
                        v = c.get(m).value;
                cells.push_back(metric_cell(v));
            }
            detail::table_row(out, cells);
        }
    return out.str();
}

inline std::string markdown_transfers(std::span<const TransferResult> results) {
    std::ostringstream out;
    detail::table_header(out, {"Test", "AU", "Metric", "Target", "Source ref", "Δ", "95% CI", "Significant"});
    for (const auto& r : results) {
        const std::string ci = r.ci_low ? "[" + signed_fixed(r.ci_low, 4) + ", " + signed_fixed(r.ci_high, 4) + "]"
                                        : std::string(kUndefined);
        detail::table_row(out, {r.test_id, std::to_string(r.au), std::string(to_string(r.metric)),
                                metric_cell(r.target_value), metric_cell(r.source_ref), signed_fixed(r.delta, 4), ci,
                                r.delta ? (r.significant ? "yes" : "no") : std::string(kUndefined)});
    }
    return out.str();
}

inline std::string markdown_domain_sensitivity(std::span<const DomainSensitivityRow> rows) {
    std::map<AuId, std::map<MetricKind, const DomainSensitivityRow*>> by_au;
    for (const auto& r : rows)
        by_au[r.au][r.metric] = &r;
    std::ostringstream out;
    detail::table_header(out, {"AU", "Mean ΔF1", "Mean ΔAUC", "F1 DS", "AUC DS", "F1 n", "AUC n"});
    for (const auto& [au, metrics] : by_au) {
        auto get = [&](MetricKind m) -> const DomainSensitivityRow* {
            const auto it = metrics.find(m);
            return it == metrics.end() ? nullptr : it->second;
        };
        const auto* f1 = get(MetricKind::F1);
        const auto* a = get(MetricKind::AUC);
        auto count = [](const DomainSensitivityRow* r) {
            return r ? std::to_string(r->n_significant) + "/" + std::to_string(r->n_transfers)
                     : std::string(kUndefined);
        };
        detail::table_row(out, {std::to_string(au), f1 ? signed_fixed(f1->mean_delta, 4) : std::string(kUndefined),
                                a ? signed_fixed(a->mean_delta, 4) : std::string(kUndefined),
                                f1 ? percent_cell(f1->ds_percent) : std::string(kUndefined),
                                a ? percent_cell(a->ds_percent) : std::string(kUndefined), count(f1), count(a)});
    }
    return out.str();
}

inline std::string render_markdown(const CvNoiseReport& rep) {
    std::ostringstream out;
    out << "# Cross-validation noise report\n\n## Protocol\n\n";
    out << "- Folds (k): " << rep.schedule.k << "\n- Repeats: " << rep.schedule.repeats
        << "\n- Master seed: " << rep.schedule.master_seed << "\n- Partition seeds:";
    for (std::size_t p = 0; p < rep.schedule.partitions.size(); ++p)
        out << (p ? ", " : " ") << rep.schedule.partitions[p].seed;
    out << "\n\n" << kConventions << "\nRun configuration:\n\n```json\n" << rep.config.dump(2) << "\n```\n";

    for (const auto& m : rep.models) {
        out << "\n## Model `" << m.model_tag << "`\n\n";
        out << "### Empirical noise floor per AU\n\n" << markdown_noise_floor(m.noise.rows) << '\n';
        out << "Protocol noise floor (mean 95% margin): F1 "
            << (m.protocol_floor_f1 ? margin_cell(*m.protocol_floor_f1) : std::string(kUndefined)) << ", AUC "
            << (m.protocol_floor_auc ? margin_cell(*m.protocol_floor_auc) : std::string(kUndefined)) << "\n\n";
        out << "Differences smaller than the protocol noise floor are not distinguishable from split-induced "
               "variation under this protocol.\n\n";
        if (!m.noise.skipped.empty()) {
            out << "Insufficient observations (fewer than 2 defined cells):";
            for (const auto& s : m.noise.skipped)
                out << ' ' << to_string(s.metric) << "/AU" << s.au << " (n=" << s.n_defined << ")";
            out << "\n\n";
        }
        out << "### Per-AU volatility comparison between F1 and AUC\n\n" << markdown_volatility(m.volatility) << '\n';
        out << "### AU prevalence across folds (partition 0)\n\n" << markdown_prevalence(m.prevalence, rep.schedule.k);
        bool any_undefined = false;
        for (const auto& r : m.prevalence)
            any_undefined = any_undefined || r.has_undefined_fold;
        if (any_undefined)
            out << "\n\\* range computed over folds with defined prevalence only.\n";
        std::size_t dropped_total = 0;
        for (const auto& [au, n] : m.dropped)
            dropped_total += n;
        if (dropped_total > 0) {
            out << "\nFrames with a label but no score (excluded):";
            for (const auto& [au, n] : m.dropped)
                if (n > 0)
                    out << " AU" << au << "=" << n;
            out << '\n';
        }
    }
    if (!rep.backbones.empty()) {
        out << "\n## Cross-model stability (F1 σ)\n\n";
        std::ostringstream table;
        detail::table_header(table, {"Model", "Mean σ", "Max σ"});
        for (const auto& b : rep.backbones)
            detail::table_row(table, {b.model_tag, metric_cell(b.mean_sigma), metric_cell(b.max_sigma)});
        out << table.str();
    }
    return out.str();
}

inline std::string render_markdown(const LodoReport& rep) {
    std::ostringstream out;
    out << "# " << (rep.command == "bootstrap" ? "Subject-level bootstrap report" : "Leave-one-dataset-out report")
        << "\n\n## Protocol\n\n";
    if (!rep.plan.folds.empty()) {
        for (const auto& f : rep.plan.folds) {
            out << "- Test " << f.test_id << " <- train {";
            bool first = true;
            for (const auto& t : f.train_ids) {
                out << (first ? "" : ", ") << t;
                first = false;
            }
            out << "}\n";
        }
    }
    for (const auto& [test, seed] : rep.transfer_seeds)
        out << "- Bootstrap seed for " << test << ": " << seed << '\n';
    out << '\n' << kBootstrapConventions << "\nRun configuration:\n\n```json\n" << rep.config.dump(2) << "\n```\n";
    out << "\n## LODO performance\n\n" << markdown_lodo_grid(rep.folds, rep.aus);
    out << "\n\"--\" marks an AU that is not annotated (or has no defined metric) in the test dataset.\n";
    if (!rep.transfers.empty())
        out << "\n## Transfer shifts\n\n" << markdown_transfers(rep.transfers);
    if (!rep.sensitivity.empty())
        out << "\n## Domain Sensitivity (DS) across LODO transfers\n\n"
            << markdown_domain_sensitivity(rep.sensitivity);
    return out.str();
}

inline Json to_json(const CvNoiseReport& rep) {
    Json j;
    j["command"] = "cv-noise";
    j["config"] = rep.config;
    j["schedule"] = schedule_json(rep.schedule);
    j["conventions"] = {{"threshold_rule", "score >= threshold"},
                        {"auc_ties", "half credit"},
                        {"sigma", "sample standard deviation (n-1)"},
                        {"margin95", "1.96 * sigma"}};
    Json models = Json::array();
    for (const auto& m : rep.models) {
        Json jm;
        jm["model_tag"] = m.model_tag;
        jm["protocol_noise_floor"] = {{"F1", json_value(m.protocol_floor_f1)},
                                      {"AUC", json_value(m.protocol_floor_auc)}};
        Json rows = Json::array();
        for (const auto& r : m.noise.rows)
            rows.push_back(noise_row_json(r));
        jm["noise_floor"] = rows;
        Json skipped = Json::array();
        for (const auto& s : m.noise.skipped)
            skipped.push_back({{"metric", to_string(s.metric)}, {"au", s.au}, {"n_defined", s.n_defined}});
        jm["insufficient"] = skipped;
        Json vol = Json::array();
        for (const auto& v : m.volatility)
            vol.push_back({{"au", v.au}, {"sigma_f1", v.sigma_f1}, {"sigma_auc", v.sigma_auc}, {"rho", json_value(v.rho)}});
        jm["volatility"] = vol;
        Json prev = Json::array();
        for (const auto& part : m.prevalence_by_partition) {
            Json rows_p = Json::array();
            for (const auto& r : part)
                rows_p.push_back(prevalence_row_json(r));
            prev.push_back(rows_p);
        }
        jm["prevalence_by_partition"] = prev;
        Json dropped = Json::object();
        for (const auto& [au, n] : m.dropped)
            dropped["AU" + std::to_string(au)] = n;
        jm["dropped_pairs"] = dropped;
        models.push_back(jm);
    }
    j["models"] = models;
    if (!rep.backbones.empty()) {
        Json b = Json::array();
        for (const auto& s : rep.backbones) {
            Json per_au = Json::object();
            for (const auto& [au, sigma] : s.sigma_per_au)
                per_au["AU" + std::to_string(au)] = sigma;
            b.push_back({{"model_tag", s.model_tag},
                         {"sigma_per_au", per_au},
                         {"mean_sigma", s.mean_sigma},
                         {"max_sigma", s.max_sigma}});
        }
        j["backbone_stability"] = b;
    }
    return j;
}

inline Json to_json(const LodoReport& rep) {
    Json j;
    j["command"] = rep.command;
    j["config"] = rep.config;
    Json plan = Json::array();
    for (const auto& f : rep.plan.folds)
        plan.push_back({{"test_id", f.test_id}, {"train_ids", f.train_ids}});
    j["plan"] = plan;
    Json seeds = Json::object();
    for (const auto& [test, seed] : rep.transfer_seeds)
        seeds[test] = seed;
    j["bootstrap_seeds"] = seeds;
    Json grid = Json::array();
    for (const auto& f : rep.folds) {
        Json cells = Json::array();
        for (const auto& c : f.cells)
            cells.push_back({{"au", c.au},
                             {"F1", json_value(c.f1.value)},
                             {"AUC", json_value(c.auc.value)},
                             {"n_pos", c.auc.n_pos},
                             {"n_neg", c.auc.n_neg}});
        grid.push_back({{"test_id", f.test_id}, {"cells", cells}});
    }
    j["lodo_metrics"] = grid;
    Json transfers = Json::array();
    for (const auto& r : rep.transfers)
        transfers.push_back(transfer_json(r));
    j["transfers"] = transfers;
    Json ds = Json::array();
    for (const auto& r : rep.sensitivity)
        ds.push_back(ds_json(r));
    j["domain_sensitivity"] = ds;
    return j;
}

}  // namespace protovar::report

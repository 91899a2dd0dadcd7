#pragma once
// Command-line front end: cv-noise, lodo, bootstrap, synth, adjudicate.
//
// Exit codes: 0 success, 1 parse/validation error, 2 insufficient
// observations, 3 I/O failure.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "data_model.hpp"
#include "error.hpp"
#include "lodo_bootstrap.hpp"
#include "noise_analysis.hpp"
#include "partitioner.hpp"
#include "report.hpp"
#include "synthetic.hpp"

namespace protovar::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kParseError = 1, kInsufficient = 2, kIoError = 3 };

struct RunConfig {
    std::string command;
    std::vector<std::string> inputs;
    std::vector<std::string> model_tags;
    int k = 3;
    int repeats = 4;
    std::uint64_t master_seed = 0;
    std::string seed_source = "default";  // flag, config, env, population or default
    double threshold = 0.5;
    std::size_t iterations = kDefaultBootstrapIterations;
    double alpha = kDefaultAlpha;
    std::string out_dir = ".";
    std::set<std::string> formats{"csv", "json", "md"};
    std::size_t jobs = 1;
    // lodo / bootstrap
    std::string manifest;
    std::string dataset;
    std::string source_ref_file;
    std::vector<std::string> source_tables;
    // synth
    std::string population_file;
    std::vector<int> scaling_k;
    // adjudicate
    std::optional<double> delta;
    std::optional<double> floor;

    void validate() const {
        if (!(threshold > 0.0 && threshold < 1.0))
            throw ParseError("--threshold must lie in (0,1)");
        if (!(alpha > 0.0 && alpha < 1.0))
            throw ParseError("--alpha must lie in (0,1)");
        if (k < 2)
            throw ParseError("--k must be at least 2");
        if (repeats < 1)
            throw ParseError("--repeats must be at least 1");
        if (iterations < 1)
            throw ParseError("--B must be at least 1");
        for (const auto& f : formats)
            if (f != "csv" && f != "json" && f != "md")
                throw ParseError("unknown output format '" + f + "' (expected csv, json, md)");
    }

    bool wants(const std::string& format) const { return formats.contains(format); }
};

// Everything that affects results. `jobs` and the output directory are
// left out so artifacts are byte-identical across worker counts.
inline Json config_json(const RunConfig& c) {
    Json j;
    j["command"] = c.command;
    j["inputs"] = c.inputs;
    if (c.command == "cv-noise") {
        j["model_tags"] = c.model_tags;
        j["k"] = c.k;
        j["repeats"] = c.repeats;
    }
    j["master_seed"] = c.master_seed;
    j["seed_source"] = c.seed_source;
    j["threshold"] = c.threshold;
    if (c.command == "lodo" || c.command == "bootstrap") {
        j["B"] = c.iterations;
        j["alpha"] = c.alpha;
        if (!c.manifest.empty())
            j["manifest"] = c.manifest;
        if (!c.dataset.empty())
            j["dataset"] = c.dataset;
        if (!c.source_ref_file.empty())
            j["source_ref"] = c.source_ref_file;
        if (!c.source_tables.empty())
            j["source_tables"] = c.source_tables;
    }
    if (c.command == "synth") {
        if (!c.population_file.empty())
            j["population"] = c.population_file;
        if (!c.scaling_k.empty()) {
            j["scaling_k"] = c.scaling_k;
            j["repeats"] = c.repeats;
        }
    }
    j["formats"] = c.formats;
    return j;
}

// ---------------------------------------------------------------------------
// File helpers (single writer, after aggregation)

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline nlohmann::json read_json(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": invalid JSON: " + e.what());
    }
}

class ArtifactWriter {
public:
    explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& relative, std::string content) { files_[relative] = std::move(content); }

    std::vector<std::string> flush() const {
        std::vector<std::string> written;
        for (const auto& [rel, content] : files_) {
            const fs::path path = dir_ / rel;
            std::error_code ec;
            fs::create_directories(path.parent_path(), ec);
            if (ec)
                throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            if (!out)
                throw IoError("cannot write " + path.string());
            out << content;
            if (!out)
                throw IoError("write failed for " + path.string());
            written.push_back(path.string());
        }
        return written;
    }

private:
    fs::path dir_;
    std::map<std::string, std::string> files_;
};

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

// Source references: {"F1": {"1": 0.61, ...}, "AUC": {...}}.
using SourceRefs = std::map<std::pair<MetricKind, AuId>, double>;

inline SourceRefs parse_source_refs(const nlohmann::json& j, const std::string& where) {
    SourceRefs refs;
    if (!j.is_object())
        throw ParseError(where + ": source_ref must be an object keyed by metric");
    for (const auto& [metric_name, per_au] : j.items()) {
        const MetricKind m = parse_metric_kind(metric_name);
        if (!per_au.is_object())
            throw ParseError(where + ": source_ref." + metric_name + " must map AU ids to values");
        for (const auto& [au_text, value] : per_au.items()) {
            std::string_view t = au_text;
            if (t.starts_with("AU"))
                t.remove_prefix(2);
            AuId au = 0;
            auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), au);
            if (ec != std::errc{} || ptr != t.data() + t.size() || au <= 0)
                throw ParseError(where + ": bad AU key '" + au_text + "'");
            if (!value.is_number())
                throw ParseError(where + ": source_ref for AU" + std::to_string(au) + " must be a number");
            refs[{m, au}] = value.get<double>();
        }
    }
    return refs;
}

inline SourceRefs source_refs_from_tables(const std::vector<EvalTable>& tables, double threshold) {
    SourceRefs refs;
    std::set<AuId> aus;
    for (const auto& t : tables)
        aus.insert(t.schema().ids().begin(), t.schema().ids().end());
    for (AuId au : aus) {
        std::vector<EvalTable> having;
        for (const auto& t : tables)
            if (t.schema().index_of(au))
                having.push_back(t);
        for (MetricKind m : {MetricKind::F1, MetricKind::AUC})
            if (auto v = source_reference(having, au, m, threshold))
                refs[{m, au}] = *v;
    }
    return refs;
}

inline std::uint64_t transfer_seed(std::uint64_t master_seed, const std::string& test_id) {
    return derive_seed(master_seed, "lodo:" + test_id, 0);
}

// Transfer tests for one held-out dataset. One bootstrap draw sequence is
// shared by all AUs and metrics of the transfer. When `samples` is given it
// receives the bootstrap sample behind each result.
inline std::vector<TransferResult> run_transfers(const EvalTable& target, const std::string& test_id,
                                                 const LodoFoldResult& point, const SourceRefs& refs,
                                                 const RunConfig& cfg,
                                                 std::vector<BootstrapSample>* samples = nullptr) {
    std::vector<TransferResult> out;
    const std::uint64_t seed = transfer_seed(cfg.master_seed, test_id);
    for (MetricKind m : {MetricKind::F1, MetricKind::AUC})
        for (const auto& cell : point.cells) {
            const auto it = refs.find({m, cell.au});
            if (it == refs.end())
                continue;
            const auto value = cell.get(m).value;
            BootstrapSample sample;
            sample.iterations = cfg.iterations;
            if (value)
                sample = bootstrap_metric(target, cell.au, m, cfg.iterations, seed, cfg.threshold, cfg.jobs);
            auto r = transfer_test_from_sample(cell.au, m, test_id, value, it->second, sample, cfg.alpha);
            if (!value)
                r.diagnostic = "AU not annotated (metric undefined) in target";
            out.push_back(std::move(r));
            if (samples)
                samples->push_back(std::move(sample));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Commands

inline int run_cv_noise(const RunConfig& cfg, std::ostream& log) {
    if (cfg.inputs.empty())
        throw ParseError("cv-noise: at least one input table is required");
    std::vector<std::string> tags = cfg.model_tags;
    if (tags.empty())
        for (const auto& in : cfg.inputs)
            tags.push_back(cfg.inputs.size() == 1 ? "model" : fs::path(in).stem().string());
    if (tags.size() != cfg.inputs.size())
        throw ParseError("cv-noise: --tag count must match the number of inputs");
    if (std::set<std::string>(tags.begin(), tags.end()).size() != tags.size())
        throw ParseError("cv-noise: model tags must be unique");

    std::vector<EvalTable> tables;
    for (const auto& in : cfg.inputs)
        tables.push_back(load_eval_table(in));
    const auto subjects = subjects_of(tables.front());
    for (std::size_t i = 1; i < tables.size(); ++i) {
        if (!(tables[i].schema() == tables.front().schema()))
            throw ParseError(cfg.inputs[i] + ": AU schema differs from " + cfg.inputs.front());
        if (subjects_of(tables[i]) != subjects)
            throw ParseError(cfg.inputs[i] + ": subject set differs from " + cfg.inputs.front());
    }
    if (subjects.size() < static_cast<std::size_t>(cfg.k))
        throw ParseError("cv-noise: " + std::to_string(subjects.size()) + " subjects cannot form " +
                         std::to_string(cfg.k) + " folds");

    report::CvNoiseReport rep;
    rep.config = config_json(cfg);
    rep.schedule = make_schedule(subjects, cfg.k, cfg.repeats, cfg.master_seed);
    const MetricKind kinds[] = {MetricKind::F1, MetricKind::AUC};
    std::vector<MetricCell> all_cells;
    for (std::size_t i = 0; i < tables.size(); ++i) {
        report::ModelNoiseResult m;
        m.model_tag = tags[i];
        for (const auto& fa : rep.schedule.partitions)
            m.prevalence_by_partition.push_back(prevalence_table(tables[i], fa));
        m.prevalence = m.prevalence_by_partition.front();
        m.cells = metric_matrix(tables[i], rep.schedule, tags[i], kinds, cfg.threshold, cfg.jobs);
        m.noise = noise_floor_rows(m.cells);
        if (m.noise.rows.empty())
            throw InsufficientObservations("model " + tags[i] + ": no AU has at least 2 defined fold metrics");
        m.volatility = volatility_table(m.noise.rows);
        for (MetricKind kind : kinds) {
            const bool any = std::any_of(m.noise.rows.begin(), m.noise.rows.end(),
                                         [&](const NoiseFloorRow& r) { return r.metric == kind; });
            if (any)
                (kind == MetricKind::F1 ? m.protocol_floor_f1 : m.protocol_floor_auc) =
                    protocol_noise_floor(m.noise.rows, kind);
        }
        for (AuId au : tables[i].schema().ids())
            m.dropped[au] = dropped_pairs(tables[i], au);
        all_cells.insert(all_cells.end(), m.cells.begin(), m.cells.end());
        rep.models.push_back(std::move(m));
    }
    if (tables.size() > 1) {
        // Only AUs with enough defined cells under every model are compared.
        std::vector<MetricCell> comparable;
        std::set<std::pair<std::string, AuId>> skipped;
        for (const auto& m : rep.models)
            for (const auto& s : m.noise.skipped)
                if (s.metric == MetricKind::F1)
                    skipped.insert({m.model_tag, s.au});
        std::set<AuId> excluded;
        for (const auto& [tag, au] : skipped)
            excluded.insert(au);
        for (const auto& c : all_cells)
            if (c.metric == MetricKind::F1 && !excluded.contains(c.au))
                comparable.push_back(c);
        if (!comparable.empty())
            rep.backbones = backbone_stability_summary(comparable, MetricKind::F1);
    }

    ArtifactWriter w(cfg.out_dir);
    const bool multi = rep.models.size() > 1;
    for (const auto& m : rep.models) {
        const std::string prefix = multi ? m.model_tag + "/" : "";
        if (cfg.wants("csv")) {
            w.add(prefix + "prevalence.csv", report::prevalence_csv(m.prevalence, cfg.k));
            w.add(prefix + "prevalence_by_partition.csv",
                  report::prevalence_by_partition_csv(m.prevalence_by_partition, cfg.k));
            w.add(prefix + "noise_floor.csv", report::noise_floor_csv(m.noise.rows));
            w.add(prefix + "volatility.csv", report::volatility_csv(m.volatility));
            w.add(prefix + "cells.csv", report::cells_csv(m.cells));
        }
    }
    for (std::size_t p = 0; p < rep.schedule.partitions.size(); ++p) {
        const auto& fa = rep.schedule.partitions[p];
        const std::string base = "partitions/partition_" + std::to_string(p);
        if (cfg.wants("csv")) {
            std::ostringstream csv;
            write_assignment_csv(csv, fa);
            w.add(base + ".csv", csv.str());
        }
        if (cfg.wants("json"))
            w.add(base + ".json", dump_json(assignment_sidecar(fa)));
    }
    if (multi && cfg.wants("csv") && !rep.backbones.empty())
        w.add("backbone_stability.csv", report::backbone_csv(rep.backbones));
    if (cfg.wants("json"))
        w.add("cv_noise.json", dump_json(report::to_json(rep)));
    if (cfg.wants("md"))
        w.add("report.md", report::render_markdown(rep));
    w.flush();

    for (const auto& m : rep.models)
        log << m.model_tag << ": protocol noise floor F1 "
            << (m.protocol_floor_f1 ? report::margin_cell(*m.protocol_floor_f1) : "--") << ", AUC "
            << (m.protocol_floor_auc ? report::margin_cell(*m.protocol_floor_auc) : "--") << '\n';
    return kOk;
}

inline void write_lodo_artifacts(const report::LodoReport& rep, const RunConfig& cfg,
                                 const std::vector<BootstrapSample>* samples = nullptr) {
    ArtifactWriter w(cfg.out_dir);
    const std::string stem = rep.command == "bootstrap" ? "bootstrap" : "lodo";
    if (cfg.wants("csv")) {
        w.add("lodo_metrics.csv", report::lodo_metrics_csv(rep.folds, rep.aus));
        w.add("transfers.csv", report::transfers_csv(rep.transfers));
        if (!rep.sensitivity.empty())
            w.add("domain_sensitivity.csv", report::domain_sensitivity_csv(rep.sensitivity));
        if (samples) {
            std::ostringstream out;
            out << "test_id,au,metric,index,value\n";
            for (std::size_t i = 0; i < samples->size(); ++i) {
                const auto& key = rep.transfers[i];
                const auto& values = (*samples)[i].values;
                for (std::size_t b = 0; b < values.size(); ++b)
                    out << key.test_id << ',' << key.au << ',' << to_string(key.metric) << ',' << b << ','
                        << report::full(values[b]) << '\n';
            }
            w.add("bootstrap_samples.csv", out.str());
        }
    }
    if (cfg.wants("json"))
        w.add(stem + ".json", dump_json(report::to_json(rep)));
    if (cfg.wants("md"))
        w.add("report.md", report::render_markdown(rep));
    w.flush();
}

inline std::vector<AuId> union_aus(const std::vector<EvalTable>& tables) {
    std::set<AuId> aus;
    for (const auto& t : tables)
        aus.insert(t.schema().ids().begin(), t.schema().ids().end());
    return {aus.begin(), aus.end()};
}

// Manifest:
// {"transfers": [{"test_id": "DISFA", "table": "disfa.csv",
//                 "source_ref": {"F1": {"1": 0.5}, "AUC": {...}}
//                 | "source_tables": ["a.csv", ...]}, ...]}
// Relative paths resolve against the manifest's directory.
inline int run_lodo(const RunConfig& cfg, std::ostream& log) {
    if (cfg.manifest.empty())
        throw ParseError("lodo: --manifest is required");
    const auto manifest = read_json(cfg.manifest);
    const fs::path base = fs::path(cfg.manifest).parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
    if (!manifest.contains("transfers") || !manifest["transfers"].is_array())
        throw ParseError(cfg.manifest + ": expected a \"transfers\" array");

    struct Entry {
        std::string table_path;
        std::optional<SourceRefs> refs;
    };
    std::map<std::string, Entry> entries;
    for (const auto& t : manifest["transfers"]) {
        if (!t.contains("test_id") || !t["test_id"].is_string() || !t.contains("table") || !t["table"].is_string())
            throw ParseError(cfg.manifest + ": each transfer needs string fields test_id and table");
        const std::string id = t["test_id"].get<std::string>();
        Entry e{resolve(t["table"].get<std::string>()), std::nullopt};
        if (t.contains("source_ref")) {
            e.refs = parse_source_refs(t["source_ref"], cfg.manifest + " (" + id + ")");
        } else if (t.contains("source_tables")) {
            std::vector<EvalTable> sources;
            for (const auto& p : t["source_tables"])
                sources.push_back(load_eval_table(resolve(p.get<std::string>())));
            e.refs = source_refs_from_tables(sources, cfg.threshold);
        }
        if (!entries.emplace(id, std::move(e)).second)
            throw ParseError(cfg.manifest + ": dataset " + id + " is held out more than once");
    }
    std::set<std::string> ids;
    for (const auto& [id, e] : entries)
        ids.insert(id);

    report::LodoReport rep;
    rep.command = "lodo";
    rep.config = config_json(cfg);
    rep.plan = lodo_plan(ids);
    std::vector<EvalTable> targets;
    for (const auto& fold : rep.plan.folds) {
        const auto& e = entries.at(fold.test_id);
        EvalTable table = load_eval_table(e.table_path);
        for (const auto& train : fold.train_ids)
            if (table.dataset_ids().contains(train))
                throw ParseError(e.table_path + ": held-out table for " + fold.test_id +
                                 " contains rows of training dataset " + train);
        table = detail::target_rows(table, fold.test_id);
        auto point = evaluate_lodo_fold(table, fold.test_id, cfg.threshold);
        if (e.refs) {
            rep.transfer_seeds[fold.test_id] = transfer_seed(cfg.master_seed, fold.test_id);
            auto results = run_transfers(table, fold.test_id, point, *e.refs, cfg);
            rep.transfers.insert(rep.transfers.end(), results.begin(), results.end());
        }
        rep.folds.push_back(std::move(point));
        targets.push_back(std::move(table));
    }
    rep.aus = union_aus(targets);
    if (!rep.transfers.empty())
        rep.sensitivity = domain_sensitivity_table(rep.transfers);
    write_lodo_artifacts(rep, cfg);
    log << "lodo: " << rep.folds.size() << " folds, " << rep.transfers.size() << " transfer tests\n";
    return kOk;
}

inline int run_bootstrap(const RunConfig& cfg, std::ostream& log) {
    if (cfg.inputs.size() != 1)
        throw ParseError("bootstrap: exactly one target table is required");
    EvalTable table = load_eval_table(cfg.inputs.front());
    std::string test_id = cfg.dataset;
    if (test_id.empty()) {
        if (table.dataset_ids().size() != 1)
            throw ParseError("bootstrap: target has several datasets; choose one with --dataset");
        test_id = *table.dataset_ids().begin();
    }
    table = detail::target_rows(table, test_id);
    SourceRefs refs;
    if (!cfg.source_ref_file.empty()) {
        refs = parse_source_refs(read_json(cfg.source_ref_file), cfg.source_ref_file);
    } else if (!cfg.source_tables.empty()) {
        std::vector<EvalTable> sources;
        for (const auto& p : cfg.source_tables)
            sources.push_back(load_eval_table(p));
        refs = source_refs_from_tables(sources, cfg.threshold);
    } else {
        throw ParseError("bootstrap: provide --source-ref <json> or --source-table <csv>");
    }

    report::LodoReport rep;
    rep.command = "bootstrap";
    rep.config = config_json(cfg);
    auto point = evaluate_lodo_fold(table, test_id, cfg.threshold);
    rep.transfer_seeds[test_id] = transfer_seed(cfg.master_seed, test_id);

    std::vector<BootstrapSample> samples;
    rep.transfers = run_transfers(table, test_id, point, refs, cfg, &samples);
    rep.folds.push_back(std::move(point));
    rep.aus = table.schema().ids();
    if (!rep.transfers.empty())
        rep.sensitivity = domain_sensitivity_table(rep.transfers);
    write_lodo_artifacts(rep, cfg, &samples);
    log << "bootstrap: " << rep.transfers.size() << " transfer tests on " << test_id << '\n';
    return kOk;
}

inline int run_synth(const RunConfig& cfg, const synth::PopulationSpec& flag_spec, bool have_flag_spec,
                     std::ostream& log) {
    synth::PopulationSpec spec;
    std::optional<std::uint64_t> file_seed;
    if (!cfg.population_file.empty()) {
        const auto j = read_json(cfg.population_file);
        spec = synth::population_from_json(j);
        if (j.contains("seed"))
            file_seed = spec.seed;
    } else if (have_flag_spec) {
        spec = flag_spec;
    } else {
        throw ParseError("synth: provide --population <json> or --au specifications");
    }
    RunConfig effective = cfg;
    if (cfg.seed_source == "default" && file_seed) {
        effective.master_seed = *file_seed;
        effective.seed_source = "population";
    }
    spec.seed = effective.master_seed;
    spec.validate();

    const EvalTable table = synth::generate(spec, cfg.jobs);
    ArtifactWriter w(cfg.out_dir);
    if (cfg.wants("csv"))
        w.add("synthetic.csv", to_csv(table));
    Json echo;
    echo["config"] = config_json(effective);
    echo["population"] = spec;
    echo["rows"] = table.size();

    std::vector<synth::ScalingPoint> scaling;
    if (!cfg.scaling_k.empty()) {
        scaling = synth::variance_scaling_experiment(table, cfg.scaling_k, cfg.repeats, effective.master_seed,
                                                     cfg.threshold, cfg.jobs);
        std::ostringstream csv;
        csv << "k,mean_sigma_f1,mean_sigma_auc,n_aus_f1,n_aus_auc\n";
        Json js = Json::array();
        for (const auto& p : scaling) {
            csv << p.k << ',' << report::full(p.mean_sigma_f1) << ',' << report::full(p.mean_sigma_auc) << ','
                << p.n_aus_f1 << ',' << p.n_aus_auc << '\n';
            js.push_back({{"k", p.k},
                          {"mean_sigma_f1", report::json_value(p.mean_sigma_f1)},
                          {"mean_sigma_auc", report::json_value(p.mean_sigma_auc)}});
        }
        echo["variance_scaling"] = js;
        if (cfg.wants("csv"))
            w.add("scaling.csv", csv.str());
    }
    if (cfg.wants("json"))
        w.add("synthetic_spec.json", dump_json(echo));
    if (cfg.wants("md")) {
        std::ostringstream md;
        md << "# Synthetic population\n\n- Dataset: " << spec.dataset_id << "\n- Subjects: " << spec.n_subjects
           << "\n- Frames per subject: " << spec.frames_min << "-" << spec.frames_max << "\n- Seed: " << spec.seed
           << "\n- Rows: " << table.size() << "\n\n";
        md << "| AU | Base rate | Spread | μ_neg | μ_pos | σ | Expected AUC |\n"
           << "| :-- | --: | --: | --: | --: | --: | --: |\n";
        for (const auto& a : spec.aus)
            md << "| " << a.au << " | " << report::fixed(a.base_rate_mean, 4) << " | "
               << report::fixed(a.subject_spread, 4) << " | " << report::fixed(a.mu_neg, 4) << " | "
               << report::fixed(a.mu_pos, 4) << " | " << report::fixed(a.sigma_score, 4) << " | "
               << report::fixed(synth::expected_auc(a.mu_neg, a.mu_pos, a.sigma_score), 4) << " |\n";
        if (!scaling.empty()) {
            md << "\n## Fold-metric σ by number of folds\n\n| k | Mean σ F1 | Mean σ AUC |\n| :-- | --: | --: |\n";
            for (const auto& p : scaling)
                md << "| " << p.k << " | " << report::metric_cell(p.mean_sigma_f1) << " | "
                   << report::metric_cell(p.mean_sigma_auc) << " |\n";
        }
        w.add("report.md", md.str());
    }
    w.flush();
    log << "synth: " << table.size() << " rows\n";
    return kOk;
}

inline int run_adjudicate(const RunConfig& cfg, std::ostream& out) {
    if (!cfg.delta || !cfg.floor)
        throw ParseError("adjudicate: --delta and --floor are required");
    out << to_string(adjudicate_delta(*cfg.delta, *cfg.floor)) << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// Argument handling

// "id:base_rate:spread:mu_neg:mu_pos[:sigma]"
inline synth::AuSpec parse_au_spec(const std::string& text) {
    std::vector<double> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc{} || ptr != item.data() + item.size())
            throw ParseError("--au '" + text + "': expected id:base_rate:spread:mu_neg:mu_pos[:sigma]");
        parts.push_back(v);
    }
    if (parts.size() != 5 && parts.size() != 6)
        throw ParseError("--au '" + text + "': expected id:base_rate:spread:mu_neg:mu_pos[:sigma]");
    synth::AuSpec a;
    a.au = static_cast<AuId>(parts[0]);
    a.base_rate_mean = parts[1];
    a.subject_spread = parts[2];
    a.mu_neg = parts[3];
    a.mu_pos = parts[4];
    a.sigma_score = parts.size() == 6 ? parts[5] : 1.0;
    return a;
}

inline std::uint64_t parse_seed(const std::string& text, const std::string& where) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ParseError(where + ": seed '" + text + "' is not an unsigned 64-bit integer");
    return v;
}

// Parses argv and runs the selected command. Diagnostics go to `err`,
// command output to `out`.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig cfg;
    std::string seed_text, config_path, formats_text = "csv,json,md";
    int frames_min = 100, frames_max = 0, n_subjects = 0;
    std::string dataset_id = "synth";
    std::vector<std::string> au_specs;
    double delta = 0.0, floor = 0.0;

    CLI::App app{"Evaluation-protocol noise harness for multi-label AU detection tables", "protovar"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "protovar 1.0.0");

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed_text, "master seed (u64); falls back to PROTOVAR_SEED");
        sub->add_option("--threshold", cfg.threshold, "decision threshold in (0,1)");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--format", formats_text, "comma-separated subset of csv,json,md");
        sub->add_option("--jobs", cfg.jobs, "worker threads (0 = all cores)");
        sub->add_option("--config", config_path, "JSON config file; flags override it");
    };

    auto* cv = app.add_subcommand("cv-noise", "repeated subject-exclusive k-fold noise floor");
    add_common(cv);
    cv->add_option("inputs", cfg.inputs, "evaluation table CSV, one per model");
    cv->add_option("--tag", cfg.model_tags, "model tag per input");
    cv->add_option("--k", cfg.k, "number of folds");
    cv->add_option("--repeats", cfg.repeats, "number of independent partitions");

    auto* lodo = app.add_subcommand("lodo", "leave-one-dataset-out grid, transfer tests and Domain Sensitivity");
    add_common(lodo);
    lodo->add_option("--manifest", cfg.manifest, "JSON transfer manifest");
    lodo->add_option("--B", cfg.iterations, "bootstrap iterations");
    lodo->add_option("--alpha", cfg.alpha, "two-sided significance level");

    auto* boot = app.add_subcommand("bootstrap", "subject-level bootstrap transfer test on one target table");
    add_common(boot);
    boot->add_option("inputs", cfg.inputs, "target evaluation table CSV");
    boot->add_option("--dataset", cfg.dataset, "held-out dataset id within the table");
    boot->add_option("--source-ref", cfg.source_ref_file, "JSON {metric: {au: value}}");
    boot->add_option("--source-table", cfg.source_tables, "source evaluation table(s)");
    boot->add_option("--B", cfg.iterations, "bootstrap iterations");
    boot->add_option("--alpha", cfg.alpha, "two-sided significance level");

    auto* syn = app.add_subcommand("synth", "generate a synthetic evaluation table");
    add_common(syn);
    syn->add_option("--population", cfg.population_file, "population spec JSON");
    syn->add_option("--subjects", n_subjects, "number of subjects");
    syn->add_option("--frames", frames_min, "frames per subject (minimum when --frames-max is set)");
    syn->add_option("--frames-max", frames_max, "maximum frames per subject");
    syn->add_option("--dataset", dataset_id, "dataset id written to the table");
    syn->add_option("--au", au_specs, "id:base_rate:spread:mu_neg:mu_pos[:sigma]");
    syn->add_option("--scaling-k", cfg.scaling_k, "run the variance-scaling experiment for these k")->delimiter(',');
    syn->add_option("--repeats", cfg.repeats, "partitions per k for --scaling-k");

    auto* adj = app.add_subcommand("adjudicate", "compare a metric delta against a noise floor");
    adj->add_option("--delta", delta, "observed difference")->required();
    adj->add_option("--floor", floor, "noise floor (>= 0)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kOk;
        }
        const auto& msg = e.what();
        err << "protovar: error: " << msg << '\n';
        return kParseError;
    }

    CLI::App* sub = app.get_subcommands().front();
    cfg.command = sub->get_name();

    try {
        if (cfg.command == "adjudicate") {
            cfg.delta = delta;
            cfg.floor = floor;
            return run_adjudicate(cfg, out);
        }

        // Config file values apply where the flag was not given.
        std::optional<std::uint64_t> config_seed;
        if (!config_path.empty()) {
            const auto j = read_json(config_path);
            if (!j.is_object())
                throw ParseError(config_path + ": config must be a JSON object");
            auto given = [&](const std::string& flag) { return sub->count(flag) > 0; };
            try {
                if (j.contains("k") && !given("--k"))
                    cfg.k = j["k"].get<int>();
                if (j.contains("repeats") && !given("--repeats"))
                    cfg.repeats = j["repeats"].get<int>();
                if (j.contains("threshold") && !given("--threshold"))
                    cfg.threshold = j["threshold"].get<double>();
                if (j.contains("B") && !given("--B"))
                    cfg.iterations = j["B"].get<std::size_t>();
                if (j.contains("alpha") && !given("--alpha"))
                    cfg.alpha = j["alpha"].get<double>();
                if (j.contains("out") && !given("--out"))
                    cfg.out_dir = j["out"].get<std::string>();
                if (j.contains("format") && !given("--format"))
                    formats_text = j["format"].get<std::string>();
                if (j.contains("jobs") && !given("--jobs"))
                    cfg.jobs = j["jobs"].get<std::size_t>();
                if (j.contains("manifest") && !given("--manifest"))
                    cfg.manifest = j["manifest"].get<std::string>();
                if (j.contains("seed"))
                    config_seed = j["seed"].is_string() ? parse_seed(j["seed"].get<std::string>(), config_path)
                                                        : j["seed"].get<std::uint64_t>();
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(config_path + ": " + e.what());
            }
        }
        if (!seed_text.empty()) {
            cfg.master_seed = parse_seed(seed_text, "--seed");
            cfg.seed_source = "flag";
        } else if (config_seed) {
            cfg.master_seed = *config_seed;
            cfg.seed_source = "config";
        } else if (const char* env = std::getenv("PROTOVAR_SEED"); env && *env) {
            cfg.master_seed = parse_seed(env, "PROTOVAR_SEED");
            cfg.seed_source = "env";
        }

        cfg.formats.clear();
        std::stringstream fs_text(formats_text);
        std::string f;
        while (std::getline(fs_text, f, ','))
            if (!f.empty())
                cfg.formats.insert(f);
        cfg.validate();

        if (cfg.command == "cv-noise")
            return run_cv_noise(cfg, err);
        if (cfg.command == "lodo")
            return run_lodo(cfg, err);
        if (cfg.command == "bootstrap")
            return run_bootstrap(cfg, err);
        // synth
        synth::PopulationSpec spec;
        const bool have_flags = !au_specs.empty();
        if (have_flags) {
            spec.dataset_id = dataset_id;
            spec.n_subjects = n_subjects;
            spec.frames_min = frames_min;
            spec.frames_max = frames_max > 0 ? frames_max : frames_min;
            for (const auto& a : au_specs)
                spec.aus.push_back(parse_au_spec(a));
        }
        return run_synth(cfg, spec, have_flags, err);
    } catch (const ParseError& e) {
        err << "protovar: error: " << e.what() << '\n';
        return kParseError;
    } catch (const InsufficientObservations& e) {
        err << "protovar: error: " << e.what() << '\n';
        return kInsufficient;
    } catch (const IoError& e) {
        err << "protovar: error: " << e.what() << '\n';
        return kIoError;
    } catch (const std::invalid_argument& e) {
        err << "protovar: error: " << e.what() << '\n';
        return kParseError;
    }
}

}  // namespace protovar::cli

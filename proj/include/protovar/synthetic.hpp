#pragma once
// Synthetic subject populations with controllable prevalence, subject
// heterogeneity and score separability, plus closed-form oracles.
//
// Per subject s and AU a:
//   p[s,a] ~ Beta(m*nu, (1-m)*nu), nu = 1/spread   (p = m when spread == 0)
//   y      ~ Bernoulli(p[s,a])
//   z      ~ Normal(y ? mu_pos : mu_neg, sigma_score^2)
//   score  = 1 / (1 + exp(-z))
// AUs are independent given the subject.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "data_model.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "noise_analysis.hpp"
#include "parallel.hpp"
#include "partitioner.hpp"
#include "seed.hpp"

namespace protovar::synth {

struct AuSpec {
    AuId au = 1;
    double base_rate_mean = 0.5;
    double subject_spread = 0.0;
    double mu_neg = -1.0;
    double mu_pos = 1.0;
    double sigma_score = 1.0;
};

struct PopulationSpec {
    std::string dataset_id = "synth";
    int n_subjects = 10;
    int frames_min = 100;  // frames per subject drawn uniformly from [min, max]
    int frames_max = 100;
    std::vector<AuSpec> aus;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_subjects < 1)
            throw ParseError("population: n_subjects must be >= 1");
        if (frames_min < 1 || frames_max < frames_min)
            throw ParseError("population: frames per subject must satisfy 1 <= min <= max");
        if (aus.empty())
            throw ParseError("population: at least one AU is required");
        if (dataset_id.empty() || dataset_id.find_first_of(",\n\r") != std::string::npos)
            throw ParseError("population: invalid dataset id");
        for (std::size_t i = 0; i < aus.size(); ++i) {
            const auto& a = aus[i];
            const auto tag = "population AU" + std::to_string(a.au) + ": ";
            if (i > 0 && a.au <= aus[i - 1].au)
                throw ParseError("population: AU ids must be unique and ascending");
            if (!(a.base_rate_mean > 0.0 && a.base_rate_mean < 1.0))
                throw ParseError(tag + "base_rate_mean must lie in (0,1)");
            if (!(a.subject_spread >= 0.0) || !std::isfinite(a.subject_spread))
                throw ParseError(tag + "subject_spread must be >= 0");
            if (!(a.sigma_score > 0.0))
                throw ParseError(tag + "sigma_score must be > 0");
            if (!(a.mu_pos >= a.mu_neg))
                throw ParseError(tag + "mu_pos must be >= mu_neg");
        }
    }
};

inline void to_json(nlohmann::ordered_json& j, const AuSpec& a) {
    j = nlohmann::ordered_json{{"au", a.au},           {"base_rate_mean", a.base_rate_mean},
                               {"subject_spread", a.subject_spread}, {"mu_neg", a.mu_neg},
                               {"mu_pos", a.mu_pos},   {"sigma_score", a.sigma_score}};
}

inline void to_json(nlohmann::ordered_json& j, const PopulationSpec& s) {
    j = nlohmann::ordered_json{{"dataset_id", s.dataset_id},
                               {"n_subjects", s.n_subjects},
                               {"frames_per_subject", {s.frames_min, s.frames_max}},
                               {"aus", s.aus},
                               {"seed", s.seed},
                               {"beta_parameterization", "alpha=m/spread, beta=(1-m)/spread; point mass at m when spread=0"}};
}

inline PopulationSpec population_from_json(const nlohmann::json& j) {
    PopulationSpec s;
    try {
        s.dataset_id = j.value("dataset_id", s.dataset_id);
        s.n_subjects = j.at("n_subjects").get<int>();
        const auto& fps = j.at("frames_per_subject");
        if (fps.is_array()) {
            s.frames_min = fps.at(0).get<int>();
            s.frames_max = fps.at(1).get<int>();
        } else {
            s.frames_min = s.frames_max = fps.get<int>();
        }
        for (const auto& a : j.at("aus")) {
            AuSpec au;
            au.au = a.at("au").get<int>();
            au.base_rate_mean = a.at("base_rate_mean").get<double>();
            au.subject_spread = a.value("subject_spread", 0.0);
            au.mu_neg = a.at("mu_neg").get<double>();
            au.mu_pos = a.at("mu_pos").get<double>();
            au.sigma_score = a.value("sigma_score", 1.0);
            s.aus.push_back(au);
        }
        s.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("population spec: ") + e.what());
    }
    s.validate();
    return s;
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Standard normal CDF via the C library complementary error function.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Population AUC of the generator: Phi((mu_pos - mu_neg) / (sigma * sqrt 2)).
// The logistic squashing is monotone, so it does not change the AUC.
inline double expected_auc(double mu_neg, double mu_pos, double sigma_score) {
    if (!(sigma_score > 0.0))
        throw std::invalid_argument("sigma_score must be > 0");
    return normal_cdf((mu_pos - mu_neg) / (sigma_score * std::numbers::sqrt2));
}

// Mean-preserving Beta draw; spread 0 is a point mass at the mean.
inline double draw_subject_rate(Rng& rng, double mean, double spread) {
    if (spread == 0.0)
        return mean;
    const double nu = 1.0 / spread;
    std::gamma_distribution<double> ga(mean * nu, 1.0), gb((1.0 - mean) * nu, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    if (x + y == 0.0)
        return std::bernoulli_distribution(mean)(rng) ? 1.0 : 0.0;
    return x / (x + y);
}

namespace detail {
inline std::string padded(char prefix, std::size_t value, std::size_t width) {
    std::string digits = std::to_string(value);
    if (digits.size() < width)
        digits.insert(0, width - digits.size(), '0');
    return prefix + digits;
}
}  // namespace detail

// Deterministic given spec.seed: each subject is an independent task seeded
// with derive_seed(seed, "subject", s); rows are ordered by subject, frame.
inline EvalTable generate(const PopulationSpec& spec, std::size_t jobs = 1) {
    spec.validate();
    std::vector<AuId> ids;
    for (const auto& a : spec.aus)
        ids.push_back(a.au);
    AuSchema schema(ids);
    const std::size_t subj_width = std::max<std::size_t>(3, std::to_string(spec.n_subjects).size());
    const std::size_t frame_width = std::max<std::size_t>(4, std::to_string(spec.frames_max).size());

    std::vector<std::vector<FrameRecord>> per_subject(static_cast<std::size_t>(spec.n_subjects));
    parallel_for(per_subject.size(), jobs, [&](std::size_t s) {
        Rng rng = make_rng(derive_seed(spec.seed, "subject", s));
        const int n_frames = std::uniform_int_distribution<int>(spec.frames_min, spec.frames_max)(rng);
        std::vector<double> rates;
        for (const auto& a : spec.aus)
            rates.push_back(draw_subject_rate(rng, a.base_rate_mean, a.subject_spread));
        const std::string subject = detail::padded('S', s + 1, subj_width);
        auto& rows = per_subject[s];
        rows.reserve(static_cast<std::size_t>(n_frames));
        for (int f = 0; f < n_frames; ++f) {
            FrameRecord rec{spec.dataset_id, subject, detail::padded('F', static_cast<std::size_t>(f) + 1, frame_width),
                            {}, {}};
            for (std::size_t a = 0; a < spec.aus.size(); ++a) {
                const auto& au = spec.aus[a];
                const bool y = std::bernoulli_distribution(rates[a])(rng);
                const double z = std::normal_distribution<double>(y ? au.mu_pos : au.mu_neg, au.sigma_score)(rng);
                rec.labels.push_back(y ? Label::Positive : Label::Negative);
                rec.scores.push_back(std::clamp(logistic(z), 0.0, 1.0));
            }
            rows.push_back(std::move(rec));
        }
    });
    std::vector<FrameRecord> rows;
    for (auto& subject_rows : per_subject)
        std::move(subject_rows.begin(), subject_rows.end(), std::back_inserter(rows));
    return EvalTable(std::move(schema), std::move(rows));
}

struct ScalingPoint {
    int k = 0;
    std::optional<double> mean_sigma_f1;   // mean over AUs with >= 2 defined cells
    std::optional<double> mean_sigma_auc;
    std::size_t n_aus_f1 = 0;
    std::size_t n_aus_auc = 0;
};

// Runs the partition + fold-metric pipeline for each k on one table and
// reports the mean per-AU sigma of fold F1 and AUC.
inline std::vector<ScalingPoint> variance_scaling_experiment(const EvalTable& table, std::span<const int> k_values,
                                                             int repeats, std::uint64_t master_seed,
                                                             double threshold = 0.5, std::size_t jobs = 1) {
    const auto subjects = subjects_of(table);
    const MetricKind kinds[] = {MetricKind::F1, MetricKind::AUC};
    std::vector<ScalingPoint> out;
    for (int k : k_values) {
        if (k < 2 || static_cast<std::size_t>(k) > subjects.size())
            throw std::invalid_argument("k=" + std::to_string(k) + " is outside [2, n_subjects]");
        const auto schedule = make_schedule(subjects, k, repeats, master_seed);
        const auto cells = metric_matrix(table, schedule, "synthetic", kinds, threshold, jobs);
        const auto summary = noise_floor_rows(cells);
        ScalingPoint p;
        p.k = k;
        std::vector<double> f1, auc_sigmas;
        for (const auto& r : summary.rows)
            (r.metric == MetricKind::F1 ? f1 : auc_sigmas).push_back(r.sigma);
        p.n_aus_f1 = f1.size();
        p.n_aus_auc = auc_sigmas.size();
        if (!f1.empty())
            p.mean_sigma_f1 = stats::mean(f1);
        if (!auc_sigmas.empty())
            p.mean_sigma_auc = stats::mean(auc_sigmas);
        out.push_back(p);
    }
    return out;
}

inline std::vector<ScalingPoint> variance_scaling_experiment(const PopulationSpec& spec,
                                                             std::span<const int> k_values, int repeats,
                                                             std::uint64_t master_seed, double threshold = 0.5,
                                                             std::size_t jobs = 1) {
    return variance_scaling_experiment(generate(spec, jobs), k_values, repeats, master_seed, threshold, jobs);
}

}  // namespace protovar::synth

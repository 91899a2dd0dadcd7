#include <cmath>

#include <gtest/gtest.h>

#include <protovar/metrics.hpp>
#include <protovar/synthetic.hpp>

using namespace protovar;
using namespace protovar::synth;

namespace {

PopulationSpec small_spec(std::uint64_t seed = 1) {
    PopulationSpec s;
    s.dataset_id = "toy";
    s.n_subjects = 12;
    s.frames_min = 20;
    s.frames_max = 35;
    s.aus = {{1, 0.1, 0.3, -1.0, 1.0, 1.0}, {4, 0.5, 0.0, -0.5, 0.5, 0.8}};
    s.seed = seed;
    return s;
}

}  // namespace

// Reference values computed with Python's math.erfc.
TEST(ExpectedAuc, ClosedForm) {
    EXPECT_DOUBLE_EQ(expected_auc(0.0, 0.0, 1.0), 0.5);
    EXPECT_NEAR(expected_auc(-1.0, 1.0, 1.0), 0.9213503964748575, 1e-15);
    EXPECT_NEAR(expected_auc(0.0, std::sqrt(2.0), 1.0), 0.8413447460685429, 1e-15);
    EXPECT_NEAR(expected_auc(-0.7328690779592171, 0.7328690779592171, 1.0), 0.85, 1e-12);
    EXPECT_NEAR(expected_auc(0.0, 2.0, 2.0), expected_auc(0.0, 1.0, 1.0), 1e-15);
    EXPECT_THROW(expected_auc(0.0, 1.0, 0.0), std::invalid_argument);
}

TEST(Generate, ShapeIdsAndBounds) {
    const auto t = generate(small_spec());
    EXPECT_EQ(t.schema().ids(), (std::vector<AuId>{1, 4}));
    EXPECT_EQ(t.dataset_ids(), (std::set<std::string>{"toy"}));
    const auto subjects = subjects_of(t);
    ASSERT_EQ(subjects.size(), 12u);
    EXPECT_EQ(subjects.front(), "S001");
    EXPECT_EQ(subjects.back(), "S012");
    EXPECT_GE(t.size(), 12u * 20u);
    EXPECT_LE(t.size(), 12u * 35u);
    EXPECT_EQ(t.rows().front().frame_id, "F0001");
    for (const auto& r : t.rows())
        for (std::size_t a = 0; a < 2; ++a) {
            EXPECT_NE(r.labels[a], Label::Missing);
            ASSERT_TRUE(r.scores[a]);
            EXPECT_GE(*r.scores[a], 0.0);
            EXPECT_LE(*r.scores[a], 1.0);
        }
}

TEST(Generate, DeterministicAcrossRunsAndJobs) {
    const auto a = to_csv(generate(small_spec(), 1));
    EXPECT_EQ(a, to_csv(generate(small_spec(), 1)));
    EXPECT_EQ(a, to_csv(generate(small_spec(), 5)));
    EXPECT_NE(a, to_csv(generate(small_spec(2), 1)));
}

TEST(Generate, ZeroSpreadHitsBaseRate) {
    PopulationSpec s;
    s.n_subjects = 40;
    s.frames_min = s.frames_max = 500;
    s.aus = {{1, 0.2, 0.0, -1.0, 1.0, 1.0}};
    const auto t = generate(s);
    const auto p = *prevalence(valid_pairs(t, 1)).value;
    // 20000 Bernoulli(0.2) draws: sd about 0.0028.
    EXPECT_NEAR(p, 0.2, 0.012);
    for (const auto& subj : subjects_of(t)) {
        const auto sp = *prevalence(valid_pairs(t, 1, [&](const FrameRecord& r) { return r.subject_id == subj; })).value;
        EXPECT_NEAR(sp, 0.2, 0.09);
    }
}

TEST(Generate, SpreadWidensSubjectRatesButKeepsMean) {
    PopulationSpec s;
    s.n_subjects = 200;
    s.frames_min = s.frames_max = 200;
    s.aus = {{1, 0.3, 0.0, -1.0, 1.0, 1.0}, {2, 0.3, 0.5, -1.0, 1.0, 1.0}};
    const auto t = generate(s);
    auto subject_rates = [&](AuId au) {
        std::vector<double> out;
        for (const auto& subj : subjects_of(t))
            out.push_back(*prevalence(valid_pairs(t, au, [&](const FrameRecord& r) { return r.subject_id == subj; }))
                               .value);
        return out;
    };
    const auto flat = subject_rates(1), wide = subject_rates(2);
    EXPECT_NEAR(stats::mean(wide), 0.3, 0.05);
    // Beta(0.6, 1.4) has sd sqrt(0.3*0.7*0.5/1.5) ~ 0.26; binomial noise alone gives ~0.03.
    EXPECT_GT(stats::sample_stddev(wide), 4.0 * stats::sample_stddev(flat));
}

TEST(Generate, EmpiricalAucMatchesClosedForm) {
    PopulationSpec s;
    s.n_subjects = 50;
    s.frames_min = s.frames_max = 2000;
    s.aus = {{1, 0.3, 0.0, -0.7328690779592171, 0.7328690779592171, 1.0}, {2, 0.5, 0.4, 0.0, 0.0, 1.0}};
    s.seed = 17;
    const auto t = generate(s, 4);
    const auto a1 = auc(valid_pairs(t, 1));
    ASSERT_GE(a1.n_pos * a1.n_neg, 100000u);
    EXPECT_NEAR(*a1.value, 0.85, 0.005);
    EXPECT_NEAR(*auc(valid_pairs(t, 2)).value, 0.5, 0.005);
}

TEST(Generate, InvalidSpecsRejected) {
    auto s = small_spec();
    s.aus[0].base_rate_mean = 1.0;
    EXPECT_THROW(generate(s), ParseError);
    s = small_spec();
    s.aus[0].mu_pos = -2.0;
    EXPECT_THROW(generate(s), ParseError);
    s = small_spec();
    s.frames_max = 5;
    EXPECT_THROW(generate(s), ParseError);
    s = small_spec();
    s.aus[1].au = 1;
    EXPECT_THROW(generate(s), ParseError);
}

TEST(PopulationJson, RoundTrip) {
    nlohmann::ordered_json j = small_spec(99);
    const auto back = population_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back.n_subjects, 12);
    EXPECT_EQ(back.frames_min, 20);
    EXPECT_EQ(back.frames_max, 35);
    EXPECT_EQ(back.seed, 99u);
    ASSERT_EQ(back.aus.size(), 2u);
    EXPECT_EQ(back.aus[1].au, 4);
    EXPECT_DOUBLE_EQ(back.aus[1].sigma_score, 0.8);
    EXPECT_EQ(to_csv(generate(back)), to_csv(generate(small_spec(99))));

    const auto scalar = population_from_json(nlohmann::json::parse(
        R"({"n_subjects": 3, "frames_per_subject": 7, "aus": [{"au": 2, "base_rate_mean": 0.4, "mu_neg": 0, "mu_pos": 1}]})"));
    EXPECT_EQ(scalar.frames_min, 7);
    EXPECT_EQ(scalar.frames_max, 7);
    EXPECT_THROW(population_from_json(nlohmann::json::parse(R"({"n_subjects": 3})")), ParseError);
}

TEST(VarianceScaling, FewerSubjectsPerFoldIsNoisier) {
    PopulationSpec s;
    s.n_subjects = 60;
    s.frames_min = s.frames_max = 100;
    s.aus = {{1, 0.1, 0.5, -0.73, 0.73, 1.0}, {2, 0.3, 0.5, -0.73, 0.73, 1.0}};
    s.seed = 3;
    const int ks[] = {2, 3, 6};
    const auto points = variance_scaling_experiment(s, ks, 8, 11);
    ASSERT_EQ(points.size(), 3u);
    EXPECT_EQ(points[0].n_aus_f1, 2u);
    EXPECT_LT(*points[0].mean_sigma_f1, *points[2].mean_sigma_f1);
    EXPECT_LT(*points[0].mean_sigma_auc, *points[2].mean_sigma_auc);
    const int bad[] = {61};
    EXPECT_THROW(variance_scaling_experiment(s, bad, 2, 0), std::invalid_argument);
}

TEST(VarianceScaling, PerfectSeparationHasZeroSigma) {
    PopulationSpec s;
    s.n_subjects = 12;
    s.frames_min = s.frames_max = 50;
    s.aus = {{1, 0.5, 0.0, -30.0, 30.0, 0.5}};
    const int ks[] = {3};
    const auto p = variance_scaling_experiment(s, ks, 4, 0);
    EXPECT_EQ(*p[0].mean_sigma_f1, 0.0);
    EXPECT_EQ(*p[0].mean_sigma_auc, 0.0);
}

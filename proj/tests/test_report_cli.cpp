#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <protovar/cli.hpp>
#include <protovar/report.hpp>

using namespace protovar;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "protovar");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);)
        out.push_back(line);
    return out;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("protovar_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        unsetenv("PROTOVAR_SEED");
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

    // Twelve AUs, 18 subjects, 40 frames each.
    std::string make_synthetic(const std::string& out, const std::string& seed = "5") {
        std::vector<std::string> args{"synth", "--subjects", "18", "--frames", "40", "--seed", seed, "--out", out};
        int au_ids[] = {1, 2, 4, 6, 7, 10, 12, 14, 15, 17, 23, 24};
        for (int au : au_ids)
            args.insert(args.end(), {"--au", std::to_string(au) + ":0.3:0.3:-0.7:0.7"});
        const auto r = run_cli(args);
        EXPECT_EQ(r.code, 0) << r.err;
        return (fs::path(out) / "synthetic.csv").string();
    }

    fs::path dir_;
};

}  // namespace

TEST(ReportFormat, FixedPrecisionCells) {
    EXPECT_EQ(report::margin_cell(instability_margin(0.0797)), "±0.1562");
    EXPECT_EQ(report::metric_cell(std::nullopt), "--");
    EXPECT_EQ(report::metric_cell(0.61234), "0.6123");
    EXPECT_EQ(report::percent_cell(200.0 / 3.0), "66.7%");
    EXPECT_EQ(report::percent_cell(std::nullopt), "--");
    EXPECT_EQ(report::ratio_cell(0.0797 / 0.0349), "2.28");
    EXPECT_EQ(report::ratio_cell(std::nullopt), "--");
    EXPECT_EQ(report::fixed(0.125, 2), "0.12");
    EXPECT_EQ(report::fixed(0.375, 2), "0.38");
    EXPECT_EQ(report::fixed(-0.00001, 2), "0.00");
    EXPECT_EQ(report::signed_fixed(0.1, 2), "+0.10");
    EXPECT_EQ(report::signed_fixed(-0.1, 2), "-0.10");
    EXPECT_EQ(report::full(0.1), "0.1");
    EXPECT_EQ(report::full(std::optional<double>{}), "--");
}

TEST(ReportFormat, CsvWritersUseDashForUndefined) {
    TransferResult r;
    r.au = 2;
    r.metric = MetricKind::AUC;
    r.test_id = "GFT";
    r.source_ref = 0.7;
    const std::vector<TransferResult> rs{r};
    const auto lines = lines_of(report::transfers_csv(rs));
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[1], "GFT,2,AUC,--,0.7,--,--,--,false,0,0,0.05");

    const std::vector<LodoFoldResult> folds{{"X", {{1, {0.5, 1, 1}, {std::nullopt, 1, 0}}}}};
    const std::vector<AuId> aus{1, 2};
    EXPECT_EQ(report::lodo_metrics_csv(folds, aus), "metric,dataset,AU1,AU2\nF1,X,0.5,--\nAUC,X,--,--\n");
}

TEST(ReportFormat, MarkdownNoiseFloorShowsMargin) {
    NoiseFloorRow row;
    row.au = 24;
    row.sigma = 0.0797;
    row.margin95 = instability_margin(0.0797);
    row.mean = 0.2129;
    row.min = 0.1042;
    row.max = 0.3172;
    row.n_cells = 12;
    const std::vector<NoiseFloorRow> rows{row};
    const auto md = report::markdown_noise_floor(rows);
    EXPECT_NE(md.find("±0.1562"), std::string::npos);
    EXPECT_NE(md.find("0.0797"), std::string::npos);
}

TEST(CliSeed, TransferSeedDerivation) {
    EXPECT_EQ(cli::transfer_seed(42, "DISFA"), derive_seed(42, "lodo:DISFA", 0));
    EXPECT_NE(cli::transfer_seed(42, "DISFA"), cli::transfer_seed(42, "BP4D"));
}

TEST(CliSourceRefs, ParsesMetricAndAuKeys) {
    const auto refs = cli::parse_source_refs(nlohmann::json::parse(R"({"F1": {"1": 0.5, "AU12": 0.7}, "AUC": {}})"),
                                             "x");
    EXPECT_EQ(refs.size(), 2u);
    EXPECT_DOUBLE_EQ(refs.at({MetricKind::F1, 12}), 0.7);
    EXPECT_THROW(cli::parse_source_refs(nlohmann::json::parse(R"({"F2": {}})"), "x"), ParseError);
    EXPECT_THROW(cli::parse_source_refs(nlohmann::json::parse(R"({"F1": {"x": 1}})"), "x"), ParseError);
    EXPECT_THROW(cli::parse_source_refs(nlohmann::json::parse(R"({"F1": {"1": "a"}})"), "x"), ParseError);
}

TEST_F(CliTest, AdjudicateVerdicts) {
    auto r = run_cli({"adjudicate", "--delta", "0.019", "--floor", "0.065"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "WITHIN_NOISE\n");
    r = run_cli({"adjudicate", "--delta", "0.10", "--floor", "0.065"});
    EXPECT_EQ(r.out, "EXCEEDS_NOISE\n");
    r = run_cli({"adjudicate", "--delta", "0.1", "--floor", "-1"});
    EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, UsageErrorsExitOne) {
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"--version"}).code, 0);
    const auto csv = make_synthetic(path("s"));
    EXPECT_EQ(run_cli({"cv-noise", csv, "--threshold", "1.5", "--out", path("o")}).code, 1);
    EXPECT_EQ(run_cli({"cv-noise", csv, "--format", "xml", "--out", path("o")}).code, 1);
    EXPECT_EQ(run_cli({"cv-noise", csv, "--k", "40", "--out", path("o")}).code, 1);
    EXPECT_EQ(run_cli({"cv-noise", csv, "--seed", "abc", "--out", path("o")}).code, 1);
}

TEST_F(CliTest, MissingInputExitsThree) {
    const auto r = run_cli({"cv-noise", path("nope.csv"), "--out", path("o")});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("nope.csv"), std::string::npos);
}

TEST_F(CliTest, MalformedTableExitsOneWithLine) {
    write_text(path("bad.csv"), "dataset,subject,frame,label_AU1,score_AU1\nd,s,f1,1,0.5\nd,s,f2,1,1.7\n");
    const auto r = run_cli({"cv-noise", path("bad.csv"), "--out", path("o")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST_F(CliTest, NoDefinedCellsExitsTwo) {
    std::string text = "dataset,subject,frame,label_AU1,score_AU1\n";
    for (int s = 0; s < 6; ++s)
        text += "d,s" + std::to_string(s) + ",f,9,0.5\n";
    write_text(path("empty.csv"), text);
    EXPECT_EQ(run_cli({"cv-noise", path("empty.csv"), "--out", path("o")}).code, 2);
}

TEST_F(CliTest, CvNoiseArtifacts) {
    const auto csv = make_synthetic(path("s"));
    const auto r = run_cli({"cv-noise", csv, "--k", "3", "--repeats", "4", "--seed", "7", "--out", path("cv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto nf = lines_of(slurp(path("cv/noise_floor.csv")));
    ASSERT_EQ(nf.size(), 25u);
    EXPECT_EQ(nf[0], "metric,au,n,mean,sigma,margin95,min,max");
    EXPECT_EQ(std::count_if(nf.begin(), nf.end(), [](const std::string& l) { return l.starts_with("F1,"); }), 12);
    EXPECT_EQ(lines_of(slurp(path("cv/cells.csv"))).size(), 1u + 2 * 12 * 12);
    for (int p = 0; p < 4; ++p) {
        std::ifstream csv_in(path("cv/partitions/partition_" + std::to_string(p) + ".csv"));
        const auto sidecar = nlohmann::json::parse(slurp(path("cv/partitions/partition_" + std::to_string(p) + ".json")));
        EXPECT_EQ(sidecar["seed"].get<std::uint64_t>(), partition_seed(7, p));
        const auto fa = read_assignment(csv_in, sidecar);
        EXPECT_EQ(fa.assignment.size(), 18u);
    }
    const auto j = nlohmann::json::parse(slurp(path("cv/cv_noise.json")));
    EXPECT_EQ(j["config"]["master_seed"].get<std::uint64_t>(), 7u);
    EXPECT_FALSE(j["config"].contains("jobs"));
    EXPECT_NE(slurp(path("cv/report.md")).find("±"), std::string::npos);
}

TEST_F(CliTest, CvNoiseTwoModelsWriteBackboneSummary) {
    const auto a = make_synthetic(path("a"), "1");
    const auto b = make_synthetic(path("b"), "2");
    const auto r = run_cli({"cv-noise", a, b, "--tag", "resnet", "--tag", "vgg", "--out", path("cv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(path("cv/resnet/noise_floor.csv")));
    EXPECT_TRUE(fs::exists(path("cv/vgg/noise_floor.csv")));
    EXPECT_EQ(lines_of(slurp(path("cv/backbone_stability.csv"))).size(), 1u + 2 * 12);
}

TEST_F(CliTest, SeedPrecedence) {
    const auto csv = make_synthetic(path("s"));
    write_text(path("cfg.json"), R"({"seed": 11, "k": 2})");
    auto seed_of = [&](const std::string& out) {
        return nlohmann::json::parse(slurp(path(out + "/cv_noise.json")))["config"]["master_seed"].get<std::uint64_t>();
    };
    setenv("PROTOVAR_SEED", "99", 1);
    ASSERT_EQ(run_cli({"cv-noise", csv, "--format", "json", "--out", path("env")}).code, 0);
    EXPECT_EQ(seed_of("env"), 99u);
    ASSERT_EQ(run_cli({"cv-noise", csv, "--format", "json", "--config", path("cfg.json"), "--out", path("cfg")}).code,
              0);
    EXPECT_EQ(seed_of("cfg"), 11u);
    EXPECT_EQ(nlohmann::json::parse(slurp(path("cfg/cv_noise.json")))["config"]["k"].get<int>(), 2);
    ASSERT_EQ(run_cli({"cv-noise", csv, "--format", "json", "--config", path("cfg.json"), "--seed", "3", "--out",
                       path("flag")})
                  .code,
              0);
    EXPECT_EQ(seed_of("flag"), 3u);
    unsetenv("PROTOVAR_SEED");
}

TEST_F(CliTest, SynthPopulationFileAndScaling) {
    write_text(path("pop.json"), R"({"n_subjects": 10, "frames_per_subject": [5, 9], "seed": 21,
        "aus": [{"au": 1, "base_rate_mean": 0.3, "mu_neg": -1, "mu_pos": 1}]})");
    auto r = run_cli({"synth", "--population", path("pop.json"), "--scaling-k", "2,5", "--out", path("a")});
    ASSERT_EQ(r.code, 0) << r.err;
    r = run_cli({"synth", "--population", path("pop.json"), "--seed", "21", "--scaling-k", "2,5", "--out", path("b")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(path("a/synthetic.csv")), slurp(path("b/synthetic.csv")));
    EXPECT_EQ(lines_of(slurp(path("a/scaling.csv"))).size(), 3u);
    const auto table = load_eval_table(path("a/synthetic.csv"));
    EXPECT_EQ(subjects_of(table).size(), 10u);
    EXPECT_EQ(run_cli({"synth", "--out", path("c")}).code, 1);
    EXPECT_EQ(run_cli({"synth", "--au", "1:2:0:0:1", "--subjects", "3", "--out", path("c")}).code, 1);
}

TEST_F(CliTest, BootstrapAndLodo) {
    const std::string header = "dataset,subject,frame,label_AU1,score_AU1,label_AU2,score_AU2\n";
    auto dataset = [&](const std::string& id, bool au2_annotated) {
        std::string text = header;
        for (int s = 0; s < 5; ++s)
            for (int f = 0; f < 6; ++f) {
                const bool pos = (s + f) % 3 == 0;
                const double score = pos ? 0.6 + 0.05 * s : 0.2 + 0.1 * f;
                text += id + "," + id + "_s" + std::to_string(s) + ",f" + std::to_string(f) + "," + (pos ? "1" : "0") +
                        "," + report::full(score) + "," + (au2_annotated ? (f % 2 ? "1" : "0") : "") + "," +
                        report::full(0.1 * f + 0.05) + "\n";
            }
        write_text(path(id + ".csv"), text);
    };
    dataset("A", true);
    dataset("B", true);
    dataset("C", false);
    write_text(path("ref.json"), R"({"F1": {"1": 0.5, "2": 0.5}, "AUC": {"1": 0.5, "2": 0.5}})");

    auto r = run_cli({"bootstrap", path("A.csv"), "--source-ref", path("ref.json"), "--B", "200", "--out", path("bs")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(lines_of(slurp(path("bs/transfers.csv"))).size(), 5u);
    EXPECT_EQ(lines_of(slurp(path("bs/bootstrap_samples.csv"))).size(), 1u + 4 * 200);

    write_text(path("manifest.json"), R"({"transfers": [
        {"test_id": "A", "table": "A.csv", "source_tables": ["B.csv", "C.csv"]},
        {"test_id": "B", "table": "B.csv", "source_ref": {"F1": {"1": 0.5, "2": 0.5}, "AUC": {"1": 0.5}}},
        {"test_id": "C", "table": "C.csv", "source_ref": {"F1": {"1": 0.5, "2": 0.5}, "AUC": {"1": 0.5, "2": 0.5}}}]})");
    r = run_cli({"lodo", "--manifest", path("manifest.json"), "--B", "100", "--out", path("lodo")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto grid = lines_of(slurp(path("lodo/lodo_metrics.csv")));
    ASSERT_EQ(grid.size(), 7u);
    EXPECT_EQ(grid[0], "metric,dataset,AU1,AU2");
    for (const auto& line : grid) {
        const bool masked_row = line.starts_with("F1,C,") || line.starts_with("AUC,C,");
        EXPECT_EQ(line.ends_with(",--"), masked_row) << line;
        EXPECT_EQ(std::count(line.begin(), line.end(), '-'), masked_row ? 2 : 0) << line;
    }
    const auto ds = lines_of(slurp(path("lodo/domain_sensitivity.csv")));
    EXPECT_EQ(ds.size(), 5u);
    EXPECT_TRUE(fs::exists(path("lodo/lodo.json")));

    write_text(path("one.json"), R"({"transfers": [{"test_id": "A", "table": "A.csv"}]})");
    EXPECT_EQ(run_cli({"lodo", "--manifest", path("one.json"), "--out", path("x")}).code, 1);
    EXPECT_EQ(run_cli({"lodo", "--manifest", path("absent.json"), "--out", path("x")}).code, 3);
}

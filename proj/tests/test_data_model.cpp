#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include <protovar/data_model.hpp>

#include "test_helpers.hpp"

using namespace protovar;
using namespace testing_util;

namespace {

ParseError parse_error_of(std::string_view text) {
    try {
        parse_eval_table(text);
    } catch (const ParseError& e) {
        return e;
    }
    ADD_FAILURE() << "expected a ParseError";
    return ParseError("none");
}

}  // namespace

TEST(ParseEvalTable, MinimalWellFormedInput) {
    const auto t = parse_eval_table("dataset,subject,frame,label_AU1,score_AU1\nbp4d,S01,F001,1,0.90\n");
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t.schema().ids(), std::vector<AuId>{1});
    EXPECT_EQ(t.rows()[0].labels[0], Label::Positive);
    EXPECT_DOUBLE_EQ(*t.rows()[0].scores[0], 0.90);
    EXPECT_EQ(t.dataset_ids(), std::set<std::string>{"bp4d"});
}

TEST(ParseEvalTable, ScoreOutsideUnitIntervalReportsLine) {
    const auto e = parse_error_of("dataset,subject,frame,label_AU1,score_AU1\nbp4d,S01,F001,1,1.5\n");
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("score outside [0,1]"), std::string::npos);
}

TEST(ParseEvalTable, NineAndEmptyAreMissingLabels) {
    const auto t = parse_eval_table(
        "dataset,subject,frame,label_AU1,score_AU1,label_AU2,score_AU2\n"
        "d,S1,F1,9,0.2,,\n");
    EXPECT_EQ(t.rows()[0].labels[0], Label::Missing);
    EXPECT_EQ(t.rows()[0].labels[1], Label::Missing);
    EXPECT_FALSE(t.rows()[0].scores[1].has_value());
}

TEST(ParseEvalTable, ErrorPaths) {
    const std::string h = "dataset,subject,frame,label_AU1,score_AU1\n";
    EXPECT_EQ(parse_error_of("subject,dataset,frame,label_AU1,score_AU1\n").line(), 1u);
    EXPECT_EQ(parse_error_of("dataset,subject,frame,label_AU1,score_AU2\n").line(), 1u);
    EXPECT_EQ(parse_error_of("dataset,subject,frame,label_AU2,score_AU2,label_AU1,score_AU1\n").line(), 1u);
    EXPECT_EQ(parse_error_of("dataset,subject,frame\n").line(), 1u);
    EXPECT_EQ(parse_error_of(h + "d,S1,F1,1,abc\n").line(), 2u);
    EXPECT_EQ(parse_error_of(h + "d,S1,F1,1,nan\n").line(), 2u);
    EXPECT_EQ(parse_error_of(h + "d,S1,F1,1,-0.1\n").line(), 2u);
    EXPECT_EQ(parse_error_of(h + "d,S1,F1,2,0.5\n").line(), 2u);
    EXPECT_EQ(parse_error_of(h + "d,S1,F1,1,0.5\nd,S1,F2,0,0.1\nd,S1,F1,0,0.2\n").line(), 4u);
    EXPECT_EQ(parse_error_of(h + "d,S1,F1,1\n").line(), 2u);
    EXPECT_EQ(parse_error_of(h + "a,S1,F1,1,0.5\nb,S1,F2,1,0.5\n").line(), 3u);
    EXPECT_THROW(parse_eval_table(""), ParseError);
}

TEST(ParseEvalTable, SchemaMustMatchHeaderWhenGiven) {
    const std::string text = "dataset,subject,frame,label_AU1,score_AU1\nd,S1,F1,1,0.5\n";
    EXPECT_NO_THROW(parse_eval_table(text, AuSchema({1})));
    EXPECT_THROW(parse_eval_table(text, AuSchema({1, 2})), ParseError);
}

TEST(ParseEvalTable, ToleratesCrlfBomAndBlankLines) {
    const auto t = parse_eval_table("\xEF\xBB\xBF" "dataset,subject,frame,label_AU4,score_AU4\r\nd,S1,F1,0,0.25\r\n\r\n");
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t.schema().ids(), std::vector<AuId>{4});
    EXPECT_DOUBLE_EQ(*t.rows()[0].scores[0], 0.25);
}

TEST(AuSchema, RejectsInvalidIds) {
    EXPECT_THROW(AuSchema(std::vector<AuId>{}), ParseError);
    EXPECT_THROW(AuSchema({2, 1}), ParseError);
    EXPECT_THROW(AuSchema({1, 1}), ParseError);
    EXPECT_THROW(AuSchema({0}), ParseError);
    AuSchema s({1, 4, 24});
    EXPECT_EQ(s.index_of(24), 2u);
    EXPECT_FALSE(s.index_of(5));
    EXPECT_THROW(s.require_index(5), std::invalid_argument);
}

TEST(SubjectsOf, SortedAndFiltered) {
    const auto t = single_au_table({{"A", "S2", P, 0.1}, {"A", "S1", N, 0.2}, {"B", "S9", P, 0.3}});
    EXPECT_EQ(subjects_of(t), (std::vector<std::string>{"S1", "S2", "S9"}));
    EXPECT_EQ(subjects_of(t, "A"), (std::vector<std::string>{"S1", "S2"}));
    EXPECT_EQ(subjects_of(t, "B"), (std::vector<std::string>{"S9"}));
    EXPECT_THROW(subjects_of(t, "C"), std::invalid_argument);
    EXPECT_TRUE(subjects_of(EvalTable{}).empty());
}

TEST(ValidPairs, BothPresentRule) {
    const auto t = single_au_table({{"d", "S1", P, 0.9}, {"d", "S1", M, 0.8}, {"d", "S2", N, std::nullopt}});
    EXPECT_EQ(valid_pairs(t, 1), (std::vector<LabeledScore>{{true, 0.9}}));
    EXPECT_EQ(dropped_pairs(t, 1), 1u);
    EXPECT_THROW(valid_pairs(t, 2), std::invalid_argument);
}

TEST(ValidPairs, AllPresentAndRowFilter) {
    const auto t = single_au_table({{"d", "S1", P, 0.9}, {"d", "S2", N, 0.3}, {"d", "S1", N, 0.1}});
    EXPECT_EQ(valid_pairs(t, 1).size(), 3u);
    const auto s1 = valid_pairs(t, 1, [](const FrameRecord& r) { return r.subject_id == "S1"; });
    EXPECT_EQ(s1, (std::vector<LabeledScore>{{true, 0.9}, {false, 0.1}}));
}

TEST(EvalTable, ConstructorEnforcesInvariants) {
    EXPECT_THROW(single_au_table({{"a", "S1", P, 0.5}, {"b", "S1", P, 0.5}}), ParseError);
    EXPECT_THROW(single_au_table({{"a", "S1", P, 1.01}}), ParseError);
    std::vector<FrameRecord> rows{{"a", "S1", "F1", {P, N}, {0.5}}};
    EXPECT_THROW(EvalTable(AuSchema({1, 2}), rows), ParseError);
}

// Random well-formed tables: serialize(parse(x)) reparses to the same table,
// subjects_of ignores row order, valid_pairs stays within bounds.
TEST(DataModelProperties, RoundTripPermutationAndBounds) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const int n_aus = 1 + static_cast<int>(rng() % 4);
        std::vector<AuId> ids;
        for (int a = 0, id = 0; a < n_aus; ++a)
            ids.push_back(id += 1 + static_cast<int>(rng() % 5));
        std::ostringstream csv;
        csv << "dataset,subject,frame";
        for (AuId id : ids)
            csv << ",label_AU" << id << ",score_AU" << id;
        csv << '\n';
        std::vector<std::string> lines;
        const int n_rows = static_cast<int>(rng() % 30);
        for (int r = 0; r < n_rows; ++r) {
            std::ostringstream line;
            const int subj = static_cast<int>(rng() % 6);
            line << "ds" << subj % 2 << ",S" << subj << ",F" << r;
            for (std::size_t a = 0; a < ids.size(); ++a) {
                const char* labels[] = {"0", "1", "9", ""};
                line << ',' << labels[rng() % 4] << ',';
                if (rng() % 5 != 0)
                    line << std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            }
            lines.push_back(line.str());
        }
        std::string text = csv.str();
        for (const auto& l : lines)
            text += l + "\n";
        const auto t = parse_eval_table(text);
        EXPECT_EQ(parse_eval_table(to_csv(t)), t);

        std::shuffle(lines.begin(), lines.end(), rng);
        std::string shuffled = csv.str();
        for (const auto& l : lines)
            shuffled += l + "\n";
        EXPECT_EQ(subjects_of(parse_eval_table(shuffled)), subjects_of(t));

        for (AuId id : ids) {
            const auto pairs = valid_pairs(t, id);
            EXPECT_LE(pairs.size(), t.size());
            for (const auto& p : pairs) {
                EXPECT_GE(p.score, 0.0);
                EXPECT_LE(p.score, 1.0);
            }
        }
    }
}

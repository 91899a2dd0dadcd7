#pragma once
// Evaluation tables: per-frame labels and model scores for a set of action
// units (AUs), plus CSV ingestion and serialization.
//
// CSV layout (UTF-8, comma separated, no quoting):
//   dataset,subject,frame,label_AU<k>,score_AU<k>,...   (ascending k)
// Label cells: 0, 1, 9 (missing) or empty (missing).
// Score cells: decimal in [0,1] or empty (missing).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "error.hpp"

namespace protovar {

using AuId = int;

enum class Label : std::uint8_t { Negative = 0, Positive = 1, Missing = 2 };

// Ordered, unique set of AU identifiers.
class AuSchema {
public:
    AuSchema() = default;

    explicit AuSchema(std::vector<AuId> ids) : ids_(std::move(ids)) {
        if (ids_.empty())
            throw ParseError("AU schema is empty");
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            if (ids_[i] <= 0)
                throw ParseError("AU id must be positive, got " + std::to_string(ids_[i]));
            if (i > 0 && ids_[i] <= ids_[i - 1])
                throw ParseError("AU ids must be unique and ascending");
        }
    }

    const std::vector<AuId>& ids() const noexcept { return ids_; }
    std::size_t size() const noexcept { return ids_.size(); }

    std::optional<std::size_t> index_of(AuId au) const {
        const auto it = std::lower_bound(ids_.begin(), ids_.end(), au);
        if (it == ids_.end() || *it != au)
            return std::nullopt;
        return static_cast<std::size_t>(it - ids_.begin());
    }

    std::size_t require_index(AuId au) const {
        if (auto idx = index_of(au))
            return *idx;
        throw std::invalid_argument("AU" + std::to_string(au) + " is not in the table schema");
    }

    friend bool operator==(const AuSchema&, const AuSchema&) = default;

private:
    std::vector<AuId> ids_;
};

struct FrameRecord {
    std::string dataset_id;
    std::string subject_id;
    std::string frame_id;
    std::vector<Label> labels;                   // aligned with AuSchema::ids()
    std::vector<std::optional<double>> scores;   // aligned with AuSchema::ids()

    friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

// A binary label paired with a model score.
struct LabeledScore {
    bool positive;
    double score;

    friend bool operator==(const LabeledScore&, const LabeledScore&) = default;
};

// Immutable, validated collection of frame records.
class EvalTable {
public:
    EvalTable() = default;

    EvalTable(AuSchema schema, std::vector<FrameRecord> rows)
        : schema_(std::move(schema)), rows_(std::move(rows)) {
        std::set<std::tuple<std::string_view, std::string_view, std::string_view>> keys;
        std::map<std::string_view, std::string_view> subject_dataset;
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const auto& r = rows_[i];
            const auto where = " (row " + std::to_string(i) + ")";
            if (r.labels.size() != schema_.size() || r.scores.size() != schema_.size())
                throw ParseError("row does not match AU schema" + where);
            for (const auto& s : r.scores)
                if (s && !(*s >= 0.0 && *s <= 1.0))
                    throw ParseError("score outside [0,1]" + where);
            if (!keys.emplace(r.dataset_id, r.subject_id, r.frame_id).second)
                throw ParseError("duplicate (dataset,subject,frame) " + r.dataset_id + "," +
                                 r.subject_id + "," + r.frame_id + where);
            auto [it, inserted] = subject_dataset.emplace(r.subject_id, r.dataset_id);
            if (!inserted && it->second != r.dataset_id)
                throw ParseError("subject " + r.subject_id + " appears under datasets " +
                                 std::string(it->second) + " and " + r.dataset_id + where);
            dataset_ids_.insert(r.dataset_id);
        }
    }

    const AuSchema& schema() const noexcept { return schema_; }
    const std::vector<FrameRecord>& rows() const noexcept { return rows_; }
    const std::set<std::string>& dataset_ids() const noexcept { return dataset_ids_; }
    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }

    // Rows whose dataset_id matches, in row order.
    EvalTable slice_dataset(std::string_view dataset_id) const {
        std::vector<FrameRecord> out;
        for (const auto& r : rows_)
            if (r.dataset_id == dataset_id)
                out.push_back(r);
        return EvalTable(schema_, std::move(out));
    }

    friend bool operator==(const EvalTable& a, const EvalTable& b) {
        return a.schema_ == b.schema_ && a.rows_ == b.rows_;
    }

private:
    AuSchema schema_;
    std::vector<FrameRecord> rows_;
    std::set<std::string> dataset_ids_;
};

// Lexicographically ordered subjects, optionally restricted to one dataset.
inline std::vector<std::string> subjects_of(const EvalTable& table,
                                            std::optional<std::string_view> dataset_id = std::nullopt) {
    if (dataset_id && !table.dataset_ids().contains(std::string(*dataset_id)))
        throw std::invalid_argument("unknown dataset_id " + std::string(*dataset_id));
    std::set<std::string> subjects;
    for (const auto& r : table.rows())
        if (!dataset_id || r.dataset_id == *dataset_id)
            subjects.insert(r.subject_id);
    return {subjects.begin(), subjects.end()};
}

namespace detail {
inline void append_pair(std::vector<LabeledScore>& out, const FrameRecord& r, std::size_t idx) {
    const Label l = r.labels[idx];
    if (l != Label::Missing && r.scores[idx])
        out.push_back({l == Label::Positive, *r.scores[idx]});
}
}  // namespace detail

// (label, score) pairs for one AU where both are present, in row order.
template <typename RowFilter>
std::vector<LabeledScore> valid_pairs(const EvalTable& table, AuId au, RowFilter&& keep) {
    const std::size_t idx = table.schema().require_index(au);
    std::vector<LabeledScore> out;
    for (const auto& r : table.rows())
        if (keep(r))
            detail::append_pair(out, r, idx);
    return out;
}

inline std::vector<LabeledScore> valid_pairs(const EvalTable& table, AuId au) {
    return valid_pairs(table, au, [](const FrameRecord&) { return true; });
}

// Same as valid_pairs, restricted to the given row indices (in that order).
inline std::vector<LabeledScore> valid_pairs_at(const EvalTable& table, AuId au,
                                                std::span<const std::size_t> rows) {
    const std::size_t idx = table.schema().require_index(au);
    std::vector<LabeledScore> out;
    out.reserve(rows.size());
    for (std::size_t i : rows)
        detail::append_pair(out, table.rows().at(i), idx);
    return out;
}

// Rows with a present label but a missing score: excluded from metrics.
inline std::size_t dropped_pairs(const EvalTable& table, AuId au) {
    const std::size_t idx = table.schema().require_index(au);
    return static_cast<std::size_t>(std::count_if(table.rows().begin(), table.rows().end(),
        [idx](const FrameRecord& r) { return r.labels[idx] != Label::Missing && !r.scores[idx]; }));
}

// Present labels for one AU over the given rows.
inline std::vector<Label> labels_at(const EvalTable& table, AuId au, std::span<const std::size_t> rows) {
    const std::size_t idx = table.schema().require_index(au);
    std::vector<Label> out;
    out.reserve(rows.size());
    for (std::size_t i : rows)
        out.push_back(table.rows().at(i).labels[idx]);
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
}

// Parses "<prefix><k>" into k.
inline std::optional<AuId> parse_au_column(std::string_view col, std::string_view prefix) {
    if (!col.starts_with(prefix))
        return std::nullopt;
    col.remove_prefix(prefix.size());
    AuId k = 0;
    auto [ptr, ec] = std::from_chars(col.data(), col.data() + col.size(), k);
    if (ec != std::errc{} || ptr != col.data() + col.size() || k <= 0)
        return std::nullopt;
    return k;
}

inline Label parse_label(std::string_view tok, std::size_t line, AuId au) {
    if (tok.empty() || tok == "9")
        return Label::Missing;
    if (tok == "0")
        return Label::Negative;
    if (tok == "1")
        return Label::Positive;
    throw ParseError("label token '" + std::string(tok) + "' for AU" + std::to_string(au) +
                         " outside {0,1,9,empty}",
                     line);
}

inline std::optional<double> parse_score(std::string_view tok, std::size_t line, AuId au) {
    if (tok.empty())
        return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v))
        throw ParseError("non-numeric score '" + std::string(tok) + "' for AU" + std::to_string(au), line);
    if (!(v >= 0.0 && v <= 1.0))
        throw ParseError("score outside [0,1] ('" + std::string(tok) + "') for AU" + std::to_string(au), line);
    return v;
}

inline std::string format_shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

// Parses an evaluation table. When `schema` is given the header must list
// exactly its AUs; otherwise the schema is inferred from the header.
inline EvalTable parse_eval_table(std::istream& in, const std::optional<AuSchema>& schema = std::nullopt) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line))
        throw ParseError("missing header", 1);
    ++line_no;
    std::string_view header_line = line;
    if (header_line.starts_with("\xEF\xBB\xBF"))
        header_line.remove_prefix(3);
    const auto header = detail::split_commas(header_line);
    if (header.size() < 3 || header[0] != "dataset" || header[1] != "subject" || header[2] != "frame")
        throw ParseError("malformed header: expected leading columns dataset,subject,frame", line_no);
    if ((header.size() - 3) % 2 != 0 || header.size() == 3)
        throw ParseError("malformed header: expected label_AU<k>,score_AU<k> column pairs", line_no);
    std::vector<AuId> ids;
    for (std::size_t c = 3; c < header.size(); c += 2) {
        const auto lk = detail::parse_au_column(header[c], "label_AU");
        const auto sk = detail::parse_au_column(header[c + 1], "score_AU");
        if (!lk || !sk || *lk != *sk)
            throw ParseError("malformed header: columns '" + std::string(header[c]) + "," +
                                 std::string(header[c + 1]) + "' are not a label_AU<k>,score_AU<k> pair",
                             line_no);
        if (!ids.empty() && *lk <= ids.back())
            throw ParseError("malformed header: AU columns must be unique and ascending", line_no);
        ids.push_back(*lk);
    }
    AuSchema header_schema(ids);
    if (schema && !(*schema == header_schema))
        throw ParseError("header AU columns do not match the expected schema", line_no);

    std::vector<FrameRecord> rows;
    std::set<std::tuple<std::string, std::string, std::string>> keys;
    std::map<std::string, std::string, std::less<>> subject_dataset;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty())
            continue;
        const auto cells = detail::split_commas(line);
        if (cells.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(cells.size()),
                             line_no);
        FrameRecord rec;
        rec.dataset_id = cells[0];
        rec.subject_id = cells[1];
        rec.frame_id = cells[2];
        if (rec.dataset_id.empty() || rec.subject_id.empty() || rec.frame_id.empty())
            throw ParseError("empty dataset/subject/frame identifier", line_no);
        rec.labels.reserve(ids.size());
        rec.scores.reserve(ids.size());
        for (std::size_t a = 0; a < ids.size(); ++a) {
            rec.labels.push_back(detail::parse_label(cells[3 + 2 * a], line_no, ids[a]));
            rec.scores.push_back(detail::parse_score(cells[4 + 2 * a], line_no, ids[a]));
        }
        if (!keys.emplace(rec.dataset_id, rec.subject_id, rec.frame_id).second)
            throw ParseError("duplicate (dataset,subject,frame) " + rec.dataset_id + "," + rec.subject_id +
                                 "," + rec.frame_id,
                             line_no);
        auto [it, inserted] = subject_dataset.emplace(rec.subject_id, rec.dataset_id);
        if (!inserted && it->second != rec.dataset_id)
            throw ParseError("subject " + rec.subject_id + " already appears under dataset " + it->second,
                             line_no);
        rows.push_back(std::move(rec));
    }
    return EvalTable(std::move(header_schema), std::move(rows));
}

inline EvalTable parse_eval_table(std::string_view text, const std::optional<AuSchema>& schema = std::nullopt) {
    std::istringstream in{std::string(text)};
    return parse_eval_table(in, schema);
}

inline EvalTable load_eval_table(const std::string& path, const std::optional<AuSchema>& schema = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path);
    try {
        return parse_eval_table(in, schema);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

// Writes the table in the canonical CSV layout. Missing labels and scores
// are written as empty cells; scores use shortest round-trip formatting.
inline void write_eval_table(std::ostream& out, const EvalTable& table) {
    out << "dataset,subject,frame";
    for (AuId au : table.schema().ids())
        out << ",label_AU" << au << ",score_AU" << au;
    out << '\n';
    for (const auto& r : table.rows()) {
        out << r.dataset_id << ',' << r.subject_id << ',' << r.frame_id;
        for (std::size_t a = 0; a < table.schema().size(); ++a) {
            out << ',';
            if (r.labels[a] != Label::Missing)
                out << (r.labels[a] == Label::Positive ? '1' : '0');
            out << ',';
            if (r.scores[a])
                out << detail::format_shortest(*r.scores[a]);
        }
        out << '\n';
    }
}

inline std::string to_csv(const EvalTable& table) {
    std::ostringstream out;
    write_eval_table(out, table);
    return out.str();
}

}  // namespace protovar

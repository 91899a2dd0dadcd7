#pragma once
// Seeded subject-exclusive k-fold partitions.

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "data_model.hpp"
#include "seed.hpp"

namespace protovar {

// Maps every subject to exactly one fold in [0, k).
struct FoldAssignment {
    int k = 0;
    std::uint64_t seed = 0;
    std::map<std::string, int> assignment;

    int fold_of(const std::string& subject) const {
        const auto it = assignment.find(subject);
        if (it == assignment.end())
            throw std::invalid_argument("subject " + subject + " is absent from the fold assignment");
        return it->second;
    }

    std::vector<std::string> fold_subjects(int fold) const {
        std::vector<std::string> out;
        for (const auto& [s, f] : assignment)
            if (f == fold)
                out.push_back(s);
        return out;
    }

    std::vector<std::size_t> fold_sizes() const {
        std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
        for (const auto& [s, f] : assignment)
            ++sizes[static_cast<std::size_t>(f)];
        return sizes;
    }

    friend bool operator==(const FoldAssignment&, const FoldAssignment&) = default;
};

struct ProtocolSchedule {
    int k = 0;
    int repeats = 0;
    std::uint64_t master_seed = 0;
    std::vector<FoldAssignment> partitions;
};

// Shuffles the sorted subject list with a seeded RNG, then deals subjects
// round-robin into k folds. File row order never affects the result.
inline FoldAssignment make_partition(std::span<const std::string> subjects, int k, std::uint64_t seed) {
    if (k < 2)
        throw std::invalid_argument("k must be at least 2");
    std::vector<std::string> order(subjects.begin(), subjects.end());
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());
    if (order.size() < static_cast<std::size_t>(k))
        throw std::invalid_argument("cannot split " + std::to_string(order.size()) + " subjects into " +
                                    std::to_string(k) + " folds");
    Rng rng = make_rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    FoldAssignment fa{k, seed, {}};
    for (std::size_t i = 0; i < order.size(); ++i)
        fa.assignment.emplace(order[i], static_cast<int>(i % static_cast<std::size_t>(k)));
    return fa;
}

inline std::uint64_t partition_seed(std::uint64_t master_seed, int repeat) {
    return derive_seed(master_seed, "partition", static_cast<std::uint64_t>(repeat));
}

inline ProtocolSchedule make_schedule(std::span<const std::string> subjects, int k, int repeats,
                                      std::uint64_t master_seed) {
    if (repeats < 1)
        throw std::invalid_argument("repeats must be at least 1");
    ProtocolSchedule schedule{k, repeats, master_seed, {}};
    std::set<std::uint64_t> seen;
    for (int r = 0; r < repeats; ++r) {
        const std::uint64_t seed = partition_seed(master_seed, r);
        if (!seen.insert(seed).second)
            throw std::logic_error("derived partition seeds collided");
        schedule.partitions.push_back(make_partition(subjects, k, seed));
    }
    return schedule;
}

// Row indices of the table, grouped by the fold of each row's subject.
inline std::vector<std::vector<std::size_t>> fold_slices(const EvalTable& table, const FoldAssignment& fa) {
    std::vector<std::vector<std::size_t>> slices(static_cast<std::size_t>(fa.k));
    for (std::size_t i = 0; i < table.size(); ++i)
        slices[static_cast<std::size_t>(fa.fold_of(table.rows()[i].subject_id))].push_back(i);
    return slices;
}

// Publishable split: CSV `subject,fold` plus a JSON sidecar {k, seed}.
inline void write_assignment_csv(std::ostream& out, const FoldAssignment& fa) {
    out << "subject,fold\n";
    for (const auto& [s, f] : fa.assignment)
        out << s << ',' << f << '\n';
}

inline nlohmann::ordered_json assignment_sidecar(const FoldAssignment& fa) {
    nlohmann::ordered_json j;
    j["k"] = fa.k;
    j["seed"] = fa.seed;
    return j;
}

inline FoldAssignment read_assignment(std::istream& csv, const nlohmann::json& sidecar) {
    FoldAssignment fa;
    fa.k = sidecar.at("k").get<int>();
    fa.seed = sidecar.at("seed").get<std::uint64_t>();
    if (fa.k < 2)
        throw ParseError("fold assignment sidecar: k must be at least 2");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(csv, line)) {
        ++line_no;
        if (line_no == 1) {
            if (detail::trim(line) != "subject,fold")
                throw ParseError("expected header subject,fold", 1);
            continue;
        }
        if (detail::trim(line).empty())
            continue;
        const auto cells = detail::split_commas(line);
        int fold = -1;
        if (cells.size() != 2 ||
            std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), fold).ec != std::errc{} ||
            fold < 0 || fold >= fa.k)
            throw ParseError("malformed subject,fold row", line_no);
        if (!fa.assignment.emplace(std::string(cells[0]), fold).second)
            throw ParseError("duplicate subject " + std::string(cells[0]), line_no);
    }
    return fa;
}

}  // namespace protovar

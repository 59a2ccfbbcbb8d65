#pragma once

// Accuracy by direct label matching and cross-type report tables. Percentages
// are held as integer hundredths so averages and deltas round half-up exactly
// the way the published tables do.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ftgrpo/schema.hpp"
#include "ftgrpo/synth.hpp"

namespace ftgrpo {

// round-half-up of (100 * 100 * num / den) -> percent hundredths
inline std::int64_t percent_hundredths(std::int64_t num, std::int64_t den) {
    if (den <= 0) throw std::invalid_argument("percent_hundredths: nonpositive denominator");
    const std::int64_t scaled = num * 10000;
    const std::int64_t q = scaled / den;
    const std::int64_t r = scaled % den;
    return q + (2 * r >= den ? 1 : 0);
}

inline std::int64_t to_hundredths(double percent) {
    return static_cast<std::int64_t>(std::llround(percent * 100.0));
}

inline std::string format_hundredths(std::int64_t h, bool forced_sign = false) {
    std::string sign = h < 0 ? "-" : (forced_sign ? "+" : "");
    const std::int64_t a = h < 0 ? -h : h;
    std::string frac = std::to_string(a % 100);
    if (frac.size() < 2) frac = "0" + frac;
    return sign + std::to_string(a / 100) + "." + frac;
}

// arithmetic mean of four percent values, rounded half-up to 2 decimals
inline std::int64_t avg_hundredths(const std::vector<std::int64_t>& cells) {
    if (cells.empty()) throw std::invalid_argument("avg_hundredths: no cells");
    std::int64_t sum = 0;
    for (auto c : cells) sum += c;
    const auto n = static_cast<std::int64_t>(cells.size());
    // round-half-up of sum / n for nonnegative sums
    return (2 * sum + n) / (2 * n);
}

// 100 * matches / truths, half-up to 2 decimals. Invalid predictions and
// missing predictions count as non-matches; unknown or duplicate prediction
// ids are errors.
inline double accuracy(const std::vector<std::pair<std::string, Answer>>& predictions,
                       const std::vector<std::pair<std::string, Label>>& truths) {
    if (truths.empty()) throw std::invalid_argument("accuracy: no truths");
    std::map<std::string, Label> truth_map;
    for (const auto& [id, label] : truths) {
        if (!truth_map.emplace(id, label).second)
            throw std::invalid_argument("accuracy: duplicate truth id '" + id + "'");
    }
    std::set<std::string> seen;
    std::int64_t matches = 0;
    for (const auto& [id, answer] : predictions) {
        const auto it = truth_map.find(id);
        if (it == truth_map.end())
            throw std::invalid_argument("accuracy: prediction for unknown id '" + id + "'");
        if (!seen.insert(id).second)
            throw std::invalid_argument("accuracy: duplicate prediction id '" + id + "'");
        if (answer == to_answer(it->second)) ++matches;
    }
    const auto h = percent_hundredths(matches, static_cast<std::int64_t>(truth_map.size()));
    return static_cast<double>(h) / 100.0;
}

// ---------------------------------------------------------------------------
// cross-type report
// ---------------------------------------------------------------------------

struct EvalRun {
    std::string model_id;
    std::string train_type; // speech | sound | singing | music | cotrain
    std::string method;     // sft | grpo | S1..S4 | ...
    std::map<std::string, double> acc; // eval type -> percent
    double avg = 0.0;

    nlohmann::ordered_json to_json() const {
        return {{"model_id", model_id},
                {"train_type", train_type},
                {"method", method},
                {"acc", acc},
                {"avg", avg}};
    }

    static EvalRun from_json(const nlohmann::json& j) {
        EvalRun r;
        r.model_id = j.at("model_id").get<std::string>();
        r.train_type = j.at("train_type").get<std::string>();
        r.method = j.at("method").get<std::string>();
        r.acc = j.at("acc").get<std::map<std::string, double>>();
        r.avg = j.at("avg").get<double>();
        return r;
    }
};

inline const std::vector<std::string>& eval_type_order() {
    static const std::vector<std::string> order = {"speech", "sound", "singing", "music"};
    return order;
}

// Fill avg from the four per-type cells (half-up, 2 decimals).
inline EvalRun make_eval_run(std::string model_id, std::string train_type, std::string method,
                             const std::map<std::string, double>& acc) {
    EvalRun run;
    run.model_id = std::move(model_id);
    run.train_type = std::move(train_type);
    run.method = std::move(method);
    run.acc = acc;
    std::vector<std::int64_t> cells;
    for (const auto& t : eval_type_order()) {
        const auto it = acc.find(t);
        if (it == acc.end())
            throw std::invalid_argument("make_eval_run: missing eval type '" + t + "'");
        if (it->second < 0.0 || it->second > 100.0)
            throw std::invalid_argument("make_eval_run: accuracy out of [0,100] for '" + t + "'");
        cells.push_back(to_hundredths(it->second));
    }
    run.avg = static_cast<double>(avg_hundredths(cells)) / 100.0;
    return run;
}

struct ReportTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Rows per (train_type, method) with an AVG column; optional delta columns
// against the given baseline method within the same train_type.
inline ReportTable cross_type_matrix(const std::vector<EvalRun>& runs,
                                     const std::optional<std::string>& baseline_method = {}) {
    if (runs.empty()) throw std::invalid_argument("cross_type_matrix: no runs");
    ReportTable table;
    table.header = {"train_type", "method"};
    for (const auto& t : eval_type_order()) table.header.push_back(t);
    table.header.push_back("avg");
    if (baseline_method) table.header.push_back("delta_avg");

    std::map<std::string, const EvalRun*> baselines;
    if (baseline_method) {
        for (const auto& r : runs)
            if (r.method == *baseline_method) baselines[r.train_type] = &r;
    }

    for (const auto& r : runs) {
        std::vector<std::int64_t> cells;
        for (const auto& t : eval_type_order()) {
            const auto it = r.acc.find(t);
            if (it == r.acc.end())
                throw std::invalid_argument("cross_type_matrix: run '" + r.model_id +
                                            "' missing eval type '" + t + "'");
            cells.push_back(to_hundredths(it->second));
        }
        std::vector<std::string> row = {r.train_type, r.method};
        for (auto c : cells) row.push_back(format_hundredths(c));
        const auto avg = avg_hundredths(cells);
        row.push_back(format_hundredths(avg));
        if (baseline_method) {
            const auto it = baselines.find(r.train_type);
            if (it == baselines.end()) {
                row.push_back("n/a");
            } else {
                std::vector<std::int64_t> base_cells;
                for (const auto& t : eval_type_order())
                    base_cells.push_back(to_hundredths(it->second->acc.at(t)));
                row.push_back(format_hundredths(avg - avg_hundredths(base_cells), true));
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline std::string render_csv(const ReportTable& t) {
    std::string out;
    auto emit_row = [&out](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += row[i];
        }
        out += '\n';
    };
    emit_row(t.header);
    for (const auto& r : t.rows) emit_row(r);
    return out;
}

inline std::string render_text(const ReportTable& t) {
    std::vector<std::size_t> width(t.header.size(), 0);
    auto widen = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    };
    widen(t.header);
    for (const auto& r : t.rows) widen(r);
    std::string out;
    auto emit_row = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += "  ";
            out += row[i];
            out.append(width[i] - row[i].size(), ' ');
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out += '\n';
    };
    emit_row(t.header);
    for (const auto& r : t.rows) emit_row(r);
    return out;
}

// ---------------------------------------------------------------------------
// prediction files: line-delimited {clip_id, answer_text}
// ---------------------------------------------------------------------------

inline void save_predictions(const std::vector<std::pair<std::string, Answer>>& preds,
                             const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_predictions: cannot open " + path.string());
    for (const auto& [id, ans] : preds) {
        nlohmann::ordered_json j = {{"clip_id", id}, {"answer_text", to_string(ans)}};
        out << j.dump() << '\n';
    }
}

inline std::vector<std::pair<std::string, Answer>> load_predictions(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_predictions: cannot open " + path.string());
    std::vector<std::pair<std::string, Answer>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        const std::string text = j.at("answer_text").get<std::string>();
        Answer a = Answer::Invalid;
        if (text == "real") a = Answer::Real;
        else if (text == "fake") a = Answer::Fake;
        out.emplace_back(j.at("clip_id").get<std::string>(), a);
    }
    return out;
}

} // namespace ftgrpo

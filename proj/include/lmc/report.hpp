#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmc/connectivity.hpp"
#include "lmc/errors.hpp"
#include "lmc/format.hpp"
#include "lmc/metrics.hpp"
#include "lmc/training.hpp"
#include "lmc/weights.hpp"

namespace lmc {

using json = nlohmann::ordered_json;

struct TaskResult {
    int task = 0;
    bool updated = false;
    std::optional<double> trigger_acc;  // validation-slice accuracy before the decision
    double aa = 0.0;
    std::optional<double> af;  // absent for t = 1
};

struct RunReport {
    std::string strategy;
    std::uint64_t seed = 0;
    json config_echo = json::object();
    bool failed = false;
    std::string error;
    AccuracyMatrix matrix;
    std::vector<TaskResult> tasks;
    std::vector<ForgettingRecord> forgetting;
    std::vector<int> scan_tasks;  // aligned with scans
    std::vector<PathScan> scans;
    StepLog steps;
    Eigen::VectorXd final_weights;
    double wall_seconds = 0.0;
};

// ---- canonical JSON dumping (all floats through g9) -----------------------

namespace detail {

inline void dump_g9_impl(const json& j, std::string& out, int indent, int depth) {
    auto pad = [&](int d) {
        if (indent > 0) {
            out += '\n';
            out.append(static_cast<std::size_t>(indent * d), ' ');
        }
    };
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += '{';
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ',';
                first = false;
                pad(depth + 1);
                out += nlohmann::json(it.key()).dump();
                out += indent > 0 ? ": " : ":";
                dump_g9_impl(it.value(), out, indent, depth + 1);
            }
            pad(depth);
            out += '}';
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            out += '[';
            bool first = true;
            for (const auto& el : j) {
                if (!first) out += ',';
                first = false;
                pad(depth + 1);
                dump_g9_impl(el, out, indent, depth + 1);
            }
            pad(depth);
            out += ']';
            return;
        }
        case json::value_t::string:
            out += nlohmann::json(j.get<std::string>()).dump();
            return;
        case json::value_t::boolean:
            out += j.get<bool>() ? "true" : "false";
            return;
        case json::value_t::null:
            out += "null";
            return;
        case json::value_t::number_integer:
            out += std::to_string(j.get<std::int64_t>());
            return;
        case json::value_t::number_unsigned:
            out += std::to_string(j.get<std::uint64_t>());
            return;
        case json::value_t::number_float: {
            double v = j.get<double>();
            if (!std::isfinite(v)) throw ContractError("dump_g9: non-finite float in report");
            out += g9(v);
            return;
        }
        default:
            throw ContractError("dump_g9: unsupported json type");
    }
}

}  // namespace detail

inline std::string dump_g9(const json& j, int indent = 2) {
    std::string out;
    detail::dump_g9_impl(j, out, indent, 0);
    if (indent > 0) out += '\n';
    return out;
}

// ---- report assembly -------------------------------------------------------

inline json scan_to_json(const PathScan& scan) {
    json rows = json::array();
    for (const auto& r : scan.rows) {
        json row = json::object();
        row["lambda"] = r.lambda;
        row["acc_prev"] = r.acc_prev;
        row["acc_cur"] = r.acc_cur;
        row["acc_all"] = r.acc_all;
        row["loss_prev"] = r.loss_prev;
        row["loss_cur"] = r.loss_cur;
        row["loss_all"] = r.loss_all;
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json report_to_json(const RunReport& report) {
    json j = json::object();
    j["strategy"] = report.strategy;
    j["seed"] = report.seed;
    j["config"] = report.config_echo;
    j["failed"] = report.failed;
    j["error"] = report.error;

    json tasks = json::array();
    for (const auto& t : report.tasks) {
        json jt = json::object();
        jt["task"] = t.task;
        jt["updated"] = t.updated;
        jt["trigger_acc"] = t.trigger_acc ? json(*t.trigger_acc) : json(nullptr);
        jt["aa"] = t.aa;
        jt["af"] = t.af ? json(*t.af) : json(nullptr);
        tasks.push_back(std::move(jt));
    }
    j["tasks"] = std::move(tasks);

    json matrix = json::array();
    for (int i = 1; i <= report.matrix.task_count(); ++i) {
        json row = json::array();
        for (int jcol = 1; jcol <= i; ++jcol)
            row.push_back(report.matrix.is_set(i, jcol) ? json(report.matrix.at(i, jcol))
                                                        : json(nullptr));
        matrix.push_back(std::move(row));
    }
    j["matrix"] = std::move(matrix);

    json forgetting = json::array();
    for (const auto& f : report.forgetting) {
        json jf = json::object();
        jf["task"] = f.task;
        jf["actual"] = f.actual;
        jf["estimated"] = f.estimated;
        jf["displacement_norm"] = f.displacement_norm;
        jf["curvature_source"] = f.curvature_source;
        forgetting.push_back(std::move(jf));
    }
    j["forgetting"] = std::move(forgetting);

    json scans = json::array();
    for (std::size_t k = 0; k < report.scans.size(); ++k) {
        json js = json::object();
        js["task"] = report.scan_tasks[k];
        js["rows"] = scan_to_json(report.scans[k]);
        scans.push_back(std::move(js));
    }
    j["scans"] = std::move(scans);

    json weights = json::array();
    for (Eigen::Index i = 0; i < report.final_weights.size(); ++i)
        weights.push_back(report.final_weights(i));
    j["weights"] = std::move(weights);

    json timing = json::object();
    timing["wall_seconds"] = report.wall_seconds;
    j["timing"] = std::move(timing);
    return j;
}

inline std::string step_record_line(const StepRecord& s) {
    json j = json::object();
    j["task"] = s.task;
    j["epoch"] = s.epoch;
    j["step"] = s.step;
    j["loss_cls"] = s.loss_cls;
    j["loss_ac_extra"] = s.loss_ac_extra;
    j["loss_kfac"] = s.loss_kfac;
    j["loss_ewc"] = s.loss_ewc;
    j["acc"] = s.acc;
    return dump_g9(j, 0);
}

/// Writes report.json, matrix.csv, steps.jsonl and scan_t{k}.csv files.
inline void emit_report(const RunReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output dir: " + dir);

    {
        std::ofstream os(dir + "/report.json");
        if (!os) throw IoError("cannot open for writing: " + dir + "/report.json");
        os << dump_g9(report_to_json(report));
        if (!os) throw IoError("write failed: " + dir + "/report.json");
    }
    save_matrix_csv(report.matrix, dir + "/matrix.csv");
    {
        std::ofstream os(dir + "/steps.jsonl");
        if (!os) throw IoError("cannot open for writing: " + dir + "/steps.jsonl");
        for (const auto& s : report.steps) os << step_record_line(s) << "\n";
        if (!os) throw IoError("write failed: " + dir + "/steps.jsonl");
    }
    for (std::size_t k = 0; k < report.scans.size(); ++k)
        save_scan_csv(report.scans[k],
                      dir + "/scan_t" + std::to_string(report.scan_tasks[k]) + ".csv");
}

inline json load_report_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    json j;
    is >> j;
    return j;
}

}  // namespace lmc

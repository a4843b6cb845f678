#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "lmc/curvature.hpp"
#include "lmc/data.hpp"
#include "lmc/errors.hpp"
#include "lmc/format.hpp"
#include "lmc/hessian.hpp"
#include "lmc/network.hpp"
#include "lmc/weights.hpp"

namespace lmc {

/// phi(lambda) = (1-lambda) theta_a + lambda theta_b, with exact endpoints.
inline WeightVector interpolate(const WeightVector& theta_a, const WeightVector& theta_b,
                                double lambda) {
    if (!theta_a.same_layout(theta_b)) throw ContractError("interpolate: layout mismatch");
    if (lambda < 0.0 || lambda > 1.0) throw ContractError("interpolate: lambda outside [0,1]");
    if (lambda == 0.0) return theta_a;
    if (lambda == 1.0) return theta_b;
    WeightVector out(theta_a.layout_ptr());
    out.values() = (1.0 - lambda) * theta_a.values() + lambda * theta_b.values();
    return out;
}

/// theta_{1:t} = ((T-1)/T) theta_prev + (1/T) theta_t, T counting tasks
/// trained on including the current one.
inline WeightVector merge_running(const WeightVector& theta_prev, const WeightVector& theta_t,
                                  int T) {
    if (T < 2) throw ContractError("merge_running: T must be >= 2");
    return interpolate(theta_t, theta_prev, (static_cast<double>(T) - 1.0) / static_cast<double>(T));
}

struct PathScanRow {
    double lambda = 0.0;
    double acc_prev = 0.0, acc_cur = 0.0, acc_all = 0.0;
    double loss_prev = 0.0, loss_cur = 0.0, loss_all = 0.0;
};

struct PathScan {
    WeightVector theta_a, theta_b;
    std::vector<double> grid;
    std::vector<PathScanRow> rows;
};

inline std::vector<double> uniform_grid(int points = 21) {
    if (points < 2) throw ConfigError("scan grid needs at least 2 points");
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int k = 0; k < points; ++k)
        grid[static_cast<std::size_t>(k)] = static_cast<double>(k) /
                                            static_cast<double>(points - 1);
    grid.front() = 0.0;
    grid.back() = 1.0;
    return grid;
}

inline int scan_thread_cap() {
    const char* env = std::getenv("LMC_THREADS");
    if (!env) return 0;
    return std::atoi(env);
}

/// Evaluates phi(lambda) over the grid on Ap (union of previous test sets),
/// An (current test set) and All. Grid points are independent read-only
/// jobs; LMC_THREADS caps the fan-out (0 or unset = serial).
inline PathScan scan(const Network& tmpl, const WeightVector& theta_a, const WeightVector& theta_b,
                     const std::vector<double>& grid, const std::vector<Batch>& prev_sets,
                     const Batch& cur_set) {
    if (grid.size() < 2 || grid.front() != 0.0 || grid.back() != 1.0 ||
        !std::is_sorted(grid.begin(), grid.end()))
        throw ContractError("scan: grid must be sorted with endpoints 0 and 1");
    for (double g : grid)
        if (g < 0.0 || g > 1.0) throw ContractError("scan: grid point outside [0,1]");
    if (prev_sets.empty()) throw ContractError("scan: empty previous dataset group");
    if (cur_set.size() == 0) throw ContractError("scan: empty current dataset");

    Batch prev_all;
    for (const Batch& b : prev_sets) {
        if (b.size() == 0) throw ContractError("scan: empty previous dataset");
        prev_all.append(b);
    }
    Batch all = prev_all;
    all.append(cur_set);

    PathScan out;
    out.theta_a = theta_a;
    out.theta_b = theta_b;
    out.grid = grid;
    out.rows.resize(grid.size());

    auto eval_row = [&](Network& net, std::size_t k) {
        net.set_weights(interpolate(theta_a, theta_b, grid[k]));
        PathScanRow row;
        row.lambda = grid[k];
        row.acc_prev = evaluate(net, prev_all);
        row.acc_cur = evaluate(net, cur_set);
        row.acc_all = evaluate(net, all);
        row.loss_prev = loss_bce(net, prev_all);
        row.loss_cur = loss_bce(net, cur_set);
        row.loss_all = loss_bce(net, all);
        out.rows[k] = row;
    };

    int cap = scan_thread_cap();
    auto n = static_cast<int>(grid.size());
    int workers = std::min(cap, n);
    if (workers <= 1) {
        Network net = tmpl;
        for (std::size_t k = 0; k < grid.size(); ++k) eval_row(net, k);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            threads.emplace_back([&, w]() {
                Network net = tmpl;
                for (std::size_t k = static_cast<std::size_t>(w); k < grid.size();
                     k += static_cast<std::size_t>(workers))
                    eval_row(net, k);
            });
        }
        for (auto& t : threads) t.join();
    }
    return out;
}

inline void save_scan_csv(const PathScan& scan, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "lambda,acc_prev,acc_cur,acc_all,loss_prev,loss_cur,loss_all\n";
    for (const auto& r : scan.rows)
        os << g9(r.lambda) << ',' << g9(r.acc_prev) << ',' << g9(r.acc_cur) << ','
           << g9(r.acc_all) << ',' << g9(r.loss_prev) << ',' << g9(r.loss_cur) << ','
           << g9(r.loss_all) << "\n";
    if (!os) throw IoError("write failed: " + path);
}

// ---- forgetting instrumentation ------------------------------------------

/// Realized forgetting L_prev(theta_t) - L_prev(theta_prev) on the previous
/// task's evaluation set.
inline double forgetting_actual(const Network& tmpl, const WeightVector& theta_prev,
                                const WeightVector& theta_t, const Batch& data_prev) {
    if (!theta_prev.same_layout(theta_t)) throw ContractError("forgetting_actual: layout mismatch");
    if (data_prev.size() == 0) throw ContractError("forgetting_actual: empty evaluation set");
    Network net = tmpl;
    net.set_weights(theta_t);
    double after = loss_bce(net, data_prev);
    net.set_weights(theta_prev);
    double before = loss_bce(net, data_prev);
    return after - before;
}

/// Layerwise curvature application for the quadratic forgetting estimate;
/// `apply` maps (layer, dW) to the Hessian-block product.
struct CurvatureOperator {
    std::string tag;  // "kfac" or "exact-oracle"
    WeightVector anchor;
    std::size_t layer_count = 0;
    std::function<Eigen::MatrixXd(std::size_t, const Eigen::MatrixXd&)> apply;
};

inline CurvatureOperator kfac_operator(const CurvatureSnapshot& snap) {
    CurvatureOperator op;
    op.tag = "kfac";
    op.anchor = snap.anchor;
    op.layer_count = snap.factors.size();
    auto factors = snap.factors;
    op.apply = [factors](std::size_t m, const Eigen::MatrixXd& dw) {
        return Eigen::MatrixXd(factors[m].H * dw * factors[m].Q);
    };
    return op;
}

/// Dense per-layer FD Hessian blocks of the mean BCE loss at the net's
/// current weights. Subject to the exact_hessian cap.
inline CurvatureOperator exact_operator(const Network& net, const Batch& data, double eps = 1e-4,
                                        Eigen::Index cap = 64) {
    CurvatureOperator op;
    op.tag = "exact-oracle";
    op.anchor = net.flatten();
    op.layer_count = net.layer_count();
    auto blocks = std::make_shared<std::vector<Eigen::MatrixXd>>();
    for (std::size_t m = 0; m < net.layer_count(); ++m)
        blocks->push_back(exact_hessian(net, data, m, eps, cap));
    op.apply = [blocks](std::size_t m, const Eigen::MatrixXd& dw) {
        Eigen::Map<const Eigen::VectorXd> v(dw.data(), dw.size());
        Eigen::VectorXd hv = (*blocks)[m] * v;
        return Eigen::MatrixXd(Eigen::Map<const Eigen::MatrixXd>(hv.data(), dw.rows(), dw.cols()));
    };
    return op;
}

/// Second-order estimate 1/2 dTheta^T H dTheta over the weight-matrix blocks.
inline double forgetting_quadratic(const WeightVector& theta_prev, const WeightVector& theta_t,
                                   const CurvatureOperator& curvature) {
    if (!theta_prev.same_layout(theta_t))
        throw ContractError("forgetting_quadratic: layout mismatch");
    if (!(curvature.anchor.same_layout(theta_prev)) ||
        curvature.anchor.values() != theta_prev.values())
        throw ContractError("forgetting_quadratic: curvature not anchored at theta_prev");
    double total = 0.0;
    for (std::size_t m = 0; m < curvature.layer_count; ++m) {
        Eigen::MatrixXd dw = theta_t.weight(m) - theta_prev.weight(m);
        total += 0.5 * dw.cwiseProduct(curvature.apply(m, dw)).sum();
    }
    return total;
}

struct ForgettingRecord {
    int task = 0;  // the earlier task index t-1
    double actual = 0.0;
    double estimated = 0.0;
    double displacement_norm = 0.0;
    std::string curvature_source;
};

inline ForgettingRecord forgetting_record(const Network& tmpl, int task,
                                          const WeightVector& theta_prev,
                                          const WeightVector& theta_t, const Batch& data_prev,
                                          const CurvatureOperator& curvature) {
    ForgettingRecord rec;
    rec.task = task;
    rec.actual = forgetting_actual(tmpl, theta_prev, theta_t, data_prev);
    rec.estimated = forgetting_quadratic(theta_prev, theta_t, curvature);
    rec.displacement_norm = (theta_t - theta_prev).norm();
    rec.curvature_source = curvature.tag;
    return rec;
}

// ---- aggregate loss bound -------------------------------------------------

struct BoundCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double lambda_max = 0.0;
    double slack = 1e-8;
    bool holds = false;
};

/// Checks sum_t L_t(theta*) <= sum_t L_t(theta_t)
///                           + 1/2 lambda_max sum_t ||theta* - theta_t||^2.
inline BoundCheck bound_check(const WeightVector& theta_star,
                              const std::vector<WeightVector>& minima,
                              const std::vector<double>& losses_at_star,
                              const std::vector<double>& losses_at_minima,
                              const std::vector<double>& lambda_max_list) {
    if (minima.empty() || minima.size() != losses_at_star.size() ||
        minima.size() != losses_at_minima.size() || minima.size() != lambda_max_list.size())
        throw ContractError("bound_check: per-task inputs must align");
    BoundCheck out;
    out.lambda_max = *std::max_element(lambda_max_list.begin(), lambda_max_list.end());
    double sq_sum = 0.0;
    for (std::size_t t = 0; t < minima.size(); ++t) {
        out.lhs += losses_at_star[t];
        out.rhs += losses_at_minima[t];
        sq_sum += (theta_star - minima[t]).squared_norm();
    }
    out.rhs += 0.5 * out.lambda_max * sq_sum;
    out.holds = out.lhs <= out.rhs + out.slack;
    return out;
}

}  // namespace lmc

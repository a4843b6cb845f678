#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "lmc/config.hpp"
#include "lmc/connectivity.hpp"
#include "lmc/curvature.hpp"
#include "lmc/data.hpp"
#include "lmc/metrics.hpp"
#include "lmc/network.hpp"
#include "lmc/replay.hpp"
#include "lmc/report.hpp"
#include "lmc/rng.hpp"
#include "lmc/stream.hpp"
#include "lmc/strategy.hpp"
#include "lmc/training.hpp"

namespace lmc {

namespace engine_detail {

// engine rng substream ids
constexpr std::uint64_t kInitStream = 1000;
constexpr std::uint64_t kTrainStream = 2000;
constexpr std::uint64_t kReplayStream = 3000;

inline Batch validation_slice(const Batch& train) {
    auto n = static_cast<Eigen::Index>(
        std::ceil(0.2 * static_cast<double>(train.size())));
    n = std::max<Eigen::Index>(n, 1);
    Batch slice;
    slice.inputs = train.inputs.leftCols(n);
    slice.labels = train.labels.head(n);
    return slice;
}

inline StrategyConfig offline_strategy(const ExperimentConfig& c) {
    StrategyConfig s;
    s.sequential = true;
    s.epochs = c.offline_epochs;
    s.lr = c.strategy.lr;
    s.batch_size = c.strategy.batch_size;
    s.damping = c.strategy.damping;
    return s;
}

inline StrategyConfig joint_strategy(const ExperimentConfig& c) {
    StrategyConfig s;
    s.sequential = true;  // plain fine-tuning on the union
    s.epochs = c.strategy.epochs;
    s.lr = c.strategy.lr;
    s.batch_size = c.strategy.batch_size;
    s.damping = c.strategy.damping;
    return s;
}

inline CurvatureSnapshot refresh_snapshot(const Network& net, const TaskDataset& task,
                                          const ReplayBuffer& buffer,
                                          const ExperimentConfig& c) {
    Batch estimation = task.train;
    if (c.strategy.kfac_include_replay && buffer.size() > 0) estimation.append(buffer.as_batch());
    CurvatureSnapshot snap = collect_factors(net, estimation, c.strategy.damping);
    if (c.strategy.use_ewc) snap.fisher_diag = fisher_diag(net, estimation);
    return snap;
}

}  // namespace engine_detail

/// Builds the Stage-1 network: seeded MLP with adapters attached per mask.
inline Network build_network(const ExperimentConfig& c, Rng& rng) {
    Network net = Network::mlp(c.dims, c.bias, rng);
    auto mask = effective_lora_mask(c);
    for (std::size_t m = 0; m < mask.size(); ++m)
        if (mask[m]) net.attach_adapter(m, c.lora_rank, 1.0, rng);
    return net;
}

/// Stage 1 only: offline BCE training of the adapter-equipped net on task 1.
/// Returns the net with trained weights, adapters still unmerged.
inline Network train_offline(const ExperimentConfig& c, const TaskDataset& task1, Rng& init_rng,
                             Rng& train_rng, StepLog* log = nullptr) {
    Network net = build_network(c, init_rng);
    WeightVector theta =
        train_task(net, net.flatten(), task1, nullptr, nullptr,
                   engine_detail::offline_strategy(c), c.augmentation, c.representation,
                   train_rng, log);
    net.set_weights(theta);
    return net;
}

/// Full three-stage run over the synthetic stream.
inline RunReport run_stream(const ExperimentConfig& c) {
    validate(c);
    auto t_start = std::chrono::steady_clock::now();

    RunReport report;
    report.strategy = strategy_tag(c.strategy);
    report.seed = c.seed;
    report.config_echo = echo_config(c);
    report.matrix = AccuracyMatrix(c.tasks);

    std::vector<TaskDataset> stream = make_stream(c, c.seed);

    Rng root(c.seed);
    Rng init_rng = root.fork(engine_detail::kInitStream);
    Rng train_rng = root.fork(engine_detail::kTrainStream);
    Rng replay_rng = root.fork(engine_detail::kReplayStream);

    ReplayBuffer buffer(c.strategy.replay_capacity);
    std::vector<CurvatureSnapshot> snapshots;  // one per finished task, newest last
    Network net;
    WeightVector stage1_weights;  // joint-retrain restart point
    int trained_count = 0;        // T in the running merge, offline task included

    try {
        // Stage 1: offline training on task 1, adapters active, then merged.
        net = train_offline(c, stream.front(), init_rng, train_rng, &report.steps);
        net.merge_adapters();
        stage1_weights = net.flatten();
        trained_count = 1;

        report.matrix.set(1, 1, evaluate(net, stream.front()));
        TaskResult r1;
        r1.task = 1;
        r1.updated = true;
        r1.aa = average_accuracy(report.matrix, 1);
        report.tasks.push_back(r1);
        if (c.strategy.use_replay) buffer.update(stream.front(), replay_rng);
        snapshots.push_back(engine_detail::refresh_snapshot(net, stream.front(), buffer, c));

        for (int t = 2; t <= c.tasks; ++t) {
            const TaskDataset& task = stream[static_cast<std::size_t>(t - 1)];
            WeightVector theta_prev = net.flatten();

            Batch slice = engine_detail::validation_slice(task.train);
            double trigger_acc = evaluate(net, slice);
            bool update = trigger_acc < c.strategy.trigger_threshold;

            if (update) {
                if (c.strategy.joint_retrain) {
                    TaskDataset joint_task;
                    joint_task.id = t;
                    for (int k = 1; k <= t; ++k)
                        joint_task.train.append(stream[static_cast<std::size_t>(k - 1)].train);
                    WeightVector theta_t = train_task(
                        net, stage1_weights, joint_task, nullptr, nullptr,
                        engine_detail::joint_strategy(c), c.augmentation, c.representation,
                        train_rng, &report.steps);
                    net.set_weights(theta_t);
                } else {
                    std::vector<const CurvatureSnapshot*> active;
                    if (c.strategy.kfac_accumulate)
                        for (const auto& s : snapshots) active.push_back(&s);
                    else
                        active.push_back(&snapshots.back());
                    WeightVector theta_t = train_task(
                        net, theta_prev, task, c.strategy.use_replay ? &buffer : nullptr,
                        active, c.strategy, c.augmentation, c.representation, train_rng,
                        &report.steps);
                    ++trained_count;

                    CurvatureOperator curv = kfac_operator(snapshots.back());
                    report.forgetting.push_back(
                        forgetting_record(net, t - 1, theta_prev, theta_t,
                                          stream[static_cast<std::size_t>(t - 2)].test, curv));

                    if (c.scan_each_task) {
                        std::vector<Batch> prev_sets;
                        for (int k = 1; k < t; ++k)
                            prev_sets.push_back(stream[static_cast<std::size_t>(k - 1)].test);
                        report.scan_tasks.push_back(t);
                        report.scans.push_back(scan(net, theta_prev, theta_t,
                                                    uniform_grid(c.scan_points), prev_sets,
                                                    task.test));
                    }

                    WeightVector theta_next =
                        c.strategy.use_linear_merge
                            ? merge_running(theta_prev, theta_t, trained_count)
                            : theta_t;
                    net.set_weights(theta_next);
                }
            }

            for (int j = 1; j <= t; ++j)
                report.matrix.set(t, j, evaluate(net, stream[static_cast<std::size_t>(j - 1)]));

            TaskResult rt;
            rt.task = t;
            rt.updated = update;
            rt.trigger_acc = trigger_acc;
            rt.aa = average_accuracy(report.matrix, t);
            rt.af = average_forgetting(report.matrix, t);
            report.tasks.push_back(rt);

            if (c.strategy.use_replay) buffer.update(task, replay_rng);
            snapshots.push_back(engine_detail::refresh_snapshot(net, task, buffer, c));
        }
        report.final_weights = net.flatten().values();
    } catch (const std::exception& e) {
        report.failed = true;
        report.error = e.what();
        if (net.layer_count() > 0) report.final_weights = net.flatten().values();
    }

    auto t_end = std::chrono::steady_clock::now();
    report.wall_seconds = std::chrono::duration<double>(t_end - t_start).count();
    return report;
}

}  // namespace lmc

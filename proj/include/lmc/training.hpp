#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "lmc/adam.hpp"
#include "lmc/augment.hpp"
#include "lmc/curvature.hpp"
#include "lmc/data.hpp"
#include "lmc/errors.hpp"
#include "lmc/network.hpp"
#include "lmc/replay.hpp"
#include "lmc/rng.hpp"
#include "lmc/strategy.hpp"

namespace lmc {

/// (strength/2) * sum_k F_k (theta_k - anchor_k)^2.
inline double ewc_penalty(const Eigen::VectorXd& fisher, const Eigen::VectorXd& anchor,
                          const Eigen::VectorXd& weights, double strength) {
    if (fisher.size() != anchor.size() || anchor.size() != weights.size())
        throw ContractError("ewc_penalty: length mismatch");
    Eigen::ArrayXd d = weights.array() - anchor.array();
    return 0.5 * strength * (fisher.array() * d * d).sum();
}

inline Eigen::VectorXd ewc_grad(const Eigen::VectorXd& fisher, const Eigen::VectorXd& anchor,
                                const Eigen::VectorXd& weights, double strength) {
    if (fisher.size() != anchor.size() || anchor.size() != weights.size())
        throw ContractError("ewc_grad: length mismatch");
    return strength * (fisher.array() * (weights.array() - anchor.array())).matrix();
}

/// One step's inputs for the augmentation-chain loss: the clean batch plus
/// the three chained variants, drawn per sample in batch order.
struct AcBatches {
    Batch clean;
    std::array<Batch, 3> aug;
};

inline AcBatches draw_ac_batches(const Batch& batch, const AugmentationSpec& spec,
                                 Representation rep, Rng& rng) {
    AcBatches out;
    out.clean = batch;
    for (auto& b : out.aug) {
        b.inputs.resize(batch.dim(), batch.size());
        b.labels = batch.labels;
    }
    for (Eigen::Index j = 0; j < batch.size(); ++j) {
        auto chain = augment_chain(batch.inputs.col(j), spec, rep, rng);
        for (int i = 0; i < 3; ++i) out.aug[static_cast<std::size_t>(i)].inputs.col(j) = chain[i];
    }
    return out;
}

/// L_AC = L_cls(x) + lambda * sum_i L_cls(x_i) over a fixed chain draw.
inline double loss_ac(const Network& net, const AcBatches& batches, double lambda_ac) {
    double total = loss_bce(net, batches.clean);
    for (const auto& b : batches.aug) total += lambda_ac * loss_bce(net, b);
    return total;
}

inline double loss_ac(const Network& net, const Batch& batch, const AugmentationSpec& spec,
                      double lambda_ac, Representation rep, Rng& rng) {
    if (lambda_ac < 0.0) throw ContractError("loss_ac: lambda_ac must be nonnegative");
    if (lambda_ac == 0.0) return loss_bce(net, batch);
    return loss_ac(net, draw_ac_batches(batch, spec, rep, rng), lambda_ac);
}

struct LossComponents {
    double cls = 0.0;       // clean-batch mean BCE
    double ac_extra = 0.0;  // lambda-weighted chain terms
    double kfac = 0.0;      // gamma-weighted quadratic
    double ewc = 0.0;       // strength-weighted EWC penalty

    double total() const { return cls + ac_extra + kfac + ewc; }
};

struct StepGrads {
    LossComponents loss;
    WeightVector grads;
    double batch_acc = 0.0;  // clean-batch accuracy at the pre-step weights
};

namespace detail {

/// Mean BCE value, gradient contribution (scaled by `weight`), and accuracy
/// from a single forward pass.
inline double bce_term(const Network& net, const Batch& batch, double weight, WeightVector& acc,
                       double* batch_acc) {
    ForwardTrace trace = forward(net, batch);
    const Eigen::MatrixXd& z = trace.logits();
    double inv_n = 1.0 / static_cast<double>(batch.size());
    double value = 0.0;
    Eigen::Index correct = 0;
    Eigen::MatrixXd dlogits(z.rows(), z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        value += loss_bce(z(0, j), batch.labels(j)) * inv_n;
        dlogits(0, j) = bce_grad(z(0, j), batch.labels(j)) * inv_n * weight;
        if ((z(0, j) > 0.0 ? 1 : 0) == static_cast<int>(batch.labels(j))) ++correct;
    }
    acc += backward_from(net, trace, dlogits).grads;
    if (batch_acc) *batch_acc = static_cast<double>(correct) / static_cast<double>(batch.size());
    return value;
}

}  // namespace detail

/// Loss components and the full gradient for one optimizer step. Under the
/// accumulate flag the K-FAC penalty sums per-task quadratics, one snapshot
/// each; the EWC anchor is always the newest snapshot.
inline StepGrads step_grads(const Network& net, const Batch& batch, const AugmentationSpec& aug,
                            const std::vector<const CurvatureSnapshot*>& snapshots,
                            const StrategyConfig& strategy, Representation rep, Rng& rng) {
    StepGrads out;
    out.grads = WeightVector(net.layout());
    if (strategy.use_ac) {
        AcBatches batches = draw_ac_batches(batch, aug, rep, rng);
        out.loss.cls = detail::bce_term(net, batches.clean, 1.0, out.grads, &out.batch_acc);
        for (const auto& b : batches.aug)
            out.loss.ac_extra +=
                strategy.lambda_ac * detail::bce_term(net, b, strategy.lambda_ac, out.grads, nullptr);
    } else {
        out.loss.cls = detail::bce_term(net, batch, 1.0, out.grads, &out.batch_acc);
    }
    if (strategy.use_kfac) {
        if (snapshots.empty()) throw ContractError("loss_total: use_kfac requires a snapshot");
        WeightVector theta = net.flatten();
        for (const CurvatureSnapshot* snapshot : snapshots) {
            if (!snapshot) throw ContractError("loss_total: null snapshot");
            if (strategy.kfac_inverse_weighting) {
                out.loss.kfac += strategy.gamma * kfac_quadratic_inverse(*snapshot, theta);
                out.grads += strategy.gamma * kfac_penalty_grad_inverse(*snapshot, theta);
            } else {
                out.loss.kfac += strategy.gamma * kfac_quadratic(*snapshot, theta);
                out.grads += strategy.gamma * kfac_penalty_grad(*snapshot, theta);
            }
        }
    }
    if (strategy.use_ewc) {
        const CurvatureSnapshot* snapshot = snapshots.empty() ? nullptr : snapshots.back();
        if (!snapshot || !snapshot->fisher_diag)
            throw ContractError("loss_total: use_ewc requires a snapshot with a Fisher diagonal");
        WeightVector theta = net.flatten();
        out.loss.ewc = ewc_penalty(*snapshot->fisher_diag, snapshot->anchor.values(),
                                   theta.values(), strategy.ewc_strength);
        out.grads.values() += ewc_grad(*snapshot->fisher_diag, snapshot->anchor.values(),
                                       theta.values(), strategy.ewc_strength);
    }
    return out;
}

inline StepGrads step_grads(const Network& net, const Batch& batch, const AugmentationSpec& aug,
                            const CurvatureSnapshot* snapshot, const StrategyConfig& strategy,
                            Representation rep, Rng& rng) {
    std::vector<const CurvatureSnapshot*> snapshots;
    if (snapshot) snapshots.push_back(snapshot);
    return step_grads(net, batch, aug, snapshots, strategy, rep, rng);
}

/// Value-only form of the combined loss. Consumes the same rng draws as
/// step_grads, so equal-seeded streams see equal chains.
inline LossComponents loss_total(const Network& net, const Batch& batch,
                                 const AugmentationSpec& aug, const CurvatureSnapshot* snapshot,
                                 const StrategyConfig& strategy, Representation rep, Rng& rng) {
    return step_grads(net, batch, aug, snapshot, strategy, rep, rng).loss;
}

struct StepRecord {
    int task = 0;
    int epoch = 0;
    int step = 0;
    double loss_cls = 0.0;
    double loss_ac_extra = 0.0;
    double loss_kfac = 0.0;
    double loss_ewc = 0.0;
    double acc = 0.0;
};

using StepLog = std::vector<StepRecord>;

/// Runs strategy.epochs of Adam over task.train (plus the replay buffer when
/// use_replay) and returns the final weights. Minibatches are drawn by
/// shuffling indices each epoch; the last short batch is kept.
inline WeightVector train_task(const Network& tmpl, const WeightVector& theta_init,
                               const TaskDataset& task, const ReplayBuffer* buffer,
                               const std::vector<const CurvatureSnapshot*>& snapshots,
                               const StrategyConfig& strategy, const AugmentationSpec& aug,
                               Representation rep, Rng& rng, StepLog* log = nullptr) {
    validate(strategy);
    Network net = tmpl;
    net.set_weights(theta_init);

    Batch pool = task.train;
    if (strategy.use_replay && buffer && buffer->size() > 0) pool.append(buffer->as_batch());
    if (pool.size() == 0) throw ContractError("train_task: no training data");

    AdamState adam;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(pool.size()));
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<Eigen::Index>(k);

    for (int epoch = 0; epoch < strategy.epochs; ++epoch) {
        rng.shuffle(order);
        int step = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += strategy.batch_size) {
            std::size_t end = std::min(pos + static_cast<std::size_t>(strategy.batch_size),
                                       order.size());
            std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
            Batch batch = pool.select(idx);
            StepGrads sg = step_grads(net, batch, aug, snapshots, strategy, rep, rng);
            double total = sg.loss.total();
            if (!std::isfinite(total))
                throw NumericError("train_task: non-finite loss at task " +
                                   std::to_string(task.id) + " epoch " + std::to_string(epoch) +
                                   " step " + std::to_string(step));
            if (log)
                log->push_back({task.id, epoch, step, sg.loss.cls, sg.loss.ac_extra, sg.loss.kfac,
                                sg.loss.ewc, sg.batch_acc});
            WeightVector theta = net.flatten();
            adam_step(adam, theta, sg.grads, strategy.lr);
            net.set_weights(theta);
            ++step;
        }
    }
    return net.flatten();
}

inline WeightVector train_task(const Network& tmpl, const WeightVector& theta_init,
                               const TaskDataset& task, const ReplayBuffer* buffer,
                               const CurvatureSnapshot* snapshot, const StrategyConfig& strategy,
                               const AugmentationSpec& aug, Representation rep, Rng& rng,
                               StepLog* log = nullptr) {
    std::vector<const CurvatureSnapshot*> snapshots;
    if (snapshot) snapshots.push_back(snapshot);
    return train_task(tmpl, theta_init, task, buffer, snapshots, strategy, aug, rep, rng, log);
}

}  // namespace lmc

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "lmc/data.hpp"
#include "lmc/errors.hpp"
#include "lmc/loss.hpp"
#include "lmc/network.hpp"
#include "lmc/weights.hpp"

namespace lmc {

/// Kronecker factors for one layer, damping already on the diagonals.
struct LayerFactors {
    Eigen::MatrixXd Q;  // in x in
    Eigen::MatrixXd H;  // out x out
    double damping = 0.0;
};

struct CurvatureSnapshot {
    WeightVector anchor;  // weights the factors were estimated at
    std::vector<LayerFactors> factors;
    std::optional<Eigen::VectorXd> fisher_diag;
    std::int64_t sample_count = 0;
};

/// Q_m = mean a_{m-1} a_{m-1}^T; H_m = mean per-sample Gauss-Newton curvature
/// of the BCE loss wrt h_m, propagated back from sigma(z)(1-sigma(z)).
inline CurvatureSnapshot collect_factors(const Network& net, const Batch& data, double damping) {
    if (data.size() == 0) throw ContractError("collect_factors: empty data");
    if (damping <= 0.0) throw ContractError("collect_factors: damping must be positive");
    std::size_t M = net.layer_count();
    Eigen::Index n = data.size();
    ForwardTrace trace = forward(net, data);

    CurvatureSnapshot snap;
    snap.anchor = net.flatten();
    snap.sample_count = n;
    snap.factors.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        const DenseLayer& layer = net.layer(m);
        snap.factors[m].damping = damping;
        snap.factors[m].Q = (trace.a[m] * trace.a[m].transpose()) / static_cast<double>(n);
        snap.factors[m].H = Eigen::MatrixXd::Zero(layer.out(), layer.out());
    }

    // Per-sample GGN recursion: C_M = sigma(1-sigma) at the logit, then
    // C_{m-1} = D_{m-1} V_m^T C_m V_m D_{m-1} with D the activation derivative.
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::MatrixXd c(1, 1);
        c(0, 0) = bce_curvature(trace.logits()(0, j));
        snap.factors[M - 1].H += c;
        for (std::size_t m = M - 1; m > 0; --m) {
            const DenseLayer& layer = net.layer(m);
            const DenseLayer& below = net.layer(m - 1);
            Eigen::VectorXd d = trace.h[m - 1].col(j).unaryExpr(
                [&](double v) { return act_deriv(below.act, v); });
            Eigen::MatrixXd vd = layer.effective_weight() * d.asDiagonal();
            c = vd.transpose() * c * vd;
            snap.factors[m - 1].H += c;
        }
    }
    for (std::size_t m = 0; m < M; ++m) {
        LayerFactors& f = snap.factors[m];
        f.H /= static_cast<double>(n);
        f.Q.diagonal().array() += damping;
        f.H.diagonal().array() += damping;
    }
    return snap;
}

inline CurvatureSnapshot collect_factors(const Network& net, const TaskDataset& task,
                                         double damping) {
    return collect_factors(net, task.train, damping);
}

/// Explicit Kronecker product under the column-stacking vec convention:
/// (Q kron H) vec(X) = vec(H X Q^T) for X out x in. Test oracle only.
inline Eigen::MatrixXd kron_explicit(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& H,
                                     Eigen::Index cap = 4096) {
    if (Q.rows() != Q.cols() || H.rows() != H.cols())
        throw ContractError("kron_explicit: factors must be square");
    Eigen::Index dim = Q.rows() * H.rows();
    if (dim > cap) throw ContractError("kron_explicit: result exceeds oracle cap");
    Eigen::MatrixXd K(dim, dim);
    for (Eigen::Index j = 0; j < Q.rows(); ++j)
        for (Eigen::Index l = 0; l < Q.cols(); ++l)
            K.block(j * H.rows(), l * H.rows(), H.rows(), H.rows()) = Q(j, l) * H;
    return K;
}

/// 1/2 sum_m <dW_m, H_m dW_m Q_m>_F without materializing the Kronecker product.
inline double kfac_quadratic(const CurvatureSnapshot& snap, const WeightVector& weights) {
    if (!weights.same_layout(snap.anchor))
        throw ContractError("kfac_quadratic: layout mismatch");
    double total = 0.0;
    for (std::size_t m = 0; m < snap.factors.size(); ++m) {
        const LayerFactors& f = snap.factors[m];
        Eigen::MatrixXd dw = weights.weight(m) - snap.anchor.weight(m);
        total += 0.5 * (dw.cwiseProduct(f.H * dw * f.Q)).sum();
    }
    return total;
}

/// Gradient of kfac_quadratic: per layer H_m dW_m Q_m on the weight block.
inline WeightVector kfac_penalty_grad(const CurvatureSnapshot& snap, const WeightVector& weights) {
    if (!weights.same_layout(snap.anchor))
        throw ContractError("kfac_penalty_grad: layout mismatch");
    WeightVector grad(weights.layout_ptr());
    for (std::size_t m = 0; m < snap.factors.size(); ++m) {
        const LayerFactors& f = snap.factors[m];
        Eigen::MatrixXd dw = weights.weight(m) - snap.anchor.weight(m);
        grad.weight(m) = f.H * dw * f.Q;
    }
    return grad;
}

namespace detail {

/// H^{-1} dW Q^{-1} using the damped (hence PD) factors.
inline Eigen::MatrixXd inverse_weighted(const LayerFactors& f, const Eigen::MatrixXd& dw) {
    Eigen::MatrixXd hx = f.H.ldlt().solve(dw);
    return f.Q.ldlt().solve(hx.transpose()).transpose();
}

}  // namespace detail

/// Inverse-weighted variant of the penalty (config flag, not the default):
/// 1/2 sum_m <dW_m, H_m^{-1} dW_m Q_m^{-1}>_F.
inline double kfac_quadratic_inverse(const CurvatureSnapshot& snap, const WeightVector& weights) {
    if (!weights.same_layout(snap.anchor))
        throw ContractError("kfac_quadratic_inverse: layout mismatch");
    double total = 0.0;
    for (std::size_t m = 0; m < snap.factors.size(); ++m) {
        Eigen::MatrixXd dw = weights.weight(m) - snap.anchor.weight(m);
        total += 0.5 * (dw.cwiseProduct(detail::inverse_weighted(snap.factors[m], dw))).sum();
    }
    return total;
}

inline WeightVector kfac_penalty_grad_inverse(const CurvatureSnapshot& snap,
                                              const WeightVector& weights) {
    if (!weights.same_layout(snap.anchor))
        throw ContractError("kfac_penalty_grad_inverse: layout mismatch");
    WeightVector grad(weights.layout_ptr());
    for (std::size_t m = 0; m < snap.factors.size(); ++m) {
        Eigen::MatrixXd dw = weights.weight(m) - snap.anchor.weight(m);
        grad.weight(m) = detail::inverse_weighted(snap.factors[m], dw);
    }
    return grad;
}

/// Empirical Fisher diagonal: mean over samples of squared per-sample grads.
inline Eigen::VectorXd fisher_diag(const Network& net, const Batch& data) {
    if (data.size() == 0) throw ContractError("fisher_diag: empty data");
    ForwardTrace trace = forward(net, data);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(net.layout()->total_size());
    for (Eigen::Index j = 0; j < data.size(); ++j) {
        Batch one;
        one.inputs = data.inputs.col(j);
        one.labels = data.labels.segment(j, 1);
        BackwardResult res = backward(net, one);
        acc.array() += res.grads.values().array().square();
    }
    return acc / static_cast<double>(data.size());
}

}  // namespace lmc

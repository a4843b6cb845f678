#pragma once

#include <Eigen/Core>
#include <functional>

#include "lmc/curvature.hpp"
#include "lmc/data.hpp"
#include "lmc/errors.hpp"
#include "lmc/network.hpp"

namespace lmc {

/// Central finite differences of a gradient function over one coordinate
/// block: column k is (g(theta + eps e_k) - g(theta - eps e_k)) / 2eps
/// restricted to the same block.
template <class GradFn>
Eigen::MatrixXd fd_hessian_block(GradFn&& grad, const Eigen::VectorXd& theta0,
                                 Eigen::Index offset, Eigen::Index count, double eps = 1e-4) {
    Eigen::MatrixXd hess(count, count);
    Eigen::VectorXd theta = theta0;
    for (Eigen::Index k = 0; k < count; ++k) {
        theta(offset + k) = theta0(offset + k) + eps;
        Eigen::VectorXd gp = grad(theta);
        theta(offset + k) = theta0(offset + k) - eps;
        Eigen::VectorXd gm = grad(theta);
        theta(offset + k) = theta0(offset + k);
        hess.col(k) = (gp.segment(offset, count) - gm.segment(offset, count)) / (2.0 * eps);
    }
    return hess;
}

inline Eigen::VectorXd bce_grad_at(const Network& tmpl, const Batch& data,
                                   const Eigen::VectorXd& theta) {
    Network net = tmpl;
    net.set_weights(WeightVector(net.layout(), theta));
    return backward(net, data).grads.values();
}

/// Unsymmetrized FD Hessian of the mean BCE loss wrt one layer's weight
/// matrix. Refuses when the block exceeds the oracle cap.
inline Eigen::MatrixXd exact_hessian_raw(const Network& net, const Batch& data, std::size_t layer,
                                         double eps = 1e-4, Eigen::Index cap = 64) {
    const LayerBlocks& blk = net.layout()->layer(layer);
    Eigen::Index count = blk.out * blk.in;
    if (count > cap) throw ContractError("exact_hessian: layer parameter count exceeds cap");
    Eigen::VectorXd theta0 = net.flatten().values();
    return fd_hessian_block([&](const Eigen::VectorXd& th) { return bce_grad_at(net, data, th); },
                            theta0, blk.w_offset, count, eps);
}

inline Eigen::MatrixXd exact_hessian(const Network& net, const Batch& data, std::size_t layer,
                                     double eps = 1e-4, Eigen::Index cap = 64) {
    Eigen::MatrixXd raw = exact_hessian_raw(net, data, layer, eps, cap);
    return 0.5 * (raw + raw.transpose());
}

inline Eigen::MatrixXd exact_hessian(const Network& net, const TaskDataset& task, std::size_t layer,
                                     double eps = 1e-4, Eigen::Index cap = 64) {
    return exact_hessian(net, task.train, layer, eps, cap);
}

/// Hessian-vector product of the mean BCE loss via central differences of
/// the gradient along v. Works at any parameter count.
inline Eigen::VectorXd hvp_fd(const Network& net, const Batch& data, const Eigen::VectorXd& v,
                              double eps = 1e-5) {
    Eigen::VectorXd theta0 = net.flatten().values();
    double scale = v.norm();
    if (scale == 0.0) return Eigen::VectorXd::Zero(v.size());
    Eigen::VectorXd dir = v / scale;
    Eigen::VectorXd gp = bce_grad_at(net, data, theta0 + eps * dir);
    Eigen::VectorXd gm = bce_grad_at(net, data, theta0 - eps * dir);
    return (gp - gm) * (scale / (2.0 * eps));
}

}  // namespace lmc

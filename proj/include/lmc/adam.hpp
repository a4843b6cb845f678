#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

#include "lmc/errors.hpp"
#include "lmc/weights.hpp"

namespace lmc {

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    Eigen::VectorXd m;
    Eigen::VectorXd v;
};

/// Standard Adam with bias correction; epsilon sits outside the sqrt.
inline void adam_step(AdamState& state, WeightVector& weights, const WeightVector& grads,
                      double lr) {
    if (!weights.same_layout(grads))
        throw ContractError("adam_step: weight/grad layout mismatch");
    Eigen::Index n = weights.size();
    if (state.step == 0) {
        state.m = Eigen::VectorXd::Zero(n);
        state.v = Eigen::VectorXd::Zero(n);
    }
    if (state.m.size() != n) throw ContractError("adam_step: state size mismatch");
    ++state.step;
    const Eigen::VectorXd& g = grads.values();
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g.cwiseProduct(g);
    double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    Eigen::ArrayXd m_hat = state.m.array() / c1;
    Eigen::ArrayXd v_hat = state.v.array() / c2;
    weights.values().array() -= lr * m_hat / (v_hat.sqrt() + state.eps);
}

}  // namespace lmc

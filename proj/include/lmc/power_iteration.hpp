#pragma once

#include <Eigen/Core>
#include <cmath>
#include <functional>
#include <string>

#include "lmc/errors.hpp"
#include "lmc/format.hpp"
#include "lmc/rng.hpp"

namespace lmc {

using HvpFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Maximum (signed) eigenvalue of a symmetric operator via shifted power
/// iteration. A basis probe pass gives the Frobenius norm, and shifting by
/// it makes every eigenvalue of H + cI nonnegative, so the dominant
/// eigenvalue of the shifted operator is lambda_max + c regardless of how
/// indefinite H is. Reported after un-shifting.
inline double max_eigenvalue(const HvpFn& hvp, Eigen::Index dim, double tol = 1e-10,
                             int max_iters = 20000) {
    if (dim <= 0) throw ContractError("max_eigenvalue: dim must be positive");
    if (tol <= 0.0) throw ContractError("max_eigenvalue: tol must be positive");

    double frob_sq = 0.0;
    for (Eigen::Index k = 0; k < dim; ++k) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
        e(k) = 1.0;
        frob_sq += hvp(e).squaredNorm();
    }
    double shift = std::sqrt(frob_sq);
    if (shift == 0.0) return 0.0;  // zero operator

    Rng rng(0x9e3779b97f4a7c15ull ^ static_cast<std::uint64_t>(dim));
    Eigen::VectorXd v(dim);
    for (Eigen::Index k = 0; k < dim; ++k) v(k) = rng.normal();
    v.normalize();

    double rayleigh_prev = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        Eigen::VectorXd w = hvp(v) + shift * v;
        double rayleigh = v.dot(w);
        double norm = w.norm();
        if (norm == 0.0) return -shift;  // v spans the kernel of the shifted op
        v = w / norm;
        if (it > 0 && std::abs(rayleigh - rayleigh_prev) < tol) return rayleigh - shift;
        rayleigh_prev = rayleigh;
    }
    throw NumericError("max_eigenvalue: no convergence after " + std::to_string(max_iters) +
                       " iterations, last estimate " + g9(rayleigh_prev - shift));
}

}  // namespace lmc

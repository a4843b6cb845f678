#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "lmc/data.hpp"
#include "lmc/errors.hpp"
#include "lmc/rng.hpp"

namespace lmc {

enum class PoolOp { flip, rotate, translate, scale, contrast, brightness, gaussian_noise, cutout };

inline std::string to_string(PoolOp op) {
    switch (op) {
        case PoolOp::flip: return "flip";
        case PoolOp::rotate: return "rotate";
        case PoolOp::translate: return "translate";
        case PoolOp::scale: return "scale";
        case PoolOp::contrast: return "contrast";
        case PoolOp::brightness: return "brightness";
        case PoolOp::gaussian_noise: return "gaussian-noise";
        case PoolOp::cutout: return "cutout";
    }
    throw ContractError("unreachable pool op");
}

inline PoolOp pool_op_from_string(const std::string& s) {
    if (s == "flip") return PoolOp::flip;
    if (s == "rotate") return PoolOp::rotate;
    if (s == "translate") return PoolOp::translate;
    if (s == "scale") return PoolOp::scale;
    if (s == "contrast") return PoolOp::contrast;
    if (s == "brightness") return PoolOp::brightness;
    if (s == "gaussian-noise") return PoolOp::gaussian_noise;
    if (s == "cutout") return PoolOp::cutout;
    throw ConfigError("unknown pool op: " + s);
}

inline std::vector<PoolOp> default_pool() {
    return {PoolOp::flip,     PoolOp::rotate,     PoolOp::translate,      PoolOp::scale,
            PoolOp::contrast, PoolOp::brightness, PoolOp::gaussian_noise, PoolOp::cutout};
}

/// Stage 1 = flip/rotate/translate; stage 2 adds scale+shear; stage 3 adds
/// rand_n draws from the pool at magnitude rand_m (0..30 bin scale).
/// Stage op sets are cumulative by construction.
struct AugmentationSpec {
    double flip_prob = 0.5;
    double rotate_deg = 30.0;
    double translate_frac = 0.1;
    double scale_lo = 0.9;
    double scale_hi = 1.1;
    double shear_deg = 10.0;
    int rand_n = 3;
    int rand_m = 9;
    std::vector<PoolOp> pool = default_pool();
};

inline void validate_augmentation(const AugmentationSpec& spec, Representation rep,
                                  Eigen::Index dim) {
    if (spec.flip_prob < 0.0 || spec.flip_prob > 1.0)
        throw ConfigError("augmentation: flip_prob must lie in [0,1]");
    if (spec.rotate_deg < 0.0 || spec.translate_frac < 0.0 || spec.shear_deg < 0.0)
        throw ConfigError("augmentation: magnitudes must be nonnegative");
    if (spec.scale_lo > spec.scale_hi || spec.scale_lo <= 0.0)
        throw ConfigError("augmentation: scale range invalid");
    if (spec.rand_n < 0) throw ConfigError("augmentation: rand_n must be nonnegative");
    if (spec.rand_m < 0 || spec.rand_m > 30)
        throw ConfigError("augmentation: rand_m must lie in [0,30]");
    if (rep == Representation::vector) {
        bool needs_plane = spec.rotate_deg > 0.0 || spec.shear_deg > 0.0;
        for (PoolOp op : spec.pool)
            if (op == PoolOp::rotate) needs_plane = true;
        if (needs_plane && dim < 2)
            throw ConfigError("augmentation: rotation/shear need vector dim >= 2");
    } else {
        auto side = static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(dim))));
        if (side * side != dim)
            throw ConfigError("augmentation: raster dim must be a perfect square");
    }
}

namespace aug_detail {

constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double d) { return d * kPi / 180.0; }

// ---- vector-space ops (geometric analogs) ------------------------------

inline void vec_flip(Eigen::VectorXd& x, Eigen::Index axis) { x(axis) = -x(axis); }

inline void vec_rotate(Eigen::VectorXd& x, Eigen::Index i, Eigen::Index j, double rad) {
    double c = std::cos(rad), s = std::sin(rad);
    double xi = x(i), xj = x(j);
    x(i) = c * xi - s * xj;
    x(j) = s * xi + c * xj;
}

inline void vec_shear(Eigen::VectorXd& x, Eigen::Index i, Eigen::Index j, double rad) {
    x(i) += std::tan(rad) * x(j);
}

inline void vec_contrast(Eigen::VectorXd& x, double factor) {
    double mu = x.mean();
    x = (x.array() - mu) * factor + mu;
}

inline void vec_cutout(Eigen::VectorXd& x, Eigen::Index start, Eigen::Index len) {
    if (len > 0) x.segment(start, len).setZero();
}

/// Draws an ordered pair of distinct coordinates.
inline std::pair<Eigen::Index, Eigen::Index> draw_plane(Eigen::Index dim, Rng& rng) {
    Eigen::Index i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(dim)));
    Eigen::Index j = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(dim - 1)));
    if (j >= i) ++j;
    return {i, j};
}

// ---- raster ops ----------------------------------------------------------
// Row-major side x side grayscale; affine warps inverse-map each output
// pixel to a source location and sample bilinearly with zero fill.

inline double bilinear(const Eigen::VectorXd& img, Eigen::Index side, double sx, double sy) {
    double fc = std::floor(sx), fr = std::floor(sy);
    auto at = [&](double r, double c) -> double {
        auto ri = static_cast<Eigen::Index>(r), ci = static_cast<Eigen::Index>(c);
        if (ri < 0 || ri >= side || ci < 0 || ci >= side) return 0.0;
        return img(ri * side + ci);
    };
    double wc = sx - fc, wr = sy - fr;
    return at(fr, fc) * (1.0 - wr) * (1.0 - wc) + at(fr, fc + 1) * (1.0 - wr) * wc +
           at(fr + 1, fc) * wr * (1.0 - wc) + at(fr + 1, fc + 1) * wr * wc;
}

/// Applies a forward affine map (homogeneous 3x3 on centered (x,y) coords)
/// by sampling through its inverse.
inline Eigen::VectorXd raster_affine(const Eigen::VectorXd& img, Eigen::Index side,
                                     const Eigen::Matrix3d& fwd) {
    Eigen::Matrix3d inv = fwd.inverse();
    double center = (static_cast<double>(side) - 1.0) / 2.0;
    Eigen::VectorXd out(img.size());
    for (Eigen::Index r = 0; r < side; ++r) {
        for (Eigen::Index c = 0; c < side; ++c) {
            Eigen::Vector3d dst(static_cast<double>(c) - center, static_cast<double>(r) - center,
                                1.0);
            Eigen::Vector3d src = inv * dst;
            out(r * side + c) = bilinear(img, side, src(0) + center, src(1) + center);
        }
    }
    return out;
}

inline Eigen::Matrix3d affine_rotate(double rad) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 0) = std::cos(rad);
    m(0, 1) = -std::sin(rad);
    m(1, 0) = std::sin(rad);
    m(1, 1) = std::cos(rad);
    return m;
}

inline Eigen::Matrix3d affine_scale(double s) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 0) = s;
    m(1, 1) = s;
    return m;
}

inline Eigen::Matrix3d affine_shear(double rad) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 1) = std::tan(rad);
    return m;
}

inline Eigen::Matrix3d affine_translate(double dx, double dy) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 2) = dx;
    m(1, 2) = dy;
    return m;
}

inline Eigen::Matrix3d affine_flip_h() {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 0) = -1.0;
    return m;
}

inline void raster_cutout(Eigen::VectorXd& img, Eigen::Index side, Eigen::Index r0,
                          Eigen::Index c0, Eigen::Index patch) {
    for (Eigen::Index r = r0; r < std::min(r0 + patch, side); ++r)
        for (Eigen::Index c = c0; c < std::min(c0 + patch, side); ++c) img(r * side + c) = 0.0;
}

// ---- pool draw at RandAugment-style magnitude ---------------------------

inline Eigen::VectorXd apply_pool_op(PoolOp op, const Eigen::VectorXd& x, Representation rep,
                                     double strength, Rng& rng) {
    Eigen::VectorXd out = x;
    Eigen::Index dim = x.size();
    auto side = static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(dim))));
    switch (op) {
        case PoolOp::flip:
            if (rep == Representation::vector)
                vec_flip(out, static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(dim))));
            else
                out = raster_affine(out, side, affine_flip_h());
            break;
        case PoolOp::rotate: {
            double rad = deg2rad(rng.uniform(-30.0 * strength, 30.0 * strength));
            if (rep == Representation::vector) {
                auto [i, j] = draw_plane(dim, rng);
                vec_rotate(out, i, j, rad);
            } else {
                out = raster_affine(out, side, affine_rotate(rad));
            }
            break;
        }
        case PoolOp::translate: {
            double f = 0.3 * strength;
            if (rep == Representation::vector) {
                for (Eigen::Index k = 0; k < dim; ++k) out(k) += rng.uniform(-f, f);
            } else {
                double dx = rng.uniform(-f, f) * static_cast<double>(side);
                double dy = rng.uniform(-f, f) * static_cast<double>(side);
                out = raster_affine(out, side, affine_translate(dx, dy));
            }
            break;
        }
        case PoolOp::scale: {
            double s = rng.uniform(1.0 - 0.3 * strength, 1.0 + 0.3 * strength);
            if (rep == Representation::vector)
                out *= s;
            else
                out = raster_affine(out, side, affine_scale(s));
            break;
        }
        case PoolOp::contrast:
            vec_contrast(out, rng.uniform(1.0 - 0.9 * strength, 1.0 + 0.9 * strength));
            break;
        case PoolOp::brightness:
            out.array() += rng.uniform(-0.5 * strength, 0.5 * strength);
            break;
        case PoolOp::gaussian_noise: {
            double sigma = 0.3 * strength;
            for (Eigen::Index k = 0; k < dim; ++k) out(k) += sigma * rng.normal();
            break;
        }
        case PoolOp::cutout: {
            if (rep == Representation::vector) {
                auto len = static_cast<Eigen::Index>(
                    std::lround(0.4 * strength * static_cast<double>(dim)));
                len = std::min(len, dim);
                Eigen::Index start = static_cast<Eigen::Index>(
                    rng.index(static_cast<std::size_t>(dim - len + 1)));
                vec_cutout(out, start, len);
            } else {
                auto patch = static_cast<Eigen::Index>(
                    std::lround(0.4 * strength * static_cast<double>(side)));
                patch = std::min(patch, side);
                Eigen::Index span = side - patch + 1;
                auto r0 = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(span)));
                auto c0 = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(span)));
                raster_cutout(out, side, r0, c0, patch);
            }
            break;
        }
    }
    return out;
}

inline Eigen::VectorXd apply_stage(const Eigen::VectorXd& x, int stage,
                                   const AugmentationSpec& spec, Representation rep, Rng& rng) {
    Eigen::Index dim = x.size();
    Eigen::VectorXd out = x;
    bool flip = rng.bernoulli(spec.flip_prob);
    double rot = deg2rad(rng.uniform(-spec.rotate_deg, spec.rotate_deg));
    if (rep == Representation::vector) {
        if (flip) vec_flip(out, 0);
        if (dim >= 2) {
            auto [i, j] = draw_plane(dim, rng);
            vec_rotate(out, i, j, rot);
        }
        for (Eigen::Index k = 0; k < dim; ++k)
            out(k) += rng.uniform(-spec.translate_frac, spec.translate_frac);
        if (stage >= 2) {
            out *= rng.uniform(spec.scale_lo, spec.scale_hi);
            if (dim >= 2) {
                double shear = deg2rad(rng.uniform(-spec.shear_deg, spec.shear_deg));
                auto [i, j] = draw_plane(dim, rng);
                vec_shear(out, i, j, shear);
            }
        }
    } else {
        auto side = static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(dim))));
        double dx = rng.uniform(-spec.translate_frac, spec.translate_frac) *
                    static_cast<double>(side);
        double dy = rng.uniform(-spec.translate_frac, spec.translate_frac) *
                    static_cast<double>(side);
        Eigen::Matrix3d fwd = affine_translate(dx, dy) * affine_rotate(rot);
        if (stage >= 2) {
            double s = rng.uniform(spec.scale_lo, spec.scale_hi);
            double shear = deg2rad(rng.uniform(-spec.shear_deg, spec.shear_deg));
            fwd = fwd * affine_shear(shear) * affine_scale(s);
        }
        if (flip) fwd = fwd * affine_flip_h();
        out = raster_affine(out, side, fwd);
    }
    if (stage >= 3 && !spec.pool.empty()) {
        double strength = static_cast<double>(spec.rand_m) / 30.0;
        for (int k = 0; k < spec.rand_n; ++k) {
            PoolOp op = spec.pool[rng.index(spec.pool.size())];
            out = apply_pool_op(op, out, rep, strength, rng);
        }
    }
    return out;
}

}  // namespace aug_detail

/// Three progressively augmented variants: x1 = stage1(x), x2 = stage2(x1),
/// x3 = stage3(x2). Deterministic given the rng state.
inline std::array<Eigen::VectorXd, 3> augment_chain(const Eigen::VectorXd& x,
                                                    const AugmentationSpec& spec,
                                                    Representation rep, Rng& rng) {
    std::array<Eigen::VectorXd, 3> out;
    out[0] = aug_detail::apply_stage(x, 1, spec, rep, rng);
    out[1] = aug_detail::apply_stage(out[0], 2, spec, rep, rng);
    out[2] = aug_detail::apply_stage(out[1], 3, spec, rep, rng);
    return out;
}

}  // namespace lmc

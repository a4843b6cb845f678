#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lmc/config.hpp"
#include "lmc/data.hpp"
#include "lmc/rng.hpp"

namespace lmc {

namespace stream_detail {

constexpr double kPi = 3.14159265358979323846;

/// Features pass through f32 so CLDS round-trips are bit-exact.
inline double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

// Real class: fixed two-component Gaussian mixture near the origin,
// identical for every task.
inline Eigen::VectorXd sample_real_vec(Rng& rng) {
    Eigen::VectorXd x(2);
    double mean = rng.bernoulli(0.5) ? 0.3 : -0.3;
    x(0) = mean + 0.1 * rng.normal();
    x(1) = 0.1 * rng.normal();
    return x;
}

// Fake families: an arc cluster at radius ~1.2 whose center angle and warp
// frequency drift per task, then a radial filament after the family switch.
inline Eigen::VectorXd sample_fake_vec(Rng& rng, double angle_rad, double warp,
                                       const std::string& family) {
    Eigen::VectorXd x(2);
    if (family == "filament") {
        double s = rng.uniform(0.85, 1.7);
        double perp = 0.06 * rng.normal();
        double wiggle = 0.04 * std::sin(warp * 5.0 * s);
        double r = s + wiggle;
        x(0) = r * std::cos(angle_rad) - perp * std::sin(angle_rad);
        x(1) = r * std::sin(angle_rad) + perp * std::cos(angle_rad);
    } else {  // arc
        double phi = angle_rad + 0.35 * rng.normal();
        double r = 1.2 + 0.12 * std::sin(warp * 3.0 * (phi - angle_rad)) + 0.05 * rng.normal();
        x(0) = r * std::cos(phi);
        x(1) = r * std::sin(phi);
    }
    return x;
}

inline Eigen::VectorXd sample_real_raster(Rng& rng) {
    constexpr Eigen::Index side = 16;
    Eigen::VectorXd img(side * side);
    double cr = 7.5 + 1.2 * rng.normal();
    double cc = 7.5 + 1.2 * rng.normal();
    double s = 2.5 + 0.4 * rng.uniform(-1.0, 1.0);
    for (Eigen::Index r = 0; r < side; ++r)
        for (Eigen::Index c = 0; c < side; ++c) {
            double d2 = (static_cast<double>(r) - cr) * (static_cast<double>(r) - cr) +
                        (static_cast<double>(c) - cc) * (static_cast<double>(c) - cc);
            img(r * side + c) = std::exp(-d2 / (2.0 * s * s)) + 0.03 * rng.normal();
        }
    return img;
}

inline Eigen::VectorXd sample_fake_raster(Rng& rng, double angle_rad, double warp,
                                          const std::string& family) {
    constexpr Eigen::Index side = 16;
    Eigen::VectorXd img(side * side);
    double phase = rng.uniform(0.0, 2.0 * kPi);
    for (Eigen::Index r = 0; r < side; ++r)
        for (Eigen::Index c = 0; c < side; ++c) {
            double u = static_cast<double>(c) - 7.5;
            double v = static_cast<double>(r) - 7.5;
            double t = family == "rings" ? std::sqrt(u * u + v * v)
                                         : u * std::cos(angle_rad) + v * std::sin(angle_rad);
            img(r * side + c) =
                0.5 + 0.45 * std::sin(2.0 * kPi * warp * t / 16.0 + phase) + 0.03 * rng.normal();
        }
    return img;
}

inline Batch sample_batch(Rng& rng, Representation rep, Eigen::Index n, double angle_rad,
                          double warp, const std::string& family) {
    Eigen::Index n_fake = n / 2;
    Eigen::Index n_real = n - n_fake;
    Eigen::Index dim = rep == Representation::vector ? 2 : 256;
    Batch b;
    b.inputs.resize(dim, n);
    b.labels.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        bool fake = j < n_fake;
        Eigen::VectorXd x;
        if (rep == Representation::vector)
            x = fake ? sample_fake_vec(rng, angle_rad, warp, family) : sample_real_vec(rng);
        else
            x = fake ? sample_fake_raster(rng, angle_rad, warp, family) : sample_real_raster(rng);
        for (Eigen::Index i = 0; i < dim; ++i) b.inputs(i, j) = quantize(x(i));
        b.labels(j) = fake ? 1.0 : 0.0;
    }
    // shuffle sample order so slices of the batch stay class-mixed
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<Eigen::Index>(k);
    rng.shuffle(order);
    return b.select(order);
}

}  // namespace stream_detail

inline DriftMeta drift_params(const DriftSchedule& d, int task) {
    DriftMeta meta;
    int effective = d.no_drift ? 1 : task;
    meta.angle_deg = d.angle_start_deg + d.angle_step_deg * static_cast<double>(effective - 1);
    meta.warp_freq = d.warp_start + d.warp_step * static_cast<double>(effective - 1);
    bool switched = !d.no_drift && d.family_switch_task > 0 && task >= d.family_switch_task;
    meta.family = switched ? "B" : "A";
    return meta;
}

/// T seeded tasks with disjoint train/test draws and 50/50 (+-1) labels.
inline std::vector<TaskDataset> make_stream(const ExperimentConfig& c, std::uint64_t seed) {
    std::vector<TaskDataset> tasks;
    Rng root(seed);
    for (int t = 1; t <= c.tasks; ++t) {
        Rng rng = root.fork(static_cast<std::uint64_t>(t));
        DriftMeta meta = drift_params(c.drift, t);
        std::string family;
        if (c.representation == Representation::vector)
            family = meta.family == "B" ? "filament" : "arc";
        else
            family = meta.family == "B" ? "rings" : "grating";
        double angle_rad = meta.angle_deg * stream_detail::kPi / 180.0;

        TaskDataset task;
        task.id = t;
        task.meta = meta;
        task.meta.family = family;
        task.train = stream_detail::sample_batch(rng, c.representation, c.train_per_task,
                                                 angle_rad, meta.warp_freq, family);
        task.test = stream_detail::sample_batch(rng, c.representation, c.test_per_task, angle_rad,
                                                meta.warp_freq, family);
        tasks.push_back(std::move(task));
    }
    return tasks;
}

}  // namespace lmc

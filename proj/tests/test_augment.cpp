#include <catch2/catch_amalgamated.hpp>

#include "lmc/augment.hpp"

using namespace lmc;
using namespace lmc::aug_detail;

namespace {

AugmentationSpec zero_spec() {
    AugmentationSpec s;
    s.flip_prob = 0.0;
    s.rotate_deg = 0.0;
    s.translate_frac = 0.0;
    s.scale_lo = 1.0;
    s.scale_hi = 1.0;
    s.shear_deg = 0.0;
    s.rand_n = 0;
    return s;
}

Eigen::VectorXd ramp(Eigen::Index n) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = 0.1 * static_cast<double>(i + 1);
    return x;
}

}  // namespace

TEST_CASE("zero-magnitude chains are exact identities in both representations") {
    Rng rng(1);
    AugmentationSpec s = zero_spec();

    Eigen::VectorXd v = ramp(6);
    auto cv = augment_chain(v, s, Representation::vector, rng);
    REQUIRE(cv[0] == v);
    REQUIRE(cv[1] == v);
    REQUIRE(cv[2] == v);

    Eigen::VectorXd img = ramp(16);  // 4x4
    auto cr = augment_chain(img, s, Representation::raster16, rng);
    REQUIRE(cr[0] == img);
    REQUIRE(cr[1] == img);
    REQUIRE(cr[2] == img);
}

TEST_CASE("forced flip negates coordinate zero of a vector") {
    AugmentationSpec s = zero_spec();
    s.flip_prob = 1.0;
    Rng rng(2);
    Eigen::VectorXd v = ramp(4);
    auto c = augment_chain(v, s, Representation::vector, rng);
    Eigen::VectorXd expect = v;
    expect(0) = -expect(0);
    REQUIRE(c[0] == expect);
    // second stage flips again relative to its input
    expect(0) = -expect(0);
    REQUIRE(c[1] == expect);
}

TEST_CASE("forced flip mirrors a raster horizontally without resampling loss") {
    AugmentationSpec s = zero_spec();
    s.flip_prob = 1.0;
    Rng rng(3);
    Eigen::Index side = 4;
    Eigen::VectorXd img = ramp(side * side);
    auto c = augment_chain(img, s, Representation::raster16, rng);
    for (Eigen::Index r = 0; r < side; ++r)
        for (Eigen::Index col = 0; col < side; ++col)
            REQUIRE(c[0](r * side + col) == img(r * side + (side - 1 - col)));
}

TEST_CASE("integer translations shift raster pixels exactly with zero fill") {
    Eigen::Index side = 4;
    Eigen::VectorXd img = ramp(side * side);
    Eigen::VectorXd out = raster_affine(img, side, affine_translate(1.0, 0.0));
    for (Eigen::Index r = 0; r < side; ++r) {
        REQUIRE(out(r * side + 0) == 0.0);
        for (Eigen::Index c = 1; c < side; ++c)
            REQUIRE(out(r * side + c) == img(r * side + (c - 1)));
    }
}

TEST_CASE("rotation round-trips interior pixels within bilinear tolerance") {
    Eigen::Index side = 9;
    Rng rng(4);
    Eigen::VectorXd img(side * side);
    for (Eigen::Index i = 0; i < img.size(); ++i) img(i) = rng.uniform();
    double rad = deg2rad(20.0);
    Eigen::VectorXd fwd = raster_affine(img, side, affine_rotate(rad));
    Eigen::VectorXd back = raster_affine(fwd, side, affine_rotate(-rad));
    Eigen::Index c0 = side / 2;
    // center pixel is a fixed point of the rotation
    REQUIRE(back(c0 * side + c0) == Catch::Approx(img(c0 * side + c0)).margin(0.2));
}

TEST_CASE("augment chains are deterministic given the rng state") {
    AugmentationSpec s;  // defaults exercise every stage
    Eigen::VectorXd v = ramp(8);
    Rng r1(77), r2(77);
    auto a = augment_chain(v, s, Representation::vector, r1);
    auto b = augment_chain(v, s, Representation::vector, r2);
    for (int i = 0; i < 3; ++i) REQUIRE(a[i] == b[i]);

    Rng r3(78);
    auto c = augment_chain(v, s, Representation::vector, r3);
    REQUIRE(a[2] != c[2]);
}

TEST_CASE("later stages distort more on average") {
    AugmentationSpec s;
    Eigen::VectorXd v = ramp(8);
    Rng rng(5);
    double d1 = 0, d2 = 0, d3 = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        auto c = augment_chain(v, s, Representation::vector, rng);
        d1 += (c[0] - v).norm();
        d2 += (c[1] - v).norm();
        d3 += (c[2] - v).norm();
    }
    REQUIRE(d2 > d1);
    REQUIRE(d3 > d2);

    // raster path shows the same progression
    Eigen::VectorXd img = ramp(64);
    double r1 = 0, r3 = 0;
    for (int i = 0; i < 200; ++i) {
        auto c = augment_chain(img, s, Representation::raster16, rng);
        r1 += (c[0] - img).norm();
        r3 += (c[2] - img).norm();
    }
    REQUIRE(r3 > r1);
}

TEST_CASE("pool ops hold their local invariants") {
    Rng rng(6);
    Eigen::VectorXd v = ramp(10);

    Eigen::VectorXd contrasted = apply_pool_op(PoolOp::contrast, v, Representation::vector,
                                               0.5, rng);
    REQUIRE(contrasted.mean() == Catch::Approx(v.mean()).margin(1e-12));

    Eigen::VectorXd quiet = apply_pool_op(PoolOp::gaussian_noise, v, Representation::vector,
                                          0.0, rng);
    REQUIRE(quiet == v);

    Eigen::VectorXd cut = apply_pool_op(PoolOp::cutout, v, Representation::vector, 1.0, rng);
    Eigen::Index zeros = 0;
    for (Eigen::Index i = 0; i < cut.size(); ++i)
        if (cut(i) == 0.0) ++zeros;
    REQUIRE(zeros >= 4);  // 0.4 * strength 1.0 * dim 10

    Eigen::VectorXd scaled = apply_pool_op(PoolOp::scale, v, Representation::vector, 0.0, rng);
    REQUIRE(scaled == v);
}

TEST_CASE("pool op names round-trip") {
    for (PoolOp op : default_pool()) REQUIRE(pool_op_from_string(to_string(op)) == op);
    REQUIRE_THROWS_AS(pool_op_from_string("warp"), ConfigError);
    REQUIRE(to_string(PoolOp::gaussian_noise) == "gaussian-noise");
}

TEST_CASE("validate_augmentation rejects out-of-range specs") {
    AugmentationSpec s;
    s.flip_prob = 1.5;
    REQUIRE_THROWS_AS(validate_augmentation(s, Representation::vector, 2), ConfigError);
    s = AugmentationSpec{};
    s.scale_lo = 1.2;
    s.scale_hi = 0.8;
    REQUIRE_THROWS_AS(validate_augmentation(s, Representation::vector, 2), ConfigError);
    s = AugmentationSpec{};
    s.rand_m = 31;
    REQUIRE_THROWS_AS(validate_augmentation(s, Representation::vector, 2), ConfigError);
    s = AugmentationSpec{};
    REQUIRE_THROWS_AS(validate_augmentation(s, Representation::vector, 1), ConfigError);
    REQUIRE_THROWS_AS(validate_augmentation(s, Representation::raster16, 15), ConfigError);
    REQUIRE_NOTHROW(validate_augmentation(s, Representation::raster16, 16));
}

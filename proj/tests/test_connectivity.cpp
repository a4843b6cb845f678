#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>

#include "lmc/connectivity.hpp"

using namespace lmc;

namespace {

Batch random_batch(Eigen::Index dim, Eigen::Index n, Rng& rng) {
    Batch b;
    b.inputs.resize(dim, n);
    b.labels.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < dim; ++i) b.inputs(i, j) = rng.normal();
        b.labels(j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    return b;
}

WeightVector random_weights(const Network& net, Rng& rng) {
    WeightVector w = net.flatten();
    for (Eigen::Index k = 0; k < w.size(); ++k) w.values()(k) = rng.normal();
    return w;
}

}  // namespace

TEST_CASE("interpolate is affine with exact endpoints") {
    Rng rng(1);
    Network net = Network::mlp({3, 4, 1}, true, rng);
    WeightVector a = random_weights(net, rng);
    WeightVector b = random_weights(net, rng);

    WeightVector mid = interpolate(a, b, 0.3);
    for (Eigen::Index k = 0; k < a.size(); ++k)
        REQUIRE(mid.values()(k) ==
                Catch::Approx(0.7 * a.values()(k) + 0.3 * b.values()(k)).margin(1e-12));

    REQUIRE(interpolate(a, b, 0.0) == a);  // bitwise, no arithmetic on endpoints
    REQUIRE(interpolate(a, b, 1.0) == b);
    REQUIRE_THROWS_AS(interpolate(a, b, -0.1), ContractError);
    REQUIRE_THROWS_AS(interpolate(a, b, 1.1), ContractError);

    Network other = Network::mlp({3, 5, 1}, true, rng);
    REQUIRE_THROWS_AS(interpolate(a, other.flatten(), 0.5), ContractError);
}

TEST_CASE("merge_running is the running mean of the per-task solutions") {
    Rng rng(2);
    Network net = Network::mlp({2, 3, 1}, true, rng);

    std::vector<WeightVector> thetas;
    for (int t = 0; t < 5; ++t) thetas.push_back(random_weights(net, rng));

    WeightVector merged = thetas[0];
    WeightVector mean = thetas[0];
    for (int t = 2; t <= 5; ++t) {
        merged = merge_running(merged, thetas[static_cast<std::size_t>(t - 1)], t);
        mean = mean + thetas[static_cast<std::size_t>(t - 1)];
    }
    mean = mean * (1.0 / 5.0);
    for (Eigen::Index k = 0; k < mean.size(); ++k)
        REQUIRE(merged.values()(k) == Catch::Approx(mean.values()(k)).margin(1e-12));

    REQUIRE_THROWS_AS(merge_running(thetas[0], thetas[1], 1), ContractError);
    REQUIRE_THROWS_AS(merge_running(thetas[0], thetas[1], 0), ContractError);

    // dyadic coordinates merge without rounding: T=2 is an exact mean
    WeightVector p = thetas[0], q = thetas[1];
    p.values().setConstant(0.25);
    q.values().setConstant(0.75);
    WeightVector h = merge_running(p, q, 2);
    for (Eigen::Index k = 0; k < h.size(); ++k) REQUIRE(h.values()(k) == 0.5);
}

TEST_CASE("uniform_grid spans [0,1] with exact endpoints") {
    auto g = uniform_grid(21);
    REQUIRE(g.size() == 21);
    REQUIRE(g.front() == 0.0);
    REQUIRE(g.back() == 1.0);
    REQUIRE(g[10] == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(std::is_sorted(g.begin(), g.end()));
    REQUIRE_THROWS_AS(uniform_grid(1), ConfigError);
}

TEST_CASE("scan endpoints agree with direct evaluation and grids are validated") {
    Rng rng(3);
    Network net = Network::mlp({3, 5, 1}, true, rng);
    WeightVector a = random_weights(net, rng);
    WeightVector b = random_weights(net, rng);
    Batch prev1 = random_batch(3, 9, rng);
    Batch prev2 = random_batch(3, 7, rng);
    Batch cur = random_batch(3, 8, rng);

    PathScan s = scan(net, a, b, uniform_grid(5), {prev1, prev2}, cur);
    REQUIRE(s.rows.size() == 5);

    Batch prev_union = prev1;
    prev_union.append(prev2);
    Batch all = prev_union;
    all.append(cur);

    Network probe = net;
    probe.set_weights(a);
    REQUIRE(s.rows.front().acc_prev == evaluate(probe, prev_union));
    REQUIRE(s.rows.front().loss_all == loss_bce(probe, all));
    probe.set_weights(b);
    REQUIRE(s.rows.back().acc_cur == evaluate(probe, cur));
    REQUIRE(s.rows.back().loss_prev == loss_bce(probe, prev_union));

    REQUIRE_THROWS_AS(scan(net, a, b, {0.0, 0.9}, {prev1}, cur), ContractError);
    REQUIRE_THROWS_AS(scan(net, a, b, {0.0, 0.7, 0.3, 1.0}, {prev1}, cur), ContractError);
    REQUIRE_THROWS_AS(scan(net, a, b, uniform_grid(5), {}, cur), ContractError);
    REQUIRE_THROWS_AS(scan(net, a, b, uniform_grid(5), {Batch{}}, cur), ContractError);
}

TEST_CASE("scan rows are identical under thread fan-out") {
    Rng rng(4);
    Network net = Network::mlp({3, 6, 1}, true, rng);
    WeightVector a = random_weights(net, rng);
    WeightVector b = random_weights(net, rng);
    Batch prev = random_batch(3, 12, rng);
    Batch cur = random_batch(3, 10, rng);

    unsetenv("LMC_THREADS");
    PathScan serial = scan(net, a, b, uniform_grid(9), {prev}, cur);
    setenv("LMC_THREADS", "3", 1);
    PathScan threaded = scan(net, a, b, uniform_grid(9), {prev}, cur);
    unsetenv("LMC_THREADS");

    for (std::size_t k = 0; k < serial.rows.size(); ++k) {
        REQUIRE(serial.rows[k].lambda == threaded.rows[k].lambda);
        REQUIRE(serial.rows[k].acc_prev == threaded.rows[k].acc_prev);
        REQUIRE(serial.rows[k].acc_cur == threaded.rows[k].acc_cur);
        REQUIRE(serial.rows[k].acc_all == threaded.rows[k].acc_all);
        REQUIRE(serial.rows[k].loss_prev == threaded.rows[k].loss_prev);
        REQUIRE(serial.rows[k].loss_cur == threaded.rows[k].loss_cur);
        REQUIRE(serial.rows[k].loss_all == threaded.rows[k].loss_all);
    }
}

TEST_CASE("scan csv writes the g9 grid row per row") {
    Rng rng(5);
    Network net = Network::mlp({2, 3, 1}, true, rng);
    Batch prev = random_batch(2, 6, rng);
    Batch cur = random_batch(2, 6, rng);
    PathScan s = scan(net, random_weights(net, rng), random_weights(net, rng), uniform_grid(3),
                      {prev}, cur);
    std::string path = "scan_test_tmp.csv";
    save_scan_csv(s, path);
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    REQUIRE(header == "lambda,acc_prev,acc_cur,acc_all,loss_prev,loss_cur,loss_all");
    std::string line;
    int rows = 0;
    while (std::getline(is, line)) {
        if (!line.empty()) ++rows;
    }
    REQUIRE(rows == 3);
    std::remove(path.c_str());
}

TEST_CASE("forgetting_actual is the loss delta on the previous task") {
    Rng rng(6);
    Network net = Network::mlp({3, 4, 1}, true, rng);
    WeightVector before_w = random_weights(net, rng);
    WeightVector after_w = random_weights(net, rng);
    Batch prev = random_batch(3, 10, rng);

    Network probe = net;
    probe.set_weights(after_w);
    double after = loss_bce(probe, prev);
    probe.set_weights(before_w);
    double before = loss_bce(probe, prev);
    REQUIRE(forgetting_actual(net, before_w, after_w, prev) ==
            Catch::Approx(after - before).margin(1e-15));
}

TEST_CASE("kfac curvature operator reproduces the explicit kronecker quadratic") {
    Rng rng(7);
    Network net = Network::mlp({3, 4, 1}, true, rng);
    Batch data = random_batch(3, 8, rng);
    CurvatureSnapshot snap = collect_factors(net, data, 1e-3);

    WeightVector theta_t = snap.anchor;
    for (Eigen::Index k = 0; k < theta_t.size(); ++k) theta_t.values()(k) += rng.normal(0.0, 0.1);

    CurvatureOperator op = kfac_operator(snap);
    REQUIRE(op.tag == "kfac");
    double got = forgetting_quadratic(snap.anchor, theta_t, op);

    double expect = 0.0;
    for (std::size_t m = 0; m < net.layer_count(); ++m) {
        Eigen::MatrixXd dw = theta_t.weight(m) - snap.anchor.weight(m);
        Eigen::MatrixXd K = kron_explicit(snap.factors[m].Q, snap.factors[m].H);
        Eigen::Map<const Eigen::VectorXd> dv(dw.data(), dw.size());
        expect += 0.5 * dv.dot(K * dv);
    }
    REQUIRE(got == Catch::Approx(expect).epsilon(1e-10));

    // the curvature must be anchored exactly at theta_prev
    WeightVector off_anchor = snap.anchor;
    off_anchor.values()(0) += 1e-9;
    REQUIRE_THROWS_AS(forgetting_quadratic(off_anchor, theta_t, op), ContractError);
}

TEST_CASE("exact curvature operator matches hessian-vector products blockwise") {
    Rng rng(8);
    Network net = Network::mlp({2, 3, 1}, true, rng);
    Batch data = random_batch(2, 6, rng);
    CurvatureOperator op = exact_operator(net, data);
    REQUIRE(op.tag == "exact-oracle");
    REQUIRE(op.anchor == net.flatten());
    REQUIRE(op.layer_count == 2);

    for (std::size_t m = 0; m < 2; ++m) {
        Eigen::MatrixXd dw(net.layer(m).W.rows(), net.layer(m).W.cols());
        for (Eigen::Index j = 0; j < dw.cols(); ++j)
            for (Eigen::Index i = 0; i < dw.rows(); ++i) dw(i, j) = rng.normal();
        Eigen::MatrixXd hd = op.apply(m, dw);

        // embed the layer block in a zero full-space direction for the hvp
        const auto& blk = net.layout()->layers()[m];
        Eigen::VectorXd v = Eigen::VectorXd::Zero(net.flatten().size());
        v.segment(blk.w_offset, dw.size()) = Eigen::Map<const Eigen::VectorXd>(dw.data(),
                                                                               dw.size());
        Eigen::VectorXd hv = hvp_fd(net, data, v);
        for (Eigen::Index k = 0; k < dw.size(); ++k)
            REQUIRE(hd.data()[k] == Catch::Approx(hv(blk.w_offset + k)).margin(5e-4));
    }
}

TEST_CASE("forgetting_record carries its provenance fields") {
    Rng rng(9);
    Network net = Network::mlp({2, 3, 1}, true, rng);
    Batch data = random_batch(2, 8, rng);
    CurvatureSnapshot snap = collect_factors(net, data, 1e-3);
    WeightVector theta_t = snap.anchor;
    theta_t.values().array() += 0.05;

    ForgettingRecord rec =
        forgetting_record(net, 3, snap.anchor, theta_t, data, kfac_operator(snap));
    REQUIRE(rec.task == 3);
    REQUIRE(rec.curvature_source == "kfac");
    REQUIRE(rec.displacement_norm == Catch::Approx((theta_t - snap.anchor).norm()));
    REQUIRE(rec.actual == Catch::Approx(forgetting_actual(net, snap.anchor, theta_t, data)));
    REQUIRE(rec.estimated == Catch::Approx(forgetting_quadratic(snap.anchor, theta_t,
                                                                kfac_operator(snap))));
}

TEST_CASE("bound_check reduces to the closed form on scalar quadratics") {
    // two 1-d tasks with L_t(theta) = a_t (theta - c_t)^2, minima at c_t
    Rng rng(10);
    Network net = Network::mlp({1, 1}, false, rng);
    REQUIRE(net.flatten().size() == 1);

    auto wv = [&](double v) {
        WeightVector w = net.flatten();
        w.values()(0) = v;
        return w;
    };
    double a1 = 1.0, a2 = 3.0;
    double c1 = 0.0, c2 = 1.0;
    double star = 0.5;
    std::vector<WeightVector> minima = {wv(c1), wv(c2)};
    std::vector<double> at_star = {a1 * 0.25, a2 * 0.25};
    std::vector<double> at_minima = {0.0, 0.0};
    std::vector<double> lmax = {2 * a1, 2 * a2};  // curvature of a quadratic

    BoundCheck bc = bound_check(wv(star), minima, at_star, at_minima, lmax);
    REQUIRE(bc.lambda_max == 6.0);
    REQUIRE(bc.lhs == Catch::Approx(0.25 * (a1 + a2)).margin(1e-15));
    REQUIRE(bc.rhs == Catch::Approx(0.5 * 6.0 * (0.25 + 0.25)).margin(1e-15));
    REQUIRE(bc.holds);  // 1.0 <= 1.5

    // equal curvatures make the bound tight
    BoundCheck tight = bound_check(wv(star), minima, {0.25, 0.25}, at_minima, {2.0, 2.0});
    REQUIRE(tight.lhs == Catch::Approx(tight.rhs).margin(1e-12));
    REQUIRE(tight.holds);

    REQUIRE_THROWS_AS(bound_check(wv(star), minima, {0.1}, at_minima, lmax), ContractError);
    REQUIRE_THROWS_AS(bound_check(wv(star), {}, {}, {}, {}), ContractError);
}

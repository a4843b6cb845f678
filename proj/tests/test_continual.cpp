#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "lmc/replay.hpp"
#include "lmc/training.hpp"

using namespace lmc;

namespace {

TaskDataset make_task(int id, Eigen::Index dim, Eigen::Index n, Rng& rng) {
    TaskDataset t;
    t.id = id;
    t.train.inputs.resize(dim, n);
    t.train.labels.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < dim; ++i) t.train.inputs(i, j) = rng.normal();
        t.train.labels(j) = j % 2 == 0 ? 1.0 : 0.0;
    }
    t.test = t.train;
    return t;
}

std::map<int, int> per_task_counts(const ReplayBuffer& buffer) {
    std::map<int, int> counts;
    for (const auto& e : buffer.entries()) counts[e.task]++;
    return counts;
}

AugmentationSpec zero_aug() {
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

}  // namespace

TEST_CASE("replay splits capacity evenly with the remainder to earliest tasks") {
    Rng data_rng(1), rng(2);
    ReplayBuffer buffer(10);
    buffer.update(make_task(1, 2, 8, data_rng), rng);
    REQUIRE(buffer.size() == 8);  // quota 10, take all
    REQUIRE(buffer.contains_task(1));

    buffer.update(make_task(2, 2, 8, data_rng), rng);
    auto counts = per_task_counts(buffer);
    REQUIRE(counts[1] == 5);
    REQUIRE(counts[2] == 5);

    buffer.update(make_task(3, 2, 8, data_rng), rng);
    counts = per_task_counts(buffer);
    // capacity 10 over 3 tasks: base 3, remainder 1 to the earliest id
    REQUIRE(counts[1] == 4);
    REQUIRE(counts[2] == 3);
    REQUIRE(counts[3] == 3);
    REQUIRE(buffer.size() == 10);
}

TEST_CASE("replay selection reproduces the reference sampler draw for draw") {
    Rng data_rng(3);
    TaskDataset t1 = make_task(1, 3, 6, data_rng);
    ReplayBuffer buffer(4);
    Rng rng(7), oracle(7);
    buffer.update(t1, rng);

    auto pick = oracle.sample_without_replacement(6, 4);
    auto entries = buffer.entries();
    REQUIRE(entries.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
        REQUIRE(entries[k].x == t1.train.inputs.col(static_cast<Eigen::Index>(pick[k])));
        REQUIRE(entries[k].y == t1.train.labels(static_cast<Eigen::Index>(pick[k])));
    }
}

TEST_CASE("replay take-all path consumes no randomness") {
    Rng data_rng(4);
    TaskDataset small = make_task(1, 2, 3, data_rng);
    ReplayBuffer buffer(10);
    Rng rng(9), witness(9);
    buffer.update(small, rng);
    REQUIRE(rng.next_u64() == witness.next_u64());

    // stored in column order
    auto entries = buffer.entries();
    for (std::size_t k = 0; k < 3; ++k)
        REQUIRE(entries[k].x == small.train.inputs.col(static_cast<Eigen::Index>(k)));
}

TEST_CASE("replay guards its contracts") {
    REQUIRE_THROWS_AS(ReplayBuffer(0), ConfigError);
    Rng data_rng(5), rng(6);
    ReplayBuffer buffer(8);
    TaskDataset t = make_task(1, 2, 4, data_rng);
    buffer.update(t, rng);
    REQUIRE_THROWS_AS(buffer.update(t, rng), ContractError);

    Batch b = buffer.as_batch();
    REQUIRE(b.size() == 4);
    REQUIRE(b.dim() == 2);
    REQUIRE(b.inputs.col(0) == t.train.inputs.col(0));
}

TEST_CASE("ewc penalty and gradient match the elementwise loop") {
    Rng rng(8);
    Eigen::Index n = 12;
    Eigen::VectorXd fisher(n), anchor(n), theta(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        fisher(i) = std::abs(rng.normal());
        anchor(i) = rng.normal();
        theta(i) = rng.normal();
    }
    double strength = 50.0;
    double expect = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double d = theta(i) - anchor(i);
        expect += 0.5 * strength * fisher(i) * d * d;
    }
    REQUIRE(ewc_penalty(fisher, anchor, theta, strength) == Catch::Approx(expect).epsilon(1e-14));
    REQUIRE(ewc_penalty(fisher, anchor, anchor, strength) == 0.0);

    Eigen::VectorXd g = ewc_grad(fisher, anchor, theta, strength);
    double eps = 1e-6;
    for (Eigen::Index i = 0; i < n; i += 3) {
        Eigen::VectorXd hi = theta, lo = theta;
        hi(i) += eps;
        lo(i) -= eps;
        double fd = (ewc_penalty(fisher, anchor, hi, strength) -
                     ewc_penalty(fisher, anchor, lo, strength)) / (2 * eps);
        REQUIRE(g(i) == Catch::Approx(fd).margin(1e-6));
    }
    REQUIRE_THROWS_AS(ewc_penalty(fisher.head(3), anchor, theta, strength), ContractError);
}

TEST_CASE("loss_ac recomposes from its per-batch terms") {
    Rng rng(10);
    Network net = Network::mlp({3, 5, 1}, true, rng);
    Batch batch;
    batch.inputs.resize(3, 6);
    batch.labels.resize(6);
    for (Eigen::Index j = 0; j < 6; ++j) {
        for (Eigen::Index i = 0; i < 3; ++i) batch.inputs(i, j) = rng.normal();
        batch.labels(j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    AugmentationSpec spec;
    Rng chain_rng(11);
    AcBatches batches = draw_ac_batches(batch, spec, Representation::vector, chain_rng);
    double lambda = 0.2;
    double expect = loss_bce(net, batches.clean);
    for (const auto& b : batches.aug) expect += lambda * loss_bce(net, b);
    REQUIRE(loss_ac(net, batches, lambda) == Catch::Approx(expect).epsilon(1e-14));

    // identity chains collapse the loss to (1 + 3 lambda) L_cls
    AugmentationSpec zero = zero_aug();
    Rng id_rng(12);
    double ac = loss_ac(net, batch, zero, lambda, Representation::vector, id_rng);
    REQUIRE(ac == Catch::Approx((1.0 + 3 * lambda) * loss_bce(net, batch)).epsilon(1e-12));

    // lambda 0 short-circuits to the plain loss
    Rng z_rng(13);
    REQUIRE(loss_ac(net, batch, spec, 0.0, Representation::vector, z_rng) ==
            loss_bce(net, batch));
}

TEST_CASE("step_grads gradient matches finite differences of loss_total") {
    Rng rng(14);
    Network net = Network::mlp({2, 4, 1}, true, rng);
    Batch batch;
    batch.inputs.resize(2, 5);
    batch.labels.resize(5);
    for (Eigen::Index j = 0; j < 5; ++j) {
        batch.inputs.col(j) << rng.normal(), rng.normal();
        batch.labels(j) = j % 2;
    }
    CurvatureSnapshot snap = collect_factors(net, batch, 1e-3);
    snap.fisher_diag = fisher_diag(net, batch);
    // anchor away from the current weights so every penalty is active
    snap.anchor.values().array() += 0.3;

    StrategyConfig strategy;
    strategy.use_ac = true;
    strategy.use_kfac = true;
    strategy.use_ewc = true;
    AugmentationSpec aug;

    const std::uint64_t chain_seed = 55;
    Rng g_rng(chain_seed);
    StepGrads sg = step_grads(net, batch, aug, &snap, strategy, Representation::vector, g_rng);

    WeightVector theta = net.flatten();
    double eps = 1e-6;
    for (Eigen::Index i = 0; i < theta.size(); i += 2) {
        auto eval = [&](double delta) {
            WeightVector t2 = theta;
            t2.values()(i) += delta;
            Network n2 = net;
            n2.set_weights(t2);
            Rng fd_rng(chain_seed);  // identical chain draws per evaluation
            return loss_total(n2, batch, aug, &snap, strategy, Representation::vector, fd_rng)
                .total();
        };
        double fd = (eval(eps) - eval(-eps)) / (2 * eps);
        REQUIRE(sg.grads.values()(i) == Catch::Approx(fd).margin(2e-5));
    }
}

TEST_CASE("penalties vanish at the snapshot anchor") {
    Rng rng(16);
    Network net = Network::mlp({2, 3, 1}, true, rng);
    Batch batch;
    batch.inputs.resize(2, 4);
    batch.labels.resize(4);
    for (Eigen::Index j = 0; j < 4; ++j) {
        batch.inputs.col(j) << rng.normal(), rng.normal();
        batch.labels(j) = j % 2;
    }
    CurvatureSnapshot snap = collect_factors(net, batch, 1e-3);
    snap.fisher_diag = fisher_diag(net, batch);

    StrategyConfig strategy;
    strategy.use_kfac = true;
    strategy.use_ewc = true;
    Rng s_rng(1);
    LossComponents lc =
        loss_total(net, batch, zero_aug(), &snap, strategy, Representation::vector, s_rng);
    REQUIRE(lc.kfac == 0.0);
    REQUIRE(lc.ewc == 0.0);
}

TEST_CASE("kfac accumulate mode sums per-snapshot quadratics") {
    Rng rng(17);
    Network net = Network::mlp({2, 3, 1}, true, rng);
    Batch batch;
    batch.inputs.resize(2, 6);
    batch.labels.resize(6);
    for (Eigen::Index j = 0; j < 6; ++j) {
        batch.inputs.col(j) << rng.normal(), rng.normal();
        batch.labels(j) = j % 2;
    }
    CurvatureSnapshot s1 = collect_factors(net, batch, 1e-3);
    s1.anchor.values().array() += 0.2;
    CurvatureSnapshot s2 = collect_factors(net, batch, 1e-2);
    s2.anchor.values().array() -= 0.1;

    StrategyConfig strategy;
    strategy.use_kfac = true;
    WeightVector theta = net.flatten();

    Rng r1(1), r2(1), r3(1);
    double single1 =
        loss_total(net, batch, zero_aug(), &s1, strategy, Representation::vector, r1).kfac;
    double single2 =
        loss_total(net, batch, zero_aug(), &s2, strategy, Representation::vector, r2).kfac;
    std::vector<const CurvatureSnapshot*> both = {&s1, &s2};
    StepGrads sum = step_grads(net, batch, zero_aug(), both, strategy,
                               Representation::vector, r3);
    REQUIRE(sum.loss.kfac == Catch::Approx(single1 + single2).epsilon(1e-12));
}

TEST_CASE("step_grads enforces snapshot preconditions") {
    Rng rng(18);
    Network net = Network::mlp({2, 3, 1}, true, rng);
    Batch batch;
    batch.inputs.resize(2, 2);
    batch.inputs.setOnes();
    batch.labels.resize(2);
    batch.labels << 0, 1;

    StrategyConfig strategy;
    strategy.use_kfac = true;
    Rng r(1);
    REQUIRE_THROWS_AS(
        step_grads(net, batch, zero_aug(), nullptr, strategy, Representation::vector, r),
        ContractError);

    strategy.use_kfac = false;
    strategy.use_ewc = true;
    CurvatureSnapshot no_fisher = collect_factors(net, batch, 1e-3);
    REQUIRE_THROWS_AS(
        step_grads(net, batch, zero_aug(), &no_fisher, strategy, Representation::vector, r),
        ContractError);
}

TEST_CASE("sequential train_task reproduces a hand-rolled adam-bce loop") {
    Rng rng(20);
    Network net = Network::mlp({2, 3, 1}, true, rng);
    Rng data_rng(21);
    TaskDataset task = make_task(1, 2, 8, data_rng);

    StrategyConfig strategy;
    strategy.sequential = true;
    strategy.epochs = 2;
    strategy.batch_size = 4;
    strategy.lr = 0.05;

    WeightVector theta0 = net.flatten();
    Rng t_rng(22);
    WeightVector got = train_task(net, theta0, task, nullptr, nullptr, strategy,
                                  zero_aug(), Representation::vector, t_rng);

    // reference loop with the identical shuffle and update sequence
    Network ref_net = net;
    ref_net.set_weights(theta0);
    Rng r_rng(22);
    AdamState adam;
    std::vector<Eigen::Index> order = {0, 1, 2, 3, 4, 5, 6, 7};
    for (int epoch = 0; epoch < 2; ++epoch) {
        r_rng.shuffle(order);
        for (std::size_t pos = 0; pos < order.size(); pos += 4) {
            std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                          order.begin() + static_cast<std::ptrdiff_t>(pos + 4));
            Batch b = task.train.select(idx);
            WeightVector g = backward(ref_net, b).grads;
            WeightVector th = ref_net.flatten();
            adam_step(adam, th, g, 0.05);
            ref_net.set_weights(th);
        }
    }
    REQUIRE(got == ref_net.flatten());
}

TEST_CASE("train_task with a tiny lr stays near the initial weights") {
    Rng rng(23);
    Network net = Network::mlp({2, 4, 1}, true, rng);
    Rng data_rng(24);
    TaskDataset task = make_task(1, 2, 8, data_rng);
    StrategyConfig strategy;
    strategy.sequential = true;
    strategy.epochs = 1;
    strategy.lr = 1e-12;
    WeightVector theta0 = net.flatten();
    Rng t_rng(25);
    WeightVector out = train_task(net, theta0, task, nullptr, nullptr, strategy,
                                  zero_aug(), Representation::vector, t_rng);
    // adam moves at most ~lr per coordinate per step
    REQUIRE((out - theta0).norm() < 1e-9);
}

TEST_CASE("train_task logs one record per step with the component split") {
    Rng rng(26);
    Network net = Network::mlp({2, 3, 1}, true, rng);
    Rng data_rng(27);
    TaskDataset task = make_task(4, 2, 8, data_rng);
    CurvatureSnapshot snap = collect_factors(net, task.train, 1e-3);

    StrategyConfig strategy;
    strategy.use_kfac = true;
    strategy.use_ac = true;
    strategy.epochs = 3;
    strategy.batch_size = 4;
    strategy.lr = 0.01;

    StepLog log;
    Rng t_rng(28);
    train_task(net, net.flatten(), task, nullptr, &snap, strategy, zero_aug(),
               Representation::vector, t_rng, &log);
    REQUIRE(log.size() == 3 * 2);
    REQUIRE(log.front().task == 4);
    REQUIRE(log.front().epoch == 0);
    REQUIRE(log.back().epoch == 2);
    REQUIRE(log.back().step == 1);
    // first step sits at the anchor: kfac starts at zero then engages
    REQUIRE(log.front().loss_kfac == 0.0);
    bool kfac_active = false;
    for (const auto& r : log)
        if (r.loss_kfac > 0.0) kfac_active = true;
    REQUIRE(kfac_active);
    // identity chains mean the ac extra equals 3 lambda times the cls term
    REQUIRE(log.front().loss_ac_extra ==
            Catch::Approx(3 * strategy.lambda_ac * log.front().loss_cls).epsilon(1e-12));
}

TEST_CASE("strategy validation rejects incoherent mode combinations") {
    StrategyConfig s;
    s.sequential = true;
    s.joint_retrain = true;
    REQUIRE_THROWS_AS(validate(s), ConfigError);
    s = StrategyConfig{};
    s.sequential = true;
    s.use_kfac = true;
    REQUIRE_THROWS_AS(validate(s), ConfigError);
    s = StrategyConfig{};
    s.trigger_threshold = 1.0;
    REQUIRE_THROWS_AS(validate(s), ConfigError);
    s = StrategyConfig{};
    REQUIRE_NOTHROW(validate(s));
    REQUIRE(strategy_tag(s) == "plain");
    s.use_kfac = true;
    s.use_ac = true;
    s.use_linear_merge = true;
    REQUIRE(strategy_tag(s) == "kfac+ac+linear");
    s = StrategyConfig{};
    s.sequential = true;
    REQUIRE(strategy_tag(s) == "sequential");
}

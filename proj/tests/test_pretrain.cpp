#include <doctest.h>

#include <cmath>
#include <set>

#include "trajrep/pretrain.hpp"
#include "trajrep/synthetic.hpp"
#include "testutil.hpp"

using namespace trajrep;
using test::random_matrix;
using test::ring_network;
using test::ring_trajectory;

TEST_CASE("span mask totals and span structure") {
    RoadNetwork net = ring_network(30);
    Rng rng(31);

    SUBCASE("|T|=20, p_m=0.15, l_m=2 -> 3 positions as spans {2,1}") {
        Trajectory t = ring_trajectory(30, 20, 0, 10);
        for (int trial = 0; trial < 50; ++trial) {
            MaskedSample ms = span_mask(t, 0.15, 2, rng);
            CHECK(ms.positions.size() == 3);
            // Contiguous runs must have length <= 2 and decompose as 2 + 1.
            std::vector<int> runs;
            int run = 1;
            for (std::size_t i = 1; i <= ms.positions.size(); ++i) {
                if (i < ms.positions.size() && ms.positions[i] == ms.positions[i - 1] + 1) {
                    ++run;
                } else {
                    runs.push_back(run);
                    run = 1;
                }
            }
            int total = 0;
            for (int r : runs) total += r;
            CHECK(total == 3);
            // Spans were placed as one 2-run and one 1-run; adjacent placement
            // may merge them into a single 3-run, which is still two spans.
            CHECK(runs.size() <= 2 + 1);
        }
    }

    SUBCASE("|T|=6, p_m=0.15 -> exactly 1 masked position") {
        Trajectory t = ring_trajectory(30, 6, 0, 10);
        MaskedSample ms = span_mask(t, 0.15, 2, rng);
        CHECK(ms.positions.size() == 1);
    }

    SUBCASE("masked targets align with original roads") {
        Trajectory t = ring_trajectory(30, 12, 0, 10);
        MaskedSample ms = span_mask(t, 0.25, 2, rng);
        for (std::size_t k = 0; k < ms.positions.size(); ++k) {
            CHECK(ms.original_roads[k] ==
                  t.roads[static_cast<std::size_t>(ms.positions[k])]);
            CHECK(ms.masked[static_cast<std::size_t>(ms.positions[k])]);
        }
    }

    SUBCASE("masked encoder item carries MASK and MASKT tokens") {
        Trajectory t = ring_trajectory(30, 10, 1446422400, 30);
        MaskedSample ms = span_mask(t, 0.2, 2, rng);
        TokenIds ids{30};
        EncoderItem item = make_encoder_item(t, ids, &ms.masked);
        for (int p : ms.positions) {
            CHECK(item.token_ids[static_cast<std::size_t>(p + 1)] == ids.mask());
            CHECK(item.minute_ids[static_cast<std::size_t>(p + 1)] == 0);
            CHECK(item.day_ids[static_cast<std::size_t>(p + 1)] == 0);
        }
    }

    SUBCASE("preconditions") {
        Trajectory t = ring_trajectory(30, 1, 0, 10);
        CHECK_THROWS_AS(span_mask(t, 0.15, 2, rng), ValidationError);
        Trajectory t2 = ring_trajectory(30, 10, 0, 10);
        CHECK_THROWS_AS(span_mask(t2, 0.0, 2, rng), ValidationError);
        CHECK_THROWS_AS(span_mask(t2, 0.15, 0, rng), ValidationError);
    }
}

TEST_CASE("masked recovery loss oracles") {
    SUBCASE("uniform zero logits over 24 roads -> ln 24") {
        ad::Tape t;
        Mat z = Mat::Zero(1, 4);  // one item, d=4
        Mat w = Mat::Zero(4, 24);
        Mat b = Mat::Zero(1, 24);
        ad::Var zv = t.leaf(&z);
        ad::Var loss = masked_recovery_loss(t, {zv}, {{0}}, {{5}}, t.leaf(&w), t.leaf(&b));
        CHECK(t.val(loss)(0, 0) == doctest::Approx(3.1780538303479458).epsilon(1e-12));
    }

    SUBCASE("saturated logits -> loss near 0; always nonnegative") {
        ad::Tape t;
        Mat z = Mat::Ones(1, 1);
        Mat w = Mat::Zero(1, 4);
        w(0, 2) = 60.0;  // true class at +60, others 0
        Mat b(1, 4);
        b << -0.0, 0.0, 0.0, 0.0;
        ad::Var loss = masked_recovery_loss(t, {t.leaf(&z)}, {{0}}, {{2}}, t.leaf(&w), t.leaf(&b));
        CHECK(t.val(loss)(0, 0) >= 0.0);
        CHECK(t.val(loss)(0, 0) < 1e-9);
    }

    SUBCASE("2-road vocabulary, logits [1,0], true=0 -> ln(1+e^-1)") {
        ad::Tape t;
        Mat z = Mat::Ones(1, 1);
        Mat w(1, 2);
        w << 1.0, 0.0;
        Mat b = Mat::Zero(1, 2);
        ad::Var loss = masked_recovery_loss(t, {t.leaf(&z)}, {{0}}, {{0}}, t.leaf(&w), t.leaf(&b));
        CHECK(t.val(loss)(0, 0) == doctest::Approx(0.31326168751822286).epsilon(1e-12));
    }

    SUBCASE("empty mask set is an error") {
        ad::Tape t;
        Mat z = Mat::Zero(1, 4);
        Mat w = Mat::Zero(4, 8);
        Mat b = Mat::Zero(1, 8);
        ad::Var zv = t.leaf(&z);
        CHECK_THROWS_AS(masked_recovery_loss(t, {zv}, {{}}, {{}}, t.leaf(&w), t.leaf(&b)),
                        ValidationError);
    }
}

TEST_CASE("augmentations") {
    RoadNetwork net = ring_network(40);
    TrajectoryDataset ds;
    ds.network = &net;
    ds.trajectories.push_back(ring_trajectory(40, 20, 0, 100));
    HistoricalTravelTimes hist = historical_travel_times(ds);
    AugmentContext ctx;
    ctx.hist = &hist;

    SUBCASE("trim removes round(r1 |T|) roads from one end") {
        Trajectory t = ring_trajectory(40, 20, 0, 100);
        Rng rng(5);
        for (int i = 0; i < 50; ++i) {
            AugmentedView v = augment(t, AugmentStrategy::trim, ctx, rng);
            const int k = 20 - v.traj.length();
            CHECK(k >= 1);  // round(r1 * 20) with r1 in [0.05, 0.15]
            CHECK(k <= 3);
            const bool from_origin = v.traj.roads.front() != t.roads.front();
            if (from_origin) {
                CHECK(v.traj.roads.front() == t.roads[static_cast<std::size_t>(k)]);
            } else {
                CHECK(v.traj.roads.back() == t.roads[t.roads.size() - 1 - static_cast<std::size_t>(k)]);
            }
            v.traj.validate(net);  // contiguous subsequence stays adjacent
        }
    }

    SUBCASE("temporal shift: gap formula and monotonicity") {
        // t_his for every road is 100s (uniform corpus). Build one trajectory
        // with a 200s gap everywhere; perturbed gaps must be
        // 200 - (200 - 100) * r3 in [170, 185].
        Trajectory t = ring_trajectory(40, 10, 0, 200);
        Rng rng(6);
        AugmentedView v = augment(t, AugmentStrategy::temporal_shift, ctx, rng);
        v.traj.validate(net);
        int changed = 0;
        for (std::size_t i = 0; i + 1 < v.traj.times.size(); ++i) {
            const double gap = static_cast<double>(v.traj.times[i + 1] - v.traj.times[i]);
            CHECK(gap <= 200.0);
            if (gap < 200.0) {
                ++changed;
                CHECK(gap >= 169.0);
                CHECK(gap <= 186.0);
            }
        }
        CHECK(changed >= 1);  // r2 = 0.15 of 10 roads, at least one gap shifted
    }

    SUBCASE("temporal shift arithmetic: 100s gap, 60s historical, r3=0.25 -> 90s") {
        const double t_cur = 100.0;
        const double t_his = 60.0;
        const double r3 = 0.25;
        CHECK(t_cur - (t_cur - t_his) * r3 == doctest::Approx(90.0));
    }

    SUBCASE("segment mask carries flags; dropout flags tokens") {
        Trajectory t = ring_trajectory(40, 12, 0, 100);
        Rng rng(7);
        AugmentedView v = augment(t, AugmentStrategy::segment_mask, ctx, rng);
        CHECK(v.traj.roads == t.roads);
        CHECK(std::count(v.masked.begin(), v.masked.end(), true) == 2);  // round(0.15*12)

        AugmentedView d = augment(t, AugmentStrategy::dropout, ctx, rng);
        CHECK(d.traj.roads == t.roads);
        CHECK(d.dropped.size() == t.roads.size());
    }

    SUBCASE("short trajectories are rejected") {
        Trajectory t = ring_trajectory(40, 5, 0, 100);
        Rng rng(8);
        CHECK_THROWS_AS(augment(t, AugmentStrategy::trim, ctx, rng), ValidationError);
    }
}

TEST_CASE("nt-xent oracles and properties") {
    SUBCASE("orthogonal 2-pair example at tau=1") {
        ad::Tape t;
        Mat reps(4, 2);
        reps << 1, 0, 1, 0, 0, 1, 0, 1;  // e1, e1, e2, e2
        ad::Var loss = nt_xent_loss(t, t.leaf(&reps), {1, 0, 3, 2}, 1.0);
        CHECK(t.val(loss)(0, 0) == doctest::Approx(0.5514447139320511).epsilon(1e-9));
    }

    SUBCASE("all representations identical -> ln(2N-1)") {
        ad::Tape t;
        Mat reps = Mat::Ones(4, 3);
        ad::Var loss = nt_xent_loss(t, t.leaf(&reps), {1, 0, 3, 2}, 0.5);
        CHECK(t.val(loss)(0, 0) == doctest::Approx(std::log(3.0)).epsilon(1e-9));
    }

    SUBCASE("cosine similarity: positive scaling leaves the loss unchanged") {
        Rng rng(9);
        Mat reps = random_matrix(6, 4, rng);
        ad::Tape t;
        ad::Var l1 = nt_xent_loss(t, t.leaf(&reps), {1, 0, 3, 2, 5, 4}, 0.3);
        Mat scaled = reps;
        scaled.row(2) *= 17.0;
        scaled.row(5) *= 0.01;
        ad::Var l2 = nt_xent_loss(t, t.leaf(&scaled), {1, 0, 3, 2, 5, 4}, 0.3);
        CHECK(t.val(l1)(0, 0) == doctest::Approx(t.val(l2)(0, 0)).epsilon(1e-12));
    }

    SUBCASE("N_b = 1 is rejected") {
        ad::Tape t;
        Mat reps = Mat::Ones(2, 3);
        CHECK_THROWS_AS(nt_xent_loss(t, t.leaf(&reps), {1, 0}, 1.0), ValidationError);
    }

    SUBCASE("gradient matches finite differences on N_b=2, d=4") {
        Rng rng(10);
        Mat reps = random_matrix(4, 4, rng);
        const std::vector<int> pos{1, 0, 3, 2};
        auto loss = [&]() {
            ad::Tape t;
            return t.val(nt_xent_loss(t, t.leaf(&reps), pos, 0.05))(0, 0);
        };
        ad::Tape t;
        ad::Var v = t.leaf(&reps);
        t.backward(nt_xent_loss(t, v, pos, 0.05));
        CHECK(test::max_grad_error(reps, t.grad_view(v), loss) < 1.0);
    }
}

TEST_CASE("pretrain smoke: loss drops and runs deterministically") {
    RoadNetwork net = generate_synthetic_network(4, 77);
    SyntheticConfig sc;
    sc.grid_n = 4;
    TrajectoryDataset all = generate_synthetic_trajectories(net, 80, 77, sc);
    DatasetSplits splits = chronological_split(all, {0.6, 0.2, 0.2});
    TransferMatrix tm = compute_transfer_probabilities(net, splits.train.trajectories);
    NetworkContext ctx = NetworkContext::build(net, tm);
    HistoricalTravelTimes hist = historical_travel_times(splits.train);

    ModelConfig mc;
    mc.d = 16;
    mc.gat = GatConfig{{2, 1}, {4, 16}};
    mc.enc_layers = 1;
    mc.enc_heads = 2;

    PretrainConfig pc;
    pc.batch_size = 16;
    pc.epochs = 4;
    pc.lr = 2e-3;
    pc.warmup_epochs = 1;
    pc.seed = 5;

    auto run_once = [&]() {
        TrajModel model(mc, static_cast<int>(ctx.features.cols()), net.vertex_count(),
                        TrajModel::Head::masked_recovery, 0, Rng(pc.seed).derive("init"));
        AdamW opt(model.store(), pc.weight_decay);
        return run_pretraining(model, opt, ctx, splits.train, &splits.val, pc, {}, hist);
    };
    PretrainResult r1 = run_once();
    REQUIRE(r1.epochs.size() == 4);
    CHECK(r1.epochs.back().loss_pre < r1.epochs.front().loss_pre);
    CHECK(std::isfinite(r1.val_masked_accuracy));

    PretrainResult r2 = run_once();
    for (std::size_t e = 0; e < r1.epochs.size(); ++e) {
        CHECK(r1.epochs[e].loss_pre == r2.epochs[e].loss_pre);  // bitwise determinism
    }
    CHECK(r1.val_masked_accuracy == r2.val_masked_accuracy);
}

TEST_CASE("lambda=1 removes the contrastive gradient") {
    RoadNetwork net = ring_network(12);
    TransferMatrix tm;
    tm.probs = Eigen::SparseMatrix<double>(12, 12);
    NetworkContext ctx = NetworkContext::build(net, tm);
    TrajectoryDataset ds;
    ds.network = &net;
    ds.trajectories.push_back(ring_trajectory(12, 8, 0, 50, "a"));
    ds.trajectories.push_back(ring_trajectory(12, 8, 1000, 70, "b", 3));
    HistoricalTravelTimes hist = historical_travel_times(ds);

    ModelConfig mc;
    mc.d = 8;
    mc.gat = GatConfig{{1}, {8}};
    mc.enc_layers = 1;
    mc.enc_heads = 2;
    mc.dropout = 0.0;
    TrajModel model(mc, static_cast<int>(ctx.features.cols()), 12,
                    TrajModel::Head::masked_recovery, 0, Rng(3).derive("init"));

    PretrainConfig pc;
    pc.lambda = 1.0;
    pc.seed = 9;
    std::vector<const Trajectory*> batch{&ds.trajectories[0], &ds.trajectories[1]};
    PretrainStepData data = prepare_pretrain_step(batch, model.token_ids(), pc, hist, Rng(9), 0,
                                                  {0, 1});

    // Gradients of the combined loss with lambda=1 equal the masked-only path.
    ad::Tape t1;
    BoundModel b1 = model.bind(t1);
    StepLossVars l1 = build_pretrain_loss(t1, model, b1, ctx, data, pc, {}, false, nullptr);
    t1.backward(l1.pre);

    ad::Tape t2;
    BoundModel b2 = model.bind(t2);
    StepLossVars l2 = build_pretrain_loss(t2, model, b2, ctx, data, pc, {}, false, nullptr);
    t2.backward(l2.mask);

    for (std::size_t p = 0; p < model.store().count(); ++p) {
        const Mat& g1 = t1.grad_view(b1.leaves[p]);
        const Mat& g2 = t2.grad_view(b2.leaves[p]);
        const double n1 = g1.size() ? g1.norm() : 0.0;
        const double n2 = g2.size() ? g2.norm() : 0.0;
        CHECK(std::abs(n1 - n2) < 1e-12);
    }
}

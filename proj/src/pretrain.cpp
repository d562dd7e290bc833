#include "trajrep/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace trajrep {

MaskedSample span_mask(const Trajectory& traj, double p_m, int l_m, Rng& rng) {
    const int len = traj.length();
    if (len < 2) throw ValidationError("span_mask: trajectory must have at least 2 roads");
    if (p_m <= 0.0 || p_m >= 1.0) throw ValidationError("span_mask: p_m must be in (0,1)");
    if (l_m < 1) throw ValidationError("span_mask: l_m must be >= 1");

    const int total = std::max(1L, std::lround(p_m * static_cast<double>(len)));
    std::vector<int> span_sizes(static_cast<std::size_t>(total / l_m), l_m);
    if (total % l_m != 0) span_sizes.push_back(total % l_m);

    MaskedSample out;
    out.masked.assign(static_cast<std::size_t>(len), false);
    bool placed = true;
    for (int attempt = 0; attempt < 200; ++attempt) {
        std::fill(out.masked.begin(), out.masked.end(), false);
        placed = true;
        for (int size : span_sizes) {
            bool span_ok = false;
            for (int tries = 0; tries < 200 && !span_ok; ++tries) {
                const int start = static_cast<int>(rng.uniform_int(len - size + 1));
                bool overlap = false;
                for (int i = start; i < start + size; ++i) {
                    if (out.masked[static_cast<std::size_t>(i)]) {
                        overlap = true;
                        break;
                    }
                }
                if (!overlap) {
                    for (int i = start; i < start + size; ++i) out.masked[static_cast<std::size_t>(i)] = true;
                    span_ok = true;
                }
            }
            if (!span_ok) {
                placed = false;
                break;
            }
        }
        if (placed) break;
    }
    if (!placed) {
        // Too short to place the requested spans: mask a single position.
        std::fill(out.masked.begin(), out.masked.end(), false);
        out.masked[static_cast<std::size_t>(rng.uniform_int(len))] = true;
    }
    for (int i = 0; i < len; ++i) {
        if (out.masked[static_cast<std::size_t>(i)]) {
            out.positions.push_back(i);
            out.original_roads.push_back(traj.roads[static_cast<std::size_t>(i)]);
        }
    }
    return out;
}

AugmentStrategy parse_augment_strategy(const std::string& name) {
    if (name == "trim") return AugmentStrategy::trim;
    if (name == "temporal_shift") return AugmentStrategy::temporal_shift;
    if (name == "segment_mask") return AugmentStrategy::segment_mask;
    if (name == "dropout") return AugmentStrategy::dropout;
    throw ConfigError("unknown augmentation strategy: " + name);
}

std::string augment_strategy_name(AugmentStrategy s) {
    switch (s) {
        case AugmentStrategy::trim: return "trim";
        case AugmentStrategy::temporal_shift: return "temporal_shift";
        case AugmentStrategy::segment_mask: return "segment_mask";
        case AugmentStrategy::dropout: return "dropout";
    }
    return "?";
}

namespace {

AugmentedView dropout_view(const Trajectory& traj, double prob, Rng& rng) {
    AugmentedView v;
    v.traj = traj;
    v.strategy = AugmentStrategy::dropout;
    v.dropped.assign(traj.roads.size(), false);
    for (std::size_t i = 0; i < traj.roads.size(); ++i) v.dropped[i] = rng.bernoulli(prob);
    return v;
}

} // namespace

AugmentedView augment(const Trajectory& traj, AugmentStrategy strategy,
                      const AugmentContext& ctx, Rng& rng) {
    const int len = traj.length();
    if (len < kMinTrajectoryLen) {
        throw ValidationError("augment: trajectory shorter than " +
                              std::to_string(kMinTrajectoryLen));
    }
    switch (strategy) {
        case AugmentStrategy::trim: {
            const double r1 = rng.uniform(0.05, 0.15);
            const int k = static_cast<int>(std::lround(r1 * static_cast<double>(len)));
            if (len - k < 2) return dropout_view(traj, ctx.token_drop_prob, rng);
            const bool from_origin = rng.bernoulli(0.5);
            AugmentedView v;
            v.strategy = AugmentStrategy::trim;
            v.traj = traj;
            if (k > 0) {
                if (from_origin) {
                    v.traj.roads.erase(v.traj.roads.begin(), v.traj.roads.begin() + k);
                    v.traj.times.erase(v.traj.times.begin(), v.traj.times.begin() + k);
                } else {
                    v.traj.roads.resize(v.traj.roads.size() - static_cast<std::size_t>(k));
                    v.traj.times.resize(v.traj.times.size() - static_cast<std::size_t>(k));
                }
            }
            return v;
        }
        case AugmentStrategy::temporal_shift: {
            if (!ctx.hist) throw ValidationError("augment: temporal_shift needs historical times");
            AugmentedView v;
            v.strategy = AugmentStrategy::temporal_shift;
            v.traj = traj;
            const int gaps = len - 1;
            int count = static_cast<int>(std::lround(0.15 * static_cast<double>(len)));
            count = std::clamp(count, 1, gaps);
            std::vector<int> order(static_cast<std::size_t>(gaps));
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(order);
            std::vector<bool> selected(static_cast<std::size_t>(gaps), false);
            for (int i = 0; i < count; ++i) selected[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

            std::vector<double> gap(static_cast<std::size_t>(gaps));
            for (int i = 0; i < gaps; ++i) {
                const double cur = static_cast<double>(traj.times[static_cast<std::size_t>(i) + 1] -
                                                       traj.times[static_cast<std::size_t>(i)]);
                if (selected[static_cast<std::size_t>(i)]) {
                    const double r3 = rng.uniform(0.15, 0.30);
                    const double his = ctx.hist->at(traj.roads[static_cast<std::size_t>(i)]);
                    gap[static_cast<std::size_t>(i)] = cur - (cur - his) * r3;
                } else {
                    gap[static_cast<std::size_t>(i)] = cur;
                }
            }
            double cum = static_cast<double>(traj.times.front());
            for (int i = 0; i < gaps; ++i) {
                cum += gap[static_cast<std::size_t>(i)];
                v.traj.times[static_cast<std::size_t>(i) + 1] = std::llround(cum);
            }
            return v;
        }
        case AugmentStrategy::segment_mask: {
            AugmentedView v;
            v.strategy = AugmentStrategy::segment_mask;
            v.traj = traj;
            v.masked = span_mask(traj, ctx.mask_ratio, ctx.mask_span, rng).masked;
            return v;
        }
        case AugmentStrategy::dropout:
            return dropout_view(traj, ctx.token_drop_prob, rng);
    }
    throw ValidationError("augment: unknown strategy");
}

void PretrainConfig::validate() const {
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must be in [0,1]");
    if (tau <= 0.0) throw ConfigError("tau must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (lr <= 0.0) throw ConfigError("lr must be positive");
    if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0) throw ConfigError("mask_ratio must be in (0,1)");
    if (mask_span < 1) throw ConfigError("mask_span must be >= 1");
}

PretrainStepData prepare_pretrain_step(const std::vector<const Trajectory*>& batch,
                                       const TokenIds& ids, const PretrainConfig& cfg,
                                       const HistoricalTravelTimes& hist, const Rng& root,
                                       int epoch, const std::vector<std::size_t>& traj_indices) {
    PretrainStepData data;
    AugmentContext actx;
    actx.hist = &hist;
    actx.mask_ratio = cfg.mask_ratio;
    actx.mask_span = cfg.mask_span;

    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Trajectory& traj = *batch[b];
        const std::uint64_t tid = static_cast<std::uint64_t>(traj_indices[b]);

        Rng mask_rng = root.derive("mask", {static_cast<std::uint64_t>(epoch), tid});
        MaskedSample ms = span_mask(traj, cfg.mask_ratio, cfg.mask_span, mask_rng);
        data.masked_items.push_back(make_encoder_item(traj, ids, &ms.masked));
        std::vector<int> zpos;
        for (int p : ms.positions) zpos.push_back(p + 1);  // row 0 is the placeholder
        data.mask_positions.push_back(std::move(zpos));
        data.mask_targets.push_back(ms.original_roads);

        for (int view = 0; view < 2; ++view) {
            Rng aug_rng = root.derive("aug", {static_cast<std::uint64_t>(epoch), tid,
                                              static_cast<std::uint64_t>(view)});
            const AugmentStrategy strategy = view == 0 ? cfg.aug1 : cfg.aug2;
            AugmentedView av = augment(traj, strategy, actx, aug_rng);
            const std::vector<bool>* masked = av.masked.empty() ? nullptr : &av.masked;
            const std::vector<bool>* dropped = av.dropped.empty() ? nullptr : &av.dropped;
            data.view_items.push_back(make_encoder_item(av.traj, ids, masked, dropped));
        }
        const int base = static_cast<int>(2 * b);
        data.pair_map.push_back(base + 1);
        data.pair_map.push_back(base);
    }
    return data;
}

StepLossVars build_pretrain_loss(ad::Tape& tape, const TrajModel& model, const BoundModel& bound,
                                 const NetworkContext& ctx, const PretrainStepData& data,
                                 const PretrainConfig& cfg, const Ablations& abl, bool training,
                                 Rng* dropout_rng) {
    EncodeOptions opts;
    opts.training = training;
    opts.ablations = abl;

    ad::Var table = model.road_table(tape, bound, ctx, abl);

    std::vector<ad::Var> masked_z;
    for (const auto& item : data.masked_items) {
        masked_z.push_back(model.encode_item(tape, bound, table, item,
                                             static_cast<int>(item.token_ids.size()), opts,
                                             dropout_rng));
    }
    ad::Var loss_mask = masked_recovery_loss(tape, masked_z, data.mask_positions,
                                             data.mask_targets, bound.mask_head_w,
                                             bound.mask_head_b);

    std::vector<ad::Var> ps;
    for (const auto& item : data.view_items) {
        ad::Var z = model.encode_item(tape, bound, table, item,
                                      static_cast<int>(item.token_ids.size()), opts, dropout_rng);
        ps.push_back(tape.gather_rows(z, {0}));
    }
    ad::Var reps = tape.concat_rows(ps);
    ad::Var loss_con = nt_xent_loss(tape, reps, data.pair_map, cfg.tau);

    StepLossVars out;
    out.mask = loss_mask;
    out.con = loss_con;
    out.pre = tape.add(tape.scale(loss_mask, cfg.lambda), tape.scale(loss_con, 1.0 - cfg.lambda));
    return out;
}

PretrainResult run_pretraining(TrajModel& model, AdamW& opt, const NetworkContext& ctx,
                               const TrajectoryDataset& train, const TrajectoryDataset* val,
                               const PretrainConfig& cfg, const Ablations& abl,
                               const HistoricalTravelTimes& hist,
                               std::vector<std::string>* log_lines) {
    cfg.validate();
    const std::size_t n = train.trajectories.size();
    if (n < 2) throw ValidationError("run_pretraining: need at least 2 trajectories");

    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
    const long steps_per_epoch = std::max<long>(1, static_cast<long>(n / batch));
    LrSchedule sched;
    sched.base = cfg.lr;
    sched.warmup_steps = static_cast<long>(cfg.warmup_epochs) * steps_per_epoch;
    sched.total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;

    const Rng root(cfg.seed);
    const TokenIds ids = model.token_ids();

    PretrainResult result;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = root.derive("shuffle", {static_cast<std::uint64_t>(epoch)});
        shuffle_rng.shuffle(order);

        EpochLog log;
        log.epoch = epoch;
        long counted = 0;
        for (long s = 0; s < steps_per_epoch; ++s) {
            const std::size_t lo = static_cast<std::size_t>(s) * batch;
            const std::size_t hi = std::min(n, lo + batch);
            if (hi - lo < 2) continue;
            std::vector<const Trajectory*> items;
            std::vector<std::size_t> idx;
            for (std::size_t i = lo; i < hi; ++i) {
                items.push_back(&train.trajectories[order[i]]);
                idx.push_back(order[i]);
            }
            PretrainStepData data =
                prepare_pretrain_step(items, ids, cfg, hist, root, epoch, idx);

            ad::Tape tape;
            BoundModel bound = model.bind(tape);
            Rng drop_rng = root.derive("dropout", {static_cast<std::uint64_t>(epoch),
                                                   static_cast<std::uint64_t>(s)});
            StepLossVars loss =
                build_pretrain_loss(tape, model, bound, ctx, data, cfg, abl, true, &drop_rng);

            const double pre = tape.val(loss.pre)(0, 0);
            if (!std::isfinite(pre)) {
                throw std::runtime_error("pretraining aborted: non-finite loss at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(s));
            }
            tape.backward(loss.pre);

            std::vector<const Mat*> grads;
            grads.reserve(bound.leaves.size());
            for (ad::Var leaf : bound.leaves) grads.push_back(&tape.grad_view(leaf));
            const double lr = sched.at(step);
            opt.step(model.store(), grads, lr);

            log.loss_pre += pre;
            log.loss_mask += tape.val(loss.mask)(0, 0);
            log.loss_con += tape.val(loss.con)(0, 0);
            log.lr = lr;
            ++counted;
            ++step;
        }
        if (counted > 0) {
            log.loss_pre /= static_cast<double>(counted);
            log.loss_mask /= static_cast<double>(counted);
            log.loss_con /= static_cast<double>(counted);
        }
        result.epochs.push_back(log);
        if (log_lines) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "epoch %d loss_pre %.6f loss_mask %.6f loss_con %.6f lr %.8f",
                          epoch, log.loss_pre, log.loss_mask, log.loss_con, log.lr);
            log_lines->push_back(buf);
        }
    }

    if (val && !val->trajectories.empty()) {
        result.val_masked_accuracy =
            masked_recovery_accuracy(model, ctx, *val, cfg, abl, cfg.seed ^ 0x5eedc0deULL);
        if (log_lines) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "val_masked_accuracy %.6f", result.val_masked_accuracy);
            log_lines->push_back(buf);
        }
    }
    return result;
}

double masked_recovery_accuracy(const TrajModel& model, const NetworkContext& ctx,
                                const TrajectoryDataset& data, const PretrainConfig& cfg,
                                const Ablations& abl, std::uint64_t eval_seed) {
    const TokenIds ids = model.token_ids();
    const Rng root(eval_seed);
    EncodeOptions opts;
    opts.ablations = abl;

    long correct = 0;
    long total = 0;
    constexpr std::size_t kChunk = 64;
    for (std::size_t base = 0; base < data.trajectories.size(); base += kChunk) {
        const std::size_t hi = std::min(base + kChunk, data.trajectories.size());
        ad::Tape tape(/*grad_enabled=*/false);
        BoundModel bound = model.bind(tape);
        ad::Var table = model.road_table(tape, bound, ctx, abl);
        for (std::size_t i = base; i < hi; ++i) {
            const Trajectory& traj = data.trajectories[i];
            Rng mask_rng = root.derive("evalmask", {static_cast<std::uint64_t>(i)});
            MaskedSample ms = span_mask(traj, cfg.mask_ratio, cfg.mask_span, mask_rng);
            EncoderItem item = make_encoder_item(traj, ids, &ms.masked);
            ad::Var z = model.encode_item(tape, bound, table, item,
                                          static_cast<int>(item.token_ids.size()), opts, nullptr);
            const Mat& zv = tape.val(z);
            const Mat& w = model.store().at("head.mask.w");
            const Mat& b = model.store().at("head.mask.b");
            for (std::size_t k = 0; k < ms.positions.size(); ++k) {
                const Index row = ms.positions[k] + 1;
                Eigen::RowVectorXd logits = zv.row(row) * w + b.row(0);
                Index argmax = 0;
                logits.maxCoeff(&argmax);
                if (static_cast<int>(argmax) == ms.original_roads[k]) ++correct;
                ++total;
            }
        }
    }
    return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

} // namespace trajrep

#include "trajrep/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "trajrep/mathx.hpp"

namespace trajrep {

double MetricsReport::at(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) throw ValidationError("MetricsReport: missing metric " + key);
    return it->second;
}

namespace {

/// Shared supervised fine-tuning loop over placeholder representations.
/// `loss_fn` maps the stacked B x d representations to a 1x1 loss var.
template <typename LossFn>
void finetune_loop(TrajModel& model, const NetworkContext& ctx,
                   const std::vector<const Trajectory*>& trajs, const FinetuneConfig& cfg,
                   const Ablations& abl, bool departure_time_only, LossFn&& loss_fn,
                   std::vector<std::string>* log_lines, const char* tag) {
    const std::size_t n = trajs.size();
    if (n < 2) throw ValidationError("finetune: need at least 2 trajectories");
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
    const long steps_per_epoch = std::max<long>(1, static_cast<long>(n / batch));
    LrSchedule sched;
    sched.base = cfg.lr;
    sched.warmup_steps = static_cast<long>(cfg.warmup_epochs) * steps_per_epoch;
    sched.total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;

    AdamW opt(model.store(), cfg.weight_decay);
    const Rng root = Rng(cfg.seed).derive(tag);
    const TokenIds ids = model.token_ids();
    EncodeOptions opts;
    opts.training = true;
    opts.ablations = abl;

    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = root.derive("shuffle", {static_cast<std::uint64_t>(epoch)});
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        long counted = 0;
        for (long s = 0; s < steps_per_epoch; ++s) {
            const std::size_t lo = static_cast<std::size_t>(s) * batch;
            const std::size_t hi = std::min(n, lo + batch);
            if (hi <= lo) continue;

            ad::Tape tape;
            BoundModel bound = model.bind(tape);
            ad::Var table = model.road_table(tape, bound, ctx, abl);
            Rng drop_rng = root.derive("dropout", {static_cast<std::uint64_t>(epoch),
                                                   static_cast<std::uint64_t>(s)});
            std::vector<ad::Var> ps;
            std::vector<std::size_t> chosen;
            for (std::size_t i = lo; i < hi; ++i) {
                chosen.push_back(order[i]);
                EncoderItem item = make_encoder_item(*trajs[order[i]], ids, nullptr, nullptr,
                                                     departure_time_only);
                ad::Var z = model.encode_item(tape, bound, table, item,
                                              static_cast<int>(item.token_ids.size()), opts,
                                              &drop_rng);
                ps.push_back(tape.gather_rows(z, {0}));
            }
            ad::Var reps = ps.size() == 1 ? ps.front() : tape.concat_rows(ps);
            ad::Var loss = loss_fn(tape, bound, reps, chosen);
            const double lv = tape.val(loss)(0, 0);
            if (!std::isfinite(lv)) {
                throw std::runtime_error(std::string("fine-tuning aborted: non-finite loss at epoch ") +
                                         std::to_string(epoch) + " step " + std::to_string(s));
            }
            tape.backward(loss);
            std::vector<const Mat*> grads;
            grads.reserve(bound.leaves.size());
            for (ad::Var leaf : bound.leaves) grads.push_back(&tape.grad_view(leaf));
            opt.step(model.store(), grads, sched.at(step));
            epoch_loss += lv;
            ++counted;
            ++step;
        }
        if (log_lines) {
            char buf[120];
            std::snprintf(buf, sizeof buf, "%s epoch %d loss %.6f", tag, epoch,
                          counted ? epoch_loss / static_cast<double>(counted) : 0.0);
            log_lines->push_back(buf);
        }
    }
}

} // namespace

EtaModel finetune_eta(TrajModel model, const NetworkContext& ctx, const TrajectoryDataset& train,
                      const FinetuneConfig& cfg, const Ablations& abl,
                      std::vector<std::string>* log_lines) {
    std::vector<const Trajectory*> trajs;
    std::vector<double> targets;
    for (const auto& t : train.trajectories) {
        if (t.length() < 2) throw ValidationError("finetune_eta: trajectory shorter than 2");
        trajs.push_back(&t);
        targets.push_back(static_cast<double>(t.duration()));
    }
    // Standardize targets; the stored calibration keeps the end-to-end
    // predictor a single affine map of the representation.
    EtaModel out{std::move(model), 0.0, 1.0};
    const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) /
                        static_cast<double>(targets.size());
    double var = 0.0;
    for (double y : targets) var += (y - mean) * (y - mean);
    var /= static_cast<double>(targets.size());
    out.target_mean = mean;
    out.target_scale = var > 0.0 ? std::sqrt(var) : 1.0;

    std::vector<double> norm_targets;
    for (double y : targets) norm_targets.push_back((y - out.target_mean) / out.target_scale);

    finetune_loop(out.model, ctx, trajs, cfg, abl, /*departure_time_only=*/true,
                  [&](ad::Tape& tape, const BoundModel& bound, ad::Var reps,
                      const std::vector<std::size_t>& chosen) {
                      ad::Var pred = tape.add_rowvec(tape.matmul(reps, bound.task_head_w),
                                                     bound.task_head_b);
                      Mat y(static_cast<Index>(chosen.size()), 1);
                      for (std::size_t i = 0; i < chosen.size(); ++i) {
                          y(static_cast<Index>(i), 0) = norm_targets[chosen[i]];
                      }
                      return tape.mse(pred, std::move(y));
                  },
                  log_lines, "eta");
    return out;
}

std::vector<double> predict_eta(const EtaModel& m, const NetworkContext& ctx,
                                const std::vector<Trajectory>& trajectories,
                                const Ablations& abl) {
    for (const auto& t : trajectories) {
        if (t.length() < 2) throw ValidationError("predict_eta: trajectory shorter than 2");
    }
    const Mat reps = m.model.embed(ctx, trajectories, abl, /*departure_time_only=*/true);
    const Mat& w = m.model.store().at("head.task.w");
    const Mat& b = m.model.store().at("head.task.b");
    std::vector<double> out;
    out.reserve(trajectories.size());
    for (Index i = 0; i < reps.rows(); ++i) {
        const double norm_pred = reps.row(i).dot(w.col(0)) + b(0, 0);
        out.push_back(norm_pred * m.target_scale + m.target_mean);
    }
    return out;
}

ClassifyModel finetune_classify(TrajModel model, const NetworkContext& ctx,
                                const TrajectoryDataset& train, const std::vector<int>& labels,
                                int num_classes, const FinetuneConfig& cfg, const Ablations& abl,
                                std::vector<std::string>* log_lines) {
    if (labels.size() != train.trajectories.size()) {
        throw ValidationError("finetune_classify: one label per trajectory required");
    }
    for (int l : labels) {
        if (l < 0 || l >= num_classes) {
            throw ValidationError("finetune_classify: label " + std::to_string(l) +
                                  " out of range [0, " + std::to_string(num_classes) + ")");
        }
    }
    std::vector<const Trajectory*> trajs;
    for (const auto& t : train.trajectories) trajs.push_back(&t);

    ClassifyModel out{std::move(model), num_classes};
    finetune_loop(out.model, ctx, trajs, cfg, abl, /*departure_time_only=*/false,
                  [&](ad::Tape& tape, const BoundModel& bound, ad::Var reps,
                      const std::vector<std::size_t>& chosen) {
                      ad::Var logits = tape.add_rowvec(tape.matmul(reps, bound.task_head_w),
                                                       bound.task_head_b);
                      std::vector<int> y;
                      for (std::size_t i : chosen) y.push_back(labels[i]);
                      return tape.cross_entropy_rows(logits, y);
                  },
                  log_lines, "classify");
    return out;
}

Mat classify(const ClassifyModel& m, const NetworkContext& ctx,
             const std::vector<Trajectory>& trajectories, const Ablations& abl) {
    const Mat reps = m.model.embed(ctx, trajectories, abl);
    const Mat& w = m.model.store().at("head.task.w");
    const Mat& b = m.model.store().at("head.task.b");
    Mat logits = reps * w;
    logits.rowwise() += b.row(0);
    softmax_rows_inplace(logits);
    return logits;
}

MetricsReport regression_metrics(const std::vector<double>& y, const std::vector<double>& y_hat) {
    if (y.size() != y_hat.size() || y.empty()) {
        throw ValidationError("regression_metrics: length mismatch or empty");
    }
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    double ape_sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) {
            throw ValidationError("regression_metrics: MAPE undefined, y[" + std::to_string(i) +
                                  "] = 0");
        }
        const double e = y[i] - y_hat[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        ape_sum += std::abs(e / y[i]);
    }
    const double n = static_cast<double>(y.size());
    MetricsReport r;
    r.task = "regression";
    r.values["MAE"] = abs_sum / n;
    r.values["MAPE"] = 100.0 * ape_sum / n;
    r.values["RMSE"] = std::sqrt(sq_sum / n);
    return r;
}

namespace {

double binary_auc(const std::vector<int>& y, const std::vector<double>& score) {
    // Rank-based (Mann-Whitney) with midranks for ties.
    const std::size_t n = y.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && score[order[j + 1]] == score[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    double pos = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (y[k] == 1) {
            pos_rank_sum += rank[k];
            pos += 1.0;
        }
    }
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0.0 || neg == 0.0) return 1.0;  // degenerate: no pairs to order
    return (pos_rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

} // namespace

MetricsReport classification_metrics(const std::vector<int>& y, const Mat& probs,
                                     const std::vector<int>& ks) {
    if (static_cast<Index>(y.size()) != probs.rows() || y.empty()) {
        throw ValidationError("classification_metrics: length mismatch or empty");
    }
    const int classes = static_cast<int>(probs.cols());
    std::vector<int> pred(y.size());
    for (Index i = 0; i < probs.rows(); ++i) {
        Index arg = 0;
        probs.row(i).maxCoeff(&arg);
        pred[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }

    MetricsReport r;
    if (classes == 2) {
        r.task = "classification-binary";
        double tp = 0;
        double fp = 0;
        double fn = 0;
        double correct = 0;
        std::vector<double> score;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (pred[i] == y[i]) correct += 1.0;
            if (pred[i] == 1 && y[i] == 1) tp += 1.0;
            if (pred[i] == 1 && y[i] == 0) fp += 1.0;
            if (pred[i] == 0 && y[i] == 1) fn += 1.0;
            score.push_back(probs(static_cast<Index>(i), 1));
        }
        r.values["ACC"] = correct / static_cast<double>(y.size());
        r.values["F1"] = (2.0 * tp + fp + fn) > 0.0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
        r.values["AUC"] = binary_auc(y, score);
        return r;
    }

    r.task = "classification-multi";
    std::vector<double> tp(static_cast<std::size_t>(classes), 0.0);
    std::vector<double> fp(static_cast<std::size_t>(classes), 0.0);
    std::vector<double> fn(static_cast<std::size_t>(classes), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (pred[i] == y[i]) {
            tp[static_cast<std::size_t>(y[i])] += 1.0;
        } else {
            fp[static_cast<std::size_t>(pred[i])] += 1.0;
            fn[static_cast<std::size_t>(y[i])] += 1.0;
        }
    }
    double tp_sum = 0;
    double fp_sum = 0;
    double fn_sum = 0;
    double macro = 0.0;
    for (int c = 0; c < classes; ++c) {
        const auto uc = static_cast<std::size_t>(c);
        tp_sum += tp[uc];
        fp_sum += fp[uc];
        fn_sum += fn[uc];
        const double denom = 2.0 * tp[uc] + fp[uc] + fn[uc];
        macro += denom > 0.0 ? 2.0 * tp[uc] / denom : 0.0;
    }
    r.values["Micro-F1"] = (2.0 * tp_sum + fp_sum + fn_sum) > 0.0
        ? 2.0 * tp_sum / (2.0 * tp_sum + fp_sum + fn_sum)
        : 0.0;
    r.values["Macro-F1"] = macro / static_cast<double>(classes);
    for (int k : ks) {
        double hits = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            std::vector<int> idx(static_cast<std::size_t>(classes));
            std::iota(idx.begin(), idx.end(), 0);
            std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
                const double pa = probs(static_cast<Index>(i), a);
                const double pb = probs(static_cast<Index>(i), b);
                if (pa != pb) return pa > pb;
                return a < b;
            });
            for (int j = 0; j < std::min(k, classes); ++j) {
                if (idx[static_cast<std::size_t>(j)] == y[i]) {
                    hits += 1.0;
                    break;
                }
            }
        }
        r.values["Recall@" + std::to_string(k)] = hits / static_cast<double>(y.size());
    }
    return r;
}

void write_metrics_text(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    for (const auto& [key, value] : report.values) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s=%.9g\n", key.c_str(), value);
        out << buf;
    }
}

void write_metrics_json(const MetricsReport& report, const std::string& path,
                        const std::string& config_echo) {
    nlohmann::ordered_json j;
    j["task"] = report.task;
    nlohmann::ordered_json metrics;
    for (const auto& [key, value] : report.values) metrics[key] = value;
    j["metrics"] = metrics;
    j["config_echo"] = config_echo;
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

} // namespace trajrep

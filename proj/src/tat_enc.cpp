#include "trajrep/tat_enc.hpp"

#include <cmath>
#include <memory>

#include "trajrep/mathx.hpp"

namespace trajrep {

EncoderItem make_encoder_item(const Trajectory& traj, const TokenIds& ids,
                              const std::vector<bool>* masked,
                              const std::vector<bool>* dropped,
                              bool departure_time_only) {
    const int len = traj.length();
    if (len < 1) throw ValidationError("make_encoder_item: empty trajectory");
    EncoderItem item;
    item.token_ids.resize(static_cast<std::size_t>(len) + 1);
    item.minute_ids.resize(static_cast<std::size_t>(len) + 1);
    item.day_ids.resize(static_cast<std::size_t>(len) + 1);
    item.times.resize(static_cast<std::size_t>(len) + 1);
    item.dropped.assign(static_cast<std::size_t>(len) + 1, false);

    const std::int64_t anchor = traj.departure();
    item.token_ids[0] = ids.cls();
    item.minute_ids[0] = minute_index(anchor);
    item.day_ids[0] = day_of_week_index(anchor);
    item.times[0] = anchor;

    for (int i = 0; i < len; ++i) {
        const std::size_t p = static_cast<std::size_t>(i) + 1;
        const std::int64_t t = departure_time_only ? anchor : traj.times[static_cast<std::size_t>(i)];
        const bool is_masked = masked && (*masked)[static_cast<std::size_t>(i)];
        const int road = traj.roads[static_cast<std::size_t>(i)];
        if (road < 0 || road >= ids.vocab) {
            throw ValidationError("make_encoder_item: road id " + std::to_string(road) +
                                  " out of range");
        }
        item.token_ids[p] = is_masked ? ids.mask() : road;
        item.minute_ids[p] = is_masked ? 0 : minute_index(t);
        item.day_ids[p] = is_masked ? 0 : day_of_week_index(t);
        item.times[p] = t;
        if (dropped) item.dropped[p] = (*dropped)[static_cast<std::size_t>(i)];
    }
    return item;
}

TrajectoryBatch make_batch(const std::vector<EncoderItem>& items) {
    TrajectoryBatch batch;
    batch.items = items;
    batch.lengths.reserve(items.size());
    for (const auto& it : items) {
        batch.lengths.push_back(static_cast<int>(it.token_ids.size()));
        batch.padded_len = std::max(batch.padded_len, batch.lengths.back());
    }
    return batch;
}

double interval_decay(double delta, const Ablations& abl) {
    if (abl.log_decay) return 1.0 / std::log(std::exp(1.0) + delta);
    return delta == 0.0 ? 1e6 : 1.0 / delta;
}

Mat interval_decay_matrix(const std::vector<std::int64_t>& times, const Ablations& abl) {
    const Index n = static_cast<Index>(times.size());
    Mat out(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            const double delta = abl.hop
                ? std::abs(static_cast<double>(i - j))
                : std::abs(static_cast<double>(times[static_cast<std::size_t>(i)] -
                                               times[static_cast<std::size_t>(j)]));
            out(i, j) = interval_decay(delta, abl);
        }
    }
    return out;
}

Mat time_interval_bias_values(const Mat& decayed, const Mat& omega1, const Mat& omega2) {
    const Index k = omega1.cols();
    Mat out = Mat::Zero(decayed.rows(), decayed.cols());
    for (Index i = 0; i < decayed.rows(); ++i) {
        for (Index j = 0; j < decayed.cols(); ++j) {
            double acc = 0.0;
            for (Index q = 0; q < k; ++q) {
                const double z = decayed(i, j) * omega1(0, q);
                acc += (z > 0.0 ? z : kLeakySlope * z) * omega2(0, q);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

ad::Var time_interval_bias(ad::Tape& tape, ad::Var omega1, ad::Var omega2, const Mat& decayed) {
    auto dp = std::make_shared<Mat>(decayed);
    Mat value = time_interval_bias_values(decayed, tape.val(omega1), tape.val(omega2));
    auto back = [omega1, omega2, dp](ad::Tape& t, ad::Var out) {
        const Mat& g = t.grad_view(out);
        const Mat& w1 = t.val(omega1);
        const Mat& w2 = t.val(omega2);
        const Index k = w1.cols();
        Eigen::RowVectorXd g1 = Eigen::RowVectorXd::Zero(k);
        Eigen::RowVectorXd g2 = Eigen::RowVectorXd::Zero(k);
        for (Index i = 0; i < dp->rows(); ++i) {
            for (Index j = 0; j < dp->cols(); ++j) {
                const double d = (*dp)(i, j);
                const double go = g(i, j);
                if (go == 0.0) continue;
                for (Index q = 0; q < k; ++q) {
                    const double z = d * w1(0, q);
                    const double act = z > 0.0 ? z : kLeakySlope * z;
                    g2(q) += go * act;
                    g1(q) += go * w2(0, q) * leaky_relu_grad(z) * d;
                }
            }
        }
        if (t.requires_grad(omega1)) t.grad_accum(omega1).row(0) += g1;
        if (t.requires_grad(omega2)) t.grad_accum(omega2).row(0) += g2;
    };
    return tape.custom({omega1, omega2}, std::move(value), std::move(back));
}

ad::Var time_aware_attention(ad::Tape& tape, ad::Var x, std::optional<ad::Var> bias,
                             const Mat* mask_bias, const EncoderLayerVars& layer, int heads) {
    const Index d = tape.val(x).cols();
    if (d % heads != 0) throw ValidationError("time_aware_attention: d must be divisible by heads");
    const Index dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    ad::Var q = tape.matmul(x, layer.wq);
    ad::Var k = tape.matmul(x, layer.wk);
    ad::Var v = tape.matmul(x, layer.wv);

    std::vector<ad::Var> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        ad::Var qh = tape.slice_cols(q, h * dh, dh);
        ad::Var kh = tape.slice_cols(k, h * dh, dh);
        ad::Var vh = tape.slice_cols(v, h * dh, dh);
        ad::Var scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt);
        if (bias) scores = tape.add(scores, *bias);
        if (mask_bias) scores = tape.add_const(scores, *mask_bias);
        ad::Var att = tape.softmax_rows(scores);
        outs.push_back(tape.matmul(att, vh));
    }
    ad::Var concat = heads == 1 ? outs.front() : tape.concat_cols(outs);
    return tape.matmul(concat, layer.wo);
}

ad::Var encoder_block(ad::Tape& tape, ad::Var x, std::optional<ad::Var> bias,
                      const Mat* mask_bias, const EncoderLayerVars& layer, int heads,
                      const Mat* drop_att, const Mat* drop_ffn) {
    ad::Var att = time_aware_attention(tape, x, bias, mask_bias, layer, heads);
    if (drop_att) att = tape.mul_mask(att, *drop_att);
    x = tape.layer_norm_rows(tape.add(x, att), layer.ln1_g, layer.ln1_b);

    ad::Var f = tape.relu(tape.add_rowvec(tape.matmul(x, layer.ff1_w), layer.ff1_b));
    f = tape.add_rowvec(tape.matmul(f, layer.ff2_w), layer.ff2_b);
    if (drop_ffn) f = tape.mul_mask(f, *drop_ffn);
    return tape.layer_norm_rows(tape.add(x, f), layer.ln2_g, layer.ln2_b);
}

} // namespace trajrep

#include "trajrep/model.hpp"

#include <cmath>

#include "trajrep/mathx.hpp"

namespace trajrep {

Mat& ParamStore::add(const std::string& name, Index rows, Index cols) {
    if (has(name)) throw ValidationError("ParamStore: duplicate parameter " + name);
    by_name_[name] = entries_.size();
    entries_.emplace_back(name, Mat::Zero(rows, cols));
    return entries_.back().second;
}

Mat& ParamStore::at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ValidationError("ParamStore: unknown parameter " + name);
    return entries_[it->second].second;
}

const Mat& ParamStore::at(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ValidationError("ParamStore: unknown parameter " + name);
    return entries_[it->second].second;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : entries_) n += static_cast<std::size_t>(m.size());
    return n;
}

void ModelConfig::validate() const {
    gat.validate();
    if (d < 2) throw ValidationError("ModelConfig: d must be >= 2");
    if (gat.output_dim() != d) {
        throw ValidationError("ModelConfig: final GAT width " + std::to_string(gat.output_dim()) +
                              " must equal d = " + std::to_string(d));
    }
    if (enc_layers < 1) throw ValidationError("ModelConfig: enc_layers must be >= 1");
    if (d % enc_heads != 0) throw ValidationError("ModelConfig: d must be divisible by enc_heads");
    if (omega_dim < 1) throw ValidationError("ModelConfig: omega_dim must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("ModelConfig: dropout in [0,1)");
}

NetworkContext NetworkContext::build(const RoadNetwork& network, const TransferMatrix& transfer) {
    NetworkContext ctx;
    ctx.network = &network;
    ctx.features = encode_road_features(network).values;
    ctx.nbh = GatNeighborhood::build(network, transfer);
    return ctx;
}

TrajModel::TrajModel(const ModelConfig& cfg, int d0, int vocab, Head head, int task_outputs,
                     Rng init_rng)
    : cfg_(cfg), d0_(d0), vocab_(vocab), head_(head), task_outputs_(task_outputs) {
    cfg_.validate();
    if (head_ == Head::task && task_outputs_ < 1) {
        throw ValidationError("TrajModel: task head needs at least one output");
    }

    for (const auto& [name, shape] : gat_parameter_shapes(d0_, cfg_.gat)) {
        store_.add(name, shape.first, shape.second);
    }
    const Index d = cfg_.d;
    store_.add("emb.minute", cfg_.minute_rows, d);
    store_.add("emb.day", cfg_.day_rows, d);
    store_.add("emb.cls", 1, d);
    store_.add("emb.mask", 1, d);
    store_.add("time.omega1", 1, cfg_.omega_dim);
    store_.add("time.omega2", 1, cfg_.omega_dim);
    for (int l = 0; l < cfg_.enc_layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l) + ".";
        store_.add(p + "wq", d, d);
        store_.add(p + "wk", d, d);
        store_.add(p + "wv", d, d);
        store_.add(p + "wo", d, d);
        store_.add(p + "ff1.w", d, d);
        store_.add(p + "ff1.b", 1, d);
        store_.add(p + "ff2.w", d, d);
        store_.add(p + "ff2.b", 1, d);
        store_.add(p + "ln1.g", 1, d);
        store_.add(p + "ln1.b", 1, d);
        store_.add(p + "ln2.g", 1, d);
        store_.add(p + "ln2.b", 1, d);
    }
    if (head_ == Head::masked_recovery) {
        store_.add("head.mask.w", d, vocab_);
        store_.add("head.mask.b", 1, vocab_);
    } else if (head_ == Head::task) {
        store_.add("head.task.w", d, task_outputs_);
        store_.add("head.task.b", 1, task_outputs_);
    }

    // Glorot for weight matrices, ones for layer-norm gains, zeros for biases.
    for (std::size_t i = 0; i < store_.count(); ++i) {
        const std::string& name = store_.name(i);
        Mat& m = store_.value(i);
        if (name.ends_with(".b") || name.ends_with("ln1.b") || name.ends_with("ln2.b")) {
            m.setZero();
        } else if (name.ends_with("ln1.g") || name.ends_with("ln2.g")) {
            m.setOnes();
        } else {
            glorot_init(m, init_rng);
        }
    }
}

BoundModel TrajModel::bind(ad::Tape& tape) const {
    BoundModel b;
    b.leaves.reserve(store_.count());
    std::map<std::string, ad::Var> by_name;
    for (std::size_t i = 0; i < store_.count(); ++i) {
        ad::Var v = tape.leaf(&store_.value(i));
        b.leaves.push_back(v);
        by_name[store_.name(i)] = v;
    }
    b.gat.resize(static_cast<std::size_t>(cfg_.gat.layer_count()));
    for (int l = 0; l < cfg_.gat.layer_count(); ++l) {
        auto& layer = b.gat[static_cast<std::size_t>(l)];
        layer.resize(static_cast<std::size_t>(cfg_.gat.heads[static_cast<std::size_t>(l)]));
        for (int k = 0; k < cfg_.gat.heads[static_cast<std::size_t>(l)]; ++k) {
            const std::string p = "gat.l" + std::to_string(l) + ".h" + std::to_string(k) + ".";
            layer[static_cast<std::size_t>(k)] = {by_name.at(p + "w1"), by_name.at(p + "w2"),
                                                  by_name.at(p + "w3"), by_name.at(p + "w4"),
                                                  by_name.at(p + "w5")};
        }
    }
    b.minute_table = by_name.at("emb.minute");
    b.day_table = by_name.at("emb.day");
    b.cls_vec = by_name.at("emb.cls");
    b.mask_vec = by_name.at("emb.mask");
    b.omega1 = by_name.at("time.omega1");
    b.omega2 = by_name.at("time.omega2");
    for (int l = 0; l < cfg_.enc_layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l) + ".";
        EncoderLayerVars lv;
        lv.wq = by_name.at(p + "wq");
        lv.wk = by_name.at(p + "wk");
        lv.wv = by_name.at(p + "wv");
        lv.wo = by_name.at(p + "wo");
        lv.ff1_w = by_name.at(p + "ff1.w");
        lv.ff1_b = by_name.at(p + "ff1.b");
        lv.ff2_w = by_name.at(p + "ff2.w");
        lv.ff2_b = by_name.at(p + "ff2.b");
        lv.ln1_g = by_name.at(p + "ln1.g");
        lv.ln1_b = by_name.at(p + "ln1.b");
        lv.ln2_g = by_name.at(p + "ln2.g");
        lv.ln2_b = by_name.at(p + "ln2.b");
        b.enc.push_back(lv);
    }
    if (head_ == Head::masked_recovery) {
        b.mask_head_w = by_name.at("head.mask.w");
        b.mask_head_b = by_name.at("head.mask.b");
    } else if (head_ == Head::task) {
        b.task_head_w = by_name.at("head.task.w");
        b.task_head_b = by_name.at("head.task.b");
    }
    return b;
}

ad::Var TrajModel::road_table(ad::Tape& tape, const BoundModel& bound, const NetworkContext& ctx,
                              const Ablations& abl) const {
    if (ctx.features.cols() != d0_) {
        throw ValidationError("road_table: network feature width " +
                              std::to_string(ctx.features.cols()) + " != model d0 " +
                              std::to_string(d0_));
    }
    ad::Var feats = tape.constant(ctx.features);
    ad::Var r = encode_roads(tape, feats, bound.gat, ctx.nbh, cfg_.gat, abl.transfer_prob);
    ad::Var pad_row = tape.constant(Mat::Zero(1, cfg_.d));
    return tape.concat_rows({r, bound.mask_vec, bound.cls_vec, pad_row});
}

namespace {

Mat dropout_mask(Index rows, Index cols, double p, Rng& rng) {
    Mat m(rows, cols);
    const double keep = 1.0 / (1.0 - p);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            m(i, j) = rng.bernoulli(p) ? 0.0 : keep;
    return m;
}

} // namespace

ad::Var TrajModel::encode_item(ad::Tape& tape, const BoundModel& bound, ad::Var road_table,
                               const EncoderItem& item, int len, const EncodeOptions& opts,
                               Rng* dropout_rng) const {
    if (len < 1 || len > static_cast<int>(item.token_ids.size())) {
        throw ValidationError("encode_item: bad length");
    }
    const Ablations& abl = opts.ablations;
    std::vector<int> toks(item.token_ids.begin(), item.token_ids.begin() + len);
    ad::Var x = tape.gather_rows(road_table, toks);
    if (abl.time_emb) {
        std::vector<int> mins(item.minute_ids.begin(), item.minute_ids.begin() + len);
        std::vector<int> days(item.day_ids.begin(), item.day_ids.begin() + len);
        x = tape.add(x, tape.gather_rows(bound.minute_table, mins));
        x = tape.add(x, tape.gather_rows(bound.day_table, days));
    }
    x = tape.add_const(x, sinusoidal_positions(len, cfg_.d));

    bool any_dropped = false;
    for (int i = 0; i < len; ++i) any_dropped = any_dropped || item.dropped[static_cast<std::size_t>(i)];
    if (any_dropped) {
        Mat rowmask = Mat::Ones(len, cfg_.d);
        for (int i = 0; i < len; ++i) {
            if (item.dropped[static_cast<std::size_t>(i)]) rowmask.row(i).setZero();
        }
        x = tape.mul_mask(x, std::move(rowmask));
    }

    const bool use_dropout = opts.training && cfg_.dropout > 0.0 && dropout_rng != nullptr;
    if (use_dropout) {
        x = tape.mul_mask(x, dropout_mask(len, cfg_.d, cfg_.dropout, *dropout_rng));
    }

    std::optional<ad::Var> bias;
    Mat const_bias;
    const Mat* const_bias_ptr = nullptr;
    if (abl.time_interval) {
        std::vector<std::int64_t> times(item.times.begin(), item.times.begin() + len);
        const Mat decayed = interval_decay_matrix(times, abl);
        if (abl.adaptive) {
            bias = time_interval_bias(tape, bound.omega1, bound.omega2, decayed);
        } else {
            const_bias = decayed;
            const_bias_ptr = &const_bias;
        }
    }

    for (int l = 0; l < cfg_.enc_layers; ++l) {
        Mat drop_att;
        Mat drop_ffn;
        const Mat* da = nullptr;
        const Mat* df = nullptr;
        if (use_dropout) {
            drop_att = dropout_mask(len, cfg_.d, cfg_.dropout, *dropout_rng);
            drop_ffn = dropout_mask(len, cfg_.d, cfg_.dropout, *dropout_rng);
            da = &drop_att;
            df = &drop_ffn;
        }
        x = encoder_block(tape, x, bias, const_bias_ptr, bound.enc[static_cast<std::size_t>(l)],
                          cfg_.enc_heads, da, df);
    }
    return x;
}

TrajModel::BatchEncoding TrajModel::encode_batch(ad::Tape& tape, const BoundModel& bound,
                                                 ad::Var road_table, const TrajectoryBatch& batch,
                                                 const EncodeOptions& opts, Rng* dropout_rng) const {
    BatchEncoding out;
    std::vector<ad::Var> ps;
    for (std::size_t i = 0; i < batch.items.size(); ++i) {
        ad::Var z = encode_item(tape, bound, road_table, batch.items[i], batch.lengths[i], opts,
                                dropout_rng);
        out.z.push_back(z);
        ps.push_back(tape.gather_rows(z, {0}));
    }
    out.p = ps.size() == 1 ? ps.front() : tape.concat_rows(ps);
    return out;
}

Mat TrajModel::embed(const NetworkContext& ctx, const std::vector<Trajectory>& trajectories,
                     const Ablations& abl, bool departure_time_only) const {
    Mat out(static_cast<Index>(trajectories.size()), cfg_.d);
    const TokenIds ids = token_ids();
    EncodeOptions opts;
    opts.ablations = abl;
    constexpr std::size_t kChunk = 128;
    for (std::size_t base = 0; base < trajectories.size(); base += kChunk) {
        const std::size_t hi = std::min(base + kChunk, trajectories.size());
        ad::Tape tape(/*grad_enabled=*/false);
        BoundModel bound = bind(tape);
        ad::Var table = road_table(tape, bound, ctx, abl);
        for (std::size_t i = base; i < hi; ++i) {
            EncoderItem item = make_encoder_item(trajectories[i], ids, nullptr, nullptr,
                                                 departure_time_only);
            ad::Var z = encode_item(tape, bound, table, item,
                                    static_cast<int>(item.token_ids.size()), opts, nullptr);
            out.row(static_cast<Index>(i)) = tape.val(z).row(0);
        }
    }
    return out;
}

ad::Var masked_recovery_loss(ad::Tape& tape, const std::vector<ad::Var>& z_items,
                             const std::vector<std::vector<int>>& masked_positions,
                             const std::vector<std::vector<int>>& target_roads,
                             ad::Var head_w, ad::Var head_b) {
    if (z_items.empty()) throw ValidationError("masked_recovery_loss: empty batch");
    std::vector<ad::Var> per_item;
    for (std::size_t i = 0; i < z_items.size(); ++i) {
        if (masked_positions[i].empty()) {
            throw ValidationError("masked_recovery_loss: empty mask set for item " +
                                  std::to_string(i));
        }
        ad::Var sel = tape.gather_rows(z_items[i], masked_positions[i]);
        ad::Var logits = tape.add_rowvec(tape.matmul(sel, head_w), head_b);
        per_item.push_back(tape.cross_entropy_rows(logits, target_roads[i]));
    }
    return tape.mean_of(per_item);
}

ad::Var nt_xent_loss(ad::Tape& tape, ad::Var representations, const std::vector<int>& pos,
                     double tau) {
    const Index n = tape.val(representations).rows();
    if (n < 4 || n % 2 != 0) {
        throw ValidationError("nt_xent_loss: need 2*N_b rows with N_b >= 2, got " +
                              std::to_string(n));
    }
    if (tau <= 0.0) throw ValidationError("nt_xent_loss: tau must be positive");
    if (static_cast<Index>(pos.size()) != n) {
        throw ValidationError("nt_xent_loss: pair map size mismatch");
    }
    if (!tape.val(representations).allFinite()) {
        throw ValidationError("nt_xent_loss: non-finite representations");
    }
    ad::Var nrm = tape.rows_l2_normalize(representations);
    ad::Var sims = tape.scale(tape.matmul_nt(nrm, nrm), 1.0 / tau);
    Mat self_mask = Mat::Zero(n, n);
    for (Index i = 0; i < n; ++i) self_mask(i, i) = -1e30;
    ad::Var masked = tape.add_const(sims, self_mask);
    return tape.cross_entropy_rows(masked, pos);
}

double LrSchedule::at(long step) const {
    if (warmup_steps > 0 && step < warmup_steps) {
        return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    const long denom = std::max(1L, total_steps - warmup_steps);
    const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(denom);
    return 0.5 * base * (1.0 + std::cos(3.141592653589793 * std::min(1.0, progress)));
}

AdamW::AdamW(const ParamStore& store, double weight_decay) : weight_decay_(weight_decay) {
    m_.reserve(store.count());
    v_.reserve(store.count());
    for (std::size_t i = 0; i < store.count(); ++i) {
        m_.push_back(Mat::Zero(store.value(i).rows(), store.value(i).cols()));
        v_.push_back(Mat::Zero(store.value(i).rows(), store.value(i).cols()));
    }
}

void AdamW::step(ParamStore& store, const std::vector<const Mat*>& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.count(); ++i) {
        Mat& p = store.value(i);
        Mat& m = m_[i];
        Mat& v = v_[i];
        if (grads[i] && grads[i]->size()) {
            const Mat& g = *grads[i];
            m = beta1_ * m + (1.0 - beta1_) * g;
            v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        } else {
            m *= beta1_;
            v *= beta2_;
        }
        p.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_) +
                           weight_decay_ * p.array());
    }
}

} // namespace trajrep

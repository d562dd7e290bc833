#ifndef TRAJREP_MODEL_HPP
#define TRAJREP_MODEL_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trajrep/autodiff.hpp"
#include "trajrep/common.hpp"
#include "trajrep/tat_enc.hpp"
#include "trajrep/tpe_gat.hpp"

namespace trajrep {

/// Ordered, named parameter matrices. Order is the registration order and is
/// the canonical order for checkpoints and optimizer state.
class ParamStore {
public:
    Mat& add(const std::string& name, Index rows, Index cols);
    bool has(const std::string& name) const { return by_name_.count(name) > 0; }
    Mat& at(const std::string& name);
    const Mat& at(const std::string& name) const;
    std::size_t count() const { return entries_.size(); }
    std::size_t scalar_count() const;

    const std::string& name(std::size_t i) const { return entries_[i].first; }
    Mat& value(std::size_t i) { return entries_[i].second; }
    const Mat& value(std::size_t i) const { return entries_[i].second; }

private:
    std::vector<std::pair<std::string, Mat>> entries_;
    std::map<std::string, std::size_t> by_name_;
};

struct ModelConfig {
    int d = 64;
    GatConfig gat{{8, 16, 1}, {8, 4, 64}};
    int enc_layers = 2;
    int enc_heads = 4;
    int omega_dim = 8;
    double dropout = 0.1;
    int minute_rows = 1441;  // row 0 = [MASKT]
    int day_rows = 8;        // row 0 = [MASKT]

    void validate() const;
};

/// Immutable per-network inputs for the road encoder.
struct NetworkContext {
    const RoadNetwork* network = nullptr;
    Mat features;            // |V| x d0
    GatNeighborhood nbh;

    static NetworkContext build(const RoadNetwork& network, const TransferMatrix& transfer);
    int vocab() const { return network->vertex_count(); }
};

struct EncodeOptions {
    bool training = false;
    Ablations ablations;
};

/// Tape-bound views of every parameter, in store order.
struct BoundModel {
    std::vector<ad::Var> leaves;  // aligned with ParamStore order
    std::vector<std::vector<std::array<ad::Var, 5>>> gat;
    ad::Var minute_table, day_table, cls_vec, mask_vec;
    ad::Var omega1, omega2;
    std::vector<EncoderLayerVars> enc;
    ad::Var mask_head_w, mask_head_b;
    ad::Var task_head_w, task_head_b;
};

/// Complete trainable model: road encoder, temporal tables, trajectory
/// encoder, and an optional prediction head. Parameter shapes are
/// independent of |V| except for the masked-recovery head.
class TrajModel {
public:
    enum class Head { none, masked_recovery, task };

    TrajModel(const ModelConfig& cfg, int d0, int vocab, Head head, int task_outputs,
              Rng init_rng);

    const ModelConfig& config() const { return cfg_; }
    int vocab() const { return vocab_; }
    int d0() const { return d0_; }
    Head head() const { return head_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }
    TokenIds token_ids() const { return TokenIds{vocab_}; }

    BoundModel bind(ad::Tape& tape) const;

    /// TPE-GAT over the network followed by the special rows:
    /// row vocab = [MASK], vocab+1 = [CLS], vocab+2 = [PAD] (zeros).
    ad::Var road_table(ad::Tape& tape, const BoundModel& bound, const NetworkContext& ctx,
                       const Ablations& abl) const;

    /// Encodes one item (true length, no padding rows) and returns Z.
    ad::Var encode_item(ad::Tape& tape, const BoundModel& bound, ad::Var road_table,
                        const EncoderItem& item, int len, const EncodeOptions& opts,
                        Rng* dropout_rng) const;

    /// Encodes a padded batch; returns per-item Z vars and the B x d matrix
    /// of placeholder representations.
    struct BatchEncoding {
        std::vector<ad::Var> z;
        ad::Var p;
    };
    BatchEncoding encode_batch(ad::Tape& tape, const BoundModel& bound, ad::Var road_table,
                               const TrajectoryBatch& batch, const EncodeOptions& opts,
                               Rng* dropout_rng) const;

    /// Inference helper: placeholder representations for many trajectories.
    Mat embed(const NetworkContext& ctx, const std::vector<Trajectory>& trajectories,
              const Ablations& abl, bool departure_time_only = false) const;

private:
    ModelConfig cfg_;
    int d0_;
    int vocab_;
    Head head_;
    int task_outputs_;
    ParamStore store_;
};

/// Mean over items of per-item mean masked cross-entropy.
ad::Var masked_recovery_loss(ad::Tape& tape, const std::vector<ad::Var>& z_items,
                             const std::vector<std::vector<int>>& masked_positions,
                             const std::vector<std::vector<int>>& target_roads,
                             ad::Var head_w, ad::Var head_b);

/// NT-Xent over 2N_b representations; pos[i] is the positive of anchor i.
ad::Var nt_xent_loss(ad::Tape& tape, ad::Var representations, const std::vector<int>& pos,
                     double tau);

struct LrSchedule {
    double base = 2e-4;
    long warmup_steps = 0;
    long total_steps = 1;

    double at(long step) const;
};

class AdamW {
public:
    AdamW(const ParamStore& store, double weight_decay);

    void step(ParamStore& store, const std::vector<const Mat*>& grads, double lr);

    long steps_taken() const { return t_; }
    std::vector<Mat>& moment1() { return m_; }
    std::vector<Mat>& moment2() { return v_; }
    const std::vector<Mat>& moment1() const { return m_; }
    const std::vector<Mat>& moment2() const { return v_; }
    void set_steps(long t) { t_ = t; }

private:
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    double weight_decay_;
    long t_ = 0;
    std::vector<Mat> m_;
    std::vector<Mat> v_;
};

} // namespace trajrep

#endif // TRAJREP_MODEL_HPP

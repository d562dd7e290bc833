#ifndef TRAJREP_TAT_ENC_HPP
#define TRAJREP_TAT_ENC_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "trajrep/autodiff.hpp"
#include "trajrep/common.hpp"
#include "trajrep/trajdata.hpp"

namespace trajrep {

/// Ablation switches mirroring the runtime variants of the encoder.
struct Ablations {
    bool transfer_prob = true;   // off: drop the transfer-probability logit term
    bool time_emb = true;        // off: skip minute/day embedding lookups
    bool time_interval = true;   // off: no attention bias from time intervals
    bool hop = false;            // on: bias from |i - j| hops instead of time gaps
    bool log_decay = true;       // off: delta' = 1/delta with delta'(0) capped at 1e6
    bool adaptive = true;        // off: bias = delta' without the learned transform
};

/// One encoder item before embedding: token/index streams of length len+1
/// (position 0 is the leading placeholder).
struct EncoderItem {
    std::vector<int> token_ids;      // road id, or vocab-based specials
    std::vector<int> minute_ids;     // row into the minute table (0 = [MASKT])
    std::vector<int> day_ids;        // row into the day table (0 = [MASKT])
    std::vector<std::int64_t> times; // includes the placeholder anchor at t_1
    std::vector<bool> dropped;       // augmentation token dropout flags
};

/// Padded batch: fixed width per batch, true lengths kept per item.
struct TrajectoryBatch {
    std::vector<EncoderItem> items;
    std::vector<int> lengths;        // real token count per item (incl. placeholder)
    int padded_len = 0;              // Lmax + 1

    std::size_t size() const { return items.size(); }
};

/// Special token ids relative to the road vocabulary size.
struct TokenIds {
    int vocab = 0;
    int mask() const { return vocab; }
    int cls() const { return vocab + 1; }
    int pad() const { return vocab + 2; }
    int table_rows() const { return vocab + 3; }
};

/// Builds one encoder item from a trajectory; masked positions (if any)
/// carry the [MASK] token and [MASKT] temporal rows.
EncoderItem make_encoder_item(const Trajectory& traj, const TokenIds& ids,
                              const std::vector<bool>* masked = nullptr,
                              const std::vector<bool>* dropped = nullptr,
                              bool departure_time_only = false);

TrajectoryBatch make_batch(const std::vector<EncoderItem>& items);

/// delta' = 1/log(e + delta) (default) or the ablation variants.
double interval_decay(double delta, const Ablations& abl = {});

/// (len x len) matrix of decayed pairwise gaps for one item; uses hop
/// distances when the hop ablation is active.
Mat interval_decay_matrix(const std::vector<std::int64_t>& times, const Ablations& abl = {});

/// Learned two-linear transform of the decayed intervals (Eq-level op):
/// bias_ij = LeakyReLU(delta'_ij * w1) . w2
ad::Var time_interval_bias(ad::Tape& tape, ad::Var omega1, ad::Var omega2, const Mat& decayed);

/// Plain-value version for tests and inference inspection.
Mat time_interval_bias_values(const Mat& decayed, const Mat& omega1, const Mat& omega2);

struct EncoderLayerVars {
    ad::Var wq, wk, wv, wo;
    ad::Var ff1_w, ff1_b, ff2_w, ff2_b;
    ad::Var ln1_g, ln1_b, ln2_g, ln2_b;
};

/// Multi-head self-attention with an optional additive bias shared across
/// heads; `mask_bias` (if present) is added to every head's logits.
ad::Var time_aware_attention(ad::Tape& tape, ad::Var x, std::optional<ad::Var> bias,
                             const Mat* mask_bias, const EncoderLayerVars& layer, int heads);

/// One post-norm encoder block (attention + FFN, residuals, layer norms).
ad::Var encoder_block(ad::Tape& tape, ad::Var x, std::optional<ad::Var> bias,
                      const Mat* mask_bias, const EncoderLayerVars& layer, int heads,
                      const Mat* drop_att, const Mat* drop_ffn);

} // namespace trajrep

#endif // TRAJREP_TAT_ENC_HPP

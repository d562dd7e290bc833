#ifndef TRAJREP_PRETRAIN_HPP
#define TRAJREP_PRETRAIN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "trajrep/model.hpp"
#include "trajrep/trajdata.hpp"

namespace trajrep {

struct MaskedSample {
    std::vector<bool> masked;          // per road position
    std::vector<int> positions;        // masked positions, ascending
    std::vector<int> original_roads;   // aligned with positions
};

/// Span masking: max(1, round(p_m * |T|)) positions as non-overlapping spans
/// of length l_m (final span truncated to hit the total exactly).
MaskedSample span_mask(const Trajectory& traj, double p_m, int l_m, Rng& rng);

enum class AugmentStrategy { trim, temporal_shift, segment_mask, dropout };

AugmentStrategy parse_augment_strategy(const std::string& name);
std::string augment_strategy_name(AugmentStrategy s);

struct AugmentContext {
    const HistoricalTravelTimes* hist = nullptr;
    double mask_ratio = 0.15;
    int mask_span = 2;
    double token_drop_prob = 0.1;
};

struct AugmentedView {
    Trajectory traj;
    std::vector<bool> masked;    // segment_mask flags (empty otherwise)
    std::vector<bool> dropped;   // dropout flags (empty otherwise)
    AugmentStrategy strategy = AugmentStrategy::trim;
};

AugmentedView augment(const Trajectory& traj, AugmentStrategy strategy,
                      const AugmentContext& ctx, Rng& rng);

struct PretrainConfig {
    double lambda = 0.6;
    double tau = 0.05;
    int batch_size = 64;
    int epochs = 30;
    double lr = 2e-4;
    int warmup_epochs = 5;
    double weight_decay = 0.01;
    double mask_ratio = 0.15;
    int mask_span = 2;
    AugmentStrategy aug1 = AugmentStrategy::trim;
    AugmentStrategy aug2 = AugmentStrategy::temporal_shift;
    std::uint64_t seed = 42;

    void validate() const;
};

/// One step's data, fixed before any tape is built so that loss evaluation
/// is a pure function of the parameters (required by the gradient checks).
struct PretrainStepData {
    std::vector<EncoderItem> masked_items;
    std::vector<std::vector<int>> mask_positions;   // Z-row indices (offset past CLS)
    std::vector<std::vector<int>> mask_targets;
    std::vector<EncoderItem> view_items;            // 2 N_b views, pair-ordered
    std::vector<int> pair_map;
};

PretrainStepData prepare_pretrain_step(const std::vector<const Trajectory*>& batch,
                                       const TokenIds& ids, const PretrainConfig& cfg,
                                       const HistoricalTravelTimes& hist, const Rng& root,
                                       int epoch, const std::vector<std::size_t>& traj_indices);

struct StepLossVars {
    ad::Var pre, mask, con;
};

/// Builds L^mask, L^con and L^pre = lambda*mask + (1-lambda)*con on the tape.
StepLossVars build_pretrain_loss(ad::Tape& tape, const TrajModel& model, const BoundModel& bound,
                                 const NetworkContext& ctx, const PretrainStepData& data,
                                 const PretrainConfig& cfg, const Ablations& abl, bool training,
                                 Rng* dropout_rng);

struct EpochLog {
    int epoch = 0;
    double loss_pre = 0.0;
    double loss_mask = 0.0;
    double loss_con = 0.0;
    double lr = 0.0;
};

struct PretrainResult {
    std::vector<EpochLog> epochs;
    double val_masked_accuracy = 0.0;
};

/// Full pretraining loop; updates model parameters in place and advances the
/// provided optimizer. Deterministic given cfg.seed.
PretrainResult run_pretraining(TrajModel& model, AdamW& opt, const NetworkContext& ctx,
                               const TrajectoryDataset& train, const TrajectoryDataset* val,
                               const PretrainConfig& cfg, const Ablations& abl,
                               const HistoricalTravelTimes& hist,
                               std::vector<std::string>* log_lines = nullptr);

/// Fraction of masked roads recovered by argmax on a span-masked encoding.
double masked_recovery_accuracy(const TrajModel& model, const NetworkContext& ctx,
                                const TrajectoryDataset& data, const PretrainConfig& cfg,
                                const Ablations& abl, std::uint64_t eval_seed);

} // namespace trajrep

#endif // TRAJREP_PRETRAIN_HPP

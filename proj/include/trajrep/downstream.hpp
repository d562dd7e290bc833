#ifndef TRAJREP_DOWNSTREAM_HPP
#define TRAJREP_DOWNSTREAM_HPP

#include <map>
#include <string>
#include <vector>

#include "trajrep/model.hpp"
#include "trajrep/pretrain.hpp"
#include "trajrep/trajdata.hpp"

namespace trajrep {

struct MetricsReport {
    std::string task;
    std::map<std::string, double> values;

    double at(const std::string& key) const;
};

struct FinetuneConfig {
    int epochs = 15;
    int batch_size = 64;
    double lr = 2e-4;
    int warmup_epochs = 5;
    double weight_decay = 0.01;
    std::uint64_t seed = 42;
};

/// Travel-time estimation. Only the departure timestamp is visible to the
/// encoder; the target is the trajectory duration in seconds.
struct EtaModel {
    TrajModel model;
    double target_mean = 0.0;   // affine output calibration fitted on train targets
    double target_scale = 1.0;
};

EtaModel finetune_eta(TrajModel model, const NetworkContext& ctx, const TrajectoryDataset& train,
                      const FinetuneConfig& cfg, const Ablations& abl,
                      std::vector<std::string>* log_lines = nullptr);

std::vector<double> predict_eta(const EtaModel& model, const NetworkContext& ctx,
                                const std::vector<Trajectory>& trajectories,
                                const Ablations& abl);

struct ClassifyModel {
    TrajModel model;
    int num_classes = 2;
};

/// Labels must lie in [0, num_classes).
ClassifyModel finetune_classify(TrajModel model, const NetworkContext& ctx,
                                const TrajectoryDataset& train, const std::vector<int>& labels,
                                int num_classes, const FinetuneConfig& cfg, const Ablations& abl,
                                std::vector<std::string>* log_lines = nullptr);

/// Softmax class distributions, one row per trajectory.
Mat classify(const ClassifyModel& model, const NetworkContext& ctx,
             const std::vector<Trajectory>& trajectories, const Ablations& abl);

MetricsReport regression_metrics(const std::vector<double>& y, const std::vector<double>& y_hat);

/// Binary task: ACC, F1 (positive class 1), AUC from P(class 1).
/// Multi-class: Micro-F1, Macro-F1, Recall@k for each k in `ks`.
MetricsReport classification_metrics(const std::vector<int>& y, const Mat& probs,
                                     const std::vector<int>& ks = {5});

void write_metrics_text(const MetricsReport& report, const std::string& path);
void write_metrics_json(const MetricsReport& report, const std::string& path,
                        const std::string& config_echo);

} // namespace trajrep

#endif // TRAJREP_DOWNSTREAM_HPP

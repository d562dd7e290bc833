#ifndef TRAJREP_CLI_HPP
#define TRAJREP_CLI_HPP

#include <memory>
#include <string>
#include <vector>

#include "trajrep/config.hpp"

namespace trajrep {

/// Loaded inputs shared by the training/evaluation commands. Non-movable:
/// datasets and the network context hold pointers into `network`.
struct Pipeline {
    RoadNetwork network;
    TrajectoryDataset corpus;
    DatasetSplits splits;
    TransferMatrix transfer;
    HistoricalTravelTimes hist;
    NetworkContext ctx;

    Pipeline() = default;
    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;
};

std::unique_ptr<Pipeline> load_pipeline(const ExperimentConfig& config);

int cmd_generate(const ExperimentConfig& config, const std::string& out_dir);
int cmd_pretrain(const ExperimentConfig& config, const std::string& out_dir);
int cmd_finetune(const ExperimentConfig& config, const std::string& task,
                 const std::string& checkpoint_path, const std::string& out_dir);
int cmd_embed(const ExperimentConfig& config, const std::string& checkpoint_path,
              const std::string& out_dir);
int cmd_eval_sim(const ExperimentConfig& config, const std::string& checkpoint_path,
                 const std::string& out_dir);
int cmd_report(const std::vector<std::string>& metrics_files, const std::string& loss_log,
               const std::string& out_dir);

/// Exit codes: 0 success, 1 validation/config failure, 2 usage error.
int run_cli(int argc, const char* const* argv);

} // namespace trajrep

#endif // TRAJREP_CLI_HPP

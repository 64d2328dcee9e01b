#pragma once

#include <filesystem>
#include <vector>

#include "fedmkg/config.hpp"
#include "fedmkg/fedproto.hpp"

namespace fedmkg {

// Builds the federated world from a partition directory written by
// cmd_partition.
struct BuiltWorld {
    PartitionManifest manifest;
    ServerState server;
    std::vector<ClientRuntime> clients;
};
BuiltWorld build_world(const ExperimentConfig& cfg);

struct TrainOutcome {
    TrainResult result;
    std::vector<RankingMetrics> test_per_client;
    RankingMetrics test_aggregate;
    std::filesystem::path metrics_csv;
    std::filesystem::path checkpoint_dir;
};

// Full training pipeline into out_dir: metrics.csv (one row per evaluated
// round/client/split), best-round checkpoint, config.json, manifest.json.
TrainOutcome run_training(const ExperimentConfig& cfg,
                          const std::filesystem::path& out_dir);

// Subcommand bodies; throw on failure (the CLI maps exceptions to exit
// codes).
void cmd_partition(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_eval(const ExperimentConfig& cfg,
              const std::filesystem::path& checkpoint_dir);
void cmd_ablate(const ExperimentConfig& cfg);

}  // namespace fedmkg

#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "fedmkg/dataset.hpp"
#include "fedmkg/state.hpp"

namespace fedmkg {

struct DatasetConfig {
    std::string source = "synthetic";  // "synthetic" | "files"
    std::string triples_path;
    std::string features_v_path;  // optional; synthesized when empty
    std::string features_d_path;
    SynthConfig synth;
    std::size_t feature_dim_v = 16;
    std::size_t feature_dim_d = 16;
    std::size_t variants_per_entity = 3;
};

// Full experiment document. Parsing is strict: unknown keys anywhere are a
// ConfigError, so a typo in a sweep never silently falls back to a default.
struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::string out = "run_out";
    std::string partition_dir;  // defaults to <out>/partition
    DatasetConfig dataset;
    PartitionConfig partition;
    TrainingConfig train;
    nlohmann::json sweep;  // axis -> array of values; validated by ablate

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);

    nlohmann::ordered_json to_json() const;  // canonical form
    // Hash of the canonical form minus output locations; ties checkpoints to
    // the configuration that produced them.
    std::string config_hash() const;

    std::filesystem::path partition_path() const {
        return partition_dir.empty()
                   ? std::filesystem::path(out) / "partition"
                   : std::filesystem::path(partition_dir);
    }
    void validate() const;
};

}  // namespace fedmkg

// Experiment harness: partition a multimodal KG into federated clients,
// train the federated model, evaluate checkpoints, and run ablation sweeps.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "fedmkg/commands.hpp"
#include "fedmkg/errors.hpp"
#include "fedmkg/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{"federated multimodal knowledge graph completion"};
    app.set_version_flag("--version", fedmkg::kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string checkpoint_dir;
    std::uint64_t seed_override = 0;
    bool have_seed = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config (json)")
            ->required();
        sub->add_option("--out", out_override, "output directory override");
        sub->add_option("--seed", seed_override, "root seed override")
            ->each([&](const std::string&) { have_seed = true; });
    };

    CLI::App* partition = app.add_subcommand(
        "partition", "build the per-client dataset directories");
    add_common(partition);
    CLI::App* train =
        app.add_subcommand("train", "federated training with early stopping");
    add_common(train);
    CLI::App* eval =
        app.add_subcommand("eval", "filtered test evaluation of a checkpoint");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")
        ->required();
    CLI::App* ablate =
        app.add_subcommand("ablate", "grid sweep over config axes");
    add_common(ablate);

    CLI11_PARSE(app, argc, argv);

    try {
        fedmkg::ExperimentConfig cfg = fedmkg::ExperimentConfig::load(config_path);
        if (have_seed) {
            cfg.seed = seed_override;
            cfg.partition.seed = seed_override;
            cfg.dataset.synth.seed = seed_override;
            cfg.train.seed = seed_override;
        }
        // Pin the partition location to the config's own output directory
        // before any --out override, so eval/train with --out still find it.
        if (cfg.partition_dir.empty())
            cfg.partition_dir = cfg.partition_path().string();
        if (!out_override.empty()) cfg.out = out_override;

        if (partition->parsed()) fedmkg::cmd_partition(cfg);
        if (train->parsed()) fedmkg::cmd_train(cfg);
        if (eval->parsed()) fedmkg::cmd_eval(cfg, checkpoint_dir);
        if (ablate->parsed()) fedmkg::cmd_ablate(cfg);
        return 0;
    } catch (const fedmkg::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

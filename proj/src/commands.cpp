#include "fedmkg/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "fedmkg/errors.hpp"
#include "fedmkg/kernels.hpp"
#include "fedmkg/version.hpp"

namespace fedmkg {

namespace fs = std::filesystem;

namespace {

double cosine(const double* a, const double* b, std::size_t n) {
    const double num = kern::dot(n, a, b);
    const double na = kern::dot(n, a, a);
    const double nb = kern::dot(n, b, b);
    return num / (std::sqrt(na * nb) + 1e-12);
}

// Mean pairwise cosine between clients' feature vectors of the same entity,
// over entities held by at least two clients.
double cross_client_similarity(const std::vector<ClientShard>& shards,
                               const std::vector<Matrix>& per_client,
                               std::size_t num_entities, std::size_t dim) {
    if (dim == 0) return 0.0;
    std::vector<std::vector<std::size_t>> holders(num_entities);
    for (const auto& s : shards)
        for (std::size_t g : s.entity_global)
            holders[g].push_back(static_cast<std::size_t>(s.client_id));
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t g = 0; g < num_entities; ++g) {
        const auto& h = holders[g];
        for (std::size_t a = 0; a < h.size(); ++a)
            for (std::size_t b = a + 1; b < h.size(); ++b) {
                total += cosine(per_client[h[a]].row(g), per_client[h[b]].row(g),
                                dim);
                ++count;
            }
    }
    return count > 0 ? total / static_cast<double>(count) : 0.0;
}

struct MetricsCsv {
    std::ofstream os;

    explicit MetricsCsv(const fs::path& path) : os(path) {
        if (!os) throw FormatError("cannot open for write: " + path.string());
        os << "round,client_id,split,hits1,hits3,hits10,mrr,wall_seconds\n";
    }

    void row(std::size_t round, const std::string& client, const char* split,
             const RankingMetrics& m, double wall) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%zu,%s,%s,%.6f,%.6f,%.6f,%.6f,%.3f\n",
                      round, client.c_str(), split, m.hits1, m.hits3, m.hits10,
                      m.mrr, wall);
        os << buf;
    }

    void eval_rows(std::size_t round, const char* split, const EvalResult& ev,
                   double wall) {
        for (const auto& m : ev.per_client) {
            const std::size_t idx = &m - ev.per_client.data();
            row(round, std::to_string(idx), split, m, wall);
        }
        if (ev.aggregate.triple_count > 0)
            row(round, "aggregate", split, ev.aggregate, wall);
    }
};

void print_metrics_table(const EvalResult& ev) {
    std::printf("%-10s %8s %8s %8s %8s %10s\n", "client", "hits@1", "hits@3",
                "hits@10", "mrr", "triples");
    for (std::size_t c = 0; c < ev.per_client.size(); ++c) {
        const auto& m = ev.per_client[c];
        std::printf("%-10zu %8.4f %8.4f %8.4f %8.4f %10zu\n", c, m.hits1,
                    m.hits3, m.hits10, m.mrr, m.triple_count);
    }
    const auto& a = ev.aggregate;
    std::printf("%-10s %8.4f %8.4f %8.4f %8.4f %10zu\n", "aggregate", a.hits1,
                a.hits3, a.hits10, a.mrr, a.triple_count);
}

}  // namespace

void cmd_partition(const ExperimentConfig& cfg) {
    MultimodalKG kg;
    Matrix latents;
    bool has_latents = false;

    if (cfg.dataset.source == "synthetic") {
        SynthKG synth = synth_kg(cfg.dataset.synth);
        kg = std::move(synth.kg);
        latents = std::move(synth.latents);
        has_latents = true;
        synth_features(kg, cfg.dataset.feature_dim_v, cfg.dataset.feature_dim_d,
                       cfg.dataset.variants_per_entity, cfg.seed,
                       has_latents ? &latents : nullptr);
    } else {
        kg = load_triples(cfg.dataset.triples_path);
        if (!cfg.dataset.features_v_path.empty() &&
            !cfg.dataset.features_d_path.empty()) {
            const Matrix fv = load_features(cfg.dataset.features_v_path,
                                            kg.num_entities());
            const Matrix fd = load_features(cfg.dataset.features_d_path,
                                            kg.num_entities());
            auto to_variants = [&](const Matrix& m) {
                FeatureVariants out;
                out.dim = m.cols;
                out.per_entity.resize(m.rows);
                for (std::size_t e = 0; e < m.rows; ++e)
                    out.per_entity[e].push_back(std::vector<double>(
                        m.row(e), m.row(e) + m.cols));
                return out;
            };
            kg.visual = to_variants(fv);
            kg.textual = to_variants(fd);
        } else {
            synth_features(kg, cfg.dataset.feature_dim_v,
                           cfg.dataset.feature_dim_d,
                           cfg.dataset.variants_per_entity, cfg.seed, nullptr);
        }
    }

    std::vector<ClientShard> shards = partition_by_relation(kg, cfg.partition);
    DirichletFeatures feats = partition_multimodal_dirichlet(kg, cfg.partition);
    for (ClientShard& s : shards) {
        split_train_valid_test(s, {0.8, 0.1, 0.1}, cfg.seed);
        const std::size_t n = s.num_entities();
        s.feat_v = Matrix(n, kg.visual.dim);
        s.feat_d = Matrix(n, kg.textual.dim);
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(feats.visual[s.client_id].row(s.entity_global[i]),
                        kg.visual.dim, s.feat_v.row(i));
            std::copy_n(feats.textual[s.client_id].row(s.entity_global[i]),
                        kg.textual.dim, s.feat_d.row(i));
        }
        generate_missing_masks(s, cfg.partition);
    }

    PartitionManifest man;
    man.seed = cfg.seed;
    man.dirichlet_alpha = cfg.partition.dirichlet_alpha;
    man.availability_rate = cfg.partition.availability_rate;
    man.num_clients = cfg.partition.num_clients;
    man.num_entities = kg.num_entities();
    man.num_relations = kg.num_relations();
    man.dim_v = kg.visual.dim;
    man.dim_d = kg.textual.dim;
    for (const auto& s : shards) {
        man.avg_relations += static_cast<double>(s.num_relations());
        man.avg_entities += static_cast<double>(s.num_entities());
        man.avg_triples += static_cast<double>(s.triples.size());
    }
    const double nc = static_cast<double>(shards.size());
    man.avg_relations /= nc;
    man.avg_entities /= nc;
    man.avg_triples /= nc;
    man.mean_cross_client_sim_v = cross_client_similarity(
        shards, feats.visual, kg.num_entities(), kg.visual.dim);
    man.mean_cross_client_sim_d = cross_client_similarity(
        shards, feats.textual, kg.num_entities(), kg.textual.dim);

    write_partition(cfg.partition_path(), shards, kg, man);
    std::printf("partition: %zu clients, %zu entities, %zu relations -> %s\n",
                man.num_clients, man.num_entities, man.num_relations,
                cfg.partition_path().string().c_str());
}

BuiltWorld build_world(const ExperimentConfig& cfg) {
    PartitionData pd = read_partition(cfg.partition_path());
    BuiltWorld w;
    w.manifest = pd.manifest;
    Rng root(cfg.seed);
    w.server = make_server(pd.manifest.num_entities, pd.manifest.dim_v,
                           pd.manifest.dim_d, cfg.train, root);
    for (ClientShard& s : pd.shards)
        w.clients.push_back(ClientRuntime::make(std::move(s), cfg.train,
                                                pd.manifest.num_entities));
    return w;
}

TrainOutcome run_training(const ExperimentConfig& cfg,
                          const fs::path& out_dir) {
    fs::create_directories(out_dir);
    BuiltWorld world = build_world(cfg);

    if (cfg.train.warmstart_rounds > 0)
        warmstart_structural(world.server, world.clients,
                             cfg.train.warmstart_rounds, cfg.train);
    if (cfg.train.imputer_warmup_steps > 0)
        warmup_imputer(world.server, world.clients,
                       cfg.train.imputer_warmup_steps, cfg.train);

    TrainOutcome outcome;
    outcome.metrics_csv = out_dir / "metrics.csv";
    MetricsCsv csv(outcome.metrics_csv);

    auto on_round = [&](std::size_t round, const EvalResult& valid,
                        double wall) {
        csv.eval_rows(round, "valid", valid, wall);
    };
    TrainResult result =
        train_until_stop(world.server, world.clients, cfg.train, on_round);

    if (result.rounds_run > 0) {
        restore(result.best, world.server, world.clients);
        const auto start = std::chrono::steady_clock::now();
        EvalResult test = evaluate_clients(world.clients, cfg.train,
                                           SplitKind::Test);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          start)
                .count();
        csv.eval_rows(result.best_round, "test", test, wall);
        outcome.test_per_client = test.per_client;
        outcome.test_aggregate = test.aggregate;
    }

    outcome.checkpoint_dir = out_dir / "checkpoint";
    save_checkpoint(outcome.checkpoint_dir,
                    result.rounds_run > 0 ? result.best
                                          : snapshot(world.server, world.clients),
                    cfg.seed, cfg.config_hash());

    {
        std::ofstream os(out_dir / "config.json");
        os << cfg.to_json().dump(2) << '\n';
    }
    {
        nlohmann::ordered_json j;
        j["version"] = kVersion;
        j["seed"] = cfg.seed;
        j["config_hash"] = cfg.config_hash();
        j["rounds_run"] = result.rounds_run;
        j["best_round"] = result.best_round;
        j["best_valid_mrr"] = result.best_valid_mrr;
        std::ofstream os(out_dir / "manifest.json");
        os << j.dump(2) << '\n';
    }
    outcome.result = std::move(result);
    return outcome;
}

void cmd_train(const ExperimentConfig& cfg) {
    TrainOutcome outcome = run_training(cfg, cfg.out);
    std::printf("train: %zu rounds, best round %zu, best valid mrr %.4f\n",
                outcome.result.rounds_run, outcome.result.best_round,
                outcome.result.best_valid_mrr);
    if (outcome.result.rounds_run > 0) {
        std::printf("test aggregate: mrr %.4f hits@10 %.4f\n",
                    outcome.test_aggregate.mrr, outcome.test_aggregate.hits10);
    }
}

void cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint_dir) {
    std::uint64_t seed = 0;
    std::string hash;
    Checkpoint ckpt = load_checkpoint(checkpoint_dir, &seed, &hash);
    if (hash != cfg.config_hash())
        throw ConfigError("checkpoint/config hash mismatch: checkpoint " +
                          hash + " vs config " + cfg.config_hash());

    BuiltWorld world = build_world(cfg);
    restore(ckpt, world.server, world.clients);

    EvalResult test = evaluate_clients(world.clients, cfg.train, SplitKind::Test);
    fs::create_directories(cfg.out);
    MetricsCsv csv(fs::path(cfg.out) / "eval_metrics.csv");
    csv.eval_rows(ckpt.round, "test", test, 0.0);
    print_metrics_table(test);
}

namespace {

struct SweepAxis {
    std::string name;
    std::vector<nlohmann::json> values;
};

void apply_override(ExperimentConfig& cfg, const std::string& axis,
                    const nlohmann::json& value) {
    if (axis == "availability_rate")
        cfg.partition.availability_rate = value.get<double>();
    else if (axis == "fusion")
        cfg.train.fusion = fusion_kind_from_string(value.get<std::string>());
    else if (axis == "imputer")
        cfg.train.imputer = imputer_kind_from_string(value.get<std::string>());
    else if (axis == "objective")
        cfg.train.objective =
            objective_kind_from_string(value.get<std::string>());
    else if (axis == "recon")
        cfg.train.recon = recon_kind_from_string(value.get<std::string>());
    else if (axis == "lambda")
        cfg.train.weights.lambda = value.get<double>();
    else if (axis == "mu")
        cfg.train.weights.mu = value.get<double>();
    else if (axis == "eta")
        cfg.train.weights.eta = value.get<double>();
    else if (axis == "diffusion_steps")
        cfg.train.diffusion_steps = value.get<std::size_t>();
    else
        throw ConfigError("unknown sweep axis: " + axis);
}

std::string value_label(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

}  // namespace

void cmd_ablate(const ExperimentConfig& cfg) {
    // Fixed axis order keeps grid labels and the consolidated CSV stable.
    static const char* kAxisOrder[] = {
        "availability_rate", "fusion", "imputer", "objective", "recon",
        "lambda", "mu", "eta", "diffusion_steps"};
    std::vector<SweepAxis> axes;
    if (!cfg.sweep.is_null()) {
        for (const char* name : kAxisOrder) {
            if (!cfg.sweep.contains(name)) continue;
            const auto& arr = cfg.sweep.at(name);
            if (!arr.is_array() || arr.empty())
                throw ConfigError("sweep axis " + std::string(name) +
                                  " must be a non-empty array");
            SweepAxis axis;
            axis.name = name;
            for (const auto& v : arr) axis.values.push_back(v);
            axes.push_back(std::move(axis));
        }
        for (const auto& [key, value] : cfg.sweep.items()) {
            bool known = false;
            for (const char* name : kAxisOrder)
                if (key == name) known = true;
            if (!known) throw ConfigError("unknown sweep axis: " + key);
        }
    }

    std::vector<std::vector<std::size_t>> points;
    std::vector<std::size_t> cursor(axes.size(), 0);
    for (;;) {
        points.push_back(cursor);
        std::size_t i = 0;
        for (; i < axes.size(); ++i) {
            if (++cursor[i] < axes[i].values.size()) break;
            cursor[i] = 0;
        }
        if (i == axes.size()) break;
        if (axes.empty()) break;
    }
    if (axes.empty()) points = {{}};

    fs::create_directories(cfg.out);
    std::ofstream csv(fs::path(cfg.out) / "ablation.csv");
    for (const auto& axis : axes) csv << axis.name << ',';
    csv << "best_round,hits1,hits3,hits10,mrr\n";

    for (const auto& point : points) {
        ExperimentConfig run_cfg = cfg;
        run_cfg.sweep = nlohmann::json::object();
        std::string label = "base";
        for (std::size_t i = 0; i < axes.size(); ++i) {
            apply_override(run_cfg, axes[i].name, axes[i].values[point[i]]);
            const std::string part =
                axes[i].name + "=" + value_label(axes[i].values[point[i]]);
            label = i == 0 ? part : label + "," + part;
        }
        run_cfg.validate();
        run_cfg.out = (fs::path(cfg.out) / "sweep" / label).string();
        run_cfg.partition_dir = (fs::path(run_cfg.out) / "partition").string();

        std::printf("ablate: %s\n", label.c_str());
        cmd_partition(run_cfg);
        TrainOutcome outcome = run_training(run_cfg, run_cfg.out);

        for (std::size_t i = 0; i < axes.size(); ++i)
            csv << value_label(axes[i].values[point[i]]) << ',';
        char buf[120];
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f\n",
                      outcome.result.best_round, outcome.test_aggregate.hits1,
                      outcome.test_aggregate.hits3,
                      outcome.test_aggregate.hits10,
                      outcome.test_aggregate.mrr);
        csv << buf;
    }
}

}  // namespace fedmkg

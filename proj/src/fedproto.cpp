#include "fedmkg/fedproto.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fedmkg/errors.hpp"
#include "fedmkg/kernels.hpp"

namespace fedmkg {

void distribute(const ServerState& server, ClientRuntime& client,
                const TrainingConfig& cfg) {
    const auto& map = client.shard.entity_global;
    for (std::size_t g : map)
        if (g >= server.S.rows)
            throw IndexError("distribute: entity map outside global table");

    auto gather_into = [&](Matrix& dst) {
        for (std::size_t i = 0; i < map.size(); ++i)
            std::copy_n(server.S.row(map[i]), server.S.cols, dst.row(i));
    };
    gather_into(client.S.value);
    if (!cfg.structure_only) {
        client.W_v.value = server.W_v;
        client.W_d.value = server.W_d;
    }
    if (cfg.uses_replica() && !cfg.structure_only) {
        gather_into(client.S_repl.value);
        client.Wv_repl.value = server.W_v;
        client.Wd_repl.value = server.W_d;
    }
    if (cfg.uses_reference() && !cfg.structure_only) {
        client.S_ref = Matrix(map.size(), server.S.cols);
        gather_into(client.S_ref);
        client.Wv_ref = server.W_v;
        client.Wd_ref = server.W_d;
        // Entire anchor frozen at round start, fusion parameters included.
        client.ref_emb = reference_embeddings(client, cfg);
    }
}

ClientUpload make_upload(const ClientRuntime& client,
                         const TrainingConfig& cfg) {
    ClientUpload up;
    up.client_id = client.shard.client_id;
    up.replica_variant = cfg.uses_replica() && !cfg.structure_only;
    if (up.replica_variant) {
        up.structural = client.S_repl.value;
        up.w_v = client.Wv_repl.value;
        up.w_d = client.Wd_repl.value;
    } else {
        up.structural = client.S.value;
        up.w_v = client.W_v.value;
        up.w_d = client.W_d.value;
    }
    up.train_triples = client.shard.train.size();
    return up;
}

void aggregate_structural(ServerState& server,
                          const std::vector<ClientUpload>& uploads,
                          const std::vector<ClientRuntime>& clients) {
    Matrix sums(server.S.rows, server.S.cols);
    std::vector<std::size_t> counts(server.S.rows, 0);
    for (const ClientUpload& up : uploads) {
        const ClientRuntime& client = clients.at(up.client_id);
        const auto& map = client.shard.entity_global;
        if (up.structural.rows != map.size() ||
            up.structural.cols != server.S.cols)
            throw DimensionError("aggregate_structural: upload shape mismatch");
        for (std::size_t i = 0; i < map.size(); ++i) {
            kern::axpy(server.S.cols, 1.0, up.structural.row(i),
                       sums.row(map[i]));
            counts[map[i]] += 1;
        }
    }
    for (std::size_t g = 0; g < server.S.rows; ++g) {
        if (counts[g] == 0) continue;  // uncovered rows keep previous values
        kern::scale(server.S.cols, 1.0 / static_cast<double>(counts[g]),
                    sums.row(g), server.S.row(g));
    }
}

std::vector<double> upload_alphas(const std::vector<ClientUpload>& uploads) {
    double total = 0;
    for (const auto& up : uploads)
        total += static_cast<double>(up.train_triples);
    if (total == 0.0)
        throw ContractError("upload_alphas: zero total train triples");
    std::vector<double> alphas;
    alphas.reserve(uploads.size());
    for (const auto& up : uploads)
        alphas.push_back(static_cast<double>(up.train_triples) / total);
    return alphas;
}

void aggregate_weights(ServerState& server,
                       const std::vector<ClientUpload>& uploads,
                       const std::vector<double>& alphas) {
    if (uploads.size() != alphas.size())
        throw DimensionError("aggregate_weights: one alpha per upload");
    double sum = 0;
    for (double a : alphas) sum += a;
    if (std::fabs(sum - 1.0) > 1e-9)
        throw ContractError("aggregate_weights: weights must sum to 1");
    Matrix wv(server.W_v.rows, server.W_v.cols);
    Matrix wd(server.W_d.rows, server.W_d.cols);
    for (std::size_t i = 0; i < uploads.size(); ++i) {
        if (!uploads[i].w_v.same_shape(wv) || !uploads[i].w_d.same_shape(wd))
            throw DimensionError("aggregate_weights: upload shape mismatch");
        kern::axpy(wv.count(), alphas[i], uploads[i].w_v.data.data(),
                   wv.data.data());
        kern::axpy(wd.count(), alphas[i], uploads[i].w_d.data.data(),
                   wd.data.data());
    }
    server.W_v = std::move(wv);
    server.W_d = std::move(wd);
}

namespace {

std::vector<int> sample_participants(std::size_t num_clients,
                                     const TrainingConfig& cfg,
                                     std::size_t round) {
    std::vector<int> all(num_clients);
    for (std::size_t i = 0; i < num_clients; ++i) all[i] = static_cast<int>(i);
    if (cfg.client_fraction >= 1.0) return all;  // default: every client
    const std::size_t take = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::ceil(cfg.client_fraction * static_cast<double>(num_clients))));
    Rng rng = Rng(cfg.seed).fork("sampling/round" + std::to_string(round));
    rng.shuffle(all);
    all.resize(take);
    std::sort(all.begin(), all.end());
    return all;
}

void update_prev_emb(ClientRuntime& client, const TrainingConfig& cfg,
                     std::size_t round) {
    // Previous-round embeddings for the contrastive baseline, in the same
    // representation the objective compares against.
    Rng rng = Rng(client.root_seed)
                  .fork("ec_prev/client" +
                        std::to_string(client.shard.client_id) + "/round" +
                        std::to_string(round));
    Tape t;
    ClientEmbeddings ce = build_client_embeddings(t, client, cfg, rng, true);
    if (cfg.fusion == FusionKind::Split && !cfg.structure_only) {
        Var hyper = ce.imputed.valid() ? ce.imputed
                                       : build_hypermodal(t, ce.S, ce.V, ce.D);
        client.prev_emb = t.val(hyper);
    } else {
        client.prev_emb = t.val(ce.fused);
    }
}

}  // namespace

RoundDiagnostics run_round(ServerState& server,
                           std::vector<ClientRuntime>& clients,
                           const TrainingConfig& cfg) {
    RoundDiagnostics diag;
    diag.participants = sample_participants(clients.size(), cfg, server.round);
    std::vector<ClientUpload> uploads;
    uploads.reserve(diag.participants.size());

    const AdamConfig adam = cfg.adam();
    for (int cid : diag.participants) {
        ClientRuntime& client = clients[cid];
        distribute(server, client, cfg);

        std::vector<TrainExample> examples = make_examples(client.shard);
        if (examples.empty())
            throw ContractError("run_round: client has no training triples");
        auto params = client.trainable(cfg);
        for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
            client.train_rng.shuffle(examples);
            for (std::size_t begin = 0; begin < examples.size();
                 begin += cfg.batch_size) {
                const std::size_t end =
                    std::min(begin + cfg.batch_size, examples.size());
                Batch batch = make_batch(examples, begin, end);
                Tape tape;
                LossParts parts = build_total_loss(tape, client, cfg, batch,
                                                   client.train_rng);
                if (!std::isfinite(parts.total_value))
                    throw NumericError(
                        "non-finite loss: round " +
                        std::to_string(server.round) + ", client " +
                        std::to_string(cid) + ", epoch " +
                        std::to_string(epoch));
                tape.backward(parts.total);
                for (Param* p : params) {
                    adam_step(*p, adam);
                    p->zero_grad();
                }
                diag.steps.push_back({cid, parts.total_value,
                                      parts.kgc_client, parts.kgc_server,
                                      parts.di, parts.ld, parts.fd,
                                      parts.extra});
            }
        }
        uploads.push_back(make_upload(client, cfg));
        if (cfg.objective == ObjectiveKind::MMFedEC && !cfg.structure_only)
            update_prev_emb(client, cfg, server.round);
    }

    aggregate_structural(server, uploads, clients);
    if (!cfg.structure_only)
        aggregate_weights(server, uploads, upload_alphas(uploads));
    server.round += 1;
    return diag;
}

EvalResult evaluate_clients(std::vector<ClientRuntime>& clients,
                            const TrainingConfig& cfg, SplitKind split) {
    const char* split_name = split == SplitKind::Train   ? "train"
                             : split == SplitKind::Valid ? "valid"
                                                         : "test";
    EvalResult out;
    for (ClientRuntime& client : clients) {
        Rng eval_rng = Rng(cfg.seed).fork(
            std::string("eval/") + split_name + "/client" +
            std::to_string(client.shard.client_id));
        EvalModel model = client_eval_model(client, cfg, std::move(eval_rng));
        auto scorer = model.scorer();
        const std::vector<Triple>& triples = split == SplitKind::Train
                                                 ? client.shard.train
                                                 : split == SplitKind::Valid
                                                       ? client.shard.valid
                                                       : client.shard.test;
        out.per_client.push_back(evaluate_split(
            triples, client.shard.num_relations(), *scorer, client.filter));
    }
    std::size_t total = 0;
    for (const auto& m : out.per_client) total += m.triple_count;
    if (total > 0) out.aggregate = aggregate_metrics(out.per_client);
    return out;
}

Checkpoint snapshot(const ServerState& server,
                    std::vector<ClientRuntime>& clients) {
    Checkpoint ckpt;
    ckpt.server = server;
    ckpt.round = server.round;
    for (ClientRuntime& c : clients) {
        std::map<std::string, Matrix> params;
        for (auto& [name, p] : c.named_params()) params[name] = p->value;
        ckpt.client_params.push_back(std::move(params));
    }
    return ckpt;
}

void restore(const Checkpoint& ckpt, ServerState& server,
             std::vector<ClientRuntime>& clients) {
    if (ckpt.client_params.size() != clients.size())
        throw ContractError("restore: client count mismatch");
    server = ckpt.server;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        for (auto& [name, p] : clients[i].named_params()) {
            auto it = ckpt.client_params[i].find(name);
            if (it == ckpt.client_params[i].end())
                throw ContractError("restore: missing parameter " + name);
            if (!it->second.same_shape(p->value))
                throw DimensionError("restore: shape mismatch for " + name);
            p->value = it->second;
        }
    }
}

TrainResult train_until_stop(ServerState& server,
                             std::vector<ClientRuntime>& clients,
                             const TrainingConfig& cfg,
                             const RoundCallback& on_round) {
    TrainResult result;
    std::size_t since_improve = 0;
    bool any_valid = false;
    for (const ClientRuntime& c : clients)
        if (!c.shard.valid.empty()) any_valid = true;

    for (std::size_t round = 1; round <= cfg.rounds; ++round) {
        const auto start = std::chrono::steady_clock::now();
        run_round(server, clients, cfg);
        EvalResult valid = evaluate_clients(clients, cfg, SplitKind::Valid);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          start)
                .count();
        result.rounds_run = round;
        result.valid_history.push_back(valid);
        if (on_round) on_round(round, valid, wall);

        if (!any_valid) continue;  // nothing to stop on
        if (valid.aggregate.mrr > result.best_valid_mrr) {
            result.best_valid_mrr = valid.aggregate.mrr;
            result.best_round = round;
            result.best = snapshot(server, clients);
            result.best.round = round;  // log-round numbering, warm start aside
            since_improve = 0;
        } else {
            since_improve += 1;
            if (since_improve >= cfg.patience) break;
        }
    }
    if (result.best_round == 0) result.best = snapshot(server, clients);
    return result;
}

void warmstart_structural(ServerState& server,
                          std::vector<ClientRuntime>& clients,
                          std::size_t rounds, const TrainingConfig& cfg) {
    TrainingConfig warm = cfg;
    warm.structure_only = true;
    warm.objective = ObjectiveKind::MMFedE;
    for (std::size_t r = 0; r < rounds; ++r) run_round(server, clients, warm);
}

void warmup_imputer(ServerState& server, std::vector<ClientRuntime>& clients,
                    std::size_t steps, const TrainingConfig& cfg) {
    if (steps == 0) return;
    // Staged optimization: the reconstruction network trains alone against
    // the local objective (ranking through the imputed embeddings plus the
    // masked reconstruction term) while every other parameter stays frozen.
    // Entering federated training with a useful imputer keeps the fusion
    // weights from writing the modal blocks off before imputation matures.
    TrainingConfig warm = cfg;
    warm.objective = ObjectiveKind::MMFedE;
    const AdamConfig adam = cfg.adam();
    for (ClientRuntime& client : clients) {
        if (!client.imputer.active()) continue;
        distribute(server, client, warm);
        std::vector<TrainExample> examples = make_examples(client.shard);
        if (examples.empty()) continue;
        Rng rng = Rng(client.root_seed)
                      .fork("imputer_warmup/client" +
                            std::to_string(client.shard.client_id));
        auto params = client.imputer.trainable();
        std::size_t cursor = examples.size();
        for (std::size_t s = 0; s < steps; ++s) {
            if (cursor >= examples.size()) {
                rng.shuffle(examples);
                cursor = 0;
            }
            const std::size_t end =
                std::min(cursor + warm.batch_size, examples.size());
            Batch batch = make_batch(examples, cursor, end);
            cursor = end;
            Tape t;
            LossParts parts = build_total_loss(t, client, warm, batch, rng);
            t.backward(parts.total);
            for (Param* p : params) {
                adam_step(*p, adam);
                p->zero_grad();
            }
        }
    }
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt,
                     std::uint64_t seed, const std::string& config_hash) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "server");
    write_matrix(dir / "server" / "S.bin", ckpt.server.S, 2);
    write_matrix(dir / "server" / "W_v.bin", ckpt.server.W_v, 2);
    write_matrix(dir / "server" / "W_d.bin", ckpt.server.W_d, 2);
    for (std::size_t c = 0; c < ckpt.client_params.size(); ++c) {
        const fs::path cdir = dir / ("client_" + std::to_string(c));
        fs::create_directories(cdir);
        for (const auto& [name, m] : ckpt.client_params[c])
            write_matrix(cdir / (name + ".bin"), m, 2);
    }
    nlohmann::ordered_json j;
    j["round"] = ckpt.round;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["num_clients"] = ckpt.client_params.size();
    std::ofstream os(dir / "manifest.json");
    os << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           std::uint64_t* seed_out,
                           std::string* config_hash_out) {
    namespace fs = std::filesystem;
    std::ifstream is(dir / "manifest.json");
    if (!is) throw FormatError("missing checkpoint manifest in " + dir.string());
    nlohmann::json j = nlohmann::json::parse(is);
    Checkpoint ckpt;
    ckpt.round = j.at("round").get<std::size_t>();
    if (seed_out) *seed_out = j.at("seed").get<std::uint64_t>();
    if (config_hash_out) *config_hash_out = j.at("config_hash").get<std::string>();
    ckpt.server.S = read_matrix(dir / "server" / "S.bin");
    ckpt.server.W_v = read_matrix(dir / "server" / "W_v.bin");
    ckpt.server.W_d = read_matrix(dir / "server" / "W_d.bin");
    ckpt.server.round = ckpt.round;
    const std::size_t num_clients = j.at("num_clients").get<std::size_t>();
    for (std::size_t c = 0; c < num_clients; ++c) {
        const fs::path cdir = dir / ("client_" + std::to_string(c));
        std::map<std::string, Matrix> params;
        for (const auto& entry : fs::directory_iterator(cdir)) {
            if (entry.path().extension() != ".bin") continue;
            params[entry.path().stem().string()] = read_matrix(entry.path());
        }
        ckpt.client_params.push_back(std::move(params));
    }
    return ckpt;
}

}  // namespace fedmkg

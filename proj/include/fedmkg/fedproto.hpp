#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fedmkg/objectives.hpp"
#include "fedmkg/state.hpp"

namespace fedmkg {

// What a client sends at the end of a round. Relation tables have no field
// here: they never leave the client. The MMFeD3-style objectives upload
// their replica branch, everything else uploads the local parameters.
struct ClientUpload {
    int client_id = -1;
    bool replica_variant = false;
    Matrix structural;  // rows in local entity order
    Matrix w_v, w_d;
    std::size_t train_triples = 0;

    static constexpr const char* kFields[] = {
        "client_id", "replica_variant", "structural", "w_v", "w_d",
        "train_triples"};
};

// Gathers global rows into the client's local slots; replicas and frozen
// references are refreshed according to the objective.
void distribute(const ServerState& server, ClientRuntime& client,
                const TrainingConfig& cfg);

ClientUpload make_upload(const ClientRuntime& client,
                         const TrainingConfig& cfg);

// S_s[g] = sum of uploaded rows for g / #uploaders holding g; entities not
// covered by any upload keep their previous rows. Order-insensitive up to
// fp addition order.
void aggregate_structural(ServerState& server,
                          const std::vector<ClientUpload>& uploads,
                          const std::vector<ClientRuntime>& clients);

// Convex combination of projection weights; |sum(alpha) - 1| <= 1e-9.
void aggregate_weights(ServerState& server,
                       const std::vector<ClientUpload>& uploads,
                       const std::vector<double>& alphas);

// Train-split triple-count weights over the uploads.
std::vector<double> upload_alphas(const std::vector<ClientUpload>& uploads);

struct StepLoss {
    int client = -1;
    double total = 0, kgc_client = 0, kgc_server = 0, di = 0, ld = 0, fd = 0,
           extra = 0;
};

struct RoundDiagnostics {
    std::vector<StepLoss> steps;
    std::vector<int> participants;
};

// One communication round: distribute, local epochs with Adam on every owned
// parameter, upload, aggregate. Clients run sequentially in id order;
// aggregation happens only at the end-of-round barrier. Throws NumericError
// on a non-finite loss.
RoundDiagnostics run_round(ServerState& server,
                           std::vector<ClientRuntime>& clients,
                           const TrainingConfig& cfg);

struct EvalResult {
    std::vector<RankingMetrics> per_client;
    RankingMetrics aggregate;
};

enum class SplitKind { Train, Valid, Test };

// Filtered both-direction ranking with the client's inference embeddings.
// Deterministic: imputation noise comes from a stream named by the split and
// client id only.
EvalResult evaluate_clients(std::vector<ClientRuntime>& clients,
                            const TrainingConfig& cfg, SplitKind split);

// Parameter snapshot by name, per client, plus the server state.
struct Checkpoint {
    ServerState server;
    std::vector<std::map<std::string, Matrix>> client_params;
    std::size_t round = 0;
};

Checkpoint snapshot(const ServerState& server,
                    std::vector<ClientRuntime>& clients);
void restore(const Checkpoint& ckpt, ServerState& server,
             std::vector<ClientRuntime>& clients);

struct TrainResult {
    std::size_t rounds_run = 0;
    std::size_t best_round = 0;  // 1-based; 0 = never evaluated
    double best_valid_mrr = -1.0;
    Checkpoint best;
    std::vector<EvalResult> valid_history;
};

using RoundCallback = std::function<void(
    std::size_t round, const EvalResult& valid, double wall_seconds)>;

// Runs up to cfg.rounds rounds, evaluating the validation split after each;
// stops once `patience` consecutive evaluations fail to improve the
// aggregate MRR, and returns the best-round snapshot.
TrainResult train_until_stop(ServerState& server,
                             std::vector<ClientRuntime>& clients,
                             const TrainingConfig& cfg,
                             const RoundCallback& on_round = nullptr);

// Structure-only federated pre-training (no fusion, imputer, distillation,
// or projection updates); seeds the structural space before the full
// objective runs. Touches only S (clients and server) and R.
void warmstart_structural(ServerState& server,
                          std::vector<ClientRuntime>& clients,
                          std::size_t rounds, const TrainingConfig& cfg);

// Local reconstruction-only warm-up of each client's imputer network on the
// current (post warm start) hyper-modal matrix. Touches only the imputer
// parameters; no-op for the None imputer.
void warmup_imputer(ServerState& server, std::vector<ClientRuntime>& clients,
                    std::size_t steps, const TrainingConfig& cfg);

// --- checkpoint directory ------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt,
                     std::uint64_t seed, const std::string& config_hash);
Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           std::uint64_t* seed_out = nullptr,
                           std::string* config_hash_out = nullptr);

}  // namespace fedmkg

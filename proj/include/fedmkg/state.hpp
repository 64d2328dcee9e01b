#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fedmkg/dataset.hpp"
#include "fedmkg/fusion.hpp"
#include "fedmkg/hide.hpp"
#include "fedmkg/kge.hpp"
#include "fedmkg/optim.hpp"

namespace fedmkg {

enum class ObjectiveKind { MMFedE, MMFedEC, MMFedProx, MMFedLU, MMFeD3 };

ObjectiveKind objective_kind_from_string(const std::string& s);
const char* to_string(ObjectiveKind k);

struct LossWeights {
    double lambda = 1.0;  // imputation objective
    double mu = 1.0;      // logit distillation
    double eta = 1.0;     // feature distillation
    double tau = 0.5;     // contrastive temperature
    double rho = 1.0;     // proximal coefficient
};

struct TrainingConfig {
    std::size_t rounds = 30;
    std::size_t local_epochs = 3;
    std::size_t batch_size = 1024;
    std::size_t patience = 5;
    std::size_t negatives = 256;
    double lr = 1e-3;  // not stated in the source method; config choice
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double margin = 9.0;
    std::size_t entity_dim = 32;
    std::size_t relation_dim = 16;  // must equal entity_dim / 2
    double client_fraction = 1.0;
    std::size_t warmstart_rounds = 0;
    // Local reconstruction-only steps after the structural warm start, so
    // the imputer is already useful when the full objective begins.
    std::size_t imputer_warmup_steps = 0;

    ObjectiveKind objective = ObjectiveKind::MMFeD3;
    FusionKind fusion = FusionKind::Weighted;
    ImputerKind imputer = ImputerKind::HidE;
    ReconKind recon = ReconKind::Cra;
    std::size_t diffusion_steps = 10;
    double beta_low = 5e-4;
    double beta_up = 5e-2;
    double beta_scale = 1.0;
    std::size_t chain_start = 0;  // 0 = full chain

    LossWeights weights;
    std::uint64_t seed = 0;

    bool fd_full_table = false;   // feature distillation over every entity
    bool structure_only = false;  // warm-start mode: E = S, no projections

    void validate() const;
    AdamConfig adam() const { return {lr, adam_beta1, adam_beta2, adam_eps}; }
    DiffusionSchedule schedule() const {
        return DiffusionSchedule::linear(diffusion_steps, beta_low, beta_up,
                                         beta_scale);
    }
    bool uses_replica() const {
        return objective == ObjectiveKind::MMFeD3 ||
               objective == ObjectiveKind::MMFedLU;
    }
    bool uses_reference() const {
        return objective == ObjectiveKind::MMFedEC ||
               objective == ObjectiveKind::MMFedProx;
    }
};

// Global state held by the server between rounds.
struct ServerState {
    Matrix S;            // num_entities x d_e
    Matrix W_v, W_d;     // d_m x d_e
    std::size_t round = 0;
};

ServerState make_server(std::size_t num_entities, std::size_t dim_v,
                        std::size_t dim_d, const TrainingConfig& cfg,
                        Rng& rng);

// Everything one client owns: its shard, trainable parameters, the replica
// of the global branch when the objective trains one, frozen round-start
// references for the proximal/contrastive baselines, and its own rng
// stream. Exactly one thread drives a ClientRuntime.
struct ClientRuntime {
    ClientShard shard;
    FilterIndex filter;
    Matrix hyper_mask;  // n x 3*d_e

    Param S;            // local structural embeddings
    Param R;            // doubled relation table
    Param W_v, W_d;     // local projection weights
    FusionParams fusion;
    Param R_v, R_d;     // split fusion: per-modality relation tables
    Imputer imputer;

    Param S_repl, Wv_repl, Wd_repl;  // server-branch replicas
    Matrix S_ref, Wv_ref, Wd_ref;    // frozen round-start globals
    Matrix ref_emb;                  // round-start global embeddings (frozen)
    Matrix prev_emb;                 // previous-round embeddings (contrastive)

    Rng train_rng{0};
    std::uint64_t root_seed = 0;

    static ClientRuntime make(ClientShard shard, const TrainingConfig& cfg,
                              std::size_t global_entities);

    std::size_t num_entities() const { return shard.num_entities(); }
    std::vector<Param*> trainable(const TrainingConfig& cfg);
    std::vector<std::pair<std::string, Param*>> named_params();
};

// Inference-time view of a client model: fused (plus imputed) entity matrix
// for the standard path, or the three modal tables for split fusion.
struct EvalModel {
    bool split = false;
    Matrix entities;
    Matrix relations;
    Matrix S, V, D;
    Matrix Rs, Rv, Rd;
    double margin = 9.0;

    std::unique_ptr<EntityScorer> scorer() const;
};

// Deterministic given eval_rng; imputation noise comes only from it.
EvalModel client_eval_model(ClientRuntime& client, const TrainingConfig& cfg,
                            Rng eval_rng);

}  // namespace fedmkg

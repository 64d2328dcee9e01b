#pragma once

#include <vector>

#include "fedmkg/state.hpp"
#include "fedmkg/tape.hpp"

namespace fedmkg {

// A tail-form training query: head queries are already rewritten through the
// inverse relation rows.
struct TrainExample {
    std::size_t head = 0;
    std::size_t rel_row = 0;
    std::size_t target = 0;
};

// Both directions per training triple.
std::vector<TrainExample> make_examples(const ClientShard& shard);

struct Batch {
    std::vector<std::size_t> heads;
    std::vector<std::size_t> rel_rows;
    std::vector<std::size_t> targets;
    std::vector<std::size_t> batch_entities;  // unique heads + targets
};

Batch make_batch(const std::vector<TrainExample>& examples, std::size_t begin,
                 std::size_t end);

struct ClientEmbeddings {
    Var S, V, D;   // modal matrices (V/D imputed when the imputer ran)
    Var fused;     // invalid for split fusion
    Var x0;        // hyper-modal input node, when built
    Var imputed;   // merged hyper-modal matrix, when built
};

struct ServerEmbeddings {
    Var S, V, D;
    Var fused;
};

ClientEmbeddings build_client_embeddings(Tape& t, ClientRuntime& client,
                                         const TrainingConfig& cfg, Rng& rng,
                                         bool imputed);
ServerEmbeddings build_server_embeddings(Tape& t, ClientRuntime& client,
                                         const TrainingConfig& cfg);

struct LossParts {
    Var total;
    double total_value = 0;
    double kgc_client = 0;
    double kgc_server = 0;
    double di = 0;
    double ld = 0;
    double fd = 0;
    double extra = 0;  // contrastive or proximal term
    Matrix pred_client;  // prediction rows (logits, or probs for split)
    Matrix pred_server;
    Matrix x0_client;  // hyper-modal input, when an imputer ran
};

// Detached quantities pinned to fixed values. Training never needs this:
// the KL ops detach their teacher argument and the imputation objective
// detaches its input. Gradient checking does: the finite-difference loss
// must hold those quantities constant while a parameter that would move
// them is perturbed, which is exactly what the detached gradient optimizes.
struct FrozenPredictions {
    Matrix client;
    Matrix server;
    Matrix x0;
};

// Assembles the per-batch objective for the configured kind:
//   MMFeD3:    kgc_c + kgc_s + lambda*DI + mu*(KL(c||s) + KL(s||c)) + eta*FD
//   MMFedE:    kgc_c
//   MMFedEC:   kgc_c + contrastive(round-start globals vs previous round)
//   MMFedProx: kgc_c + rho * ||ref - E||^2
//   MMFedLU:   kgc_c + kgc_s + mu * KL(c||s)
// Any active imputer contributes lambda * its reconstruction objective, so
// the reconstruction network trains under every federated variant.
// Candidate sets are drawn once per batch and shared by both branches.
LossParts build_total_loss(Tape& t, ClientRuntime& client,
                           const TrainingConfig& cfg, const Batch& batch,
                           Rng& rng,
                           const FrozenPredictions* frozen = nullptr);

// Round-start global embeddings for the proximal/contrastive baselines;
// cached into client.ref_emb by distribute().
Matrix reference_embeddings(ClientRuntime& client, const TrainingConfig& cfg);

}  // namespace fedmkg

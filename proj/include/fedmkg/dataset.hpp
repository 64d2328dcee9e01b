#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedmkg/matrix.hpp"
#include "fedmkg/rng.hpp"

namespace fedmkg {

struct Triple {
    std::size_t head = 0;
    std::size_t rel = 0;
    std::size_t tail = 0;
    bool operator==(const Triple&) const = default;
};

// Per-entity feature variants for one modality. An entity may hold several
// variant vectors (multiple images / description sentences); the Dirichlet
// partition deals them out to clients.
struct FeatureVariants {
    std::size_t dim = 0;
    std::vector<std::vector<std::vector<double>>> per_entity;

    bool empty() const { return dim == 0; }
};

// The raw world: interned triple structure plus optional modal features.
struct MultimodalKG {
    std::vector<std::string> entity_names;
    std::vector<std::string> relation_names;
    std::vector<Triple> triples;  // global indices; duplicates preserved
    FeatureVariants visual;
    FeatureVariants textual;

    std::size_t num_entities() const { return entity_names.size(); }
    std::size_t num_relations() const { return relation_names.size(); }
};

// One client's slice of the graph. Triples are stored in local indices;
// entity_global / relation_global map local ids back to the global tables.
struct ClientShard {
    int client_id = -1;
    std::vector<std::size_t> entity_global;    // ascending
    std::vector<std::size_t> relation_global;  // owned relations, disjoint
    std::vector<Triple> triples;               // all local triples
    std::vector<Triple> train, valid, test;

    Matrix feat_v, feat_d;  // |E_c| x d_m; missing rows randomly padded
    std::vector<std::uint8_t> avail_v, avail_d;

    std::size_t num_entities() const { return entity_global.size(); }
    std::size_t num_relations() const { return relation_global.size(); }
};

struct PartitionConfig {
    std::size_t num_clients = 3;
    double dirichlet_alpha = 0.1;
    double availability_rate = 0.5;  // r
    std::uint64_t seed = 0;
};

// --- structure -------------------------------------------------------------

// Parses "head<TAB>relation<TAB>tail" lines, interning names in
// first-appearance order. Throws ParseError (with line number) on malformed
// lines and on an empty graph.
MultimodalKG load_triples(const std::filesystem::path& path);

// Relations are shuffled by cfg.seed and dealt round-robin, so client
// relation sets are disjoint and cover the global set; each triple follows
// its relation. Shard entity sets are the entities of their triples.
std::vector<ClientShard> partition_by_relation(const MultimodalKG& kg,
                                               const PartitionConfig& cfg);

// Uniform shuffle then contiguous split; the rounding residue goes to train.
void split_train_valid_test(ClientShard& shard,
                            const std::array<double, 3>& ratios,
                            std::uint64_t seed);

// --- modal features ---------------------------------------------------------

// For every (entity, modality), client proportions are drawn from
// Dirichlet(alpha) and each variant is dealt to a client by those
// proportions. A client's vector is the mean of its variants, or one
// uniformly sampled variant if it received none. Result: per modality, one
// num_entities x dim matrix per client (global entity rows).
struct DirichletFeatures {
    std::vector<Matrix> visual;   // one matrix per client
    std::vector<Matrix> textual;
};
DirichletFeatures partition_multimodal_dirichlet(const MultimodalKG& kg,
                                                 const PartitionConfig& cfg);

// Draws per-entity availability Bernoulli(r) per modality (independent
// across modalities and clients), fills shard.avail_* and overwrites
// masked-out feature rows with N(0, 0.01) padding.
void generate_missing_masks(ClientShard& shard, const PartitionConfig& cfg);

// Synthesizes feature variants: each entity draws a latent type vector and
// variants are that type plus small Gaussian perturbations, so same-entity
// variants are mutually closer than cross-entity ones. When entity_latents
// is given (one row per entity) the type vectors are random linear images of
// those latents, which correlates features with link structure.
void synth_features(MultimodalKG& kg, std::size_t d_v, std::size_t d_d,
                    std::size_t variants_per_entity, std::uint64_t seed,
                    const Matrix* entity_latents = nullptr);

// Synthetic benchmark graph: entities carry latent rotation-model
// embeddings, relations carry phases, and tails are sampled from the
// ground-truth score distribution, so structure is learnable and features
// derived from the latents carry link information.
struct SynthConfig {
    std::size_t entities = 300;
    std::size_t relations = 12;
    std::size_t triples = 3000;
    std::size_t latent_dim = 16;  // even
    double inv_temperature = 4.0;
    std::uint64_t seed = 0;
};
struct SynthKG {
    MultimodalKG kg;
    Matrix latents;  // entities x latent_dim
};
SynthKG synth_kg(const SynthConfig& cfg);

// --- binary matrix container -------------------------------------------------

// Little-endian container: magic "FMKG", u32 version, u32 rows, u32 cols,
// then rows*cols values row-major. Version 1 stores float32 (the feature
// interchange format); version 2 stores float64 (checkpoints).
void write_matrix(const std::filesystem::path& path, const Matrix& m,
                  std::uint32_t version = 1);
Matrix read_matrix(const std::filesystem::path& path);

// read_matrix plus row-count validation against the entity table.
Matrix load_features(const std::filesystem::path& path,
                     std::size_t expected_rows);

// --- partition directory layout ----------------------------------------------

struct PartitionManifest {
    std::uint64_t seed = 0;
    double dirichlet_alpha = 0.1;
    double availability_rate = 0.5;
    std::size_t num_clients = 0;
    std::size_t num_entities = 0;
    std::size_t num_relations = 0;
    std::size_t dim_v = 0;
    std::size_t dim_d = 0;
    double avg_relations = 0, avg_entities = 0, avg_triples = 0;
    double mean_cross_client_sim_v = 0, mean_cross_client_sim_d = 0;
};

// Writes one directory per client (train/valid/test.tsv, feat_*.bin,
// mask_*.bin, entities.txt, relations.txt) plus partition_manifest.json.
// Deterministic: identical inputs produce byte-identical trees.
void write_partition(const std::filesystem::path& dir,
                     const std::vector<ClientShard>& shards,
                     const MultimodalKG& kg, const PartitionManifest& manifest);

struct PartitionData {
    PartitionManifest manifest;
    std::vector<ClientShard> shards;
};
PartitionData read_partition(const std::filesystem::path& dir);

}  // namespace fedmkg

#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "fedmkg/dataset.hpp"
#include "fedmkg/matrix.hpp"
#include "fedmkg/rng.hpp"
#include "fedmkg/tape.hpp"

namespace fedmkg {

// Entity embeddings are |E| x d_e with d_e even: columns [0, d_e/2) are the
// real parts, [d_e/2, d_e) the imaginary parts of d_e/2 complex coordinates.
// Relation embeddings are 2|R| x d_r phase angles (d_r = d_e/2); row i + |R|
// plays the inverse of relation i, initialized as its negated phases and
// trained as a distinct row thereafter. Tail queries use row r, head queries
// rewritten as (t, r^{ -1}, h) use row r + |R|.

Matrix init_entity_embeddings(std::size_t n, std::size_t d_e, double gamma,
                              Rng& rng);
Matrix init_relation_embeddings(std::size_t num_relations, std::size_t d_r,
                                Rng& rng);

// score = gamma - || h * e^{i theta} - t ||_2 ; higher is better.
double rotate_score(std::span<const double> h_emb,
                    std::span<const double> r_phase,
                    std::span<const double> t_emb, double gamma);

// k entities uniformly without replacement from [0, entity_count) \ {true_tail}.
std::vector<std::size_t> sample_negatives(std::size_t true_tail,
                                          std::size_t entity_count,
                                          std::size_t k, Rng& rng);

// Candidate table for a batch: width = k + 1, column 0 is the true tail.
struct CandidateTable {
    std::vector<std::size_t> flat;  // batch * width
    std::size_t width = 0;
};
CandidateTable build_candidates(const std::vector<std::size_t>& targets,
                                std::size_t entity_count, std::size_t k,
                                Rng& rng);

// Mean softmax cross-entropy over the batch where logits are RotatE scores
// of {target} + negatives. Differentiable into both tables.
Var kgc_loss(Tape& tape, Var entities, Var relations,
             const std::vector<std::size_t>& heads,
             const std::vector<std::size_t>& rel_rows,
             const CandidateTable& cands, double gamma);

// --- filtered ranking --------------------------------------------------------

// Known true tails per (head, relation-row) query over train+valid+test,
// with head queries folded in through the inverse relation rows.
class FilterIndex {
public:
    FilterIndex() = default;
    FilterIndex(const ClientShard& shard, std::size_t num_relations);
    // All known tails for the query, or nullptr when none recorded.
    const std::vector<std::size_t>* known_tails(std::size_t head,
                                                std::size_t rel_row) const;

private:
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> map_;
    std::uint64_t key(std::size_t h, std::size_t r) const;
    std::size_t stride_ = 0;
};

// Rank of true_t among scores with `filtered` entries excluded:
// 1 + #{strictly greater} + floor(#{equal}/2). true_t must not be filtered.
std::size_t filtered_rank(std::span<const double> scores, std::size_t true_t,
                          const std::vector<std::size_t>& filtered);

// Scores every entity as the tail of a query; implementations are read-only
// over model state and safe to call concurrently.
class EntityScorer {
public:
    virtual ~EntityScorer() = default;
    virtual std::size_t entity_count() const = 0;
    virtual void score_all(std::size_t head, std::size_t rel_row,
                           std::span<double> out) const = 0;
};

class RotatEScorer : public EntityScorer {
public:
    RotatEScorer(const Matrix& entities, const Matrix& relations, double gamma)
        : e_(&entities), r_(&relations), gamma_(gamma) {}
    std::size_t entity_count() const override { return e_->rows; }
    void score_all(std::size_t head, std::size_t rel_row,
                   std::span<double> out) const override;

private:
    const Matrix* e_;
    const Matrix* r_;
    double gamma_;
};

// Modality-split prediction: mean of the three per-modality softmax rows.
std::vector<double> split_predict(std::size_t head, std::size_t rel_row,
                                  const Matrix& S, const Matrix& V,
                                  const Matrix& D, const Matrix& Rs,
                                  const Matrix& Rv, const Matrix& Rd,
                                  double gamma);

class SplitScorer : public EntityScorer {
public:
    SplitScorer(const Matrix& S, const Matrix& V, const Matrix& D,
                const Matrix& Rs, const Matrix& Rv, const Matrix& Rd,
                double gamma)
        : s_(&S), v_(&V), d_(&D), rs_(&Rs), rv_(&Rv), rd_(&Rd), gamma_(gamma) {}
    std::size_t entity_count() const override { return s_->rows; }
    void score_all(std::size_t head, std::size_t rel_row,
                   std::span<double> out) const override;

private:
    const Matrix* s_;
    const Matrix* v_;
    const Matrix* d_;
    const Matrix* rs_;
    const Matrix* rv_;
    const Matrix* rd_;
    double gamma_;
};

// --- metrics -----------------------------------------------------------------

struct RankingMetrics {
    double hits1 = 0, hits3 = 0, hits10 = 0, mrr = 0;
    std::size_t triple_count = 0;
};

// Both directions per triple: tail query (h, r, ?) and head query
// (t, r^{-1}, ?); metrics averaged over the 2n queries.
RankingMetrics evaluate_split(const std::vector<Triple>& split,
                              std::size_t num_relations,
                              const EntityScorer& scorer,
                              const FilterIndex& filter);

// Triple-count weighted average: alpha_c = count_c / sum(count).
RankingMetrics aggregate_metrics(const std::vector<RankingMetrics>& per_client);

}  // namespace fedmkg

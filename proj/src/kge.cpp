#include "fedmkg/kge.hpp"

#include <algorithm>
#include <cmath>

#include "fedmkg/errors.hpp"

namespace fedmkg {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Matrix init_entity_embeddings(std::size_t n, std::size_t d_e, double gamma,
                              Rng& rng) {
    if (d_e % 2 != 0) throw ConfigError("entity dim must be even");
    Matrix m(n, d_e);
    const double b = gamma / static_cast<double>(d_e);
    rng.fill_uniform(m, -b, b);
    return m;
}

Matrix init_relation_embeddings(std::size_t num_relations, std::size_t d_r,
                                Rng& rng) {
    Matrix m(2 * num_relations, d_r);
    for (std::size_t i = 0; i < num_relations; ++i)
        for (std::size_t j = 0; j < d_r; ++j) m.at(i, j) = rng.uniform(-kPi, kPi);
    // Second half starts as the inverse rotations and trains independently.
    for (std::size_t i = 0; i < num_relations; ++i)
        for (std::size_t j = 0; j < d_r; ++j)
            m.at(num_relations + i, j) = -m.at(i, j);
    return m;
}

double rotate_score(std::span<const double> h_emb,
                    std::span<const double> r_phase,
                    std::span<const double> t_emb, double gamma) {
    const std::size_t d_e = h_emb.size();
    if (d_e % 2 != 0 || t_emb.size() != d_e || r_phase.size() != d_e / 2)
        throw DimensionError("rotate_score: inconsistent dimensions");
    const std::size_t half = d_e / 2;
    double sq = 0.0;
    for (std::size_t j = 0; j < half; ++j) {
        const double ct = std::cos(r_phase[j]);
        const double st = std::sin(r_phase[j]);
        const double rre = h_emb[j] * ct - h_emb[half + j] * st;
        const double rim = h_emb[j] * st + h_emb[half + j] * ct;
        const double dre = rre - t_emb[j];
        const double dim = rim - t_emb[half + j];
        sq += dre * dre + dim * dim;
    }
    return gamma - std::sqrt(sq);
}

std::vector<std::size_t> sample_negatives(std::size_t true_tail,
                                          std::size_t entity_count,
                                          std::size_t k, Rng& rng) {
    if (k >= entity_count)
        throw ConfigError("negative sample count must be < entity count");
    return rng.sample_without_replacement(entity_count, k, true_tail);
}

CandidateTable build_candidates(const std::vector<std::size_t>& targets,
                                std::size_t entity_count, std::size_t k,
                                Rng& rng) {
    CandidateTable table;
    table.width = k + 1;
    table.flat.reserve(targets.size() * table.width);
    for (std::size_t t : targets) {
        table.flat.push_back(t);
        const auto negs = sample_negatives(t, entity_count, k, rng);
        table.flat.insert(table.flat.end(), negs.begin(), negs.end());
    }
    return table;
}

Var kgc_loss(Tape& tape, Var entities, Var relations,
             const std::vector<std::size_t>& heads,
             const std::vector<std::size_t>& rel_rows,
             const CandidateTable& cands, double gamma) {
    if (heads.empty()) throw ContractError("kgc_loss: empty batch");
    Var logits = tape.rotate_logits(entities, relations, heads, rel_rows,
                                    cands.flat, cands.width, gamma);
    std::vector<std::size_t> targets(heads.size(), 0);  // true tail in col 0
    return tape.mean_all(tape.softmax_xent_rows(logits, targets));
}

FilterIndex::FilterIndex(const ClientShard& shard, std::size_t num_relations) {
    stride_ = 2 * num_relations;
    auto insert = [&](std::size_t h, std::size_t r, std::size_t t) {
        map_[key(h, r)].push_back(t);
    };
    for (const std::vector<Triple>* split :
         {&shard.train, &shard.valid, &shard.test}) {
        for (const Triple& t : *split) {
            insert(t.head, t.rel, t.tail);
            insert(t.tail, t.rel + num_relations, t.head);
        }
    }
    for (auto& [k, v] : map_) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
}

std::uint64_t FilterIndex::key(std::size_t h, std::size_t r) const {
    return static_cast<std::uint64_t>(h) * stride_ + r;
}

const std::vector<std::size_t>* FilterIndex::known_tails(
    std::size_t head, std::size_t rel_row) const {
    auto it = map_.find(key(head, rel_row));
    return it == map_.end() ? nullptr : &it->second;
}

std::size_t filtered_rank(std::span<const double> scores, std::size_t true_t,
                          const std::vector<std::size_t>& filtered) {
    if (true_t >= scores.size())
        throw IndexError("filtered_rank: target out of range");
    std::vector<char> skip(scores.size(), 0);
    for (std::size_t f : filtered) {
        if (f == true_t)
            throw ContractError("filtered_rank: true target in filter set");
        if (f < scores.size()) skip[f] = 1;
    }
    const double s = scores[true_t];
    std::size_t greater = 0, equal = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (skip[i] || i == true_t) continue;
        if (scores[i] > s)
            ++greater;
        else if (scores[i] == s)
            ++equal;
    }
    // Mid-rank tie handling keeps a constant-score model from inflating
    // Hits@K.
    return 1 + greater + equal / 2;
}

void RotatEScorer::score_all(std::size_t head, std::size_t rel_row,
                             std::span<double> out) const {
    const std::size_t n = e_->rows;
    const std::size_t d_e = e_->cols;
    const std::size_t half = d_e / 2;
    const double* h = e_->row(head);
    const double* th = r_->row(rel_row);
    std::vector<double> rre(half), rim(half);
    for (std::size_t j = 0; j < half; ++j) {
        const double ct = std::cos(th[j]);
        const double st = std::sin(th[j]);
        rre[j] = h[j] * ct - h[half + j] * st;
        rim[j] = h[j] * st + h[half + j] * ct;
    }
    for (std::size_t t = 0; t < n; ++t) {
        const double* tv = e_->row(t);
        double sq = 0.0;
        for (std::size_t j = 0; j < half; ++j) {
            const double dre = rre[j] - tv[j];
            const double dim = rim[j] - tv[half + j];
            sq += dre * dre + dim * dim;
        }
        out[t] = gamma_ - std::sqrt(sq);
    }
}

std::vector<double> split_predict(std::size_t head, std::size_t rel_row,
                                  const Matrix& S, const Matrix& V,
                                  const Matrix& D, const Matrix& Rs,
                                  const Matrix& Rv, const Matrix& Rd,
                                  double gamma) {
    const std::size_t n = S.rows;
    std::vector<double> probs(n, 0.0);
    std::vector<double> scores(n);
    const Matrix* mats[3] = {&S, &V, &D};
    const Matrix* rels[3] = {&Rs, &Rv, &Rd};
    for (int m = 0; m < 3; ++m) {
        RotatEScorer scorer(*mats[m], *rels[m], gamma);
        scorer.score_all(head, rel_row, scores);
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double z = 0.0;
        for (double s : scores) z += std::exp(s - mx);
        for (std::size_t t = 0; t < n; ++t)
            probs[t] += std::exp(scores[t] - mx) / z / 3.0;
    }
    return probs;
}

void SplitScorer::score_all(std::size_t head, std::size_t rel_row,
                            std::span<double> out) const {
    const auto probs =
        split_predict(head, rel_row, *s_, *v_, *d_, *rs_, *rv_, *rd_, gamma_);
    std::copy(probs.begin(), probs.end(), out.begin());
}

RankingMetrics evaluate_split(const std::vector<Triple>& split,
                              std::size_t num_relations,
                              const EntityScorer& scorer,
                              const FilterIndex& filter) {
    RankingMetrics m;
    m.triple_count = split.size();
    if (split.empty()) return m;
    const std::size_t n = scorer.entity_count();
    std::vector<double> scores(n);
    std::vector<std::size_t> ranks;
    ranks.reserve(2 * split.size());

    auto query = [&](std::size_t h, std::size_t rel_row, std::size_t target) {
        scorer.score_all(h, rel_row, scores);
        std::vector<std::size_t> filtered;
        if (const auto* known = filter.known_tails(h, rel_row)) {
            filtered.reserve(known->size());
            for (std::size_t t : *known)
                if (t != target) filtered.push_back(t);
        }
        ranks.push_back(filtered_rank(scores, target, filtered));
    };

    for (const Triple& t : split) {
        query(t.head, t.rel, t.tail);
        query(t.tail, t.rel + num_relations, t.head);
    }

    for (std::size_t r : ranks) {
        m.mrr += 1.0 / static_cast<double>(r);
        if (r <= 1) m.hits1 += 1.0;
        if (r <= 3) m.hits3 += 1.0;
        if (r <= 10) m.hits10 += 1.0;
    }
    const double q = static_cast<double>(ranks.size());
    m.mrr /= q;
    m.hits1 /= q;
    m.hits3 /= q;
    m.hits10 /= q;
    return m;
}

RankingMetrics aggregate_metrics(const std::vector<RankingMetrics>& per_client) {
    if (per_client.empty())
        throw ContractError("aggregate_metrics: empty input");
    double total = 0.0;
    for (const auto& m : per_client) total += static_cast<double>(m.triple_count);
    if (total == 0.0)
        throw ContractError("aggregate_metrics: zero total triples");
    RankingMetrics out;
    for (const auto& m : per_client) {
        const double w = static_cast<double>(m.triple_count) / total;
        out.hits1 += w * m.hits1;
        out.hits3 += w * m.hits3;
        out.hits10 += w * m.hits10;
        out.mrr += w * m.mrr;
        out.triple_count += m.triple_count;
    }
    return out;
}

}  // namespace fedmkg

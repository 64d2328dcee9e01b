#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fedmkg/errors.hpp"
#include "fedmkg/kge.hpp"
#include "fedmkg/numcore.hpp"
#include "fedmkg/optim.hpp"

using namespace fedmkg;

namespace {

// Independent rank oracle: sort non-filtered scores and mid-rank the tie
// block containing the target.
std::size_t rank_oracle(const std::vector<double>& scores, std::size_t true_t,
                        const std::vector<std::size_t>& filtered) {
    std::vector<char> skip(scores.size(), 0);
    for (std::size_t f : filtered) skip[f] = 1;
    std::vector<double> kept;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!skip[i]) kept.push_back(scores[i]);
    std::sort(kept.begin(), kept.end(), std::greater<double>());
    const double s = scores[true_t];
    // First position whose value is <= s, i.e. the count of strictly greater.
    const std::size_t first =
        std::lower_bound(kept.begin(), kept.end(), s, std::greater<double>()) -
        kept.begin();
    std::size_t equal = 0;
    for (double v : kept)
        if (v == s) ++equal;
    return first + 1 + (equal - 1) / 2;
}

std::vector<double> rotate_by(const std::vector<double>& e,
                              const std::vector<double>& phi) {
    const std::size_t half = phi.size();
    std::vector<double> out(e.size());
    for (std::size_t j = 0; j < half; ++j) {
        const double ct = std::cos(phi[j]);
        const double st = std::sin(phi[j]);
        out[j] = e[j] * ct - e[half + j] * st;
        out[half + j] = e[j] * st + e[half + j] * ct;
    }
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("kge");

TEST_CASE("rotate_score: fixed points, hand oracle, rotation isometry") {
    const double gamma = 9.0;
    std::vector<double> h = {0.3, -0.2, 0.7, 0.1};
    std::vector<double> zero_phase = {0.0, 0.0};
    CHECK(rotate_score(h, zero_phase, h, gamma) == doctest::Approx(gamma));

    // h = 1 + 0i, theta = pi/2, t = 0 + 1i -> exact match.
    std::vector<double> h1 = {1.0, 0.0};
    std::vector<double> t1 = {0.0, 1.0};
    std::vector<double> quarter = {std::acos(-1.0) / 2.0};
    CHECK(rotate_score(h1, quarter, t1, gamma) == doctest::Approx(gamma).epsilon(1e-12));

    Rng rng(5);
    for (int it = 0; it < 100; ++it) {
        std::vector<double> a(8), b(8), th(4), phi(4);
        for (auto* v : {&a, &b})
            for (double& x : *v) x = rng.uniform(-1, 1);
        for (auto* v : {&th, &phi})
            for (double& x : *v) x = rng.uniform(-3, 3);
        const double s0 = rotate_score(a, th, b, gamma);
        const double s1 = rotate_score(rotate_by(a, phi), th, rotate_by(b, phi), gamma);
        CHECK(s1 == doctest::Approx(s0).epsilon(1e-10));
    }

    CHECK_THROWS_AS(
        rotate_score(std::vector<double>{1, 2}, std::vector<double>{1.0, 2.0},
                     std::vector<double>{1, 2}, gamma),
        DimensionError);
}

TEST_CASE("relation table doubles with inverse rows at init") {
    Rng rng(6);
    Matrix r = init_relation_embeddings(5, 4, rng);
    REQUIRE(r.rows == 10);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(r.at(5 + i, j) == -r.at(i, j));
}

TEST_CASE("sample_negatives: exclusion, exhaustive case, bounds") {
    Rng rng(7);
    for (int it = 0; it < 10000; ++it) {
        auto negs = sample_negatives(3, 20, 5, rng);
        CHECK(negs.size() == 5);
        for (std::size_t n : negs) CHECK(n != 3);
    }
    auto all = sample_negatives(2, 8, 7, rng);
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<std::size_t>{0, 1, 3, 4, 5, 6, 7});
    CHECK_THROWS_AS(sample_negatives(0, 8, 8, rng), ConfigError);
}

TEST_CASE("kgc_loss: uniform candidates, dominant target, hand toy") {
    const double gamma = 9.0;
    // All entities identical: every candidate scores gamma, loss = ln(k+1).
    {
        Tape t;
        Matrix e(6, 4);
        for (std::size_t i = 0; i < 6; ++i) {
            e.at(i, 0) = 0.5;
            e.at(i, 2) = -0.3;
        }
        Var ev = t.leaf(e);
        Var rv = t.leaf(Matrix(2, 2));
        Rng rng(8);
        CandidateTable cands = build_candidates({1}, 6, 4, rng);
        Var loss = kgc_loss(t, ev, rv, {0}, {0}, cands, gamma);
        CHECK(t.val(loss).data[0] == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    }
    // Target is an exact rotation image, negatives are far: loss near 0.
    {
        Tape t;
        Matrix e(4, 2);
        e.at(0, 0) = 1.0;             // head 1+0i
        e.at(1, 1) = 1.0;             // true tail 0+1i
        e.at(2, 0) = -40.0;           // far negatives
        e.at(3, 1) = -40.0;
        Matrix r(2, 1);
        r.at(0, 0) = std::acos(-1.0) / 2.0;
        Var loss = kgc_loss(t, t.leaf(e), t.leaf(r), {0}, {0},
                            CandidateTable{{1, 2, 3}, 3}, gamma);
        CHECK(t.val(loss).data[0] < 1e-8);
    }
    // 3-entity toy equals the direct softmax formula on hand scores.
    {
        Rng rng(9);
        Matrix e(3, 4);
        rng.fill_uniform(e, -1, 1);
        Matrix r(2, 2);
        rng.fill_uniform(r, -3, 3);
        std::vector<double> logits;
        for (std::size_t cand : {2ul, 0ul, 1ul}) {
            logits.push_back(rotate_score(
                std::span<const double>(e.row(1), 4),
                std::span<const double>(r.row(1), 2),
                std::span<const double>(e.row(cand), 4), gamma));
        }
        const double want = softmax_xent(logits, 0);
        Tape t;
        Var loss = kgc_loss(t, t.leaf(e), t.leaf(r), {1}, {1},
                            CandidateTable{{2, 0, 1}, 3}, gamma);
        CHECK(t.val(loss).data[0] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("kgc_loss gradient passes grad_check") {
    Rng rng(10);
    Param ent(init_entity_embeddings(7, 6, 9.0, rng));
    Param rel(init_relation_embeddings(2, 3, rng));
    Rng crng(11);
    CandidateTable cands = build_candidates({2, 5, 1}, 7, 3, crng);
    const std::vector<std::size_t> heads = {0, 3, 6};
    const std::vector<std::size_t> rels = {0, 2, 1};

    auto fn_ent = [&](bool with_grad) {
        Tape t;
        Var ev = t.param(ent);
        Var loss = kgc_loss(t, ev, t.leaf(rel.value), heads, rels, cands, 9.0);
        const double out = t.val(loss).data[0];
        if (with_grad) t.backward(loss);
        return out;
    };
    CHECK(grad_check(fn_ent, ent, 1e-5) < 1e-5);

    auto fn_rel = [&](bool with_grad) {
        Tape t;
        Var rv = t.param(rel);
        Var loss = kgc_loss(t, t.leaf(ent.value), rv, heads, rels, cands, 9.0);
        const double out = t.val(loss).data[0];
        if (with_grad) t.backward(loss);
        return out;
    };
    CHECK(grad_check(fn_rel, rel, 1e-5) < 1e-5);
}

TEST_CASE("filtered_rank: basics and filter semantics") {
    std::vector<double> scores = {0.9, 0.1, 0.5, 0.7};
    CHECK(filtered_rank(scores, 0, {}) == 1);
    CHECK(filtered_rank(scores, 2, {}) == 3);
    // A higher-scoring filtered entity does not change the rank.
    CHECK(filtered_rank(scores, 2, {0}) == 2);
    CHECK(filtered_rank(scores, 2, {0, 3}) == 1);
    CHECK_THROWS_AS(filtered_rank(scores, 2, {2}), ContractError);

    // Constant scores get the mid rank.
    std::vector<double> flat(9, 1.0);
    CHECK(filtered_rank(flat, 4, {}) == 5);
}

TEST_CASE("filtered_rank equals the sort oracle on random instances") {
    Rng rng(12);
    for (int it = 0; it < 2000; ++it) {
        const std::size_t n = 2 + rng.uniform_int(99);
        std::vector<double> scores(n);
        // Coarse quantization forces frequent ties.
        for (double& s : scores)
            s = std::floor(rng.uniform(0.0, 6.0)) * 0.5;
        const std::size_t target = rng.uniform_int(n);
        std::vector<std::size_t> filtered;
        for (std::size_t i = 0; i < n; ++i)
            if (i != target && rng.bernoulli(0.2)) filtered.push_back(i);
        CHECK(filtered_rank(scores, target, filtered) ==
              rank_oracle(scores, target, filtered));
    }
}

namespace {

// Scorer with hand-set per-query scores keyed by relation row.
class FixedScorer : public EntityScorer {
public:
    FixedScorer(std::size_t n, std::vector<std::vector<double>> rows)
        : n_(n), rows_(std::move(rows)) {}
    std::size_t entity_count() const override { return n_; }
    void score_all(std::size_t, std::size_t rel_row,
                   std::span<double> out) const override {
        const auto& r = rows_[rel_row];
        std::copy(r.begin(), r.end(), out.begin());
    }

private:
    std::size_t n_;
    std::vector<std::vector<double>> rows_;
};

}  // namespace

TEST_CASE("evaluate_split: perfect model and the {1,4} hand oracle") {
    ClientShard shard;
    shard.train = {};
    shard.test = {{0, 0, 1}};
    FilterIndex filter(shard, 1);

    // Tail query scores rank target 1 entity 1 first; head query ranks
    // entity 0 fourth.
    FixedScorer scorer(5, {{0.1, 0.9, 0.2, 0.3, 0.0},    // rel row 0 (tail)
                           {0.5, 0.6, 0.7, 0.9, 0.0}});  // rel row 1 (head)
    RankingMetrics m = evaluate_split(shard.test, 1, scorer, filter);
    CHECK(m.triple_count == 1);
    CHECK(m.mrr == doctest::Approx(0.625));
    CHECK(m.hits3 == doctest::Approx(0.5));
    CHECK(m.hits1 == doctest::Approx(0.5));
    CHECK(m.hits10 == doctest::Approx(1.0));

    FixedScorer perfect(5, {{0.0, 1.0, 0.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 0.0, 0.0}});
    RankingMetrics p = evaluate_split(shard.test, 1, perfect, filter);
    CHECK(p.mrr == doctest::Approx(1.0));
    CHECK(p.hits1 == doctest::Approx(1.0));
}

TEST_CASE("untrained random model matches the uniform-rank expectation") {
    const std::size_t n = 50;
    const std::size_t q = 200;  // triples; 2q ranked queries
    Rng rng(13);
    Matrix e = init_entity_embeddings(n, 8, 9.0, rng);
    Matrix r = init_relation_embeddings(q, 4, rng);

    ClientShard shard;
    for (std::size_t i = 0; i < q; ++i) {
        Triple t;
        t.head = rng.uniform_int(n);
        t.rel = i;  // distinct relation per triple: empty effective filters
        t.tail = rng.uniform_int(n);
        shard.test.push_back(t);
    }
    FilterIndex filter(shard, q);
    RotatEScorer scorer(e, r, 9.0);
    RankingMetrics m = evaluate_split(shard.test, q, scorer, filter);

    double h = 0, h2 = 0;
    for (std::size_t k = 1; k <= n; ++k) {
        h += 1.0 / static_cast<double>(k);
        h2 += 1.0 / static_cast<double>(k * k);
    }
    const double mean_mrr = h / n;
    const double var_mrr = h2 / n - mean_mrr * mean_mrr;
    const double sigma = std::sqrt(var_mrr / (2.0 * q));
    CHECK(std::fabs(m.mrr - mean_mrr) < 3.0 * sigma);

    const double p10 = 10.0 / n;
    const double sigma10 = std::sqrt(p10 * (1 - p10) / (2.0 * q));
    CHECK(std::fabs(m.hits10 - p10) < 3.0 * sigma10);
}

TEST_CASE("aggregate_metrics: identity, weighted mean, errors") {
    RankingMetrics a{0.1, 0.2, 0.3, 0.2, 100};
    CHECK(aggregate_metrics({a}).mrr == doctest::Approx(0.2));

    RankingMetrics b{0.2, 0.3, 0.5, 0.4, 300};
    RankingMetrics agg = aggregate_metrics({a, b});
    CHECK(agg.mrr == doctest::Approx(0.35));
    CHECK(agg.triple_count == 400);

    RankingMetrics c1{0.5, 0.5, 0.5, 0.5, 10};
    RankingMetrics c2{0.5, 0.5, 0.5, 0.5, 90};
    CHECK(aggregate_metrics({c1, c2}).hits1 == doctest::Approx(0.5));

    RankingMetrics z{0, 0, 0, 0, 0};
    CHECK_THROWS_AS(aggregate_metrics({z}), ContractError);
    CHECK_THROWS_AS(aggregate_metrics({}), ContractError);
}

TEST_CASE("split_predict: degenerate equality, normalization, hand toy") {
    Rng rng(14);
    Matrix s = init_entity_embeddings(4, 4, 9.0, rng);
    Matrix r = init_relation_embeddings(2, 2, rng);

    // Identical modal embeddings and relations reduce to one softmax.
    auto probs = split_predict(1, 0, s, s, s, r, r, r, 9.0);
    std::vector<double> scores(4);
    RotatEScorer scorer(s, r, 9.0);
    scorer.score_all(1, 0, scores);
    double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0;
    for (double v : scores) z += std::exp(v - mx);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(probs[i] == doctest::Approx(std::exp(scores[i] - mx) / z).epsilon(1e-12));

    // Distinct modal tables: rows sum to one; value matches the hand average.
    Matrix v = init_entity_embeddings(4, 4, 9.0, rng);
    Matrix d = init_entity_embeddings(4, 4, 9.0, rng);
    Matrix rv = init_relation_embeddings(2, 2, rng);
    Matrix rd = init_relation_embeddings(2, 2, rng);
    auto p = split_predict(2, 1, s, v, d, r, rv, rd, 9.0);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));

    double hand = 0.0;
    const Matrix* mats[3] = {&s, &v, &d};
    const Matrix* rels[3] = {&r, &rv, &rd};
    for (int mi = 0; mi < 3; ++mi) {
        RotatEScorer sc(*mats[mi], *rels[mi], 9.0);
        sc.score_all(2, 1, scores);
        double m2 = *std::max_element(scores.begin(), scores.end());
        double z2 = 0;
        for (double vv : scores) z2 += std::exp(vv - m2);
        hand += std::exp(scores[3] - m2) / z2 / 3.0;
    }
    CHECK(p[3] == doctest::Approx(hand).epsilon(1e-12));
}

TEST_SUITE_END();

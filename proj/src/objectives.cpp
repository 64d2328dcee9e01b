#include "fedmkg/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "fedmkg/errors.hpp"

namespace fedmkg {

namespace {

// Row-mean of squared row L2 distances between two (b x d) nodes.
Var mean_row_sq_distance(Tape& t, Var a, Var b) {
    Var diff = t.sub(a, b);
    return t.mean_all(t.row_sum(t.mul(diff, diff)));
}

Var cosine_rows_tape(Tape& t, Var a, Var b) {
    Var num = t.row_sum(t.mul(a, b));
    Var na = t.sqrt_(t.row_sum(t.mul(a, a)));
    Var nb = t.sqrt_(t.row_sum(t.mul(b, b)));
    return t.div(num, t.add_scalar(t.mul(na, nb), 1e-12));
}

Matrix gather_rows_value(const Matrix& m, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), m.cols);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(m.row(idx[i]), m.cols, out.row(i));
    return out;
}

}  // namespace

Batch make_batch(const std::vector<TrainExample>& examples, std::size_t begin,
                 std::size_t end) {
    Batch b;
    b.heads.reserve(end - begin);
    b.rel_rows.reserve(end - begin);
    b.targets.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        b.heads.push_back(examples[i].head);
        b.rel_rows.push_back(examples[i].rel_row);
        b.targets.push_back(examples[i].target);
    }
    std::vector<std::size_t> ents = b.heads;
    ents.insert(ents.end(), b.targets.begin(), b.targets.end());
    std::sort(ents.begin(), ents.end());
    ents.erase(std::unique(ents.begin(), ents.end()), ents.end());
    b.batch_entities = std::move(ents);
    return b;
}

std::vector<TrainExample> make_examples(const ClientShard& shard) {
    std::vector<TrainExample> out;
    out.reserve(2 * shard.train.size());
    const std::size_t nr = shard.num_relations();
    for (const Triple& t : shard.train) {
        out.push_back({t.head, t.rel, t.tail});
        out.push_back({t.tail, t.rel + nr, t.head});  // head query via inverse
    }
    return out;
}

// Client-branch embeddings: projected modal features, optional imputation,
// then fusion. For split fusion the result keeps the three modal matrices.
ClientEmbeddings build_client_embeddings(Tape& t, ClientRuntime& client,
                                         const TrainingConfig& cfg, Rng& rng,
                                         bool imputed) {
    ClientEmbeddings out;
    Var S = t.param(client.S);
    if (cfg.structure_only) {
        out.fused = S;
        out.S = S;
        return out;
    }
    Var V = t.matmul(t.leaf(client.shard.feat_v), t.param(client.W_v));
    Var D = t.matmul(t.leaf(client.shard.feat_d), t.param(client.W_d));
    if (imputed && client.imputer.active()) {
        Var x0 = build_hypermodal(t, S, V, D);
        out.x0 = x0;
        Var merged = client.imputer.impute(t, x0, client.hyper_mask, rng);
        out.imputed = merged;
        const std::size_t d = cfg.entity_dim;
        V = t.slice_cols(merged, d, 2 * d);
        D = t.slice_cols(merged, 2 * d, 3 * d);
    }
    out.S = S;
    out.V = V;
    out.D = D;
    if (cfg.fusion != FusionKind::Split)
        out.fused = fuse(t, S, V, D, client.fusion);
    return out;
}

ServerEmbeddings build_server_embeddings(Tape& t, ClientRuntime& client,
                                         const TrainingConfig& cfg) {
    if (client.S_repl.value.count() == 0)
        throw ConfigError("server branch requires replica parameters");
    ServerEmbeddings out;
    Var S = t.param(client.S_repl);
    Var V = t.matmul(t.leaf(client.shard.feat_v), t.param(client.Wv_repl));
    Var D = t.matmul(t.leaf(client.shard.feat_d), t.param(client.Wd_repl));
    out.S = S;
    out.V = V;
    out.D = D;
    if (cfg.fusion != FusionKind::Split)
        out.fused = fuse(t, S, V, D, client.fusion);  // shared fusion params
    return out;
}

namespace {

// Prediction node over the candidate table: logits for fused models,
// averaged per-modality softmax probabilities for split fusion.
struct Prediction {
    Var node;     // (b x width)
    bool probs = false;
};

Prediction predict(Tape& t, ClientRuntime& client, const TrainingConfig& cfg,
                   const Batch& batch, const CandidateTable& cands, Var S,
                   Var V, Var D, Var fused, bool have_modal) {
    Prediction p;
    Var R = t.param(client.R);
    if (cfg.fusion != FusionKind::Split || cfg.structure_only || !have_modal) {
        Var base = (cfg.fusion != FusionKind::Split || !have_modal) ? fused : S;
        p.node = t.rotate_logits(base, R, batch.heads, batch.rel_rows,
                                 cands.flat, cands.width, cfg.margin);
        return p;
    }
    Var ps = t.softmax_rows(t.rotate_logits(S, R, batch.heads, batch.rel_rows,
                                            cands.flat, cands.width,
                                            cfg.margin));
    Var pv = t.softmax_rows(t.rotate_logits(V, t.param(client.R_v), batch.heads,
                                            batch.rel_rows, cands.flat,
                                            cands.width, cfg.margin));
    Var pd = t.softmax_rows(t.rotate_logits(D, t.param(client.R_d), batch.heads,
                                            batch.rel_rows, cands.flat,
                                            cands.width, cfg.margin));
    p.node = t.scale(t.add(t.add(ps, pv), pd), 1.0 / 3.0);
    p.probs = true;
    return p;
}

Var prediction_nll(Tape& t, const Prediction& p, std::size_t batch_rows) {
    std::vector<std::size_t> targets(batch_rows, 0);
    if (p.probs) return t.mean_all(t.nll_rows(p.node, targets));
    return t.mean_all(t.softmax_xent_rows(p.node, targets));
}

// KL(teacher || student) with the teacher detached, on whichever
// representation the prediction produced.
Var prediction_kl(Tape& t, const Prediction& teacher, const Prediction& student) {
    if (teacher.probs != student.probs)
        throw ContractError("mixed prediction representations");
    if (teacher.probs) return t.mean_all(t.kl_probs_rows(teacher.node, student.node));
    return t.mean_all(t.kl_logits_rows(teacher.node, student.node));
}

}  // namespace

LossParts build_total_loss(Tape& t, ClientRuntime& client,
                           const TrainingConfig& cfg, const Batch& batch,
                           Rng& rng, const FrozenPredictions* frozen) {
    if (batch.heads.empty()) throw ContractError("empty batch");
    LossParts parts;

    ClientEmbeddings ce = build_client_embeddings(t, client, cfg, rng, true);

    CandidateTable cands = build_candidates(batch.targets,
                                            client.num_entities(),
                                            cfg.negatives, rng);

    const bool modal = !cfg.structure_only;
    Prediction pred_c = predict(t, client, cfg, batch, cands, ce.S, ce.V, ce.D,
                                ce.fused, modal);
    parts.pred_client = t.val(pred_c.node);
    Var total = prediction_nll(t, pred_c, batch.heads.size());
    parts.kgc_client = t.val(total).data[0];

    // Entity rows used by the feature-space objectives.
    auto client_rows = [&](Var src) {
        return cfg.fd_full_table ? src : t.gather_rows(src, batch.batch_entities);
    };
    // The distillation/feature reference lives in fused space, or the
    // imputed hyper-modal matrix under split fusion.
    Var client_feat = (cfg.fusion == FusionKind::Split && modal)
                          ? (ce.imputed.valid() ? ce.imputed
                                                : build_hypermodal(t, ce.S, ce.V, ce.D))
                          : ce.fused;

    if (cfg.uses_replica() && !cfg.structure_only) {
        ServerEmbeddings se = build_server_embeddings(t, client, cfg);
        Prediction pred_s = predict(t, client, cfg, batch, cands, se.S, se.V,
                                    se.D, se.fused, true);
        parts.pred_server = t.val(pred_s.node);
        Var kgc_s = prediction_nll(t, pred_s, batch.heads.size());
        parts.kgc_server = t.val(kgc_s).data[0];
        total = t.add(total, kgc_s);

        if (cfg.weights.mu > 0.0) {
            Prediction teach_c = pred_c;
            Prediction teach_s = pred_s;
            if (frozen != nullptr) {
                teach_c.node = t.leaf(frozen->client);
                teach_s.node = t.leaf(frozen->server);
            }
            Var ld = (cfg.objective == ObjectiveKind::MMFedLU)
                         ? prediction_kl(t, teach_c, pred_s)
                         : t.add(prediction_kl(t, teach_c, pred_s),
                                 prediction_kl(t, teach_s, pred_c));
            parts.ld = t.val(ld).data[0];
            total = t.add(total, t.scale(ld, cfg.weights.mu));
        }
        if (cfg.objective == ObjectiveKind::MMFeD3 && cfg.weights.eta > 0.0) {
            Var server_feat = (cfg.fusion == FusionKind::Split)
                                  ? build_hypermodal(t, se.S, se.V, se.D)
                                  : se.fused;
            Var fd = mean_row_sq_distance(t, client_rows(client_feat),
                                          client_rows(server_feat));
            parts.fd = t.val(fd).data[0];
            total = t.add(total, t.scale(fd, cfg.weights.eta));
        }
    }

    if (cfg.uses_reference() && !cfg.structure_only) {
        if (client.ref_emb.count() == 0)
            throw ConfigError("reference embeddings missing; distribute first");
        const Matrix& ref = client.ref_emb;
        Var ref_rows = t.leaf(cfg.fd_full_table
                                  ? ref
                                  : gather_rows_value(ref, batch.batch_entities));
        Var cur_rows = client_rows(client_feat);
        if (cfg.objective == ObjectiveKind::MMFedProx) {
            Var prox = mean_row_sq_distance(t, cur_rows, ref_rows);
            parts.extra = t.val(prox).data[0];
            total = t.add(total, t.scale(prox, cfg.weights.rho));
        } else {
            // Contrastive term: positive similarity to the round-start
            // globals, negative to the previous-round embedding.
            const Matrix& prev_full =
                client.prev_emb.count() > 0 ? client.prev_emb : ref;
            Var prev_rows = t.leaf(
                cfg.fd_full_table ? prev_full
                                  : gather_rows_value(prev_full,
                                                      batch.batch_entities));
            Var s_pos = cosine_rows_tape(t, cur_rows, ref_rows);
            Var s_neg = cosine_rows_tape(t, cur_rows, prev_rows);
            const double inv_tau = 1.0 / cfg.weights.tau;
            Var logits = t.concat_cols(
                {t.scale(s_pos, inv_tau), t.scale(s_neg, inv_tau)});
            std::vector<std::size_t> targets(t.val(logits).rows, 0);
            Var ec = t.mean_all(t.softmax_xent_rows(logits, targets));
            parts.extra = t.val(ec).data[0];
            total = t.add(total, ec);
        }
    }

    if (client.imputer.active() && cfg.weights.lambda > 0.0 &&
        !cfg.structure_only) {
        if (!ce.x0.valid())
            throw ContractError("imputer active but hyper-modal node missing");
        // The imputation objective optimizes the reconstruction network
        // alone; its input/target is taken by value so the embeddings and
        // projections are not pulled toward trivially reconstructable
        // (shrunken) features.
        parts.x0_client = t.val(ce.x0);
        Var di_input = frozen ? t.leaf(frozen->x0) : t.detach(ce.x0);
        Var di = client.imputer.aux_loss(t, di_input, client.hyper_mask, rng);
        parts.di = t.val(di).data[0];
        total = t.add(total, t.scale(di, cfg.weights.lambda));
    }

    parts.total = total;
    parts.total_value = t.val(total).data[0];
    return parts;
}

Matrix reference_embeddings(ClientRuntime& client, const TrainingConfig& cfg) {
    // Frozen round-start globals pushed through the same shapes as the
    // client branch, evaluated outside any tape.
    if (cfg.structure_only) return client.S_ref;
    Matrix V = matmul(client.shard.feat_v, client.Wv_ref);
    Matrix D = matmul(client.shard.feat_d, client.Wd_ref);
    if (cfg.fusion == FusionKind::Split) {
        Matrix out(client.S_ref.rows, 3 * cfg.entity_dim);
        for (std::size_t i = 0; i < out.rows; ++i) {
            std::copy_n(client.S_ref.row(i), cfg.entity_dim, out.row(i));
            std::copy_n(V.row(i), cfg.entity_dim, out.row(i) + cfg.entity_dim);
            std::copy_n(D.row(i), cfg.entity_dim, out.row(i) + 2 * cfg.entity_dim);
        }
        return out;
    }
    Tape t;
    Var fused = fuse(t, t.leaf(client.S_ref), t.leaf(V), t.leaf(D),
                     client.fusion);
    return t.val(fused);
}

}  // namespace fedmkg

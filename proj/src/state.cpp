#include "fedmkg/state.hpp"

#include <cmath>
#include <memory>

#include "fedmkg/errors.hpp"
#include "fedmkg/objectives.hpp"

namespace fedmkg {

ObjectiveKind objective_kind_from_string(const std::string& s) {
    if (s == "mmfede") return ObjectiveKind::MMFedE;
    if (s == "mmfedec") return ObjectiveKind::MMFedEC;
    if (s == "mmfedprox") return ObjectiveKind::MMFedProx;
    if (s == "mmfedlu") return ObjectiveKind::MMFedLU;
    if (s == "mmfed3") return ObjectiveKind::MMFeD3;
    throw ConfigError("unknown objective kind: " + s);
}

const char* to_string(ObjectiveKind k) {
    switch (k) {
        case ObjectiveKind::MMFedE: return "mmfede";
        case ObjectiveKind::MMFedEC: return "mmfedec";
        case ObjectiveKind::MMFedProx: return "mmfedprox";
        case ObjectiveKind::MMFedLU: return "mmfedlu";
        case ObjectiveKind::MMFeD3: return "mmfed3";
    }
    return "?";
}

void TrainingConfig::validate() const {
    if (entity_dim == 0 || entity_dim % 2 != 0)
        throw ConfigError("entity_dim must be even and positive");
    if (relation_dim != entity_dim / 2)
        throw ConfigError("relation_dim must equal entity_dim / 2");
    if (local_epochs == 0 || batch_size == 0)
        throw ConfigError("local_epochs and batch_size must be positive");
    if (patience == 0) throw ConfigError("patience must be positive");
    if (negatives == 0) throw ConfigError("negatives must be positive");
    if (client_fraction <= 0.0 || client_fraction > 1.0)
        throw ConfigError("client_fraction must be in (0, 1]");
    if (weights.lambda < 0 || weights.mu < 0 || weights.eta < 0 ||
        weights.rho < 0)
        throw ConfigError("loss weights must be >= 0");
    if (weights.tau <= 0) throw ConfigError("tau must be > 0");
    if (diffusion_steps == 0) throw ConfigError("diffusion_steps must be >= 1");
    if (chain_start > diffusion_steps)
        throw ConfigError("chain_start cannot exceed diffusion_steps");
    schedule();  // validates the beta range
}

ServerState make_server(std::size_t num_entities, std::size_t dim_v,
                        std::size_t dim_d, const TrainingConfig& cfg,
                        Rng& rng) {
    ServerState s;
    Rng ent_rng = rng.fork("init/server/entities");
    s.S = init_entity_embeddings(num_entities, cfg.entity_dim, cfg.margin,
                                 ent_rng);
    Rng w_rng = rng.fork("init/server/weights");
    s.W_v = Matrix(dim_v, cfg.entity_dim);
    s.W_d = Matrix(dim_d, cfg.entity_dim);
    if (dim_v > 0)
        w_rng.fill_normal(s.W_v, 0.0, 1.0 / std::sqrt(static_cast<double>(dim_v)));
    if (dim_d > 0)
        w_rng.fill_normal(s.W_d, 0.0, 1.0 / std::sqrt(static_cast<double>(dim_d)));
    return s;
}

ClientRuntime ClientRuntime::make(ClientShard shard, const TrainingConfig& cfg,
                                  std::size_t global_entities) {
    (void)global_entities;
    ClientRuntime c;
    c.root_seed = cfg.seed;
    const std::string tag = "client" + std::to_string(shard.client_id);
    Rng root(cfg.seed);

    const std::size_t n = shard.num_entities();
    const std::size_t nr = shard.num_relations();
    c.filter = FilterIndex(shard, nr);
    c.hyper_mask = hypermodal_mask(
        shard.avail_v.empty() ? std::vector<std::uint8_t>(n, 1) : shard.avail_v,
        shard.avail_d.empty() ? std::vector<std::uint8_t>(n, 1) : shard.avail_d,
        cfg.entity_dim);

    c.S = Param(Matrix(n, cfg.entity_dim));  // overwritten by distribution
    Rng rel_rng = root.fork("init/" + tag + "/relations");
    c.R = Param(init_relation_embeddings(nr, cfg.relation_dim, rel_rng));
    c.W_v = Param(Matrix(shard.feat_v.cols, cfg.entity_dim));
    c.W_d = Param(Matrix(shard.feat_d.cols, cfg.entity_dim));

    Rng fusion_rng = root.fork("init/" + tag + "/fusion");
    c.fusion = FusionParams::make(cfg.fusion, cfg.entity_dim, fusion_rng);
    if (cfg.fusion == FusionKind::Split) {
        Rng rv_rng = root.fork("init/" + tag + "/relations_v");
        Rng rd_rng = root.fork("init/" + tag + "/relations_d");
        c.R_v = Param(init_relation_embeddings(nr, cfg.relation_dim, rv_rng));
        c.R_d = Param(init_relation_embeddings(nr, cfg.relation_dim, rd_rng));
    }

    Rng imp_rng = root.fork("init/" + tag + "/imputer");
    c.imputer = Imputer::make(cfg.imputer, cfg.recon, 3 * cfg.entity_dim,
                              cfg.schedule(), imp_rng, cfg.chain_start);

    if (cfg.uses_replica()) {
        c.S_repl = Param(Matrix(n, cfg.entity_dim));
        c.Wv_repl = Param(Matrix(shard.feat_v.cols, cfg.entity_dim));
        c.Wd_repl = Param(Matrix(shard.feat_d.cols, cfg.entity_dim));
    }

    c.train_rng = root.fork("train/" + tag);
    c.shard = std::move(shard);
    return c;
}

std::vector<Param*> ClientRuntime::trainable(const TrainingConfig& cfg) {
    std::vector<Param*> out;
    out.push_back(&S);
    out.push_back(&R);
    if (cfg.structure_only) return out;
    out.push_back(&W_v);
    out.push_back(&W_d);
    for (Param* p : fusion.trainable()) out.push_back(p);
    if (cfg.fusion == FusionKind::Split) {
        out.push_back(&R_v);
        out.push_back(&R_d);
    }
    for (Param* p : imputer.trainable()) out.push_back(p);
    if (cfg.uses_replica()) {
        out.push_back(&S_repl);
        out.push_back(&Wv_repl);
        out.push_back(&Wd_repl);
    }
    return out;
}

std::vector<std::pair<std::string, Param*>> ClientRuntime::named_params() {
    std::vector<std::pair<std::string, Param*>> out;
    out.emplace_back("S", &S);
    out.emplace_back("R", &R);
    out.emplace_back("W_v", &W_v);
    out.emplace_back("W_d", &W_d);
    for (auto& [name, p] : fusion.named_params()) out.emplace_back(name, p);
    if (R_v.value.count() > 0) out.emplace_back("R_v", &R_v);
    if (R_d.value.count() > 0) out.emplace_back("R_d", &R_d);
    for (auto& [name, p] : imputer.named_params()) out.emplace_back(name, p);
    if (S_repl.value.count() > 0) {
        out.emplace_back("repl.S", &S_repl);
        out.emplace_back("repl.W_v", &Wv_repl);
        out.emplace_back("repl.W_d", &Wd_repl);
    }
    return out;
}

std::unique_ptr<EntityScorer> EvalModel::scorer() const {
    if (split)
        return std::make_unique<SplitScorer>(S, V, D, Rs, Rv, Rd, margin);
    return std::make_unique<RotatEScorer>(entities, relations, margin);
}

EvalModel client_eval_model(ClientRuntime& client, const TrainingConfig& cfg,
                            Rng eval_rng) {
    EvalModel m;
    m.margin = cfg.margin;
    Tape t;
    ClientEmbeddings ce =
        build_client_embeddings(t, client, cfg, eval_rng, true);
    if (cfg.fusion == FusionKind::Split && !cfg.structure_only) {
        m.split = true;
        m.S = t.val(ce.S);
        m.V = t.val(ce.V);
        m.D = t.val(ce.D);
        m.Rs = client.R.value;
        m.Rv = client.R_v.value;
        m.Rd = client.R_d.value;
        return m;
    }
    m.entities = t.val(ce.fused);
    m.relations = client.R.value;
    return m;
}

}  // namespace fedmkg

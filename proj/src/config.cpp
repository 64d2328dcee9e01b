#include "fedmkg/config.hpp"

#include <fstream>
#include <set>

#include "fedmkg/errors.hpp"

namespace fedmkg {

namespace {

void require_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                  const std::string& scope) {
    if (!j.is_object()) throw ConfigError(scope + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key))
            throw ConfigError("unknown key \"" + key + "\" in " + scope);
    }
}

template <typename T>
void read_to(const nlohmann::json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

void read_string_kind(const nlohmann::json& j, const char* key,
                      FusionKind& dst) {
    if (j.contains(key)) dst = fusion_kind_from_string(j.at(key).get<std::string>());
}
void read_string_kind(const nlohmann::json& j, const char* key,
                      ImputerKind& dst) {
    if (j.contains(key)) dst = imputer_kind_from_string(j.at(key).get<std::string>());
}
void read_string_kind(const nlohmann::json& j, const char* key,
                      ReconKind& dst) {
    if (j.contains(key)) dst = recon_kind_from_string(j.at(key).get<std::string>());
}
void read_string_kind(const nlohmann::json& j, const char* key,
                      ObjectiveKind& dst) {
    if (j.contains(key))
        dst = objective_kind_from_string(j.at(key).get<std::string>());
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    require_keys(j, {"seed", "out", "partition_dir", "dataset", "partition",
                     "model", "train", "sweep"},
                 "config");
    read_to(j, "seed", cfg.seed);
    read_to(j, "out", cfg.out);
    read_to(j, "partition_dir", cfg.partition_dir);

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        require_keys(d,
                     {"source", "triples_path", "features_v_path",
                      "features_d_path", "synthetic", "feature_dim_v",
                      "feature_dim_d", "variants_per_entity"},
                     "dataset");
        read_to(d, "source", cfg.dataset.source);
        if (cfg.dataset.source != "synthetic" && cfg.dataset.source != "files")
            throw ConfigError("dataset.source must be synthetic or files");
        read_to(d, "triples_path", cfg.dataset.triples_path);
        read_to(d, "features_v_path", cfg.dataset.features_v_path);
        read_to(d, "features_d_path", cfg.dataset.features_d_path);
        read_to(d, "feature_dim_v", cfg.dataset.feature_dim_v);
        read_to(d, "feature_dim_d", cfg.dataset.feature_dim_d);
        read_to(d, "variants_per_entity", cfg.dataset.variants_per_entity);
        if (d.contains("synthetic")) {
            const auto& s = d.at("synthetic");
            require_keys(s,
                         {"entities", "relations", "triples", "latent_dim",
                          "inv_temperature"},
                         "dataset.synthetic");
            read_to(s, "entities", cfg.dataset.synth.entities);
            read_to(s, "relations", cfg.dataset.synth.relations);
            read_to(s, "triples", cfg.dataset.synth.triples);
            read_to(s, "latent_dim", cfg.dataset.synth.latent_dim);
            read_to(s, "inv_temperature", cfg.dataset.synth.inv_temperature);
        }
    }

    if (j.contains("partition")) {
        const auto& p = j.at("partition");
        require_keys(p, {"num_clients", "dirichlet_alpha", "availability_rate"},
                     "partition");
        read_to(p, "num_clients", cfg.partition.num_clients);
        read_to(p, "dirichlet_alpha", cfg.partition.dirichlet_alpha);
        read_to(p, "availability_rate", cfg.partition.availability_rate);
    }

    if (j.contains("model")) {
        const auto& m = j.at("model");
        require_keys(m,
                     {"entity_dim", "relation_dim", "margin", "fusion",
                      "imputer", "recon", "diffusion"},
                     "model");
        read_to(m, "entity_dim", cfg.train.entity_dim);
        if (m.contains("relation_dim"))
            cfg.train.relation_dim = m.at("relation_dim").get<std::size_t>();
        else
            cfg.train.relation_dim = cfg.train.entity_dim / 2;
        read_to(m, "margin", cfg.train.margin);
        read_string_kind(m, "fusion", cfg.train.fusion);
        read_string_kind(m, "imputer", cfg.train.imputer);
        read_string_kind(m, "recon", cfg.train.recon);
        if (m.contains("diffusion")) {
            const auto& df = m.at("diffusion");
            require_keys(df, {"steps", "beta_low", "beta_up", "scale",
                              "chain_start"},
                         "model.diffusion");
            read_to(df, "steps", cfg.train.diffusion_steps);
            read_to(df, "beta_low", cfg.train.beta_low);
            read_to(df, "beta_up", cfg.train.beta_up);
            read_to(df, "scale", cfg.train.beta_scale);
            read_to(df, "chain_start", cfg.train.chain_start);
        }
    } else {
        cfg.train.relation_dim = cfg.train.entity_dim / 2;
    }

    if (j.contains("train")) {
        const auto& t = j.at("train");
        require_keys(t,
                     {"rounds", "local_epochs", "batch_size", "patience",
                      "negatives", "lr", "adam_beta1", "adam_beta2", "adam_eps",
                      "objective", "lambda", "mu", "eta", "tau", "rho",
                      "client_fraction", "warmstart_rounds", "imputer_warmup_steps"},
                     "train");
        read_to(t, "rounds", cfg.train.rounds);
        read_to(t, "local_epochs", cfg.train.local_epochs);
        read_to(t, "batch_size", cfg.train.batch_size);
        read_to(t, "patience", cfg.train.patience);
        read_to(t, "negatives", cfg.train.negatives);
        read_to(t, "lr", cfg.train.lr);
        read_to(t, "adam_beta1", cfg.train.adam_beta1);
        read_to(t, "adam_beta2", cfg.train.adam_beta2);
        read_to(t, "adam_eps", cfg.train.adam_eps);
        read_string_kind(t, "objective", cfg.train.objective);
        read_to(t, "lambda", cfg.train.weights.lambda);
        read_to(t, "mu", cfg.train.weights.mu);
        read_to(t, "eta", cfg.train.weights.eta);
        read_to(t, "tau", cfg.train.weights.tau);
        read_to(t, "rho", cfg.train.weights.rho);
        read_to(t, "client_fraction", cfg.train.client_fraction);
        read_to(t, "warmstart_rounds", cfg.train.warmstart_rounds);
        read_to(t, "imputer_warmup_steps", cfg.train.imputer_warmup_steps);
    }

    if (j.contains("sweep")) {
        cfg.sweep = j.at("sweep");
        if (!cfg.sweep.is_object())
            throw ConfigError("sweep must be an object of axis -> values");
    }

    cfg.partition.seed = cfg.seed;
    cfg.dataset.synth.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse failure in " + path.string() + ": " +
                          e.what());
    }
    try {
        return from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config type error in " + path.string() + ": " +
                          e.what());
    }
}

void ExperimentConfig::validate() const {
    if (dataset.source == "files" && dataset.triples_path.empty())
        throw ConfigError("dataset.source=files requires triples_path");
    if (partition.num_clients == 0)
        throw ConfigError("partition.num_clients must be >= 1");
    if (partition.availability_rate < 0.0 || partition.availability_rate > 1.0)
        throw ConfigError("availability_rate must be in [0, 1]");
    if (partition.dirichlet_alpha <= 0.0)
        throw ConfigError("dirichlet_alpha must be > 0");
    train.validate();
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["out"] = out;
    j["partition_dir"] = partition_dir;
    auto& d = j["dataset"];
    d["source"] = dataset.source;
    d["triples_path"] = dataset.triples_path;
    d["features_v_path"] = dataset.features_v_path;
    d["features_d_path"] = dataset.features_d_path;
    d["synthetic"] = {{"entities", dataset.synth.entities},
                      {"relations", dataset.synth.relations},
                      {"triples", dataset.synth.triples},
                      {"latent_dim", dataset.synth.latent_dim},
                      {"inv_temperature", dataset.synth.inv_temperature}};
    d["feature_dim_v"] = dataset.feature_dim_v;
    d["feature_dim_d"] = dataset.feature_dim_d;
    d["variants_per_entity"] = dataset.variants_per_entity;
    auto& p = j["partition"];
    p["num_clients"] = partition.num_clients;
    p["dirichlet_alpha"] = partition.dirichlet_alpha;
    p["availability_rate"] = partition.availability_rate;
    auto& m = j["model"];
    m["entity_dim"] = train.entity_dim;
    m["relation_dim"] = train.relation_dim;
    m["margin"] = train.margin;
    m["fusion"] = to_string(train.fusion);
    m["imputer"] = to_string(train.imputer);
    m["recon"] = to_string(train.recon);
    m["diffusion"] = {{"steps", train.diffusion_steps},
                      {"beta_low", train.beta_low},
                      {"beta_up", train.beta_up},
                      {"scale", train.beta_scale},
                      {"chain_start", train.chain_start}};
    auto& t = j["train"];
    t["rounds"] = train.rounds;
    t["local_epochs"] = train.local_epochs;
    t["batch_size"] = train.batch_size;
    t["patience"] = train.patience;
    t["negatives"] = train.negatives;
    t["lr"] = train.lr;
    t["adam_beta1"] = train.adam_beta1;
    t["adam_beta2"] = train.adam_beta2;
    t["adam_eps"] = train.adam_eps;
    t["objective"] = to_string(train.objective);
    t["lambda"] = train.weights.lambda;
    t["mu"] = train.weights.mu;
    t["eta"] = train.weights.eta;
    t["tau"] = train.weights.tau;
    t["rho"] = train.weights.rho;
    t["client_fraction"] = train.client_fraction;
    t["warmstart_rounds"] = train.warmstart_rounds;
    t["imputer_warmup_steps"] = train.imputer_warmup_steps;
    j["sweep"] = sweep.is_null() ? nlohmann::json::object() : sweep;
    return j;
}

std::string ExperimentConfig::config_hash() const {
    nlohmann::ordered_json j = to_json();
    j.erase("out");
    j.erase("partition_dir");
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace fedmkg

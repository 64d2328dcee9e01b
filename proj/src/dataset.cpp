#include "fedmkg/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "fedmkg/errors.hpp"
#include "fedmkg/kernels.hpp"

namespace fedmkg {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr char kMagic[4] = {'F', 'M', 'K', 'G'};

std::size_t intern(std::vector<std::string>& names,
                   std::unordered_map<std::string, std::size_t>& index,
                   const std::string& name) {
    auto it = index.find(name);
    if (it != index.end()) return it->second;
    const std::size_t id = names.size();
    names.push_back(name);
    index.emplace(name, id);
    return id;
}

std::size_t categorical(Rng& rng, const std::vector<double>& probs) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

std::size_t local_of(const std::vector<std::size_t>& sorted_globals,
                     std::size_t global) {
    auto it = std::lower_bound(sorted_globals.begin(), sorted_globals.end(),
                               global);
    return static_cast<std::size_t>(it - sorted_globals.begin());
}

void write_u32(std::ofstream& os, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v & 0xff),
                            static_cast<unsigned char>((v >> 8) & 0xff),
                            static_cast<unsigned char>((v >> 16) & 0xff),
                            static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::ifstream& is) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    if (!is) throw FormatError("matrix file truncated in header");
    return static_cast<std::uint32_t>(buf[0]) |
           (static_cast<std::uint32_t>(buf[1]) << 8) |
           (static_cast<std::uint32_t>(buf[2]) << 16) |
           (static_cast<std::uint32_t>(buf[3]) << 24);
}

}  // namespace

MultimodalKG load_triples(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open triples file: " + path.string());
    MultimodalKG kg;
    std::unordered_map<std::string, std::size_t> ent_idx, rel_idx;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t t1 = line.find('\t');
        std::size_t t2 = t1 == std::string::npos ? std::string::npos
                                                 : line.find('\t', t1 + 1);
        std::size_t t3 = t2 == std::string::npos ? std::string::npos
                                                 : line.find('\t', t2 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos ||
            t3 != std::string::npos) {
            throw ParseError("malformed triple at line " +
                             std::to_string(line_no) + " of " + path.string());
        }
        const std::string h = line.substr(0, t1);
        const std::string r = line.substr(t1 + 1, t2 - t1 - 1);
        const std::string t = line.substr(t2 + 1);
        if (h.empty() || r.empty() || t.empty())
            throw ParseError("empty field at line " + std::to_string(line_no) +
                             " of " + path.string());
        Triple tr;
        tr.head = intern(kg.entity_names, ent_idx, h);
        tr.rel = intern(kg.relation_names, rel_idx, r);
        tr.tail = intern(kg.entity_names, ent_idx, t);
        kg.triples.push_back(tr);
    }
    if (kg.triples.empty())
        throw ParseError("empty graph: no triples in " + path.string());
    return kg;
}

std::vector<ClientShard> partition_by_relation(const MultimodalKG& kg,
                                               const PartitionConfig& cfg) {
    const std::size_t num_rel = kg.num_relations();
    if (cfg.num_clients == 0) throw ConfigError("num_clients must be >= 1");
    if (cfg.num_clients > num_rel)
        throw ConfigError("more clients (" + std::to_string(cfg.num_clients) +
                          ") than relations (" + std::to_string(num_rel) + ")");

    std::vector<std::size_t> order(num_rel);
    for (std::size_t i = 0; i < num_rel; ++i) order[i] = i;
    Rng rng = Rng(cfg.seed).fork("partition/relations");
    rng.shuffle(order);

    std::vector<std::size_t> rel_owner(num_rel);
    for (std::size_t pos = 0; pos < num_rel; ++pos)
        rel_owner[order[pos]] = pos % cfg.num_clients;

    std::vector<ClientShard> shards(cfg.num_clients);
    std::vector<std::vector<Triple>> global_triples(cfg.num_clients);
    std::vector<std::set<std::size_t>> ent_sets(cfg.num_clients);
    std::vector<std::set<std::size_t>> rel_sets(cfg.num_clients);
    for (const Triple& t : kg.triples) {
        const std::size_t c = rel_owner[t.rel];
        global_triples[c].push_back(t);
        ent_sets[c].insert(t.head);
        ent_sets[c].insert(t.tail);
    }
    for (std::size_t r = 0; r < num_rel; ++r) rel_sets[rel_owner[r]].insert(r);

    for (std::size_t c = 0; c < cfg.num_clients; ++c) {
        ClientShard& s = shards[c];
        s.client_id = static_cast<int>(c);
        s.entity_global.assign(ent_sets[c].begin(), ent_sets[c].end());
        s.relation_global.assign(rel_sets[c].begin(), rel_sets[c].end());
        s.triples.reserve(global_triples[c].size());
        for (const Triple& t : global_triples[c]) {
            Triple lt;
            lt.head = local_of(s.entity_global, t.head);
            lt.rel = local_of(s.relation_global, t.rel);
            lt.tail = local_of(s.entity_global, t.tail);
            s.triples.push_back(lt);
        }
    }
    return shards;
}

void split_train_valid_test(ClientShard& shard,
                            const std::array<double, 3>& ratios,
                            std::uint64_t seed) {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::fabs(sum - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");
    if (shard.triples.empty())
        throw ContractError("split_train_valid_test: empty shard");

    std::vector<Triple> order = shard.triples;
    Rng rng = Rng(seed).fork("partition/split/client" +
                             std::to_string(shard.client_id));
    rng.shuffle(order);

    const std::size_t n = order.size();
    const std::size_t n_valid = static_cast<std::size_t>(
        static_cast<double>(n) * ratios[1]);
    const std::size_t n_test = static_cast<std::size_t>(
        static_cast<double>(n) * ratios[2]);
    const std::size_t n_train = n - n_valid - n_test;

    shard.train.assign(order.begin(), order.begin() + n_train);
    shard.valid.assign(order.begin() + n_train,
                       order.begin() + n_train + n_valid);
    shard.test.assign(order.begin() + n_train + n_valid, order.end());
}

DirichletFeatures partition_multimodal_dirichlet(const MultimodalKG& kg,
                                                 const PartitionConfig& cfg) {
    if (cfg.dirichlet_alpha <= 0.0)
        throw ConfigError("dirichlet_alpha must be > 0");
    const std::size_t C = cfg.num_clients;
    DirichletFeatures out;

    auto assign_modality = [&](const FeatureVariants& fv, const char* name) {
        std::vector<Matrix> per_client(
            C, Matrix(kg.num_entities(), fv.dim));
        if (fv.empty()) return per_client;
        Rng rng = Rng(cfg.seed).fork(std::string("partition/dirichlet/") + name);
        for (std::size_t e = 0; e < kg.num_entities(); ++e) {
            const auto& variants = fv.per_entity[e];
            if (variants.empty()) continue;  // globally missing modality
            const std::vector<double> props = rng.dirichlet(cfg.dirichlet_alpha, C);
            std::vector<std::vector<double>> sums(C,
                                                  std::vector<double>(fv.dim, 0.0));
            std::vector<std::size_t> counts(C, 0);
            for (const auto& var : variants) {
                const std::size_t c = categorical(rng, props);
                kern::axpy(fv.dim, 1.0, var.data(), sums[c].data());
                counts[c] += 1;
            }
            for (std::size_t c = 0; c < C; ++c) {
                double* dst = per_client[c].row(e);
                if (counts[c] > 0) {
                    kern::scale(fv.dim, 1.0 / static_cast<double>(counts[c]),
                                sums[c].data(), dst);
                } else {
                    // No variant landed here; fall back to one sampled variant
                    // so the feature stays defined (absence is governed by the
                    // availability mask alone).
                    const std::size_t pick = static_cast<std::size_t>(
                        rng.uniform_int(variants.size()));
                    std::copy(variants[pick].begin(), variants[pick].end(), dst);
                }
            }
        }
        return per_client;
    };

    out.visual = assign_modality(kg.visual, "v");
    out.textual = assign_modality(kg.textual, "d");
    return out;
}

void generate_missing_masks(ClientShard& shard, const PartitionConfig& cfg) {
    const double r = cfg.availability_rate;
    if (r < 0.0 || r > 1.0) throw ConfigError("availability rate must be in [0,1]");
    Rng rng = Rng(cfg.seed).fork("partition/masks/client" +
                                 std::to_string(shard.client_id));
    const std::size_t n = shard.num_entities();
    shard.avail_v.resize(n);
    shard.avail_d.resize(n);
    for (std::size_t i = 0; i < n; ++i) shard.avail_v[i] = rng.bernoulli(r) ? 1 : 0;
    for (std::size_t i = 0; i < n; ++i) shard.avail_d[i] = rng.bernoulli(r) ? 1 : 0;

    auto pad = [&](Matrix& feat, const std::vector<std::uint8_t>& avail) {
        if (feat.rows == 0) return;
        for (std::size_t i = 0; i < n; ++i) {
            if (avail[i]) continue;
            double* row = feat.row(i);
            // i.i.d. N(0, 0.01): small enough not to mimic real features.
            for (std::size_t j = 0; j < feat.cols; ++j) row[j] = 0.1 * rng.normal();
        }
    };
    pad(shard.feat_v, shard.avail_v);
    pad(shard.feat_d, shard.avail_d);
}

void synth_features(MultimodalKG& kg, std::size_t d_v, std::size_t d_d,
                    std::size_t variants_per_entity, std::uint64_t seed,
                    const Matrix* entity_latents) {
    if (d_v == 0 || d_d == 0) throw ConfigError("feature dims must be >= 1");
    if (variants_per_entity == 0)
        throw ConfigError("variants_per_entity must be >= 1");
    Rng root(seed);
    const std::size_t n = kg.num_entities();

    auto make_modality = [&](std::size_t dim, const char* name) {
        FeatureVariants fv;
        fv.dim = dim;
        fv.per_entity.resize(n);
        Rng rng = root.fork(std::string("synth/features/") + name);
        Matrix proj;
        if (entity_latents != nullptr) {
            proj = Matrix(entity_latents->cols, dim);
            rng.fill_normal(proj, 0.0,
                            1.0 / std::sqrt(static_cast<double>(
                                      entity_latents->cols)));
        }
        for (std::size_t e = 0; e < n; ++e) {
            std::vector<double> type(dim);
            if (entity_latents != nullptr) {
                for (std::size_t j = 0; j < dim; ++j) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < entity_latents->cols; ++k)
                        s += entity_latents->at(e, k) * proj.at(k, j);
                    type[j] = s;
                }
            } else {
                for (double& v : type) v = rng.normal();
            }
            auto& vars = fv.per_entity[e];
            vars.resize(variants_per_entity);
            for (auto& var : vars) {
                var.resize(dim);
                for (std::size_t j = 0; j < dim; ++j)
                    var[j] = type[j] + 0.1 * rng.normal();
            }
        }
        return fv;
    };

    kg.visual = make_modality(d_v, "v");
    kg.textual = make_modality(d_d, "d");
}

SynthKG synth_kg(const SynthConfig& cfg) {
    if (cfg.latent_dim % 2 != 0)
        throw ConfigError("synth latent_dim must be even");
    if (cfg.entities < 2 || cfg.relations < 1 || cfg.triples < cfg.relations)
        throw ConfigError("synth graph too small");
    Rng root(cfg.seed);

    SynthKG out;
    out.latents = Matrix(cfg.entities, cfg.latent_dim);
    Rng lat_rng = root.fork("synth/latents");
    lat_rng.fill_normal(out.latents, 0.0, 0.5);

    Matrix phases(cfg.relations, cfg.latent_dim / 2);
    Rng ph_rng = root.fork("synth/phases");
    ph_rng.fill_uniform(phases, -kPi, kPi);

    out.kg.entity_names.reserve(cfg.entities);
    for (std::size_t i = 0; i < cfg.entities; ++i)
        out.kg.entity_names.push_back("e" + std::to_string(i));
    for (std::size_t i = 0; i < cfg.relations; ++i)
        out.kg.relation_names.push_back("r" + std::to_string(i));

    Rng tr_rng = root.fork("synth/triples");
    const std::size_t half = cfg.latent_dim / 2;
    std::vector<double> scores(cfg.entities);
    auto sample_triple = [&](std::size_t rel) {
        const std::size_t h =
            static_cast<std::size_t>(tr_rng.uniform_int(cfg.entities));
        const double* hv = out.latents.row(h);
        const double* th = phases.row(rel);
        double mx = -1e300;
        for (std::size_t t = 0; t < cfg.entities; ++t) {
            const double* tv = out.latents.row(t);
            double sq = 0.0;
            for (std::size_t j = 0; j < half; ++j) {
                const double ct = std::cos(th[j]);
                const double st = std::sin(th[j]);
                const double rre = hv[j] * ct - hv[half + j] * st;
                const double rim = hv[j] * st + hv[half + j] * ct;
                const double dre = rre - tv[j];
                const double dim = rim - tv[half + j];
                sq += dre * dre + dim * dim;
            }
            scores[t] = -cfg.inv_temperature * std::sqrt(sq);
            mx = std::max(mx, scores[t]);
        }
        double z = 0.0;
        for (double& s : scores) {
            s = std::exp(s - mx);
            z += s;
        }
        double u = tr_rng.uniform() * z;
        std::size_t t = cfg.entities - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < cfg.entities; ++i) {
            acc += scores[i];
            if (u < acc) {
                t = i;
                break;
            }
        }
        return Triple{h, rel, t};
    };

    // One triple per relation first so no relation is empty, then uniform.
    for (std::size_t r = 0; r < cfg.relations; ++r)
        out.kg.triples.push_back(sample_triple(r));
    while (out.kg.triples.size() < cfg.triples) {
        const std::size_t r =
            static_cast<std::size_t>(tr_rng.uniform_int(cfg.relations));
        out.kg.triples.push_back(sample_triple(r));
    }
    return out;
}

void write_matrix(const std::filesystem::path& path, const Matrix& m,
                  std::uint32_t version) {
    if (version != 1 && version != 2)
        throw FormatError("unsupported matrix container version");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for write: " + path.string());
    os.write(kMagic, 4);
    write_u32(os, version);
    write_u32(os, static_cast<std::uint32_t>(m.rows));
    write_u32(os, static_cast<std::uint32_t>(m.cols));
    if (version == 1) {
        std::vector<float> buf(m.count());
        for (std::size_t i = 0; i < m.count(); ++i)
            buf[i] = static_cast<float>(m.data[i]);
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    } else {
        os.write(reinterpret_cast<const char*>(m.data.data()),
                 static_cast<std::streamsize>(m.count() * sizeof(double)));
    }
    if (!os) throw FormatError("write failed: " + path.string());
}

Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open matrix file: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad magic in " + path.string());
    const std::uint32_t version = read_u32(is);
    if (version != 1 && version != 2)
        throw FormatError("unsupported version in " + path.string());
    const std::uint32_t rows = read_u32(is);
    const std::uint32_t cols = read_u32(is);
    Matrix m(rows, cols);
    if (version == 1) {
        std::vector<float> buf(m.count());
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!is) throw FormatError("matrix file truncated: " + path.string());
        for (std::size_t i = 0; i < m.count(); ++i)
            m.data[i] = static_cast<double>(buf[i]);
    } else {
        is.read(reinterpret_cast<char*>(m.data.data()),
                static_cast<std::streamsize>(m.count() * sizeof(double)));
        if (!is) throw FormatError("matrix file truncated: " + path.string());
    }
    char extra;
    if (is.read(&extra, 1))
        throw FormatError("trailing bytes in " + path.string());
    return m;
}

Matrix load_features(const std::filesystem::path& path,
                     std::size_t expected_rows) {
    Matrix m = read_matrix(path);
    if (m.rows != expected_rows)
        throw FormatError("feature row count " + std::to_string(m.rows) +
                          " does not match entity count " +
                          std::to_string(expected_rows) + " in " + path.string());
    return m;
}

namespace {

void write_triples_tsv(const std::filesystem::path& path,
                       const std::vector<Triple>& triples,
                       const ClientShard& shard, const MultimodalKG& kg) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open for write: " + path.string());
    for (const Triple& t : triples) {
        os << kg.entity_names[shard.entity_global[t.head]] << '\t'
           << kg.relation_names[shard.relation_global[t.rel]] << '\t'
           << kg.entity_names[shard.entity_global[t.tail]] << '\n';
    }
}

Matrix mask_matrix(const std::vector<std::uint8_t>& avail, std::size_t dim) {
    Matrix m(avail.size(), dim);
    for (std::size_t i = 0; i < avail.size(); ++i)
        if (avail[i])
            for (std::size_t j = 0; j < dim; ++j) m.at(i, j) = 1.0;
    return m;
}

std::vector<std::uint8_t> avail_from_mask(const Matrix& m,
                                          const std::filesystem::path& path) {
    std::vector<std::uint8_t> avail(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double first = m.cols > 0 ? m.at(i, 0) : 1.0;
        if (first != 0.0 && first != 1.0)
            throw FormatError("mask entries must be 0 or 1: " + path.string());
        for (std::size_t j = 0; j < m.cols; ++j)
            if (m.at(i, j) != first)
                throw FormatError("mask row not constant in " + path.string());
        avail[i] = first != 0.0 ? 1 : 0;
    }
    return avail;
}

}  // namespace

void write_partition(const std::filesystem::path& dir,
                     const std::vector<ClientShard>& shards,
                     const MultimodalKG& kg,
                     const PartitionManifest& manifest) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    for (const ClientShard& s : shards) {
        const fs::path cdir = dir / ("client_" + std::to_string(s.client_id));
        fs::create_directories(cdir);
        write_triples_tsv(cdir / "train.tsv", s.train, s, kg);
        write_triples_tsv(cdir / "valid.tsv", s.valid, s, kg);
        write_triples_tsv(cdir / "test.tsv", s.test, s, kg);
        {
            std::ofstream os(cdir / "entities.txt");
            for (std::size_t g : s.entity_global)
                os << g << '\t' << kg.entity_names[g] << '\n';
        }
        {
            std::ofstream os(cdir / "relations.txt");
            for (std::size_t g : s.relation_global)
                os << g << '\t' << kg.relation_names[g] << '\n';
        }
        write_matrix(cdir / "feat_v.bin", s.feat_v, 1);
        write_matrix(cdir / "feat_d.bin", s.feat_d, 1);
        write_matrix(cdir / "mask_v.bin", mask_matrix(s.avail_v, s.feat_v.cols), 1);
        write_matrix(cdir / "mask_d.bin", mask_matrix(s.avail_d, s.feat_d.cols), 1);
    }

    nlohmann::ordered_json j;
    j["seed"] = manifest.seed;
    j["dirichlet_alpha"] = manifest.dirichlet_alpha;
    j["availability_rate"] = manifest.availability_rate;
    j["num_clients"] = manifest.num_clients;
    j["num_entities"] = manifest.num_entities;
    j["num_relations"] = manifest.num_relations;
    j["dim_v"] = manifest.dim_v;
    j["dim_d"] = manifest.dim_d;
    j["avg_relations"] = manifest.avg_relations;
    j["avg_entities"] = manifest.avg_entities;
    j["avg_triples"] = manifest.avg_triples;
    j["mean_cross_client_sim_v"] = manifest.mean_cross_client_sim_v;
    j["mean_cross_client_sim_d"] = manifest.mean_cross_client_sim_d;
    std::ofstream os(dir / "partition_manifest.json");
    os << j.dump(2) << '\n';
}

PartitionData read_partition(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    PartitionData out;
    {
        std::ifstream is(dir / "partition_manifest.json");
        if (!is)
            throw FormatError("missing partition manifest in " + dir.string());
        nlohmann::json j = nlohmann::json::parse(is);
        out.manifest.seed = j.at("seed").get<std::uint64_t>();
        out.manifest.dirichlet_alpha = j.at("dirichlet_alpha").get<double>();
        out.manifest.availability_rate = j.at("availability_rate").get<double>();
        out.manifest.num_clients = j.at("num_clients").get<std::size_t>();
        out.manifest.num_entities = j.at("num_entities").get<std::size_t>();
        out.manifest.num_relations = j.at("num_relations").get<std::size_t>();
        out.manifest.dim_v = j.at("dim_v").get<std::size_t>();
        out.manifest.dim_d = j.at("dim_d").get<std::size_t>();
        out.manifest.avg_relations = j.at("avg_relations").get<double>();
        out.manifest.avg_entities = j.at("avg_entities").get<double>();
        out.manifest.avg_triples = j.at("avg_triples").get<double>();
        out.manifest.mean_cross_client_sim_v =
            j.at("mean_cross_client_sim_v").get<double>();
        out.manifest.mean_cross_client_sim_d =
            j.at("mean_cross_client_sim_d").get<double>();
    }

    for (std::size_t c = 0; c < out.manifest.num_clients; ++c) {
        const fs::path cdir = dir / ("client_" + std::to_string(c));
        ClientShard s;
        s.client_id = static_cast<int>(c);

        std::unordered_map<std::string, std::size_t> ent_local, rel_local;
        auto read_map = [&](const fs::path& p, std::vector<std::size_t>& globals,
                            std::unordered_map<std::string, std::size_t>& local) {
            std::ifstream is(p);
            if (!is) throw FormatError("missing map file: " + p.string());
            std::string line;
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                const std::size_t tab = line.find('\t');
                if (tab == std::string::npos)
                    throw FormatError("malformed map line in " + p.string());
                globals.push_back(std::stoull(line.substr(0, tab)));
                local.emplace(line.substr(tab + 1), globals.size() - 1);
            }
        };
        read_map(cdir / "entities.txt", s.entity_global, ent_local);
        read_map(cdir / "relations.txt", s.relation_global, rel_local);

        auto read_tsv = [&](const fs::path& p) {
            std::vector<Triple> triples;
            std::ifstream is(p);
            if (!is) throw FormatError("missing split file: " + p.string());
            std::string line;
            std::size_t line_no = 0;
            while (std::getline(is, line)) {
                ++line_no;
                if (line.empty()) continue;
                const std::size_t t1 = line.find('\t');
                const std::size_t t2 =
                    t1 == std::string::npos ? std::string::npos
                                            : line.find('\t', t1 + 1);
                if (t1 == std::string::npos || t2 == std::string::npos)
                    throw ParseError("malformed triple at line " +
                                     std::to_string(line_no) + " of " +
                                     p.string());
                Triple t;
                t.head = ent_local.at(line.substr(0, t1));
                t.rel = rel_local.at(line.substr(t1 + 1, t2 - t1 - 1));
                t.tail = ent_local.at(line.substr(t2 + 1));
                triples.push_back(t);
            }
            return triples;
        };
        s.train = read_tsv(cdir / "train.tsv");
        s.valid = read_tsv(cdir / "valid.tsv");
        s.test = read_tsv(cdir / "test.tsv");
        s.triples = s.train;
        s.triples.insert(s.triples.end(), s.valid.begin(), s.valid.end());
        s.triples.insert(s.triples.end(), s.test.begin(), s.test.end());

        s.feat_v = load_features(cdir / "feat_v.bin", s.entity_global.size());
        s.feat_d = load_features(cdir / "feat_d.bin", s.entity_global.size());
        const Matrix mv = read_matrix(cdir / "mask_v.bin");
        const Matrix md = read_matrix(cdir / "mask_d.bin");
        if (mv.rows != s.entity_global.size() || md.rows != s.entity_global.size())
            throw FormatError("mask row count mismatch in " + cdir.string());
        s.avail_v = avail_from_mask(mv, cdir / "mask_v.bin");
        s.avail_d = avail_from_mask(md, cdir / "mask_d.bin");

        out.shards.push_back(std::move(s));
    }
    return out;
}

}  // namespace fedmkg

#include "fedmkg/fusion.hpp"

#include <cmath>

#include "fedmkg/errors.hpp"

namespace fedmkg {

FusionKind fusion_kind_from_string(const std::string& s) {
    if (s == "average") return FusionKind::Average;
    if (s == "weighted") return FusionKind::Weighted;
    if (s == "concat") return FusionKind::Concat;
    if (s == "split") return FusionKind::Split;
    if (s == "gated") return FusionKind::Gated;
    throw ConfigError("unknown fusion kind: " + s);
}

const char* to_string(FusionKind k) {
    switch (k) {
        case FusionKind::Average: return "average";
        case FusionKind::Weighted: return "weighted";
        case FusionKind::Concat: return "concat";
        case FusionKind::Split: return "split";
        case FusionKind::Gated: return "gated";
    }
    return "?";
}

FusionParams FusionParams::make(FusionKind kind, std::size_t entity_dim,
                                Rng& rng) {
    FusionParams p;
    p.kind = kind;
    p.entity_dim = entity_dim;
    switch (kind) {
        case FusionKind::Average:
        case FusionKind::Split:
            break;
        case FusionKind::Weighted:
            p.weight_logits = Param(Matrix(1, 3));  // softmax(0,0,0) = Average
            break;
        case FusionKind::Concat: {
            Matrix w(3 * entity_dim, entity_dim);
            rng.fill_normal(w, 0.0,
                            1.0 / std::sqrt(3.0 * static_cast<double>(entity_dim)));
            p.proj = Param(std::move(w));
            break;
        }
        case FusionKind::Gated: {
            const double sd = 1.0 / std::sqrt(static_cast<double>(entity_dim));
            auto mk = [&] {
                Matrix w(entity_dim, entity_dim);
                rng.fill_normal(w, 0.0, sd);
                return Param(std::move(w));
            };
            p.gate_w0_v = mk();
            p.gate_w1_v = mk();
            p.gate_w2_v = mk();
            p.gate_w0_d = mk();
            p.gate_w1_d = mk();
            p.gate_w2_d = mk();
            break;
        }
    }
    return p;
}

std::vector<Param*> FusionParams::trainable() {
    std::vector<Param*> out;
    for (auto& [name, p] : named_params()) out.push_back(p);
    return out;
}

std::vector<std::pair<std::string, Param*>> FusionParams::named_params() {
    std::vector<std::pair<std::string, Param*>> out;
    auto push = [&](const char* name, Param& p) {
        if (p.value.count() > 0) out.emplace_back(name, &p);
    };
    push("fusion.weight_logits", weight_logits);
    push("fusion.proj", proj);
    push("fusion.gate_w0_v", gate_w0_v);
    push("fusion.gate_w1_v", gate_w1_v);
    push("fusion.gate_w2_v", gate_w2_v);
    push("fusion.gate_w0_d", gate_w0_d);
    push("fusion.gate_w1_d", gate_w1_d);
    push("fusion.gate_w2_d", gate_w2_d);
    return out;
}

Var fuse(Tape& t, Var S, Var V, Var D, FusionParams& params) {
    if (!t.val(S).same_shape(t.val(V)) || !t.val(S).same_shape(t.val(D)))
        throw DimensionError("fuse: modal matrices must share a shape");
    switch (params.kind) {
        case FusionKind::Average:
            return t.scale(t.add(t.add(S, V), D), 1.0 / 3.0);
        case FusionKind::Weighted: {
            Var w = t.softmax_rows(t.param(params.weight_logits));
            Var e = t.scale_by_scalar(S, t.slice_cols(w, 0, 1));
            e = t.add(e, t.scale_by_scalar(V, t.slice_cols(w, 1, 2)));
            return t.add(e, t.scale_by_scalar(D, t.slice_cols(w, 2, 3)));
        }
        case FusionKind::Concat:
            return t.matmul(t.concat_cols({S, V, D}), t.param(params.proj));
        case FusionKind::Gated: {
            auto gated = [&](Var x, Param& w0, Param& w1, Param& w2) {
                Var gate = t.sigmoid(t.matmul(S, t.param(w1)));
                return t.matmul(t.mul(gate, t.matmul(x, t.param(w2))),
                                t.param(w0));
            };
            Var vp = gated(V, params.gate_w0_v, params.gate_w1_v, params.gate_w2_v);
            Var dp = gated(D, params.gate_w0_d, params.gate_w1_d, params.gate_w2_d);
            return t.scale(t.add(t.add(S, vp), dp), 1.0 / 3.0);
        }
        case FusionKind::Split:
            throw ConfigError("fuse: split fusion never fuses embeddings");
    }
    throw ConfigError("fuse: unhandled fusion kind");
}

}  // namespace fedmkg

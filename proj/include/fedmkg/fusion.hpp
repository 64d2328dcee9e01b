#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fedmkg/optim.hpp"
#include "fedmkg/rng.hpp"
#include "fedmkg/tape.hpp"

namespace fedmkg {

enum class FusionKind { Average, Weighted, Concat, Split, Gated };

FusionKind fusion_kind_from_string(const std::string& s);
const char* to_string(FusionKind k);

// Trainable state for the fusion function Phi. Weighted keeps three
// softmax-normalized logits (so the weights stay on the simplex and equal
// logits reduce exactly to Average); Concat holds a 3d -> d projection;
// Gated holds W0/W1/W2 per non-structural modality. Split has no fusion
// parameters here -- its per-modality relation tables live with the client.
struct FusionParams {
    FusionKind kind = FusionKind::Weighted;
    std::size_t entity_dim = 0;

    Param weight_logits;  // 1 x 3 (Weighted)
    Param proj;           // 3d x d (Concat)
    Param gate_w0_v, gate_w1_v, gate_w2_v;  // d x d (Gated, visual)
    Param gate_w0_d, gate_w1_d, gate_w2_d;  // d x d (Gated, textual)

    static FusionParams make(FusionKind kind, std::size_t entity_dim, Rng& rng);

    std::vector<Param*> trainable();
    std::vector<std::pair<std::string, Param*>> named_params();
};

// E = Phi(S, V, D). All inputs |E_c| x d_e. Not defined for Split, which
// never fuses (it averages per-modality prediction probabilities instead).
Var fuse(Tape& tape, Var S, Var V, Var D, FusionParams& params);

}  // namespace fedmkg

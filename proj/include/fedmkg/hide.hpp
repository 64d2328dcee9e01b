#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedmkg/matrix.hpp"
#include "fedmkg/optim.hpp"
#include "fedmkg/rng.hpp"
#include "fedmkg/tape.hpp"

namespace fedmkg {

// Noise schedule constants. beta is linear from beta_low to beta_up (times
// an overall scale), alpha_t = 1 - beta_t, alpha_bar the running product,
// beta_tilde the posterior variance with beta_tilde_1 = beta_1. Vectors are
// 0-indexed by t-1.
struct DiffusionSchedule {
    std::size_t steps = 0;  // T
    std::vector<double> beta, alpha, alpha_bar, beta_tilde;

    static DiffusionSchedule linear(std::size_t T, double beta_low,
                                    double beta_up, double scale = 1.0);
    // Test hook: explicit betas (degenerate all-zero schedules allowed).
    static DiffusionSchedule from_betas(std::vector<double> betas);
};

enum class ReconKind { Cra, Ae, Mlp, Mha };
enum class ImputerKind { HidE, Ae, Cra, Mmin, None };

ReconKind recon_kind_from_string(const std::string& s);
ImputerKind imputer_kind_from_string(const std::string& s);
const char* to_string(ReconKind k);
const char* to_string(ImputerKind k);

// Row t-1 embeds step t (sinusoid pairs, like positional encodings).
Matrix sinusoidal_step_embedding(std::size_t steps, std::size_t dim);

// Autoencoder block: in_w -> ceil(w/2) -> ceil(w/4) -> ceil(w/2) -> w with
// ReLU between layers and a linear output. The hidden ramp follows the
// output width w; zero_last zero-initializes the final layer so residual
// stacks start as the identity.
struct AeBlock {
    Param w1, b1, w2, b2, w3, b3, w4, b4;

    static AeBlock make(std::size_t in_w, std::size_t out_w, Rng& rng,
                        bool zero_last);
    Var forward(Tape& t, Var x);
    void collect(std::vector<std::pair<std::string, Param*>>& out,
                 const std::string& prefix);
};

// Reconstruction network x_hat_theta(x_t, t) for the diffusion imputer.
// The step enters as a sinusoidal embedding: concatenated to the input for
// Cra/Ae/Mlp, projected and added to each modality token for Mha.
struct ReconNet {
    ReconKind kind = ReconKind::Cra;
    std::size_t width = 0;     // 3 * d_e
    std::size_t step_dim = 16;
    std::size_t heads = 4;     // Mha
    Matrix step_table;         // steps x step_dim

    std::vector<AeBlock> blocks;          // Cra: 3 residual; Ae: 1 plain
    Param mlp_w1, mlp_b1, mlp_w2, mlp_b2, mlp_w3, mlp_b3;
    Param att_q, att_k, att_v, att_o, att_step;

    static ReconNet make(ReconKind kind, std::size_t width, std::size_t steps,
                         Rng& rng, std::size_t step_dim = 16);
    Var forward(Tape& t, Var x_t, std::size_t step);
    std::vector<std::pair<std::string, Param*>> named_params(
        const std::string& prefix);
};

// Single-pass reconstruction baselines (no step conditioning). Ae is one
// block, Cra cascades three residual blocks, Mmin chains a Cra encoder and a
// Cra decoder with a two-direction cycle objective.
struct BaselineNet {
    ImputerKind kind = ImputerKind::Ae;
    std::vector<AeBlock> enc;
    std::vector<AeBlock> dec;  // Mmin only

    static BaselineNet make(ImputerKind kind, std::size_t width, Rng& rng);
    Var forward(Tape& t, Var x);                // x_hat (Mmin: encoder output)
    Var backward_pass(Tape& t, Var x_forward);  // Mmin decoder output
    std::vector<std::pair<std::string, Param*>> named_params(
        const std::string& prefix);
};

// --- hyper-modal construction -------------------------------------------------

// x0 = [S || V || D] on the tape.
Var build_hypermodal(Tape& t, Var S, Var V, Var D);

// Composite mask [1 || M_v || M_d] broadcast to d_e columns per block; the
// structural block is always observed.
Matrix hypermodal_mask(const std::vector<std::uint8_t>& avail_v,
                       const std::vector<std::uint8_t>& avail_d,
                       std::size_t entity_dim);

// --- diffusion processes -------------------------------------------------------

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) * noise, 1 <= t <= T.
Var q_sample(Tape& t, Var x0, std::size_t step, const Matrix& noise,
             const DiffusionSchedule& sched);
Matrix q_sample_value(const Matrix& x0, std::size_t step, const Matrix& noise,
                      const DiffusionSchedule& sched);

// Mean-only reverse chain: noise x0 to the chain start, walk the posterior
// means down to t=1, and return the final reconstruction.
Var reverse_generate(Tape& t, Var x0, ReconNet& net,
                     const DiffusionSchedule& sched, const Matrix& noise_top,
                     std::size_t chain_start = 0);

// || M . (x_hat(x_t, t) - x0) ||^2 / #observed with t ~ U{1..T} and Gaussian
// noise drawn from rng.
Var masked_diffusion_loss(Tape& t, Var x0, const Matrix& mask, ReconNet& net,
                          const DiffusionSchedule& sched, Rng& rng);

// x_tilde = M . x0 + (1 - M) . x_hat; observed coordinates bit-identical.
Var impute_merge(Tape& t, const Matrix& mask, Var x0, Var xhat);
Matrix impute_merge_value(const Matrix& mask, const Matrix& x0,
                          const Matrix& xhat);

// Masked reconstruction objective shared by the baselines; Mmin adds the
// backward-direction term.
Var baseline_recon_loss(Tape& t, Var x0, const Matrix& mask, BaselineNet& net);

// --- unified imputer -----------------------------------------------------------

struct Imputer {
    ImputerKind kind = ImputerKind::None;
    DiffusionSchedule schedule;
    ReconNet recon;
    BaselineNet baseline;
    std::size_t chain_start = 0;  // 0 = full T

    static Imputer make(ImputerKind kind, ReconKind recon_kind,
                        std::size_t width, const DiffusionSchedule& sched,
                        Rng& rng, std::size_t chain_start = 0);

    bool active() const { return kind != ImputerKind::None; }

    // Imputed hyper-modal matrix on the tape (x0 itself for None).
    Var impute(Tape& t, Var x0, const Matrix& mask, Rng& rng);
    // Reconstruction objective (L_DI for HidE); scalar 0 for None.
    Var aux_loss(Tape& t, Var x0, const Matrix& mask, Rng& rng);

    std::vector<Param*> trainable();
    std::vector<std::pair<std::string, Param*>> named_params();
};

}  // namespace fedmkg

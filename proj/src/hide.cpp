#include "fedmkg/hide.hpp"

#include <cmath>

#include "fedmkg/errors.hpp"

namespace fedmkg {

DiffusionSchedule DiffusionSchedule::linear(std::size_t T, double beta_low,
                                            double beta_up, double scale) {
    if (T == 0) throw ConfigError("diffusion steps must be >= 1");
    if (beta_low < 0.0 || beta_up < beta_low || scale <= 0.0)
        throw ConfigError("invalid beta range");
    std::vector<double> betas(T);
    for (std::size_t i = 0; i < T; ++i) {
        const double frac =
            T == 1 ? 0.0
                   : static_cast<double>(i) / static_cast<double>(T - 1);
        betas[i] = scale * (beta_low + (beta_up - beta_low) * frac);
    }
    return from_betas(std::move(betas));
}

DiffusionSchedule DiffusionSchedule::from_betas(std::vector<double> betas) {
    if (betas.empty()) throw ConfigError("diffusion steps must be >= 1");
    DiffusionSchedule s;
    s.steps = betas.size();
    s.beta = std::move(betas);
    s.alpha.resize(s.steps);
    s.alpha_bar.resize(s.steps);
    s.beta_tilde.resize(s.steps);
    double prod = 1.0;
    for (std::size_t i = 0; i < s.steps; ++i) {
        if (s.beta[i] < 0.0 || s.beta[i] >= 1.0)
            throw ConfigError("beta_t must lie in [0, 1)");
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    s.beta_tilde[0] = s.beta[0];
    for (std::size_t i = 1; i < s.steps; ++i) {
        const double denom = 1.0 - s.alpha_bar[i];
        s.beta_tilde[i] =
            denom > 0.0 ? (1.0 - s.alpha_bar[i - 1]) / denom * s.beta[i] : 0.0;
    }
    return s;
}

ReconKind recon_kind_from_string(const std::string& s) {
    if (s == "cra") return ReconKind::Cra;
    if (s == "ae") return ReconKind::Ae;
    if (s == "mlp") return ReconKind::Mlp;
    if (s == "mha") return ReconKind::Mha;
    throw ConfigError("unknown reconstruction network: " + s);
}

ImputerKind imputer_kind_from_string(const std::string& s) {
    if (s == "hide") return ImputerKind::HidE;
    if (s == "ae") return ImputerKind::Ae;
    if (s == "cra") return ImputerKind::Cra;
    if (s == "mmin") return ImputerKind::Mmin;
    if (s == "none") return ImputerKind::None;
    throw ConfigError("unknown imputer kind: " + s);
}

const char* to_string(ReconKind k) {
    switch (k) {
        case ReconKind::Cra: return "cra";
        case ReconKind::Ae: return "ae";
        case ReconKind::Mlp: return "mlp";
        case ReconKind::Mha: return "mha";
    }
    return "?";
}

const char* to_string(ImputerKind k) {
    switch (k) {
        case ImputerKind::HidE: return "hide";
        case ImputerKind::Ae: return "ae";
        case ImputerKind::Cra: return "cra";
        case ImputerKind::Mmin: return "mmin";
        case ImputerKind::None: return "none";
    }
    return "?";
}

Matrix sinusoidal_step_embedding(std::size_t steps, std::size_t dim) {
    Matrix table(steps, dim);
    for (std::size_t t = 1; t <= steps; ++t) {
        for (std::size_t j = 0; j + 1 < dim; j += 2) {
            const double freq =
                std::pow(10000.0, -static_cast<double>(j) /
                                      static_cast<double>(dim));
            table.at(t - 1, j) = std::sin(static_cast<double>(t) * freq);
            table.at(t - 1, j + 1) = std::cos(static_cast<double>(t) * freq);
        }
    }
    return table;
}

namespace {

Param linear_init(std::size_t in, std::size_t out, Rng& rng, bool zero) {
    Matrix w(in, out);
    if (!zero) rng.fill_normal(w, 0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    return Param(std::move(w));
}

Var linear(Tape& t, Var x, Param& w, Param& b) {
    return t.add_rowbroadcast(t.matmul(x, t.param(w)), t.param(b));
}

}  // namespace

AeBlock AeBlock::make(std::size_t in_w, std::size_t out_w, Rng& rng,
                      bool zero_last) {
    AeBlock b;
    const std::size_t h1 = (out_w + 1) / 2;
    const std::size_t h2 = (out_w + 3) / 4;
    b.w1 = linear_init(in_w, h1, rng, false);
    b.b1 = Param(Matrix(1, h1));
    b.w2 = linear_init(h1, h2, rng, false);
    b.b2 = Param(Matrix(1, h2));
    b.w3 = linear_init(h2, h1, rng, false);
    b.b3 = Param(Matrix(1, h1));
    b.w4 = linear_init(h1, out_w, rng, zero_last);
    b.b4 = Param(Matrix(1, out_w));
    return b;
}

Var AeBlock::forward(Tape& t, Var x) {
    Var h = t.relu(linear(t, x, w1, b1));
    h = t.relu(linear(t, h, w2, b2));
    h = t.relu(linear(t, h, w3, b3));
    return linear(t, h, w4, b4);
}

void AeBlock::collect(std::vector<std::pair<std::string, Param*>>& out,
                      const std::string& prefix) {
    out.emplace_back(prefix + ".w1", &w1);
    out.emplace_back(prefix + ".b1", &b1);
    out.emplace_back(prefix + ".w2", &w2);
    out.emplace_back(prefix + ".b2", &b2);
    out.emplace_back(prefix + ".w3", &w3);
    out.emplace_back(prefix + ".b3", &b3);
    out.emplace_back(prefix + ".w4", &w4);
    out.emplace_back(prefix + ".b4", &b4);
}

ReconNet ReconNet::make(ReconKind kind, std::size_t width, std::size_t steps,
                        Rng& rng, std::size_t step_dim) {
    ReconNet n;
    n.kind = kind;
    n.width = width;
    n.step_dim = step_dim;
    n.step_table = sinusoidal_step_embedding(steps, step_dim);
    switch (kind) {
        case ReconKind::Cra:
            for (int i = 0; i < 3; ++i)
                n.blocks.push_back(
                    AeBlock::make(width + step_dim, width, rng, true));
            break;
        case ReconKind::Ae:
            n.blocks.push_back(
                AeBlock::make(width + step_dim, width, rng, false));
            break;
        case ReconKind::Mlp:
            n.mlp_w1 = linear_init(width + step_dim, width, rng, false);
            n.mlp_b1 = Param(Matrix(1, width));
            n.mlp_w2 = linear_init(width, width, rng, false);
            n.mlp_b2 = Param(Matrix(1, width));
            n.mlp_w3 = linear_init(width, width, rng, false);
            n.mlp_b3 = Param(Matrix(1, width));
            break;
        case ReconKind::Mha: {
            if (width % 3 != 0)
                throw ConfigError("mha recon width must be 3 * d_e");
            const std::size_t d = width / 3;
            n.heads = d % 4 == 0 ? 4 : (d % 2 == 0 ? 2 : 1);
            n.att_q = linear_init(d, d, rng, false);
            n.att_k = linear_init(d, d, rng, false);
            n.att_v = linear_init(d, d, rng, false);
            n.att_o = linear_init(d, d, rng, true);  // residual identity at init
            n.att_step = linear_init(step_dim, d, rng, false);
            break;
        }
    }
    return n;
}

Var ReconNet::forward(Tape& t, Var x_t, std::size_t step) {
    if (step < 1 || step > step_table.rows)
        throw IndexError("recon_forward: step out of range");
    const Matrix& xv = t.val(x_t);
    if (xv.cols != width) throw DimensionError("recon_forward: width mismatch");
    Matrix emb(xv.rows, step_dim);
    for (std::size_t i = 0; i < xv.rows; ++i)
        std::copy_n(step_table.row(step - 1), step_dim, emb.row(i));

    switch (kind) {
        case ReconKind::Cra: {
            Var h = x_t;
            Var e = t.leaf(emb);
            for (auto& block : blocks)
                h = t.add(h, block.forward(t, t.concat_cols({h, e})));
            return h;
        }
        case ReconKind::Ae:
            return blocks[0].forward(t, t.concat_cols({x_t, t.leaf(emb)}));
        case ReconKind::Mlp: {
            Var h = t.concat_cols({x_t, t.leaf(emb)});
            h = t.relu(linear(t, h, mlp_w1, mlp_b1));
            h = t.relu(linear(t, h, mlp_w2, mlp_b2));
            return linear(t, h, mlp_w3, mlp_b3);
        }
        case ReconKind::Mha: {
            const std::size_t d = width / 3;
            Var e = t.matmul(t.leaf(emb), t.param(att_step));
            std::vector<Var> tokens;
            for (int m = 0; m < 3; ++m)
                tokens.push_back(
                    t.add(t.slice_cols(x_t, m * d, (m + 1) * d), e));
            std::vector<Var> q, k, v;
            for (int m = 0; m < 3; ++m) {
                q.push_back(t.matmul(tokens[m], t.param(att_q)));
                k.push_back(t.matmul(tokens[m], t.param(att_k)));
                v.push_back(t.matmul(tokens[m], t.param(att_v)));
            }
            const std::size_t hd = d / heads;
            const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
            std::vector<Var> out_tokens;
            for (int i = 0; i < 3; ++i) {
                std::vector<Var> head_outs;
                for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t c0 = h * hd, c1 = (h + 1) * hd;
                    Var qi = t.slice_cols(q[i], c0, c1);
                    std::vector<Var> scores;
                    for (int j = 0; j < 3; ++j) {
                        Var kj = t.slice_cols(k[j], c0, c1);
                        scores.push_back(
                            t.scale(t.row_sum(t.mul(qi, kj)), inv_sqrt));
                    }
                    Var w = t.softmax_rows(t.concat_cols(scores));
                    Var acc = t.mul_colbroadcast(t.slice_cols(v[0], c0, c1),
                                                 t.slice_cols(w, 0, 1));
                    for (int j = 1; j < 3; ++j)
                        acc = t.add(acc,
                                    t.mul_colbroadcast(
                                        t.slice_cols(v[j], c0, c1),
                                        t.slice_cols(w, j, j + 1)));
                    head_outs.push_back(acc);
                }
                Var attn = heads == 1 ? head_outs[0] : t.concat_cols(head_outs);
                out_tokens.push_back(
                    t.add(tokens[i], t.matmul(attn, t.param(att_o))));
            }
            return t.concat_cols(out_tokens);
        }
    }
    throw ConfigError("recon_forward: unhandled kind");
}

std::vector<std::pair<std::string, Param*>> ReconNet::named_params(
    const std::string& prefix) {
    std::vector<std::pair<std::string, Param*>> out;
    for (std::size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect(out, prefix + ".block" + std::to_string(i));
    auto push = [&](const char* name, Param& p) {
        if (p.value.count() > 0) out.emplace_back(prefix + name, &p);
    };
    push(".mlp_w1", mlp_w1);
    push(".mlp_b1", mlp_b1);
    push(".mlp_w2", mlp_w2);
    push(".mlp_b2", mlp_b2);
    push(".mlp_w3", mlp_w3);
    push(".mlp_b3", mlp_b3);
    push(".att_q", att_q);
    push(".att_k", att_k);
    push(".att_v", att_v);
    push(".att_o", att_o);
    push(".att_step", att_step);
    return out;
}

BaselineNet BaselineNet::make(ImputerKind kind, std::size_t width, Rng& rng) {
    BaselineNet n;
    n.kind = kind;
    switch (kind) {
        case ImputerKind::Ae:
            n.enc.push_back(AeBlock::make(width, width, rng, false));
            break;
        case ImputerKind::Cra:
            for (int i = 0; i < 3; ++i)
                n.enc.push_back(AeBlock::make(width, width, rng, false));
            break;
        case ImputerKind::Mmin:
            for (int i = 0; i < 3; ++i) {
                n.enc.push_back(AeBlock::make(width, width, rng, false));
                n.dec.push_back(AeBlock::make(width, width, rng, false));
            }
            break;
        default:
            throw ConfigError("baseline net requires ae, cra, or mmin");
    }
    return n;
}

Var BaselineNet::forward(Tape& t, Var x) {
    switch (kind) {
        case ImputerKind::Ae:
            return enc[0].forward(t, x);
        case ImputerKind::Cra:
        case ImputerKind::Mmin: {
            Var h = x;
            for (auto& block : enc) h = t.add(h, block.forward(t, h));
            return h;
        }
        default:
            throw ConfigError("baseline forward on non-baseline kind");
    }
}

Var BaselineNet::backward_pass(Tape& t, Var x_forward) {
    if (kind != ImputerKind::Mmin)
        throw ConfigError("backward_pass is mmin-only");
    Var h = x_forward;
    for (auto& block : dec) h = t.add(h, block.forward(t, h));
    return h;
}

std::vector<std::pair<std::string, Param*>> BaselineNet::named_params(
    const std::string& prefix) {
    std::vector<std::pair<std::string, Param*>> out;
    for (std::size_t i = 0; i < enc.size(); ++i)
        enc[i].collect(out, prefix + ".enc" + std::to_string(i));
    for (std::size_t i = 0; i < dec.size(); ++i)
        dec[i].collect(out, prefix + ".dec" + std::to_string(i));
    return out;
}

Var build_hypermodal(Tape& t, Var S, Var V, Var D) {
    if (!t.val(S).same_shape(t.val(V)) || !t.val(S).same_shape(t.val(D)))
        throw DimensionError("build_hypermodal: block shapes must match");
    return t.concat_cols({S, V, D});
}

Matrix hypermodal_mask(const std::vector<std::uint8_t>& avail_v,
                       const std::vector<std::uint8_t>& avail_d,
                       std::size_t entity_dim) {
    if (avail_v.size() != avail_d.size())
        throw DimensionError("hypermodal_mask: availability length mismatch");
    const std::size_t n = avail_v.size();
    Matrix m(n, 3 * entity_dim);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = m.row(i);
        for (std::size_t j = 0; j < entity_dim; ++j) row[j] = 1.0;
        if (avail_v[i])
            for (std::size_t j = 0; j < entity_dim; ++j)
                row[entity_dim + j] = 1.0;
        if (avail_d[i])
            for (std::size_t j = 0; j < entity_dim; ++j)
                row[2 * entity_dim + j] = 1.0;
    }
    return m;
}

Var q_sample(Tape& t, Var x0, std::size_t step, const Matrix& noise,
             const DiffusionSchedule& sched) {
    if (step < 1 || step > sched.steps)
        throw IndexError("q_sample: step out of range");
    const double ab = sched.alpha_bar[step - 1];
    Matrix scaled_noise = noise;
    const double nc = std::sqrt(1.0 - ab);
    for (double& v : scaled_noise.data) v *= nc;
    return t.add(t.scale(x0, std::sqrt(ab)), t.leaf(std::move(scaled_noise)));
}

Matrix q_sample_value(const Matrix& x0, std::size_t step, const Matrix& noise,
                      const DiffusionSchedule& sched) {
    if (step < 1 || step > sched.steps)
        throw IndexError("q_sample: step out of range");
    const double ab = sched.alpha_bar[step - 1];
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Matrix out(x0.rows, x0.cols);
    for (std::size_t i = 0; i < out.count(); ++i)
        out.data[i] = a * x0.data[i] + b * noise.data[i];
    return out;
}

Var reverse_generate(Tape& t, Var x0, ReconNet& net,
                     const DiffusionSchedule& sched, const Matrix& noise_top,
                     std::size_t chain_start) {
    const std::size_t top = chain_start == 0 ? sched.steps : chain_start;
    if (top < 1 || top > sched.steps)
        throw IndexError("reverse_generate: bad chain start");
    Var x = q_sample(t, x0, top, noise_top, sched);
    for (std::size_t step = top; step >= 2; --step) {
        const double ab_t = sched.alpha_bar[step - 1];
        const double denom = 1.0 - ab_t;
        if (denom <= 0.0) continue;  // no noise was added at this step
        Var xhat = net.forward(t, x, step);
        const double ab_prev = sched.alpha_bar[step - 2];
        const double a = std::sqrt(sched.alpha[step - 1]) * (1.0 - ab_prev) / denom;
        const double b = std::sqrt(ab_prev) * (1.0 - sched.alpha[step - 1]) / denom;
        x = t.add(t.scale(x, a), t.scale(xhat, b));
    }
    return net.forward(t, x, 1);
}

Var masked_diffusion_loss(Tape& t, Var x0, const Matrix& mask, ReconNet& net,
                          const DiffusionSchedule& sched, Rng& rng) {
    const Matrix& xv = t.val(x0);
    if (!mask.same_shape(xv))
        throw DimensionError("masked_diffusion_loss: mask shape mismatch");
    double observed = 0.0;
    for (double m : mask.data) observed += m;
    const std::size_t step =
        1 + static_cast<std::size_t>(rng.uniform_int(sched.steps));
    Matrix noise(xv.rows, xv.cols);
    rng.fill_normal(noise, 0.0, 1.0);
    if (observed == 0.0) {
        // Still consume the same rng draws so call sequences stay aligned.
        return t.scalar(0.0);
    }
    Var x_t = q_sample(t, x0, step, noise, sched);
    Var xhat = net.forward(t, x_t, step);
    Var diff = t.mul(t.sub(xhat, x0), t.leaf(mask));
    return t.scale(t.sum_all(t.mul(diff, diff)), 1.0 / observed);
}

Var impute_merge(Tape& t, const Matrix& mask, Var x0, Var xhat) {
    return t.select(mask, x0, xhat);
}

Matrix impute_merge_value(const Matrix& mask, const Matrix& x0,
                          const Matrix& xhat) {
    if (!mask.same_shape(x0) || !x0.same_shape(xhat))
        throw DimensionError("impute_merge: shape mismatch");
    Matrix out(x0.rows, x0.cols);
    for (std::size_t i = 0; i < out.count(); ++i)
        out.data[i] = mask.data[i] != 0.0 ? x0.data[i] : xhat.data[i];
    return out;
}

Var baseline_recon_loss(Tape& t, Var x0, const Matrix& mask, BaselineNet& net) {
    double observed = 0.0;
    for (double m : mask.data) observed += m;
    if (observed == 0.0) return t.scalar(0.0);
    Var mask_leaf = t.leaf(mask);
    Var xf = net.forward(t, x0);
    Var diff = t.mul(t.sub(xf, x0), mask_leaf);
    Var loss = t.scale(t.sum_all(t.mul(diff, diff)), 1.0 / observed);
    if (net.kind == ImputerKind::Mmin) {
        Var xb = net.backward_pass(t, xf);
        Var diff_b = t.mul(t.sub(xb, x0), mask_leaf);
        loss = t.add(loss,
                     t.scale(t.sum_all(t.mul(diff_b, diff_b)), 1.0 / observed));
    }
    return loss;
}

Imputer Imputer::make(ImputerKind kind, ReconKind recon_kind,
                      std::size_t width, const DiffusionSchedule& sched,
                      Rng& rng, std::size_t chain_start) {
    Imputer imp;
    imp.kind = kind;
    imp.chain_start = chain_start;
    switch (kind) {
        case ImputerKind::None:
            break;
        case ImputerKind::HidE:
            imp.schedule = sched;
            imp.recon = ReconNet::make(recon_kind, width, sched.steps, rng);
            break;
        case ImputerKind::Ae:
        case ImputerKind::Cra:
        case ImputerKind::Mmin:
            imp.baseline = BaselineNet::make(kind, width, rng);
            break;
    }
    return imp;
}

Var Imputer::impute(Tape& t, Var x0, const Matrix& mask, Rng& rng) {
    switch (kind) {
        case ImputerKind::None:
            return x0;
        case ImputerKind::HidE: {
            const Matrix& xv = t.val(x0);
            Matrix noise(xv.rows, xv.cols);
            rng.fill_normal(noise, 0.0, 1.0);
            Var xhat =
                reverse_generate(t, x0, recon, schedule, noise, chain_start);
            return impute_merge(t, mask, x0, xhat);
        }
        default: {
            Var xhat = baseline.forward(t, x0);
            return impute_merge(t, mask, x0, xhat);
        }
    }
}

Var Imputer::aux_loss(Tape& t, Var x0, const Matrix& mask, Rng& rng) {
    switch (kind) {
        case ImputerKind::None:
            return t.scalar(0.0);
        case ImputerKind::HidE:
            return masked_diffusion_loss(t, x0, mask, recon, schedule, rng);
        default:
            return baseline_recon_loss(t, x0, mask, baseline);
    }
}

std::vector<Param*> Imputer::trainable() {
    std::vector<Param*> out;
    for (auto& [name, p] : named_params()) out.push_back(p);
    return out;
}

std::vector<std::pair<std::string, Param*>> Imputer::named_params() {
    switch (kind) {
        case ImputerKind::None:
            return {};
        case ImputerKind::HidE:
            return recon.named_params("theta");
        default:
            return baseline.named_params("theta");
    }
}

}  // namespace fedmkg

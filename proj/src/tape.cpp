#include "fedmkg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>

#include "fedmkg/errors.hpp"
#include "fedmkg/kernels.hpp"

namespace fedmkg {

namespace {

void softmax_row_stable(const double* logits, std::size_t n, double* out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, logits[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = std::exp(logits[j] - mx);
        z += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= z;
}

}  // namespace

Var Tape::emit(Matrix value, std::function<void(Tape&, int)> back) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(back), nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::gref(int id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty() && n.value.count() > 0)
        n.grad = Matrix(n.value.rows, n.value.cols);
    return n.grad;
}

void Tape::accum(int id, const Matrix& g) {
    Matrix& dst = gref(id);
    kern::axpy(dst.count(), 1.0, g.data.data(), dst.data.data());
}

void Tape::accum_scaled(int id, double c, const Matrix& g) {
    Matrix& dst = gref(id);
    kern::axpy(dst.count(), c, g.data.data(), dst.data.data());
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
    if (!v(a.id).same_shape(v(b.id)))
        throw DimensionError(std::string(op) + ": shape mismatch");
}

const Matrix& Tape::val(Var var) const { return nodes_[var.id].value; }

Matrix Tape::grad_of(Var var) const {
    const Node& n = nodes_[var.id];
    if (n.grad.data.empty()) return Matrix(n.value.rows, n.value.cols);
    return n.grad;
}

Var Tape::leaf(Matrix m) { return emit(std::move(m), nullptr); }

Var Tape::scalar(double x) {
    Matrix m(1, 1);
    m.data[0] = x;
    return emit(std::move(m), nullptr);
}

Var Tape::param(Param& p) {
    Var out = emit(Matrix(p.value), nullptr);
    nodes_[out.id].bound = &p;
    return out;
}

Var Tape::add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Matrix out(v(a.id).rows, v(a.id).cols);
    kern::add(out.count(), v(a.id).data.data(), v(b.id).data.data(),
              out.data.data());
    const int pa = a.id, pb = b.id;
    return emit(std::move(out), [pa, pb](Tape& t, int self) {
        t.accum(pa, t.gref(self));
        t.accum(pb, t.gref(self));
    });
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Matrix out(v(a.id).rows, v(a.id).cols);
    kern::sub(out.count(), v(a.id).data.data(), v(b.id).data.data(),
              out.data.data());
    const int pa = a.id, pb = b.id;
    return emit(std::move(out), [pa, pb](Tape& t, int self) {
        t.accum(pa, t.gref(self));
        t.accum_scaled(pb, -1.0, t.gref(self));
    });
}

Var Tape::mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Matrix out(v(a.id).rows, v(a.id).cols);
    kern::mul(out.count(), v(a.id).data.data(), v(b.id).data.data(),
              out.data.data());
    const int pa = a.id, pb = b.id;
    return emit(std::move(out), [pa, pb](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        Matrix tmp(g.rows, g.cols);
        kern::mul(g.count(), g.data.data(), t.v(pb).data.data(),
                  tmp.data.data());
        t.accum(pa, tmp);
        kern::mul(g.count(), g.data.data(), t.v(pa).data.data(),
                  tmp.data.data());
        t.accum(pb, tmp);
    });
}

Var Tape::div(Var a, Var b) {
    check_same_shape(a, b, "div");
    const Matrix& av = v(a.id);
    const Matrix& bv = v(b.id);
    Matrix out(av.rows, av.cols);
    for (std::size_t i = 0; i < out.count(); ++i)
        out.data[i] = av.data[i] / bv.data[i];
    const int pa = a.id, pb = b.id;
    return emit(std::move(out), [pa, pb](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& av = t.v(pa);
        const Matrix& bv = t.v(pb);
        Matrix tmp(g.rows, g.cols);
        for (std::size_t i = 0; i < g.count(); ++i)
            tmp.data[i] = g.data[i] / bv.data[i];
        t.accum(pa, tmp);
        for (std::size_t i = 0; i < g.count(); ++i)
            tmp.data[i] = -g.data[i] * av.data[i] / (bv.data[i] * bv.data[i]);
        t.accum(pb, tmp);
    });
}

Var Tape::scale(Var a, double c) {
    Matrix out(v(a.id).rows, v(a.id).cols);
    kern::scale(out.count(), c, v(a.id).data.data(), out.data.data());
    const int pa = a.id;
    return emit(std::move(out), [pa, c](Tape& t, int self) {
        t.accum_scaled(pa, c, t.gref(self));
    });
}

Var Tape::add_scalar(Var a, double c) {
    Matrix out = v(a.id);
    for (double& x : out.data) x += c;
    const int pa = a.id;
    return emit(std::move(out),
                [pa](Tape& t, int self) { t.accum(pa, t.gref(self)); });
}

Var Tape::matmul(Var a, Var b) {
    Matrix out = fedmkg::matmul(v(a.id), v(b.id));
    const int pa = a.id, pb = b.id;
    return emit(std::move(out), [pa, pb](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        gemm_nt_acc(g, t.v(pb), t.gref(pa));  // dA += G B^T
        gemm_tn_acc(t.v(pa), g, t.gref(pb));  // dB += A^T G
    });
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> idx) {
    const Matrix& av = v(a.id);
    Matrix out(idx.size(), av.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= av.rows) throw IndexError("gather_rows: index out of range");
        std::copy_n(av.row(idx[i]), av.cols, out.row(i));
    }
    const int pa = a.id;
    auto indices = std::move(idx);
    return emit(std::move(out), [pa, indices](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        Matrix& dst = t.gref(pa);
        for (std::size_t i = 0; i < indices.size(); ++i)
            kern::axpy(g.cols, 1.0, g.row(i), dst.row(indices[i]));
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    const std::size_t rows = v(parts[0].id).rows;
    std::size_t cols = 0;
    for (Var p : parts) {
        if (v(p.id).rows != rows)
            throw DimensionError("concat_cols: row count mismatch");
        cols += v(p.id).cols;
    }
    Matrix out(rows, cols);
    std::size_t off = 0;
    std::vector<int> ids;
    std::vector<std::size_t> offs;
    for (Var p : parts) {
        const Matrix& pv = v(p.id);
        for (std::size_t i = 0; i < rows; ++i)
            std::copy_n(pv.row(i), pv.cols, out.row(i) + off);
        ids.push_back(p.id);
        offs.push_back(off);
        off += pv.cols;
    }
    return emit(std::move(out), [ids, offs](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            Matrix& dst = t.gref(ids[k]);
            for (std::size_t i = 0; i < g.rows; ++i)
                kern::axpy(dst.cols, 1.0, g.row(i) + offs[k], dst.row(i));
        }
    });
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
    const Matrix& av = v(a.id);
    if (c0 > c1 || c1 > av.cols) throw IndexError("slice_cols: bad range");
    Matrix out(av.rows, c1 - c0);
    for (std::size_t i = 0; i < av.rows; ++i)
        std::copy_n(av.row(i) + c0, c1 - c0, out.row(i));
    const int pa = a.id;
    return emit(std::move(out), [pa, c0](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        Matrix& dst = t.gref(pa);
        for (std::size_t i = 0; i < g.rows; ++i)
            kern::axpy(g.cols, 1.0, g.row(i), dst.row(i) + c0);
    });
}

Var Tape::row_sum(Var a) {
    const Matrix& av = v(a.id);
    Matrix out(av.rows, 1);
    for (std::size_t i = 0; i < av.rows; ++i) {
        double s = 0.0;
        const double* r = av.row(i);
        for (std::size_t j = 0; j < av.cols; ++j) s += r[j];
        out.data[i] = s;
    }
    const int pa = a.id;
    return emit(std::move(out), [pa](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        Matrix& dst = t.gref(pa);
        for (std::size_t i = 0; i < dst.rows; ++i) {
            double* r = dst.row(i);
            const double gi = g.data[i];
            for (std::size_t j = 0; j < dst.cols; ++j) r[j] += gi;
        }
    });
}

Var Tape::sum_all(Var a) {
    const Matrix& av = v(a.id);
    double s = 0.0;
    for (double x : av.data) s += x;
    Matrix out(1, 1);
    out.data[0] = s;
    const int pa = a.id;
    return emit(std::move(out), [pa](Tape& t, int self) {
        const double g = t.gref(self).data[0];
        Matrix& dst = t.gref(pa);
        for (double& x : dst.data) x += g;
    });
}

Var Tape::mean_all(Var a) {
    const Matrix& av = v(a.id);
    const double inv = av.count() > 0 ? 1.0 / static_cast<double>(av.count()) : 0.0;
    double s = 0.0;
    for (double x : av.data) s += x;
    Matrix out(1, 1);
    out.data[0] = s * inv;
    const int pa = a.id;
    return emit(std::move(out), [pa, inv](Tape& t, int self) {
        const double g = t.gref(self).data[0] * inv;
        Matrix& dst = t.gref(pa);
        for (double& x : dst.data) x += g;
    });
}

Var Tape::sin_(Var a) {
    Matrix out = v(a.id);
    for (double& x : out.data) x = std::sin(x);
    const int pa = a.id;
    return emit(std::move(out), [pa](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& av = t.v(pa);
        Matrix tmp(g.rows, g.cols);
        for (std::size_t i = 0; i < g.count(); ++i)
            tmp.data[i] = g.data[i] * std::cos(av.data[i]);
        t.accum(pa, tmp);
    });
}

Var Tape::cos_(Var a) {
    Matrix out = v(a.id);
    for (double& x : out.data) x = std::cos(x);
    const int pa = a.id;
    return emit(std::move(out), [pa](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& av = t.v(pa);
        Matrix tmp(g.rows, g.cols);
        for (std::size_t i = 0; i < g.count(); ++i)
            tmp.data[i] = -g.data[i] * std::sin(av.data[i]);
        t.accum(pa, tmp);
    });
}

Var Tape::sigmoid(Var a) {
    Matrix out = v(a.id);
    for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    const int pa = a.id;
    return emit(std::move(out), [pa](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& s = t.v(self);
        Matrix tmp(g.rows, g.cols);
        for (std::size_t i = 0; i < g.count(); ++i)
            tmp.data[i] = g.data[i] * s.data[i] * (1.0 - s.data[i]);
        t.accum(pa, tmp);
    });
}

Var Tape::relu(Var a) {
    Matrix out = v(a.id);
    for (double& x : out.data) x = x > 0.0 ? x : 0.0;
    const int pa = a.id;
    return emit(std::move(out), [pa](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& av = t.v(pa);
        Matrix tmp(g.rows, g.cols);
        for (std::size_t i = 0; i < g.count(); ++i)
            tmp.data[i] = av.data[i] > 0.0 ? g.data[i] : 0.0;
        t.accum(pa, tmp);
    });
}

Var Tape::sqrt_(Var a) {
    Matrix out = v(a.id);
    for (double& x : out.data) x = std::sqrt(x);
    const int pa = a.id;
    return emit(std::move(out), [pa](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& s = t.v(self);
        Matrix tmp(g.rows, g.cols);
        for (std::size_t i = 0; i < g.count(); ++i)
            tmp.data[i] = s.data[i] > 0.0 ? 0.5 * g.data[i] / s.data[i] : 0.0;
        t.accum(pa, tmp);
    });
}

Var Tape::log_(Var a) {
    Matrix out = v(a.id);
    for (double& x : out.data) x = std::log(x);
    const int pa = a.id;
    return emit(std::move(out), [pa](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& av = t.v(pa);
        Matrix tmp(g.rows, g.cols);
        for (std::size_t i = 0; i < g.count(); ++i)
            tmp.data[i] = g.data[i] / av.data[i];
        t.accum(pa, tmp);
    });
}

Var Tape::square(Var a) {
    Matrix out = v(a.id);
    for (double& x : out.data) x = x * x;
    const int pa = a.id;
    return emit(std::move(out), [pa](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& av = t.v(pa);
        Matrix tmp(g.rows, g.cols);
        for (std::size_t i = 0; i < g.count(); ++i)
            tmp.data[i] = 2.0 * g.data[i] * av.data[i];
        t.accum(pa, tmp);
    });
}

Var Tape::mul_colbroadcast(Var a, Var col) {
    const Matrix& av = v(a.id);
    const Matrix& cv = v(col.id);
    if (cv.cols != 1 || cv.rows != av.rows)
        throw DimensionError("mul_colbroadcast: column shape mismatch");
    Matrix out(av.rows, av.cols);
    for (std::size_t i = 0; i < av.rows; ++i)
        kern::scale(av.cols, cv.data[i], av.row(i), out.row(i));
    const int pa = a.id, pc = col.id;
    return emit(std::move(out), [pa, pc](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& av = t.v(pa);
        const Matrix& cv = t.v(pc);
        Matrix& da = t.gref(pa);
        Matrix& dc = t.gref(pc);
        for (std::size_t i = 0; i < g.rows; ++i) {
            kern::axpy(g.cols, cv.data[i], g.row(i), da.row(i));
            dc.data[i] += kern::dot(g.cols, g.row(i), av.row(i));
        }
    });
}

Var Tape::add_rowbroadcast(Var a, Var row) {
    const Matrix& av = v(a.id);
    const Matrix& rv = v(row.id);
    if (rv.rows != 1 || rv.cols != av.cols)
        throw DimensionError("add_rowbroadcast: row shape mismatch");
    Matrix out(av.rows, av.cols);
    for (std::size_t i = 0; i < av.rows; ++i)
        kern::add(av.cols, av.row(i), rv.data.data(), out.row(i));
    const int pa = a.id, pr = row.id;
    return emit(std::move(out), [pa, pr](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        t.accum(pa, g);
        Matrix& dr = t.gref(pr);
        for (std::size_t i = 0; i < g.rows; ++i)
            kern::axpy(g.cols, 1.0, g.row(i), dr.data.data());
    });
}

Var Tape::scale_by_scalar(Var a, Var s) {
    const Matrix& sv = v(s.id);
    if (sv.rows != 1 || sv.cols != 1)
        throw DimensionError("scale_by_scalar: scale must be 1x1");
    Matrix out(v(a.id).rows, v(a.id).cols);
    kern::scale(out.count(), sv.data[0], v(a.id).data.data(), out.data.data());
    const int pa = a.id, ps = s.id;
    return emit(std::move(out), [pa, ps](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const double s = t.v(ps).data[0];
        t.accum_scaled(pa, s, g);
        Matrix ds(1, 1);
        ds.data[0] = kern::dot(g.count(), g.data.data(), t.v(pa).data.data());
        t.accum(ps, ds);
    });
}

Var Tape::softmax_rows(Var logits) {
    const Matrix& lv = v(logits.id);
    Matrix out(lv.rows, lv.cols);
    for (std::size_t i = 0; i < lv.rows; ++i)
        softmax_row_stable(lv.row(i), lv.cols, out.row(i));
    const int pl = logits.id;
    return emit(std::move(out), [pl](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& s = t.v(self);
        Matrix& dst = t.gref(pl);
        for (std::size_t i = 0; i < g.rows; ++i) {
            const double gs = kern::dot(g.cols, g.row(i), s.row(i));
            const double* gr = g.row(i);
            const double* sr = s.row(i);
            double* dr = dst.row(i);
            for (std::size_t j = 0; j < g.cols; ++j)
                dr[j] += sr[j] * (gr[j] - gs);
        }
    });
}

Var Tape::softmax_xent_rows(Var logits, std::vector<std::size_t> targets) {
    const Matrix& lv = v(logits.id);
    if (targets.size() != lv.rows)
        throw DimensionError("softmax_xent_rows: one target per row required");
    Matrix probs(lv.rows, lv.cols);
    Matrix out(lv.rows, 1);
    for (std::size_t i = 0; i < lv.rows; ++i) {
        if (targets[i] >= lv.cols)
            throw IndexError("softmax_xent_rows: target index out of range");
        softmax_row_stable(lv.row(i), lv.cols, probs.row(i));
        out.data[i] = -std::log(probs.at(i, targets[i]));
    }
    const int pl = logits.id;
    auto tg = std::move(targets);
    auto pr = std::make_shared<Matrix>(std::move(probs));
    return emit(std::move(out), [pl, tg, pr](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        Matrix& dst = t.gref(pl);
        for (std::size_t i = 0; i < g.rows; ++i) {
            const double gi = g.data[i];
            const double* p = pr->row(i);
            double* d = dst.row(i);
            for (std::size_t j = 0; j < dst.cols; ++j) d[j] += gi * p[j];
            d[tg[i]] -= gi;
        }
    });
}

Var Tape::kl_logits_rows(Var teacher, Var student) {
    check_same_shape(teacher, student, "kl_logits_rows");
    const Matrix& tv = v(teacher.id);
    const Matrix& sv = v(student.id);
    auto p = std::make_shared<Matrix>(tv.rows, tv.cols);
    auto q = std::make_shared<Matrix>(tv.rows, tv.cols);
    Matrix out(tv.rows, 1);
    for (std::size_t i = 0; i < tv.rows; ++i) {
        softmax_row_stable(tv.row(i), tv.cols, p->row(i));
        softmax_row_stable(sv.row(i), sv.cols, q->row(i));
        double kl = 0.0;
        for (std::size_t j = 0; j < tv.cols; ++j) {
            const double pj = p->at(i, j);
            if (pj > 0.0) kl += pj * (std::log(pj) - std::log(q->at(i, j)));
        }
        out.data[i] = kl;
    }
    const int ps = student.id;
    return emit(std::move(out), [ps, p, q](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        Matrix& dst = t.gref(ps);
        for (std::size_t i = 0; i < g.rows; ++i) {
            const double gi = g.data[i];
            const double* pi = p->row(i);
            const double* qi = q->row(i);
            double* d = dst.row(i);
            for (std::size_t j = 0; j < dst.cols; ++j)
                d[j] += gi * (qi[j] - pi[j]);
        }
    });
}

Var Tape::kl_probs_rows(Var p_teacher, Var q_student) {
    check_same_shape(p_teacher, q_student, "kl_probs_rows");
    const Matrix& pv = v(p_teacher.id);
    const Matrix& qv = v(q_student.id);
    Matrix out(pv.rows, 1);
    for (std::size_t i = 0; i < pv.rows; ++i) {
        double kl = 0.0;
        for (std::size_t j = 0; j < pv.cols; ++j) {
            const double pj = pv.at(i, j);
            if (pj > 0.0) kl += pj * (std::log(pj) - std::log(qv.at(i, j)));
        }
        out.data[i] = kl;
    }
    const int pq = q_student.id, pp = p_teacher.id;
    return emit(std::move(out), [pq, pp](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& pv = t.v(pp);
        const Matrix& qv = t.v(pq);
        Matrix& dst = t.gref(pq);
        for (std::size_t i = 0; i < g.rows; ++i) {
            const double gi = g.data[i];
            double* d = dst.row(i);
            for (std::size_t j = 0; j < dst.cols; ++j) {
                const double pj = pv.at(i, j);
                if (pj > 0.0) d[j] -= gi * pj / qv.at(i, j);
            }
        }
    });
}

Var Tape::nll_rows(Var probs, std::vector<std::size_t> targets) {
    const Matrix& pv = v(probs.id);
    if (targets.size() != pv.rows)
        throw DimensionError("nll_rows: one target per row required");
    Matrix out(pv.rows, 1);
    for (std::size_t i = 0; i < pv.rows; ++i) {
        if (targets[i] >= pv.cols)
            throw IndexError("nll_rows: target index out of range");
        out.data[i] = -std::log(pv.at(i, targets[i]));
    }
    const int pp = probs.id;
    auto tg = std::move(targets);
    return emit(std::move(out), [pp, tg](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& pv = t.v(pp);
        Matrix& dst = t.gref(pp);
        for (std::size_t i = 0; i < g.rows; ++i)
            dst.at(i, tg[i]) -= g.data[i] / pv.at(i, tg[i]);
    });
}

Var Tape::select(const Matrix& mask, Var a, Var b) {
    check_same_shape(a, b, "select");
    const Matrix& av = v(a.id);
    const Matrix& bv = v(b.id);
    if (!mask.same_shape(av)) throw DimensionError("select: mask shape mismatch");
    Matrix out(av.rows, av.cols);
    for (std::size_t i = 0; i < out.count(); ++i)
        out.data[i] = mask.data[i] != 0.0 ? av.data[i] : bv.data[i];
    const int pa = a.id, pb = b.id;
    auto m = std::make_shared<Matrix>(mask);
    return emit(std::move(out), [pa, pb, m](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        Matrix& da = t.gref(pa);
        Matrix& db = t.gref(pb);
        for (std::size_t i = 0; i < g.count(); ++i) {
            if (m->data[i] != 0.0)
                da.data[i] += g.data[i];
            else
                db.data[i] += g.data[i];
        }
    });
}

Var Tape::detach(Var a) { return emit(Matrix(v(a.id)), nullptr); }

Var Tape::rotate_logits(Var entities, Var relations,
                        std::vector<std::size_t> heads,
                        std::vector<std::size_t> rels,
                        std::vector<std::size_t> cands, std::size_t width,
                        double gamma) {
    const Matrix& ev = v(entities.id);
    const Matrix& rv = v(relations.id);
    const std::size_t de = ev.cols;
    if (de % 2 != 0) throw DimensionError("rotate_logits: entity dim must be even");
    const std::size_t half = de / 2;
    if (rv.cols != half)
        throw DimensionError("rotate_logits: relation dim must be entity dim / 2");
    const std::size_t batch = heads.size();
    if (rels.size() != batch || cands.size() != batch * width)
        throw DimensionError("rotate_logits: batch index arrays inconsistent");

    Matrix out(batch, width);
    for (std::size_t i = 0; i < batch; ++i) {
        if (heads[i] >= ev.rows) throw IndexError("rotate_logits: head out of range");
        if (rels[i] >= rv.rows) throw IndexError("rotate_logits: relation out of range");
        const double* h = ev.row(heads[i]);
        const double* th = rv.row(rels[i]);
        double* orow = out.row(i);
        for (std::size_t c = 0; c < width; ++c) {
            const std::size_t ti = cands[i * width + c];
            if (ti >= ev.rows) throw IndexError("rotate_logits: candidate out of range");
            const double* tr = ev.row(ti);
            double sq = 0.0;
            for (std::size_t j = 0; j < half; ++j) {
                const double ct = std::cos(th[j]);
                const double st = std::sin(th[j]);
                const double rre = h[j] * ct - h[half + j] * st;
                const double rim = h[j] * st + h[half + j] * ct;
                const double dre = rre - tr[j];
                const double dim = rim - tr[half + j];
                sq += dre * dre + dim * dim;
            }
            orow[c] = gamma - std::sqrt(sq);
        }
    }

    const int pe = entities.id, pr = relations.id;
    auto hs = std::make_shared<std::vector<std::size_t>>(std::move(heads));
    auto rs = std::make_shared<std::vector<std::size_t>>(std::move(rels));
    auto cs = std::make_shared<std::vector<std::size_t>>(std::move(cands));
    return emit(std::move(out), [pe, pr, hs, rs, cs, width, half,
                                 gamma](Tape& t, int self) {
        const Matrix& g = t.gref(self);
        const Matrix& ev = t.v(pe);
        const Matrix& rv = t.v(pr);
        const Matrix& logits = t.v(self);
        Matrix& de_ = t.gref(pe);
        Matrix& dr_ = t.gref(pr);
        const std::size_t batch = hs->size();
        for (std::size_t i = 0; i < batch; ++i) {
            const double* h = ev.row((*hs)[i]);
            const double* th = rv.row((*rs)[i]);
            double* dh = de_.row((*hs)[i]);
            double* dth = dr_.row((*rs)[i]);
            for (std::size_t c = 0; c < width; ++c) {
                const double gu = g.at(i, c);
                if (gu == 0.0) continue;
                const double dist = gamma - logits.at(i, c);
                if (dist < 1e-12) continue;  // gradient vanishes at zero distance
                const std::size_t ti = (*cs)[i * width + c];
                const double* tr = ev.row(ti);
                double* dt = de_.row(ti);
                // d logit = -d dist; d dist/d diff = diff / dist
                const double s = -gu / dist;
                for (std::size_t j = 0; j < half; ++j) {
                    const double ct = std::cos(th[j]);
                    const double st = std::sin(th[j]);
                    const double rre = h[j] * ct - h[half + j] * st;
                    const double rim = h[j] * st + h[half + j] * ct;
                    const double dre = (rre - tr[j]) * s;
                    const double dim = (rim - tr[half + j]) * s;
                    // into rotated head, then through the rotation
                    dh[j] += dre * ct + dim * st;
                    dh[half + j] += -dre * st + dim * ct;
                    dth[j] += dre * (-rim) + dim * rre;
                    dt[j] -= dre;
                    dt[half + j] -= dim;
                }
            }
        }
    });
}

void Tape::backward(Var loss) {
    if (backward_done_) throw ContractError("Tape::backward: tape already used");
    backward_done_ = true;
    const Matrix& lv = v(loss.id);
    if (lv.rows != 1 || lv.cols != 1)
        throw DimensionError("Tape::backward: loss must be 1x1");
    gref(loss.id).data[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.grad.data.empty()) continue;  // node did not contribute
        if (n.back) n.back(*this, i);
        if (n.bound) {
            kern::axpy(n.grad.count(), 1.0, n.grad.data.data(),
                       n.bound->grad.data.data());
        }
    }
}

}  // namespace fedmkg

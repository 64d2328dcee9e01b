#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "fedmkg/matrix.hpp"
#include "fedmkg/optim.hpp"

namespace fedmkg {

// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over Matrix values. A Tape is built once per loss
// evaluation: leaves are constants or Params, interior nodes record a
// backward closure, and backward() walks the nodes in reverse creation
// order, accumulating into Param::grad at bound leaves. Tapes are single
// use and owned by one thread.
//
// Gradients of every exposed loss composition are pinned against central
// finite differences by the gradient test suite, which is the engine's
// correctness contract.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves.
    Var leaf(Matrix m);
    Var scalar(double v);
    Var param(Param& p);  // gradient accumulates into p.grad on backward()

    const Matrix& val(Var v) const;
    // Gradient of the last backward() target w.r.t. v (zeros if unreached).
    Matrix grad_of(Var v) const;

    // Elementwise; shapes must match.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);

    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);

    Var matmul(Var a, Var b);

    // out row i = a row idx[i]; backward scatter-adds.
    Var gather_rows(Var a, std::vector<std::size_t> idx);

    Var concat_cols(const std::vector<Var>& parts);
    Var slice_cols(Var a, std::size_t c0, std::size_t c1);  // [c0, c1)

    Var row_sum(Var a);   // n x m -> n x 1
    Var sum_all(Var a);   // -> 1 x 1
    Var mean_all(Var a);  // -> 1 x 1

    Var sin_(Var a);
    Var cos_(Var a);
    Var sigmoid(Var a);
    Var relu(Var a);
    Var sqrt_(Var a);  // derivative treated as 0 where the output is 0
    Var log_(Var a);
    Var square(Var a);

    // out[i,j] = a[i,j] * col[i,0]
    Var mul_colbroadcast(Var a, Var col);
    // out[i,j] = a[i,j] + row[0,j]
    Var add_rowbroadcast(Var a, Var row);
    // out = s * a with s a 1x1 node
    Var scale_by_scalar(Var a, Var s);

    // Row-wise stable softmax with full Jacobian backward.
    Var softmax_rows(Var logits);
    // Per-row -log softmax(logits)[target]; returns n x 1.
    Var softmax_xent_rows(Var logits, std::vector<std::size_t> targets);
    // Per-row KL(softmax(teacher) || softmax(student)); the teacher is taken
    // by value (no gradient), the student gets softmax(student) - softmax(teacher).
    Var kl_logits_rows(Var teacher, Var student);
    // Per-row KL(p || q) on probability rows; p detached, gradient to q only.
    Var kl_probs_rows(Var p_teacher, Var q_student);
    // Per-row -log(probs[i, target_i]).
    Var nll_rows(Var probs, std::vector<std::size_t> targets);

    // out = mask ? a : b, coordinatewise; kept coordinates are bit-identical
    // to their source. mask entries must be 0 or 1.
    Var select(const Matrix& mask, Var a, Var b);

    Var detach(Var a);

    // Fused RotatE scoring over candidate sets. entities: n x d_e with the
    // first d_e/2 columns the real parts and the rest imaginary parts;
    // relations: rows of d_e/2 phase angles. For batch row i with head
    // heads[i], relation row rels[i], candidates cand[i*width .. +width):
    //   logit = gamma - || h * e^{i theta} - t ||_2.
    Var rotate_logits(Var entities, Var relations,
                      std::vector<std::size_t> heads,
                      std::vector<std::size_t> rels,
                      std::vector<std::size_t> cands, std::size_t width,
                      double gamma);

    void backward(Var loss);  // loss must be 1x1; one shot per tape

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;  // allocated lazily during backward
        std::function<void(Tape&, int)> back;
        Param* bound = nullptr;
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;

    Var emit(Matrix value, std::function<void(Tape&, int)> back);
    Matrix& gref(int id);
    void accum(int id, const Matrix& g);
    void accum_scaled(int id, double c, const Matrix& g);
    const Matrix& v(int id) const { return nodes_[id].value; }
    void check_same_shape(Var a, Var b, const char* op) const;
};

}  // namespace fedmkg

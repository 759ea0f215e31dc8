#pragma once

#include <functional>
#include <vector>

#include "cmfuse/tensor.hpp"

namespace cmfuse {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    int rows() const { return value().rows(); }
    int cols() const { return value().cols(); }
};

enum class ConvMode { Valid, Same };

// Reverse-mode computation graph. Nodes are appended in evaluation order, so
// walking ids backwards from the loss is a topological sweep. One tape
// evaluates one forward/backward pass; tapes are never shared across threads.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor v);
    // External leaf; the pointee must outlive the tape. No copy is made.
    Var constant_ref(const Tensor* v);
    Var variable(Tensor v);
    Var variable_ref(const Tensor* v);

    const Tensor& value(Var v) const;
    // Gradient of the last backward() root w.r.t. node v. Zero tensor if the
    // node did not participate.
    const Tensor& grad(Var v);

    // Seeds d(root)=1 and sweeps the graph in reverse order. root must be 1x1.
    void backward(Var root);

    std::size_t node_count() const { return nodes_.size(); }

    // Gradient accumulator for a node; used by op backprop closures.
    Tensor& grad_buf(int id);

private:
    friend struct TapeAccess;

    struct Node {
        Tensor own;
        const Tensor* ext = nullptr;
        Tensor grad;
        bool needs_grad = false;
        std::function<void(Tape&, int)> backprop;
        const Tensor& val() const { return ext ? *ext : own; }
    };

    std::vector<Node> nodes_;
};

// Graph ops. All propagate gradients to every participating parent.
Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double c);
Var add_scaled(Var a, Var b, double c);  // a + c*b
Var relu(Var x);
Var softplus(Var x);
Var tanh_op(Var x);
Var sigmoid_op(Var x);
Var softmax_rows(Var x);
Var conv1d_rows(Var x, Var kernel, ConvMode mode);
Var affine_rows(Var x, Var w, Var bias);  // x*w + row-broadcast bias
Var tri_upper(Var m, bool include_diag);  // row-major upper triangle as a 1xL row
Var symmetrize(Var m);                    // (m + m^T)/2
Var mean_abs_diff(Var a, Var b);          // scalar mean |a-b|
Var weighted_sum(Var x, Tensor coeffs);   // scalar sum(coeffs .* x)
Var softmax_xent(Var logits_row, int target);

// Eager convenience forms of the plain kernels.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& m);

}  // namespace cmfuse

#ifndef TRAJREP_AUTODIFF_HPP
#define TRAJREP_AUTODIFF_HPP

#include <functional>
#include <vector>

#include "trajrep/common.hpp"

namespace trajrep::ad {

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense Eigen matrices. Values are recorded during
/// the forward pass; backward() propagates gradients in reverse recording
/// order. Leaves wrap externally owned parameter matrices and are never
/// copied. With gradients disabled the tape stores values only.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Parameter leaf; `value` must outlive the tape.
    Var leaf(const Mat* value);
    /// Constant; never receives gradient.
    Var constant(Mat value);

    const Mat& val(Var v) const;
    /// Gradient of `v` after backward(); empty matrix when no gradient flowed.
    const Mat& grad_view(Var v) const;
    /// Accumulation target for custom backward passes (zero-initialized).
    Mat& grad_accum(Var v);
    bool requires_grad(Var v) const;

    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);          // A * B^T
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var add_const(Var a, const Mat& c);
    Var add_rowvec(Var a, Var row);       // broadcast a 1 x C row
    Var scale(Var a, double s);
    Var mul_mask(Var a, Mat mask);        // elementwise by a constant mask
    Var leaky_relu(Var a, double slope);
    Var relu(Var a);
    Var elu(Var a);
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5);
    Var gather_rows(Var table, std::vector<int> idx);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_cols(Var a, Index start, Index n);
    Var rows_l2_normalize(Var a);

    /// Mean over rows of (logsumexp(row) - row[target]); 1x1 output.
    Var cross_entropy_rows(Var logits, std::vector<int> targets);
    /// Mean squared error against a constant target column; 1x1 output.
    Var mse(Var pred, Mat targets);
    Var mean_of(const std::vector<Var>& scalars);
    Var sum_squares(Var a);               // 1x1

    /// Custom fused node. `back` runs during backward() with the output's
    /// gradient already accumulated; it must add into grad_accum of inputs.
    Var custom(const std::vector<Var>& inputs, Mat value, std::function<void(Tape&, Var)> back);

    void backward(Var scalar_loss);

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat owned;
        const Mat* external = nullptr;   // set for leaves only
        Mat grad;
        std::function<void(Tape&, Var)> back;
        bool needs_grad = false;

        const Mat& value() const { return external ? *external : owned; }
    };

    Var push(Mat value, bool needs_grad, std::function<void(Tape&, Var)> back);
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

    std::vector<Node> nodes_;
    bool grad_enabled_;
};

} // namespace trajrep::ad

#endif // TRAJREP_AUTODIFF_HPP

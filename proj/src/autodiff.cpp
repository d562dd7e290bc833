#include "trajrep/autodiff.hpp"

#include <cmath>
#include <memory>
#include <utility>

#include "trajrep/mathx.hpp"

namespace trajrep::ad {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ValidationError(std::string(op) + ": shape mismatch (" +
                              std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                              std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
    }
}

} // namespace

Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, Var)> back) {
    Node n;
    n.owned = std::move(value);
    n.needs_grad = grad_enabled_ && needs_grad;
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Mat* value) {
    Node n;
    n.external = value;
    n.needs_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat value) {
    return push(std::move(value), false, nullptr);
}

const Mat& Tape::val(Var v) const { return node(v).value(); }

const Mat& Tape::grad_view(Var v) const {
    static const Mat empty;
    const Node& n = node(v);
    return n.grad.size() ? n.grad : empty;
}

Mat& Tape::grad_accum(Var v) {
    Node& n = node(v);
    if (!n.grad.size()) n.grad = Mat::Zero(n.value().rows(), n.value().cols());
    return n.grad;
}

bool Tape::requires_grad(Var v) const { return node(v).needs_grad; }

void Tape::backward(Var scalar_loss) {
    const Mat& lv = val(scalar_loss);
    if (lv.rows() != 1 || lv.cols() != 1) throw ValidationError("backward: loss must be 1x1");
    grad_accum(scalar_loss)(0, 0) = 1.0;
    for (int id = scalar_loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || !n.grad.size() || !n.back) continue;
        n.back(*this, Var{id});
    }
}

Var Tape::matmul(Var a, Var b) {
    Mat v = val(a) * val(b);
    return push(std::move(v), requires_grad(a) || requires_grad(b), [a, b](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        if (t.requires_grad(a)) t.grad_accum(a).noalias() += g * t.val(b).transpose();
        if (t.requires_grad(b)) t.grad_accum(b).noalias() += t.val(a).transpose() * g;
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    Mat v = val(a) * val(b).transpose();
    return push(std::move(v), requires_grad(a) || requires_grad(b), [a, b](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        if (t.requires_grad(a)) t.grad_accum(a).noalias() += g * t.val(b);
        if (t.requires_grad(b)) t.grad_accum(b).noalias() += g.transpose() * t.val(a);
    });
}

Var Tape::add(Var a, Var b) {
    check_same_shape(val(a), val(b), "add");
    Mat v = val(a) + val(b);
    return push(std::move(v), requires_grad(a) || requires_grad(b), [a, b](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        if (t.requires_grad(a)) t.grad_accum(a) += g;
        if (t.requires_grad(b)) t.grad_accum(b) += g;
    });
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(val(a), val(b), "sub");
    Mat v = val(a) - val(b);
    return push(std::move(v), requires_grad(a) || requires_grad(b), [a, b](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        if (t.requires_grad(a)) t.grad_accum(a) += g;
        if (t.requires_grad(b)) t.grad_accum(b) -= g;
    });
}

Var Tape::add_const(Var a, const Mat& c) {
    check_same_shape(val(a), c, "add_const");
    Mat v = val(a) + c;
    return push(std::move(v), requires_grad(a), [a](Tape& t, Var out) {
        t.grad_accum(a) += t.grad_view(out);
    });
}

Var Tape::add_rowvec(Var a, Var row) {
    if (val(row).rows() != 1 || val(row).cols() != val(a).cols()) {
        throw ValidationError("add_rowvec: row must be 1 x cols(a)");
    }
    Mat v = val(a).rowwise() + val(row).row(0);
    return push(std::move(v), requires_grad(a) || requires_grad(row), [a, row](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        if (t.requires_grad(a)) t.grad_accum(a) += g;
        if (t.requires_grad(row)) t.grad_accum(row) += g.colwise().sum();
    });
}

Var Tape::scale(Var a, double s) {
    Mat v = val(a) * s;
    return push(std::move(v), requires_grad(a), [a, s](Tape& t, Var out) {
        t.grad_accum(a) += s * t.grad_view(out);
    });
}

Var Tape::mul_mask(Var a, Mat mask) {
    check_same_shape(val(a), mask, "mul_mask");
    Mat v = val(a).cwiseProduct(mask);
    auto m = std::make_shared<Mat>(std::move(mask));
    return push(std::move(v), requires_grad(a), [a, m](Tape& t, Var out) {
        t.grad_accum(a) += t.grad_view(out).cwiseProduct(*m);
    });
}

Var Tape::leaky_relu(Var a, double slope) {
    Mat v = trajrep::leaky_relu(val(a), slope);
    return push(std::move(v), requires_grad(a), [a, slope](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        const Mat& x = t.val(a);
        t.grad_accum(a) += g.binaryExpr(x, [slope](double gv, double xv) {
            return gv * leaky_relu_grad(xv, slope);
        });
    });
}

Var Tape::relu(Var a) {
    Mat v = trajrep::relu(val(a));
    return push(std::move(v), requires_grad(a), [a](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        const Mat& x = t.val(a);
        t.grad_accum(a) += g.binaryExpr(x, [](double gv, double xv) {
            return xv > 0.0 ? gv : 0.0;
        });
    });
}

Var Tape::elu(Var a) {
    Mat v = trajrep::elu(val(a));
    return push(std::move(v), requires_grad(a), [a](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        const Mat& y = t.val(out);
        t.grad_accum(a) += g.binaryExpr(y, [](double gv, double yv) {
            return gv * elu_grad_from_output(yv);
        });
    });
}

Var Tape::softmax_rows(Var a) {
    Mat p = val(a);
    softmax_rows_inplace(p);
    return push(std::move(p), requires_grad(a), [a](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        const Mat& p = t.val(out);
        Mat& ga = t.grad_accum(a);
        for (Index i = 0; i < p.rows(); ++i) {
            const double dot = g.row(i).dot(p.row(i));
            ga.row(i) += p.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
        }
    });
}

Var Tape::layer_norm_rows(Var a, Var gain, Var bias, double eps) {
    const Mat& x = val(a);
    auto xhat = std::make_shared<Mat>(x.rows(), x.cols());
    auto inv_std = std::make_shared<Vec>(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
        const double mean = x.row(i).mean();
        const double var = (x.row(i).array() - mean).square().mean();
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)(i) = is;
        xhat->row(i) = (x.row(i).array() - mean) * is;
    }
    Mat v = (*xhat) * val(gain).row(0).asDiagonal();
    v.rowwise() += val(bias).row(0);
    bool ng = requires_grad(a) || requires_grad(gain) || requires_grad(bias);
    return push(std::move(v), ng, [a, gain, bias, xhat, inv_std](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        if (t.requires_grad(bias)) t.grad_accum(bias) += g.colwise().sum();
        if (t.requires_grad(gain)) {
            t.grad_accum(gain) += g.cwiseProduct(*xhat).colwise().sum();
        }
        if (t.requires_grad(a)) {
            Mat& ga = t.grad_accum(a);
            const auto& gamma = t.val(gain).row(0);
            for (Index i = 0; i < g.rows(); ++i) {
                Eigen::RowVectorXd dxhat = g.row(i).cwiseProduct(gamma);
                const double m1 = dxhat.mean();
                const double m2 = dxhat.cwiseProduct(xhat->row(i)).mean();
                ga.row(i) += (*inv_std)(i) *
                    (dxhat.array() - m1 - xhat->row(i).array() * m2).matrix();
            }
        }
    });
}

Var Tape::gather_rows(Var table, std::vector<int> idx) {
    const Mat& tb = val(table);
    Mat v(static_cast<Index>(idx.size()), tb.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= tb.rows()) {
            throw ValidationError("gather_rows: index " + std::to_string(idx[k]) +
                                  " out of range [0, " + std::to_string(tb.rows()) + ")");
        }
        v.row(static_cast<Index>(k)) = tb.row(idx[k]);
    }
    auto ids = std::make_shared<std::vector<int>>(std::move(idx));
    return push(std::move(v), requires_grad(table), [table, ids](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        Mat& gt = t.grad_accum(table);
        for (std::size_t k = 0; k < ids->size(); ++k) {
            gt.row((*ids)[k]) += g.row(static_cast<Index>(k));
        }
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    Index rows = 0;
    const Index cols = val(parts.front()).cols();
    bool ng = false;
    for (Var p : parts) {
        rows += val(p).rows();
        ng = ng || requires_grad(p);
    }
    Mat v(rows, cols);
    Index at = 0;
    for (Var p : parts) {
        v.middleRows(at, val(p).rows()) = val(p);
        at += val(p).rows();
    }
    auto ps = std::make_shared<std::vector<Var>>(parts);
    return push(std::move(v), ng, [ps](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        Index at = 0;
        for (Var p : *ps) {
            const Index n = t.val(p).rows();
            if (t.requires_grad(p)) t.grad_accum(p) += g.middleRows(at, n);
            at += n;
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    Index cols = 0;
    const Index rows = val(parts.front()).rows();
    bool ng = false;
    for (Var p : parts) {
        cols += val(p).cols();
        ng = ng || requires_grad(p);
    }
    Mat v(rows, cols);
    Index at = 0;
    for (Var p : parts) {
        v.middleCols(at, val(p).cols()) = val(p);
        at += val(p).cols();
    }
    auto ps = std::make_shared<std::vector<Var>>(parts);
    return push(std::move(v), ng, [ps](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        Index at = 0;
        for (Var p : *ps) {
            const Index n = t.val(p).cols();
            if (t.requires_grad(p)) t.grad_accum(p) += g.middleCols(at, n);
            at += n;
        }
    });
}

Var Tape::slice_cols(Var a, Index start, Index n) {
    Mat v = val(a).middleCols(start, n);
    return push(std::move(v), requires_grad(a), [a, start, n](Tape& t, Var out) {
        t.grad_accum(a).middleCols(start, n) += t.grad_view(out);
    });
}

Var Tape::rows_l2_normalize(Var a) {
    const Mat& x = val(a);
    auto norms = std::make_shared<Vec>(x.rows());
    Mat v(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        const double nrm = x.row(i).norm();
        if (nrm <= 0.0) throw ValidationError("rows_l2_normalize: zero row " + std::to_string(i));
        (*norms)(i) = nrm;
        v.row(i) = x.row(i) / nrm;
    }
    return push(std::move(v), requires_grad(a), [a, norms](Tape& t, Var out) {
        const Mat& g = t.grad_view(out);
        const Mat& y = t.val(out);
        Mat& ga = t.grad_accum(a);
        for (Index i = 0; i < g.rows(); ++i) {
            const double dot = g.row(i).dot(y.row(i));
            ga.row(i) += (g.row(i) - dot * y.row(i)) / (*norms)(i);
        }
    });
}

Var Tape::cross_entropy_rows(Var logits, std::vector<int> targets) {
    const Mat& z = val(logits);
    if (static_cast<Index>(targets.size()) != z.rows()) {
        throw ValidationError("cross_entropy_rows: one target per row required");
    }
    auto probs = std::make_shared<Mat>(z);
    softmax_rows_inplace(*probs);
    double total = 0.0;
    for (Index i = 0; i < z.rows(); ++i) {
        const int tc = targets[static_cast<std::size_t>(i)];
        if (tc < 0 || tc >= z.cols()) throw ValidationError("cross_entropy_rows: target out of range");
        const double mx = z.row(i).maxCoeff();
        const double lse = mx + std::log((z.row(i).array() - mx).exp().sum());
        total += lse - z(i, tc);
    }
    Mat v(1, 1);
    v(0, 0) = total / static_cast<double>(z.rows());
    auto tg = std::make_shared<std::vector<int>>(std::move(targets));
    return push(std::move(v), requires_grad(logits), [logits, probs, tg](Tape& t, Var out) {
        const double g = t.grad_view(out)(0, 0) / static_cast<double>(probs->rows());
        Mat& gl = t.grad_accum(logits);
        gl += g * (*probs);
        for (Index i = 0; i < probs->rows(); ++i) {
            gl(i, (*tg)[static_cast<std::size_t>(i)]) -= g;
        }
    });
}

Var Tape::mse(Var pred, Mat targets) {
    check_same_shape(val(pred), targets, "mse");
    auto diff = std::make_shared<Mat>(val(pred) - targets);
    Mat v(1, 1);
    v(0, 0) = diff->array().square().mean();
    return push(std::move(v), requires_grad(pred), [pred, diff](Tape& t, Var out) {
        const double g = t.grad_view(out)(0, 0);
        t.grad_accum(pred) += (2.0 * g / static_cast<double>(diff->size())) * (*diff);
    });
}

Var Tape::mean_of(const std::vector<Var>& scalars) {
    double total = 0.0;
    bool ng = false;
    for (Var s : scalars) {
        total += val(s)(0, 0);
        ng = ng || requires_grad(s);
    }
    Mat v(1, 1);
    v(0, 0) = total / static_cast<double>(scalars.size());
    auto ss = std::make_shared<std::vector<Var>>(scalars);
    return push(std::move(v), ng, [ss](Tape& t, Var out) {
        const double g = t.grad_view(out)(0, 0) / static_cast<double>(ss->size());
        for (Var s : *ss) {
            if (t.requires_grad(s)) t.grad_accum(s)(0, 0) += g;
        }
    });
}

Var Tape::sum_squares(Var a) {
    Mat v(1, 1);
    v(0, 0) = val(a).array().square().sum();
    return push(std::move(v), requires_grad(a), [a](Tape& t, Var out) {
        t.grad_accum(a) += (2.0 * t.grad_view(out)(0, 0)) * t.val(a);
    });
}

Var Tape::custom(const std::vector<Var>& inputs, Mat value, std::function<void(Tape&, Var)> back) {
    bool ng = false;
    for (Var in : inputs) ng = ng || requires_grad(in);
    return push(std::move(value), ng, std::move(back));
}

} // namespace trajrep::ad
